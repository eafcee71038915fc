//! Certified inner approximations of finite-time regions of attraction of
//! polynomial systems.
//!
//! Given `x' = f(t, x)` on a semialgebraic set `X = {g_X >= 0}` with target
//! `X_T = {g_T >= 0}` and horizon `T`, [`relax`] assembles the order-`k`
//! moment relaxation and its dual sum-of-squares program, [`solver`] solves
//! them with a primal-dual interior-point method, and the certificate
//! `w(x)` gives the inner approximation `{x in X : w(x) < 1}`. [`sim`] labels
//! initial states by simulation to measure and check those sets; [`cli`]
//! drives everything from problem files.
//!
//! Supporting modules: [`poly`] (sparse polynomials and parsing),
//! [`moments`] (Lebesgue moments, moment and localizing matrices), [`sos`]
//! (Gram parametrizations and coefficient matching), [`conic`] (the program
//! format handed to the solver).

pub mod cli;
pub mod conic;
pub mod error;
pub mod moments;
pub mod poly;
pub mod relax;
pub mod sim;
pub mod solver;
pub mod sos;

pub use error::{Result, RoaError};
