//! Solving [`ConicProgram`]s.
//!
//! The built-in backend is a dense primal-dual interior-point method
//! ([`InteriorPoint`]); other conic solvers can be plugged in through
//! [`ConicBackend`]. Programs can be dumped in the Conic Benchmark Format
//! (see [`cbf`]) for cross-checking with external tools.

pub mod cbf;
mod ipm;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::conic::ConicProgram;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    /// Whether the returned point can be used as a solution.
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative duality gap target.
    pub gap_tol: f64,
    /// Relative primal/dual infeasibility target.
    pub feas_tol: f64,
    /// Looser gap accepted when progress stalls.
    pub near_gap_tol: f64,
    pub near_feas_tol: f64,
    pub max_iter: usize,
    /// Record a per-iteration trace in the solution.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            near_gap_tol: 1e-6,
            near_feas_tol: 1e-6,
            max_iter: 200,
            trace: false,
        }
    }
}

/// Relative residuals of the returned point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub residuals: Residuals,
    pub mu: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub x_free: Vec<f64>,
    pub x_nonneg: Vec<f64>,
    pub x_psd: Vec<Mat<f64>>,
    /// Multipliers of the equality rows, signed so that `dual_objective = b . y`.
    pub y: Vec<f64>,
    pub z_nonneg: Vec<f64>,
    pub z_psd: Vec<Mat<f64>>,
    /// Objective of the program as posed (in its own sense).
    pub primal_objective: f64,
    /// Objective of the conic dual; equals `primal_objective` at optimality.
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub trace: Vec<IterationLog>,
}

impl Solution {
    /// Smallest eigenvalue over all primal PSD blocks (`+inf` if there are none).
    pub fn min_psd_eigenvalue(&self) -> f64 {
        self.x_psd
            .iter()
            .filter_map(|x| x.self_adjoint_eigenvalues(faer::Side::Lower).ok())
            .filter_map(|ev| ev.first().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Anything that can solve a conic program.
pub trait ConicBackend: Send + Sync {
    fn solve(&self, program: &ConicProgram, opts: &SolverOptions) -> Result<Solution>;
}

/// The built-in dense primal-dual interior-point solver (NT direction,
/// Mehrotra predictor-corrector, infeasible start).
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl ConicBackend for InteriorPoint {
    fn solve(&self, program: &ConicProgram, opts: &SolverOptions) -> Result<Solution> {
        program.validate()?;
        Ok(ipm::solve(program, opts))
    }
}

/// Solves `program` with the built-in interior-point backend.
pub fn solve(program: &ConicProgram, opts: &SolverOptions) -> Result<Solution> {
    InteriorPoint.solve(program, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{Sense, Var};

    #[test]
    fn scalar_psd_block() {
        // min x s.t. x >= 0 with a redundant row x - x = 0 keeping m > 0
        let mut p = ConicProgram::new(Sense::Minimize);
        let b = p.add_psd(1);
        p.add_free(1);
        p.add_row(vec![(Var::psd(b, 0, 0), 1.0), (Var::Free(0), -1.0)], 0.0);
        p.objective = vec![(Var::psd(b, 0, 0), 1.0)];
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.primal_objective.abs() < 1e-7);
    }

    #[test]
    fn two_by_two_corner() {
        // min X12 s.t. X11 = 1, X22 = 1, X psd  ->  -1
        let mut p = ConicProgram::new(Sense::Minimize);
        let b = p.add_psd(2);
        p.add_row(vec![(Var::psd(b, 0, 0), 1.0)], 1.0);
        p.add_row(vec![(Var::psd(b, 1, 1), 1.0)], 1.0);
        p.objective = vec![(Var::psd(b, 1, 0), 1.0)];
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective + 1.0).abs() < 1e-7, "{}", s.primal_objective);
        assert!((s.dual_objective + 1.0).abs() < 1e-7);
    }

    #[test]
    fn sos_lower_bound_of_quartic() {
        // max g s.t. x^4 - 3x^2 + 2 - g = m' Q m, m = [1, x, x^2]
        // calculus: minimum at x^2 = 3/2 gives 9/4 - 9/2 + 2 = -1/4
        let mut p = ConicProgram::new(Sense::Maximize);
        let g = p.add_free(1);
        let q = p.add_psd(3);
        let coeffs = [2.0, 0.0, -3.0, 0.0, 1.0];
        for (deg, &c) in coeffs.iter().enumerate() {
            let mut terms = Vec::new();
            for i in 0..3 {
                for j in 0..=i {
                    if i + j == deg {
                        terms.push((Var::psd(q, i, j), if i == j { 1.0 } else { 2.0 }));
                    }
                }
            }
            if deg == 0 {
                terms.push((Var::Free(g), 1.0));
            }
            p.add_row(terms, c);
        }
        p.objective = vec![(Var::Free(g), 1.0)];
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective + 0.25).abs() < 1e-7, "{}", s.primal_objective);
        assert!(s.min_psd_eigenvalue() >= -1e-8);
        // weak duality within tolerance
        assert!((s.primal_objective - s.dual_objective).abs() < 1e-7);
    }

    #[test]
    fn lp_with_nonnegatives() {
        // min x0 + 2 x1 s.t. x0 + x1 = 1, x >= 0  ->  1
        let mut p = ConicProgram::new(Sense::Minimize);
        p.add_nonneg(2);
        p.add_row(vec![(Var::Nonneg(0), 1.0), (Var::Nonneg(1), 1.0)], 1.0);
        p.objective = vec![(Var::Nonneg(0), 1.0), (Var::Nonneg(1), 2.0)];
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 1.0).abs() < 1e-7);
        assert!((s.x_nonneg[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 0 and x = -1
        let mut p = ConicProgram::new(Sense::Minimize);
        let b = p.add_psd(1);
        p.add_row(vec![(Var::psd(b, 0, 0), 1.0)], -1.0);
        p.objective = vec![(Var::psd(b, 0, 0), 1.0)];
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        // min -x0 s.t. x0 - x1 = 0, x >= 0
        let mut p = ConicProgram::new(Sense::Minimize);
        p.add_nonneg(2);
        p.add_row(vec![(Var::Nonneg(0), 1.0), (Var::Nonneg(1), -1.0)], 0.0);
        p.objective = vec![(Var::Nonneg(0), -1.0)];
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let mut p = ConicProgram::new(Sense::Minimize);
        let b = p.add_psd(3);
        p.add_row(
            vec![
                (Var::psd(b, 0, 0), 1.0),
                (Var::psd(b, 1, 1), 1.0),
                (Var::psd(b, 2, 2), 1.0),
            ],
            1.0,
        );
        p.objective = vec![
            (Var::psd(b, 1, 0), 1.0),
            (Var::psd(b, 2, 1), -0.5),
            (Var::psd(b, 2, 2), 0.3),
        ];
        let a = solve(&p, &SolverOptions::default()).unwrap();
        let c = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(a.primal_objective.to_bits(), c.primal_objective.to_bits());
        assert_eq!(a.dual_objective.to_bits(), c.dual_objective.to_bits());
    }
}
