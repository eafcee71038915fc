//! The order-k moment relaxation and its dual SOS program for a
//! [`SystemSpec`], plus extraction of the certificates `v` and `w`.
//!
//! Programs are built in normalized time `s = t / T` (horizon 1): this leaves
//! both optima and `w` unchanged while keeping coefficients of high powers of
//! `t` well scaled. The returned `v` is mapped back to the original time.

mod layout;
mod precond;
mod programs;
mod result;
mod system;

pub use crate::conic::ConicProgram;
pub use layout::{Degrees, Identity, IdentityKind, Layout, LieBudget};
pub use precond::{chebyshev_program, BasisChange, PolyBasis};
pub use programs::{dual_program, primal_program, BoundaryEncoding, PrimalMoments};
pub use result::{
    extract, identity_residuals, running_min, running_min_of, spot_check, Diagnostics, RelaxationResult, RunningMin,
    SpotCheck,
};
pub use system::{CompiledSystem, SystemSpec};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::solver::{self, Solution, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxOptions {
    pub solver: SolverOptions,
    pub lie_budget: LieBudget,
    /// Rescale time to `[0, 1]` before assembling.
    pub normalize_time: bool,
    /// Encoding of the boundary support in the moment program.
    pub boundary: BoundaryEncoding,
    /// Polynomial basis of the Gram blocks and coefficient matching.
    pub basis: PolyBasis,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            lie_budget: LieBudget::default(),
            normalize_time: true,
            boundary: BoundaryEncoding::default(),
            basis: PolyBasis::default(),
        }
    }
}

fn layout_for(spec: &SystemSpec, degrees: Degrees, opts: &RelaxOptions) -> Result<Layout> {
    let work = if opts.normalize_time {
        spec.normalized()
    } else {
        spec.clone()
    };
    Layout::new(&work, degrees, opts.lie_budget)
}

/// The SOS program (minimize `w . l`) with the layout needed to read it back.
pub fn build_dual(spec: &SystemSpec, degrees: Degrees, opts: &RelaxOptions) -> Result<(ConicProgram, Layout)> {
    let layout = layout_for(spec, degrees, opts)?;
    Ok((dual_program(&layout)?, layout))
}

/// The moment program (maximize the initial mass).
pub fn build_primal(spec: &SystemSpec, degrees: Degrees, opts: &RelaxOptions) -> Result<ConicProgram> {
    let layout = layout_for(spec, degrees, opts)?;
    Ok(primal_program(&layout, opts.boundary, opts.basis)?.0)
}

/// Builds, solves and extracts one relaxation.
pub fn solve_relaxation(spec: &SystemSpec, degrees: Degrees, opts: &RelaxOptions) -> Result<RelaxationResult> {
    let (prog, layout) = build_dual(spec, degrees, opts)?;
    let sol = match opts.basis {
        PolyBasis::Monomial => solver::solve(&prog, &opts.solver)?,
        PolyBasis::Chebyshev => {
            let (cheb, change) = chebyshev_program(&layout, &prog)?;
            change.recover(solver::solve(&cheb, &opts.solver)?)
        }
    };
    log::info!(
        "deg_w {} deg_v {} k {}: {:?} d* = {:.9} after {} iterations",
        degrees.deg_w,
        degrees.deg_v,
        degrees.k,
        sol.status,
        sol.primal_objective,
        sol.iterations
    );
    extract(&layout, &sol, spec.horizon())
}

/// Solves the moment program on its own; returns `p*_k` and the raw solution.
pub fn solve_primal(spec: &SystemSpec, degrees: Degrees, opts: &RelaxOptions) -> Result<(f64, Solution)> {
    let prog = build_primal(spec, degrees, opts)?;
    let sol = solver::solve(&prog, &opts.solver)?;
    if !sol.status.is_usable() {
        return Err(crate::error::RoaError::Solver {
            status: sol.status,
            detail: format!("moment program at order {}", degrees.k),
        });
    }
    Ok((sol.primal_objective, sol))
}
