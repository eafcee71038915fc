use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::Var;
use crate::error::{Result, RoaError};
use crate::poly::{lie, CompiledPoly, Poly};
use crate::solver::{Residuals, Solution, SolveStatus};

use super::layout::{Degrees, IdentityKind, Layout};
use super::system::SystemSpec;

/// Post-solve checks of a dual solution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Worst relative mismatch `|lhs - rhs| / (1 + max |coef(lhs)|)` of each
    /// identity at random points.
    pub identity_residuals: Vec<(IdentityKind, f64)>,
    /// Smallest eigenvalue over all Gram blocks.
    pub min_gram_eigenvalue: f64,
    pub iterations: usize,
}

impl Diagnostics {
    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

/// Certificates and optima of one relaxation order.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationResult {
    pub degrees: Degrees,
    /// Volume certificate on `x`; the inner approximation is `{w < 1}`.
    pub w: Poly,
    /// Time-state certificate in the original time scale.
    pub v: Poly,
    /// Optimum of the moment program, read off the conic dual of the SOS solve.
    pub primal_opt: f64,
    /// Optimum `w . l` of the SOS program.
    pub dual_opt: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub diagnostics: Diagnostics,
}

impl RelaxationResult {
    pub fn k(&self) -> u32 {
        self.degrees.k
    }
}

/// Evaluates every identity of `layout` at the solution and reports the worst
/// relative mismatch over `samples` random points of `[0, T] x bounding box`.
pub fn identity_residuals(layout: &Layout, sol: &Solution, samples: usize, seed: u64) -> Vec<(IdentityKind, f64)> {
    let n = layout.spec.n();
    let (lo, hi) = layout.spec.domain().bounding_box();
    let horizon = layout.spec.horizon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            std::iter::once(rng.random_range(0.0..=horizon))
                .chain((0..n).map(|i| rng.random_range(lo[i]..=hi[i])))
                .collect()
        })
        .collect();
    let value = |v: Var| match v {
        Var::Free(i) => sol.x_free[i],
        _ => unreachable!("identity left sides use free variables only"),
    };
    layout
        .identities
        .iter()
        .map(|id| {
            let left = id.lhs.value(value);
            let mut right = Poly::zero(id.lhs.nvars);
            for m in &id.multipliers {
                right = right.add(&m.value(&sol.x_free, &sol.x_psd).mul(&m.factor));
            }
            let scale = 1.0 + left.max_abs_coeff();
            let skip = usize::from(!id.has_time(n));
            let worst = points
                .iter()
                .map(|p| (left.eval(&p[skip..]) - right.eval(&p[skip..])).abs() / scale)
                .fold(0.0, f64::max);
            (id.kind, worst)
        })
        .collect()
}

/// Reads the certificates off a dual solve. `horizon` is the horizon of the
/// original (not time-normalized) system.
pub fn extract(layout: &Layout, sol: &Solution, horizon: f64) -> Result<RelaxationResult> {
    if !sol.status.is_usable() {
        return Err(RoaError::Solver {
            status: sol.status,
            detail: format!(
                "order {} (deg_w {}, deg_v {}): residuals primal {:.2e}, dual {:.2e}, gap {:.2e} after {} iterations",
                layout.degrees.k,
                layout.degrees.deg_w,
                layout.degrees.deg_v,
                sol.residuals.primal,
                sol.residuals.dual,
                sol.residuals.gap,
                sol.iterations
            ),
        });
    }
    let nv = layout.v_basis.len();
    let nw = layout.w_basis.len();
    let v_norm = Poly::from_basis_coeffs(&layout.v_basis, &sol.x_free[..nv]);
    let w = Poly::from_basis_coeffs(&layout.w_basis, &sol.x_free[nv..nv + nw]);
    let scale = layout.spec.horizon() / horizon;
    let v = if scale == 1.0 {
        v_norm
    } else {
        v_norm.rescale_var(0, scale)
    };
    Ok(RelaxationResult {
        degrees: layout.degrees,
        w,
        v,
        primal_opt: sol.dual_objective,
        dual_opt: sol.primal_objective,
        status: sol.status,
        residuals: sol.residuals,
        diagnostics: Diagnostics {
            identity_residuals: identity_residuals(layout, sol, 100, 0),
            min_gram_eigenvalue: sol.min_psd_eigenvalue(),
            iterations: sol.iterations,
        },
    })
}

/// Pointwise minimum of several volume certificates; its sublevel set
/// `{min_i w_i < 1}` is the union of the individual inner approximations.
#[derive(Clone, Debug)]
pub struct RunningMin {
    parts: Vec<CompiledPoly>,
}

impl RunningMin {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|p| p.eval(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

pub fn running_min(results: &[RelaxationResult]) -> Result<RunningMin> {
    running_min_of(results.iter().map(|r| &r.w))
}

pub fn running_min_of<'a>(ws: impl IntoIterator<Item = &'a Poly>) -> Result<RunningMin> {
    let parts: Vec<CompiledPoly> = ws.into_iter().map(CompiledPoly::new).collect();
    if parts.is_empty() {
        return Err(RoaError::InvalidInput("running minimum of an empty list".into()));
    }
    if parts.windows(2).any(|w| w[0].nvars() != w[1].nvars()) {
        return Err(RoaError::DimensionMismatch(
            "certificates of different dimensions".into(),
        ));
    }
    Ok(RunningMin { parts })
}

/// Worst sampled value of one pointwise condition implied by an identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub kind: IdentityKind,
    /// Smallest sampled value of the quantity that must be nonnegative.
    pub min_value: f64,
    /// Largest coefficient magnitude of that quantity; the tolerance is
    /// `1e-6 * (1 + scale)`.
    pub scale: f64,
    pub samples: usize,
}

impl SpotCheck {
    pub fn passed(&self) -> bool {
        self.min_value >= -1e-6 * (1.0 + self.scale)
    }
}

/// Checks the sign conditions behind the five identities for certificates
/// `v(t, x)` and `w(x)` (original time) at random points: `-Lv >= 0` on
/// `[0,T] x X`, `w - v(0,.) - 1 >= 0` and `w >= 0` on `X`, `v >= 0` on
/// `[0,T] x {g_X = 0}`, `v(T,.) >= 0` on `X minus X_T`.
pub fn spot_check(spec: &SystemSpec, v: &Poly, w: &Poly, samples: usize, seed: u64) -> Result<Vec<SpotCheck>> {
    let n = spec.n();
    if v.nvars() != n + 1 || w.nvars() != n {
        return Err(RoaError::DimensionMismatch(
            "certificates do not match the system".into(),
        ));
    }
    let horizon = spec.horizon();
    let (lo, hi) = spec.domain().bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gx = CompiledPoly::new(spec.g_x());
    let gt = CompiledPoly::new(spec.g_t());

    // interior points of X, and points of {g_X = 0} by bisection between an
    // interior point and one outside X (drawn from a widened box)
    let mut interior = Vec::with_capacity(samples);
    let mut boundary = Vec::with_capacity(samples);
    let mut outside = Vec::new();
    for _ in 0..200 * samples.max(1) {
        if interior.len() >= samples && outside.len() >= samples {
            break;
        }
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let pad = 0.5 * (hi[i] - lo[i]);
                rng.random_range(lo[i] - pad..=hi[i] + pad)
            })
            .collect();
        let g = gx.eval(&x);
        let in_box = (0..n).all(|i| lo[i] <= x[i] && x[i] <= hi[i]);
        if g >= 0.0 && in_box && interior.len() < samples {
            interior.push(x);
        } else if g < 0.0 && outside.len() < samples {
            outside.push(x);
        }
    }
    for (a, b) in interior.iter().zip(&outside) {
        let (mut s_in, mut s_out) = (0.0f64, 1.0f64);
        let at = |s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect() };
        for _ in 0..200 {
            let mid = 0.5 * (s_in + s_out);
            if gx.eval(&at(mid)) >= 0.0 {
                s_in = mid;
            } else {
                s_out = mid;
            }
        }
        boundary.push(at(s_in));
    }
    let times: Vec<f64> = (0..samples.max(1)).map(|_| rng.random_range(0.0..=horizon)).collect();
    let tx = |t: f64, x: &[f64]| -> Vec<f64> { std::iter::once(t).chain(x.iter().copied()).collect() };

    let neg_lie = lie(v, spec.f())?.scale(-1.0);
    let v0 = v.at_time(0.0);
    let vt = v.at_time(horizon);
    let initial = w.sub(&v0).sub(&Poly::constant(n, 1.0));
    let checks: [(IdentityKind, &Poly, Vec<f64>); 5] = [
        (
            IdentityKind::Decrease,
            &neg_lie,
            interior
                .iter()
                .zip(&times)
                .map(|(x, t)| neg_lie.eval(&tx(*t, x)))
                .collect(),
        ),
        (
            IdentityKind::Initial,
            &initial,
            interior.iter().map(|x| initial.eval(x)).collect(),
        ),
        (
            IdentityKind::Boundary,
            v,
            boundary.iter().zip(&times).map(|(x, t)| v.eval(&tx(*t, x))).collect(),
        ),
        (
            IdentityKind::Terminal,
            &vt,
            interior
                .iter()
                .filter(|x| gt.eval(x) <= 0.0)
                .map(|x| vt.eval(x))
                .collect(),
        ),
        (
            IdentityKind::Domination,
            w,
            interior.iter().map(|x| w.eval(x)).collect(),
        ),
    ];
    Ok(checks
        .into_iter()
        .map(|(kind, p, vals)| SpotCheck {
            kind,
            min_value: vals.iter().copied().fold(f64::INFINITY, f64::min),
            scale: p.max_abs_coeff(),
            samples: vals.len(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::VarNames;

    fn result_with(w: &str) -> RelaxationResult {
        RelaxationResult {
            degrees: Degrees::uniform(2),
            w: Poly::parse(w, VarNames::state(1)).unwrap(),
            v: Poly::zero(2),
            primal_opt: 0.0,
            dual_opt: 0.0,
            status: SolveStatus::Optimal,
            residuals: Residuals::default(),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn running_min_of_one_is_identity() {
        let r = result_with("1 + x1^2");
        let m = running_min(std::slice::from_ref(&r)).unwrap();
        for x in [-1.0, 0.0, 0.3] {
            assert_eq!(m.eval(&[x]), r.w.eval(&[x]));
        }
    }

    #[test]
    fn running_min_takes_pointwise_minimum() {
        let a = result_with("2*x1");
        let b = result_with("1 - x1");
        let m = running_min(&[a.clone(), b.clone()]).unwrap();
        for x in [-1.0, 0.0, 0.2, 0.9] {
            assert_eq!(m.eval(&[x]), a.w.eval(&[x]).min(b.w.eval(&[x])));
        }
        assert!(running_min(&[]).is_err());
    }

    fn static_spec() -> SystemSpec {
        SystemSpec::new(
            vec![Poly::zero(2)],
            Poly::parse("1 - x1^2", VarNames::state(1)).unwrap(),
            Poly::parse("0.09 - x1^2", VarNames::state(1)).unwrap(),
            1.0,
            crate::moments::DomainDescriptor::Box {
                lower: vec![-1.0],
                upper: vec![1.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn spot_check_accepts_trivial_certificate() {
        let checks = spot_check(&static_spec(), &Poly::zero(2), &Poly::constant(1, 1.0), 50, 1).unwrap();
        assert_eq!(checks.len(), 5);
        assert!(checks.iter().all(|c| c.passed() && c.samples > 0), "{checks:?}");
    }

    #[test]
    fn spot_check_flags_low_w() {
        let checks = spot_check(&static_spec(), &Poly::zero(2), &Poly::zero(1), 50, 1).unwrap();
        let initial = checks.iter().find(|c| c.kind == IdentityKind::Initial).unwrap();
        assert!(!initial.passed());
        assert_eq!(initial.min_value, -1.0);
    }
}
