//! The five polynomial identities of the order-k relaxation, laid out once
//! and shared by the dual (SOS) and primal (moment) programs.

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, Sense, Var};
use crate::error::{Result, RoaError};
use crate::moments::{lebesgue_moments, MomentVector};
use crate::poly::{basis, lie, Basis, Poly};
use crate::sos::{time_weight, GramBlock, LinearPoly, Multiplier, MultiplierKind};

use super::SystemSpec;

/// Relaxation order and the degrees of the two certificates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degrees {
    pub k: u32,
    pub deg_w: u32,
    pub deg_v: u32,
}

impl Degrees {
    /// `deg_w = deg_v = d` and `k = ceil(d / 2)`.
    pub fn uniform(d: u32) -> Self {
        Self::new(d, d)
    }

    /// Smallest order that accommodates both degrees.
    pub fn new(deg_w: u32, deg_v: u32) -> Self {
        Self {
            k: deg_w.max(deg_v).div_ceil(2),
            deg_w,
            deg_v,
        }
    }
}

/// Degree budget of the identity `-Lv = p + q1 t(T-t) + q2 g_X`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LieBudget {
    /// Multipliers sized for degree `2k`; coefficients of `Lv` above `2k`
    /// must cancel.
    Relaxation,
    /// Budget raised to cover `deg(Lv)` (rounded up to even), so `v` may use
    /// its full degree.
    #[default]
    Full,
}

/// Which measure / certificate condition an identity encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityKind {
    /// `-Lv >= 0` on `[0,T] x X` (occupation measure).
    Decrease,
    /// `w - v(0,.) - 1 >= 0` on `X` (initial measure).
    Initial,
    /// `v >= 0` on `[0,T] x X_boundary`.
    Boundary,
    /// `v(T,.) >= 0` on the complement of the target.
    Terminal,
    /// `w >= 0` on `X` (slack measure).
    Domination,
}

#[derive(Clone, Debug)]
pub struct Identity {
    pub kind: IdentityKind,
    pub lhs: LinearPoly,
    pub multipliers: Vec<Multiplier>,
    pub budget: u32,
}

impl Identity {
    /// Monomials indexing the coefficient rows (and the primal moment vector).
    pub fn row_basis(&self) -> Basis {
        basis(self.lhs.nvars, self.budget.max(self.lhs.degree()))
    }

    /// Whether the identity lives in time-state space.
    pub fn has_time(&self, n: usize) -> bool {
        self.lhs.nvars == n + 1
    }
}

/// Variables of the dual program without its rows: `v` coefficients, then
/// `w` coefficients, then free multiplier coefficients, and one PSD block per
/// SOS multiplier.
#[derive(Clone, Debug)]
pub struct Layout {
    pub spec: SystemSpec,
    pub degrees: Degrees,
    pub v_basis: Basis,
    pub w_basis: Basis,
    pub identities: Vec<Identity>,
    pub lebesgue: MomentVector,
    pub skeleton: ConicProgram,
}

fn half_degree(budget: u32, factor: &Poly, what: &str) -> Result<u32> {
    budget.checked_sub(factor.degree()).map(|d| d / 2).ok_or_else(|| {
        RoaError::EmptyMultiplierBasis(format!(
            "{what}: factor of degree {} exceeds the budget {budget}",
            factor.degree()
        ))
    })
}

/// A variable `j` such that `g` contains `x_j^deg(g)`.
fn pure_power_var(g: &Poly) -> Option<(usize, u32)> {
    let d = g.degree();
    if d == 0 {
        return None;
    }
    (0..g.nvars()).rev().find_map(|j| {
        let mut e = vec![0; g.nvars()];
        e[j] = d;
        (g.coeff(&crate::poly::MultiIndex::new(e)) != 0.0).then_some((j, d))
    })
}

impl Layout {
    /// `spec` should already be time-normalized for good conditioning, but any
    /// horizon is handled.
    pub fn new(spec: &SystemSpec, degrees: Degrees, lie_budget: LieBudget) -> Result<Self> {
        let Degrees { k, deg_w, deg_v } = degrees;
        let n = spec.n();
        let nt = n + 1;
        let d_x = spec.g_x().degree().div_ceil(2);
        let d_t = spec.g_t().degree().div_ceil(2);
        if k < d_x.max(d_t).max(1) {
            return Err(RoaError::EmptyMultiplierBasis(format!(
                "order {k} is below max(d_X, d_T, 1) = {}",
                d_x.max(d_t).max(1)
            )));
        }
        if deg_v > 2 * k || deg_w > 2 * k {
            return Err(RoaError::DegreeBudget(format!(
                "deg_v = {deg_v}, deg_w = {deg_w} exceed 2k = {}",
                2 * k
            )));
        }

        let mut prog = ConicProgram::new(Sense::Minimize);
        let v_basis = basis(nt, deg_v);
        let w_basis = basis(n, deg_w);
        let v0 = prog.add_free(v_basis.len());
        let w0 = prog.add_free(w_basis.len());
        let v_var = |j: usize| Var::Free(v0 + j);
        let w_var = |j: usize| Var::Free(w0 + j);

        let horizon = spec.horizon();
        let one_t = Poly::constant(nt, 1.0);
        let one_x = Poly::constant(n, 1.0);
        let tw = time_weight(n, horizon);
        let gx_t = spec.g_x().promote_time();
        let gx = spec.g_x().clone();
        let neg_gt = spec.g_t().scale(-1.0);

        let sos = |prog: &mut ConicProgram, name: &str, nvars: usize, factor: &Poly, budget: u32| {
            let h = half_degree(budget, factor, name)?;
            Ok::<_, RoaError>(Multiplier {
                name: name.to_string(),
                kind: MultiplierKind::Sos(GramBlock::declare(prog, nvars, h)),
                factor: factor.clone(),
            })
        };
        let even = |d: u32| d + d % 2;

        let mut identities = Vec::with_capacity(5);

        // -Lv = p + q1 t(T-t) + q2 g_X
        let lie_deg = (deg_v + spec.f_degree()).saturating_sub(1);
        let budget = match lie_budget {
            LieBudget::Relaxation => 2 * k,
            LieBudget::Full => even((2 * k).max(lie_deg)),
        };
        let mut lhs = LinearPoly::new(nt);
        for (j, m) in v_basis.iter().enumerate() {
            let lv = lie(&Poly::monomial(m.clone(), 1.0), spec.f())?;
            if !lv.is_zero() {
                lhs.terms.push((v_var(j), lv.scale(-1.0)));
            }
        }
        let multipliers = vec![
            sos(&mut prog, "p", nt, &one_t, budget)?,
            sos(&mut prog, "q1", nt, &tw, budget)?,
            sos(&mut prog, "q2", nt, &gx_t, budget)?,
        ];
        identities.push(Identity {
            kind: IdentityKind::Decrease,
            lhs,
            multipliers,
            budget,
        });

        // w - v(0, .) - 1 = p0 + q01 g_X
        let budget = 2 * k;
        let mut lhs = LinearPoly::new(n);
        for (j, m) in w_basis.iter().enumerate() {
            lhs.terms.push((w_var(j), Poly::monomial(m.clone(), 1.0)));
        }
        for (j, m) in v_basis.iter().enumerate() {
            if m.exps()[0] == 0 {
                lhs.terms.push((v_var(j), Poly::monomial(m.without_time(), -1.0)));
            }
        }
        lhs.constant = Poly::constant(n, -1.0);
        let multipliers = vec![
            sos(&mut prog, "p0", n, &one_x, budget)?,
            sos(&mut prog, "q01", n, &gx, budget)?,
        ];
        identities.push(Identity {
            kind: IdentityKind::Initial,
            lhs,
            multipliers,
            budget,
        });

        // v = pT1 + qT1 t(T-t) + r g_X
        let budget = 2 * k;
        let mut lhs = LinearPoly::new(nt);
        for (j, m) in v_basis.iter().enumerate() {
            lhs.terms.push((v_var(j), Poly::monomial(m.clone(), 1.0)));
        }
        let r_deg = budget
            .checked_sub(gx_t.degree())
            .ok_or_else(|| RoaError::EmptyMultiplierBasis("r: g_X degree exceeds the budget".into()))?;
        let r_basis = basis(nt, r_deg);
        let r0 = prog.add_free(r_basis.len());
        // On {g_X = 0} squares only matter modulo g_X, so when g_X has a pure
        // power x_j^d among its top-degree terms the Gram bases keep normal
        // forms only (x_j-degree < d). The sign-free r absorbs the remainder,
        // and the otherwise unbounded directions p + s g_X^2 disappear.
        let on_boundary = |prog: &mut ConicProgram, name: &str, factor: &Poly| {
            let h = half_degree(budget, factor, name)?;
            let b = match pure_power_var(&gx_t) {
                Some((j, d)) => Basis::restricted(nt, h, |m| m.exps()[j] < d),
                None => basis(nt, h),
            };
            Ok::<_, RoaError>(Multiplier {
                name: name.to_string(),
                kind: MultiplierKind::Sos(GramBlock::declare_with(prog, b)),
                factor: factor.clone(),
            })
        };
        let multipliers = vec![
            on_boundary(&mut prog, "pT1", &one_t)?,
            on_boundary(&mut prog, "qT1", &tw)?,
            Multiplier {
                name: "r".into(),
                kind: MultiplierKind::Free {
                    first: r0,
                    basis: r_basis,
                },
                factor: gx_t.clone(),
            },
        ];
        identities.push(Identity {
            kind: IdentityKind::Boundary,
            lhs,
            multipliers,
            budget,
        });

        // v(T, .) = pT2 + qT2 g_X - qT3 g_T
        let budget = 2 * k;
        let mut lhs = LinearPoly::new(n);
        for (j, m) in v_basis.iter().enumerate() {
            let c = horizon.powi(m.exps()[0] as i32);
            lhs.terms.push((v_var(j), Poly::monomial(m.without_time(), c)));
        }
        let multipliers = vec![
            sos(&mut prog, "pT2", n, &one_x, budget)?,
            sos(&mut prog, "qT2", n, &gx, budget)?,
            sos(&mut prog, "qT3", n, &neg_gt, budget)?,
        ];
        identities.push(Identity {
            kind: IdentityKind::Terminal,
            lhs,
            multipliers,
            budget,
        });

        // w = s0 + s1 g_X
        let budget = even(deg_w).max(even(gx.degree()));
        let mut lhs = LinearPoly::new(n);
        for (j, m) in w_basis.iter().enumerate() {
            lhs.terms.push((w_var(j), Poly::monomial(m.clone(), 1.0)));
        }
        let multipliers = vec![
            sos(&mut prog, "s0", n, &one_x, budget)?,
            sos(&mut prog, "s1", n, &gx, budget)?,
        ];
        identities.push(Identity {
            kind: IdentityKind::Domination,
            lhs,
            multipliers,
            budget,
        });

        let lebesgue = lebesgue_moments(spec.domain(), n, deg_w)?;
        Ok(Self {
            spec: spec.clone(),
            degrees,
            v_basis,
            w_basis,
            identities,
            lebesgue,
            skeleton: prog,
        })
    }

    pub fn v_var(&self, j: usize) -> Var {
        Var::Free(j)
    }

    pub fn w_var(&self, j: usize) -> Var {
        Var::Free(self.v_basis.len() + j)
    }

    /// Objective `w . l` as variable terms.
    pub fn objective(&self) -> Vec<(Var, f64)> {
        self.lebesgue
            .values()
            .iter()
            .enumerate()
            .filter(|(_, l)| **l != 0.0)
            .map(|(j, &l)| (self.w_var(j), l))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::DomainDescriptor;
    use crate::poly::VarNames;

    fn cubic(horizon: f64) -> SystemSpec {
        SystemSpec::new(
            vec![Poly::parse("x1^3 - 0.25*x1", VarNames::time_state(1)).unwrap()],
            Poly::parse("1 - x1^2", VarNames::state(1)).unwrap(),
            Poly::parse("0.09 - x1^2", VarNames::state(1)).unwrap(),
            horizon,
            DomainDescriptor::Box {
                lower: vec![-1.0],
                upper: vec![1.0],
            },
        )
        .unwrap()
    }

    #[test]
    fn degrees_round_odd_up() {
        assert_eq!(
            Degrees::uniform(9),
            Degrees {
                k: 5,
                deg_w: 9,
                deg_v: 9
            }
        );
        assert_eq!(Degrees::new(6, 16).k, 8);
    }

    #[test]
    fn multiplier_sizes_fill_budgets() {
        let l = Layout::new(&cubic(1.0), Degrees::uniform(8), LieBudget::Relaxation).unwrap();
        let sizes: Vec<(String, u32)> = l
            .identities
            .iter()
            .flat_map(|id| id.multipliers.iter().map(|m| (m.name.clone(), m.basis().maxdeg())))
            .collect();
        let expect = [
            ("p", 4),
            ("q1", 3),
            ("q2", 3),
            ("p0", 4),
            ("q01", 3),
            ("pT1", 4),
            ("qT1", 3),
            ("r", 6),
            ("pT2", 4),
            ("qT2", 3),
            ("qT3", 3),
            ("s0", 4),
            ("s1", 3),
        ];
        for ((name, deg), (en, ed)) in sizes.iter().zip(expect) {
            assert_eq!((name.as_str(), *deg), (en, ed));
        }
        for id in &l.identities {
            for m in &id.multipliers {
                assert!(m.product_degree() <= id.budget);
            }
        }
    }

    #[test]
    fn full_lie_budget_covers_lv() {
        let l = Layout::new(&cubic(1.0), Degrees::uniform(16), LieBudget::Full).unwrap();
        // deg Lv = 16 + 3 - 1 = 18
        assert_eq!(l.identities[0].budget, 18);
        let r = Layout::new(&cubic(1.0), Degrees::uniform(16), LieBudget::Relaxation).unwrap();
        assert_eq!(r.identities[0].budget, 16);
        assert_eq!(r.identities[0].row_basis().maxdeg(), 18);
    }

    #[test]
    fn order_too_low_is_rejected() {
        let s = cubic(1.0);
        assert!(Layout::new(
            &s,
            Degrees {
                k: 0,
                deg_w: 0,
                deg_v: 0
            },
            LieBudget::Full
        )
        .is_err());
        assert!(Layout::new(
            &s,
            Degrees {
                k: 2,
                deg_w: 6,
                deg_v: 4
            },
            LieBudget::Full
        )
        .is_err());
    }

    #[test]
    fn terminal_identity_substitutes_horizon() {
        let l = Layout::new(&cubic(10.0), Degrees::uniform(2), LieBudget::Full).unwrap();
        let term = &l.identities[3];
        // the v coefficient on t (basis index 1) maps to the constant 10
        let t_idx = l.v_basis.position(&crate::poly::MultiIndex::new(vec![1, 0])).unwrap();
        let (_, p) = term.lhs.terms.iter().find(|(v, _)| *v == l.v_var(t_idx)).unwrap();
        assert_eq!(*p, Poly::constant(1, 10.0));
    }
}
