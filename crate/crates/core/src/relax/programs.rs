//! Assembly of the dual SOS program and the primal moment program from a
//! shared [`Layout`].

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, Sense, Var};
use crate::error::Result;
use crate::poly::{Basis, Poly};
use crate::sos::{match_identity, MultiplierKind};

use super::layout::Layout;
use super::precond::{ChebyshevBoxes, PolyBasis};

/// `min w . l` subject to the five identities, with `v`, `w` and `r` free
/// and one PSD Gram block per SOS multiplier.
pub fn dual_program(layout: &Layout) -> Result<ConicProgram> {
    let mut prog = layout.skeleton.clone();
    for id in &layout.identities {
        for row in match_identity(&id.lhs, &id.multipliers, id.budget)? {
            prog.add_row(row.terms, row.rhs);
        }
    }
    prog.objective = layout.objective();
    Ok(prog)
}

/// Per identity, the block of free primal variables holding its moments:
/// moments of the monomials of `basis`, or of the scaled Chebyshev
/// polynomials indexed by it when `coords` is [`PolyBasis::Chebyshev`].
#[derive(Clone, Debug)]
pub struct PrimalMoments {
    pub basis: Basis,
    pub first: usize,
    pub coords: PolyBasis,
}

/// How the support condition `g_X = 0` of the boundary measure is imposed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryEncoding {
    /// Localizing equalities `<g_X m, y> = 0`; the exact conic dual of the
    /// sign-free multiplier.
    #[default]
    Equalities,
    /// `M(g_X, y) >= 0` and `M(-g_X, y) >= 0`. Equivalent for even `deg g_X`,
    /// but the pair has no interior, which interior-point methods dislike.
    PairedLocalizers,
}

/// Linear functionals `p -> integral of p` on one measure, in the chosen
/// moment coordinates.
struct MomentCoords {
    first: usize,
    basis: Basis,
    /// `B^{-T}` for Chebyshev coordinates (`cheb = B m`).
    inv_t: Option<Mat<f64>>,
}

impl MomentCoords {
    fn terms(&self, p: &Poly) -> Vec<(Var, f64)> {
        let mut a = vec![0.0; self.basis.len()];
        for (m, c) in p.terms() {
            a[self.basis.position(m).expect("functional within the moment basis")] += c;
        }
        let q = match &self.inv_t {
            None => a,
            Some(r) => {
                let mut q = vec![0.0; a.len()];
                for (k, ak) in a.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                    for (i, qi) in q.iter_mut().enumerate() {
                        *qi += r[(i, k)] * ak;
                    }
                }
                q
            }
        };
        q.into_iter()
            .enumerate()
            .filter(|(_, c)| *c != 0.0)
            .map(|(i, c)| (Var::Free(self.first + i), c))
            .collect()
    }
}

/// The moment program: one truncated moment vector per identity (measure),
/// moment/localizing blocks for every SOS multiplier, the boundary support
/// condition where the dual has a sign-free multiplier, one Liouville row per
/// coefficient of `v` and one domination row per coefficient of `w`.
/// Maximizes the initial mass.
///
/// With [`PolyBasis::Chebyshev`] every moment, localizing entry and test
/// function uses scaled Chebyshev polynomials in place of monomials; the
/// feasible set and optimum are the same.
pub fn primal_program(
    layout: &Layout,
    encoding: BoundaryEncoding,
    coords: PolyBasis,
) -> Result<(ConicProgram, Vec<PrimalMoments>)> {
    let boxes = ChebyshevBoxes::new(layout);
    let polys = |b: &Basis| -> Result<Vec<Poly>> {
        match coords {
            PolyBasis::Monomial => Ok(b.iter().map(|m| Poly::monomial(m.clone(), 1.0)).collect()),
            PolyBasis::Chebyshev => boxes.polys(b),
        }
    };
    let mut prog = ConicProgram::new(Sense::Maximize);
    let mut maps = Vec::with_capacity(layout.identities.len());
    for id in &layout.identities {
        let basis = id.row_basis();
        let first = prog.add_free(basis.len());
        let inv_t = match coords {
            PolyBasis::Monomial => None,
            PolyBasis::Chebyshev => {
                let b = boxes.change(&basis)?;
                Some(
                    b.transpose()
                        .partial_piv_lu()
                        .solve(Mat::<f64>::identity(basis.len(), basis.len())),
                )
            }
        };
        maps.push(MomentCoords { first, basis, inv_t });
    }

    // localizing blocks: S = M(factor, y)
    for (i, id) in layout.identities.iter().enumerate() {
        for m in &id.multipliers {
            let (gram_basis, signs): (Basis, &[f64]) = match (&m.kind, encoding) {
                (MultiplierKind::Sos(g), _) => (g.basis().clone(), &[1.0]),
                (MultiplierKind::Free { basis, .. }, BoundaryEncoding::Equalities) => {
                    // <factor * p, y> = 0 for every p spanning the multiplier space
                    for p in polys(basis)? {
                        prog.add_row(maps[i].terms(&m.factor.mul(&p)), 0.0);
                    }
                    continue;
                }
                (MultiplierKind::Free { basis, .. }, BoundaryEncoding::PairedLocalizers) => {
                    (crate::poly::basis(basis.nvars(), basis.maxdeg() / 2), &[1.0, -1.0])
                }
            };
            let test = polys(&gram_basis)?;
            let weighted: Vec<Poly> = test.iter().map(|p| p.mul(&m.factor)).collect();
            for &sign in signs {
                let block = prog.add_psd(gram_basis.len());
                for a in 0..gram_basis.len() {
                    for b in 0..=a {
                        let mut terms = vec![(Var::psd(block, a, b), 1.0)];
                        for (v, c) in maps[i].terms(&weighted[a].mul(&test[b])) {
                            terms.push((v, -sign * c));
                        }
                        prog.add_row(terms, 0.0);
                    }
                }
            }
        }
    }

    // one row per test function of v and w: sum_id <lhs_id(test), y_id> = objective(test)
    let objective = layout.objective();
    let nv = layout.v_basis.len();
    let n_dec = nv + layout.w_basis.len();
    let mut per_var: Vec<Vec<Poly>> = vec![Vec::new(); n_dec];
    for (j, polys) in per_var.iter_mut().enumerate() {
        for id in &layout.identities {
            let p = id
                .lhs
                .terms
                .iter()
                .filter(|(v, _)| *v == Var::Free(j))
                .fold(Poly::zero(id.lhs.nvars), |acc, (_, p)| acc.add(p));
            polys.push(p);
        }
    }
    let rhs_of = |j: usize| {
        objective
            .iter()
            .find(|(v, _)| *v == Var::Free(j))
            .map_or(0.0, |(_, c)| *c)
    };
    for (offset, basis) in [(0, &layout.v_basis), (nv, &layout.w_basis)] {
        let mix = match coords {
            PolyBasis::Monomial => Mat::<f64>::identity(basis.len(), basis.len()),
            PolyBasis::Chebyshev => boxes.change(basis)?,
        };
        for a in 0..basis.len() {
            let mut terms = Vec::new();
            let mut rhs = 0.0;
            for (i, map) in maps.iter().enumerate() {
                let mut p = Poly::zero(map.basis.nvars());
                for k in 0..basis.len() {
                    let w = mix[(a, k)];
                    if w != 0.0 {
                        p = p.add(&per_var[offset + k][i].scale(w));
                    }
                }
                terms.extend(map.terms(&p));
            }
            for k in 0..basis.len() {
                rhs += mix[(a, k)] * rhs_of(offset + k);
            }
            prog.add_row(terms, rhs);
        }
    }

    // maximize -sum <const_id, y_id>, i.e. the mass of the initial measure
    for (i, id) in layout.identities.iter().enumerate() {
        prog.objective.extend(maps[i].terms(&id.lhs.constant.scale(-1.0)));
    }
    let moments = maps
        .into_iter()
        .map(|m| PrimalMoments {
            basis: m.basis,
            first: m.first,
            coords,
        })
        .collect();
    Ok((prog, moments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::DomainDescriptor;
    use crate::poly::{MultiIndex, Poly, VarNames};
    use crate::relax::layout::{Degrees, IdentityKind, LieBudget};
    use crate::relax::SystemSpec;

    fn cubic() -> SystemSpec {
        SystemSpec::new(
            vec![Poly::parse("x1^3 - 0.25*x1", VarNames::time_state(1)).unwrap()],
            Poly::parse("1 - x1^2", VarNames::state(1)).unwrap(),
            Poly::parse("0.09 - x1^2", VarNames::state(1)).unwrap(),
            2.0,
            DomainDescriptor::Box {
                lower: vec![-1.0],
                upper: vec![1.0],
            },
        )
        .unwrap()
    }

    fn row_of(prog: &ConicProgram, first_dec_row: usize, j: usize) -> Vec<(Var, f64)> {
        let mut t = prog.rows[first_dec_row + j].terms.clone();
        t.sort_by(|a, b| a.0.cmp(&b.0));
        t
    }

    #[test]
    fn liouville_rows_for_one_and_t() {
        let layout = Layout::new(&cubic(), Degrees::uniform(4), LieBudget::Full).unwrap();
        let (prog, mom) = primal_program(&layout, BoundaryEncoding::Equalities, PolyBasis::Monomial).unwrap();
        let first_dec_row = prog.rows.len() - layout.v_basis.len() - layout.w_basis.len();
        let kind = |i: usize| layout.identities[i].kind;
        assert_eq!(
            (0..5).map(kind).collect::<Vec<_>>(),
            [
                IdentityKind::Decrease,
                IdentityKind::Initial,
                IdentityKind::Boundary,
                IdentityKind::Terminal,
                IdentityKind::Domination
            ]
        );
        let mass = |i: usize| Var::Free(mom[i].first);

        // v = 1: (y_T1)_0 + (y_T2)_0 - (y_0)_0 = 0
        let mut expect = vec![(mass(1), -1.0), (mass(2), 1.0), (mass(3), 1.0)];
        expect.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(row_of(&prog, first_dec_row, 0), expect);
        assert_eq!(prog.rows[first_dec_row].rhs, 0.0);

        // v = t: -y_0(mu) + (y_T1)_t + T (y_T2)_0 = 0
        let t = MultiIndex::new(vec![1, 0]);
        let jt = layout.v_basis.position(&t).unwrap();
        let t_in_t1 = mom[2].basis.position(&t).unwrap();
        let mut expect = vec![
            (mass(0), -1.0),
            (Var::Free(mom[2].first + t_in_t1), 1.0),
            (mass(3), 2.0),
        ];
        expect.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(row_of(&prog, first_dec_row, jt), expect);

        // domination row for w = 1: (y_0)_0 + (yhat_0)_0 = |X| = 2
        let w_row = first_dec_row + layout.v_basis.len();
        let mut expect = vec![(mass(1), 1.0), (mass(4), 1.0)];
        expect.sort_by(|a, b| a.0.cmp(&b.0));
        let mut got = prog.rows[w_row].terms.clone();
        got.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(got, expect);
        assert_eq!(prog.rows[w_row].rhs, 2.0);

        assert_eq!(prog.objective, vec![(mass(1), 1.0)]);
    }

    #[test]
    fn dual_has_one_row_per_identity_monomial() {
        let layout = Layout::new(&cubic(), Degrees::uniform(4), LieBudget::Full).unwrap();
        let prog = dual_program(&layout).unwrap();
        let expected: usize = layout.identities.iter().map(|id| id.row_basis().len()).sum();
        assert_eq!(prog.rows.len(), expected);
        prog.validate().unwrap();
        assert_eq!(prog.sense, Sense::Minimize);
    }

    #[test]
    fn chebyshev_moments_give_the_same_optimum() {
        let layout = Layout::new(&cubic(), Degrees::uniform(6), LieBudget::Full).unwrap();
        let opts = crate::solver::SolverOptions::default();
        let optimum = |coords| {
            let (prog, _) = primal_program(&layout, BoundaryEncoding::Equalities, coords).unwrap();
            let sol = crate::solver::solve(&prog, &opts).unwrap();
            assert!(sol.status.is_usable(), "{:?}", sol.status);
            sol.primal_objective
        };
        let mono = optimum(PolyBasis::Monomial);
        let cheb = optimum(PolyBasis::Chebyshev);
        assert!((mono - cheb).abs() < 1e-6 * (1.0 + mono.abs()), "{mono} vs {cheb}");
        // the initial mass never exceeds |X|
        assert!(cheb <= 2.0 + 1e-6);
    }
}
