//! Sum-of-squares parameterization: Gram blocks, free multipliers, and the
//! coefficient-matching rows that turn a polynomial identity into linear
//! equalities of a [`ConicProgram`].

use std::collections::BTreeMap;

use faer::Mat;

use crate::conic::{ConicProgram, Var};
use crate::error::{Result, RoaError};
use crate::poly::{basis, Basis, MultiIndex, Poly};

/// Sum of squares `m' Q m` with `m` the monomials of `basis` and `Q` the PSD
/// block `block` of a program.
#[derive(Clone, Debug)]
pub struct GramBlock {
    basis: Basis,
    block: usize,
}

impl GramBlock {
    pub fn new(basis: Basis, block: usize) -> Self {
        Self { basis, block }
    }

    /// Declares a fresh PSD block for an SOS polynomial of degree `2 * halfdeg`.
    pub fn declare(program: &mut ConicProgram, nvars: usize, halfdeg: u32) -> Self {
        let b = basis(nvars, halfdeg);
        let block = program.add_psd(b.len());
        Self { basis: b, block }
    }

    /// Declares a fresh PSD block indexed by an explicit monomial list.
    pub fn declare_with(program: &mut ConicProgram, basis: Basis) -> Self {
        let block = program.add_psd(basis.len());
        Self { basis, block }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn order(&self) -> usize {
        self.basis.len()
    }

    /// The polynomial represented by a value `q` of the block.
    pub fn poly(&self, q: &Mat<f64>) -> Poly {
        gram_to_poly_map(&self.basis).apply(q)
    }
}

/// Linear map from the lower triangle of a Gram matrix to polynomial
/// coefficients.
#[derive(Clone, Debug)]
pub struct GramMap {
    nvars: usize,
    entries: BTreeMap<MultiIndex, Vec<(usize, usize, f64)>>,
}

impl GramMap {
    /// Monomials reachable by the map, in graded-lex order.
    pub fn monomials(&self) -> impl Iterator<Item = &MultiIndex> {
        self.entries.keys()
    }

    /// Gram entries `(i, j, weight)` (with `i >= j`) feeding monomial `m`.
    pub fn entries(&self, m: &MultiIndex) -> &[(usize, usize, f64)] {
        self.entries.get(m).map_or(&[], Vec::as_slice)
    }

    pub fn apply(&self, q: &Mat<f64>) -> Poly {
        Poly::from_terms(
            self.nvars,
            self.entries
                .iter()
                .map(|(m, e)| (m.clone(), e.iter().map(|&(i, j, w)| w * q[(i, j)]).sum())),
        )
    }
}

/// Coefficient of `x^m` in `b' Q b` receives `Q[a, b]` for every pair with
/// `b_a * b_b = x^m`; the two triangles of an off-diagonal pair are merged
/// into one entry of weight 2.
pub fn gram_to_poly_map(b: &Basis) -> GramMap {
    let mut entries: BTreeMap<MultiIndex, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for i in 0..b.len() {
        for j in 0..=i {
            let w = if i == j { 1.0 } else { 2.0 };
            entries.entry(b.get(i).add(b.get(j))).or_default().push((i, j, w));
        }
    }
    GramMap {
        nvars: b.nvars(),
        entries,
    }
}

/// The unknown polynomial multiplying a known factor on the right-hand side of
/// an identity.
#[derive(Clone, Debug)]
pub enum MultiplierKind {
    Sos(GramBlock),
    /// Sign-free polynomial whose coefficient on `basis[j]` is `Var::Free(first + j)`.
    Free {
        first: usize,
        basis: Basis,
    },
}

#[derive(Clone, Debug)]
pub struct Multiplier {
    pub name: String,
    pub kind: MultiplierKind,
    pub factor: Poly,
}

impl Multiplier {
    pub fn basis(&self) -> &Basis {
        match &self.kind {
            MultiplierKind::Sos(g) => g.basis(),
            MultiplierKind::Free { basis, .. } => basis,
        }
    }

    /// Degree of `multiplier * factor` at the largest admissible multiplier.
    pub fn product_degree(&self) -> u32 {
        let own = match &self.kind {
            MultiplierKind::Sos(g) => 2 * g.basis().maxdeg(),
            MultiplierKind::Free { basis, .. } => basis.maxdeg(),
        };
        own + self.factor.degree()
    }

    /// Terms `(var, coef)` contributed to each monomial of `multiplier * factor`.
    fn contributions(&self) -> BTreeMap<MultiIndex, Vec<(Var, f64)>> {
        let mut out: BTreeMap<MultiIndex, Vec<(Var, f64)>> = BTreeMap::new();
        match &self.kind {
            MultiplierKind::Sos(g) => {
                let map = gram_to_poly_map(g.basis());
                for m in map.monomials() {
                    for &(i, j, w) in map.entries(m) {
                        for (gm, gc) in self.factor.terms() {
                            out.entry(m.add(gm))
                                .or_default()
                                .push((Var::psd(g.block(), i, j), w * gc));
                        }
                    }
                }
            }
            MultiplierKind::Free { first, basis } => {
                for (j, m) in basis.iter().enumerate() {
                    for (gm, gc) in self.factor.terms() {
                        out.entry(m.add(gm)).or_default().push((Var::Free(first + j), gc));
                    }
                }
            }
        }
        out
    }

    /// The multiplier polynomial for given variable values.
    pub fn value(&self, x_free: &[f64], x_psd: &[Mat<f64>]) -> Poly {
        match &self.kind {
            MultiplierKind::Sos(g) => g.poly(&x_psd[g.block()]),
            MultiplierKind::Free { first, basis } => {
                Poly::from_basis_coeffs(basis, &x_free[*first..*first + basis.len()])
            }
        }
    }
}

/// Polynomial that depends affinely on scalar decision variables:
/// `constant + sum_j var_j * poly_j`.
#[derive(Clone, Debug)]
pub struct LinearPoly {
    pub nvars: usize,
    pub terms: Vec<(Var, Poly)>,
    pub constant: Poly,
}

impl LinearPoly {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
            constant: Poly::zero(nvars),
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|(_, p)| p.degree())
            .chain(std::iter::once(self.constant.degree()))
            .max()
            .unwrap_or(0)
    }

    /// Evaluates the expression for the given variable values.
    pub fn value(&self, var: impl Fn(Var) -> f64) -> Poly {
        let mut acc: BTreeMap<MultiIndex, f64> = self.constant.terms().map(|(m, c)| (m.clone(), c)).collect();
        for (v, p) in &self.terms {
            let s = var(*v);
            for (m, c) in p.terms() {
                *acc.entry(m.clone()).or_insert(0.0) += s * c;
            }
        }
        Poly::from_terms(self.nvars, acc)
    }
}

/// One coefficient row: `sum(coef * var) = rhs` for the monomial `monomial`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffMatch {
    pub monomial: MultiIndex,
    pub terms: Vec<(Var, f64)>,
    pub rhs: f64,
}

/// Rows of `lhs = sum_i multiplier_i * factor_i`, one per monomial of degree up
/// to `max(budget, deg lhs)`, written as `lhs_vars - multiplier_vars = -lhs_const`.
///
/// A multiplier whose product with its factor can exceed `budget` is a layout
/// error.
pub fn match_identity(lhs: &LinearPoly, rhs: &[Multiplier], budget: u32) -> Result<Vec<CoeffMatch>> {
    for m in rhs {
        if m.factor.nvars() != lhs.nvars || m.basis().nvars() != lhs.nvars {
            return Err(RoaError::DimensionMismatch(format!(
                "multiplier `{}` does not live in the identity's {} variables",
                m.name, lhs.nvars
            )));
        }
        if m.product_degree() > budget {
            return Err(RoaError::DegreeBudget(format!(
                "multiplier `{}` reaches degree {} above the identity budget {budget}",
                m.name,
                m.product_degree()
            )));
        }
    }
    let top = budget.max(lhs.degree());
    let monos = basis(lhs.nvars, top);
    let mut rows: Vec<BTreeMap<Var, f64>> = vec![BTreeMap::new(); monos.len()];
    let mut rhs_vals = vec![0.0; monos.len()];
    for (v, p) in &lhs.terms {
        for (m, c) in p.terms() {
            let i = monos.position(m).expect("monomial within top degree");
            *rows[i].entry(*v).or_insert(0.0) += c;
        }
    }
    for (m, c) in lhs.constant.terms() {
        rhs_vals[monos.position(m).expect("monomial within top degree")] -= c;
    }
    for mult in rhs {
        for (m, contrib) in mult.contributions() {
            let i = monos.position(&m).expect("product within budget");
            for (v, c) in contrib {
                *rows[i].entry(v).or_insert(0.0) -= c;
            }
        }
    }
    Ok(monos
        .iter()
        .zip(rows)
        .zip(rhs_vals)
        .map(|((m, terms), rhs)| CoeffMatch {
            monomial: m.clone(),
            terms: terms.into_iter().filter(|(_, c)| *c != 0.0).collect(),
            rhs,
        })
        .collect())
}

/// `t (T - t)` on time-state space with `n` states.
pub fn time_weight(n: usize, horizon: f64) -> Poly {
    let t = Poly::var(n + 1, 0);
    t.scale(horizon).sub(&t.mul(&t))
}
