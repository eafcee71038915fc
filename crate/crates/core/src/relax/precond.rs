//! Change of polynomial basis for the SOS and moment programs.
//!
//! Gram blocks and coefficient-matching rows are assembled in monomials, which
//! are badly conditioned at high degree. Here every Gram block is re-expressed
//! in tensor Chebyshev polynomials scaled to the bounding box of the data
//! (`X = B' Q B`), and every identity's rows are recombined so that they match
//! Chebyshev rather than monomial coefficients. Free variables (`v`, `w`,
//! sign-free multipliers) and the feasible set are unchanged.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, Constraint, Var};
use crate::error::{Result, RoaError};
use crate::poly::{Basis, MultiIndex, Poly};
use crate::solver::Solution;
use crate::sos::MultiplierKind;

use super::layout::Layout;

/// Polynomial basis in which the SOS program is posed to the solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolyBasis {
    Monomial,
    #[default]
    Chebyshev,
}

/// Monomial coefficients of `T_k(a x + b)`, lowest power first.
fn chebyshev_affine(k: u32, a: f64, b: f64) -> Vec<f64> {
    // T_0 = 1, T_1 = u, T_{j+1} = 2 u T_j - T_{j-1}, with u = a x + b
    let mut prev = vec![1.0];
    if k == 0 {
        return prev;
    }
    let mut cur = vec![b, a];
    for _ in 1..k {
        let mut next = vec![0.0; cur.len() + 1];
        for (i, c) in cur.iter().enumerate() {
            next[i] += 2.0 * b * c;
            next[i + 1] += 2.0 * a * c;
        }
        for (i, c) in prev.iter().enumerate() {
            next[i] -= c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Matrix `B` with `cheb_a(x) = sum_g B[a, g] m_g(x)` over `basis`, for
/// Chebyshev polynomials scaled to the box `[lo, hi]`.
fn change_matrix(basis: &Basis, lo: &[f64], hi: &[f64]) -> Result<Mat<f64>> {
    let n = basis.nvars();
    let affine: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a = 2.0 / (hi[i] - lo[i]);
            (a, -(hi[i] + lo[i]) / (hi[i] - lo[i]))
        })
        .collect();
    let mut b = Mat::<f64>::zeros(basis.len(), basis.len());
    for (r, alpha) in basis.iter().enumerate() {
        let mut p = Poly::constant(n, 1.0);
        for (i, &e) in alpha.exps().iter().enumerate() {
            if e == 0 {
                continue;
            }
            let (a, c) = affine[i];
            let terms = chebyshev_affine(e, a, c).into_iter().enumerate().map(|(k, v)| {
                let mut exps = vec![0; n];
                exps[i] = k as u32;
                (MultiIndex::new(exps), v)
            });
            p = p.mul(&Poly::from_terms(n, terms));
        }
        for (m, c) in p.terms() {
            let col = basis
                .position(m)
                .ok_or_else(|| RoaError::InvalidInput("basis is not closed under lowering exponents".into()))?;
            b[(r, col)] = c;
        }
    }
    Ok(b)
}

/// Scaled Chebyshev bases over `[0, T] x box` (time-state) or `box` (state).
pub(super) struct ChebyshevBoxes {
    n: usize,
    lo_tx: Vec<f64>,
    hi_tx: Vec<f64>,
    lo_x: Vec<f64>,
    hi_x: Vec<f64>,
}

impl ChebyshevBoxes {
    pub(super) fn new(layout: &Layout) -> Self {
        let n = layout.spec.n();
        let (lo_x, hi_x) = layout.spec.domain().bounding_box();
        let lo_tx = std::iter::once(0.0).chain(lo_x.iter().copied()).collect();
        let hi_tx = std::iter::once(layout.spec.horizon())
            .chain(hi_x.iter().copied())
            .collect();
        Self {
            n,
            lo_tx,
            hi_tx,
            lo_x,
            hi_x,
        }
    }

    /// `B` with `cheb_a = sum_g B[a, g] m_g` over `basis`.
    pub(super) fn change(&self, basis: &Basis) -> Result<Mat<f64>> {
        if basis.nvars() == self.n + 1 {
            change_matrix(basis, &self.lo_tx, &self.hi_tx)
        } else {
            change_matrix(basis, &self.lo_x, &self.hi_x)
        }
    }

    /// The Chebyshev polynomials indexed by `basis`, as polynomials.
    pub(super) fn polys(&self, basis: &Basis) -> Result<Vec<Poly>> {
        let b = self.change(basis)?;
        Ok((0..basis.len())
            .map(|r| {
                Poly::from_terms(
                    basis.nvars(),
                    basis.iter().enumerate().map(|(c, m)| (m.clone(), b[(r, c)])),
                )
            })
            .collect())
    }
}

/// Data needed to map a solution of the transformed program back.
#[derive(Clone, Debug)]
pub struct BasisChange {
    /// Per PSD block, `B` with `X_monomial = B' Q B`.
    blocks: Vec<Mat<f64>>,
    /// Per identity, its first row and the row recombination `R`.
    groups: Vec<(usize, Mat<f64>)>,
    /// Per polynomial among the free variables, its first column and `B`
    /// with `x_monomial = B' c`.
    columns: Vec<(usize, Mat<f64>)>,
}

fn block_matrix(order: usize, terms: &[(usize, usize, f64)]) -> Mat<f64> {
    let mut a = Mat::<f64>::zeros(order, order);
    for &(r, c, v) in terms {
        if r == c {
            a[(r, r)] += v;
        } else {
            a[(r, c)] += 0.5 * v;
            a[(c, r)] += 0.5 * v;
        }
    }
    a
}

fn block_terms(block: usize, a: &Mat<f64>, out: &mut Vec<(Var, f64)>) {
    let scale = a.norm_max();
    for c in 0..a.ncols() {
        for r in c..a.nrows() {
            let v = if r == c { a[(r, r)] } else { a[(r, c)] + a[(c, r)] };
            if v.abs() > 0.0 * scale {
                out.push((Var::psd(block, r, c), v));
            }
        }
    }
}

/// Transforms the SOS program of `layout` (as built by
/// [`super::dual_program`]) into the Chebyshev basis.
pub fn chebyshev_program(layout: &Layout, prog: &ConicProgram) -> Result<(ConicProgram, BasisChange)> {
    let boxes = ChebyshevBoxes::new(layout);

    let mut blocks: Vec<Option<Mat<f64>>> = vec![None; prog.psd_orders.len()];
    let mut groups = Vec::with_capacity(layout.identities.len());
    let mut columns = vec![
        (0, boxes.change(&layout.v_basis)?),
        (layout.v_basis.len(), boxes.change(&layout.w_basis)?),
    ];
    let mut first = 0;
    for id in &layout.identities {
        for m in &id.multipliers {
            match &m.kind {
                MultiplierKind::Sos(g) => {
                    blocks[g.block()] = Some(boxes.change(g.basis())?);
                }
                MultiplierKind::Free { first, basis } => {
                    columns.push((*first, boxes.change(basis)?));
                }
            }
        }
        let rows = id.row_basis();
        let b = boxes.change(&rows)?;
        // monomial coefficients p = B' q, so q = B^{-T} p
        let r = b
            .transpose()
            .partial_piv_lu()
            .solve(Mat::<f64>::identity(rows.len(), rows.len()));
        groups.push((first, r));
        first += rows.len();
    }
    if first != prog.rows.len() {
        return Err(RoaError::InvalidInput("program rows do not follow the layout".into()));
    }
    let blocks: Vec<Mat<f64>> = blocks
        .into_iter()
        .enumerate()
        .map(|(j, b)| b.unwrap_or_else(|| Mat::identity(prog.psd_orders[j], prog.psd_orders[j])))
        .collect();

    // owning column group of every free variable
    let mut owner = vec![None; prog.n_free];
    for (g, (start, b)) in columns.iter().enumerate() {
        for k in 0..b.nrows() {
            owner[start + k] = Some(g);
        }
    }

    // A_j -> B A_j B' for every row and block; a_g -> B a_g for free groups
    let transform = |terms: &[(Var, f64)]| -> Vec<(Var, f64)> {
        let mut scalars = Vec::new();
        let mut per_block: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();
        let mut per_group: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for &(v, c) in terms {
            match v {
                Var::Psd { block, row, col } => per_block.entry(block).or_default().push((row, col, c)),
                Var::Free(i) if owner[i].is_some() => {
                    let g = owner[i].unwrap();
                    let (start, b) = &columns[g];
                    per_group.entry(g).or_insert_with(|| vec![0.0; b.nrows()])[i - start] += c;
                }
                _ => scalars.push((v, c)),
            }
        }
        for (g, a) in per_group {
            let (start, b) = &columns[g];
            let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for r in 0..b.nrows() {
                let v: f64 = (0..b.ncols()).map(|k| b[(r, k)] * a[k]).sum();
                if v.abs() > 0.0 * scale {
                    scalars.push((Var::Free(start + r), v));
                }
            }
        }
        for (j, t) in per_block {
            let a = block_matrix(prog.psd_orders[j], &t);
            let a = &blocks[j] * a * blocks[j].transpose();
            block_terms(j, &a, &mut scalars);
        }
        scalars
    };
    let mapped: Vec<Constraint> = prog
        .rows
        .iter()
        .map(|r| Constraint {
            terms: transform(&r.terms),
            rhs: r.rhs,
        })
        .collect();

    let mut out = ConicProgram {
        rows: Vec::with_capacity(prog.rows.len()),
        objective: transform(&prog.objective),
        ..prog.clone()
    };
    for (start, r) in &groups {
        let len = r.nrows();
        for i in 0..len {
            let mut acc: std::collections::BTreeMap<Var, f64> = Default::default();
            let mut rhs = 0.0;
            let mut scale = 0.0f64;
            for k in 0..len {
                let w = r[(i, k)];
                if w == 0.0 {
                    continue;
                }
                let row = &mapped[start + k];
                rhs += w * row.rhs;
                for &(v, c) in &row.terms {
                    *acc.entry(v).or_insert(0.0) += w * c;
                    scale = scale.max((w * c).abs());
                }
            }
            let terms = acc.into_iter().filter(|(_, c)| c.abs() > 0.0 * scale).collect();
            out.rows.push(Constraint { terms, rhs });
        }
    }
    Ok((
        out,
        BasisChange {
            blocks,
            groups,
            columns,
        },
    ))
}

impl BasisChange {
    /// Maps a solution of the transformed program to the original one.
    pub fn recover(&self, mut sol: Solution) -> Solution {
        if !sol.x_free.is_empty() {
            for (start, b) in &self.columns {
                let c: Vec<f64> = sol.x_free[*start..start + b.nrows()].to_vec();
                for k in 0..b.ncols() {
                    sol.x_free[start + k] = (0..b.nrows()).map(|r| b[(r, k)] * c[r]).sum();
                }
            }
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if let Some(q) = sol.x_psd.get(j) {
                sol.x_psd[j] = b.transpose() * q * b;
            }
            if let Some(z) = sol.z_psd.get(j) {
                let lu = b.partial_piv_lu();
                let left = lu.solve(z);
                sol.z_psd[j] = lu.solve(left.transpose()).transpose().to_owned();
            }
        }
        if !sol.y.is_empty() {
            let mut y = vec![0.0; sol.y.len()];
            for (start, r) in &self.groups {
                let len = r.nrows();
                for k in 0..len {
                    y[start + k] = (0..len).map(|i| r[(i, k)] * sol.y[start + i]).sum();
                }
            }
            sol.y = y;
        }
        sol
    }
}
