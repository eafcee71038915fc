//! Dense infeasible-start primal-dual interior-point method.
//!
//! Internally every program is brought to the form
//!
//! ```text
//!   min  <C, X> + c_l . x_l + c_u . x_u
//!   s.t. A_s(X) + A_l x_l + A_u x_u = b,   X psd (blockwise), x_l >= 0, x_u free
//! ```
//!
//! with rows scaled to unit infinity norm. Search directions use the
//! Nesterov-Todd scaling `X = G D G'`, `Z = G^-T D G^-1` (D diagonal), and the
//! free variables are kept in a saddle-point system
//! `[M A_u; A_u' 0] [dy; dx_u] = [r; r_u]` rather than being split.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::{IterationLog, Residuals, Solution, SolveStatus, SolverOptions};
use crate::conic::{ConicProgram, Sense, Var};

struct Block {
    n: usize,
    /// Global rows touching this block.
    rows: Vec<usize>,
    /// Per touching row: lower-triangle entries `(a, b, v)` of the symmetric
    /// constraint matrix, `A[a, b] = A[b, a] = v`.
    entries: Vec<Vec<(usize, usize, f64)>>,
}

struct Scaled {
    m: usize,
    b: Vec<f64>,
    row_scale: Vec<f64>,
    /// Original row index for every kept row.
    kept: Vec<usize>,
    free_cols: Vec<Vec<(usize, f64)>>,
    lp_cols: Vec<Vec<(usize, f64)>>,
    blocks: Vec<Block>,
    c_free: Vec<f64>,
    c_lp: Vec<f64>,
    c_psd: Vec<Mat<f64>>,
    /// -1 when the original program maximizes.
    sign: f64,
}

#[derive(Clone)]
struct State {
    x: Vec<Mat<f64>>,
    z: Vec<Mat<f64>>,
    xl: Vec<f64>,
    zl: Vec<f64>,
    xu: Vec<f64>,
    y: Vec<f64>,
}

struct Nt {
    g: Mat<f64>,
    w: Mat<f64>,
    d: Vec<f64>,
}

struct Residual {
    rp: Vec<f64>,
    rd: Vec<Mat<f64>>,
    rdl: Vec<f64>,
    rdu: Vec<f64>,
}

struct Direction {
    dy: Vec<f64>,
    dxu: Vec<f64>,
    dx: Vec<Mat<f64>>,
    dz: Vec<Mat<f64>>,
    dxt: Vec<Mat<f64>>,
    dzt: Vec<Mat<f64>>,
    dxl: Vec<f64>,
    dzl: Vec<f64>,
    dxlt: Vec<f64>,
    dzlt: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn frob_dot(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

fn symmetrize(a: &mut Mat<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

impl Scaled {
    fn new(p: &ConicProgram) -> Result<Self, SolveStatus> {
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut kept = Vec::new();
        let mut row_scale = Vec::new();
        for (i, r) in p.rows.iter().enumerate() {
            let s = r.terms.iter().fold(0.0f64, |a, (_, c)| a.max(c.abs()));
            if s == 0.0 {
                if r.rhs != 0.0 {
                    return Err(SolveStatus::Infeasible);
                }
                continue;
            }
            kept.push(i);
            row_scale.push(s);
        }
        let m = kept.len();
        let mut free_cols = vec![Vec::new(); p.n_free];
        let mut lp_cols = vec![Vec::new(); p.n_nonneg];
        let mut per_block: Vec<Vec<(usize, usize, usize, f64)>> = vec![Vec::new(); p.psd_orders.len()];
        let mut b = Vec::with_capacity(m);
        for (k, &i) in kept.iter().enumerate() {
            let r = &p.rows[i];
            let s = row_scale[k];
            b.push(r.rhs / s);
            for &(v, c) in &r.terms {
                let c = c / s;
                match v {
                    Var::Free(j) => free_cols[j].push((k, c)),
                    Var::Nonneg(j) => lp_cols[j].push((k, c)),
                    Var::Psd { block, row, col } => {
                        let val = if row == col { c } else { 0.5 * c };
                        per_block[block].push((k, row, col, val));
                    }
                }
            }
        }
        for col in free_cols.iter_mut().chain(lp_cols.iter_mut()) {
            merge_sorted(col);
        }
        let blocks = per_block
            .into_iter()
            .zip(&p.psd_orders)
            .map(|(mut e, &n)| {
                e.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
                let mut rows = Vec::new();
                let mut entries: Vec<Vec<(usize, usize, f64)>> = Vec::new();
                for (k, a, bb, v) in e {
                    if rows.last() != Some(&k) {
                        rows.push(k);
                        entries.push(Vec::new());
                    }
                    let list = entries.last_mut().unwrap();
                    match list.last_mut() {
                        Some(last) if last.0 == a && last.1 == bb => last.2 += v,
                        _ => list.push((a, bb, v)),
                    }
                }
                Block { n, rows, entries }
            })
            .collect();

        let mut c_free = vec![0.0; p.n_free];
        let mut c_lp = vec![0.0; p.n_nonneg];
        let mut c_psd: Vec<Mat<f64>> = p.psd_orders.iter().map(|&n| Mat::zeros(n, n)).collect();
        for &(v, c) in &p.objective {
            let c = sign * c;
            match v {
                Var::Free(j) => c_free[j] += c,
                Var::Nonneg(j) => c_lp[j] += c,
                Var::Psd { block, row, col } => {
                    if row == col {
                        c_psd[block][(row, row)] += c;
                    } else {
                        c_psd[block][(row, col)] += 0.5 * c;
                        c_psd[block][(col, row)] += 0.5 * c;
                    }
                }
            }
        }
        Ok(Self {
            m,
            b,
            row_scale,
            kept,
            free_cols,
            lp_cols,
            blocks,
            c_free,
            c_lp,
            c_psd,
            sign,
        })
    }

    fn nu(&self) -> f64 {
        (self.blocks.iter().map(|b| b.n).sum::<usize>() + self.lp_cols.len()) as f64
    }

    fn apply_block(&self, j: usize, x: &Mat<f64>, out: &mut [f64]) {
        let blk = &self.blocks[j];
        for (r, ent) in blk.rows.iter().zip(&blk.entries) {
            let mut s = 0.0;
            for &(a, b, v) in ent {
                s += if a == b {
                    v * x[(a, a)]
                } else {
                    v * (x[(a, b)] + x[(b, a)])
                };
            }
            out[*r] += s;
        }
    }

    fn adjoint_block(&self, j: usize, y: &[f64]) -> Mat<f64> {
        let blk = &self.blocks[j];
        let mut out = Mat::zeros(blk.n, blk.n);
        for (r, ent) in blk.rows.iter().zip(&blk.entries) {
            let yr = y[*r];
            if yr == 0.0 {
                continue;
            }
            for &(a, b, v) in ent {
                out[(a, b)] += yr * v;
                if a != b {
                    out[(b, a)] += yr * v;
                }
            }
        }
        out
    }

    fn apply_cols(cols: &[Vec<(usize, f64)>], x: &[f64], out: &mut [f64]) {
        for (col, &xv) in cols.iter().zip(x) {
            for &(r, c) in col {
                out[r] += c * xv;
            }
        }
    }

    fn adjoint_cols(cols: &[Vec<(usize, f64)>], y: &[f64]) -> Vec<f64> {
        cols.iter()
            .map(|col| col.iter().map(|&(r, c)| c * y[r]).sum())
            .collect()
    }

    fn residual(&self, s: &State) -> Residual {
        let mut ax = vec![0.0; self.m];
        for (j, x) in s.x.iter().enumerate() {
            self.apply_block(j, x, &mut ax);
        }
        Self::apply_cols(&self.lp_cols, &s.xl, &mut ax);
        Self::apply_cols(&self.free_cols, &s.xu, &mut ax);
        let rp = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rd = (0..self.blocks.len())
            .map(|j| {
                let aty = self.adjoint_block(j, &s.y);
                &self.c_psd[j] - &s.z[j] - aty
            })
            .collect();
        let atl = Self::adjoint_cols(&self.lp_cols, &s.y);
        let rdl = (0..self.c_lp.len()).map(|i| self.c_lp[i] - s.zl[i] - atl[i]).collect();
        let atu = Self::adjoint_cols(&self.free_cols, &s.y);
        let rdu = self.c_free.iter().zip(&atu).map(|(c, a)| c - a).collect();
        Residual { rp, rd, rdl, rdu }
    }

    fn pobj(&self, s: &State) -> f64 {
        s.x.iter().zip(&self.c_psd).map(|(x, c)| frob_dot(x, c)).sum::<f64>()
            + dot(&self.c_lp, &s.xl)
            + dot(&self.c_free, &s.xu)
    }

    fn c_norm(&self) -> f64 {
        (self.c_psd.iter().map(|c| frob_dot(c, c)).sum::<f64>()
            + dot(&self.c_lp, &self.c_lp)
            + dot(&self.c_free, &self.c_free))
        .sqrt()
    }

    /// Schur complement `M[i, k] = sum_j <A_ij, W_j A_kj W_j> + LP terms`.
    fn schur(&self, nt: &[Nt], s: &State) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.m, self.m);
        let mut p = Vec::new();
        for (blk, sc) in self.blocks.iter().zip(nt) {
            let n = blk.n;
            let w = &sc.w;
            p.resize(n * n, 0.0);
            for (pi, ent_i) in blk.entries.iter().enumerate() {
                p.iter_mut().for_each(|v| *v = 0.0);
                // P = W A_i W as a sum of rank-one / rank-two updates
                for &(a, b, v) in ent_i {
                    if a == b {
                        for c in 0..n {
                            let s = v * w[(a, c)];
                            if s == 0.0 {
                                continue;
                            }
                            let col = &mut p[c * n..(c + 1) * n];
                            for (r, pr) in col.iter_mut().enumerate() {
                                *pr += s * w[(r, a)];
                            }
                        }
                    } else {
                        for c in 0..n {
                            let sa = v * w[(b, c)];
                            let sb = v * w[(a, c)];
                            let col = &mut p[c * n..(c + 1) * n];
                            for (r, pr) in col.iter_mut().enumerate() {
                                *pr += sa * w[(r, a)] + sb * w[(r, b)];
                            }
                        }
                    }
                }
                let ri = blk.rows[pi];
                for qi in pi..blk.rows.len() {
                    let mut val = 0.0;
                    for &(a, b, v) in &blk.entries[qi] {
                        val += if a == b {
                            v * p[a * n + a]
                        } else {
                            v * (p[b * n + a] + p[a * n + b])
                        };
                    }
                    let rk = blk.rows[qi];
                    m[(ri, rk)] += val;
                    if ri != rk {
                        m[(rk, ri)] += val;
                    }
                }
            }
        }
        for (col, (x, z)) in self.lp_cols.iter().zip(s.xl.iter().zip(&s.zl)) {
            let h = x / z;
            for &(r1, c1) in col {
                for &(r2, c2) in col {
                    m[(r1, r2)] += h * c1 * c2;
                }
            }
        }
        m
    }
}

fn merge_sorted(col: &mut Vec<(usize, f64)>) {
    col.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(col.len());
    for &(r, c) in col.iter() {
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 += c,
            _ => out.push((r, c)),
        }
    }
    *col = out;
}

/// Some `L` with `X = L L'`: Cholesky when it succeeds, otherwise a clipped
/// symmetric square root.
fn sym_factor(x: &Mat<f64>) -> Option<Mat<f64>> {
    if let Ok(llt) = x.llt(Side::Lower) {
        return Some(llt.L().to_owned());
    }
    let evd = x.self_adjoint_eigen(Side::Lower).ok()?;
    let ev: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let top = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(top > 0.0) {
        return None;
    }
    let floor = top * 1e-300f64.max(f64::EPSILON * f64::EPSILON);
    let u = evd.U();
    let n = x.nrows();
    Some(Mat::from_fn(n, n, |i, j| u[(i, j)] * ev[j].max(floor).sqrt()))
}

fn nt_scaling(x: &Mat<f64>, z: &Mat<f64>) -> Option<Nt> {
    let lx = sym_factor(x)?;
    let lz = sym_factor(z)?;
    let prod = lz.transpose() * &lx;
    let svd = prod.svd().ok()?;
    let d: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let n = x.nrows();
    let v = svd.V();
    let vs = Mat::from_fn(n, n, |i, j| v[(i, j)] / d[j].sqrt());
    let g = &lx * &vs;
    let mut w = &g * g.transpose();
    symmetrize(&mut w);
    Some(Nt { g, w, d })
}

/// Largest `a` with `I + a * D^-1/2 dt D^-1/2` psd.
fn max_step_psd(d: &[f64], dt: &Mat<f64>) -> f64 {
    let n = d.len();
    let s = Mat::from_fn(n, n, |i, j| dt[(i, j)] / (d[i] * d[j]).sqrt());
    match s.self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => {
            let lo = ev[0];
            if lo < 0.0 {
                -1.0 / lo
            } else {
                f64::INFINITY
            }
        }
        Err(_) => 0.0,
    }
}

fn max_step_lp(d: &[f64], dt: &[f64]) -> f64 {
    d.iter()
        .zip(dt)
        .filter(|(_, t)| **t < 0.0)
        .map(|(d, t)| -d / t)
        .fold(f64::INFINITY, f64::min)
}

impl Scaled {
    fn dual_residual_norm(&self, res: &Residual) -> f64 {
        (res.rd.iter().map(|r| frob_dot(r, r)).sum::<f64>() + dot(&res.rdl, &res.rdl) + dot(&res.rdu, &res.rdu)).sqrt()
    }

    fn metrics(&self, st: &State, res: &Residual, b_norm: f64, c_norm: f64) -> Metrics {
        let pobj = self.pobj(st);
        let dobj = dot(&self.b, &st.y);
        Metrics {
            pobj,
            dobj,
            res: Residuals {
                primal: norm(&res.rp) / (1.0 + b_norm),
                dual: self.dual_residual_norm(res) / (1.0 + c_norm),
                gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            },
        }
    }
}

/// Orthogonal split of the row space by the free columns:
/// `A_u = Q1 R`, `Z` spans the complement (`Z' A_u = 0`).
struct FreeElim {
    q1: Mat<f64>,
    z: Mat<f64>,
    r: Mat<f64>,
}

impl FreeElim {
    /// `None` when there are no free columns or they are (nearly) dependent.
    fn new(sp: &Scaled) -> Option<Self> {
        let m = sp.m;
        let nu = sp.free_cols.len();
        if nu == 0 || nu >= m {
            return None;
        }
        let mut au = Mat::<f64>::zeros(m, nu);
        for (c, col) in sp.free_cols.iter().enumerate() {
            for &(r, v) in col {
                au[(r, c)] = v;
            }
        }
        let qr = au.qr();
        let r = qr.thin_R().to_owned();
        let top = (0..nu).fold(0.0f64, |a, i| a.max(r[(i, i)].abs()));
        if (0..nu).any(|i| !(r[(i, i)].abs() > 1e-12 * top)) {
            return None;
        }
        let q = qr.compute_Q();
        let q1 = q.subcols(0, nu).to_owned();
        let z = q.subcols(nu, m - nu).to_owned();
        Some(Self { q1, z, r })
    }

    /// Solves `R' s = b`.
    fn solve_rt(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut s = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for k in 0..i {
                acc -= self.r[(k, i)] * s[k];
            }
            s[i] = acc / self.r[(i, i)];
        }
        s
    }

    /// Solves `R s = b`.
    fn solve_r(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut s = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..n {
                acc -= self.r[(i, k)] * s[k];
            }
            s[i] = acc / self.r[(i, i)];
        }
        s
    }
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

enum Reduced {
    Llt(faer::linalg::solvers::Llt<f64>),
    Lu(faer::linalg::solvers::PartialPivLu<f64>),
}

impl Reduced {
    fn new(mat: &Mat<f64>) -> Self {
        match mat.llt(Side::Lower) {
            Ok(llt) => Reduced::Llt(llt),
            Err(_) => Reduced::Lu(mat.partial_piv_lu()),
        }
    }

    fn solve(&self, b: &Mat<f64>) -> Mat<f64> {
        match self {
            Reduced::Llt(f) => f.solve(b),
            Reduced::Lu(f) => f.solve(b),
        }
    }
}

/// Solver for the Newton system `[M A_u; A_u' 0] [dy; dx_u] = [r_y; r_u]`.
enum Kkt<'a> {
    /// Free variables eliminated through the null space of `A_u'`, leaving
    /// the symmetric positive definite `Z' M Z`.
    NullSpace {
        elim: &'a FreeElim,
        schur: Mat<f64>,
        reduced: Reduced,
    },
    /// Direct LU of the saddle-point matrix.
    Saddle {
        mat: Mat<f64>,
        lu: faer::linalg::solvers::PartialPivLu<f64>,
    },
}

impl<'a> Kkt<'a> {
    fn new(sp: &Scaled, elim: Option<&'a FreeElim>, schur: Mat<f64>) -> Self {
        let m = sp.m;
        let nu = sp.free_cols.len();
        if let Some(elim) = elim {
            let mz = &schur * &elim.z;
            let mut red = elim.z.transpose() * &mz;
            symmetrize(&mut red);
            let reduced = Reduced::new(&red);
            return Kkt::NullSpace { elim, schur, reduced };
        }
        if nu == 0 {
            let reduced = schur.partial_piv_lu();
            return Kkt::Saddle {
                mat: schur,
                lu: reduced,
            };
        }
        let mut k = Mat::<f64>::zeros(m + nu, m + nu);
        let diag_max = (0..m).fold(0.0f64, |a, i| a.max(schur[(i, i)].abs()));
        let reg = 1e-14 * diag_max.max(1.0);
        for j in 0..m {
            for i in 0..m {
                k[(i, j)] = schur[(i, j)];
            }
            k[(j, j)] += reg;
        }
        for (c, col) in sp.free_cols.iter().enumerate() {
            for &(r, v) in col {
                k[(r, m + c)] = v;
                k[(m + c, r)] = v;
            }
            k[(m + c, m + c)] = -1e-14;
        }
        let lu = k.partial_piv_lu();
        Kkt::Saddle { mat: k, lu }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            Kkt::NullSpace { elim, schur, reduced } => {
                let m = schur.nrows();
                let (ry, ru) = rhs.split_at(m);
                let dy_p = &elim.q1 * col(&elim.solve_rt(ru));
                let t = col(ry) - schur * &dy_p;
                let eta = reduced.solve(&(elim.z.transpose() * &t));
                let dy = dy_p + &elim.z * eta;
                let rest = col(ry) - schur * &dy;
                let dxu = elim.solve_r(&to_vec(&(elim.q1.transpose() * rest)));
                let mut out = to_vec(&dy);
                out.extend(dxu);
                out
            }
            Kkt::Saddle { mat, lu } => {
                let b = col(rhs);
                let mut x = lu.solve(&b);
                let r = &b - mat * &x;
                x += lu.solve(&r);
                to_vec(&x)
            }
        }
    }
}

impl Scaled {
    /// Newton direction for the scaled complementarity right-hand sides
    /// `rt` (PSD) and `rtl` (LP).
    fn direction(&self, st: &State, nt: &[Nt], kkt: &Kkt, res: &Residual, rt: &[Mat<f64>], rtl: &[f64]) -> Direction {
        let m = self.m;
        let mut rhs = res.rp.clone();
        let mut st_mats = Vec::with_capacity(self.blocks.len());
        for (j, sc) in nt.iter().enumerate() {
            let n = sc.d.len();
            let stil = Mat::from_fn(n, n, |a, b| 2.0 * rt[j][(a, b)] / (sc.d[a] + sc.d[b]));
            let t = &sc.g * &stil * sc.g.transpose() - &sc.w * &res.rd[j] * &sc.w;
            let mut neg = vec![0.0; m];
            self.apply_block(j, &t, &mut neg);
            rhs.iter_mut().zip(&neg).for_each(|(r, v)| *r -= v);
            st_mats.push(stil);
        }
        let gl: Vec<f64> = st.xl.iter().zip(&st.zl).map(|(x, z)| (x / z).sqrt()).collect();
        let dl: Vec<f64> = st.xl.iter().zip(&st.zl).map(|(x, z)| (x * z).sqrt()).collect();
        let stl: Vec<f64> = rtl.iter().zip(&dl).map(|(r, d)| r / d).collect();
        let tl: Vec<f64> = (0..gl.len())
            .map(|i| gl[i] * stl[i] - gl[i] * gl[i] * res.rdl[i])
            .collect();
        let mut neg = vec![0.0; m];
        Self::apply_cols(&self.lp_cols, &tl, &mut neg);
        rhs.iter_mut().zip(&neg).for_each(|(r, v)| *r -= v);
        rhs.extend_from_slice(&res.rdu);

        let mut sol = kkt.solve(&rhs);
        let mut dir = self.complete(nt, res, &st_mats, &gl, &stl, &sol);
        // Refine against the exact operator: the assembled Schur complement
        // loses accuracy as the iterates approach the boundary of the cone.
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut err = self.newton_residual(res, &dir);
        let mut err_norm = err.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..4 {
            if err_norm <= 1e-14 * scale {
                break;
            }
            let corr = kkt.solve(&err);
            let trial_sol: Vec<f64> = sol.iter().zip(&corr).map(|(a, b)| a + b).collect();
            let trial = self.complete(nt, res, &st_mats, &gl, &stl, &trial_sol);
            let trial_err = self.newton_residual(res, &trial);
            let trial_norm = trial_err.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if !(trial_norm < 0.5 * err_norm) {
                break;
            }
            sol = trial_sol;
            dir = trial;
            err = trial_err;
            err_norm = trial_norm;
        }
        log::trace!("newton residual {:.2e} (rhs scale {:.2e})", err_norm, scale);
        dir
    }

    /// Residual of the linearized equality constraints at a direction:
    /// `(rp - A dX - A_l dx_l - A_u dx_u, rd_u - A_u' dy)`.
    fn newton_residual(&self, res: &Residual, dir: &Direction) -> Vec<f64> {
        let mut ax = vec![0.0; self.m];
        for (j, dx) in dir.dx.iter().enumerate() {
            self.apply_block(j, dx, &mut ax);
        }
        Self::apply_cols(&self.lp_cols, &dir.dxl, &mut ax);
        Self::apply_cols(&self.free_cols, &dir.dxu, &mut ax);
        let mut out: Vec<f64> = res.rp.iter().zip(&ax).map(|(r, a)| r - a).collect();
        let atu = Self::adjoint_cols(&self.free_cols, &dir.dy);
        out.extend(res.rdu.iter().zip(&atu).map(|(r, a)| r - a));
        out
    }

    /// Recovers the full direction from the solution `(dy, dx_u)` of the
    /// reduced system.
    fn complete(
        &self,
        nt: &[Nt],
        res: &Residual,
        st_mats: &[Mat<f64>],
        gl: &[f64],
        stl: &[f64],
        sol: &[f64],
    ) -> Direction {
        let m = self.m;
        let dy = sol[..m].to_vec();
        let dxu = sol[m..].to_vec();

        let mut dx = Vec::new();
        let mut dz = Vec::new();
        let mut dxt = Vec::new();
        let mut dzt = Vec::new();
        for (j, sc) in nt.iter().enumerate() {
            let dzj = &res.rd[j] - self.adjoint_block(j, &dy);
            let mut dztj = sc.g.transpose() * &dzj * &sc.g;
            symmetrize(&mut dztj);
            let mut dxtj = &st_mats[j] - &dztj;
            symmetrize(&mut dxtj);
            let mut dxj = &sc.g * &dxtj * sc.g.transpose();
            symmetrize(&mut dxj);
            dx.push(dxj);
            dz.push(dzj);
            dxt.push(dxtj);
            dzt.push(dztj);
        }
        let atl = Self::adjoint_cols(&self.lp_cols, &dy);
        let dzl: Vec<f64> = (0..gl.len()).map(|i| res.rdl[i] - atl[i]).collect();
        let dzlt: Vec<f64> = (0..gl.len()).map(|i| gl[i] * dzl[i]).collect();
        let dxlt: Vec<f64> = (0..gl.len()).map(|i| stl[i] - dzlt[i]).collect();
        let dxl: Vec<f64> = (0..gl.len()).map(|i| gl[i] * dxlt[i]).collect();
        Direction {
            dy,
            dxu,
            dx,
            dz,
            dxt,
            dzt,
            dxl,
            dzl,
            dxlt,
            dzlt,
        }
    }

    fn step_lengths(&self, nt: &[Nt], dl: &[f64], dir: &Direction) -> (f64, f64) {
        let mut ap = max_step_lp(dl, &dir.dxlt);
        let mut ad = max_step_lp(dl, &dir.dzlt);
        for (j, sc) in nt.iter().enumerate() {
            ap = ap.min(max_step_psd(&sc.d, &dir.dxt[j]));
            ad = ad.min(max_step_psd(&sc.d, &dir.dzt[j]));
        }
        (ap, ad)
    }
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    res: Residuals,
}

impl Metrics {
    fn worst(&self) -> f64 {
        self.res.gap.max(self.res.primal).max(self.res.dual)
    }
}

pub(super) fn solve(p: &ConicProgram, opts: &SolverOptions) -> Solution {
    faer::set_global_parallelism(faer::Par::Seq);
    let sp = match Scaled::new(p) {
        Ok(sp) => sp,
        Err(status) => return empty_solution(p, status),
    };
    let nb = sp.blocks.len();
    let b_norm = norm(&sp.b);
    let c_norm = sp.c_norm();

    // starting point in the spirit of SDPT3's infeasible start
    let mut st = {
        let x = sp
            .blocks
            .iter()
            .enumerate()
            .map(|(j, blk)| {
                let n = blk.n as f64;
                let mut xi = 10.0f64.max(n.sqrt());
                let mut eta = 10.0f64.max(n.sqrt()).max(frob_dot(&sp.c_psd[j], &sp.c_psd[j]).sqrt());
                for (r, ent) in blk.rows.iter().zip(&blk.entries) {
                    let an = ent
                        .iter()
                        .map(|&(a, b, v)| if a == b { v * v } else { 2.0 * v * v })
                        .sum::<f64>()
                        .sqrt();
                    xi = xi.max(n * (1.0 + sp.b[*r].abs()) / (1.0 + an));
                    eta = eta.max(an);
                }
                (xi, eta)
            })
            .collect::<Vec<_>>();
        let lp_xi = 10.0f64.max(b_norm);
        let lp_eta = 10.0f64.max(c_norm);
        State {
            x: sp
                .blocks
                .iter()
                .zip(&x)
                .map(|(blk, (xi, _))| Mat::from_fn(blk.n, blk.n, |i, k| if i == k { *xi } else { 0.0 }))
                .collect(),
            z: sp
                .blocks
                .iter()
                .zip(&x)
                .map(|(blk, (_, eta))| Mat::from_fn(blk.n, blk.n, |i, k| if i == k { *eta } else { 0.0 }))
                .collect(),
            xl: vec![lp_xi; sp.lp_cols.len()],
            zl: vec![lp_eta; sp.lp_cols.len()],
            xu: vec![0.0; sp.free_cols.len()],
            y: vec![0.0; sp.m],
        }
    };

    let nu = sp.nu().max(1.0);
    let elim = FreeElim::new(&sp);
    let mut trace = Vec::new();
    let mut best: Option<(State, Metrics)> = None;
    let mut status = SolveStatus::NumericalFailure;
    let mut stall = 0usize;
    let mut iterations = 0;

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let res = sp.residual(&st);
        let metrics = sp.metrics(&st, &res, b_norm, c_norm);
        let (pobj, dobj) = (metrics.pobj, metrics.dobj);
        let rd_norm = sp.dual_residual_norm(&res);
        let mu = (st.x.iter().zip(&st.z).map(|(x, z)| frob_dot(x, z)).sum::<f64>() + dot(&st.xl, &st.zl)) / nu;
        if !(metrics.worst().is_finite() && mu.is_finite()) {
            break;
        }
        log::debug!(
            "ipm {iter:3} pobj {pobj:+.9e} dobj {dobj:+.9e} pinf {:.1e} dinf {:.1e} gap {:.1e} mu {mu:.1e}",
            metrics.res.primal,
            metrics.res.dual,
            metrics.res.gap
        );
        if best.as_ref().is_none_or(|(_, b)| metrics.worst() < b.worst()) {
            best = Some((st.clone(), Metrics { ..metrics }));
            stall = 0;
        } else {
            stall += 1;
        }
        if metrics.res.gap <= opts.gap_tol && metrics.res.primal <= opts.feas_tol && metrics.res.dual <= opts.feas_tol {
            status = SolveStatus::Optimal;
            break;
        }
        // divergence of one side signals infeasibility of the other
        let y_norm = norm(&st.y);
        if dobj > 1e10 * (1.0 + c_norm) && dobj > 1e6 * (1.0 + rd_norm) * (1.0 + y_norm).sqrt().min(1e3) {
            status = SolveStatus::Infeasible;
            best = Some((st.clone(), metrics));
            break;
        }
        if -pobj > 1e10 * (1.0 + b_norm) {
            status = SolveStatus::Unbounded;
            best = Some((st.clone(), metrics));
            break;
        }
        if iter == opts.max_iter || stall > 20 {
            break;
        }

        let Some(nt) =
            st.x.iter()
                .zip(&st.z)
                .map(|(x, z)| nt_scaling(x, z))
                .collect::<Option<Vec<_>>>()
        else {
            break;
        };
        let dl: Vec<f64> = st.xl.iter().zip(&st.zl).map(|(x, z)| (x * z).sqrt()).collect();
        let kkt = Kkt::new(&sp, elim.as_ref(), sp.schur(&nt, &st));

        // predictor
        let rt: Vec<Mat<f64>> = nt
            .iter()
            .map(|sc| {
                Mat::from_fn(
                    sc.d.len(),
                    sc.d.len(),
                    |a, b| if a == b { -sc.d[a] * sc.d[a] } else { 0.0 },
                )
            })
            .collect();
        let rtl: Vec<f64> = dl.iter().map(|d| -d * d).collect();
        let pred = sp.direction(&st, &nt, &kkt, &res, &rt, &rtl);
        let (ap, ad) = sp.step_lengths(&nt, &dl, &pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for (j, sc) in nt.iter().enumerate() {
            let n = sc.d.len();
            for a in 0..n {
                for b in 0..n {
                    let xa = if a == b { sc.d[a] } else { 0.0 } + ap * pred.dxt[j][(a, b)];
                    let za = if a == b { sc.d[a] } else { 0.0 } + ad * pred.dzt[j][(a, b)];
                    mu_aff += xa * za;
                }
            }
        }
        for i in 0..dl.len() {
            mu_aff += (dl[i] + ap * pred.dxlt[i]) * (dl[i] + ad * pred.dzlt[i]);
        }
        mu_aff /= nu;
        let expon = 1.0f64.max(3.0 * ap.min(ad).powi(2));
        let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

        // corrector
        let rt: Vec<Mat<f64>> = nt
            .iter()
            .enumerate()
            .map(|(j, sc)| {
                let n = sc.d.len();
                let prod = &pred.dxt[j] * &pred.dzt[j];
                Mat::from_fn(n, n, |a, b| {
                    let diag = if a == b { sigma * mu - sc.d[a] * sc.d[a] } else { 0.0 };
                    diag - 0.5 * (prod[(a, b)] + prod[(b, a)])
                })
            })
            .collect();
        let rtl: Vec<f64> = (0..dl.len())
            .map(|i| sigma * mu - dl[i] * dl[i] - pred.dxlt[i] * pred.dzlt[i])
            .collect();
        let dir = sp.direction(&st, &nt, &kkt, &res, &rt, &rtl);
        let (mp, md) = sp.step_lengths(&nt, &dl, &dir);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * mp).min(1.0);
        let ad = (gamma * md).min(1.0);
        if opts.trace {
            trace.push(IterationLog {
                iter,
                primal_obj: sp.sign * pobj,
                dual_obj: sp.sign * dobj,
                residuals: metrics.res,
                mu,
                step_primal: ap,
                step_dual: ad,
            });
        }
        if ap < 1e-10 && ad < 1e-10 {
            break;
        }

        for j in 0..nb {
            st.x[j] += &dir.dx[j] * faer::Scale(ap);
            st.z[j] += &dir.dz[j] * faer::Scale(ad);
            symmetrize(&mut st.x[j]);
            symmetrize(&mut st.z[j]);
        }
        for i in 0..st.xl.len() {
            st.xl[i] += ap * dir.dxl[i];
            st.zl[i] += ad * dir.dzl[i];
        }
        for i in 0..st.xu.len() {
            st.xu[i] += ap * dir.dxu[i];
        }
        for i in 0..sp.m {
            st.y[i] += ad * dir.dy[i];
        }
    }

    let (st, metrics) = match best {
        Some(b) => b,
        None => return empty_solution(p, SolveStatus::NumericalFailure),
    };
    if status == SolveStatus::NumericalFailure
        && metrics.res.gap <= opts.near_gap_tol
        && metrics.res.primal <= opts.near_feas_tol
        && metrics.res.dual <= opts.near_feas_tol
    {
        status = if metrics.worst() <= opts.gap_tol.max(opts.feas_tol) {
            SolveStatus::Optimal
        } else {
            SolveStatus::NearOptimal
        };
    }
    finish(p, &sp, st, metrics, status, iterations, trace)
}

fn finish(
    p: &ConicProgram,
    sp: &Scaled,
    st: State,
    metrics: Metrics,
    status: SolveStatus,
    iterations: usize,
    trace: Vec<IterationLog>,
) -> Solution {
    let mut y = vec![0.0; p.rows.len()];
    for (k, &i) in sp.kept.iter().enumerate() {
        y[i] = sp.sign * st.y[k] / sp.row_scale[k];
    }
    Solution {
        status,
        x_free: st.xu,
        x_nonneg: st.xl,
        x_psd: st.x,
        y,
        z_nonneg: st.zl,
        z_psd: st.z,
        primal_objective: sp.sign * metrics.pobj,
        dual_objective: sp.sign * metrics.dobj,
        residuals: metrics.res,
        iterations,
        trace,
    }
}

fn empty_solution(p: &ConicProgram, status: SolveStatus) -> Solution {
    Solution {
        status,
        x_free: vec![0.0; p.n_free],
        x_nonneg: vec![0.0; p.n_nonneg],
        x_psd: p.psd_orders.iter().map(|&n| Mat::zeros(n, n)).collect(),
        y: vec![0.0; p.rows.len()],
        z_nonneg: vec![0.0; p.n_nonneg],
        z_psd: p.psd_orders.iter().map(|&n| Mat::zeros(n, n)).collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        residuals: Residuals::default(),
        iterations: 0,
        trace: Vec::new(),
    }
}
