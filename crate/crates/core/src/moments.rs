//! Lebesgue moments of the integration domain and the moment / localizing
//! matrices of truncated moment sequences.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RoaError};
use crate::poly::{Basis, MultiIndex, Poly};

/// Set over which the volume objective is integrated. It must equal or
/// outer-bound the constraint set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainDescriptor {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl DomainDescriptor {
    pub fn dim(&self) -> usize {
        match self {
            DomainDescriptor::Box { lower, .. } => lower.len(),
            DomainDescriptor::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainDescriptor::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(RoaError::InvalidInput(
                        "box bounds must be nonempty and of equal length".into(),
                    ));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(RoaError::InvalidInput(
                        "box needs lower < upper in every coordinate".into(),
                    ));
                }
            }
            DomainDescriptor::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0) {
                    return Err(RoaError::InvalidInput(
                        "ball needs a nonempty center and positive radius".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        match self {
            DomainDescriptor::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| u - l).product(),
            DomainDescriptor::Ball { center, radius } => ball_monomial_integral(&vec![0; center.len()], *radius),
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainDescriptor::Box { lower, upper } => (lower.clone(), upper.clone()),
            DomainDescriptor::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainDescriptor::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u),
            DomainDescriptor::Ball { center, radius } => {
                x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum::<f64>() <= radius * radius
            }
        }
    }
}

/// Truncated moment sequence indexed by a graded-lex basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    basis: Basis,
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(basis: Basis, values: Vec<f64>) -> Result<Self> {
        if basis.len() != values.len() {
            return Err(RoaError::DimensionMismatch(format!(
                "{} moments for a basis of size {}",
                values.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, values })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> u32 {
        self.basis.maxdeg()
    }

    /// Mass of the represented measure (the constant-monomial moment).
    pub fn mass(&self) -> f64 {
        self.values[0]
    }

    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.basis.position(m).map(|i| self.values[i])
    }

    /// Riesz functional: integral of `p` against the represented measure.
    pub fn integrate(&self, p: &Poly) -> Result<f64> {
        p.terms()
            .map(|(m, c)| {
                self.get(m).map(|y| c * y).ok_or(RoaError::InsufficientMomentDegree {
                    needed: m.degree(),
                    available: self.degree(),
                })
            })
            .sum()
    }

    /// Averaged Dirac moments of a point cloud.
    pub fn empirical(basis: Basis, points: &[Vec<f64>]) -> Self {
        let mut values = vec![0.0; basis.len()];
        for p in points {
            for (v, m) in values.iter_mut().zip(basis.iter()) {
                *v += m.eval(p);
            }
        }
        let w = 1.0 / points.len().max(1) as f64;
        values.iter_mut().for_each(|v| *v *= w);
        Self { basis, values }
    }
}

/// Exact Lebesgue moments of all monomials up to `maxdeg` over `dom`.
pub fn lebesgue_moments(dom: &DomainDescriptor, nvars: usize, maxdeg: u32) -> Result<MomentVector> {
    dom.validate()?;
    if dom.dim() != nvars {
        return Err(RoaError::DimensionMismatch(format!(
            "domain has dimension {}, expected {nvars}",
            dom.dim()
        )));
    }
    let basis = Basis::new(nvars, maxdeg);
    let values = match dom {
        DomainDescriptor::Box { lower, upper } => basis
            .iter()
            .map(|m| {
                m.exps()
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&a, (l, u))| {
                        let p = a as i32 + 1;
                        (u.powi(p) - l.powi(p)) / p as f64
                    })
                    .product()
            })
            .collect(),
        DomainDescriptor::Ball { center, radius } => {
            let centered: Vec<f64> = basis
                .iter()
                .map(|m| ball_monomial_integral(m.exps(), *radius))
                .collect();
            basis
                .iter()
                .map(|m| shifted_moment(m.exps(), center, &basis, &centered))
                .collect()
        }
    };
    MomentVector::new(basis, values)
}

/// `Gamma(k / 2)` for positive integers `k`.
fn gamma_half(k: u32) -> f64 {
    debug_assert!(k > 0);
    let (mut g, mut x) = if k % 2 == 0 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    let target = k as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// Integral of `x^alpha` over the origin-centered ball of the given radius.
fn ball_monomial_integral(alpha: &[u32], radius: f64) -> f64 {
    if alpha.iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    let n = alpha.len() as u32;
    let deg: u32 = alpha.iter().sum();
    // sphere integral 2 prod Gamma(b_i) / Gamma(sum b_i) with b_i = (a_i + 1) / 2
    let num: f64 = alpha.iter().map(|a| gamma_half(a + 1)).product();
    let sphere = 2.0 * num / gamma_half(deg + n);
    sphere * radius.powi((deg + n) as i32) / (deg + n) as f64
}

/// Moment of `x^alpha` over a ball centered at `c`, expanded binomially around
/// the centered moments.
fn shifted_moment(alpha: &[u32], c: &[f64], basis: &Basis, centered: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut gamma = vec![0u32; alpha.len()];
    loop {
        let mut coef = 1.0;
        for i in 0..alpha.len() {
            coef *= crate::poly::binomial(alpha[i] as u64, gamma[i] as u64) as f64
                * c[i].powi((alpha[i] - gamma[i]) as i32);
        }
        if coef != 0.0 {
            let idx = basis
                .position(&MultiIndex::new(gamma.clone()))
                .expect("sub-multi-index lies in the basis");
            total += coef * centered[idx];
        }
        // odometer over gamma <= alpha
        let mut i = 0;
        loop {
            if i == alpha.len() {
                return total;
            }
            if gamma[i] < alpha[i] {
                gamma[i] += 1;
                break;
            }
            gamma[i] = 0;
            i += 1;
        }
    }
}

/// Moment matrix of order `k`: entry `(a, b)` is `y[a + b]` over `Basis(n, k)`.
pub fn moment_matrix(y: &MomentVector, k: u32) -> Result<Mat<f64>> {
    localizing_matrix(&Poly::constant(y.basis().nvars(), 1.0), y, k)
}

/// Localizing matrix of `g` at relaxation order `k`; its order is
/// `k - ceil(deg g / 2)` and entry `(a, b)` is `sum_c g_c y[a + b + c]`.
pub fn localizing_matrix(g: &Poly, y: &MomentVector, k: u32) -> Result<Mat<f64>> {
    let nvars = y.basis().nvars();
    if g.nvars() != nvars {
        return Err(RoaError::DimensionMismatch(format!(
            "localizer has {} variables, moments have {nvars}",
            g.nvars()
        )));
    }
    let half = g.degree().div_ceil(2);
    if half > k {
        return Err(RoaError::DegreeBudget(format!(
            "order {k} is too small for a localizer of degree {}",
            g.degree()
        )));
    }
    if y.degree() < 2 * k {
        return Err(RoaError::InsufficientMomentDegree {
            needed: 2 * k,
            available: y.degree(),
        });
    }
    let b = Basis::new(nvars, k - half);
    let n = b.len();
    let mut out = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let ab = b.get(i).add(b.get(j));
            let mut s = 0.0;
            for (gm, gc) in g.terms() {
                s += gc * y.get(&ab.add(gm)).expect("moment degree checked above");
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::VarNames;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval() -> DomainDescriptor {
        DomainDescriptor::Box {
            lower: vec![-1.0],
            upper: vec![1.0],
        }
    }

    fn disk(r: f64) -> DomainDescriptor {
        DomainDescriptor::Ball {
            center: vec![0.0, 0.0],
            radius: r,
        }
    }

    #[test]
    fn interval_moments() {
        let l = lebesgue_moments(&interval(), 1, 4).unwrap();
        assert_eq!(l.values(), &[2.0, 0.0, 2.0 / 3.0, 0.0, 0.4]);
    }

    #[test]
    fn disk_moments() {
        let l = lebesgue_moments(&disk(1.1), 2, 4).unwrap();
        assert!((l.mass() - std::f64::consts::PI * 1.21).abs() < 1e-12);
        let x1sq = l.get(&MultiIndex::new(vec![2, 0])).unwrap();
        assert!((x1sq - std::f64::consts::PI / 4.0 * 1.1f64.powi(4)).abs() < 1e-12);
        for (m, v) in l.basis().iter().zip(l.values()) {
            if m.exps().iter().any(|e| e % 2 == 1) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn disk_second_moment_matches_monte_carlo() {
        // uniform samples in the bounding square, weighted by the indicator
        let r: f64 = 1.1;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000_000usize;
        let side = 2.0 * r;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let x: f64 = rng.random_range(-r..r);
            let y: f64 = rng.random_range(-r..r);
            let v = if x * x + y * y <= r * r {
                x * x * side * side
            } else {
                0.0
            };
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = std::f64::consts::PI / 4.0 * r.powi(4);
        assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn shifted_ball_matches_translation() {
        // x over a ball centred at 0.5 integrates to 0.5 * area
        let dom = DomainDescriptor::Ball {
            center: vec![0.5, -0.25],
            radius: 0.8,
        };
        let l = lebesgue_moments(&dom, 2, 3).unwrap();
        let area = std::f64::consts::PI * 0.64;
        assert!((l.get(&MultiIndex::new(vec![1, 0])).unwrap() - 0.5 * area).abs() < 1e-12);
        assert!((l.get(&MultiIndex::new(vec![0, 1])).unwrap() + 0.25 * area).abs() < 1e-12);
        // E[x^2] = c^2 + r^2/4 for a uniform disk
        let x2 = l.get(&MultiIndex::new(vec![2, 0])).unwrap();
        assert!((x2 - area * (0.25 + 0.64 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn moment_matrix_examples() {
        let l = lebesgue_moments(&interval(), 1, 4).unwrap();
        let m1 = moment_matrix(&l, 1).unwrap();
        assert_eq!(
            (m1.nrows(), m1[(0, 0)], m1[(0, 1)], m1[(1, 1)]),
            (2, 2.0, 0.0, 2.0 / 3.0)
        );

        let m2 = moment_matrix(&l, 2).unwrap();
        let expect = [[2.0, 0.0, 2.0 / 3.0], [0.0, 2.0 / 3.0, 0.0], [2.0 / 3.0, 0.0, 0.4]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m2[(i, j)] - expect[i][j]).abs() < 1e-15);
            }
        }

        let b = Basis::new(1, 6);
        let mut vals = vec![0.0; b.len()];
        vals[0] = 1.0;
        let dirac = MomentVector::new(b, vals).unwrap();
        let m = moment_matrix(&dirac, 3).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m[(i, j)], if i == 0 && j == 0 { 1.0 } else { 0.0 });
            }
        }
        assert!(moment_matrix(&dirac, 4).is_err());
    }

    #[test]
    fn localizing_examples() {
        let l = lebesgue_moments(&interval(), 1, 6).unwrap();
        let g = Poly::parse("1 - x1^2", VarNames::state(1)).unwrap();
        let loc = localizing_matrix(&g, &l, 1).unwrap();
        assert_eq!(loc.nrows(), 1);
        assert!((loc[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);

        let one = Poly::constant(1, 1.0);
        assert_eq!(localizing_matrix(&one, &l, 3).unwrap(), moment_matrix(&l, 3).unwrap());

        let neg = localizing_matrix(&Poly::constant(1, -1.0), &l, 2).unwrap();
        let m = moment_matrix(&l, 2).unwrap();
        assert_eq!(neg, -&m);
        let cubic = Poly::parse("x1^3", VarNames::state(1)).unwrap();
        assert!(localizing_matrix(&cubic, &l, 1).is_err());
    }

    #[test]
    fn empirical_moment_matrices_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            let pts: Vec<Vec<f64>> = (0..40)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let y = MomentVector::empirical(Basis::new(n, 6), &pts);
            let m = moment_matrix(&y, 3).unwrap();
            let ev = m.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
            assert!(ev[0] >= -1e-9, "n={n}: {}", ev[0]);
        }
    }
}
