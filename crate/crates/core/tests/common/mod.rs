//! Independent oracles shared by the integration and acceptance tests. None of
//! them call into the library's integrator or moment code.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn problem_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

/// Flow of `x' = x^3 - x/4` in closed form. With
/// `F(x) = 2 ln|1 - 1/(4 x^2)|` one has `F(x(t)) = F(x0) + t`.
pub mod cubic {
    fn f_inv_arg(x0: f64) -> f64 {
        let u = x0 * x0;
        2.0 * (1.0 - 1.0 / (4.0 * u)).abs().ln()
    }

    /// `x(t)^2`, or `None` once the solution has blown up.
    pub fn square_at(x0: f64, t: f64) -> Option<f64> {
        let u0 = x0 * x0;
        if x0 == 0.0 || u0 == 0.25 {
            return Some(u0);
        }
        let e = ((f_inv_arg(x0) + t) / 2.0).exp();
        if u0 < 0.25 {
            Some(0.25 / (1.0 + e))
        } else if e < 1.0 {
            Some(0.25 / (1.0 - e))
        } else {
            None
        }
    }

    /// Membership in the ROA for `X = {x^2 < r^2}`, target `x^2 < 0.09`.
    /// Solutions are monotone in `|x|`, so the constraint is checked at the
    /// end point only.
    pub fn in_roa(x0: f64, horizon: f64, radius: f64) -> bool {
        if x0.abs() >= radius {
            return false;
        }
        match square_at(x0, horizon) {
            Some(u) => u < radius * radius && u < 0.09,
            None => false,
        }
    }

    /// Right end of the ROA interval for target `x^2 < 0.09`.
    pub fn roa_edge(horizon: f64) -> f64 {
        // 0.25 / (1 + e^{c/2}) = 0.09 with c = F(x0) + T
        let c = 2.0 * (0.25f64 / 0.09 - 1.0).ln();
        let inner = ((c - horizon) / 2.0).exp();
        (0.25 / (1.0 + inner)).sqrt()
    }
}

/// Dormand-Prince 5(4) with step-size control, stopping at the first point
/// where `g <= 0` (to within the accepted step). Returns `None` if `g` hits
/// zero before `horizon`, else the final state.
pub fn dopri_until_exit(
    f: impl Fn(&[f64], &mut [f64]),
    g: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    horizon: f64,
    tol: f64,
) -> Option<Vec<f64>> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = x0.len();
    let mut x = x0.to_vec();
    if g(&x) <= 0.0 {
        return None;
    }
    let mut t = 0.0;
    let mut h = horizon / 100.0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    while t < horizon {
        h = h.min(horizon - t);
        f(&x, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                tmp[i] = x[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            f(&tmp, &mut k[s]);
        }
        let mut err = 0.0f64;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let hi: f64 = (0..7).map(|s| B5[s] * k[s][i]).sum();
            let lo: f64 = (0..7).map(|s| B4[s] * k[s][i]).sum();
            next[i] = x[i] + h * hi;
            let sc = tol * (1.0 + x[i].abs().max(next[i].abs()));
            err = err.max((h * (hi - lo)).abs() / sc);
        }
        if !next.iter().all(|v| v.is_finite()) || next.iter().any(|v| v.abs() > 1e6) {
            return None;
        }
        if err <= 1.0 {
            t += h;
            x = next;
            if g(&x) <= 0.0 {
                return None;
            }
        }
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        if h < 1e-14 {
            return None;
        }
    }
    Some(x)
}

/// Van der Pol in reverse time, as in the bundled problem file.
pub mod vanderpol {
    pub fn rhs(x: &[f64], out: &mut [f64]) {
        out[0] = -2.0 * x[1];
        out[1] = 0.8 * x[0] + 10.0 * (x[0] * x[0] - 0.21) * x[1];
    }

    pub fn g_x(x: &[f64]) -> f64 {
        1.21 - x[0] * x[0] - x[1] * x[1]
    }

    pub fn g_t(x: &[f64]) -> f64 {
        0.25 - x[0] * x[0] - x[1] * x[1]
    }

    pub fn in_roa(x0: &[f64]) -> bool {
        super::dopri_until_exit(rhs, g_x, x0, 1.0, 1e-10).is_some_and(|x| g_t(&x) > 0.0)
    }
}

/// Monte Carlo estimate and standard error of the integral of `x^alpha` over
/// the box `[lo, hi]` intersected with `inside`.
pub fn mc_moment(
    alpha: &[u32],
    lo: &[f64],
    hi: &[f64],
    inside: impl Fn(&[f64]) -> bool,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vol: f64 = lo.iter().zip(hi).map(|(l, h)| h - l).product();
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut x = vec![0.0; lo.len()];
    for _ in 0..samples {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rng.random_range(lo[i]..hi[i]);
        }
        let v = if inside(&x) {
            x.iter().zip(alpha).map(|(xi, &a)| xi.powi(a as i32)).product()
        } else {
            0.0
        };
        sum += v;
        sum2 += v * v;
    }
    let m = sum / samples as f64;
    let var = (sum2 / samples as f64 - m * m).max(0.0);
    (vol * m, vol * (var / samples as f64).sqrt())
}

/// All exponent tuples of total degree at most `d` in `n` variables.
pub fn exponents(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|e: Vec<u32>| {
                let used: u32 = e.iter().sum();
                (0..=d - used).map(move |k| {
                    let mut e = e.clone();
                    e.push(k);
                    e
                })
            })
            .collect();
    }
    out
}
