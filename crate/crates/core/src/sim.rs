//! Trajectory oracle: fixed-step RK4 with boundary-event refinement, ROA
//! membership labels and volume estimates on grids or seeded Monte Carlo
//! samples.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RoaError};
use crate::relax::{CompiledSystem, SystemSpec};

/// How an integration ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    ReachedT,
    /// `g_X` reached zero at the recorded hitting time.
    HitBoundary,
    /// The state became non-finite or exceeded the integration window.
    LeftWindow,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub terminal: Terminal,
    pub hitting_time: Option<f64>,
    /// `g_X` at the first step end past the boundary (before refinement);
    /// close to zero for grazing contacts.
    pub overshoot: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectories hold at least the initial state")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Number of RK4 steps over `[0, T]`.
    pub steps: usize,
    /// Bisection stops once `|g_X| <= event_tol`.
    pub event_tol: f64,
    /// Test values within `+-margin` make a label boundary-uncertain.
    pub margin: f64,
    /// States with a larger max-norm count as having left the window.
    pub window: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            event_tol: 1e-10,
            margin: 1e-7,
            window: 1e6,
        }
    }
}

struct Rk4<'a> {
    sys: &'a CompiledSystem,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Rk4<'a> {
    fn new(sys: &'a CompiledSystem) -> Self {
        let n = sys.n();
        Self {
            sys,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        let [k1, k2, k3, k4] = &mut self.k;
        self.sys.rhs(t, x, k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.sys.rhs(t + 0.5 * h, &self.tmp, k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.sys.rhs(t + 0.5 * h, &self.tmp, k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * k3[i];
        }
        self.sys.rhs(t + h, &self.tmp, k4);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Integrates `x' = f(t, x)` from `x0` over `[0, horizon]` with `opts.steps`
/// RK4 steps, stopping at the first crossing of `g_X = 0`.
pub fn integrate(sys: &CompiledSystem, horizon: f64, x0: &[f64], opts: &SimOptions) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(RoaError::DimensionMismatch(format!(
            "initial state has {} entries, expected {}",
            x0.len(),
            sys.n()
        )));
    }
    if !(horizon > 0.0) || opts.steps == 0 {
        return Err(RoaError::InvalidInput("horizon and step count must be positive".into()));
    }
    let g0 = sys.g_x(x0);
    if g0 < -opts.event_tol {
        return Err(RoaError::InvalidInput(format!(
            "initial state outside X (g_X = {g0:e})"
        )));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        terminal: Terminal::ReachedT,
        hitting_time: None,
        overshoot: None,
    };
    if g0 <= 0.0 {
        traj.terminal = Terminal::HitBoundary;
        traj.hitting_time = Some(0.0);
        traj.overshoot = Some(g0);
        return Ok(traj);
    }
    let h = horizon / opts.steps as f64;
    let mut rk = Rk4::new(sys);
    let mut x = x0.to_vec();
    let mut next = x.clone();
    for s in 0..opts.steps {
        let t = s as f64 * h;
        let step = if s + 1 == opts.steps { horizon - t } else { h };
        rk.step(t, &x, step, &mut next);
        if next.iter().any(|v| !v.is_finite() || v.abs() > opts.window) {
            traj.terminal = Terminal::LeftWindow;
            return Ok(traj);
        }
        let g = sys.g_x(&next);
        if g <= 0.0 {
            let (tau, state) = locate_crossing(&mut rk, t, &x, step, opts.event_tol)?;
            traj.times.push(tau);
            traj.states.push(state);
            traj.terminal = Terminal::HitBoundary;
            traj.hitting_time = Some(tau);
            traj.overshoot = Some(g);
            return Ok(traj);
        }
        std::mem::swap(&mut x, &mut next);
        traj.times.push(t + step);
        traj.states.push(x.clone());
    }
    Ok(traj)
}

/// Bisects the step length in `(0, h]` until `|g_X| <= tol`.
fn locate_crossing(rk: &mut Rk4, t: f64, x: &[f64], h: f64, tol: f64) -> Result<(f64, Vec<f64>)> {
    let (mut lo, mut hi) = (0.0f64, h);
    let mut y = vec![0.0; x.len()];
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(RoaError::StepUnderflow);
        }
        rk.step(t, x, mid, &mut y);
        let g = rk.sys.g_x(&y);
        if g.abs() <= tol {
            return Ok((t + mid, y));
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// ROA membership of an initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    InRoa,
    OutRoa,
    BoundaryUncertain,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::InRoa => "in",
            Label::OutRoa => "out",
            Label::BoundaryUncertain => "uncertain",
        }
    }
}

/// Classifies `x0`: inside iff the trajectory stays in `X` up to `T` and ends
/// in `X_T`, with test values inside `+-margin` reported as uncertain.
pub fn in_roa(sys: &CompiledSystem, horizon: f64, x0: &[f64], opts: &SimOptions) -> Label {
    if sys.g_x(x0).abs() <= opts.margin {
        return Label::BoundaryUncertain;
    }
    if sys.g_x(x0) < 0.0 {
        return Label::OutRoa;
    }
    let traj = match integrate(sys, horizon, x0, opts) {
        Ok(t) => t,
        Err(_) => return Label::BoundaryUncertain,
    };
    match traj.terminal {
        Terminal::LeftWindow => Label::OutRoa,
        Terminal::HitBoundary => {
            // a crossing that barely dips below zero is a grazing contact
            if traj.overshoot.is_some_and(|g| g >= -opts.margin) {
                Label::BoundaryUncertain
            } else {
                Label::OutRoa
            }
        }
        Terminal::ReachedT => {
            let min_g = traj.states.iter().map(|x| sys.g_x(x)).fold(f64::INFINITY, f64::min);
            let gt = sys.g_t(traj.last());
            if min_g <= opts.margin || gt.abs() <= opts.margin {
                Label::BoundaryUncertain
            } else if gt > 0.0 {
                Label::InRoa
            } else {
                Label::OutRoa
            }
        }
    }
}

/// Where sample points come from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplingPlan {
    /// Cell-centred tensor grid over the bounding box of the domain, with
    /// `points` cells per axis; cells whose centre lies outside the domain
    /// are dropped.
    Grid { points: usize },
    /// Uniform samples in the bounding box (rejected outside the domain),
    /// the `i`-th drawn from stream `i` of a ChaCha8 generator keyed by `seed`.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan::MonteCarlo {
            samples: 10_000,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    /// Sample points with the weight (volume) each one represents.
    pub fn points(&self, spec: &SystemSpec) -> Result<(Vec<Vec<f64>>, f64)> {
        let dom = spec.domain();
        let (lo, hi) = dom.bounding_box();
        let n = lo.len();
        let box_vol: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
        match *self {
            SamplingPlan::Grid { points } => {
                if points == 0 {
                    return Err(RoaError::InvalidInput("grid needs at least one point per axis".into()));
                }
                let total = (points as u128).checked_pow(n as u32).filter(|t| *t <= 1 << 28);
                let Some(total) = total else {
                    return Err(RoaError::InvalidInput(format!(
                        "grid of {points}^{n} points is too large"
                    )));
                };
                let mut out = Vec::new();
                let mut idx = vec![0usize; n];
                for _ in 0..total {
                    let x: Vec<f64> = (0..n)
                        .map(|i| lo[i] + (idx[i] as f64 + 0.5) * (hi[i] - lo[i]) / points as f64)
                        .collect();
                    if dom.contains(&x) {
                        out.push(x);
                    }
                    for d in idx.iter_mut() {
                        *d += 1;
                        if *d < points {
                            break;
                        }
                        *d = 0;
                    }
                }
                Ok((out, box_vol / total as f64))
            }
            SamplingPlan::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(RoaError::InvalidInput("Monte Carlo plan needs samples".into()));
                }
                let pts: Vec<Option<Vec<f64>>> = (0..samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(i as u64);
                        let x: Vec<f64> = (0..n).map(|d| rng.random_range(lo[d]..hi[d])).collect();
                        dom.contains(&x).then_some(x)
                    })
                    .collect();
                Ok((pts.into_iter().flatten().collect(), box_vol / samples as f64))
            }
        }
    }

    fn is_monte_carlo(&self) -> bool {
        matches!(self, SamplingPlan::MonteCarlo { .. })
    }

    fn drawn(&self) -> usize {
        match *self {
            SamplingPlan::MonteCarlo { samples, .. } => samples,
            SamplingPlan::Grid { points } => points,
        }
    }
}

/// Labelled samples and the resulting ROA volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoaEstimate {
    pub plan: SamplingPlan,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    /// Volume represented by each sample.
    pub weight: f64,
    pub volume: f64,
    /// Standard error of `volume` for Monte Carlo plans.
    pub std_error: Option<f64>,
}

/// Labels every sample of `plan` (in parallel; the result does not depend on
/// the evaluation order).
pub fn estimate_roa(spec: &SystemSpec, plan: SamplingPlan, opts: &SimOptions) -> Result<RoaEstimate> {
    let sys = spec.compiled();
    let (points, weight) = plan.points(spec)?;
    let labels: Vec<Label> = points
        .par_iter()
        .map(|x| in_roa(&sys, spec.horizon(), x, opts))
        .collect();
    let inside = labels.iter().filter(|l| **l == Label::InRoa).count();
    let volume = inside as f64 * weight;
    let std_error = plan.is_monte_carlo().then(|| {
        let n = plan.drawn() as f64;
        let p = inside as f64 / n;
        weight * n * (p * (1.0 - p) / n).sqrt()
    });
    Ok(RoaEstimate {
        plan,
        points,
        labels,
        weight,
        volume,
        std_error,
    })
}

/// Inner-set values strictly below this count as inside `{w < 1}`.
pub const INNER_LEVEL: f64 = 1.0 - 1e-9;
/// Samples with `w` below this and labelled out-ROA are violations.
pub const VIOLATION_LEVEL: f64 = 1.0 - 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeError {
    pub vol_roa: f64,
    pub vol_inner: f64,
    pub relative_error: f64,
    /// Boundary-uncertain samples, excluded from both volumes.
    pub uncertain: usize,
    /// Samples in `{w < 1 - 1e-6}` labelled out-ROA.
    pub violations: Vec<Vec<f64>>,
}

impl RoaEstimate {
    /// Compares the sublevel set `{x in X : w(x) < 1}` with the labelled ROA.
    pub fn volume_error(&self, spec: &SystemSpec, w: impl Fn(&[f64]) -> f64 + Sync) -> Result<VolumeError> {
        let sys = spec.compiled();
        let values: Vec<f64> = self.points.par_iter().map(|x| w(x)).collect();
        let mut inner = 0usize;
        let mut uncertain = 0usize;
        let mut violations = Vec::new();
        for ((x, label), wv) in self.points.iter().zip(&self.labels).zip(&values) {
            if *label == Label::BoundaryUncertain {
                uncertain += 1;
                continue;
            }
            if sys.g_x(x) <= 0.0 {
                continue;
            }
            if *wv < INNER_LEVEL {
                inner += 1;
            }
            if *wv < VIOLATION_LEVEL && *label == Label::OutRoa {
                violations.push(x.clone());
            }
        }
        if self.volume <= 0.0 {
            return Err(RoaError::Validation("estimated ROA volume is zero".into()));
        }
        let vol_inner = inner as f64 * self.weight;
        Ok(VolumeError {
            vol_roa: self.volume,
            vol_inner,
            relative_error: (self.volume - vol_inner) / self.volume,
            uncertain,
            violations,
        })
    }

    /// Writes `x1..xn, w, label` rows.
    pub fn write_csv(&self, out: &mut impl Write, w: impl Fn(&[f64]) -> f64 + Sync) -> Result<()> {
        let n = self.points.first().map_or(0, Vec::len);
        let header: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain(["w".into(), "label".into()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let values: Vec<f64> = self.points.par_iter().map(|x| w(x)).collect();
        for ((x, l), v) in self.points.iter().zip(&self.labels).zip(values) {
            let coords: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
            writeln!(out, "{},{v},{}", coords.join(","), l.as_str())?;
        }
        Ok(())
    }
}

/// Labels `plan` and compares it with `{w < 1}`.
pub fn volume_error(
    spec: &SystemSpec,
    w: &crate::poly::Poly,
    plan: SamplingPlan,
    opts: &SimOptions,
) -> Result<VolumeError> {
    let compiled = crate::poly::CompiledPoly::new(w);
    estimate_roa(spec, plan, opts)?.volume_error(spec, |x| compiled.eval(x))
}
