//! The `roa` command-line tool: problem ingestion, sweeps, validation and
//! plot data.

mod files;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

pub use files::{poly_to_terms, terms_to_poly, DegreeEntry, ProblemFile, Record, ResultFile, Term, ValidationReport};

use crate::error::{ParseError, Result, RoaError};
use crate::poly::{CompiledPoly, Poly};
use crate::relax::{running_min_of, solve_relaxation, spot_check, Degrees, RelaxOptions, SystemSpec};
use crate::sim::{estimate_roa, in_roa, Label, RoaEstimate, SamplingPlan, SimOptions, VIOLATION_LEVEL};

#[derive(Debug, Parser)]
#[command(
    name = "roa",
    version,
    about = "Inner approximations of finite-time regions of attraction"
)]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one relaxation and write a one-record result file.
    Solve(SolveArgs),
    /// Solve a list of degrees and write all records with running minima.
    Sweep(SweepArgs),
    /// Check stored certificates against the trajectory oracle.
    Validate(ValidateArgs),
    /// Emit `w` on a grid as CSV for plotting.
    Grid(GridArgs),
    /// Estimate the ROA volume, and inner-set errors of a result file.
    Volume(VolumeArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Degree of `v` (defaults to the first entry of the problem file).
    #[arg(long)]
    pub deg_v: Option<u32>,
    /// Degree of `w` (defaults to `--deg-v`).
    #[arg(long)]
    pub deg_w: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the oracle volume comparison.
    #[arg(long)]
    pub no_volume: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Comma-separated degrees, each `d` or `deg_w:deg_v` (defaults to the
    /// problem file's list).
    #[arg(long, value_delimiter = ',')]
    pub degrees: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum number of concurrent solves (0: one per core).
    #[arg(long, env = "ROA_JOBS", default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub no_volume: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random points per identity for the certificate sign checks.
    #[arg(long, default_value_t = 1000)]
    pub spot_samples: usize,
    /// Also write the reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub result: PathBuf,
    /// Grid cells per axis.
    #[arg(long, default_value_t = 400)]
    pub res: usize,
    /// Record index (defaults to the last record with a certificate).
    #[arg(long)]
    pub record: Option<usize>,
    /// Use the running minimum of `w` over records up to the chosen one.
    #[arg(long)]
    pub running_min: bool,
    /// Add oracle labels (one simulation per grid point).
    #[arg(long)]
    pub labels: bool,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    /// Problem file (or take the problem from `--result`).
    #[arg(long, required_unless_present = "result")]
    pub problem: Option<PathBuf>,
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Use a grid with this many cells per axis instead of the problem's plan.
    #[arg(long, conflicts_with = "samples")]
    pub grid: Option<usize>,
    /// Use Monte Carlo with this many samples instead of the problem's plan.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Runs a parsed command line; the error's `exit_code` is the process status.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Volume(a) => cmd_volume(a),
    }
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let problem = ProblemFile::load(&a.problem)?;
    let degrees = match (a.deg_v, a.deg_w) {
        (Some(v), w) => Degrees::new(w.unwrap_or(v), v),
        (None, Some(_)) => return Err(ParseError::Problem("--deg-w needs --deg-v".into()).into()),
        (None, None) => problem.degrees[0].degrees(),
    };
    let result = sweep(&problem, &[degrees], 1, !a.no_volume)?;
    result.save(&a.out)?;
    print_records(&result);
    first_failure(&result)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let problem = ProblemFile::load(&a.problem)?;
    let degrees: Vec<Degrees> = if a.degrees.is_empty() {
        problem.degrees.iter().map(|d| d.degrees()).collect()
    } else {
        a.degrees
            .iter()
            .map(|s| DegreeEntry::parse(s).map(DegreeEntry::degrees))
            .collect::<Result<_>>()?
    };
    let result = sweep(&problem, &degrees, a.jobs, !a.no_volume)?;
    result.save(&a.out)?;
    print_records(&result);
    first_failure(&result)
}

fn first_failure(result: &ResultFile) -> Result<()> {
    match result.records.iter().find(|r| r.w.is_none()) {
        Some(r) => Err(RoaError::Solver {
            status: r.status.unwrap_or(crate::solver::SolveStatus::NumericalFailure),
            detail: format!(
                "deg_w {} deg_v {}: {}",
                r.deg_w,
                r.deg_v,
                r.error.as_deref().unwrap_or("no certificate")
            ),
        }),
        None => Ok(()),
    }
}

fn print_records(result: &ResultFile) {
    let pct = |x: Option<f64>| x.map_or("-".to_string(), |e| format!("{:.2}%", 100.0 * e));
    let num = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.8}"));
    println!("deg_w deg_v  k  status          d*            p*            error    running-min  time");
    for r in &result.records {
        let status = r.status.map_or("failed".to_string(), |s| {
            serde_json::to_string(&s).unwrap().replace('"', "")
        });
        println!(
            "{:>5} {:>5} {:>2}  {:<14}  {:<12}  {:<12}  {:<7}  {:<11}  {:.1}s",
            r.deg_w,
            r.deg_v,
            r.k,
            status,
            num(r.d_star),
            num(r.p_star),
            pct(r.relative_error),
            pct(r.running_min_relative_error),
            r.wall_time_s
        );
    }
}

/// Solves every degree (up to `jobs` at a time), compares each inner set and
/// the running minimum with the oracle, and returns records sorted by degree.
///
/// A failed solve becomes a record without certificates; other records are
/// kept.
pub fn sweep(problem: &ProblemFile, degrees: &[Degrees], jobs: usize, with_volume: bool) -> Result<ResultFile> {
    let spec = problem.spec()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RoaError::InvalidInput(format!("thread pool: {e}")))?;
    let (records, estimate) = pool.install(|| -> Result<_> {
        let estimate = if with_volume {
            Some(estimate_roa(&spec, problem.sampling, &problem.sim)?)
        } else {
            None
        };
        let records: Vec<Record> = degrees
            .par_iter()
            .map(|d| solve_record(&spec, *d, &problem.relax, estimate.as_ref()))
            .collect();
        Ok((records, estimate))
    })?;
    let mut result = ResultFile::new(problem.clone());
    result.vol_roa = estimate.as_ref().map(|e| e.volume);
    result.records = records;
    result.sort_records();
    if let Some(est) = &estimate {
        fill_running_min(&spec, &mut result, est)?;
    }
    Ok(result)
}

fn solve_record(spec: &SystemSpec, degrees: Degrees, opts: &RelaxOptions, estimate: Option<&RoaEstimate>) -> Record {
    let start = Instant::now();
    let mut rec = Record {
        deg_w: degrees.deg_w,
        deg_v: degrees.deg_v,
        k: degrees.k,
        status: None,
        error: None,
        d_star: None,
        p_star: None,
        w: None,
        v: None,
        vol_inner: None,
        relative_error: None,
        running_min_vol_inner: None,
        running_min_relative_error: None,
        diagnostics: None,
        wall_time_s: 0.0,
    };
    match solve_relaxation(spec, degrees, opts) {
        Ok(r) => {
            if let Some(est) = estimate {
                let w = CompiledPoly::new(&r.w);
                match est.volume_error(spec, |x| w.eval(x)) {
                    Ok(e) => {
                        rec.vol_inner = Some(e.vol_inner);
                        rec.relative_error = Some(e.relative_error);
                    }
                    Err(e) => log::warn!("volume comparison failed: {e}"),
                }
            }
            rec.status = Some(r.status);
            rec.d_star = Some(r.dual_opt);
            rec.p_star = Some(r.primal_opt);
            rec.w = Some(poly_to_terms(&r.w));
            rec.v = Some(poly_to_terms(&r.v));
            rec.diagnostics = Some(r.diagnostics);
        }
        Err(e) => {
            log::warn!("deg_w {} deg_v {}: {e}", degrees.deg_w, degrees.deg_v);
            if let RoaError::Solver { status, .. } = &e {
                rec.status = Some(*status);
            }
            rec.error = Some(e.to_string());
        }
    }
    rec.wall_time_s = start.elapsed().as_secs_f64();
    rec
}

fn fill_running_min(spec: &SystemSpec, result: &mut ResultFile, est: &RoaEstimate) -> Result<()> {
    let n = spec.n();
    let mut ws: Vec<Poly> = Vec::new();
    for i in 0..result.records.len() {
        let Some(w) = result.records[i].w_poly(n)? else {
            continue;
        };
        ws.push(w);
        let rm = running_min_of(&ws)?;
        if let Ok(e) = est.volume_error(spec, |x| rm.eval(x)) {
            result.records[i].running_min_vol_inner = Some(e.vol_inner);
            result.records[i].running_min_relative_error = Some(e.relative_error);
        }
    }
    Ok(())
}

/// Inner-ness and certificate checks for every record with a certificate.
pub fn validate(result: &ResultFile, samples: usize, seed: u64, spot_samples: usize) -> Result<Vec<ValidationReport>> {
    let problem = &result.problem;
    let spec = problem.spec()?;
    let n = spec.n();
    let points = samples_in_domain(&spec, samples, seed)?;
    let sys = spec.compiled();
    let labels: Vec<Label> = points
        .par_iter()
        .map(|x| in_roa(&sys, spec.horizon(), x, &problem.sim))
        .collect();
    let mut reports = Vec::new();
    for rec in &result.records {
        let (Some(w), Some(v)) = (rec.w_poly(n)?, rec.v_poly(n)?) else {
            continue;
        };
        let wc = CompiledPoly::new(&w);
        let mut violations = Vec::new();
        let mut uncertain = Vec::new();
        for (x, label) in points.iter().zip(&labels) {
            if wc.eval(x) >= VIOLATION_LEVEL {
                continue;
            }
            match label {
                Label::OutRoa => violations.push(x.clone()),
                Label::BoundaryUncertain => uncertain.push(x.clone()),
                Label::InRoa => {}
            }
        }
        reports.push(ValidationReport {
            deg_w: rec.deg_w,
            deg_v: rec.deg_v,
            samples: points.len(),
            violations,
            uncertain,
            spot_checks: spot_check(&spec, &v, &w, spot_samples, seed)?,
        });
    }
    Ok(reports)
}

/// The first `samples` seeded box draws that land in the domain.
fn samples_in_domain(spec: &SystemSpec, samples: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut drawn = samples.max(1);
    loop {
        let (mut points, _) = SamplingPlan::MonteCarlo { samples: drawn, seed }.points(spec)?;
        if points.len() >= samples || drawn >= samples.saturating_mul(1 << 12) {
            points.truncate(samples);
            return Ok(points);
        }
        let frac = points.len().max(1) as f64 / drawn as f64;
        drawn = ((samples as f64 / frac * 1.05).ceil() as usize)
            .max(drawn + 1)
            .min(samples.saturating_mul(1 << 12));
    }
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let result = ResultFile::load(&a.result)?;
    let reports = validate(&result, a.samples, a.seed, a.spot_samples)?;
    if let Some(path) = &a.report {
        std::fs::write(path, serde_json::to_string_pretty(&reports).expect("reports serialize"))?;
    }
    let mut failed = 0;
    for r in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{verdict} deg_w {} deg_v {}: {} samples, {} violations, {} boundary-uncertain",
            r.deg_w,
            r.deg_v,
            r.samples,
            r.violations.len(),
            r.uncertain.len()
        );
        for x in r.violations.iter().take(10) {
            println!("  violation at {x:?}");
        }
        for x in r.uncertain.iter().take(10) {
            println!("  uncertain at {x:?}");
        }
        for s in &r.spot_checks {
            println!(
                "  {:<10} min {:+.3e} (scale {:.1e}, {} points) {}",
                serde_json::to_string(&s.kind).unwrap().replace('"', ""),
                s.min_value,
                s.scale,
                s.samples,
                if s.passed() { "ok" } else { "VIOLATED" }
            );
        }
        if !r.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(RoaError::Validation(format!(
            "{failed} of {} records failed",
            reports.len()
        )));
    }
    if reports.is_empty() {
        return Err(RoaError::Validation("no record carries a certificate".into()));
    }
    Ok(())
}

/// Writes `x1..xn, w[, label]` over a cell-centred grid of the domain.
pub fn write_grid(
    out: &mut impl Write,
    spec: &SystemSpec,
    w: impl Fn(&[f64]) -> f64 + Sync,
    res: usize,
    labels: Option<&SimOptions>,
) -> Result<()> {
    let plan = SamplingPlan::Grid { points: res };
    let (points, labels) = match labels {
        Some(opts) => {
            let est = estimate_roa(spec, plan, opts)?;
            (est.points, Some(est.labels))
        }
        None => (plan.points(spec)?.0, None),
    };
    let mut header: Vec<String> = (1..=spec.n()).map(|i| format!("x{i}")).collect();
    header.push("w".into());
    if labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(","))?;
    let values: Vec<f64> = points.par_iter().map(|x| w(x)).collect();
    for (i, (x, v)) in points.iter().zip(values).enumerate() {
        let mut row: Vec<String> = x.iter().map(|c| c.to_string()).collect();
        row.push(v.to_string());
        if let Some(l) = &labels {
            row.push(l[i].as_str().into());
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<()> {
    let result = ResultFile::load(&a.result)?;
    let spec = result.problem.spec()?;
    let n = spec.n();
    let idx = match a.record {
        Some(i) if i < result.records.len() => i,
        Some(i) => return Err(RoaError::InvalidInput(format!("no record {i}"))),
        None => result
            .records
            .iter()
            .rposition(|r| r.w.is_some())
            .ok_or_else(|| RoaError::InvalidInput("no record carries a certificate".into()))?,
    };
    let first = if a.running_min { 0 } else { idx };
    let ws: Vec<Poly> = result.records[first..=idx]
        .iter()
        .filter_map(|r| r.w_poly(n).transpose())
        .collect::<Result<_>>()?;
    if ws.is_empty() {
        return Err(RoaError::InvalidInput(format!("record {idx} carries no certificate")));
    }
    let rm = running_min_of(&ws)?;
    let labels = a.labels.then_some(&result.problem.sim);
    match &a.out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            write_grid(&mut f, &spec, |x| rm.eval(x), a.res, labels)?;
            f.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = std::io::BufWriter::new(stdout.lock());
            write_grid(&mut lock, &spec, |x| rm.eval(x), a.res, labels)?;
            lock.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct VolumeReport {
    plan: SamplingPlan,
    vol_roa: f64,
    std_error: Option<f64>,
    uncertain: usize,
    records: Vec<VolumeRecord>,
}

#[derive(Debug, serde::Serialize)]
struct VolumeRecord {
    deg_w: u32,
    deg_v: u32,
    vol_inner: f64,
    relative_error: f64,
    running_min_vol_inner: f64,
    running_min_relative_error: f64,
    violations: usize,
}

fn load_problem(problem: Option<&Path>, result: Option<&ResultFile>) -> Result<ProblemFile> {
    match (problem, result) {
        (Some(p), _) => ProblemFile::load(p),
        (None, Some(r)) => Ok(r.problem.clone()),
        (None, None) => Err(ParseError::Problem("need --problem or --result".into()).into()),
    }
}

fn cmd_volume(a: VolumeArgs) -> Result<()> {
    let result = a.result.as_deref().map(ResultFile::load).transpose()?;
    let problem = load_problem(a.problem.as_deref(), result.as_ref())?;
    let spec = problem.spec()?;
    let plan = match (a.grid, a.samples) {
        (Some(points), _) => SamplingPlan::Grid { points },
        (None, Some(samples)) => SamplingPlan::MonteCarlo { samples, seed: a.seed },
        (None, None) => problem.sampling,
    };
    let est = estimate_roa(&spec, plan, &problem.sim)?;
    let mut report = VolumeReport {
        plan,
        vol_roa: est.volume,
        std_error: est.std_error,
        uncertain: est.labels.iter().filter(|l| **l == Label::BoundaryUncertain).count(),
        records: Vec::new(),
    };
    if let Some(result) = &result {
        let mut ws = Vec::new();
        for rec in &result.records {
            let Some(w) = rec.w_poly(spec.n())? else {
                continue;
            };
            let wc = CompiledPoly::new(&w);
            let single = est.volume_error(&spec, |x| wc.eval(x))?;
            ws.push(w);
            let rm = running_min_of(&ws)?;
            let joint = est.volume_error(&spec, |x| rm.eval(x))?;
            report.records.push(VolumeRecord {
                deg_w: rec.deg_w,
                deg_v: rec.deg_v,
                vol_inner: single.vol_inner,
                relative_error: single.relative_error,
                running_min_vol_inner: joint.vol_inner,
                running_min_relative_error: joint.relative_error,
                violations: single.violations.len(),
            });
        }
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_samples_fill_a_ball() {
        let p = ProblemFile::parse(
            r#"
name = "disk"
n = 2
dynamics = ["-x1", "-x2"]
g_x = "1 - x1^2 - x2^2"
g_t = "0.25 - x1^2 - x2^2"
T = 1.0
degrees = [4]

[domain]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0
"#,
        )
        .unwrap();
        let spec = p.spec().unwrap();
        let pts = samples_in_domain(&spec, 1000, 3).unwrap();
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|x| x[0] * x[0] + x[1] * x[1] <= 1.0));
        // a prefix of a larger draw
        assert_eq!(pts[..500], samples_in_domain(&spec, 500, 3).unwrap()[..]);
    }
}
