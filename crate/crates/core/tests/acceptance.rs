//! Acceptance criteria: one PASS/FAIL line each. Set
//! `ROA_ACCEPTANCE_EXTENDED=1` to add the optional high-degree runs.

mod common;

use std::time::Instant;

use common::{exponents, mc_moment, problem_path};
use roa_core::cli::{sweep, validate, ProblemFile, Record, ResultFile};
use roa_core::moments::{lebesgue_moments, DomainDescriptor};
use roa_core::poly::MultiIndex;
use roa_core::relax::{solve_primal, Degrees};
use roa_core::sim::{estimate_roa, Label, SamplingPlan, SimOptions};

const VALIDATION_SAMPLES: usize = 10_000;
const SEED: u64 = 20_240_601;

#[derive(Default)]
struct Suite {
    passed: usize,
    failed: usize,
    skipped: usize,
}

impl Suite {
    fn check(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {id}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    }

    fn skip(&mut self, id: &str, why: &str) {
        self.skipped += 1;
        println!("SKIP {id}: {why}");
    }
}

fn load(name: &str) -> ProblemFile {
    ProblemFile::load(&problem_path(name)).expect("bundled problem file parses")
}

fn run_sweep(problem: &ProblemFile, degrees: &[Degrees]) -> ResultFile {
    let start = Instant::now();
    let r = sweep(problem, degrees, 0, true).expect("sweep runs");
    println!(
        "  [{}: {} solves in {:.1}s]",
        problem.name,
        degrees.len(),
        start.elapsed().as_secs_f64()
    );
    r
}

fn record(r: &ResultFile, deg_w: u32, deg_v: u32) -> &Record {
    r.records
        .iter()
        .find(|x| x.deg_w == deg_w && x.deg_v == deg_v)
        .expect("record present")
}

fn pct(x: Option<f64>) -> String {
    x.map_or("no result".into(), |e| format!("{:.2}%", 100.0 * e))
}

/// Relative volume error against `target` (percent) within `tol` points.
fn check_error(suite: &mut Suite, id: &str, rec: &Record, target: f64, tol: f64) {
    let ok = rec.relative_error.is_some_and(|e| (100.0 * e - target).abs() <= tol);
    suite.check(
        id,
        ok,
        format!(
            "deg_w {} deg_v {}: error {} (expected {target}% +- {tol} pp), status {:?}, {:.1}s",
            rec.deg_w,
            rec.deg_v,
            pct(rec.relative_error),
            rec.status,
            rec.wall_time_s
        ),
    );
}

fn check_inner(suite: &mut Suite, id: &str, result: &ResultFile) {
    let reports = validate(result, VALIDATION_SAMPLES, SEED, 1000).expect("validation runs");
    for r in &reports {
        suite.check(
            id,
            r.violations.is_empty(),
            format!(
                "{} deg_w {} deg_v {}: {} violations, {} boundary-uncertain over {} samples",
                result.problem.name,
                r.deg_w,
                r.deg_v,
                r.violations.len(),
                r.uncertain.len(),
                r.samples
            ),
        );
    }
    for rec in result.records.iter().filter(|r| r.w.is_none()) {
        suite.check(
            id,
            false,
            format!(
                "{} deg_w {} deg_v {}: no certificate",
                result.problem.name, rec.deg_w, rec.deg_v
            ),
        );
    }
}

fn check_monotone(suite: &mut Suite, id: &str, result: &ResultFile) {
    let mut recs: Vec<&Record> = result.records.iter().filter(|r| r.d_star.is_some()).collect();
    recs.sort_by_key(|r| r.k);
    let mut ok = true;
    for pair in recs.windows(2) {
        let (a, b) = (pair[0].d_star.unwrap(), pair[1].d_star.unwrap());
        if pair[1].k > pair[0].k && b > a + 1e-6 * a.abs().max(1.0) {
            ok = false;
        }
    }
    let column: Vec<String> = recs
        .iter()
        .map(|r| format!("k={} d*={:.8}", r.k, r.d_star.unwrap()))
        .collect();
    suite.check(id, ok, format!("{}: {}", result.problem.name, column.join(", ")));
}

fn check_residuals(suite: &mut Suite, id: &str, result: &ResultFile) {
    for rec in &result.records {
        let worst = rec.diagnostics.as_ref().map(|d| d.max_identity_residual());
        suite.check(
            id,
            worst.is_some_and(|w| w <= 1e-6),
            format!(
                "{} deg_w {} deg_v {}: max identity residual {} at 100 points",
                result.problem.name,
                rec.deg_w,
                rec.deg_v,
                worst.map_or("-".into(), |w| format!("{w:.2e}"))
            ),
        );
    }
}

fn check_complement(suite: &mut Suite, id: &str, result: &ResultFile) {
    let spec = result.problem.spec().unwrap();
    let plan = SamplingPlan::MonteCarlo {
        samples: VALIDATION_SAMPLES,
        seed: SEED,
    };
    let est = estimate_roa(&spec, plan, &result.problem.sim).unwrap();
    let se = est.std_error.unwrap();
    let dom = spec.domain().volume();
    for rec in &result.records {
        let Some(d) = rec.d_star else { continue };
        let lhs = dom - d;
        suite.check(
            id,
            lhs <= est.volume + 3.0 * se,
            format!(
                "{} deg_w {} deg_v {}: lambda(X) - d* = {lhs:.6} <= {:.6} + 3 * {se:.6}",
                result.problem.name, rec.deg_w, rec.deg_v, est.volume
            ),
        );
    }
}

fn check_moments(suite: &mut Suite) {
    let domains = [
        DomainDescriptor::Box {
            lower: vec![-1.0],
            upper: vec![1.0],
        },
        DomainDescriptor::Box {
            lower: vec![-1.0, 0.0],
            upper: vec![0.5, 2.0],
        },
        DomainDescriptor::Ball {
            center: vec![0.0, 0.0],
            radius: 1.1,
        },
        DomainDescriptor::Box {
            lower: vec![-0.5, -1.0, 0.0],
            upper: vec![1.0, 1.0, 1.0],
        },
        DomainDescriptor::Ball {
            center: vec![0.2, -0.1, 0.3],
            radius: 0.8,
        },
    ];
    let samples = 100_000;
    for (j, dom) in domains.iter().enumerate() {
        let n = dom.dim();
        let exact = lebesgue_moments(dom, n, 8).unwrap();
        let (lo, hi) = dom.bounding_box();
        let mut worst = 0.0f64;
        let mut outside = 0;
        let exps = exponents(n, 8);
        for alpha in &exps {
            let (mc, se) = mc_moment(alpha, &lo, &hi, |x| dom.contains(x), samples, SEED + j as u64);
            let a = exact.get(&MultiIndex::new(alpha.clone())).unwrap();
            let z = (a - mc).abs() / se.max(1e-300);
            if (a - mc).abs() > 3.0 * se + 1e-12 {
                outside += 1;
            }
            if se > 0.0 {
                worst = worst.max(z);
            }
        }
        suite.check(
            "C7 moments",
            outside == 0,
            format!(
                "{dom:?}: {} monomials to degree 8, {outside} outside 3 sigma (largest |z| {worst:.2}, {samples} samples)",
                exps.len()
            ),
        );
    }
}

fn check_label_stability(suite: &mut Suite, problem: &ProblemFile) {
    let spec = problem.spec().unwrap();
    let plan = SamplingPlan::MonteCarlo {
        samples: VALIDATION_SAMPLES,
        seed: SEED,
    };
    let coarse = estimate_roa(&spec, plan, &problem.sim).unwrap();
    let fine_opts = SimOptions {
        steps: 2 * problem.sim.steps,
        ..problem.sim
    };
    let fine = estimate_roa(&spec, plan, &fine_opts).unwrap();
    let same = coarse.labels.iter().zip(&fine.labels).filter(|(a, b)| a == b).count();
    let frac = same as f64 / coarse.labels.len() as f64;
    let uncertain = coarse.labels.iter().filter(|l| **l == Label::BoundaryUncertain).count();
    suite.check(
        "C7 labels",
        frac >= 0.999,
        format!(
            "{}: {:.4}% of {} labels unchanged when the step is halved ({uncertain} uncertain)",
            problem.name,
            100.0 * frac,
            coarse.labels.len()
        ),
    );
}

fn main() {
    let extended = std::env::var_os("ROA_ACCEPTANCE_EXTENDED").is_some();
    let mut suite = Suite::default();
    let start = Instant::now();

    // cubic hierarchy
    let cubic = load("cubic.toml");
    let mut cubic_degrees = vec![Degrees::uniform(8), Degrees::uniform(12), Degrees::uniform(16)];
    if extended {
        cubic_degrees.extend([20, 24, 28].map(Degrees::uniform));
    }
    let cubic_res = run_sweep(&cubic, &cubic_degrees);
    check_error(&mut suite, "C1 cubic degree 16", record(&cubic_res, 16, 16), 11.4, 3.0);
    if extended {
        for (d, target) in [(20, 6.4), (24, 4.84), (28, 4.54)] {
            check_error(&mut suite, "C1 extended", record(&cubic_res, d, d), target, 3.0);
        }
    } else {
        suite.skip("C1 extended", "cubic degrees 20/24/28 need ROA_ACCEPTANCE_EXTENDED=1");
    }

    // low-order cubic
    let low = load("cubic_low_order.toml");
    let low_res = run_sweep(&low, &[Degrees::new(6, 16)]);
    let rec = record(&low_res, 6, 16);
    suite.check(
        "C2 low-order cubic",
        rec.relative_error.is_some_and(|e| e <= 0.05),
        format!(
            "deg_w 6 deg_v 16 on [-0.7, 0.7]: error {} (accept <= 5%)",
            pct(rec.relative_error)
        ),
    );

    // Van der Pol
    let vdp = load("vanderpol.toml");
    let mut vdp_degrees = vec![Degrees::uniform(9), Degrees::uniform(12)];
    if extended {
        vdp_degrees.extend([15, 18].map(Degrees::uniform));
    }
    let vdp_res = run_sweep(&vdp, &vdp_degrees);
    check_error(&mut suite, "C3 Van der Pol degree 9", record(&vdp_res, 9, 9), 18.3, 5.0);
    check_error(
        &mut suite,
        "C3 Van der Pol degree 12",
        record(&vdp_res, 12, 12),
        8.4,
        5.0,
    );
    if extended {
        for (d, target) in [(15, 3.8), (18, 3.1)] {
            check_error(&mut suite, "C3 extended", record(&vdp_res, d, d), target, 5.0);
        }
    } else {
        suite.skip(
            "C3 extended",
            "Van der Pol degrees 15/18 need ROA_ACCEPTANCE_EXTENDED=1",
        );
    }

    // certificates
    for r in [&cubic_res, &low_res, &vdp_res] {
        check_inner(&mut suite, "C4 inner-ness", r);
    }
    for r in [&cubic_res, &vdp_res] {
        check_monotone(&mut suite, "C5 monotone d*", r);
    }

    // independent moment-program solves
    let spec = cubic.spec().unwrap();
    for d in [8u32, 12] {
        let t = Instant::now();
        let dual = record(&cubic_res, d, d).d_star;
        match (solve_primal(&spec, Degrees::uniform(d), &cubic.relax), dual) {
            (Ok((p, _)), Some(dstar)) => {
                let gap = (p - dstar).abs();
                suite.check(
                    "C6 zero gap",
                    gap <= 1e-4 * (1.0 + dstar.abs()),
                    format!(
                        "cubic degree {d}: p* = {p:.9}, d* = {dstar:.9}, |gap| = {gap:.2e} (primal {:.1}s)",
                        t.elapsed().as_secs_f64()
                    ),
                );
            }
            (Err(e), _) => suite.check("C6 zero gap", false, format!("cubic degree {d}: moment program: {e}")),
            (_, None) => suite.check("C6 zero gap", false, format!("cubic degree {d}: no dual optimum")),
        }
    }

    // oracle and unit suites
    check_moments(&mut suite);
    for r in [&cubic_res, &low_res, &vdp_res] {
        check_residuals(&mut suite, "C7 identity residuals", r);
    }
    check_label_stability(&mut suite, &cubic);
    check_label_stability(&mut suite, &vdp);

    // complement bound
    check_complement(&mut suite, "C8 complement bound", &cubic_res);
    check_complement(&mut suite, "C8 complement bound", &low_res);

    println!(
        "acceptance: {} passed, {} failed, {} skipped in {:.0}s",
        suite.passed,
        suite.failed,
        suite.skipped,
        start.elapsed().as_secs_f64()
    );
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
