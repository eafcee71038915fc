//! The trajectory oracle and the relaxations against independent references.

mod common;

use common::{cubic, problem_path, vanderpol};
use roa_core::cli::ProblemFile;
use roa_core::poly::CompiledPoly;
use roa_core::relax::{solve_relaxation, Degrees};
use roa_core::sim::{estimate_roa, in_roa, Label, SamplingPlan};

fn load(name: &str) -> ProblemFile {
    ProblemFile::load(&problem_path(name)).unwrap()
}

#[test]
fn analytic_cubic_flow_is_consistent() {
    // closed form against a fine explicit Euler run
    for &x0 in &[0.1, 0.45, -0.3, 0.52] {
        let mut x: f64 = x0;
        let h = 1e-5;
        for _ in 0..100_000 {
            x += h * (x * x * x - 0.25 * x);
        }
        let u = cubic::square_at(x0, 1.0).unwrap();
        assert!((x * x - u).abs() < 1e-5, "{x0}: {} vs {u}", x * x);
    }
    let edge = cubic::roa_edge(10.0);
    assert!((edge - 0.49703).abs() < 1e-4, "{edge}");
    assert!(cubic::in_roa(edge - 1e-6, 10.0, 1.0));
    assert!(!cubic::in_roa(edge + 1e-6, 10.0, 1.0));
}

#[test]
fn cubic_labels_match_the_closed_form() {
    let p = load("cubic.toml");
    let spec = p.spec().unwrap();
    let est = estimate_roa(&spec, p.sampling, &p.sim).unwrap();
    let edge = cubic::roa_edge(10.0);
    let mut wrong = 0;
    for (x, l) in est.points.iter().zip(&est.labels) {
        let truth = cubic::in_roa(x[0], 10.0, 1.0);
        match l {
            Label::InRoa if !truth => wrong += 1,
            Label::OutRoa if truth => wrong += 1,
            Label::BoundaryUncertain => assert!((x[0].abs() - edge).abs() < 1e-3, "{x:?}"),
            _ => {}
        }
    }
    assert_eq!(wrong, 0);
    // the finite horizon leaves slightly less than [-1/2, 1/2]
    assert!((est.volume - 2.0 * edge).abs() <= 2.0 * est.weight, "{}", est.volume);
}

#[test]
fn vanderpol_labels_match_an_adaptive_integrator() {
    let p = load("vanderpol.toml");
    let spec = p.spec().unwrap();
    let sys = spec.compiled();
    let plan = SamplingPlan::MonteCarlo {
        samples: 3000,
        seed: 11,
    };
    let (points, _) = plan.points(&spec).unwrap();
    let mut agree = 0;
    let mut decided = 0;
    for x in &points {
        let label = in_roa(&sys, 1.0, x, &p.sim);
        if label == Label::BoundaryUncertain {
            continue;
        }
        decided += 1;
        if (label == Label::InRoa) == vanderpol::in_roa(x) {
            agree += 1;
        }
    }
    assert!(decided as f64 > 0.99 * points.len() as f64);
    let frac = agree as f64 / decided as f64;
    assert!(frac >= 0.998, "agreement {frac}");
}

#[test]
fn cubic_degree_16_inner_set_is_inside_the_analytic_roa() {
    let p = load("cubic.toml");
    let spec = p.spec().unwrap();
    let r = solve_relaxation(&spec, Degrees::uniform(16), &p.relax).unwrap();
    let w = CompiledPoly::new(&r.w);
    let edge = cubic::roa_edge(10.0);
    let mut inner = 0;
    for i in 0..=4000 {
        let x = -1.0 + i as f64 / 2000.0;
        if w.eval(&[x]) < 1.0 {
            inner += 1;
            assert!(x.abs() < edge, "w({x}) < 1 outside the ROA");
            assert!(x.abs() < 0.62);
        }
    }
    assert!(inner > 0);
    // the certificate bounds the complement volume
    assert!(2.0 - r.dual_opt <= 2.0 * edge + 1e-6, "d* = {}", r.dual_opt);
}
