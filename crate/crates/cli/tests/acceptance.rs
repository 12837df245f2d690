//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line;
//! run with `--nocapture` to see them.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lvseasons_core::classify::{boundary_portrait, classify_permanence, Verdict, Witness};
use lvseasons_core::orbit::{attractor_detect, iterate_orbit, log_coordinate_floor, AttractorKind, AttractorReport};
use lvseasons_core::params::{presets, validate_params};
use lvseasons_core::poincare::{
    axial_closed_form, axial_fixed_point_newton, interior_fixed_points, poincare_jacobian, poincare_map,
    theta_hat, FixedPointRecord,
};
use lvseasons_core::{IntegratorConfig, SeasonalParams, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg() -> IntegratorConfig {
    IntegratorConfig::default()
}

fn verdict_line(n: u32, pass: bool, detail: &str) -> bool {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn boundary_points(p: &SeasonalParams) -> Vec<FixedPointRecord> {
    boundary_portrait(p, &cfg()).unwrap().points().cloned().collect()
}

fn random_start(rng: &mut ChaCha8Rng) -> State {
    State::new(rng.random_range(0.1..2.0), rng.random_range(0.1..2.0), rng.random_range(0.1..2.0))
}

/// Hand arithmetic on the growth rates and invasion exponents.
fn vartheta_by_hand(p: &SeasonalParams) -> f64 {
    let (t, s) = (p.good_season(), p.bad_season());
    let r: Vec<f64> = (0..3).map(|i| p.b()[i] * t - p.mu()[i] * s).collect();
    let a = p.a();
    let w = |i: usize, j: usize| r[j] - a[(j, i)] * r[i] / a[(i, i)];
    w(0, 1) * w(1, 2) * w(2, 0) + w(1, 0) * w(0, 2) * w(2, 1)
}

#[test]
fn criterion_01_example_one_classification() {
    let p = presets::example(1).unwrap();
    let start = Instant::now();
    let c = classify_permanence(&p, &cfg()).unwrap();
    let elapsed = start.elapsed();
    let by_hand = vartheta_by_hand(&p);
    let cycle_witness = matches!(c.verdict.witness, Witness::HeteroclinicCycle { vartheta, .. } if vartheta > 0.0);
    let pass = c.verdict.verdict == Verdict::Permanent
        && cycle_witness
        && (by_hand - 0.1165390625).abs() < 1e-9
        && (c.derived.vartheta - by_hand).abs() < 1e-9
        && elapsed < Duration::from_secs(1);
    let detail = format!("verdict {:?}, vartheta {by_hand:.10}, {elapsed:.2?}", c.verdict.verdict);
    assert!(verdict_line(1, pass, &detail));
}

#[test]
fn criterion_02_examples_two_and_three_permanent() {
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [2, 3] {
        let start = Instant::now();
        let c = classify_permanence(&presets::example(k).unwrap(), &cfg()).unwrap();
        let elapsed = start.elapsed();
        pass &= c.verdict.verdict == Verdict::Permanent && elapsed < Duration::from_secs(5);
        detail.push(format!("example {k}: {:?} in {elapsed:.2?}", c.verdict.verdict));
    }
    assert!(verdict_line(2, pass, &detail.join("; ")));
}

fn curve_certified(r: &AttractorReport) -> bool {
    let Some(d) = &r.curve_diagnostics else { return false };
    r.kind == AttractorKind::ClosedCurve
        && d.diameter > 1e-3
        && d.min_gap_to_fixed_points.is_some_and(|g| g > 1e-3)
        && d.closure_defect < 0.05 * d.diameter
}

#[test]
fn criterion_03_invariant_closed_curves() {
    let mut pass = true;
    for k in 1..=3 {
        let start = Instant::now();
        let p = presets::example(k).unwrap();
        let x0 = State::from(presets::example_initial_value(k).unwrap());
        let mut known: Vec<State> = boundary_points(&p).iter().map(|r| r.theta).collect();
        known.extend(interior_fixed_points(&p, &cfg(), 0).unwrap().iter().map(|r| r.theta));
        known.push(State::zeros());

        let short = iterate_orbit(&p, &x0, 2000, &cfg()).unwrap();
        let long = iterate_orbit(&p, &x0, 4000, &cfg()).unwrap();
        let a = attractor_detect(&p, &short, &known, &cfg()).unwrap();
        let b = attractor_detect(&p, &long, &known, &cfg()).unwrap();
        let elapsed = start.elapsed();
        let ok = curve_certified(&a) && a.kind == b.kind && elapsed < Duration::from_secs(60);
        pass &= ok;
        let d = a.curve_diagnostics.as_ref();
        let detail = format!(
            "example {k}: n=2000 {:?}, n=4000 {:?}, diameter {:.4}, min gap {:.4}, closure {:.2}% of diameter, {elapsed:.2?}",
            a.kind,
            b.kind,
            d.map_or(f64::NAN, |d| d.diameter),
            d.and_then(|d| d.min_gap_to_fixed_points).unwrap_or(f64::NAN),
            d.map_or(f64::NAN, |d| 100.0 * d.closure_ratio()),
        );
        verdict_line(3, ok, &detail);
    }
    assert!(pass);
}

#[test]
fn criterion_04_transversal_multipliers_are_eigenvalues() {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in 1..=3 {
        let p = presets::example(k).unwrap();
        let r = p.derive().r;
        for rec in boundary_points(&p) {
            let th = theta_hat(&p, &rec.theta, &cfg()).unwrap();
            let dp = poincare_jacobian(&p, &rec.theta, &cfg()).unwrap();
            // A row that vanishes off the diagonal makes its diagonal entry an
            // exact eigenvalue; a dense solver loses such entries when they
            // are tiny (down to 1e-36 here), so include them directly.
            let mut eig: Vec<(f64, f64)> = dp.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
            for i in 0..3 {
                if (0..3).all(|j| j == i || dp[(i, j)] == 0.0) {
                    eig.push((dp[(i, i)], 0.0));
                }
            }
            for i in (0..3).filter(|&i| !rec.support.contains(i)) {
                let analytic = (r[i] - p.a().row(i).dot(&th.transpose())).exp();
                let best = eig
                    .iter()
                    .map(|&(re, im)| (re - analytic).hypot(im) / analytic)
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
                count += 1;
            }
        }
    }
    let pass = count > 0 && worst < 1e-6;
    assert!(verdict_line(4, pass, &format!("{count} multipliers, worst relative mismatch {worst:.2e}")));
}

#[test]
fn criterion_05_moment_vectors() {
    let mut worst_axial: f64 = 0.0;
    let mut worst_planar: f64 = 0.0;
    let mut planar = 0;
    for k in 1..=3 {
        let p = presets::example(k).unwrap();
        let d = p.derive();
        for rec in boundary_points(&p) {
            let th = theta_hat(&p, &rec.theta, &cfg()).unwrap();
            let s: Vec<usize> = rec.support.species().collect();
            match s.as_slice() {
                [i] => worst_axial = worst_axial.max(rel_err(th[*i], d.r[*i] / p.a()[(*i, *i)])),
                [i, j] => {
                    planar += 1;
                    worst_planar = worst_planar.max(rel_err(th[*i], d.beta[*i][*j].unwrap()));
                    worst_planar = worst_planar.max(rel_err(th[*j], d.beta[*j][*i].unwrap()));
                }
                _ => unreachable!(),
            }
        }
    }
    let pass = worst_axial < 1e-8 && worst_planar < 1e-7;
    let detail = format!("axial worst {worst_axial:.2e}, planar worst {worst_planar:.2e} over {planar} planar points");
    assert!(verdict_line(5, pass, &detail));
}

#[test]
fn criterion_06_jacobian_against_finite_differences() {
    let tight = IntegratorConfig::with_tolerances(1e-12, 1e-14);
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for k in 1..=3 {
        let p = presets::example(k).unwrap();
        for _ in 0..10 {
            let x = random_start(&mut rng);
            let jac = poincare_jacobian(&p, &x, &tight).unwrap();
            for j in 0..3 {
                let mut up = x;
                let mut down = x;
                up[j] += h;
                down[j] -= h;
                let col = (poincare_map(&p, &up, &tight).unwrap() - poincare_map(&p, &down, &tight).unwrap()) / (2.0 * h);
                for i in 0..3 {
                    worst = worst.max(rel_err(col[i], jac[(i, j)]));
                }
            }
        }
    }
    assert!(verdict_line(6, worst < 1e-5, &format!("worst componentwise relative error {worst:.2e}")));
}

#[test]
fn criterion_07_axis_closed_form() {
    let logistic = |b: f64, a: f64, x: f64, t: f64| b * x / (a * x + (b - a * x) * (-b * t).exp());
    let mut worst_map: f64 = 0.0;
    let mut worst_fp: f64 = 0.0;
    for k in 1..=3 {
        let p = presets::example(k).unwrap();
        let c = p.derive().c;
        for i in 0..3 {
            let (b, a) = (p.b()[i], p.a()[(i, i)]);
            for s in 0..20 {
                let v = 0.05 + 0.15 * s as f64;
                let mut x = State::zeros();
                x[i] = v;
                let got = poincare_map(&p, &x, &cfg()).unwrap();
                let expected = logistic(b, a, c[i] * v, p.good_season());
                worst_map = worst_map.max(rel_err(got[i], expected));
                assert!(got.iter().enumerate().all(|(m, &g)| m == i || g == 0.0));
            }
            let closed = axial_closed_form(&p, i).unwrap();
            let newton = axial_fixed_point_newton(&p, i, &cfg()).unwrap().unwrap();
            worst_fp = worst_fp.max(rel_err(newton, closed));
        }
    }
    let pass = worst_map < 1e-10 && worst_fp < 1e-10;
    let detail = format!("map worst {worst_map:.2e}, fixed point worst {worst_fp:.2e}");
    assert!(verdict_line(7, pass, &detail));
}

#[test]
fn criterion_08_permanence_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pass = true;
    let mut detail = Vec::new();
    for k in 1..=3 {
        let p = presets::example(k).unwrap();
        assert_eq!(classify_permanence(&p, &cfg()).unwrap().verdict.verdict, Verdict::Permanent);
        let mut log_delta = f64::INFINITY;
        for _ in 0..20 {
            let x0 = random_start(&mut rng);
            log_delta = log_delta.min(log_coordinate_floor(&p, &x0, 500, 2000, &cfg()).unwrap());
        }
        let delta = log_delta.exp();
        pass &= delta > 0.0;
        detail.push(format!("example {k} delta {delta:.4e}"));
    }

    let dom = presets::dominance();
    assert_eq!(classify_permanence(&dom, &cfg()).unwrap().verdict.verdict, Verdict::Impermanent);
    let mut lowest = f64::INFINITY;
    for _ in 0..20 {
        let x0 = random_start(&mut rng);
        lowest = lowest.min(log_coordinate_floor(&dom, &x0, 2000, 2000, &cfg()).unwrap());
    }
    pass &= lowest < 1e-6f64.ln();
    detail.push(format!("dominance smallest ln coordinate at k=2000 {lowest:.1}"));
    assert!(verdict_line(8, pass, &detail.join("; ")));
}

#[test]
fn criterion_09_extinction() {
    let mut raw = presets::example_1();
    raw.mu[0] = 10.0;
    let p = validate_params(&raw).unwrap();
    assert!(p.derive().r[0] < 0.0);
    let mut x = State::new(1.0, 0.0, 0.0);
    let mut fell_at = None;
    for k in 1..=2000 {
        x = poincare_map(&p, &x, &cfg()).unwrap();
        if x[0] < 1e-8 {
            fell_at = Some(k);
            break;
        }
    }
    let c = classify_permanence(&p, &cfg()).unwrap();
    let cites = matches!(&c.verdict.witness, Witness::Extinction { species } if species.contains(&0));
    let pass = fell_at.is_some() && c.verdict.verdict == Verdict::Impermanent && cites;
    let detail = format!("axis orbit below 1e-8 at k = {fell_at:?}, verdict {:?}", c.verdict.verdict);
    assert!(verdict_line(9, pass, &detail));
}

fn run_example(dir: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_lvseasons"))
        .args(["example", "1", "--out-dir"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn criterion_10_deterministic_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_example(a.path());
    run_example(b.path());
    let mut pass = true;
    let mut compared = Vec::new();
    for name in ["timeseries.csv", "orbit.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        pass &= !x.is_empty() && x == y;
        compared.push(format!("{name} ({} bytes)", x.len()));
    }
    assert!(verdict_line(10, pass, &format!("identical: {}", compared.join(", "))));
}
