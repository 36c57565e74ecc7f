//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rggcount::config::{ShapeSpec, TestKind};
use rggcount::densities::DensitySpec;
use rggcount::geometry::ball_volume;
use rggcount::harness::{
    palm_mean_check, replication_rng, run_clt_experiment, run_core_experiment,
    run_poisson_layer_experiment, with_workers,
};
use rggcount::oracle::{b_constant, brownian_identity_check};
use rggcount::{
    count_decomposed, covariance_l, covariance_m, sample_poisson_cloud, Atlas, CountRequest,
    ExperimentConfig, GraphShape, IndicatorMode, McSettings, OracleParams, PointCloud,
    RadialDensity, RadiusSchedule, Regime,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn heavy_config(schedule: RadiusSchedule, ladder: Vec<f64>, replications: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(
        r#"
t_grid = [0.5, 1.0, 1.5, 2.0]
n_ladder = [1e4]
replications = 2
master_seed = 2024

[density]
family = "power"
d = 2
alpha = 4

[schedule]
kind = "weak_core"

[shape]
kind = "complete"
k = 2
"#,
    )
    .expect("benchmark config parses");
    cfg.schedule = schedule;
    cfg.n_ladder = ladder;
    cfg.replications = replications;
    cfg
}

/// Exhaustive agreement on random small clouds.
fn counting_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid: Vec<f64> = (1..=8).map(|i| 0.15 * i as f64).collect();
    let mut mismatches = 0;
    let mut compared = 0;
    for cloud_id in 0..100 {
        let d = 1 + cloud_id % 3;
        let k = 2 + (cloud_id / 3) % 3;
        let size = rng.random_range(k..=40);
        let side = rng.random_range(1.0..3.0);
        let coords: Vec<f64> = (0..size * d).map(|_| rng.random_range(-side..side)).collect();
        let cloud = PointCloud::new(d, coords).unwrap();
        let atlas = Atlas::build(k).unwrap();
        let shape = atlas.classes()[rng.random_range(0..atlas.len())].clone();
        let r = if cloud_id % 2 == 0 { 0.0 } else { side * 0.3 };
        let req = CountRequest::new(shape.clone(), grid.clone(), r);
        let fast = count_decomposed(&cloud, &req).unwrap();
        for mode in IndicatorMode::ALL {
            let slow = common::reference_counts(&cloud, &shape, &grid, r, mode);
            compared += 1;
            if fast.get(mode).counts != slow {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatching curves of {compared}"))
}

/// Closed-form covariance and the Brownian constant.
fn oracle_closed_form() -> Outcome {
    let shape = GraphShape::complete(2).unwrap();
    let params = OracleParams::new(2, shape, 2, vec![1.0], McSettings::new(1_000_000, 17));
    let l = covariance_l(&params, 4.0).unwrap();
    let target = PI * PI / 6.0;
    let rel_l = (l.get(0, 0) / target - 1.0).abs();
    let check = brownian_identity_check(&params.clone().with_mode(IndicatorMode::Plus), 4.0).unwrap();
    let closed = b_constant(2, 2, 2, 4.0).unwrap() * ball_volume(2);
    let rel_k = (check.constant / closed - 1.0).abs();
    outcome(
        rel_l <= 0.02 && rel_k <= 0.02,
        format!(
            "L2(1,1)={:.5} vs {target:.5} (rel {rel_l:.2e}); K+={:.5} vs B*omega={closed:.5} (rel {rel_k:.2e})",
            l.get(0, 0),
            check.constant
        ),
    )
}

/// Scaling exponent of `L_l(ct, ct)`.
fn self_similarity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, k, ell) in [(2usize, 2usize, 1usize), (2, 2, 2), (2, 3, 2)] {
        let shape = GraphShape::complete(k).unwrap();
        let params = OracleParams::new(d, shape, ell, vec![1.0, 2.0, 4.0], McSettings::new(400_000, 23 + ell as u64));
        let l = covariance_l(&params, 4.0).unwrap();
        let expected = (d * (2 * k - ell - 1)) as f64;
        for (idx, c) in [(1usize, 2.0f64), (2, 4.0)] {
            let slope = (l.get(idx, idx) / l.get(0, 0)).ln() / c.ln();
            let se = ((l.se(idx, idx) / l.get(idx, idx)).powi(2) + (l.se(0, 0) / l.get(0, 0)).powi(2)).sqrt() / c.ln();
            let ok = (slope - expected).abs() <= 3.0 * se;
            pass &= ok;
            parts.push(format!("(d={d},k={k},l={ell},c={c}) {slope:.4}+-{se:.4} vs {expected}"));
        }
    }
    outcome(pass, parts.join("; "))
}

/// `M_l / L_l` at `c = inf`.
fn light_heavy_bridge() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, k, ell, alpha) in [(2usize, 2usize, 2usize, 4.0f64), (2, 2, 1, 4.0)] {
        let shape = GraphShape::complete(k).unwrap();
        let params = OracleParams::new(d, shape, ell, vec![1.0], McSettings::new(1_000_000, 31 + ell as u64));
        let l = covariance_l(&params, alpha).unwrap();
        let m = covariance_m(&params, f64::INFINITY, None).unwrap();
        let ratio = m.get(0, 0) / l.get(0, 0);
        let expected = alpha - d as f64 / (2 * k - ell) as f64;
        let rel = (ratio / expected - 1.0).abs();
        pass &= rel <= 0.03;
        parts.push(format!("(d={d},k={k},l={ell}) {ratio:.4} vs {expected:.4}"));
    }
    outcome(pass, parts.join("; "))
}

fn heavy_sparse_clt() -> (Outcome, bool) {
    let mut cfg = heavy_config(RadiusSchedule::Power { c0: 1.0, beta: 0.3 }, vec![1e4, 1e5, 1e6], 1000);
    cfg.tests = vec![TestKind::Clt];
    let out = run_clt_experiment(&cfg).unwrap();
    let top = out.rungs.last().unwrap();
    let ratios: Vec<String> = out.rungs.iter().map(|r| format!("{:.3}+-{:.3}", r.focus_ratio, r.focus_ratio_se)).collect();
    let pass = out.regime.regime == Regime::Sparse
        && out.monotone_approach
        && (0.8..=1.2).contains(&top.focus_ratio)
        && top.skewness.abs() <= 0.3
        && top.excess_kurtosis.abs() <= 0.6
        && top.ks_p >= 0.01;
    let exact = out.rungs.iter().all(|r| r.decomposition_exact && r.monotone_parts);
    (
        outcome(
            pass,
            format!(
                "regime {}; ratios {}; monotone {}; skew {:.3} exkurt {:.3} KS p {:.3e}",
                out.regime.regime.name(),
                ratios.join(" -> "),
                out.monotone_approach,
                top.skewness,
                top.excess_kurtosis,
                top.ks_p
            ),
        ),
        exact,
    )
}

fn critical_regime() -> (Outcome, bool) {
    let cfg = heavy_config(RadiusSchedule::WeakCore, vec![1e4, 1e5, 1e6], 1000);
    let out = run_clt_experiment(&cfg).unwrap();
    let top = out.rungs.last().unwrap();
    let tau_exact = (top.tau / top.r.powi(2) - 1.0).abs() < 1e-12;
    let critical = matches!(out.regime.regime, Regime::Critical { .. });
    let ratios: Vec<String> = out.rungs.iter().map(|r| format!("{:.3}+-{:.3}", r.focus_ratio, r.focus_ratio_se)).collect();
    let exact = out.rungs.iter().all(|r| r.decomposition_exact && r.monotone_parts);
    (
        outcome(
            critical && tau_exact && (0.75..=1.25).contains(&top.focus_ratio),
            format!("regime {:?}; tau = R^d: {tau_exact}; ratios {}", out.regime.regime, ratios.join(" -> ")),
        ),
        exact,
    )
}

fn poisson_layer() -> Outcome {
    let mut cfg = heavy_config(RadiusSchedule::PoissonLayer { k: 2 }, vec![1e6], 2000);
    cfg.poisson.t = 1.0;
    let density = RadialDensity::new(cfg.density).unwrap();
    let layer = RadiusSchedule::PoissonLayer { k: 2 }.radius(&density, 1e6).unwrap();
    let closed = (density.c() * 1e6f64).powf(1.0 / 3.0);
    let out = run_poisson_layer_experiment(&cfg).unwrap();
    let top = out.rungs.last().unwrap();
    let radius_ok = (layer / closed - 1.0).abs() < 1e-3;
    outcome(
        radius_ok && (0.8..=1.2).contains(&top.dispersion) && top.p_value >= 0.01,
        format!(
            "R={layer:.3} vs (Cn)^(1/3)={closed:.3}; mean {:.3}; dispersion {:.3}; chi2 {:.2} on {} df, p {:.3}",
            top.mean, top.dispersion, top.chi_square, top.df, top.p_value
        ),
    )
}

fn light_tail() -> (Outcome, bool) {
    let mut cfg = heavy_config(RadiusSchedule::Band { k: 2, theta: 0.5 }, vec![1e4, 1e5, 1e6], 1000);
    cfg.density = DensitySpec::VonMises { d: 2, tau: 1.0 };
    let out = run_clt_experiment(&cfg).unwrap();
    let top = out.rungs.last().unwrap();
    let ratios: Vec<String> = out.rungs.iter().map(|r| format!("{:.3}+-{:.3}", r.focus_ratio, r.focus_ratio_se)).collect();
    let exact = out.rungs.iter().all(|r| r.decomposition_exact && r.monotone_parts);
    (
        outcome(
            out.regime.regime == Regime::Sparse && out.monotone_approach && (0.7..=1.3).contains(&top.focus_ratio),
            format!("regime {}; ratios {}; trend {}", out.regime.regime.name(), ratios.join(" -> "), out.monotone_approach),
        ),
        exact,
    )
}

fn core_coverage() -> Outcome {
    let mut cfg = heavy_config(RadiusSchedule::WeakCore, vec![1e4, 1e5, 1e6], 200);
    cfg.core.delta2 = Some(0.5);
    cfg.core.radius_factors = vec![1.0, 1.5];
    let out = run_core_experiment(&cfg).unwrap();
    let freqs: Vec<f64> = out.rungs.iter().map(|r| r.frequencies[0].1).collect();
    let non_decreasing = out.report.check("frequency_non_decreasing").unwrap().pass;
    let radius_monotone = out.rungs.iter().all(|r| r.frequencies[1].1 <= r.frequencies[0].1);
    let spots = out.rungs.iter().all(|r| r.spot_violations == 0);
    let top = *freqs.last().unwrap();
    outcome(
        non_decreasing && top >= 0.9 && radius_monotone && spots,
        format!(
            "R_core {:?}; frequency at R {freqs:?}; at 1.5R {:?}; spot checks clean {spots}",
            out.rungs.iter().map(|r| (r.r_core * 1e3).round() / 1e3).collect::<Vec<_>>(),
            out.rungs.iter().map(|r| r.frequencies[1].1).collect::<Vec<_>>()
        ),
    )
}

fn palm_mean() -> Outcome {
    let mut cfg = heavy_config(RadiusSchedule::Power { c0: 1.0, beta: 0.3 }, vec![1e6], 2000);
    cfg.t_grid = vec![1.0];
    cfg.palm.samples = 1_000_000;
    let heavy = palm_mean_check(&cfg).unwrap();
    let row = &heavy.rows[0];

    // no exclusion and a radius exceeding every pairwise distance
    let n = 200.0;
    let reps = 4000;
    let shape = GraphShape::complete(2).unwrap();
    let density = RadialDensity::new(cfg.density).unwrap();
    let counts: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut rng = replication_rng(99, 0, rep);
            let cloud = sample_poisson_cloud(n, &density, &mut rng, None).unwrap();
            let req = CountRequest::new(shape.clone(), vec![1e9], 0.0);
            count_decomposed(&cloud, &req).unwrap().plain.counts[0] as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / reps as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
    let se = (var / reps as f64).sqrt();
    let z_exact = (mean - n * n / 2.0) / se;
    outcome(
        row.z.abs() <= 3.0 && z_exact.abs() <= 3.0,
        format!(
            "heavy: {:.4}+-{:.4} vs {:.4}+-{:.4} (z {:.2}); factorial: {mean:.1}+-{se:.1} vs {} (z {z_exact:.2})",
            row.empirical,
            row.empirical_se,
            row.predicted,
            row.predicted_se,
            row.z,
            n * n / 2.0
        ),
    )
}

fn determinism(exact_elsewhere: bool) -> Outcome {
    let mut cfg = heavy_config(RadiusSchedule::Power { c0: 1.0, beta: 0.3 }, vec![1e4, 1e5], 64);
    cfg.shape = ShapeSpec::Path { k: 3 };
    cfg.oracle.samples = 20_000;
    let one = with_workers(1, || run_clt_experiment(&cfg).unwrap().report).unwrap();
    let eight = with_workers(8, || run_clt_experiment(&cfg).unwrap().report).unwrap();
    let identical = one.tables == eight.tables && one.to_text() == eight.to_text();
    let exact_here = one.check("decomposition_exact").unwrap().pass && one.check("monotone_parts").unwrap().pass;
    outcome(
        identical && exact_here && exact_elsewhere,
        format!(
            "tables identical across 1 and 8 workers: {identical}; decomposition and monotone parts on every replication: {}",
            exact_here && exact_elsewhere
        ),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let mut failed = 0;
    let mut report = |id: usize, name: &str, started: Instant, o: Outcome| {
        println!(
            "criterion {id:2} {name:<26} {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };
    let s = Instant::now();
    report(1, "counting exactness", s, counting_exactness());
    let s = Instant::now();
    report(2, "oracle closed form", s, oracle_closed_form());
    let s = Instant::now();
    report(3, "self-similarity", s, self_similarity());
    let s = Instant::now();
    report(4, "light/heavy bridge", s, light_heavy_bridge());
    let s = Instant::now();
    let (o, exact5) = heavy_sparse_clt();
    report(5, "heavy sparse CLT", s, o);
    let s = Instant::now();
    let (o, exact6) = critical_regime();
    report(6, "critical regime", s, o);
    let s = Instant::now();
    report(7, "Poisson layer", s, poisson_layer());
    let s = Instant::now();
    let (o, exact8) = light_tail();
    report(8, "light tail", s, o);
    let s = Instant::now();
    report(9, "core coverage", s, core_coverage());
    let s = Instant::now();
    report(10, "Palm mean", s, palm_mean());
    let s = Instant::now();
    report(11, "determinism/decomposition", s, determinism(exact5 && exact6 && exact8));
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
