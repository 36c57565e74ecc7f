use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rggcount::geometry::ball_volume;
use rggcount::oracle::{b_constant, d_constant, heavy_annulus_weight, psd_factor};
use rggcount::{
    brownian_identity_check, covariance_l, covariance_m, sample_limit_paths, GraphShape, IndicatorMode,
    LimitCovariance, McSettings, OracleParams,
};

fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::integrate(f, a, b, 1e-12).integral
}

fn params(shape: GraphShape, ell: usize, grid: Vec<f64>, samples: usize, seed: u64) -> OracleParams {
    OracleParams::new(2, shape, ell, grid, McSettings::new(samples, seed))
}

#[test]
fn constants_match_direct_evaluation() {
    assert!((b_constant(2, 2, 2, 4.0).unwrap() - PI / 6.0).abs() < 1e-14);
    assert!((b_constant(2, 2, 1, 4.0).unwrap() - PI / 5.0).abs() < 1e-14);
    assert!((d_constant(2, 2, 2).unwrap() - PI).abs() < 1e-14);
    assert!((d_constant(2, 2, 1).unwrap() - 2.0 * PI).abs() < 1e-14);
    // the 0-sphere has two points
    assert!((b_constant(1, 2, 2, 3.0).unwrap() - 2.0 / (2.0 * 5.0)).abs() < 1e-14);
    for d in 1..=3 {
        for k in 2..=4 {
            for ell in 1..=k {
                let alpha = 2.5;
                let m = alpha * (2 * k - ell) as f64 - d as f64;
                let lhs = d_constant(d, k, ell).unwrap();
                let rhs = b_constant(d, k, ell, alpha).unwrap() * m;
                assert!((lhs / rhs - 1.0).abs() < 1e-14);
            }
        }
    }
    assert!((heavy_annulus_weight(2, 4.0, 2, 1.0, 2.0).unwrap() - (1.0 - 2f64.powi(-6))).abs() < 1e-15);
}

/// `M_2(1,1)` and `M_1(1,1)` for a single edge in the plane at `c = 1`,
/// reduced by hand to one- and two-dimensional integrals.
#[test]
fn light_tail_pair_covariance_matches_quadrature() {
    // M_2 = D_2 int_disc e^{-|y_1|} / 2 dy = 2 pi int_0^{pi/2} e^{-sin u} cos^2 u du
    let m2 = 2.0 * PI * quad(|u: f64| (-u.sin()).exp() * u.cos().powi(2), 0.0, PI / 2.0);
    // M_1 = D_1 int_0^inf e^{-3 rho} g(rho)^2, g(rho) = int_disc e^{-y_1} 1{y_1 >= -rho} dy
    let g = |rho: f64| {
        let lo = (-rho).max(-1.0).asin();
        quad(|u: f64| (-u.sin()).exp() * 2.0 * u.cos().powi(2), lo, PI / 2.0)
    };
    let m1 = 2.0 * PI * (quad(|r| (-3.0 * r).exp() * g(r).powi(2), 0.0, 1.0) + quad(|r| (-3.0 * r).exp() * g(r).powi(2), 1.0, 40.0));
    let k2 = GraphShape::complete(2).unwrap();
    for (ell, expected) in [(2usize, m2), (1, m1)] {
        let cov = covariance_m(&params(k2.clone(), ell, vec![1.0], 400_000, 50 + ell as u64), 1.0, None).unwrap();
        let z = (cov.get(0, 0) - expected) / cov.se(0, 0);
        assert!(z.abs() < 4.0, "l={ell}: {} +- {} vs {expected}", cov.get(0, 0), cov.se(0, 0));
    }
}

#[test]
fn vanishing_radius_gives_zero_covariance() {
    let shape = GraphShape::path(3).unwrap();
    for ell in 1..=3 {
        let p = params(shape.clone(), ell, vec![0.0, 1.0], 20_000, 3);
        let l = covariance_l(&p, 4.0).unwrap();
        let m = covariance_m(&p, 2.0, None).unwrap();
        assert_eq!(l.get(0, 1), 0.0);
        assert_eq!(l.get(1, 0), 0.0);
        assert_eq!(m.get(0, 0), 0.0);
    }
}

#[test]
fn covariances_are_exactly_symmetric() {
    let grid = vec![0.3, 0.7, 1.0, 1.6];
    for shape in [GraphShape::path(3).unwrap(), GraphShape::star(4).unwrap()] {
        for ell in 1..=shape.k() {
            let p = params(shape.clone(), ell, grid.clone(), 20_000, 9);
            assert!(covariance_l(&p, 3.0).unwrap().is_symmetric());
            assert!(covariance_m(&p, 0.7, Some((0.0, 2.0))).unwrap().is_symmetric());
        }
    }
}

#[test]
fn infinite_scale_reduces_to_heavy_covariance() {
    for shape in [GraphShape::path(3).unwrap(), GraphShape::complete(3).unwrap()] {
        for ell in 1..=3 {
            let alpha = 4.0;
            let p = params(shape.clone(), ell, vec![1.0], 400_000, 70 + ell as u64);
            let l = covariance_l(&p, alpha).unwrap().get(0, 0);
            let m = covariance_m(&p, f64::INFINITY, None).unwrap().get(0, 0);
            let expected = alpha - 2.0 / (6 - ell) as f64;
            assert!((m / l / expected - 1.0).abs() < 0.03, "{} l={ell}: {}", shape.describe(), m / l);
        }
    }
}

#[test]
fn self_similarity_for_three_point_shapes() {
    for shape in [GraphShape::path(3).unwrap(), GraphShape::complete(3).unwrap()] {
        for ell in 1..=3 {
            let p = params(shape.clone(), ell, vec![0.5, 1.0, 2.0], 200_000, 90 + ell as u64);
            let l = covariance_l(&p, 4.0).unwrap();
            let expected = (2 * (6 - ell - 1)) as f64;
            for (i, c) in [(1usize, 2.0f64), (2, 4.0)] {
                let slope = (l.get(i, i) / l.get(0, 0)).ln() / c.ln();
                let se = ((l.se(i, i) / l.get(i, i)).powi(2) + (l.se(0, 0) / l.get(0, 0)).powi(2)).sqrt() / c.ln();
                assert!((slope - expected).abs() <= 3.0 * se + 1e-9, "{} l={ell} c={c}: {slope} +- {se}", shape.describe());
            }
        }
    }
}

#[test]
fn brownian_structure_of_top_order() {
    let k2 = GraphShape::complete(2).unwrap();
    let p = params(k2.clone(), 2, vec![0.5, 1.0, 2.0], 1_000_000, 5).with_mode(IndicatorMode::Plus);
    let check = brownian_identity_check(&p, 4.0).unwrap();
    let closed = b_constant(2, 2, 2, 4.0).unwrap() * ball_volume(2);
    assert!((check.constant / closed - 1.0).abs() < 0.02);
    for &(t, s, value, _, _) in &check.entries {
        let expected = closed * t.min(s).powi(2);
        assert!((value / expected - 1.0).abs() < 0.02, "({t},{s})");
    }
    let cov = covariance_l(&p, 4.0).unwrap();
    assert_eq!(cov.get(2, 1), cov.get(1, 1));
    let path = params(GraphShape::path(3).unwrap(), 3, vec![0.5, 1.0, 2.0], 200_000, 6).with_mode(IndicatorMode::Plus);
    assert!(brownian_identity_check(&path, 4.0).unwrap().max_z < 4.0);
    let minus = params(GraphShape::complete(3).unwrap(), 3, vec![1.0, 2.0], 20_000, 7).with_mode(IndicatorMode::Minus);
    assert!(covariance_l(&minus, 4.0).unwrap().values.iter().all(|&v| v == 0.0));
}

#[test]
fn estimated_covariances_factor_within_budget() {
    let grid: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    for shape in [GraphShape::path(3).unwrap(), GraphShape::cycle(4).unwrap()] {
        for ell in 1..=shape.k() {
            let cov = covariance_l(&params(shape.clone(), ell, grid.clone(), 20_000, 11), 4.0).unwrap();
            let (_, jitter) = psd_factor(&cov).unwrap();
            let trace: f64 = (0..cov.size()).map(|i| cov.get(i, i)).sum();
            assert!(jitter <= 1e-10 * trace);
        }
    }
}

fn matrix(grid: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> LimitCovariance {
    let mut cov = LimitCovariance::zeros(grid.clone(), "test");
    let m = grid.len();
    for i in 0..m {
        for j in 0..m {
            cov.values[i * m + j] = f(grid[i], grid[j]);
        }
    }
    cov
}

#[test]
fn limit_path_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let zero = LimitCovariance::zeros(vec![0.5, 1.0], "zero");
    assert!(sample_limit_paths(&zero, 10, &mut rng).unwrap().iter().flatten().all(|&x| x == 0.0));

    let grid = vec![0.5, 1.0, 1.5, 2.0];
    let cov = matrix(grid.clone(), |t, s| t.min(s));
    let paths = sample_limit_paths(&cov, 10_000, &mut rng).unwrap();
    let n = paths.len() as f64;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let est = paths.iter().map(|p| p[i] * p[j]).sum::<f64>() / n;
            assert!((est / cov.get(i, j) - 1.0).abs() < 0.03 + 3.0 * (2.0 / n).sqrt(), "({i},{j}) {est}");
        }
    }
    let inc: Vec<(f64, f64)> = paths.iter().map(|p| (p[1] - p[0], p[3] - p[2])).collect();
    let corr = inc.iter().map(|(a, b)| a * b).sum::<f64>()
        / (inc.iter().map(|(a, _)| a * a).sum::<f64>() * inc.iter().map(|(_, b)| b * b).sum::<f64>()).sqrt();
    assert!(corr.abs() < 4.0 / n.sqrt());
}
