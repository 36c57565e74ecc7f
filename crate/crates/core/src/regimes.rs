//! Regime classification from the trend of `n p(R_n)`, the growth condition
//! on `R_n`, the regime-dependent scale `tau_n`, and standardization of
//! replicated counting curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::densities::{RadialDensity, RadiusSchedule};
use crate::error::{Error, Result};

/// Per-decade relative drift of `n p(R_n)` below which the sequence counts as
/// stabilized.
pub const CRITICAL_DRIFT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `n p(R_n) -> 0`.
    Sparse,
    /// `n p(R_n) -> xi`.
    Critical { xi: f64 },
    /// `n p(R_n) -> inf`.
    Dense,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Sparse => "sparse",
            Regime::Critical { .. } => "critical",
            Regime::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// `(n, n p(R_n))` over the evaluated range.
    pub evidence: Vec<(f64, f64)>,
}

fn check_range(n_range: &[f64]) -> Result<()> {
    if n_range.len() < 2 {
        return Err(Error::InsufficientData("need at least two intensities".into()));
    }
    if n_range.iter().any(|n| !(*n > 1.0 && n.is_finite())) || n_range.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("intensities must be ascending and > 1".into()));
    }
    Ok(())
}

/// Log-slopes of `values` per decade of `n`.
fn decade_slopes(points: &[(f64, f64)]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[1].1.ln() - w[0].1.ln()) / (w[1].0.log10() - w[0].0.log10()))
        .collect()
}

pub fn classify_regime(density: &RadialDensity, schedule: &RadiusSchedule, n_range: &[f64]) -> Result<RegimeClass> {
    check_range(n_range)?;
    let evidence = n_range
        .iter()
        .map(|&n| Ok((n, n * density.p(schedule.radius(density, n)?))))
        .collect::<Result<Vec<_>>>()?;
    classify_evidence(evidence)
}

/// Classification from precomputed `(n, n p(R_n))` pairs.
pub fn classify_evidence(evidence: Vec<(f64, f64)>) -> Result<RegimeClass> {
    if evidence.len() < 2 || evidence.iter().any(|&(_, q)| !(q > 0.0 && q.is_finite())) {
        return Err(Error::Unclassifiable("need two or more positive finite values of n p(R_n)".into()));
    }
    let slopes = decade_slopes(&evidence);
    let last = *slopes.last().expect("two points");
    let regime = if last.abs() < (1.0 + CRITICAL_DRIFT).ln() {
        Regime::Critical { xi: evidence.last().expect("nonempty").1 }
    } else if slopes.iter().all(|&s| s < 0.0) {
        Regime::Sparse
    } else if slopes.iter().all(|&s| s > 0.0) {
        Regime::Dense
    } else {
        return Err(Error::Unclassifiable(format!(
            "n p(R_n) is not monotone over the range (per-decade log slopes {slopes:?})"
        )));
    };
    Ok(RegimeClass { regime, evidence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub pass: bool,
    /// Per-decade log slope of the growth product over the last step.
    pub margin: f64,
    /// `(n, n^k V(R_n) p(R_n)^k)`.
    pub products: Vec<(f64, f64)>,
}

/// Whether `n^k V(R_n) p(R_n)^k` still increases over the last step of the range.
pub fn check_growth_condition(
    density: &RadialDensity,
    schedule: &RadiusSchedule,
    k: usize,
    n_range: &[f64],
) -> Result<GrowthCheck> {
    check_range(n_range)?;
    let products = n_range
        .iter()
        .map(|&n| Ok((n, density.ln_growth_product(n, schedule.radius(density, n)?, k).exp())))
        .collect::<Result<Vec<_>>>()?;
    let margin = *decade_slopes(&products).last().expect("two points");
    Ok(GrowthCheck { pass: margin > 1e-6, margin, products })
}

/// `ln tau_n` at radius `r`; heavy tails use `V(R) = R^d`, light tails
/// `V(R) = a(R) R^{d-1}`.
pub fn ln_tau_at(density: &RadialDensity, regime: &Regime, k: usize, n: f64, r: f64) -> f64 {
    let ln_v = density.layer_volume(r).ln();
    let ln_np = n.ln() + density.ln_p(r);
    let power = match regime {
        Regime::Sparse => k as f64,
        Regime::Critical { .. } => 0.0,
        Regime::Dense => (2 * k - 1) as f64,
    };
    ln_v + power * ln_np
}

pub fn tau_at(density: &RadialDensity, regime: &Regime, k: usize, n: f64, r: f64) -> Result<f64> {
    if !(n > 0.0 && r > 0.0) {
        return Err(Error::InvalidParameter(format!("tau needs n > 0 and R > 0 (n={n}, R={r})")));
    }
    let v = ln_tau_at(density, regime, k, n, r).exp();
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau is not a positive finite number at n={n}")));
    }
    Ok(v)
}

pub fn tau(density: &RadialDensity, schedule: &RadiusSchedule, regime: &Regime, k: usize, n: f64) -> Result<f64> {
    tau_at(density, regime, k, n, schedule.radius(density, n)?)
}

/// `X(t) = tau^{-1/2} (G(t) - mean(t))`, one path per replication. With
/// `leave_one_out` each path is centered by the mean of the others.
pub fn standardize(curves: &[Vec<f64>], tau: f64, leave_one_out: bool) -> Result<Vec<Vec<f64>>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau={tau} must be positive")));
    }
    let reps = curves.len();
    if reps < 2 {
        return Err(Error::InsufficientData("standardization needs two or more replications".into()));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidParameter("curves have different lengths".into()));
    }
    let mut sum = vec![0.0; len];
    for c in curves {
        sum.iter_mut().zip(c).for_each(|(s, x)| *s += x);
    }
    let scale = tau.sqrt().recip();
    Ok(curves
        .iter()
        .map(|c| {
            c.iter()
                .zip(&sum)
                .map(|(&x, &s)| {
                    let center = if leave_one_out { (s - x) / (reps - 1) as f64 } else { s / reps as f64 };
                    (x - center) * scale
                })
                .collect()
        })
        .collect())
}

/// Table `n,R,np,growth,tau_sparse,tau_critical,tau_dense`.
pub fn regime_report(density: &RadialDensity, schedule: &RadiusSchedule, k: usize, n_range: &[f64]) -> Result<String> {
    let mut out = String::from("n,R,np,growth,tau_sparse,tau_critical,tau_dense\n");
    for &n in n_range {
        let r = schedule.radius(density, n)?;
        let growth = density.ln_growth_product(n, r, k).exp();
        let taus: Vec<f64> = [Regime::Sparse, Regime::Critical { xi: 1.0 }, Regime::Dense]
            .iter()
            .map(|g| ln_tau_at(density, g, k, n, r).exp())
            .collect();
        let _ = writeln!(out, "{n},{r},{},{growth},{},{},{}", n * density.p(r), taus[0], taus[1], taus[2]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> Vec<f64> {
        vec![1e4, 1e5, 1e6, 1e7, 1e8]
    }

    #[test]
    fn weak_core_is_critical_with_unit_level() {
        for density in [
            RadialDensity::power_law(2, 4.0).unwrap(),
            RadialDensity::power_law(1, 2.0).unwrap(),
            RadialDensity::von_mises(2, 1.0).unwrap(),
            RadialDensity::von_mises(3, 0.5).unwrap(),
        ] {
            let class = classify_regime(&density, &RadiusSchedule::WeakCore, &ladder()).unwrap();
            match class.regime {
                Regime::Critical { xi } => assert!((xi - 1.0).abs() < 1e-9),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn power_schedules_split_by_exponent() {
        let density = RadialDensity::power_law(2, 4.0).unwrap();
        let sparse = RadiusSchedule::Power { c0: 1.0, beta: 0.3 };
        let dense = RadiusSchedule::Power { c0: 1.0, beta: 0.2 };
        assert_eq!(classify_regime(&density, &sparse, &ladder()).unwrap().regime, Regime::Sparse);
        assert_eq!(classify_regime(&density, &dense, &ladder()).unwrap().regime, Regime::Dense);
    }

    #[test]
    fn oscillating_evidence_unclassifiable() {
        let ev = vec![(1e2, 1.0), (1e3, 0.5), (1e4, 0.9), (1e5, 0.4)];
        assert!(matches!(classify_evidence(ev), Err(Error::Unclassifiable(_))));
    }

    #[test]
    fn growth_condition_examples() {
        let density = RadialDensity::power_law(2, 4.0).unwrap();
        let pass = RadiusSchedule::Power { c0: 1.0, beta: 0.3 };
        let fail = RadiusSchedule::Power { c0: 1.0, beta: 0.4 };
        let check = check_growth_condition(&density, &pass, 2, &ladder()).unwrap();
        assert!(check.pass);
        assert!((check.margin / std::f64::consts::LN_10 - 0.2).abs() < 0.01);
        assert!(!check_growth_condition(&density, &fail, 2, &ladder()).unwrap().pass);
        let layer = RadiusSchedule::PoissonLayer { k: 2 };
        assert!(!check_growth_condition(&density, &layer, 2, &ladder()).unwrap().pass);
        let band = RadiusSchedule::Band { k: 2, theta: 0.5 };
        assert!(check_growth_condition(&density, &band, 2, &ladder()).unwrap().pass);
    }

    #[test]
    fn tau_formulas() {
        let density = RadialDensity::power_law(2, 4.0).unwrap();
        let n: f64 = 1e5;
        let r = f64::powf(n, 0.3);
        assert!((tau_at(&density, &Regime::Critical { xi: 1.0 }, 2, n, r).unwrap() - r * r).abs() < 1e-9 * r * r);
        let f = density.p(r);
        let expect = n * n * r * r * f * f;
        assert!((tau_at(&density, &Regime::Sparse, 2, n, r).unwrap() / expect - 1.0).abs() < 1e-12);

        let vm = RadialDensity::von_mises(2, 1.0).unwrap();
        let r = 12.0;
        let expect = n * n * r * (vm.c() * (-r).exp()).powi(2);
        assert!((tau_at(&vm, &Regime::Sparse, 2, n, r).unwrap() / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn taus_agree_on_weak_core() {
        let density = RadialDensity::power_law(2, 4.0).unwrap();
        let n = 1e6;
        let r = density.weak_core_radius(n).unwrap();
        let t: Vec<f64> = [Regime::Sparse, Regime::Critical { xi: 1.0 }, Regime::Dense]
            .iter()
            .map(|g| tau_at(&density, g, 3, n, r).unwrap())
            .collect();
        assert!((t[0] / t[1] - 1.0).abs() < 1e-9 && (t[2] / t[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardization() {
        let curves = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 2.0]];
        let x = standardize(&curves, 4.0, false).unwrap();
        assert_eq!(x[0], vec![-1.0, 0.0]);
        let mean: f64 = x.iter().map(|p| p[0]).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15);
        assert!(x.iter().all(|p| p[1] == 0.0));
        let loo = standardize(&curves, 1.0, true).unwrap();
        assert_eq!(loo[0][0], 1.0 - 4.0);
        assert!(standardize(&curves, 0.0, false).is_err());
        assert!(matches!(standardize(&curves[..1], 1.0, false), Err(Error::InsufficientData(_))));
    }
}
