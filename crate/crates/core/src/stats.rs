//! Sample moments, covariance with entry-wise errors, and goodness-of-fit
//! statistics used by the experiment harness.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Normal, Poisson};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample skewness `m3 / m2^{3/2}` with central moments normalized by `n`.
pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Sample excess kurtosis `m4 / m2^2 - 3`.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Covariance matrix of replicated vectors (rows are replications) and the
/// standard error of each entry, `sqrt((m4_ij - cov_ij^2) / R)` with
/// `m4_ij` the mean of the squared centered products.
pub fn covariance_with_errors(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let reps = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    let means: Vec<f64> = (0..m).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / reps as f64).collect();
    let mut cov = vec![0.0; m * m];
    let mut se = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let prods: Vec<f64> = rows.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).collect();
            let c = prods.iter().sum::<f64>() / (reps as f64 - 1.0);
            let m4 = prods.iter().map(|p| p * p).sum::<f64>() / reps as f64;
            let e = ((m4 - c * c).max(0.0) / reps as f64).sqrt();
            for (a, b) in [(i, j), (j, i)] {
                cov[a * m + b] = c;
                se[a * m + b] = e;
            }
        }
    }
    (cov, se)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 x^2)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov statistic of `xs` against the standard normal and its
/// asymptotic p-value with the Stephens small-sample correction.
pub fn ks_normal(xs: &[f64]) -> (f64, f64) {
    let normal = Normal::standard();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    (d, kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d))
}

/// Values divided by their sample standard deviation after centering.
pub fn zscores(xs: &[f64]) -> Vec<f64> {
    let m = mean(xs);
    let sd = variance(xs).sqrt();
    xs.iter().map(|x| (x - m) / sd).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonFit {
    pub mean: f64,
    pub dispersion: f64,
    /// Approximate standard error of the dispersion index under the Poisson law.
    pub dispersion_se: f64,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Dispersion index and chi-square goodness of fit of counts against
/// `Poisson(sample mean)`; bins are merged until every expected count is at
/// least 5, and one degree of freedom is spent on the fitted mean.
pub fn poisson_fit(counts: &[u64]) -> PoissonFit {
    let reps = counts.len();
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mu = mean(&xs);
    let var = variance(&xs);
    let dispersion = if mu > 0.0 { var / mu } else { f64::NAN };
    let dispersion_se = (2.0 / (reps as f64 - 1.0)).sqrt();
    let mut p_value = f64::NAN;
    let mut chi_square = f64::NAN;
    let mut df = 0;
    if mu > 0.0 {
        let top = counts.iter().copied().max().unwrap_or(0) as usize;
        let law = Poisson::new(mu).expect("positive mean");
        let mut observed = vec![0f64; top + 1];
        for &c in counts {
            observed[c as usize] += 1.0;
        }
        let mut expected: Vec<f64> = (0..=top).map(|j| reps as f64 * law.pmf(j as u64)).collect();
        // the last bin absorbs the upper tail
        let below: f64 = expected[..top].iter().sum();
        expected[top] = reps as f64 - below;
        let mut bins: Vec<(f64, f64)> = Vec::new();
        let (mut o, mut e) = (0.0, 0.0);
        for j in 0..=top {
            o += observed[j];
            e += expected[j];
            if e >= 5.0 {
                bins.push((o, e));
                o = 0.0;
                e = 0.0;
            }
        }
        if e > 0.0 || o > 0.0 {
            match bins.last_mut() {
                Some(last) => {
                    last.0 += o;
                    last.1 += e;
                }
                None => bins.push((o, e)),
            }
        }
        if bins.len() >= 3 {
            df = bins.len() - 2;
            chi_square = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
            p_value = 1.0 - ChiSquared::new(df as f64).expect("df > 0").cdf(chi_square);
        }
    }
    PoissonFit { mean: mu, dispersion, dispersion_se, chi_square, df, p_value }
}
