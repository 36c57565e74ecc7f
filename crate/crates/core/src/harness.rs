//! Replicated experiments: covariance convergence and Gaussianity of the
//! standardized counts, Palm mean identities, Poisson-layer dispersion,
//! layered annuli census, and cube-grid core coverage.
//!
//! Replication `r` of rung `i` draws from the ChaCha stream `(i << 40) | r`
//! seeded by the master seed, and results are folded in replication order,
//! so reports do not depend on the number of worker threads.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::factorial;

use crate::atlas::{distance, indicator, GraphShape, IndicatorMode};
use crate::cloud::{sample_poisson_cloud, PointCloud};
use crate::config::{ExperimentConfig, TestKind};
use crate::counting::{
    annuli_census, complete_family, count_decomposed_with, count_joint, Annulus, CountRequest,
    DecomposedCurves, CURVE_CSV_HEADER,
};
use crate::densities::{RadialDensity, RadiusSchedule, TailFamily};
use crate::error::{Error, Result};
use crate::geometry::{ball_volume, norm, point_in_ball, random_direction};
use crate::oracle::{mixture_covariance, LimitCovariance, McSettings, MixtureFamily, OracleParams};
use crate::regimes::{
    check_growth_condition, classify_evidence, tau_at, GrowthCheck, Regime, RegimeClass,
};
use crate::stats;
use crate::atlas::ShapeMatcher;

/// Stream id of replication `rep` on rung `rung`.
pub fn stream_id(rung: usize, rep: usize) -> u64 {
    debug_assert!((rep as u64) < (1 << 40) && (rung as u64) < (1 << 23));
    ((rung as u64) << 40) | rep as u64
}

pub fn replication_rng(master_seed: u64, rung: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(rung, rep));
    rng
}

/// Runs `f` on a pool of `workers` threads (the global pool when 0).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        Ok(f())
    }
}

/// `f(rep, rng)` for every replication, results in replication order.
fn replicate<T, F>(master_seed: u64, rung: usize, reps: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    let one = |rep: usize| {
        let mut rng = replication_rng(master_seed, rung, rep);
        f(rep, &mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..reps).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..reps).map(one).collect()
    }
}

/// Batched Monte Carlo means of a `width`-vector integrand, with standard
/// errors. Batches use substreams of `seed` and are folded in order.
fn mc_means<F>(samples: usize, seed: u64, width: usize, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    const BATCH: usize = 8192;
    let batches = samples.div_ceil(BATCH);
    let run = |b: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        let mut acc = vec![(0.0, 0.0); width];
        let mut buf = vec![0.0; width];
        for _ in 0..BATCH.min(samples - b * BATCH) {
            buf.iter_mut().for_each(|x| *x = 0.0);
            f(&mut rng, &mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                a.0 += v;
                a.1 += v * v;
            }
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<(f64, f64)>> = {
        use rayon::prelude::*;
        (0..batches).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<(f64, f64)>> = (0..batches).map(run).collect();
    let mut tot = vec![(0.0, 0.0); width];
    for p in &parts {
        for (t, v) in tot.iter_mut().zip(p) {
            t.0 += v.0;
            t.1 += v.1;
        }
    }
    let nf = samples as f64;
    tot.iter()
        .map(|&(s, s2)| {
            let m = s / nf;
            let var = ((s2 / nf - m * m) * nf / (nf - 1.0)).max(0.0);
            (m, (var / nf).sqrt())
        })
        .unzip()
}

/// One recorded statistic with its acceptance bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Check {
    pub fn within(name: impl Into<String>, value: f64, se: Option<f64>, lower: f64, upper: f64) -> Self {
        Self { name: name.into(), value, se, lower, upper, pass: value >= lower && value <= upper }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            se: None,
            lower: 1.0,
            upper: 1.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// `(file name, csv contents)` of the raw and summary tables.
    pub tables: Vec<(String, String)>,
}

impl ExperimentReport {
    fn new(experiment: &str) -> Self {
        Self { experiment: experiment.into(), checks: Vec::new(), notes: Vec::new(), tables: Vec::new() }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment: {}", self.experiment);
        let _ = writeln!(out, "result: {}", if self.pass() { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let se = c.se.map_or(String::from("-"), |s| format!("{s:.6e}"));
            let _ = writeln!(
                out,
                "  [{}] {} = {:.6} (se {}) bounds [{}, {}]",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                se,
                c.lower,
                c.upper
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        out
    }
}

/// Schedule evaluated on the experiment's density, with the regime read off
/// the ladder extended by two decades.
struct Setup {
    density: RadialDensity,
    shape: GraphShape,
    radii: Vec<f64>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let density = RadialDensity::new(cfg.density)?;
    let shape = cfg.shape()?;
    let radii = cfg
        .n_ladder
        .iter()
        .map(|&n| cfg.schedule.radius(&density, n))
        .collect::<Result<Vec<_>>>()?;
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ScheduleUndefined("radius schedule is not increasing over the ladder".into()));
    }
    Ok(Setup { density, shape, radii })
}

fn evaluation_range(cfg: &ExperimentConfig) -> Vec<f64> {
    let top = *cfg.n_ladder.last().expect("validated");
    let mut range: Vec<f64> = cfg.n_ladder.iter().copied().filter(|&n| n > 1.0).collect();
    if range.len() < 2 {
        range = vec![top / 10.0, top];
    }
    range.extend([top * 10.0, top * 100.0]);
    range
}

/// Regime from the trend of `n p(R_n)`; a critical level is the value at the
/// top rung.
pub fn classify_for(cfg: &ExperimentConfig, density: &RadialDensity) -> Result<RegimeClass> {
    let evidence = evaluation_range(cfg)
        .into_iter()
        .map(|n| Ok((n, n * density.p(cfg.schedule.radius(density, n)?))))
        .collect::<Result<Vec<_>>>()?;
    let mut class = classify_evidence(evidence)?;
    if let Regime::Critical { .. } = class.regime {
        let top = *cfg.n_ladder.last().expect("validated");
        let xi = top * density.p(cfg.schedule.radius(density, top)?);
        class.regime = Regime::Critical { xi };
    }
    Ok(class)
}

fn growth_for(cfg: &ExperimentConfig, density: &RadialDensity, k: usize) -> Result<GrowthCheck> {
    let top = *cfg.n_ladder.last().expect("validated");
    let range = if cfg.n_ladder.len() >= 2 { cfg.n_ladder.clone() } else { vec![top / 10.0, top] };
    check_growth_condition(density, &cfg.schedule, k, &range)
}

fn light_scale(density: &RadialDensity, r: f64) -> Result<f64> {
    density.a(r)
}

fn annulus_for(cfg: &ExperimentConfig, density: &RadialDensity, r: f64) -> Result<Option<Annulus>> {
    Ok(match cfg.clt.annulus {
        None => None,
        Some([lower, upper]) => Some(match density.family() {
            TailFamily::Heavy => Annulus::Multiplicative { lower, upper },
            TailFamily::Light => Annulus::Additive { lower, upper, scale: light_scale(density, r)? },
        }),
    })
}

/// Replicated decomposed curves on the exterior of `B(0, r)`.
pub fn replicate_curves(
    cfg: &ExperimentConfig,
    density: &RadialDensity,
    shape: &GraphShape,
    rung: usize,
    n: f64,
    r: f64,
    annulus: Option<Annulus>,
) -> Result<Vec<(usize, DecomposedCurves)>> {
    let matcher = ShapeMatcher::new(shape);
    let mut req = CountRequest::new(shape.clone(), cfg.t_grid.clone(), r);
    req.annulus = annulus;
    replicate(cfg.master_seed, rung, cfg.replications, |rep, rng| {
        let cloud = sample_poisson_cloud(n, density, rng, Some(r))?.with_meta(stream_id(rung, rep), n, Some(r));
        let size = cloud.len();
        Ok((size, count_decomposed_with(&cloud, &req, &matcher)?))
    })
}

fn curves_table(rows: &[(usize, DecomposedCurves)]) -> String {
    let mut out = format!("{CURVE_CSV_HEADER}\n");
    for (_, c) in rows {
        c.csv_rows(&mut out);
    }
    out
}

fn focus_index(grid: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - t).abs() < (grid[best] - t).abs() {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRung {
    pub n: f64,
    pub r: f64,
    pub tau: f64,
    pub mean_points: f64,
    pub mean: Vec<f64>,
    /// Empirical covariance of `G` divided by `tau`, row-major.
    pub scaled_cov: Vec<f64>,
    pub scaled_cov_se: Vec<f64>,
    /// Entry-wise ratio to the oracle.
    pub ratio: Vec<f64>,
    pub ratio_se: Vec<f64>,
    pub in_band_fraction: f64,
    pub focus_ratio: f64,
    pub focus_ratio_se: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub decomposition_exact: bool,
    pub monotone_parts: bool,
    pub insufficient_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltOutcome {
    pub regime: RegimeClass,
    pub growth: GrowthCheck,
    pub oracle: LimitCovariance,
    pub focus: usize,
    pub rungs: Vec<CltRung>,
    /// `|r_{i+1} - 1| <= |r_i - 1| + 2 se_{i+1}` for the focus ratio.
    pub monotone_approach: bool,
    pub report: ExperimentReport,
}

/// Covariance of `G(t)` over `tau` against the regime's limit covariance.
pub fn run_clt_experiment(cfg: &ExperimentConfig) -> Result<CltOutcome> {
    let Setup { density, shape, radii } = setup(cfg)?;
    let k = shape.k();
    let growth = growth_for(cfg, &density, k)?;
    if !growth.pass {
        return Err(Error::GrowthCondition(format!(
            "n^k V(R) p(R)^k does not increase over the last ladder step (per-decade log slope {:.3e}); \
             the schedule sits on or beyond the Poisson layer",
            growth.margin
        )));
    }
    let regime = classify_for(cfg, &density)?;
    let family = match *density.spec() {
        crate::densities::DensitySpec::Power { alpha, .. } => MixtureFamily::Heavy { alpha },
        crate::densities::DensitySpec::VonMises { .. } => MixtureFamily::Light { c: density.a_limit()? },
    };
    let mc = McSettings { samples: cfg.oracle.samples, seed: cfg.oracle.seed, antithetic: cfg.oracle.antithetic };
    let base = OracleParams::new(density.d(), shape.clone(), k, cfg.t_grid.clone(), mc);
    let oracle = mixture_covariance(family, &regime.regime, &base, cfg.clt.annulus.map(|[a, b]| (a, b)))?;

    let m = cfg.t_grid.len();
    let focus = focus_index(&cfg.t_grid, cfg.clt.focus_t);
    let [band_lo, band_hi] = cfg.clt.band;
    let mut report = ExperimentReport::new("clt");
    report.notes.push(format!("regime {:?}; growth slope per decade {:.4}", regime.regime, growth.margin));
    report.notes.push(format!("oracle: {}", oracle.provenance));
    let mut rungs = Vec::new();
    for (rung, (&n, &r)) in cfg.n_ladder.iter().zip(&radii).enumerate() {
        let tau = tau_at(&density, &regime.regime, k, n, r)?;
        let annulus = annulus_for(cfg, &density, r)?;
        let rows = replicate_curves(cfg, &density, &shape, rung, n, r, annulus)?;
        let mean_points = rows.iter().map(|(s, _)| *s as f64).sum::<f64>() / rows.len() as f64;
        let curves: Vec<Vec<f64>> =
            rows.iter().map(|(_, c)| c.plain.counts.iter().map(|&x| x as f64).collect()).collect();
        let (cov, cov_se) = stats::covariance_with_errors(&curves);
        let scaled_cov: Vec<f64> = cov.iter().map(|c| c / tau).collect();
        let scaled_cov_se: Vec<f64> = cov_se.iter().map(|c| c / tau).collect();
        let mean: Vec<f64> = (0..m).map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / curves.len() as f64).collect();
        let mut ratio = vec![f64::NAN; m * m];
        let mut ratio_se = vec![f64::NAN; m * m];
        let (mut valid, mut inside) = (0usize, 0usize);
        for i in 0..m {
            for j in 0..m {
                let o = oracle.get(i, j);
                if o > 0.0 {
                    let q = scaled_cov[i * m + j] / o;
                    let rel = ((scaled_cov_se[i * m + j] / scaled_cov[i * m + j]).powi(2)
                        + (oracle.se(i, j) / o).powi(2))
                    .sqrt();
                    ratio[i * m + j] = q;
                    ratio_se[i * m + j] = (q * rel).abs();
                    if j >= i {
                        valid += 1;
                        inside += usize::from(q >= band_lo && q <= band_hi);
                    }
                }
            }
        }
        let focus_counts: Vec<f64> = curves.iter().map(|c| c[focus]).collect();
        let insufficient = stats::variance(&focus_counts) <= 0.0;
        let (skewness, excess_kurtosis, ks_statistic, ks_p) = if insufficient {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        } else {
            let (d, p) = stats::ks_normal(&stats::zscores(&focus_counts));
            (stats::skewness(&focus_counts), stats::excess_kurtosis(&focus_counts), d, p)
        };
        let standardized = crate::regimes::standardize(&curves, tau, cfg.clt.leave_one_out)?;
        let mut raw = curves_table(&rows);
        raw.push_str("# standardized: seed,t,x\n");
        for ((_, c), x) in rows.iter().zip(&standardized) {
            for (t, v) in cfg.t_grid.iter().zip(x) {
                let _ = writeln!(raw, "{},{t},{v}", c.plain.seed);
            }
        }
        report.tables.push((format!("clt_curves_rung{rung}.csv"), raw));
        rungs.push(CltRung {
            n,
            r,
            tau,
            mean_points,
            mean,
            scaled_cov,
            scaled_cov_se,
            focus_ratio: ratio[focus * m + focus],
            focus_ratio_se: ratio_se[focus * m + focus],
            ratio,
            ratio_se,
            in_band_fraction: if valid > 0 { inside as f64 / valid as f64 } else { f64::NAN },
            skewness,
            excess_kurtosis,
            ks_statistic,
            ks_p,
            decomposition_exact: rows.iter().all(|(_, c)| c.decomposition_holds()),
            monotone_parts: rows.iter().all(|(_, c)| c.monotone_parts()),
            insufficient_data: insufficient,
        });
    }
    let monotone_approach = rungs.windows(2).all(|w| {
        (w[1].focus_ratio - 1.0).abs() <= (w[0].focus_ratio - 1.0).abs() + 2.0 * w[1].focus_ratio_se
    });
    let top = rungs.last().expect("nonempty ladder");
    if rungs.iter().any(|r| r.insufficient_data) {
        report.checks.push(Check::flag("sufficient_data", false));
        report.notes.push("zero replication variance at the focus radius: insufficient data".into());
    }
    report.checks.push(Check::within(
        "top_focus_ratio",
        top.focus_ratio,
        Some(top.focus_ratio_se),
        band_lo,
        band_hi,
    ));
    report.checks.push(Check::within("top_entries_in_band", top.in_band_fraction, None, cfg.clt.min_in_band, 1.0));
    report.checks.push(Check::flag("monotone_approach", monotone_approach));
    report.checks.push(Check::within("top_abs_skewness", top.skewness.abs(), None, 0.0, cfg.clt.max_skewness));
    report.checks.push(Check::within(
        "top_abs_excess_kurtosis",
        top.excess_kurtosis.abs(),
        None,
        0.0,
        cfg.clt.max_excess_kurtosis,
    ));
    report.checks.push(Check::within("top_ks_p", top.ks_p, None, cfg.clt.min_ks_p, 1.0));
    report.checks.push(Check::flag("decomposition_exact", rungs.iter().all(|r| r.decomposition_exact)));
    report.checks.push(Check::flag("monotone_parts", rungs.iter().all(|r| r.monotone_parts)));

    let mut summary = String::from(
        "n,R,tau,mean_points,focus_t,mean,var_over_tau,var_over_tau_se,oracle,ratio,ratio_se,in_band,skewness,excess_kurtosis,ks_stat,ks_p\n",
    );
    for r in &rungs {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.r,
            r.tau,
            r.mean_points,
            cfg.t_grid[focus],
            r.mean[focus],
            r.scaled_cov[focus * m + focus],
            r.scaled_cov_se[focus * m + focus],
            oracle.get(focus, focus),
            r.focus_ratio,
            r.focus_ratio_se,
            r.in_band_fraction,
            r.skewness,
            r.excess_kurtosis,
            r.ks_statistic,
            r.ks_p
        );
    }
    report.tables.push(("clt_summary.csv".into(), summary));
    report.tables.push(("clt_oracle.csv".into(), oracle.to_csv()));
    report.tables.push(("seed_audit.csv".into(), seed_audit(cfg)));
    Ok(CltOutcome { regime, growth, oracle, focus, rungs, monotone_approach, report })
}

fn seed_audit(cfg: &ExperimentConfig) -> String {
    let mut out = format!("master_seed,{}\nrung,n,first_stream,last_stream\n", cfg.master_seed);
    for (i, n) in cfg.n_ladder.iter().enumerate() {
        let _ = writeln!(out, "{i},{n},{},{}", stream_id(i, 0), stream_id(i, cfg.replications - 1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmRow {
    pub t: f64,
    /// Second radius for the joint identity; equal to `t` for the mean.
    pub s: f64,
    pub empirical: f64,
    pub empirical_se: f64,
    pub predicted: f64,
    pub predicted_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmOutcome {
    pub n: f64,
    pub r: f64,
    pub rows: Vec<PalmRow>,
    pub report: ExperimentReport,
}

/// `E{h_t h_s 1{m >= R}}` under `f^{(x)k}` for every pair `t <= s` of the
/// grid, by drawing the first point from `f` on the exterior and each other
/// point from an even mixture of the uniform law around it and `f` on the
/// exterior; returns `(means, ses)` indexed like the upper triangle.
pub fn palm_integrals(
    density: &RadialDensity,
    shape: &GraphShape,
    grid: &[f64],
    r: f64,
    samples: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let d = density.d();
    let k = shape.k();
    let pairs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (i..grid.len()).map(move |j| (i, j))).collect();
    let reach = (k - 1) as f64 * grid.last().copied().unwrap_or(0.0);
    let p_out = if r > 0.0 { density.survival(r) } else { 1.0 };
    let ball = ball_volume(d) * reach.powi(d as i32);
    let local = if ball > 0.0 { 0.5 } else { 0.0 };
    let draw_exterior = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
        let rad = if r > 0.0 { density.sample_radius_beyond(r, rng) } else { density.sample_radius(rng) };
        random_direction(rng, out);
        out.iter_mut().for_each(|x| *x *= rad);
    };
    mc_means(samples, seed, pairs.len(), |rng, out| {
        let mut pts = vec![vec![0.0; d]; k];
        draw_exterior(rng, &mut pts[0]);
        let mut weight = p_out;
        let mut offset = vec![0.0; d];
        for i in 1..k {
            if rng.random::<f64>() < local {
                let u: f64 = rng.random();
                point_in_ball(rng, reach, u, &mut offset);
                for c in 0..d {
                    pts[i][c] = pts[0][c] + offset[c];
                }
            } else {
                draw_exterior(rng, &mut pts[i]);
            }
            let nr = norm(&pts[i]);
            if nr < r {
                return;
            }
            let fx = density.p(nr);
            let near = distance(&pts[i], &pts[0]) <= reach;
            let q = if near { local / ball } else { 0.0 } + (1.0 - local) * fx / p_out;
            weight *= fx / q;
        }
        let flags: Vec<bool> = grid.iter().map(|&t| indicator(&pts, t, shape, IndicatorMode::Plain)).collect();
        for (slot, &(i, j)) in out.iter_mut().zip(&pairs) {
            if flags[i] && flags[j] {
                *slot = weight;
            }
        }
    })
}

/// Mean of `G(t)` and of the joint count `sum_Y h_t(Y) h_s(Y)` against the
/// Palm predictions `(n^k / k!) E{h_t h_s 1{m >= R}}`.
pub fn palm_mean_check(cfg: &ExperimentConfig) -> Result<PalmOutcome> {
    let Setup { density, shape, radii } = setup(cfg)?;
    let k = shape.k();
    if k > 3 {
        return Err(Error::Config(format!("the Palm check supports k <= 3 (k = {k})")));
    }
    let rung = cfg.palm.rung.unwrap_or(cfg.n_ladder.len() - 1);
    if rung >= cfg.n_ladder.len() {
        return Err(Error::Config(format!("palm.rung {rung} is outside the ladder")));
    }
    let (n, r) = (cfg.n_ladder[rung], radii[rung]);
    let grid = &cfg.t_grid;
    let (means, ses) = palm_integrals(&density, &shape, grid, r, cfg.palm.samples, cfg.palm.seed);
    let scale = n.powi(k as i32) / factorial(k as u64);
    let matcher = ShapeMatcher::new(&shape);
    let req = CountRequest::new(shape.clone(), grid.clone(), r);
    let pairs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (i..grid.len()).map(move |j| (i, j))).collect();
    let per_rep: Vec<Vec<f64>> = replicate(cfg.master_seed, rung, cfg.replications, |rep, rng| {
        let cloud = sample_poisson_cloud(n, &density, rng, Some(r))?.with_meta(stream_id(rung, rep), n, Some(r));
        let curves = count_decomposed_with(&cloud, &req, &matcher)?;
        pairs
            .iter()
            .map(|&(i, j)| {
                if i == j {
                    Ok(curves.plain.counts[i] as f64)
                } else {
                    Ok(count_joint(&cloud, &shape, grid[i], grid[j], r)? as f64)
                }
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    let mut report = ExperimentReport::new("palm");
    for (e, &(i, j)) in pairs.iter().enumerate() {
        let xs: Vec<f64> = per_rep.iter().map(|v| v[e]).collect();
        let empirical = stats::mean(&xs);
        let empirical_se = (stats::variance(&xs) / xs.len() as f64).sqrt();
        let predicted = scale * means[e];
        let predicted_se = scale * ses[e];
        let se = (empirical_se.powi(2) + predicted_se.powi(2)).sqrt();
        let z = if se > 0.0 { (empirical - predicted) / se } else { 0.0 };
        let name = if i == j { format!("mean_t{}", grid[i]) } else { format!("joint_t{}_s{}", grid[i], grid[j]) };
        report.checks.push(Check::within(name, z.abs(), Some(se), 0.0, cfg.palm.max_z));
        rows.push(PalmRow { t: grid[i], s: grid[j], empirical, empirical_se, predicted, predicted_se, z });
    }
    let mut table = String::from("t,s,empirical,empirical_se,predicted,predicted_se,z\n");
    for r in &rows {
        let _ = writeln!(table, "{},{},{},{},{},{},{}", r.t, r.s, r.empirical, r.empirical_se, r.predicted, r.predicted_se, r.z);
    }
    report.notes.push(format!("n={n} R={r} replications={} samples={}", cfg.replications, cfg.palm.samples));
    report.tables.push(("palm.csv".into(), table));
    Ok(PalmOutcome { n, r, rows, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonRung {
    pub n: f64,
    pub r: f64,
    pub mean: f64,
    pub dispersion: f64,
    pub dispersion_se: f64,
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonOutcome {
    pub t: f64,
    pub rungs: Vec<PoissonRung>,
    pub report: ExperimentReport,
}

/// Distribution of `G(t)` at a fixed radius against `Poisson(mean)`.
pub fn run_poisson_layer_experiment(cfg: &ExperimentConfig) -> Result<PoissonOutcome> {
    if cfg.replications < cfg.poisson.min_replications {
        return Err(Error::Config(format!(
            "the Poisson-layer experiment needs at least {} replications (got {})",
            cfg.poisson.min_replications, cfg.replications
        )));
    }
    let Setup { density, shape, radii } = setup(cfg)?;
    let t = cfg.poisson.t;
    let matcher = ShapeMatcher::new(&shape);
    let req = CountRequest::new(shape.clone(), vec![t], 0.0);
    let mut report = ExperimentReport::new("poisson_layer");
    if !matches!(cfg.schedule, RadiusSchedule::PoissonLayer { .. }) {
        report.notes.push("schedule is not the Poisson-layer radius; results describe the given schedule".into());
    }
    let mut rungs = Vec::new();
    let mut raw = String::from("rung,stream,count\n");
    for (rung, (&n, &r)) in cfg.n_ladder.iter().zip(&radii).enumerate() {
        let mut req = req.clone();
        req.r = r;
        let counts: Vec<u64> = replicate(cfg.master_seed, rung, cfg.replications, |rep, rng| {
            let cloud = sample_poisson_cloud(n, &density, rng, Some(r))?.with_meta(stream_id(rung, rep), n, Some(r));
            Ok(count_decomposed_with(&cloud, &req, &matcher)?.plain.counts[0])
        })?;
        for (rep, c) in counts.iter().enumerate() {
            let _ = writeln!(raw, "{rung},{},{c}", stream_id(rung, rep));
        }
        let fit = stats::poisson_fit(&counts);
        rungs.push(PoissonRung {
            n,
            r,
            mean: fit.mean,
            dispersion: fit.dispersion,
            dispersion_se: fit.dispersion_se,
            chi_square: fit.chi_square,
            df: fit.df,
            p_value: fit.p_value,
        });
    }
    let top = rungs.last().expect("nonempty");
    let [lo, hi] = cfg.poisson.dispersion_band;
    report.checks.push(Check::within("top_dispersion", top.dispersion, Some(top.dispersion_se), lo, hi));
    report.checks.push(Check::within("top_chi_square_p", top.p_value, None, cfg.poisson.min_p, 1.0));
    let means: Vec<f64> = rungs.iter().map(|r| r.mean).collect();
    let spread = means.iter().copied().fold(0.0, f64::max) / means.iter().copied().fold(f64::INFINITY, f64::min);
    report.notes.push(format!("mean counts across rungs {means:?} (max/min {spread:.3})"));
    let mut table = String::from("n,R,mean,dispersion,dispersion_se,chi_square,df,p_value\n");
    for r in &rungs {
        let _ = writeln!(table, "{},{},{},{},{},{},{},{}", r.n, r.r, r.mean, r.dispersion, r.dispersion_se, r.chi_square, r.df, r.p_value);
    }
    report.tables.push(("poisson_summary.csv".into(), table));
    report.tables.push(("poisson_counts.csv".into(), raw));
    Ok(PoissonOutcome { t, rungs, report })
}

/// Cubes `[g i, g (i+1))` of the lattice `g Z^d` inside `B(0, radius)`, as
/// lattice indices.
fn contained_cubes(d: usize, g: f64, radius: f64) -> Vec<Vec<i64>> {
    let m = (radius / g).ceil() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-m; d];
    loop {
        let far2: f64 = idx
            .iter()
            .map(|&i| {
                let a = (g * i as f64).abs().max((g * (i + 1) as f64).abs());
                a * a
            })
            .sum();
        if far2 <= radius * radius {
            out.push(idx.clone());
        }
        let mut c = 0;
        loop {
            if c == d {
                return out;
            }
            idx[c] += 1;
            if idx[c] < m {
                break;
            }
            idx[c] = -m;
            c += 1;
        }
    }
}

/// Whether every point of a lattice of the given spacing inside `B(0, radius)`
/// lies within distance 1 of a sample point in `B(0, radius)`.
pub fn exact_coverage(points: &[Vec<f64>], radius: f64, spacing: f64) -> bool {
    let d = match points.first() {
        Some(p) => p.len(),
        None => return radius < 0.0,
    };
    let inside: Vec<&Vec<f64>> = points.iter().filter(|p| norm(p) <= radius).collect();
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in inside.iter().enumerate() {
        grid.entry(p.iter().map(|x| x.floor() as i64).collect()).or_default().push(i);
    }
    let m = (radius / spacing).ceil() as i64;
    let mut idx = vec![-m; d];
    let mut probe = vec![0i64; d];
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 * spacing).collect();
        if norm(&x) <= radius {
            let home: Vec<i64> = x.iter().map(|v| v.floor() as i64).collect();
            let mut covered = false;
            let cells = 3usize.pow(d as u32);
            'search: for code in 0..cells {
                let mut c = code;
                for (q, h) in probe.iter_mut().zip(&home) {
                    *q = h + (c % 3) as i64 - 1;
                    c /= 3;
                }
                if let Some(bucket) = grid.get(&probe) {
                    for &i in bucket {
                        let dist2: f64 = inside[i].iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
                        if dist2 <= 1.0 {
                            covered = true;
                            break 'search;
                        }
                    }
                }
            }
            if !covered {
                return false;
            }
        }
        let mut c = 0;
        loop {
            if c == d {
                return true;
            }
            idx[c] += 1;
            if idx[c] <= m {
                break;
            }
            idx[c] = -m;
            c += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreRung {
    pub n: f64,
    pub r_core: f64,
    pub cubes: usize,
    /// `(radius factor, coverage frequency)`.
    pub frequencies: Vec<(f64, f64)>,
    pub spot_checks: usize,
    pub spot_violations: usize,
    /// Replications in which coverage at a larger factor held but failed at a smaller one.
    pub monotonicity_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreOutcome {
    pub grid: f64,
    pub rungs: Vec<CoreRung>,
    pub report: ExperimentReport,
}

/// Frequency with which every cube of side `1/(2 sqrt d)` inside
/// `B(0, c R_core)` holds a sample point, from full clouds.
pub fn run_core_experiment(cfg: &ExperimentConfig) -> Result<CoreOutcome> {
    let density = RadialDensity::new(cfg.density)?;
    let d = density.d();
    let g = 1.0 / (2.0 * (d as f64).sqrt());
    let factors = &cfg.core.radius_factors;
    if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::Config("core.radius_factors must be positive".into()));
    }
    let fmax = factors.iter().copied().fold(0.0, f64::max);
    let mut rungs = Vec::new();
    let mut report = ExperimentReport::new("core");
    let mut raw = String::from("rung,stream,factor,covered\n");
    for (rung, &n) in cfg.n_ladder.iter().enumerate() {
        let r_core = density.core_radius(n, cfg.core.delta1, cfg.core.delta2)?;
        let reach = fmax * r_core;
        let m = (reach / g).ceil() as i64;
        let cells = (2 * m as usize).checked_pow(d as u32).unwrap_or(usize::MAX);
        if cells > cfg.core.max_cells {
            return Err(Error::InvalidParameter(format!(
                "cube grid of {cells} cells at n={n} exceeds the budget of {}",
                cfg.core.max_cells
            )));
        }
        let cube_sets: Vec<Vec<usize>> = factors
            .iter()
            .map(|f| {
                contained_cubes(d, g, f * r_core)
                    .iter()
                    .map(|idx| idx.iter().rev().fold(0usize, |acc, &i| acc * (2 * m as usize) + (i + m) as usize))
                    .collect()
            })
            .collect();
        let spots = cfg.core.spot_checks.min(cfg.replications);
        let outcomes: Vec<(Vec<bool>, Option<bool>)> = replicate(cfg.master_seed, rung, cfg.replications, |rep, rng| {
            let count = rand_distr::Distribution::sample(
                &rand_distr::Poisson::new(n).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                rng,
            ) as usize;
            let mut occupied = vec![false; cells];
            let keep = rep < spots;
            let mut kept = Vec::new();
            let mut p = vec![0.0; d];
            for _ in 0..count {
                let rad = density.sample_radius(rng);
                random_direction(rng, &mut p);
                if rad > reach {
                    continue;
                }
                p.iter_mut().for_each(|x| *x *= rad);
                let mut flat = 0usize;
                let mut ok = true;
                for &x in p.iter().rev() {
                    let i = (x / g).floor() as i64 + m;
                    if i < 0 || i >= 2 * m {
                        ok = false;
                        break;
                    }
                    flat = flat * (2 * m as usize) + i as usize;
                }
                if ok {
                    occupied[flat] = true;
                }
                if keep {
                    kept.push(p.clone());
                }
            }
            let covered: Vec<bool> = cube_sets.iter().map(|set| set.iter().all(|&c| occupied[c])).collect();
            let spot = (keep && covered[0]).then(|| exact_coverage(&kept, factors[0] * r_core, cfg.core.spot_spacing));
            Ok((covered, spot))
        })?;
        for (rep, (cov, _)) in outcomes.iter().enumerate() {
            for (f, c) in factors.iter().zip(cov) {
                let _ = writeln!(raw, "{rung},{},{f},{}", stream_id(rung, rep), u8::from(*c));
            }
        }
        let frequencies: Vec<(f64, f64)> = factors
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, outcomes.iter().filter(|(c, _)| c[i]).count() as f64 / outcomes.len() as f64))
            .collect();
        let order: Vec<usize> = {
            let mut o: Vec<usize> = (0..factors.len()).collect();
            o.sort_by(|&a, &b| factors[a].total_cmp(&factors[b]));
            o
        };
        let monotonicity_violations = outcomes
            .iter()
            .filter(|(c, _)| order.windows(2).any(|w| c[w[1]] && !c[w[0]]))
            .count();
        let spot_checks = outcomes.iter().filter(|(_, s)| s.is_some()).count();
        let spot_violations = outcomes.iter().filter(|(_, s)| *s == Some(false)).count();
        rungs.push(CoreRung {
            n,
            r_core,
            cubes: cube_sets[0].len(),
            frequencies,
            spot_checks,
            spot_violations,
            monotonicity_violations,
        });
    }
    let reps = cfg.replications as f64;
    let base: Vec<f64> = rungs.iter().map(|r| r.frequencies[0].1).collect();
    let non_decreasing = base.windows(2).all(|w| {
        let se = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / reps).sqrt();
        w[1] >= w[0] - 2.0 * se
    });
    report.checks.push(Check::flag("frequency_non_decreasing", non_decreasing));
    let top = *base.last().expect("nonempty");
    report.checks.push(Check::within("top_frequency", top, Some((top * (1.0 - top) / reps).sqrt()), cfg.core.min_frequency, 1.0));
    report.checks.push(Check::flag("radius_monotone", rungs.iter().all(|r| {
        let freq_ok = r.frequencies.iter().all(|&(f, q)| r.frequencies.iter().all(|&(f2, q2)| f2 <= f || q2 <= q));
        freq_ok && r.monotonicity_violations == 0
    })));
    report.checks.push(Check::flag("spot_checks_covered", rungs.iter().all(|r| r.spot_violations == 0)));
    let mut table = String::from("n,R_core,cubes,factor,frequency\n");
    for r in &rungs {
        for (f, q) in &r.frequencies {
            let _ = writeln!(table, "{},{},{},{f},{q}", r.n, r.r_core, r.cubes);
        }
    }
    report.tables.push(("core_summary.csv".into(), table));
    report.tables.push(("core_raw.csv".into(), raw));
    Ok(CoreOutcome { grid: g, rungs, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRung {
    pub n: f64,
    /// `[R_K, ..., R_2]` Poisson-layer radii, ascending.
    pub ladder: Vec<f64>,
    /// Orders of the census columns.
    pub orders: Vec<usize>,
    /// `mean[row][column]` with rows `[ladder[i], ladder[i+1])`, last row unbounded.
    pub mean: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

impl CensusRung {
    /// Row of the annulus whose inner radius is the layer of order `j`.
    pub fn row_of_layer(&self, j: usize) -> Option<usize> {
        let max_order = self.orders.iter().copied().max()?;
        (j >= 2 && j <= max_order).then(|| max_order - j)
    }

    pub fn column_of(&self, j: usize) -> Option<usize> {
        self.orders.iter().position(|&o| o == j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusOutcome {
    pub rungs: Vec<CensusRung>,
    pub report: ExperimentReport,
}

/// Mean counts of complete graphs `K_j`, `j = 2..K`, in the annuli between
/// consecutive Poisson-layer radii.
pub fn run_annuli_census_experiment(cfg: &ExperimentConfig) -> Result<CensusOutcome> {
    let density = RadialDensity::new(cfg.density)?;
    let max_order = cfg.census.max_order;
    let shapes = complete_family(max_order)?;
    let t = cfg.census.t;
    let mut rungs = Vec::new();
    let mut raw = String::from("rung,stream,row,order,count\n");
    for (rung, &n) in cfg.n_ladder.iter().enumerate() {
        let ladder = (2..=max_order)
            .rev()
            .map(|j| density.poisson_layer_radius(n, j))
            .collect::<Result<Vec<_>>>()?;
        let r0 = ladder[0];
        let tables = replicate(cfg.master_seed, rung, cfg.replications, |rep, rng| {
            let cloud: PointCloud =
                sample_poisson_cloud(n, &density, rng, Some(r0))?.with_meta(stream_id(rung, rep), n, Some(r0));
            annuli_census(&cloud, &shapes, &ladder, t)
        })?;
        let rows = ladder.len();
        let cols = shapes.len();
        let mut mean = vec![vec![0.0; cols]; rows];
        let mut se = vec![vec![0.0; cols]; rows];
        for (rep, tab) in tables.iter().enumerate() {
            for (i, row) in tab.counts.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    let _ = writeln!(raw, "{rung},{},{i},{},{c}", stream_id(rung, rep), shapes[j].k());
                }
            }
        }
        for i in 0..rows {
            for j in 0..cols {
                let xs: Vec<f64> = tables.iter().map(|t| t.counts[i][j] as f64).collect();
                mean[i][j] = stats::mean(&xs);
                se[i][j] = (stats::variance(&xs) / xs.len() as f64).sqrt();
            }
        }
        rungs.push(CensusRung { n, ladder, orders: shapes.iter().map(|s| s.k()).collect(), mean, se });
    }
    let mut report = ExperimentReport::new("census");
    if rungs.len() >= 2 {
        let (first, last) = (&rungs[0], &rungs[rungs.len() - 1]);
        for j in 2..=max_order {
            let row = first.row_of_layer(j).expect("in range");
            // order j - 1 grows in the annulus starting at the order-j layer
            if let Some(col) = first.column_of(j - 1) {
                let se = (first.se[row][col].powi(2) + last.se[row][col].powi(2)).sqrt();
                let diff = last.mean[row][col] - first.mean[row][col];
                report.checks.push(Check::within(format!("order{}_grows_beyond_layer{j}", j - 1), diff, Some(se), 2.0 * se, f64::INFINITY));
            }
            // order j + 1 fades
            if let Some(col) = first.column_of(j + 1) {
                let se = (first.se[row][col].powi(2) + last.se[row][col].powi(2)).sqrt();
                let diff = first.mean[row][col] - last.mean[row][col];
                report.checks.push(Check::within(format!("order{}_fades_beyond_layer{j}", j + 1), diff, Some(se), -2.0 * se, f64::INFINITY));
            }
            // order j stays of order one
            if let Some(col) = first.column_of(j) {
                let (a, b) = (first.mean[row][col], last.mean[row][col]);
                let ratio = if a > 0.0 { b / a } else { f64::NAN };
                report.checks.push(Check::within(format!("order{j}_bounded_beyond_layer{j}"), ratio, None, 1.0 / 3.0, 3.0));
            }
        }
    }
    report.notes.push("trend thresholds (2 SE growth, ratio within [1/3, 3]) are engineering defaults".into());
    let mut table = String::from("n,row,lower,upper,order,mean,se\n");
    for r in &rungs {
        for (i, row) in r.mean.iter().enumerate() {
            let upper = r.ladder.get(i + 1).copied().unwrap_or(f64::INFINITY);
            for (j, m) in row.iter().enumerate() {
                let _ = writeln!(table, "{},{i},{},{upper},{},{m},{}", r.n, r.ladder[i], r.orders[j], r.se[i][j]);
            }
        }
    }
    report.tables.push(("census_summary.csv".into(), table));
    report.tables.push(("census_raw.csv".into(), raw));
    Ok(CensusOutcome { rungs, report })
}

/// Runs the selected experiments (all applicable ones when none are selected).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    let tests = if cfg.tests.is_empty() { vec![TestKind::Clt] } else { cfg.tests.clone() };
    tests
        .iter()
        .map(|t| {
            Ok(match t {
                TestKind::Clt => run_clt_experiment(cfg)?.report,
                TestKind::Palm => palm_mean_check(cfg)?.report,
                TestKind::PoissonLayer => run_poisson_layer_experiment(cfg)?.report,
                TestKind::Core => run_core_experiment(cfg)?.report,
                TestKind::Census => run_annuli_census_experiment(cfg)?.report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
t_grid = [0.5, 1.0]
n_ladder = [1e3, 1e4]
replications = 60
master_seed = 5
{extra}
[density]
family = "power"
d = 2
alpha = 4

[schedule]
kind = "power"
c0 = 1.0
beta = 0.3

[shape]
kind = "complete"
k = 2

[oracle]
samples = 2000
"#
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn streams_are_distinct() {
        let a: u64 = replication_rng(1, 0, 1).random();
        let b: u64 = replication_rng(1, 1, 0).random();
        let c: u64 = replication_rng(1, 0, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_ne!(stream_id(0, 1), stream_id(1, 0));
    }

    #[test]
    fn clt_runs_and_reports() {
        let out = run_clt_experiment(&config("")).unwrap();
        assert_eq!(out.regime.regime, Regime::Sparse);
        assert_eq!(out.rungs.len(), 2);
        assert!(out.rungs.iter().all(|r| r.decomposition_exact && r.monotone_parts));
        assert!(out.report.to_text().contains("top_focus_ratio"));
    }

    #[test]
    fn growth_failure_refuses() {
        let mut cfg = config("");
        cfg.schedule = RadiusSchedule::Power { c0: 1.0, beta: 0.4 };
        assert!(matches!(run_clt_experiment(&cfg), Err(Error::GrowthCondition(_))));
    }

    #[test]
    fn degenerate_counts_flag_insufficient_data() {
        let mut cfg = config("");
        cfg.t_grid = vec![1e-9, 2e-9];
        cfg.clt.focus_t = 1e-9;
        let out = run_clt_experiment(&cfg).unwrap();
        assert!(out.rungs.iter().all(|r| r.insufficient_data));
        assert!(!out.report.pass());
        assert!(out.report.check("sufficient_data").is_some());
    }

    #[test]
    fn palm_rejects_large_orders() {
        let mut cfg = config("");
        cfg.shape = crate::config::ShapeSpec::Path { k: 4 };
        assert!(matches!(palm_mean_check(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn contained_cubes_lie_inside() {
        let g = 0.25;
        let cubes = contained_cubes(2, g, 1.0);
        assert!(!cubes.is_empty());
        for c in &cubes {
            for corner in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                let x = g * (c[0] + corner[0]) as f64;
                let y = g * (c[1] + corner[1]) as f64;
                assert!(x * x + y * y <= 1.0 + 1e-12);
            }
        }
        // the full square grid of side 0.25 in the unit disc has 32 cubes
        assert_eq!(cubes.len(), 32);
    }

    #[test]
    fn exact_coverage_small_cases() {
        assert!(exact_coverage(&[vec![0.0, 0.0]], 0.9, 0.1));
        assert!(!exact_coverage(&[vec![0.0, 0.0]], 1.5, 0.1));
    }
}
