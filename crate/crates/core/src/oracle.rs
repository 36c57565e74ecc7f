//! Limit covariances of the standardized count curves, by Monte Carlo.
//!
//! Heavy tails:
//!
//! ```text
//!   L_l(t,s) = B_l int dy int dz1 int dz2  h_t(0,y,z1) h_s(0,y,z2)
//! ```
//!
//! with `y` in `(R^d)^{l-1}` shared and `z1, z2` in `(R^d)^{k-l}`. Light tails:
//!
//! ```text
//!   M_l(t,s) = D_l int_0^inf drho int dy  exp(-(2k-l) rho - sum <e1,y_i>/c)
//!              1{rho + <e1,y_i>/c >= 0 for all i}  h_t(0,y,z1) h_s(0,y,z2)
//! ```
//!
//! A connected geometric graph at radius `t` that contains the origin lies in
//! the ball of radius `(k-1) t`, so every block is drawn uniformly from that
//! ball (shared points from the ball of the smaller radius) and weighted by
//! the ball volumes. In `M_l`, `rho` is drawn from `Exp(2k-l)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::factorial;

use crate::atlas::{pair_bit, GraphShape, IndicatorMode, ShapeMatcher, FLAG_MINUS, FLAG_PLAIN, FLAG_PLUS};
use crate::densities::TailFamily;
use crate::error::{Error, Result};
use crate::geometry::{ball_volume, random_direction, sphere_area};
use crate::regimes::Regime;

pub const MIN_SAMPLES: usize = 1000;
const BATCH: usize = 4096;
/// Relative floor on reported standard errors, for integrands that are
/// constant on their sampling support.
const SE_FLOOR: f64 = 1e-9;

/// `B_l = s_{d-1} / (l! ((k-l)!)^2 (alpha (2k-l) - d))`.
pub fn b_constant(d: usize, k: usize, ell: usize, alpha: f64) -> Result<f64> {
    check_orders(k, ell)?;
    let m = alpha * (2 * k - ell) as f64 - d as f64;
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha (2k - l) = {} does not exceed d = {d}",
            alpha * (2 * k - ell) as f64
        )));
    }
    Ok(d_constant(d, k, ell)? / m)
}

/// `D_l = s_{d-1} / (l! ((k-l)!)^2)`.
pub fn d_constant(d: usize, k: usize, ell: usize) -> Result<f64> {
    check_orders(k, ell)?;
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let kl = factorial((k - ell) as u64);
    Ok(sphere_area(d) / (factorial(ell as u64) * kl * kl))
}

fn check_orders(k: usize, ell: usize) -> Result<()> {
    if k < 2 || !(1..=k).contains(&ell) {
        return Err(Error::InvalidParameter(format!("need k >= 2 and 1 <= l <= k (k={k}, l={ell})")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
}

impl McSettings {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, antithetic: false }
    }
}

#[derive(Debug, Clone)]
pub struct OracleParams {
    pub d: usize,
    pub shape: GraphShape,
    pub ell: usize,
    pub mode: IndicatorMode,
    pub t_grid: Vec<f64>,
    pub mc: McSettings,
}

impl OracleParams {
    pub fn new(d: usize, shape: GraphShape, ell: usize, t_grid: Vec<f64>, mc: McSettings) -> Self {
        Self { d, shape, ell, mode: IndicatorMode::Plain, t_grid, mc }
    }

    pub fn with_mode(mut self, mode: IndicatorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn k(&self) -> usize {
        self.shape.k()
    }

    fn validate(&self) -> Result<()> {
        check_orders(self.k(), self.ell)?;
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if self.mc.samples < MIN_SAMPLES {
            return Err(Error::InvalidParameter(format!(
                "{} Monte Carlo samples requested; at least {MIN_SAMPLES} required",
                self.mc.samples
            )));
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("t-grid must be nonempty, finite and >= 0".into()));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "d={} k={} l={} shape=[{}] mode={:?} samples={} seed={} antithetic={}",
            self.d,
            self.k(),
            self.ell,
            self.shape.describe(),
            self.mode,
            self.mc.samples,
            self.mc.seed,
            self.mc.antithetic
        )
    }
}

/// Covariance over a t-grid with per-entry Monte Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCovariance {
    pub t_grid: Vec<f64>,
    /// Row-major `m x m`.
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub provenance: String,
}

impl LimitCovariance {
    pub fn size(&self) -> usize {
        self.t_grid.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    pub fn se(&self, i: usize, j: usize) -> f64 {
        self.std_errors[i * self.size() + j]
    }

    pub fn zeros(t_grid: Vec<f64>, provenance: impl Into<String>) -> Self {
        let m = t_grid.len();
        Self { t_grid, values: vec![0.0; m * m], std_errors: vec![0.0; m * m], provenance: provenance.into() }
    }

    /// `sum_i coef_i * cov_i`, errors combined in quadrature.
    pub fn combine(parts: &[(f64, &LimitCovariance)], provenance: impl Into<String>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty combination".into()))?
            .1;
        let mut out = Self::zeros(first.t_grid.clone(), provenance);
        let mut var = vec![0.0; out.values.len()];
        for (coef, cov) in parts {
            if cov.t_grid != first.t_grid {
                return Err(Error::InvalidParameter("covariances on different grids".into()));
            }
            for (idx, v) in cov.values.iter().enumerate() {
                out.values[idx] += coef * v;
                var[idx] += (coef * cov.std_errors[idx]).powi(2);
            }
        }
        out.std_errors = var.into_iter().map(f64::sqrt).collect();
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.std_errors.iter_mut().for_each(|v| *v *= c.abs());
        out
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.size();
        (0..m).all(|i| (0..m).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// `#`-prefixed provenance header, then a grid with a leading `t` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.provenance);
        let grid_row = |out: &mut String, data: &[f64]| {
            out.push('t');
            for t in &self.t_grid {
                let _ = write!(out, ",{t}");
            }
            out.push('\n');
            for (i, t) in self.t_grid.iter().enumerate() {
                let _ = write!(out, "{t}");
                for j in 0..self.size() {
                    let _ = write!(out, ",{}", data[i * self.size() + j]);
                }
                out.push('\n');
            }
        };
        grid_row(&mut out, &self.values);
        out.push_str("# standard errors\n");
        grid_row(&mut out, &self.std_errors);
        out
    }
}

/// Extra terms of the light-tail integrand.
#[derive(Debug, Clone, Copy)]
struct LightTerms {
    /// `1/c`; zero for `c = inf`.
    c_inv: f64,
    /// Bounds `K <= . < L` on the farthest radial coordinate.
    annulus: Option<(f64, f64)>,
}

/// Unit-ball draws for one sample: directions and radial uniforms per block point.
struct UnitDraw {
    dirs: Vec<f64>,
    radial: Vec<f64>,
    exp_uniform: f64,
}

struct Integrand<'a> {
    d: usize,
    k: usize,
    ell: usize,
    matcher: &'a ShapeMatcher,
    flag: u8,
    light: Option<LightTerms>,
    pairs: Vec<(usize, usize, u32)>,
}

impl Integrand<'_> {
    fn free_points(&self) -> usize {
        2 * self.k - self.ell - 1
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> UnitDraw {
        let m = self.free_points();
        let mut dirs = vec![0.0; m * self.d];
        for chunk in dirs.chunks_exact_mut(self.d) {
            random_direction(rng, chunk);
        }
        let radial = (0..m).map(|_| rng.random::<f64>()).collect();
        UnitDraw { dirs, radial, exp_uniform: rng.random::<f64>() }
    }

    fn has_shape(&self, pts: &[&[f64]], r: f64) -> bool {
        let mut mask = 0u32;
        for &(a, b, bit) in &self.pairs {
            let dist2: f64 = pts[a].iter().zip(pts[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            if dist2.sqrt() <= r {
                mask |= bit;
            }
        }
        self.matcher.flags(mask) & self.flag != 0
    }

    /// Weighted integrand at `(t, s)` for one draw; `flip` applies the
    /// antithetic map to the uniforms.
    fn value(&self, draw: &UnitDraw, t: f64, s: f64, flip: bool, buf: &mut Vec<f64>) -> f64 {
        if t <= 0.0 || s <= 0.0 {
            return 0.0;
        }
        let (d, k, ell) = (self.d, self.k, self.ell);
        let reach = (k - 1) as f64;
        let radius_of = |i: usize| -> f64 {
            if i < ell - 1 {
                reach * t.min(s)
            } else if i < k - 1 {
                reach * t
            } else {
                reach * s
            }
        };
        let m = self.free_points();
        buf.clear();
        buf.resize(m * d, 0.0);
        let mut weight = 1.0;
        let inv_d = 1.0 / d as f64;
        for i in 0..m {
            let r = radius_of(i);
            weight *= ball_volume(d) * r.powi(d as i32);
            let u = if flip { 1.0 - draw.radial[i] } else { draw.radial[i] };
            let rr = r * u.powf(inv_d);
            for c in 0..d {
                buf[i * d + c] = rr * draw.dirs[i * d + c];
            }
        }
        let origin = vec![0.0; d];
        let point = |i: usize| &buf[i * d..(i + 1) * d];
        // first configuration: 0, y_1..y_{k-1}; second: 0, y_1..y_{l-1}, y_k..y_{2k-l-1}
        let mut first: Vec<&[f64]> = Vec::with_capacity(k);
        first.push(&origin);
        first.extend((0..k - 1).map(point));
        if !self.has_shape(&first, t) {
            return 0.0;
        }
        let mut second: Vec<&[f64]> = Vec::with_capacity(k);
        second.push(&origin);
        second.extend((0..ell - 1).map(point));
        second.extend((k - 1..m).map(point));
        if !self.has_shape(&second, s) {
            return 0.0;
        }
        if let Some(light) = self.light {
            let v = if flip { 1.0 - draw.exp_uniform } else { draw.exp_uniform };
            let rate = (2 * k - ell) as f64;
            let rho = -(1.0 - v).ln() / rate;
            let first_coord = |i: usize| buf[i * d];
            let mut sum = 0.0;
            for i in 0..m {
                let x = light.c_inv * first_coord(i);
                if rho + x < 0.0 {
                    return 0.0;
                }
                sum += first_coord(i);
            }
            if let Some((lo, hi)) = light.annulus {
                let reach_of = |idx: &mut dyn Iterator<Item = usize>| -> f64 {
                    let best = idx.map(first_coord).fold(f64::NEG_INFINITY, f64::max);
                    if best == f64::NEG_INFINITY {
                        rho
                    } else {
                        rho.max(rho + light.c_inv * best)
                    }
                };
                let g1 = reach_of(&mut (0..k - 1));
                let g2 = reach_of(&mut (0..ell - 1).chain(k - 1..m));
                if !(g1 >= lo && g1 < hi && g2 >= lo && g2 < hi) {
                    return 0.0;
                }
            }
            weight *= (-light.c_inv * sum).exp() / rate;
        }
        weight
    }
}

/// Per-entry Monte Carlo means and standard errors of the integral (without
/// the `B_l` or `D_l` prefactor), for `i <= j`, mirrored.
fn integrate_grid(params: &OracleParams, light: Option<LightTerms>) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    let matcher = ShapeMatcher::new(&params.shape);
    let k = params.k();
    let flag = match params.mode {
        IndicatorMode::Plain => FLAG_PLAIN,
        IndicatorMode::Plus => FLAG_PLUS,
        IndicatorMode::Minus => FLAG_MINUS,
    };
    let integrand = Integrand {
        d: params.d,
        k,
        ell: params.ell,
        matcher: &matcher,
        flag,
        light,
        pairs: (1..k).flat_map(|b| (0..b).map(move |a| (a, b, 1u32 << pair_bit(a, b)))).collect(),
    };
    let grid = &params.t_grid;
    let m = grid.len();
    let entries: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let samples = params.mc.samples;
    let batches = samples.div_ceil(BATCH);
    let run_batch = |b: usize| -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(params.mc.seed);
        rng.set_stream(b as u64);
        let count = BATCH.min(samples - b * BATCH);
        let mut acc = vec![(0.0, 0.0); entries.len()];
        let mut buf = Vec::new();
        for _ in 0..count {
            let draw = integrand.draw(&mut rng);
            for (e, &(i, j)) in entries.iter().enumerate() {
                let mut v = integrand.value(&draw, grid[i], grid[j], false, &mut buf);
                if params.mc.antithetic {
                    v = 0.5 * (v + integrand.value(&draw, grid[i], grid[j], true, &mut buf));
                }
                acc[e].0 += v;
                acc[e].1 += v * v;
            }
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<(f64, f64)>> = {
        use rayon::prelude::*;
        (0..batches).into_par_iter().map(run_batch).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<(f64, f64)>> = (0..batches).map(run_batch).collect();

    let mut totals = vec![(0.0, 0.0); entries.len()];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part) {
            t.0 += p.0;
            t.1 += p.1;
        }
    }
    let nf = samples as f64;
    let mut mean = vec![0.0; m * m];
    let mut se = vec![0.0; m * m];
    for (e, &(i, j)) in entries.iter().enumerate() {
        let mu = totals[e].0 / nf;
        let var = ((totals[e].1 / nf - mu * mu) * nf / (nf - 1.0)).max(0.0);
        let err = (var / nf).sqrt().max(SE_FLOOR * mu.abs());
        for (a, b) in [(i, j), (j, i)] {
            mean[a * m + b] = mu;
            se[a * m + b] = err;
        }
    }
    Ok((mean, se))
}

/// `L_l(t,s)` on the grid for tail exponent `alpha`.
pub fn covariance_l(params: &OracleParams, alpha: f64) -> Result<LimitCovariance> {
    let b = b_constant(params.d, params.k(), params.ell, alpha)?;
    let (mean, se) = integrate_grid(params, None)?;
    Ok(LimitCovariance {
        t_grid: params.t_grid.clone(),
        values: mean.iter().map(|v| b * v).collect(),
        std_errors: se.iter().map(|v| b * v).collect(),
        provenance: format!("formula=L alpha={alpha} B={b} {}", params.describe()),
    })
}

/// `M_l(t,s)` on the grid for `c = lim a(r)` in `(0, inf]`, optionally on the
/// restricted domain with farthest radial coordinate in `[K, L)`.
pub fn covariance_m(params: &OracleParams, c: f64, annulus: Option<(f64, f64)>) -> Result<LimitCovariance> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("c={c} must be positive or infinite")));
    }
    if let Some((lo, hi)) = annulus {
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidParameter(format!("annulus needs 0 <= K < L (K={lo}, L={hi})")));
        }
    }
    let dl = d_constant(params.d, params.k(), params.ell)?;
    let c_inv = if c.is_infinite() { 0.0 } else { 1.0 / c };
    let (mean, se) = integrate_grid(params, Some(LightTerms { c_inv, annulus }))?;
    Ok(LimitCovariance {
        t_grid: params.t_grid.clone(),
        values: mean.iter().map(|v| dl * v).collect(),
        std_errors: se.iter().map(|v| dl * v).collect(),
        provenance: format!("formula=M c={c} annulus={annulus:?} D={dl} {}", params.describe()),
    })
}

/// Weight `K^{d - alpha m} - L^{d - alpha m}` of a heavy-tail annulus, `m = 2k - l`.
pub fn heavy_annulus_weight(d: usize, alpha: f64, m: usize, lower: f64, upper: f64) -> Result<f64> {
    if !(lower >= 1.0 && upper > lower) {
        return Err(Error::InvalidParameter(format!("heavy annulus needs 1 <= K < L (K={lower}, L={upper})")));
    }
    let e = d as f64 - alpha * m as f64;
    let hi = if upper.is_infinite() { 0.0 } else { upper.powf(e) };
    Ok(lower.powf(e) - hi)
}

/// Tail-family parameters of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixtureFamily {
    /// Tail exponent `alpha`; annulus `K R <= Max < L R`.
    Heavy { alpha: f64 },
    /// `c = lim a(r)`; annulus `K <= (Max - R)/a(R) < L`.
    Light { c: f64 },
}

impl MixtureFamily {
    pub fn tail(&self) -> TailFamily {
        match self {
            MixtureFamily::Heavy { .. } => TailFamily::Heavy,
            MixtureFamily::Light { .. } => TailFamily::Light,
        }
    }
}

/// Orders `l` entering the limit of a regime, with the power of `xi` attached.
pub fn regime_terms(regime: &Regime, k: usize) -> Vec<(usize, f64)> {
    match *regime {
        Regime::Sparse => vec![(k, 1.0)],
        Regime::Dense => vec![(1, 1.0)],
        Regime::Critical { xi } => (1..=k).map(|ell| (ell, xi.powi((2 * k - ell) as i32))).collect(),
    }
}

/// Limit of `tau^{-1} Cov(G_{K,L}(t), G_{K,L}(s))` for a regime.
///
/// `base` supplies shape, dimension, grid and Monte Carlo settings; its `ell`
/// is ignored. Each order uses the substream `seed + l`.
pub fn mixture_covariance(
    family: MixtureFamily,
    regime: &Regime,
    base: &OracleParams,
    annulus: Option<(f64, f64)>,
) -> Result<LimitCovariance> {
    let k = base.k();
    let mut parts = Vec::new();
    for (ell, xi_power) in regime_terms(regime, k) {
        let mut params = base.clone();
        params.ell = ell;
        params.mc.seed = base.mc.seed.wrapping_add(ell as u64);
        let cov = match family {
            MixtureFamily::Heavy { alpha } => {
                let (lower, upper) = annulus.unwrap_or((1.0, f64::INFINITY));
                let w = heavy_annulus_weight(base.d, alpha, 2 * k - ell, lower, upper)?;
                covariance_l(&params, alpha)?.scaled(w)
            }
            MixtureFamily::Light { c } => {
                let restrict = annulus.filter(|&(lo, hi)| lo > 0.0 || hi.is_finite());
                covariance_m(&params, c, restrict)?
            }
        };
        parts.push((xi_power, cov));
    }
    let refs: Vec<(f64, &LimitCovariance)> = parts.iter().map(|(c, v)| (*c, v)).collect();
    LimitCovariance::combine(
        &refs,
        format!("formula=mixture family={family:?} regime={regime:?} annulus={annulus:?} {}", base.describe()),
    )
}

/// `int h_t(0, y) dy` over `(R^d)^{k-1}` with its standard error.
pub fn shape_volume(d: usize, shape: &GraphShape, mode: IndicatorMode, t: f64, mc: McSettings) -> Result<(f64, f64)> {
    let params = OracleParams::new(d, shape.clone(), shape.k(), vec![t], mc).with_mode(mode);
    let (mean, se) = integrate_grid(&params, None)?;
    Ok((mean[0], se[0]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianCheck {
    /// `K^± = B_k int h^±_1(0, y) dy`.
    pub constant: f64,
    pub constant_se: f64,
    /// `(t, s, L^±(t,s), se, K^± min(t,s)^{d(k-1)})`.
    pub entries: Vec<(f64, f64, f64, f64, f64)>,
    /// Largest `|L - predicted| / combined se`.
    pub max_z: f64,
}

/// Compares `L^±_k(t,s)` with `K^± min(t,s)^{d(k-1)}`, the covariance of a
/// Brownian motion run at clock `t^{d(k-1)}`. The constant is estimated on an
/// independent stream.
pub fn brownian_identity_check(params: &OracleParams, alpha: f64) -> Result<BrownianCheck> {
    if params.ell != params.k() {
        return Err(Error::InvalidParameter("the Brownian representation concerns l = k".into()));
    }
    if params.mode == IndicatorMode::Plain {
        return Err(Error::InvalidParameter("use the monotone parts h+ or h-".into()));
    }
    let (d, k) = (params.d, params.k());
    let b = b_constant(d, k, k, alpha)?;
    let cov = covariance_l(params, alpha)?;
    let mut const_mc = params.mc;
    const_mc.seed = params.mc.seed ^ 0x9e37_79b9_7f4a_7c15;
    let (vol, vol_se) = shape_volume(d, &params.shape, params.mode, 1.0, const_mc)?;
    let (constant, constant_se) = (b * vol, b * vol_se);
    let expo = (d * (k - 1)) as f64;
    let mut entries = Vec::new();
    let mut max_z: f64 = 0.0;
    let m = cov.size();
    for i in 0..m {
        for j in 0..m {
            let (t, s) = (cov.t_grid[i], cov.t_grid[j]);
            let scale = t.min(s).powf(expo);
            let predicted = constant * scale;
            let se = (cov.se(i, j).powi(2) + (constant_se * scale).powi(2)).sqrt();
            let diff = (cov.get(i, j) - predicted).abs();
            let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
            max_z = max_z.max(z);
            entries.push((t, s, cov.get(i, j), cov.se(i, j), predicted));
        }
    }
    Ok(BrownianCheck { constant, constant_se, entries, max_z })
}

/// Symmetric factor `A` with `A A^T = cov`, after clamping negative
/// eigenvalues no larger in size than `1e-10 * trace`. Returns the factor
/// and the jitter used.
pub fn psd_factor(cov: &LimitCovariance) -> Result<(DMatrix<f64>, f64)> {
    let m = cov.size();
    let mat = DMatrix::from_fn(m, m, |i, j| 0.5 * (cov.get(i, j) + cov.get(j, i)));
    let trace = mat.trace().abs();
    let budget = 1e-10 * trace;
    let eig = SymmetricEigen::new(mat);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if m > 0 && min < -budget {
        return Err(Error::Indefinite { min_eigenvalue: min, budget });
    }
    let jitter = if m > 0 && min < 0.0 { -min } else { 0.0 };
    let roots = DVector::from_iterator(m, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    Ok((&eig.eigenvectors * DMatrix::from_diagonal(&roots), jitter))
}

/// Zero-mean Gaussian vectors on the grid with covariance `cov`.
pub fn sample_limit_paths<R: Rng + ?Sized>(cov: &LimitCovariance, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let (factor, _) = psd_factor(cov)?;
    let m = cov.size();
    Ok((0..count)
        .map(|_| {
            let z = DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
            (&factor * z).iter().copied().collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn k2() -> GraphShape {
        GraphShape::complete(2).unwrap()
    }

    #[test]
    fn constants() {
        assert!((b_constant(2, 2, 2, 4.0).unwrap() - PI / 6.0).abs() < 1e-14);
        assert!((b_constant(2, 2, 1, 4.0).unwrap() - PI / 5.0).abs() < 1e-14);
        assert!((d_constant(2, 2, 2).unwrap() - PI).abs() < 1e-14);
        assert!((d_constant(2, 2, 1).unwrap() - 2.0 * PI).abs() < 1e-14);
        assert!((d_constant(1, 2, 2).unwrap() - 1.0).abs() < 1e-14);
        assert!(b_constant(2, 2, 2, 0.5).is_err());
        assert!(d_constant(2, 2, 3).is_err());
    }

    #[test]
    fn rejects_small_sample_counts() {
        let p = OracleParams::new(2, k2(), 2, vec![1.0], McSettings::new(10, 1));
        assert!(matches!(covariance_l(&p, 4.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pair_covariance_closed_form() {
        let p = OracleParams::new(2, k2(), 2, vec![0.0, 0.5, 1.0, 2.0], McSettings::new(5000, 3));
        let cov = covariance_l(&p, 4.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let m = p.t_grid[i].min(p.t_grid[j]);
                let exact = PI * PI / 6.0 * m * m;
                assert!((cov.get(i, j) - exact).abs() <= 1e-9 * exact.max(1e-300));
            }
        }
        assert!(cov.is_symmetric());
        let m = covariance_m(&p, f64::INFINITY, None).unwrap();
        assert!((m.get(2, 2) - PI * PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_has_no_minus_part() {
        let p = OracleParams::new(2, GraphShape::complete(3).unwrap(), 3, vec![1.0, 2.0], McSettings::new(2000, 9))
            .with_mode(IndicatorMode::Minus);
        let cov = covariance_l(&p, 4.0).unwrap();
        assert!(cov.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_limit_is_rank_one_for_pairs() {
        let p = OracleParams::new(2, k2(), 1, vec![0.5, 1.0, 1.5], McSettings::new(2000, 4));
        let cov = covariance_l(&p, 4.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let corr = cov.get(i, j) / (cov.get(i, i) * cov.get(j, j)).sqrt();
                assert!((corr - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn annulus_weight_example() {
        let w = heavy_annulus_weight(2, 4.0, 2, 1.0, 2.0).unwrap();
        assert!((w - (1.0 - 2f64.powi(-6))).abs() < 1e-15);
        assert_eq!(heavy_annulus_weight(2, 4.0, 2, 1.0, f64::INFINITY).unwrap(), 1.0);
        assert!(heavy_annulus_weight(2, 4.0, 2, 0.5, 2.0).is_err());
    }

    #[test]
    fn sparse_mixture_equals_top_order() {
        let base = OracleParams::new(2, GraphShape::path(3).unwrap(), 3, vec![1.0], McSettings::new(4000, 11));
        let mix = mixture_covariance(MixtureFamily::Heavy { alpha: 4.0 }, &Regime::Sparse, &base, None).unwrap();
        let mut direct = base.clone();
        direct.mc.seed += 3;
        let l = covariance_l(&direct, 4.0).unwrap();
        assert_eq!(mix.values, l.values);
    }

    #[test]
    fn factorization_and_jitter() {
        let grid = vec![1.0, 2.0, 3.0];
        let mut cov = LimitCovariance::zeros(grid.clone(), "min");
        for i in 0..3 {
            for j in 0..3 {
                cov.values[i * 3 + j] = grid[i].min(grid[j]);
            }
        }
        let (a, jitter) = psd_factor(&cov).unwrap();
        assert_eq!(jitter, 0.0);
        let back = &a * a.transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[(i, j)] - cov.get(i, j)).abs() < 1e-12);
            }
        }
        let mut bad = cov.clone();
        bad.values = vec![1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert!(matches!(psd_factor(&bad), Err(Error::Indefinite { .. })));
        let zero = LimitCovariance::zeros(grid, "zero");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let paths = sample_limit_paths(&zero, 5, &mut rng).unwrap();
        assert!(paths.iter().flatten().all(|&x| x == 0.0));
    }
}
