//! Spherically symmetric densities with heavy (power-law) or von Mises tails,
//! their samplers, and the radii that organize the annuli structure.
//!
//! The two families are
//!
//! ```text
//!   power law:  f(x) = C / (1 + |x|^alpha),          alpha > d
//!   von Mises:  f(x) = C exp(-psi(|x|)),  psi(r) = r^tau / tau
//! ```
//!
//! `p(r) = f(r e_1)` is the radial profile. Sampling draws the radius by
//! inverting a tabulated radial survival function and the direction uniformly
//! on the sphere.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::geometry::{random_direction, sphere_area};
use crate::numeric::{bisect, expand_upper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Power { d: usize, alpha: f64 },
    VonMises { d: usize, tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailFamily {
    Heavy,
    Light,
}

impl DensitySpec {
    pub fn d(&self) -> usize {
        match *self {
            DensitySpec::Power { d, .. } | DensitySpec::VonMises { d, .. } => d,
        }
    }

    pub fn family(&self) -> TailFamily {
        match self {
            DensitySpec::Power { .. } => TailFamily::Heavy,
            DensitySpec::VonMises { .. } => TailFamily::Light,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DensitySpec::Power { d, alpha } => {
                if d == 0 {
                    return Err(Error::InvalidParameter("dimension must be >= 1".into()));
                }
                if !(alpha > d as f64) || !alpha.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "power law needs alpha > d (alpha={alpha}, d={d}); the mass integral diverges"
                    )));
                }
            }
            DensitySpec::VonMises { d, tau } => {
                if d == 0 {
                    return Err(Error::InvalidParameter("dimension must be >= 1".into()));
                }
                if !(tau > 0.0) || !tau.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "von Mises shape needs tau > 0 (tau={tau})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized radial profile `g(r)`.
    fn profile(&self, r: f64) -> f64 {
        match *self {
            DensitySpec::Power { alpha, .. } => 1.0 / (1.0 + r.powf(alpha)),
            DensitySpec::VonMises { tau, .. } => (-r.powf(tau) / tau).exp(),
        }
    }
}

/// Normalizing constant `C` with `C^{-1} = s_{d-1} int_0^inf r^{d-1} g(r) dr`,
/// by double-exponential quadrature on `[0,1]` and on `[1,inf)` mapped to `(0,1]`.
pub fn normalize(spec: &DensitySpec) -> Result<f64> {
    spec.validate()?;
    let d = spec.d() as f64;
    let radial = match *spec {
        DensitySpec::Power { alpha, .. } => {
            power_tail_integral(d, alpha, POWER_SPLIT)
                + quadrature::integrate(|r| r.powf(d - 1.0) * spec.profile(r), 0.0, POWER_SPLIT, 1e-15)
                    .integral
        }
        DensitySpec::VonMises { .. } => {
            let inner =
                quadrature::integrate(|r| r.powf(d - 1.0) * spec.profile(r), 0.0, 1.0, 1e-14);
            let outer = quadrature::integrate(
                |u| if u <= 0.0 { 0.0 } else { spec.profile(1.0 / u) * u.powf(-d - 1.0) },
                0.0,
                1.0,
                1e-14,
            );
            inner.integral + outer.integral
        }
    };
    let mass = sphere_area(spec.d()) * radial;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "normalizing integral is not finite for {spec:?}"
        )));
    }
    Ok(1.0 / mass)
}

const POWER_SPLIT: f64 = 2.0;

/// `int_x^inf u^{d-1}/(1+u^alpha) du` for `x > 1`, by the alternating series
/// `sum_j (-1)^j x^{d-alpha(j+1)} / (alpha(j+1)-d)`.
fn power_tail_integral(d: f64, alpha: f64, x: f64) -> f64 {
    let ratio = x.powf(-alpha);
    let mut term_pow = x.powf(d - alpha);
    let mut sum = 0.0;
    for j in 0..400 {
        let term = term_pow / (alpha * (j as f64 + 1.0) - d);
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        term_pow *= ratio;
    }
    sum
}

const TABLE_POINTS: usize = 4096;
const TABLE_TAIL: f64 = 1e-12;
const TABLE_HEAD: f64 = 1e-4;

/// Normalized radial law with a tabulated inverse survival function.
#[derive(Debug, Clone)]
pub struct RadialDensity {
    spec: DensitySpec,
    c: f64,
    surface: f64,
    /// `(ln S(r_i), ln r_i)` with `ln S` strictly decreasing.
    table: Vec<(f64, f64)>,
    r_lo: f64,
    s_lo: f64,
    r_hi: f64,
    s_hi: f64,
}

impl RadialDensity {
    pub fn new(spec: DensitySpec) -> Result<Self> {
        let c = normalize(&spec)?;
        let mut density = Self {
            spec,
            c,
            surface: sphere_area(spec.d()),
            table: Vec::new(),
            r_lo: 0.0,
            s_lo: 1.0,
            r_hi: 0.0,
            s_hi: 1.0,
        };
        density.build_table();
        Ok(density)
    }

    pub fn power_law(d: usize, alpha: f64) -> Result<Self> {
        Self::new(DensitySpec::Power { d, alpha })
    }

    pub fn von_mises(d: usize, tau: f64) -> Result<Self> {
        Self::new(DensitySpec::VonMises { d, tau })
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    pub fn family(&self) -> TailFamily {
        self.spec.family()
    }

    /// Normalizing constant `C`.
    pub fn c(&self) -> f64 {
        self.c
    }

    /// Radial profile `p(r) = f(r e_1)`.
    pub fn p(&self, r: f64) -> f64 {
        self.c * self.spec.profile(r)
    }

    pub fn ln_p(&self, r: f64) -> f64 {
        match self.spec {
            DensitySpec::Power { alpha, .. } => self.c.ln() - r.powf(alpha).ln_1p(),
            DensitySpec::VonMises { tau, .. } => self.c.ln() - r.powf(tau) / tau,
        }
    }

    /// `psi(r) = r^tau / tau` for the von Mises family.
    pub fn psi(&self, r: f64) -> Result<f64> {
        match self.spec {
            DensitySpec::VonMises { tau, .. } => Ok(r.powf(tau) / tau),
            DensitySpec::Power { .. } => Err(Error::WrongFamily(
                "psi is defined only for the von Mises family".into(),
            )),
        }
    }

    /// Auxiliary scale `a(r) = 1/psi'(r) = r^{1-tau}`.
    pub fn a(&self, r: f64) -> Result<f64> {
        match self.spec {
            DensitySpec::VonMises { tau, .. } => Ok(r.powf(1.0 - tau)),
            DensitySpec::Power { .. } => Err(Error::WrongFamily(
                "a(r) is defined only for the von Mises family".into(),
            )),
        }
    }

    /// Limit `c = lim a(r)`: 1 for tau = 1, infinite for tau < 1, 0 for tau > 1.
    pub fn a_limit(&self) -> Result<f64> {
        match self.spec {
            DensitySpec::VonMises { tau, .. } => Ok(if tau == 1.0 {
                1.0
            } else if tau < 1.0 {
                f64::INFINITY
            } else {
                0.0
            }),
            DensitySpec::Power { .. } => Err(Error::WrongFamily(
                "a(r) is defined only for the von Mises family".into(),
            )),
        }
    }

    /// `V(R)` in the growth product `n^k V(R) p(R)^k`: `R^d` for heavy tails,
    /// `a(R) R^{d-1}` for von Mises tails.
    pub fn layer_volume(&self, r: f64) -> f64 {
        let d = self.d() as f64;
        match self.spec {
            DensitySpec::Power { .. } => r.powf(d),
            DensitySpec::VonMises { tau, .. } => r.powf(1.0 - tau) * r.powf(d - 1.0),
        }
    }

    /// Radial survival function `P(|X| > r)`.
    pub fn survival(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        match self.spec {
            DensitySpec::VonMises { d, tau } => gamma_ur(d as f64 / tau, r.powf(tau) / tau),
            DensitySpec::Power { d, alpha } => {
                let d = d as f64;
                let integral = if r >= POWER_SPLIT {
                    power_tail_integral(d, alpha, r)
                } else {
                    power_tail_integral(d, alpha, POWER_SPLIT)
                        + quadrature::integrate(
                            |u| u.powf(d - 1.0) / (1.0 + u.powf(alpha)),
                            r,
                            POWER_SPLIT,
                            1e-15,
                        )
                        .integral
                };
                (self.c * self.surface * integral).min(1.0)
            }
        }
    }

    pub fn radial_cdf(&self, r: f64) -> f64 {
        1.0 - self.survival(r)
    }

    fn build_table(&mut self) {
        let ln_surv = |r: f64| self.survival(r).ln();
        let r_hi = {
            let target = TABLE_TAIL.ln();
            let f = |r: f64| ln_surv(r) - target;
            let hi = expand_upper(&f, 0.0, 1.0, 1e300).expect("survival decays to zero");
            bisect(f, 0.0, hi)
        };
        let r_lo = {
            let target = (1.0 - TABLE_HEAD).ln();
            let f = |r: f64| ln_surv(r) - target;
            bisect(f, 0.0, r_hi)
        };
        let (a, b) = (r_lo.ln(), r_hi.ln());
        let mut table = Vec::with_capacity(TABLE_POINTS);
        for i in 0..TABLE_POINTS {
            let lr = a + (b - a) * i as f64 / (TABLE_POINTS - 1) as f64;
            table.push((ln_surv(lr.exp()), lr));
        }
        // drop flat steps so ln S is strictly decreasing
        table.dedup_by(|next, prev| next.0 >= prev.0);
        self.s_lo = table[0].0.exp();
        self.s_hi = table[table.len() - 1].0.exp();
        self.r_lo = r_lo;
        self.r_hi = r_hi;
        self.table = table;
    }

    /// Radius `r` with `P(|X| > r) = s`, for `s` in `(0, 1]`.
    pub fn inverse_survival(&self, s: f64) -> f64 {
        debug_assert!(s > 0.0 && s <= 1.0);
        if s >= self.s_lo {
            // near the origin 1 - S(r) grows like r^d
            let frac = ((1.0 - s) / (1.0 - self.s_lo)).max(0.0);
            return self.r_lo * frac.powf(1.0 / self.d() as f64);
        }
        if s < self.s_hi {
            let target = s.ln();
            let f = |r: f64| self.survival(r).ln() - target;
            let hi = expand_upper(&f, self.r_hi, self.r_hi * 2.0, 1e300).unwrap_or(f64::MAX);
            return bisect(f, self.r_hi, hi);
        }
        let ls = s.ln();
        // first index with ln S <= ls
        let idx = self.table.partition_point(|&(l, _)| l > ls);
        let idx = idx.clamp(1, self.table.len() - 1);
        let (l0, r0) = self.table[idx - 1];
        let (l1, r1) = self.table[idx];
        let w = (ls - l0) / (l1 - l0);
        (r0 + w * (r1 - r0)).exp()
    }

    /// Radius drawn from the law of `|X|` conditioned on `|X| >= beyond`.
    pub fn sample_radius_beyond<R: Rng + ?Sized>(&self, beyond: f64, rng: &mut R) -> f64 {
        let s0 = self.survival(beyond);
        let u = 1.0 - rng.random::<f64>();
        self.inverse_survival(s0 * u).max(beyond)
    }

    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        self.inverse_survival(u)
    }

    /// One point from `f`, written into `out` (length `d`).
    pub fn sample_point_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let r = self.sample_radius(rng);
        random_direction(rng, out);
        out.iter_mut().for_each(|x| *x *= r);
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.d()];
        self.sample_point_into(rng, &mut out);
        out
    }

    // ---- radii ----

    /// Weak core radius: the root of `n p(R) = 1`.
    pub fn weak_core_radius(&self, n: f64) -> Result<f64> {
        self.intensity_level_radius(n, 1.0)
    }

    /// Root of `n p(R) = xi`.
    pub fn intensity_level_radius(&self, n: f64, xi: f64) -> Result<f64> {
        if !(n > 0.0 && xi > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need n > 0 and xi > 0 (n={n}, xi={xi})"
            )));
        }
        if n * self.p(0.0) <= xi {
            return Err(Error::ScheduleUndefined(format!(
                "n f(0) = {} does not exceed {xi}; no radius solves n p(R) = {xi}",
                n * self.p(0.0)
            )));
        }
        let target = (xi / n).ln();
        let f = |r: f64| self.ln_p(r) - target;
        let hi = expand_upper(&f, 0.0, 1.0, 1e300)
            .ok_or_else(|| Error::ScheduleUndefined("no sign change for n p(R) = xi".into()))?;
        Ok(bisect(f, 0.0, hi))
    }

    /// Admissible upper bound on `delta_1` for the power-law core radius.
    pub fn core_delta1_bound(&self) -> Result<f64> {
        match self.spec {
            DensitySpec::Power { d, alpha } => {
                let df = d as f64;
                Ok(alpha / (2f64.powf(df) * df.powf(df / 2.0 + 1.0)))
            }
            DensitySpec::VonMises { .. } => Err(Error::WrongFamily(
                "delta_1 is a free parameter only for the power-law family".into(),
            )),
        }
    }

    /// The fixed `delta_1 = d log 2 - log v + (1 + d/2) log d - log C` of the
    /// von Mises core radius, with `v = tau` the index of `psi`.
    pub fn von_mises_core_delta1(&self) -> Result<f64> {
        match self.spec {
            DensitySpec::VonMises { d, tau } => {
                let df = d as f64;
                Ok(df * 2f64.ln() - tau.ln() + (1.0 + df / 2.0) * df.ln() - self.c.ln())
            }
            DensitySpec::Power { .. } => Err(Error::WrongFamily(
                "the fixed delta_1 applies to the von Mises family".into(),
            )),
        }
    }

    /// Maximal core radius.
    ///
    /// Power law: `R = (1/p)^<-(delta1 n / (log n - delta2 log log n))` with
    /// `delta1` in `(0, alpha/(2^d d^{d/2+1}))`, `delta2` in `(0,1)`.
    /// Von Mises: `R = psi^<-(log n - log log log n - delta1 - delta2)` with
    /// `delta1` fixed by the family and `delta2 > 0`. `delta1` is ignored there.
    pub fn core_radius(&self, n: f64, delta1: Option<f64>, delta2: Option<f64>) -> Result<f64> {
        match self.spec {
            DensitySpec::Power { .. } => {
                let bound = self.core_delta1_bound()?;
                let d1 = delta1.unwrap_or(bound / 2.0);
                let d2 = delta2.unwrap_or(0.5);
                if !(d1 > 0.0 && d1 < bound) {
                    return Err(Error::InvalidParameter(format!(
                        "delta1={d1} outside (0, {bound})"
                    )));
                }
                if !(d2 > 0.0 && d2 < 1.0) {
                    return Err(Error::InvalidParameter(format!("delta2={d2} outside (0, 1)")));
                }
                if !(n > std::f64::consts::E) {
                    return Err(Error::ScheduleUndefined(format!(
                        "log log n undefined for n={n}"
                    )));
                }
                let denom = n.ln() - d2 * n.ln().ln();
                if denom <= 0.0 {
                    return Err(Error::ScheduleUndefined(format!(
                        "log n - delta2 log log n <= 0 at n={n}"
                    )));
                }
                let level = d1 * n / denom;
                // (1/p)(R) = level  <=>  ln p(R) = -ln level
                let target = -level.ln();
                if self.ln_p(0.0) <= target {
                    return Err(Error::ScheduleUndefined(format!(
                        "1/p(0) already exceeds {level} at n={n}"
                    )));
                }
                let f = |r: f64| self.ln_p(r) - target;
                let hi = expand_upper(&f, 0.0, 1.0, 1e300)
                    .ok_or_else(|| Error::ScheduleUndefined("no core radius".into()))?;
                Ok(bisect(f, 0.0, hi))
            }
            DensitySpec::VonMises { tau, .. } => {
                let d2 = delta2.unwrap_or(0.5);
                if !(d2 > 0.0) {
                    return Err(Error::InvalidParameter(format!("delta2={d2} must be > 0")));
                }
                let d1 = self.von_mises_core_delta1()?;
                let lll = if n > 1.0 && n.ln() > 1.0 {
                    n.ln().ln().ln()
                } else {
                    f64::NEG_INFINITY
                };
                if !(lll > 0.0) {
                    return Err(Error::ScheduleUndefined(format!(
                        "log log log n is not positive at n={n}"
                    )));
                }
                let level = n.ln() - lll - d1 - d2;
                if level <= 0.0 {
                    return Err(Error::ScheduleUndefined(format!(
                        "psi level {level} is not positive at n={n}"
                    )));
                }
                let f = |r: f64| r.powf(tau) / tau - level;
                let hi = expand_upper(&f, 0.0, 1.0, 1e300)
                    .ok_or_else(|| Error::ScheduleUndefined("no core radius".into()))?;
                Ok(bisect(f, 0.0, hi))
            }
        }
    }

    /// `ln(n^k V(R) p(R)^k)`, the log growth product.
    pub fn ln_growth_product(&self, n: f64, r: f64, k: usize) -> f64 {
        let k = k as f64;
        k * n.ln() + self.layer_volume(r).ln() + k * self.ln_p(r)
    }

    /// Poisson-layer radius: root beyond the weak core of `n^k V(R) p(R)^k = 1`.
    pub fn poisson_layer_radius(&self, n: f64, k: usize) -> Result<f64> {
        self.growth_level_radius(n, k, 0.0)
    }

    /// Root beyond the weak core of `ln(n^k V(R) p(R)^k) = level`.
    pub fn growth_level_radius(&self, n: f64, k: usize, level: f64) -> Result<f64> {
        let rw = self.weak_core_radius(n)?;
        let f = |r: f64| self.ln_growth_product(n, r, k) - level;
        if !(f(rw) > 0.0) {
            return Err(Error::ScheduleUndefined(format!(
                "growth product at the weak core ({}) does not exceed the level {}; no root beyond it",
                f(rw) + level,
                level
            )));
        }
        let hi = expand_upper(&f, rw, rw * 2.0, 1e300)
            .ok_or_else(|| Error::ScheduleUndefined("growth product never falls to the level".into()))?;
        Ok(bisect(f, rw, hi))
    }
}

/// How `R_n` depends on `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusSchedule {
    /// `R_n = c0 n^beta`.
    Power { c0: f64, beta: f64 },
    /// Root of `n p(R) = 1`.
    WeakCore,
    /// Root of `n p(R) = xi`.
    Level { xi: f64 },
    /// Maximal core radius with optional `delta_1`, `delta_2`.
    Core {
        #[serde(default)]
        delta1: Option<f64>,
        #[serde(default)]
        delta2: Option<f64>,
    },
    /// Poisson-layer radius for `k`-vertex subgraphs.
    PoissonLayer { k: usize },
    /// Inside the band between the weak core and the Poisson layer: the root of
    /// `n^k V(R) p(R)^k = V(R_w)^{1-theta}`, `0 < theta < 1`.
    Band { k: usize, theta: f64 },
    /// Explicit `(n, R_n)` pairs; `n` must match an entry.
    Explicit { table: Vec<(f64, f64)> },
}

impl RadiusSchedule {
    pub fn radius(&self, density: &RadialDensity, n: f64) -> Result<f64> {
        match self {
            RadiusSchedule::Power { c0, beta } => {
                if !(*c0 > 0.0 && n > 0.0) {
                    return Err(Error::InvalidParameter("power schedule needs c0 > 0".into()));
                }
                Ok(c0 * n.powf(*beta))
            }
            RadiusSchedule::WeakCore => density.weak_core_radius(n),
            RadiusSchedule::Level { xi } => density.intensity_level_radius(n, *xi),
            RadiusSchedule::Core { delta1, delta2 } => density.core_radius(n, *delta1, *delta2),
            RadiusSchedule::PoissonLayer { k } => density.poisson_layer_radius(n, *k),
            RadiusSchedule::Band { k, theta } => {
                if !(*theta > 0.0 && *theta < 1.0) {
                    return Err(Error::InvalidParameter(format!("theta={theta} outside (0,1)")));
                }
                let rw = density.weak_core_radius(n)?;
                let level = (1.0 - theta) * density.layer_volume(rw).ln();
                density.growth_level_radius(n, *k, level)
            }
            RadiusSchedule::Explicit { table } => table
                .iter()
                .find(|(m, _)| (m - n).abs() <= 1e-9 * n.abs().max(1.0))
                .map(|&(_, r)| r)
                .ok_or_else(|| Error::ScheduleUndefined(format!("no explicit radius for n={n}"))),
        }
    }
}
