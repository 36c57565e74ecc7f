//! Experiment configuration: a strict TOML schema with dotted-key overrides.
//!
//! ```toml
//! t_grid = [0.5, 1.0]
//! n_ladder = [1e4, 1e5, 1e6]
//! replications = 1000
//! master_seed = 1
//! tests = ["clt", "palm"]
//!
//! [density]
//! family = "power"        # or "von_mises" with `tau`
//! d = 2
//! alpha = 4.0
//!
//! [schedule]
//! kind = "power"          # weak_core | level | core | poisson_layer | band | explicit
//! c0 = 1.0
//! beta = 0.3
//!
//! [shape]
//! kind = "complete"       # path | cycle | star | edges (with `edges = [[0, 1], ...]`)
//! k = 2
//! ```
//!
//! Optional sections `[oracle]`, `[clt]`, `[palm]`, `[poisson]`, `[core]` and
//! `[census]` tune the individual experiments.

use serde::{Deserialize, Serialize};

use crate::atlas::GraphShape;
use crate::densities::{DensitySpec, RadiusSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Complete { k: usize },
    Path { k: usize },
    Cycle { k: usize },
    Star { k: usize },
    Edges { k: usize, edges: Vec<[usize; 2]> },
}

impl ShapeSpec {
    pub fn build(&self) -> Result<GraphShape> {
        match self {
            ShapeSpec::Complete { k } => GraphShape::complete(*k),
            ShapeSpec::Path { k } => GraphShape::path(*k),
            ShapeSpec::Cycle { k } => GraphShape::cycle(*k),
            ShapeSpec::Star { k } => GraphShape::star(*k),
            ShapeSpec::Edges { k, edges } => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                GraphShape::from_edges(*k, &pairs)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Clt,
    Palm,
    PoissonLayer,
    Core,
    Census,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub samples: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { samples: 200_000, seed: 7, antithetic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltSection {
    /// Accepted band for `Var/tau` over the oracle.
    pub band: [f64; 2],
    /// Fraction of grid entries that must fall in the band.
    pub min_in_band: f64,
    /// Grid radius used for the marginal statistics.
    pub focus_t: f64,
    pub leave_one_out: bool,
    /// `[K, L]`, multiplicative for heavy tails, in units of `a(R)` for light tails.
    pub annulus: Option<[f64; 2]>,
    pub max_skewness: f64,
    pub max_excess_kurtosis: f64,
    pub min_ks_p: f64,
}

impl Default for CltSection {
    fn default() -> Self {
        Self {
            band: [0.8, 1.2],
            min_in_band: 0.9,
            focus_t: 1.0,
            leave_one_out: true,
            annulus: None,
            max_skewness: 0.3,
            max_excess_kurtosis: 0.6,
            min_ks_p: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PalmSection {
    pub samples: usize,
    pub seed: u64,
    /// Index into `n_ladder`; the top rung when absent.
    pub rung: Option<usize>,
    pub max_z: f64,
}

impl Default for PalmSection {
    fn default() -> Self {
        Self { samples: 400_000, seed: 11, rung: None, max_z: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonSection {
    pub t: f64,
    pub min_replications: usize,
    pub dispersion_band: [f64; 2],
    pub min_p: f64,
}

impl Default for PoissonSection {
    fn default() -> Self {
        Self { t: 1.0, min_replications: 2000, dispersion_band: [0.8, 1.2], min_p: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSection {
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    /// Multiples of the core radius at which coverage is evaluated.
    pub radius_factors: Vec<f64>,
    pub max_cells: usize,
    pub min_frequency: f64,
    /// Replications per rung whose exact coverage is verified on a fine grid.
    pub spot_checks: usize,
    pub spot_spacing: f64,
}

impl Default for CoreSection {
    fn default() -> Self {
        Self {
            delta1: None,
            delta2: Some(0.5),
            radius_factors: vec![1.0, 1.5],
            max_cells: 20_000_000,
            min_frequency: 0.9,
            spot_checks: 2,
            spot_spacing: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusSection {
    pub max_order: usize,
    pub t: f64,
}

impl Default for CensusSection {
    fn default() -> Self {
        Self { max_order: 3, t: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub density: DensitySpec,
    pub schedule: RadiusSchedule,
    pub shape: ShapeSpec,
    /// Subset order; must agree with the shape when present.
    #[serde(default)]
    pub k: Option<usize>,
    pub t_grid: Vec<f64>,
    pub n_ladder: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub tests: Vec<TestKind>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub clt: CltSection,
    #[serde(default)]
    pub palm: PalmSection,
    #[serde(default)]
    pub poisson: PoissonSection,
    #[serde(default)]
    pub core: CoreSection,
    #[serde(default)]
    pub census: CensusSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides::<&str>(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys, TOML values;
    /// bare words become strings), then validates.
    pub fn from_toml_with_overrides<S: AsRef<str>>(text: &str, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            // direct parse keeps line and column spans in field errors
            let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o.as_ref())?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn shape(&self) -> Result<GraphShape> {
        self.shape.build().map_err(|e| Error::Config(format!("shape: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.shape()?;
        if let Some(k) = self.k {
            if k != shape.k() {
                return Err(Error::Config(format!("k = {k} disagrees with the shape order {}", shape.k())));
            }
        }
        if self.t_grid.is_empty()
            || self.t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0))
            || self.t_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("t_grid must be nonempty, finite, >= 0 and strictly ascending".into()));
        }
        if self.n_ladder.is_empty()
            || self.n_ladder.iter().any(|n| !(n.is_finite() && *n > 0.0))
            || self.n_ladder.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("n_ladder must be nonempty, positive and strictly ascending".into()));
        }
        if self.replications < 2 {
            return Err(Error::Config("replications must be at least 2".into()));
        }
        let [lo, hi] = self.clt.band;
        if !(lo < hi) {
            return Err(Error::Config("clt.band must satisfy lower < upper".into()));
        }
        crate::densities::normalize(&self.density).map_err(|e| Error::Config(format!("density: {e}")))?;
        Ok(())
    }
}

/// Sets `a.b.c = value` in a TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
