//! Counts of small subgraphs in random geometric graphs on the points that
//! fall outside a growing ball, with samplers for heavy and light tailed radial
//! laws, Monte Carlo limit covariances and a replicated experiment harness.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atlas;
#[cfg(feature = "cli")]
pub mod cli;
pub mod cloud;
pub mod config;
pub mod counting;
pub mod densities;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod numeric;
pub mod oracle;
pub mod regimes;
pub mod stats;

pub use atlas::{Atlas, GraphShape, IndicatorMode};
pub use cloud::{sample_poisson_cloud, PointCloud};
pub use counting::{
    annuli_census, count_brute_force, count_decomposed, count_joint, count_subgraphs, max_element, Annulus,
    CountRequest, CountingCurve, DecomposedCurves,
};
pub use densities::{DensitySpec, RadialDensity, RadiusSchedule, TailFamily};
pub use error::{Error, Result};
pub use regimes::{classify_regime, check_growth_condition, standardize, tau, Regime, RegimeClass};
pub use oracle::{
    b_constant, brownian_identity_check, covariance_l, covariance_m, d_constant, mixture_covariance,
    sample_limit_paths, LimitCovariance, McSettings, MixtureFamily, OracleParams,
};
pub use config::{ExperimentConfig, ShapeSpec, TestKind};
pub use harness::{
    palm_mean_check, run_annuli_census_experiment, run_clt_experiment, run_core_experiment,
    run_experiment, run_poisson_layer_experiment, ExperimentReport,
};
