//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a selected experiment fails its checks,
//! 2 on configuration or input errors. Nothing is written under `--out`
//! unless the command completes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::atlas::Atlas;
use crate::cloud::{sample_poisson_cloud, PointCloud};
use crate::config::ExperimentConfig;
use crate::counting::{count_decomposed, CountRequest, CURVE_CSV_HEADER};
use crate::densities::{DensitySpec, RadialDensity};
use crate::error::{Error, Result};
use crate::harness::{self, classify_for, with_workers};
use crate::oracle::{
    covariance_l, covariance_m, mixture_covariance, sample_limit_paths, McSettings, MixtureFamily,
    OracleParams,
};
use crate::regimes::{check_growth_condition, regime_report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rggcount", version, about = "Subgraph counts of random geometric graphs outside expanding balls")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, env = "RGGCOUNT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set clt.band=[0.7,1.3]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, env = "RGGCOUNT_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, env = "RGGCOUNT_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Master seed; replaces `master_seed` from the configuration.
    #[arg(long, global = true, env = "RGGCOUNT_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Family {
    Power,
    #[value(name = "von_mises", alias = "von-mises")]
    VonMises,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the isomorphism classes of connected graphs on k vertices.
    Atlas {
        #[arg(long)]
        k: usize,
    },
    /// Tabulate weak-core, core and Poisson-layer radii.
    Radii {
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Sample sizes; repeatable. Defaults to the configured ladder.
        #[arg(long = "n")]
        n: Vec<f64>,
        /// Largest Poisson-layer order.
        #[arg(long, default_value_t = 4)]
        max_order: usize,
    },
    /// Draw a Poisson cloud and store it in the binary cloud format.
    Sample {
        /// Intensity; defaults to the top of the ladder.
        #[arg(long = "n")]
        n: Option<f64>,
        /// Keep only the exterior of the scheduled ball.
        #[arg(long)]
        exterior: bool,
    },
    /// Count the configured shape over the configured radius grid.
    Count {
        #[arg(long)]
        cloud: PathBuf,
        /// Exclusion radius.
        #[arg(long, default_value_t = 0.0)]
        r: f64,
    },
    /// Limit covariance on the configured grid.
    Oracle {
        /// Single order `l`; the regime mixture when absent.
        #[arg(long)]
        ell: Option<usize>,
        /// Also draw this many Gaussian limit vectors.
        #[arg(long, default_value_t = 0)]
        paths: usize,
    },
    /// Classify the configured schedule and check the growth condition.
    Regime,
    /// Run the configured experiments.
    Experiment,
}

/// Files produced by a command, written only after it succeeds.
struct Output {
    stdout: String,
    files: Vec<(String, Vec<u8>)>,
    failed: bool,
}

impl Output {
    fn text(stdout: String) -> Self {
        Self { stdout, files: Vec::new(), failed: false }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            if let Some(dir) = &cli.global.out {
                if let Err(e) = write_outputs(dir, &out.files) {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            }
            if out.failed {
                EXIT_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn load_config(global: &GlobalOpts) -> Result<ExperimentConfig> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml_with_overrides(&text, &global.overrides)
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
    if let Some(seed) = global.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<Output> {
    let g = &cli.global;
    match &cli.command {
        Command::Atlas { k } => {
            let atlas = Atlas::build(*k)?;
            let mut out = format!("k={k} classes={}\n", atlas.len());
            out.push_str(&atlas.export());
            Ok(Output { files: vec![("atlas.txt".into(), out.clone().into_bytes())], stdout: out, failed: false })
        }
        Command::Radii { family, d, alpha, tau, n, max_order } => {
            let (spec, ladder) = match family {
                Some(f) => {
                    let d = d.ok_or_else(|| Error::Config("--d is required with --family".into()))?;
                    let spec = match f {
                        Family::Power => DensitySpec::Power {
                            d,
                            alpha: alpha.ok_or_else(|| Error::Config("--alpha is required for the power family".into()))?,
                        },
                        Family::VonMises => DensitySpec::VonMises {
                            d,
                            tau: tau.ok_or_else(|| Error::Config("--tau is required for the von_mises family".into()))?,
                        },
                    };
                    (spec, n.clone())
                }
                None => {
                    let cfg = load_config(g)?;
                    (cfg.density, if n.is_empty() { cfg.n_ladder.clone() } else { n.clone() })
                }
            };
            if ladder.is_empty() {
                return Err(Error::Config("no sample sizes: pass --n or a configuration".into()));
            }
            if *max_order < 2 {
                return Err(Error::Config("--max-order must be at least 2".into()));
            }
            let density = RadialDensity::new(spec).map_err(|e| Error::Config(e.to_string()))?;
            let table = radii_table(&density, &ladder, *max_order)?;
            Ok(Output { files: vec![("radii.csv".into(), table.clone().into_bytes())], stdout: table, failed: false })
        }
        Command::Sample { n, exterior } => {
            let cfg = load_config(g)?;
            let density = RadialDensity::new(cfg.density)?;
            let n = n.unwrap_or(*cfg.n_ladder.last().expect("validated"));
            let r = if *exterior { Some(cfg.schedule.radius(&density, n)?) } else { None };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
            let cloud = sample_poisson_cloud(n, &density, &mut rng, r)?.with_meta(cfg.master_seed, n, r);
            let mut bin = Vec::new();
            cloud.write_binary(&mut bin)?;
            let summary = format!(
                "points={} d={} n={n} exterior_of={} seed={}\n",
                cloud.len(),
                cloud.d(),
                r.map_or("none".into(), |r| r.to_string()),
                cfg.master_seed
            );
            Ok(Output {
                stdout: summary,
                files: vec![("cloud.bin".into(), bin), ("config.toml".into(), cfg.to_toml_string()?.into_bytes())],
                failed: false,
            })
        }
        Command::Count { cloud, r } => {
            let cfg = load_config(g)?;
            let file = fs::File::open(cloud).map_err(|e| Error::Config(format!("{}: {e}", cloud.display())))?;
            let cloud = PointCloud::read_binary(std::io::BufReader::new(file))?;
            let req = CountRequest::new(cfg.shape()?, cfg.t_grid.clone(), *r);
            let curves = with_workers(g.workers, || count_decomposed(&cloud, &req))??;
            let mut csv = format!("{CURVE_CSV_HEADER}\n");
            curves.csv_rows(&mut csv);
            Ok(Output {
                files: vec![("curves.csv".into(), csv.clone().into_bytes()), ("config.toml".into(), cfg.to_toml_string()?.into_bytes())],
                stdout: csv,
                failed: false,
            })
        }
        Command::Oracle { ell, paths } => {
            let cfg = load_config(g)?;
            let density = RadialDensity::new(cfg.density)?;
            let shape = cfg.shape()?;
            let k = shape.k();
            let mc = McSettings { samples: cfg.oracle.samples, seed: cfg.oracle.seed, antithetic: cfg.oracle.antithetic };
            let base = OracleParams::new(density.d(), shape, ell.unwrap_or(k), cfg.t_grid.clone(), mc);
            let family = match cfg.density {
                DensitySpec::Power { alpha, .. } => MixtureFamily::Heavy { alpha },
                DensitySpec::VonMises { .. } => MixtureFamily::Light { c: density.a_limit()? },
            };
            let cov = with_workers(g.workers, || -> Result<_> {
                match (ell, family) {
                    (Some(_), MixtureFamily::Heavy { alpha }) => covariance_l(&base, alpha),
                    (Some(_), MixtureFamily::Light { c }) => covariance_m(&base, c, None),
                    (None, _) => {
                        let regime = classify_for(&cfg, &density)?;
                        mixture_covariance(family, &regime.regime, &base, cfg.clt.annulus.map(|[a, b]| (a, b)))
                    }
                }
            })??;
            let csv = cov.to_csv();
            let mut files = vec![("oracle.csv".into(), csv.clone().into_bytes())];
            if *paths > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
                let draws = sample_limit_paths(&cov, *paths, &mut rng)?;
                let mut text = String::from("path,t,value\n");
                for (i, p) in draws.iter().enumerate() {
                    for (t, v) in cov.t_grid.iter().zip(p) {
                        let _ = writeln!(text, "{i},{t},{v}");
                    }
                }
                files.push(("paths.csv".into(), text.into_bytes()));
            }
            files.push(("config.toml".into(), cfg.to_toml_string()?.into_bytes()));
            Ok(Output { stdout: csv, files, failed: false })
        }
        Command::Regime => {
            let cfg = load_config(g)?;
            let density = RadialDensity::new(cfg.density)?;
            let k = cfg.shape()?.k();
            let class = classify_for(&cfg, &density)?;
            let mut text = regime_report(&density, &cfg.schedule, k, &cfg.n_ladder)?;
            let _ = writeln!(text, "regime: {:?}", class.regime);
            let top = *cfg.n_ladder.last().expect("validated");
            let range = if cfg.n_ladder.len() >= 2 { cfg.n_ladder.clone() } else { vec![top / 10.0, top] };
            let growth = check_growth_condition(&density, &cfg.schedule, k, &range)?;
            let _ = writeln!(
                text,
                "growth condition: {} (per-decade log slope {:.4})",
                if growth.pass { "holds" } else { "fails" },
                growth.margin
            );
            Ok(Output::text(text))
        }
        Command::Experiment => {
            let cfg = load_config(g)?;
            let reports = with_workers(g.workers, || harness::run_experiment(&cfg))??;
            let mut stdout = String::new();
            let mut files = vec![("config.toml".into(), cfg.to_toml_string()?.into_bytes())];
            let mut failed = false;
            for r in &reports {
                stdout.push_str(&r.to_text());
                failed |= !r.pass();
                files.push((format!("{}_report.txt", r.experiment), r.to_text().into_bytes()));
                for (name, csv) in &r.tables {
                    files.push((name.clone(), csv.clone().into_bytes()));
                }
            }
            Ok(Output { stdout, files, failed })
        }
    }
}

fn radii_table(density: &RadialDensity, ladder: &[f64], max_order: usize) -> Result<String> {
    let mut out = String::from("n,R_w,R_c");
    for k in 2..=max_order {
        let _ = write!(out, ",R_p({k})");
    }
    out.push('\n');
    let cell = |r: Result<f64>| r.map_or_else(|_| String::from("NA"), |v| format!("{v:.6}"));
    for &n in ladder {
        let _ = write!(out, "{n},{},{}", cell(density.weak_core_radius(n)), cell(density.core_radius(n, None, None)));
        for k in 2..=max_order {
            let _ = write!(out, ",{}", cell(density.poisson_layer_radius(n, k)));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes every file plus `manifest.txt` listing `sha256  name`.
fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut sorted: Vec<&(String, Vec<u8>)> = files.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, bytes) in sorted {
        fs::write(dir.join(name), bytes)?;
        let _ = writeln!(manifest, "{}  {name}", hex::encode(Sha256::digest(bytes)));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}
