use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rggcount::ExperimentConfig;

const CONFIG: &str = r#"
t_grid = [0.5, 1.0, 1.5]
n_ladder = [1e3, 1e4]
replications = 60
master_seed = 5
tests = ["clt", "census"]

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
samples = 5000
"#;

fn rggcount(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rggcount"));
    cmd.args(args);
    for var in ["RGGCOUNT_CONFIG", "RGGCOUNT_OUT", "RGGCOUNT_WORKERS", "RGGCOUNT_SEED"] {
        cmd.env_remove(var);
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn atlas_lists_classes() {
    let out = rggcount(&["atlas", "--k", "3"], &[]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("k=3 classes=2\n"));
    let out = rggcount(&["atlas", "--k", "4"], &[]);
    assert!(stdout(&out).starts_with("k=4 classes=6\n"));
}

#[test]
fn radii_table_for_both_families() {
    let out = rggcount(&["radii", "--family", "power", "--d", "2", "--alpha", "4", "--n", "1e5", "--n", "1e6"], &[]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,R_w,R_c,R_p(2),R_p(3),R_p(4)");
    assert_eq!(lines.len(), 3);
    let rw: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let c = 2.0 / std::f64::consts::PI.powi(2);
    assert!((rw / (c * 1e5f64).powf(0.25) - 1.0).abs() < 1e-3);
    let out = rggcount(&["radii", "--family", "von-mises", "--d", "2", "--tau", "1", "--n", "1e6"], &[]);
    assert!(out.status.success());
    let out = rggcount(&["radii", "--family", "power", "--d", "2", "--n", "1e6"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_code_two_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let no_density = CONFIG.replace("[density]\nfamily = \"power\"\nd = 2\nalpha = 4\n", "");
    let cfg = write_config(dir.path(), &no_density);
    let out_dir = dir.path().join("out");
    let out = rggcount(&["experiment", "--config", &cfg, "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
    let cfg = write_config(dir.path(), CONFIG);
    let out = rggcount(&["regime", "--config", &cfg, "--set", "replications=banana"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = rggcount(&["regime"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_outputs_match_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let mut runs = Vec::new();
    for workers in ["1", "8"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = rggcount(&["experiment", "--config", &cfg, "--workers", workers, "--out", out_dir.to_str().unwrap()], &[]);
        assert!(matches!(out.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&out.stderr));
        runs.push(read_dir_sorted(&out_dir));
    }
    assert_eq!(runs[0], runs[1]);
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["config.toml", "clt_report.txt", "census_report.txt", "seed_audit.csv", "manifest.txt"] {
        assert!(names.contains(&expected), "{names:?}");
    }
    let manifest = String::from_utf8(runs[0].iter().find(|(n, _)| n == "manifest.txt").unwrap().1.clone()).unwrap();
    assert_eq!(manifest.lines().count(), runs[0].len() - 1);
    assert!(manifest.lines().all(|l| l.split("  ").next().unwrap().len() == 64));
}

#[test]
fn echoed_configuration_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("out");
    let out = rggcount(&["sample", "--config", &cfg, "--set", "master_seed=11", "--out", out_dir.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let echoed = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    let parsed = ExperimentConfig::from_toml_str(&echoed).unwrap();
    let mut original = ExperimentConfig::from_toml_str(CONFIG).unwrap();
    original.master_seed = 11;
    assert_eq!(parsed, original);
    // the sampled cloud feeds the counter
    let cloud = out_dir.join("cloud.bin");
    let out = rggcount(&["count", "--config", &cfg, "--cloud", cloud.to_str().unwrap(), "--r", "2"], &[]);
    assert!(out.status.success());
    assert!(stdout(&out).lines().count() > 1);
}

#[test]
fn environment_mirrors_the_options() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("env");
    let by_env = rggcount(
        &["sample"],
        &[("RGGCOUNT_CONFIG", &cfg), ("RGGCOUNT_OUT", out_dir.to_str().unwrap()), ("RGGCOUNT_SEED", "3")],
    );
    assert!(by_env.status.success());
    let by_flag = rggcount(&["sample", "--config", &cfg, "--seed", "3"], &[]);
    assert_eq!(stdout(&by_env), stdout(&by_flag));
    assert!(stdout(&by_flag).contains("seed=3"));
    assert!(out_dir.join("manifest.txt").exists());
}

#[test]
fn oracle_prints_csv_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let out_dir = dir.path().join("oracle");
    let out = rggcount(&["oracle", "--config", &cfg, "--ell", "2", "--paths", "5", "--out", out_dir.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let paths = fs::read_to_string(out_dir.join("paths.csv")).unwrap();
    assert_eq!(paths.lines().count(), 1 + 5 * 3);
}
