#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMALL_CONFIG: &str = r#"{
  "curve": {"kind": "lipschitz-sawtooth", "slope": 1.0, "dim": 3},
  "noise": {"kind": "gaussian-isotropic", "sigma": 0.1},
  "levels": [1, 2, 3, 4],
  "sample_counts": [64, 128, 256, 512],
  "betas": [400, 100, 25, 6],
  "trials": 6,
  "seed": 11,
  "centers": 8
}
"#;

pub fn phasefit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasefit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn phasefit")
}

pub fn phasefit_ok(dir: &Path, args: &[&str]) -> String {
    let out = phasefit(dir, args);
    assert!(
        out.status.success(),
        "phasefit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// Every regular file under `root`, keyed by its relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                acc.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

/// Every subcommand, run in `dir` against a small config. Outputs land in
/// `dir/out`.
pub const COMMANDS: &[&[&str]] = &[
    &["synth", "--config", "cfg.json", "--strides", "3", "--out-dir", "out/synth"],
    &[
        "segment", "--trajectory", "out/synth/trajectory.csv", "--start", "0", "--period", "1",
        "--out", "out/seg.json",
    ],
    &[
        "fit", "--trajectory", "out/synth/trajectory.csv", "--segmentation", "out/seg.json",
        "--method", "partition", "--level", "3", "--out", "out/fit_partition.json",
    ],
    &[
        "fit", "--config", "cfg.json", "--method", "kernel", "--centers", "16", "--beta", "25",
        "--out", "out/fit_kernel.json",
    ],
    &["project", "--config", "cfg.json", "--level", "3", "--out", "out/project.json"],
    &["compare", "out/fit_partition.json", "out/project.json", "--out-dir", "out/compare"],
    &["rate-study", "--config", "cfg.json", "--out-dir", "out/rate"],
    &["center-sweep", "--config", "cfg.json", "--out-dir", "out/centers"],
    &["beta-sweep", "--config", "cfg.json", "--out-dir", "out/betas"],
];

/// Runs [`COMMANDS`] in a fresh directory and returns the produced files
/// and each command's stdout.
pub fn run_all_commands() -> (BTreeMap<PathBuf, Vec<u8>>, Vec<String>) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), SMALL_CONFIG).unwrap();
    let stdout = COMMANDS
        .iter()
        .map(|args| phasefit_ok(dir.path(), args))
        .collect();
    (snapshot(&dir.path().join("out")), stdout)
}
