use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use phasefit::estimators::{
    empirical_risk, fit_kernel, fit_partition, l2_error, project_curve, Curve, KernelMetric, Sample,
};
use phasefit::experiments::report::{
    emit_beta_sweep, emit_center_sweep, emit_comparison, emit_rate_report, format_float,
    InputDigest, PROVENANCE_FILE,
};
use phasefit::experiments::{
    compare_curves, equispaced_centers, run_beta_sweep, run_center_sweep, run_rate_study,
    ExperimentConfig, Provenance,
};
use phasefit::gait::{phase_map, pool_strides, GaitSegmentation, Trajectory};
use phasefit::manifold::{Partition, Quadrature};
use phasefit::synth::{regressor_of, sample_dataset};
use sha2::{Digest, Sha256};

use crate::args::{
    Cli, Command, CompareArgs, FitArgs, Method, ProjectArgs, SegmentArgs, StudyArgs, SynthArgs,
};
use crate::error::{CliError, Result};
use crate::formats::json::{
    parse_config, parse_estimate, parse_segmentation, read_text, render_segmentation,
    to_pretty_json, write_text, EstimateFile,
};
use crate::formats::trajectory::{default_columns, parse_trajectory, render_trajectory};

/// The experiment config used when `--config` is omitted.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

/// Runs one command and returns the text to print on stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Project(a) => cmd_project(a),
        Command::RateStudy(a) => cmd_rate_study(a),
        Command::CenterSweep(a) => cmd_center_sweep(a),
        Command::BetaSweep(a) => cmd_beta_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::DefaultConfig => Ok(DEFAULT_CONFIG.to_string()),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File contents with their digest for the provenance block.
struct Input {
    text: String,
    digest: InputDigest,
}

fn read_input(path: &Path) -> Result<Input> {
    let text = read_text(path)?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    };
    Ok(Input { text, digest })
}

/// Loads `--config` or the built-in default.
fn load_config(path: Option<&Path>, prov: &mut Provenance) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let input = read_input(p)?;
            let cfg = parse_config(&input.text, p)?;
            prov.inputs.push(input.digest);
            Ok(cfg)
        }
        None => {
            prov.inputs.push(InputDigest {
                path: "<built-in default config>".into(),
                sha256: sha256_hex(DEFAULT_CONFIG.as_bytes()),
            });
            parse_config(DEFAULT_CONFIG, Path::new("<built-in default config>"))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    out.with_file_name(format!("{stem}.provenance.json"))
}

fn write_provenance(path: &Path, prov: &Provenance) -> Result<()> {
    write_text(path, &to_pretty_json(prov))
}

fn list_written(out: &mut String, files: &[PathBuf]) {
    for f in files {
        let _ = writeln!(out, "wrote {}", f.display());
    }
}

fn cmd_synth(a: SynthArgs) -> Result<String> {
    let mut prov = Provenance::new("synth");
    let mut cfg = load_config(a.config.as_deref(), &mut prov)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    prov.seed = Some(cfg.seed);
    let dim = cfg.curve.dim();
    if !dim.is_multiple_of(3) {
        return Err(CliError::Invalid(format!(
            "trajectory files hold 3-D markers, so the curve dimension must be a multiple of 3 (got {dim})"
        )));
    }
    if a.strides == 0 {
        return Err(CliError::Invalid("--strides must be at least 1".into()));
    }
    if !(a.period.is_finite() && a.period > 0.0) || !a.start.is_finite() {
        return Err(CliError::Invalid(
            "--period must be positive and --start finite".into(),
        ));
    }
    let m = a
        .samples
        .unwrap_or_else(|| *cfg.sample_counts.iter().max().expect("validated"));
    let measure = cfg.measure.build()?;
    let samples = sample_dataset(&cfg.curve, &measure, &cfg.noise, m, cfg.seed);

    // sample i belongs to stride i mod K; frames are time-ordered within each
    let mut per_stride: Vec<Vec<&Sample>> = vec![Vec::new(); a.strides];
    for (i, s) in samples.iter().enumerate() {
        per_stride[i % a.strides].push(s);
    }
    let seg = GaitSegmentation::periodic(a.start, a.period, a.strides)?;
    let mut timestamps = Vec::with_capacity(m);
    let mut positions = Vec::with_capacity(m);
    let mut duplicates = 0;
    for (k, group) in per_stride.iter_mut().enumerate() {
        group.sort_by(|x, y| x.s.value().total_cmp(&y.s.value()));
        let stride = seg.strides()[k];
        for s in group.iter() {
            let t = stride.start + s.s.value() * stride.period;
            if timestamps.last().is_some_and(|&prev| t <= prev) {
                duplicates += 1;
                continue;
            }
            timestamps.push(t);
            positions.push(s.x.clone());
        }
    }
    let traj = Trajectory::new(timestamps, positions, default_columns(dim / 3))?;

    create_dir(&a.out_dir)?;
    let traj_path = a.out_dir.join("trajectory.csv");
    let seg_path = a.out_dir.join("segmentation.json");
    write_text(&traj_path, &render_trajectory(&traj))?;
    write_text(&seg_path, &render_segmentation(&seg))?;
    let prov_path = a.out_dir.join(PROVENANCE_FILE);
    write_provenance(&prov_path, &prov)?;

    let mut out = String::new();
    let _ = writeln!(out, "frames: {}", traj.len());
    let _ = writeln!(out, "strides: {}", a.strides);
    if duplicates > 0 {
        let _ = writeln!(out, "dropped duplicate timestamps: {duplicates}");
    }
    list_written(&mut out, &[traj_path, seg_path, prov_path]);
    Ok(out)
}

fn cmd_segment(a: SegmentArgs) -> Result<String> {
    let mut prov = Provenance::new("segment");
    let input = read_input(&a.trajectory)?;
    let traj = parse_trajectory(input.text.as_bytes(), &a.trajectory)?;
    prov.inputs.push(input.digest);
    if !(a.period.is_finite() && a.period > 0.0) || !a.start.is_finite() {
        return Err(CliError::Invalid(
            "--period must be positive and --start finite".into(),
        ));
    }
    let last = *traj.timestamps().last().expect("nonempty trajectory");
    let count = match a.count {
        Some(c) => c,
        None => {
            let span = ((last - a.start) / a.period).floor();
            if span < 0.0 {
                return Err(CliError::Invalid(
                    "--start is after the last frame".into(),
                ));
            }
            span as usize + 1
        }
    };
    let seg = GaitSegmentation::periodic(a.start, a.period, count)?;
    let mapping = phase_map(&traj, &seg)?;
    write_text(&a.out, &render_segmentation(&seg))?;
    let prov_path = sidecar_path(&a.out);
    write_provenance(&prov_path, &prov)?;

    let mut out = String::new();
    let _ = writeln!(out, "strides: {count}");
    let _ = writeln!(out, "frames covered: {}", mapping.emitted());
    let _ = writeln!(out, "frames dropped: {}", mapping.dropped);
    list_written(&mut out, &[a.out, prov_path]);
    Ok(out)
}

/// Samples for `fit`: pooled from trajectories or drawn from a config.
struct FitData {
    samples: Vec<Sample>,
    summary: String,
}

fn load_trajectory_samples(a: &FitArgs, prov: &mut Provenance) -> Result<FitData> {
    if a.trajectory.is_empty() {
        return Err(CliError::Invalid(
            "give --trajectory with --segmentation, or --config for synthetic data".into(),
        ));
    }
    if a.trajectory.len() != a.segmentation.len() {
        return Err(CliError::Invalid(format!(
            "{} trajectories but {} segmentations; pass one segmentation per trajectory",
            a.trajectory.len(),
            a.segmentation.len()
        )));
    }
    let mut samples = Vec::new();
    let mut summary = String::new();
    let mut dim = None;
    for (tp, sp) in a.trajectory.iter().zip(&a.segmentation) {
        let ti = read_input(tp)?;
        let traj = parse_trajectory(ti.text.as_bytes(), tp)?;
        let si = read_input(sp)?;
        let seg = parse_segmentation(&si.text, sp)?;
        prov.inputs.push(ti.digest);
        prov.inputs.push(si.digest);
        if let Some(d) = dim {
            if d != traj.dim() {
                return Err(CliError::Invalid(format!(
                    "{} has {} coordinates but earlier trajectories have {d}",
                    tp.display(),
                    traj.dim()
                )));
            }
        }
        dim = Some(traj.dim());
        let mapping = phase_map(&traj, &seg)?;
        let _ = writeln!(
            summary,
            "{}: {} frames mapped, {} dropped",
            tp.display(),
            mapping.emitted(),
            mapping.dropped
        );
        let pooled = pool_strides(mapping.per_stride)?;
        samples.extend(pooled.samples);
    }
    if a.trajectory.len() > 1 {
        let note = format!(
            "samples pooled across {} trajectory files; recordings may differ between specimens",
            a.trajectory.len()
        );
        let _ = writeln!(summary, "note: {note}");
        prov.notes.push(note);
    }
    Ok(FitData { samples, summary })
}

fn load_synthetic_samples(a: &FitArgs, path: &Path, prov: &mut Provenance) -> Result<FitData> {
    let mut cfg = load_config(Some(path), prov)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    prov.seed = Some(cfg.seed);
    let m = a
        .samples
        .unwrap_or_else(|| *cfg.sample_counts.iter().max().expect("validated"));
    let measure = cfg.measure.build()?;
    let samples = sample_dataset(&cfg.curve, &measure, &cfg.noise, m, cfg.seed);
    Ok(FitData {
        samples,
        summary: format!("synthetic samples from {}\n", path.display()),
    })
}

fn cmd_fit(a: FitArgs) -> Result<String> {
    let mut prov = Provenance::new("fit");
    let data = match a.config.clone() {
        Some(path) => load_synthetic_samples(&a, &path, &mut prov)?,
        None => load_trajectory_samples(&a, &mut prov)?,
    };
    let samples = &data.samples;
    let mut out = data.summary;
    let _ = writeln!(out, "m: {}", samples.len());

    let (file, risk) = match a.method {
        Method::Partition => {
            let level = a.level.ok_or_else(|| {
                CliError::Invalid("--method partition needs --level".into())
            })?;
            let partition = Partition::dyadic(level).map_err(|e| CliError::Invalid(e.to_string()))?;
            let est = fit_partition(samples, &partition)?;
            let risk = empirical_risk(&est, samples)?;
            let counts: Vec<String> = est.counts().iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "cells: {}", partition.num_cells());
            let _ = writeln!(out, "counts: {}", counts.join(" "));
            let _ = writeln!(out, "empty cells filled: {}", est.fills().len());
            (EstimateFile::from_partition(&est, prov), risk)
        }
        Method::Kernel => {
            let n = a.centers.ok_or_else(|| {
                CliError::Invalid("--method kernel needs --centers".into())
            })?;
            let beta = a
                .beta
                .ok_or_else(|| CliError::Invalid("--method kernel needs --beta".into()))?;
            if n == 0 {
                return Err(CliError::Invalid("--centers must be at least 1".into()));
            }
            let metric: KernelMetric = a.metric.into();
            let est = fit_kernel(samples, &equispaced_centers(n), beta, a.lambda, metric)?;
            let risk = empirical_risk(&est, samples)?;
            let _ = writeln!(out, "centers: {n}");
            let _ = writeln!(
                out,
                "condition estimate: {}",
                est.condition().map_or_else(|| "n/a".into(), format_float)
            );
            (EstimateFile::from_kernel(&est, prov), risk)
        }
    };
    let _ = writeln!(out, "empirical risk: {}", format_float(risk));
    write_text(&a.out, &file.render())?;
    let _ = writeln!(out, "wrote {}", a.out.display());
    Ok(out)
}

fn cmd_project(a: ProjectArgs) -> Result<String> {
    let mut prov = Provenance::new("project");
    let cfg = load_config(a.config.as_deref(), &mut prov)?;
    let partition = Partition::dyadic(a.level).map_err(|e| CliError::Invalid(e.to_string()))?;
    let measure = cfg.measure.build()?;
    let resolution = a
        .quadrature
        .or(cfg.quadrature)
        .unwrap_or_else(|| Quadrature::default_resolution(a.level));
    let quad = Quadrature::midpoint(resolution).map_err(|e| CliError::Invalid(e.to_string()))?;
    let truth = regressor_of(&cfg.curve, &cfg.noise);
    let proj = project_curve(&truth, &partition, &measure, &quad)?;
    let err = l2_error(&truth, &proj, &measure, &quad)?;
    write_text(&a.out, &EstimateFile::from_piecewise(&proj, prov).render())?;
    let mut out = String::new();
    let _ = writeln!(out, "cells: {}", partition.num_cells());
    let _ = writeln!(out, "quadrature points: {resolution}");
    let _ = writeln!(out, "projection error: {}", format_float(err));
    let _ = writeln!(out, "wrote {}", a.out.display());
    Ok(out)
}

fn study_config(a: &StudyArgs, command: &str) -> Result<(ExperimentConfig, Provenance)> {
    let mut prov = Provenance::new(command);
    let mut cfg = load_config(a.config.as_deref(), &mut prov)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = a.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    prov.seed = Some(cfg.seed);
    Ok((cfg, prov))
}

fn cmd_rate_study(a: StudyArgs) -> Result<String> {
    let (cfg, prov) = study_config(&a, "rate-study")?;
    let report = run_rate_study(&cfg)?;
    let files = emit_rate_report(&report, &a.out_dir, a.format.into(), &prov)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "grid: {} levels x {} sample counts, {} trials each",
        cfg.levels.len(),
        cfg.sample_counts.len(),
        cfg.trials
    );
    if let Some(s) = &report.bias_slope {
        let _ = writeln!(out, "bias slope (m = {}): {:.4}", s.fixed, s.slope);
    }
    if let Some(s) = &report.variance_slope {
        let _ = writeln!(out, "variance slope (n = {}): {:.4}", s.fixed, s.slope);
    }
    if let Some(b) = &report.bound {
        let _ = writeln!(
            out,
            "bound: C1 = {:.6e}, C2 = {:.6e}, r = {}, held-out max ratio = {:.4}",
            b.c1, b.c2, b.rate, b.max_held_out_ratio
        );
    }
    let _ = writeln!(out, "failed trials: {}", report.failed_trials);
    list_written(&mut out, &files);
    Ok(out)
}

fn cmd_center_sweep(a: StudyArgs) -> Result<String> {
    let (cfg, prov) = study_config(&a, "center-sweep")?;
    let sweep = run_center_sweep(&cfg)?;
    let files = emit_center_sweep(&sweep, &a.out_dir, a.format.into(), &prov)?;
    let mut out = String::new();
    let _ = writeln!(out, "m: {}, beta: {}", sweep.m, format_float(sweep.beta));
    for r in &sweep.rows {
        let _ = writeln!(
            out,
            "n = {}: partition risk {:.6e}, kernel {}",
            r.level,
            r.partition_risk,
            match (&r.kernel_risk, &r.kernel_error) {
                (Some(k), _) => format!("risk {k:.6e}"),
                (None, Some(e)) => format!("failed ({e})"),
                (None, None) => "n/a".into(),
            }
        );
    }
    list_written(&mut out, &files);
    Ok(out)
}

fn cmd_beta_sweep(a: StudyArgs) -> Result<String> {
    let (cfg, prov) = study_config(&a, "beta-sweep")?;
    let sweep = run_beta_sweep(&cfg)?;
    let files = emit_beta_sweep(&sweep, &a.out_dir, a.format.into(), &prov)?;
    let mut out = String::new();
    let _ = writeln!(out, "m: {}, centers: {}", sweep.m, sweep.centers);
    for r in &sweep.rows {
        let _ = writeln!(
            out,
            "beta = {}: gram condition {:.3e}, {}",
            format_float(r.beta),
            r.gram_condition,
            match (&r.risk, &r.error) {
                (Some(risk), _) => format!(
                    "risk {risk:.6e}, total variation {:.6e}",
                    r.total_variation.unwrap_or(f64::NAN)
                ),
                (None, Some(e)) => format!("failed ({e})"),
                (None, None) => "n/a".into(),
            }
        );
    }
    list_written(&mut out, &files);
    Ok(out)
}

fn cmd_compare(a: CompareArgs) -> Result<String> {
    let mut prov = Provenance::new("compare");
    let ia = read_input(&a.a)?;
    let ib = read_input(&a.b)?;
    let fa = parse_estimate(&ia.text, &a.a)?;
    let fb = parse_estimate(&ib.text, &a.b)?;
    prov.inputs.push(ia.digest);
    prov.inputs.push(ib.digest);
    if fa.dim() != fb.dim() {
        return Err(CliError::Invalid(format!(
            "estimates have different dimensions ({} and {})",
            fa.dim(),
            fb.dim()
        )));
    }
    let mut out = String::new();
    if fa.provenance.inputs != fb.provenance.inputs || fa.provenance.seed != fb.provenance.seed {
        let note = "the two estimates were fitted on different inputs".to_string();
        let _ = writeln!(out, "note: {note}");
        prov.notes.push(note);
    }
    let ca: Box<dyn Curve> = fa.to_curve()?;
    let cb: Box<dyn Curve> = fb.to_curve()?;
    let cmp = compare_curves(&ca, &cb, a.grid)?;
    let files = emit_comparison(&cmp, &a.out_dir, a.format.into(), &prov)?;
    let _ = writeln!(out, "grid points: {}", cmp.points.len());
    let _ = writeln!(out, "sup gap: {}", format_float(cmp.sup_gap));
    let _ = writeln!(out, "rms gap: {}", format_float(cmp.rms_gap));
    list_written(&mut out, &files);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = parse_config(DEFAULT_CONFIG, Path::new("default.json")).unwrap();
        assert_eq!(cfg.curve.dim() % 3, 0);
        assert!(cfg.trials >= 1);
    }

    #[test]
    fn sidecar_sits_next_to_output() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/x/seg.json")),
            PathBuf::from("/tmp/x/seg.provenance.json")
        );
    }

    #[test]
    fn digests_are_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
