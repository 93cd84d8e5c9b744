//! CSV, JSON and SVG artifacts for experiment results.
//!
//! Every writer is a pure function of its inputs, so regenerating from the
//! same report yields byte-identical files. CSV headers are fixed; the
//! provenance block travels in a `provenance.json` sidecar, in JSON outputs,
//! and as a comment inside each SVG.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{Plot, Series};
use super::{
    BetaSweep, CenterSweep, Comparison, ExperimentError, RateReport, Result,
};

/// Name of the provenance sidecar written next to every set of tables.
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Digest of one input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Where an artifact came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub inputs: Vec<InputDigest>,
    /// Free-form flags, e.g. that samples from several files were pooled.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new(command: impl Into<String>) -> Self {
        Provenance {
            tool: "phasefit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            ..Provenance::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("provenance serializes")
    }
}

/// Which artifact kinds to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Svg,
    #[default]
    All,
}

impl ReportFormat {
    fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::All)
    }

    fn svg(self) -> bool {
        matches!(self, ReportFormat::Svg | ReportFormat::All)
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            "all" => Ok(ReportFormat::All),
            other => Err(format!("unknown report format {other:?} (expected csv, svg or all)")),
        }
    }
}

/// A table under construction, rendered with shortest round-trip floats.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    text: String,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        CsvTable { text }
    }

    pub fn row(&mut self, fields: &[Field]) {
        let cells: Vec<String> = fields.iter().map(Field::render).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Field {
    pub fn opt(v: Option<f64>) -> Field {
        v.map_or(Field::Empty, Field::Float)
    }

    pub fn int(v: impl TryInto<u64>) -> Field {
        Field::Int(v.try_into().unwrap_or(u64::MAX))
    }

    fn render(&self) -> String {
        match self {
            Field::Float(v) => format_float(*v),
            Field::Int(v) => v.to_string(),
            Field::Text(s) if s.contains([',', '"', '\n']) => {
                format!("\"{}\"", s.replace('"', "\"\""))
            }
            Field::Text(s) => s.clone(),
            Field::Empty => String::new(),
        }
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(())
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct WithProvenance<'a, T> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// The rate table with header `n,m,mean_sq_err,se,mean_err`, where `n` is
/// the partition level and `se` the standard error of `mean_sq_err`.
pub fn rate_table_csv(report: &RateReport) -> String {
    let mut t = CsvTable::new(&["n", "m", "mean_sq_err", "se", "mean_err"]);
    for c in &report.cells {
        t.row(&[
            Field::int(c.level),
            Field::int(c.m),
            Field::Float(c.mean_sq_err),
            Field::Float(c.se_sq_err),
            Field::Float(c.mean_err),
        ]);
    }
    t.into_string()
}

fn rate_details_csv(report: &RateReport) -> String {
    let mut t = CsvTable::new(&[
        "n",
        "cells",
        "m",
        "trials",
        "failed_trials",
        "mean_sq_err",
        "se_sq_err",
        "mean_err",
        "se_err",
        "projection_sq_err",
        "mean_empty_cells",
        "bound",
    ]);
    for c in &report.cells {
        t.row(&[
            Field::int(c.level),
            Field::int(c.cells),
            Field::int(c.m),
            Field::int(c.trials),
            Field::int(c.failed_trials),
            Field::Float(c.mean_sq_err),
            Field::Float(c.se_sq_err),
            Field::Float(c.mean_err),
            Field::Float(c.se_err),
            Field::Float(c.projection_sq_err),
            Field::Float(c.mean_empty_cells),
            Field::opt(report.bound.as_ref().map(|b| b.eval(c.cells, c.m))),
        ]);
    }
    t.into_string()
}

fn distinct<T: PartialEq + Copy>(values: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn rate_plot(report: &RateReport) -> Plot {
    let mut plot = Plot::new("Partition estimator error", "N (cells)", "mean L2 error").log_log();
    let mut ms = distinct(report.cells.iter().map(|c| c.m));
    ms.sort_unstable();
    for &m in &ms {
        let mut pts: Vec<(f64, f64)> = report
            .cells
            .iter()
            .filter(|c| c.m == m)
            .map(|c| (c.cells as f64, c.mean_err))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        plot.push(Series::line(format!("m={m}"), pts).with_markers());
    }
    if let Some(bound) = &report.bound {
        for &m in &ms {
            let mut pts: Vec<(f64, f64)> = report
                .cells
                .iter()
                .filter(|c| c.m == m)
                .map(|c| (c.cells as f64, bound.eval(c.cells, c.m)))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            plot.push(Series::line(format!("bound m={m}"), pts).dashed());
        }
    }
    plot
}

fn rate_vs_m_plot(report: &RateReport) -> Plot {
    let mut plot = Plot::new("Partition estimator error", "m (samples)", "mean squared L2 error").log_log();
    let mut levels = distinct(report.cells.iter().map(|c| c.level));
    levels.sort_unstable();
    for &level in &levels {
        let mut pts: Vec<(f64, f64)> = report
            .cells
            .iter()
            .filter(|c| c.level == level)
            .map(|c| (c.m as f64, c.mean_sq_err))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        plot.push(Series::line(format!("n={level}"), pts).with_markers());
    }
    plot
}

/// Writes the rate study artifacts into `dir` and returns their paths.
pub fn emit_rate_report(
    report: &RateReport,
    dir: &Path,
    format: ReportFormat,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = Vec::new();
    let prov = provenance.to_json();
    if format.csv() {
        write_file(dir, "rate_table.csv", &rate_table_csv(report), &mut written)?;
        write_file(dir, "rate_cells.csv", &rate_details_csv(report), &mut written)?;
        let summary = WithProvenance {
            provenance,
            body: report,
        };
        write_file(dir, "rate_summary.json", &to_json(&summary), &mut written)?;
    }
    if format.svg() {
        write_file(dir, "rate_vs_n.svg", &rate_plot(report).to_svg(Some(&prov)), &mut written)?;
        write_file(dir, "rate_vs_m.svg", &rate_vs_m_plot(report).to_svg(Some(&prov)), &mut written)?;
    }
    write_file(dir, PROVENANCE_FILE, &(prov + "\n"), &mut written)?;
    Ok(written)
}

fn overlay_rows(
    t: &mut CsvTable,
    key: Field,
    truth: Option<&super::Overlay>,
    fits: &[Option<&super::Overlay>],
) {
    let Some(first) = fits.iter().flatten().next().copied().or(truth) else {
        return;
    };
    for (i, &s) in first.phases.iter().enumerate() {
        let dim = first.values[i].len();
        for j in 0..dim {
            let mut row = vec![key.clone(), Field::Float(s), Field::int(j)];
            row.push(Field::opt(truth.map(|o| o.values[i][j])));
            for fit in fits {
                row.push(Field::opt(fit.map(|o| o.values[i][j])));
            }
            t.row(&row);
        }
    }
}

fn center_sweep_csv(sweep: &CenterSweep) -> String {
    let mut t = CsvTable::new(&[
        "n",
        "cells",
        "m",
        "beta",
        "lambda",
        "partition_risk",
        "partition_l2_err",
        "partition_bias",
        "partition_sup_bias",
        "empty_cells",
        "kernel_risk",
        "kernel_l2_err",
        "kernel_condition",
        "sup_gap",
        "kernel_error",
    ]);
    for r in &sweep.rows {
        t.row(&[
            Field::int(r.level),
            Field::int(r.cells),
            Field::int(sweep.m),
            Field::Float(sweep.beta),
            Field::Float(sweep.lambda),
            Field::Float(r.partition_risk),
            Field::opt(r.partition_l2_err),
            Field::opt(r.partition_bias),
            Field::opt(r.partition_sup_bias),
            Field::int(r.empty_cells),
            Field::opt(r.kernel_risk),
            Field::opt(r.kernel_l2_err),
            Field::opt(r.kernel_condition),
            Field::opt(r.sup_gap),
            r.kernel_error.clone().map_or(Field::Empty, Field::Text),
        ]);
    }
    t.into_string()
}

fn center_counts_csv(sweep: &CenterSweep) -> String {
    let mut t = CsvTable::new(&["n", "cell", "count"]);
    for r in &sweep.rows {
        for (k, &c) in r.counts.iter().enumerate() {
            t.row(&[Field::int(r.level), Field::int(k), Field::int(c)]);
        }
    }
    t.into_string()
}

fn center_overlay_csv(sweep: &CenterSweep) -> String {
    let mut t = CsvTable::new(&["n", "s", "coord", "truth", "partition", "kernel"]);
    for r in &sweep.rows {
        overlay_rows(
            &mut t,
            Field::int(r.level),
            sweep.truth_overlay.as_ref(),
            &[Some(&r.partition_overlay), r.kernel_overlay.as_ref()],
        );
    }
    t.into_string()
}

fn center_error_plot(sweep: &CenterSweep) -> Plot {
    let mut plot = Plot::new("Error against number of centers", "N (cells or centers)", "value").log_log();
    let pick = |f: &dyn Fn(&super::CenterSweepRow) -> Option<f64>| -> Vec<(f64, f64)> {
        sweep
            .rows
            .iter()
            .filter_map(|r| f(r).map(|v| (r.cells as f64, v)))
            .collect()
    };
    plot.push(Series::line("partition risk", pick(&|r| Some(r.partition_risk))).with_markers());
    plot.push(Series::line("kernel risk", pick(&|r| r.kernel_risk)).with_markers());
    plot.push(Series::line("partition L2 error", pick(&|r| r.partition_l2_err)).with_markers());
    plot.push(Series::line("kernel L2 error", pick(&|r| r.kernel_l2_err)).with_markers());
    plot.push(Series::line("projection error", pick(&|r| r.partition_bias)).dashed());
    plot
}

fn first_coordinate(o: &super::Overlay) -> Vec<(f64, f64)> {
    o.phases.iter().zip(&o.values).map(|(&s, v)| (s, v[0])).collect()
}

fn center_overlay_plot(sweep: &CenterSweep) -> Option<Plot> {
    let row = sweep.rows.iter().max_by_key(|r| r.level)?;
    let mut plot = Plot::new(
        format!("Fits with {} cells and centers (coordinate 0)", row.cells),
        "phase s",
        "x_0",
    );
    if let Some(t) = &sweep.truth_overlay {
        plot.push(Series::line("truth", first_coordinate(t)).dashed());
    }
    plot.push(Series::line("partition", first_coordinate(&row.partition_overlay)));
    if let Some(k) = &row.kernel_overlay {
        plot.push(Series::line("kernel", first_coordinate(k)));
    }
    Some(plot)
}

/// Writes the center sweep artifacts into `dir`.
pub fn emit_center_sweep(
    sweep: &CenterSweep,
    dir: &Path,
    format: ReportFormat,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = Vec::new();
    let prov = provenance.to_json();
    if format.csv() {
        write_file(dir, "center_sweep.csv", &center_sweep_csv(sweep), &mut written)?;
        write_file(dir, "center_counts.csv", &center_counts_csv(sweep), &mut written)?;
        write_file(dir, "center_overlay.csv", &center_overlay_csv(sweep), &mut written)?;
    }
    if format.svg() {
        write_file(dir, "center_sweep.svg", &center_error_plot(sweep).to_svg(Some(&prov)), &mut written)?;
        if let Some(plot) = center_overlay_plot(sweep) {
            write_file(dir, "center_overlay.svg", &plot.to_svg(Some(&prov)), &mut written)?;
        }
    }
    write_file(dir, PROVENANCE_FILE, &(prov + "\n"), &mut written)?;
    Ok(written)
}

fn beta_sweep_csv(sweep: &BetaSweep) -> String {
    let mut t = CsvTable::new(&[
        "beta",
        "centers",
        "m",
        "lambda",
        "gram_condition",
        "system_condition",
        "risk",
        "l2_err",
        "total_variation",
        "coeff_norm",
        "suggested_lambda",
        "error",
    ]);
    for r in &sweep.rows {
        t.row(&[
            Field::Float(r.beta),
            Field::int(sweep.centers),
            Field::int(sweep.m),
            Field::Float(sweep.lambda),
            Field::Float(r.gram_condition),
            Field::opt(r.system_condition),
            Field::opt(r.risk),
            Field::opt(r.l2_err),
            Field::opt(r.total_variation),
            Field::opt(r.coeff_norm),
            Field::opt(r.suggested_lambda),
            r.error.clone().map_or(Field::Empty, Field::Text),
        ]);
    }
    t.into_string()
}

fn beta_overlay_csv(sweep: &BetaSweep) -> String {
    let mut t = CsvTable::new(&["beta", "s", "coord", "truth", "kernel"]);
    for r in &sweep.rows {
        if r.overlay.is_some() {
            overlay_rows(
                &mut t,
                Field::Float(r.beta),
                sweep.truth_overlay.as_ref(),
                &[r.overlay.as_ref()],
            );
        }
    }
    t.into_string()
}

fn beta_overlay_plot(sweep: &BetaSweep) -> Plot {
    let mut plot = Plot::new(
        format!("Kernel fits with {} centers (coordinate 0)", sweep.centers),
        "phase s",
        "x_0",
    );
    if let Some(t) = &sweep.truth_overlay {
        plot.push(Series::line("truth", first_coordinate(t)).dashed());
    }
    for r in &sweep.rows {
        if let Some(o) = &r.overlay {
            plot.push(Series::line(format!("beta={}", format_float(r.beta)), first_coordinate(o)));
        }
    }
    plot
}

fn beta_condition_plot(sweep: &BetaSweep) -> Plot {
    let mut plot = Plot::new("Conditioning and oscillation against beta", "beta", "value").log_log();
    let mut gram: Vec<(f64, f64)> = sweep.rows.iter().map(|r| (r.beta, r.gram_condition)).collect();
    let mut tv: Vec<(f64, f64)> = sweep
        .rows
        .iter()
        .filter_map(|r| r.total_variation.map(|v| (r.beta, v)))
        .collect();
    gram.sort_by(|a, b| a.0.total_cmp(&b.0));
    tv.sort_by(|a, b| a.0.total_cmp(&b.0));
    plot.push(Series::line("gram condition", gram).with_markers());
    plot.push(Series::line("total variation", tv).with_markers());
    plot
}

/// Writes the β sweep artifacts into `dir`.
pub fn emit_beta_sweep(
    sweep: &BetaSweep,
    dir: &Path,
    format: ReportFormat,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = Vec::new();
    let prov = provenance.to_json();
    if format.csv() {
        write_file(dir, "beta_sweep.csv", &beta_sweep_csv(sweep), &mut written)?;
        write_file(dir, "beta_overlay.csv", &beta_overlay_csv(sweep), &mut written)?;
    }
    if format.svg() {
        write_file(dir, "beta_overlay.svg", &beta_overlay_plot(sweep).to_svg(Some(&prov)), &mut written)?;
        write_file(dir, "beta_condition.svg", &beta_condition_plot(sweep).to_svg(Some(&prov)), &mut written)?;
    }
    write_file(dir, PROVENANCE_FILE, &(prov + "\n"), &mut written)?;
    Ok(written)
}

/// Gap table with columns `s, a_0.., b_0.., gap`.
pub fn comparison_csv(cmp: &Comparison) -> String {
    let dim = cmp.points.first().map_or(0, |p| p.a.len());
    let mut header: Vec<String> = vec!["s".into()];
    header.extend((0..dim).map(|j| format!("a_{j}")));
    header.extend((0..dim).map(|j| format!("b_{j}")));
    header.push("gap".into());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    for p in &cmp.points {
        let mut row = vec![Field::Float(p.s)];
        row.extend(p.a.iter().map(|&v| Field::Float(v)));
        row.extend(p.b.iter().map(|&v| Field::Float(v)));
        row.push(Field::Float(p.gap));
        t.row(&row);
    }
    t.into_string()
}

#[derive(Serialize)]
struct ComparisonSummary<'a> {
    provenance: &'a Provenance,
    points: usize,
    sup_gap: f64,
    rms_gap: f64,
}

fn comparison_plot(cmp: &Comparison) -> Plot {
    let mut plot = Plot::new("Comparison of two fits (coordinate 0)", "phase s", "x_0");
    plot.push(Series::line("a", cmp.points.iter().map(|p| (p.s, p.a[0])).collect()));
    plot.push(Series::line("b", cmp.points.iter().map(|p| (p.s, p.b[0])).collect()));
    plot.push(Series::line("gap", cmp.points.iter().map(|p| (p.s, p.gap)).collect()).dashed());
    plot
}

/// Writes the comparison artifacts into `dir`.
pub fn emit_comparison(
    cmp: &Comparison,
    dir: &Path,
    format: ReportFormat,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = Vec::new();
    let prov = provenance.to_json();
    if format.csv() {
        write_file(dir, "compare.csv", &comparison_csv(cmp), &mut written)?;
        let summary = ComparisonSummary {
            provenance,
            points: cmp.points.len(),
            sup_gap: cmp.sup_gap,
            rms_gap: cmp.rms_gap,
        };
        write_file(dir, "compare_summary.json", &to_json(&summary), &mut written)?;
    }
    if format.svg() && !cmp.points.is_empty() {
        write_file(dir, "compare.svg", &comparison_plot(cmp).to_svg(Some(&prov)), &mut written)?;
    }
    write_file(dir, PROVENANCE_FILE, &(prov + "\n"), &mut written)?;
    Ok(written)
}
