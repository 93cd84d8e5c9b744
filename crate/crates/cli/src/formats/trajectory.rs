//! Marker trajectory CSV: header `t,<name>_x,<name>_y,<name>_z,...`, one row
//! per frame.

use std::io::{Read, Write};
use std::path::Path;

use phasefit::experiments::report::format_float;
use phasefit::gait::Trajectory;

use crate::error::{CliError, Result};

const AXES: [&str; 3] = ["x", "y", "z"];

/// Checks the header and returns the coordinate column names (without `t`).
fn check_header(path: &Path, header: &csv::StringRecord) -> Result<Vec<String>> {
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields.first() != Some(&"t") {
        return Err(CliError::parse(
            path,
            "line 1: missing column `t` (the header must start with t)",
        ));
    }
    let columns: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    if columns.is_empty() {
        return Err(CliError::parse(path, "line 1: no marker columns after `t`"));
    }
    for (g, group) in columns.chunks(3).enumerate() {
        let name = group[0].strip_suffix("_x").filter(|n| !n.is_empty()).ok_or_else(|| {
            CliError::parse(
                path,
                format!(
                    "line 1, column {}: expected a `<name>_x` column, found `{}`",
                    2 + 3 * g,
                    group[0]
                ),
            )
        })?;
        for (k, axis) in AXES.iter().enumerate().skip(1) {
            let expected = format!("{name}_{axis}");
            match group.get(k) {
                Some(found) if *found == expected => {}
                Some(found) => {
                    return Err(CliError::parse(
                        path,
                        format!(
                            "line 1, column {}: missing column `{expected}` (found `{found}`)",
                            2 + 3 * g + k
                        ),
                    ))
                }
                None => {
                    return Err(CliError::parse(
                        path,
                        format!("line 1: missing column `{expected}`"),
                    ))
                }
            }
        }
    }
    Ok(columns)
}

/// Parses a trajectory from CSV text. `path` is used in error messages.
pub fn parse_trajectory<R: Read>(reader: R, path: &Path) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::parse(path, format!("line 1: {e}")))?
        .clone();
    let columns = check_header(path, &header)?;
    let names: Vec<String> = std::iter::once("t".to_string()).chain(columns.iter().cloned()).collect();

    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::parse(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(CliError::parse(
                path,
                format!(
                    "line {line}: expected {} fields, found {}",
                    names.len(),
                    record.len()
                ),
            ));
        }
        let mut values = Vec::with_capacity(names.len());
        for (col, (cell, name)) in record.iter().zip(&names).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                CliError::parse(
                    path,
                    format!(
                        "line {line}, column {} (`{name}`): `{cell}` is not a number",
                        col + 1
                    ),
                )
            })?;
            if !v.is_finite() {
                return Err(CliError::parse(
                    path,
                    format!("line {line}, column {} (`{name}`): value is not finite", col + 1),
                ));
            }
            values.push(v);
        }
        timestamps.push(values[0]);
        positions.push(values[1..].to_vec());
    }
    if timestamps.is_empty() {
        return Err(CliError::parse(path, "no data rows"));
    }
    Trajectory::new(timestamps, positions, columns)
        .map_err(|e| CliError::parse(path, e.to_string()))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trajectory(std::io::BufReader::new(file), path)
}

/// Renders a trajectory with shortest round-trip decimals.
pub fn render_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for c in traj.columns() {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (t, x) in traj.timestamps().iter().zip(traj.positions()) {
        out.push_str(&format_float(*t));
        for v in x {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(render_trajectory(traj).as_bytes())
        .map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
}

/// Column names `<marker>_x, <marker>_y, <marker>_z` for `markers` markers
/// named `m0, m1, ...`.
pub fn default_columns(markers: usize) -> Vec<String> {
    (0..markers)
        .flat_map(|k| AXES.iter().map(move |a| format!("m{k}_{a}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<Trajectory> {
        parse_trajectory(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn parses_valid_file() {
        let t = parse("t,hip_x,hip_y,hip_z\n0,1,2,3\n0.5,1.5,2.5,3.5\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.marker_names(), vec!["hip"]);
        assert_eq!(t.positions()[1], vec![1.5, 2.5, 3.5]);
    }

    #[test]
    fn missing_column_is_named() {
        let err = parse("t,hip_x,hip_y\n0,1,2\n").unwrap_err();
        assert!(err.to_string().contains("hip_z"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = parse("time,hip_x,hip_y,hip_z\n0,1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("`t`"), "{err}");
        let err = parse("t,hip_x,knee_y,hip_z\n0,1,2,3\n").unwrap_err();
        assert!(err.to_string().contains("hip_y"), "{err}");
    }

    #[test]
    fn bad_cells_report_line_and_column() {
        let err = parse("t,a_x,a_y,a_z\n0,1,2,3\n1,1,oops,3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("column 3") && msg.contains("a_y"), "{msg}");
        let err = parse("t,a_x,a_y,a_z\n0,1,2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(parse("t,a_x,a_y,a_z\n1,0,0,0\n0,0,0,0\n").is_err());
        assert!(parse("t,a_x,a_y,a_z\n").is_err());
    }

    #[test]
    fn default_columns_follow_pattern() {
        assert_eq!(default_columns(2), vec!["m0_x", "m0_y", "m0_z", "m1_x", "m1_y", "m1_z"]);
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(rows in proptest::collection::vec(
            (1e-6f64..10.0, proptest::array::uniform3(-1e6f64..1e6)), 1..40)) {
            let mut t = 0.0;
            let mut timestamps = Vec::new();
            let mut positions = Vec::new();
            for (dt, x) in &rows {
                t += dt;
                timestamps.push(t);
                positions.push(x.to_vec());
            }
            let traj = Trajectory::new(timestamps, positions, default_columns(1)).unwrap();
            let text = render_trajectory(&traj);
            let back = parse(&text).unwrap();
            prop_assert_eq!(back, traj);
        }
    }
}
