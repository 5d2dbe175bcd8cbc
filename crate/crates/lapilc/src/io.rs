//! CSV file formats: track tables, learned inputs and matrix dumps.
//!
//! Every file starts with a `# format_version: 1` comment line. Numbers are
//! written in a shortest round-trip form, so reading a file back reproduces
//! the values exactly.

use std::fmt::Write as _;
use std::path::Path;

use lapilc_core::track::{SpeedProfile, TimeGrid, TrackProfile};
use lapilc_core::vehicle::learned_stations;
use nalgebra::DMatrix;

use crate::config::FORMAT_VERSION;
use crate::error::{Error, Result};

pub const TRACK_HEADER: [&str; 3] = ["s_m", "kappa_1pm", "speed_mps"];
pub const LEARNED_HEADER: [&str; 3] = ["k", "s_m", "delta_L_rad"];

/// Formats `x` so that parsing the text gives back exactly `x`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn version_line() -> String {
    format!("# format_version: {FORMAT_VERSION}\n")
}

/// Writes `contents` to `path`, mapping failures to an output I/O error.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn check_version(path: &Path, text: &str) -> Result<()> {
    for line in text.lines() {
        let Some(comment) = line.strip_prefix('#') else {
            break;
        };
        if let Some(v) = comment.trim().strip_prefix("format_version:") {
            let v: u32 = v
                .trim()
                .parse()
                .map_err(|_| Error::input(path, "unreadable format_version"))?;
            if v != FORMAT_VERSION {
                return Err(Error::input(
                    path,
                    format!("format_version {v} is not supported"),
                ));
            }
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
    check_version(path, &text)?;
    Ok(text)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn parse_field(path: &Path, row: usize, column: &str, field: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::input(
            path,
            format!("row {row}: column {column}: '{field}' is not a number"),
        )
    })
}

/// Track table with an optional speed column.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackTable {
    pub track: TrackProfile,
    pub speed: Option<SpeedProfile>,
}

pub fn track_csv(track: &TrackProfile, speed: Option<&SpeedProfile>) -> String {
    let mut out = version_line();
    match speed {
        Some(v) => {
            out += &TRACK_HEADER.join(",");
            out.push('\n');
            for ((s, k), u) in track
                .stations()
                .iter()
                .zip(track.curvature())
                .zip(v.speed())
            {
                let _ = writeln!(out, "{},{},{}", fmt_f64(*s), fmt_f64(*k), fmt_f64(*u));
            }
        }
        None => {
            out += &TRACK_HEADER[..2].join(",");
            out.push('\n');
            for (s, k) in track.stations().iter().zip(track.curvature()) {
                let _ = writeln!(out, "{},{}", fmt_f64(*s), fmt_f64(*k));
            }
        }
    }
    out
}

pub fn write_track(path: &Path, track: &TrackProfile, speed: Option<&SpeedProfile>) -> Result<()> {
    write_file(path, &track_csv(track, speed))
}

pub fn read_track(path: &Path) -> Result<TrackTable> {
    let text = read_text(path)?;
    parse_track(path, &text)
}

pub fn parse_track(path: &Path, text: &str) -> Result<TrackTable> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(|e| Error::input(path, e))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_speed = match names.as_slice() {
        [a, b] if *a == TRACK_HEADER[0] && *b == TRACK_HEADER[1] => false,
        [a, b, c] if *a == TRACK_HEADER[0] && *b == TRACK_HEADER[1] && *c == TRACK_HEADER[2] => {
            true
        }
        _ => {
            return Err(Error::input(
                path,
                format!(
                    "expected header {} (speed optional)",
                    TRACK_HEADER.join(",")
                ),
            ))
        }
    };
    let (mut stations, mut curvature, mut speed) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(path, e))?;
        let row = i + 1;
        stations.push(parse_field(path, row, TRACK_HEADER[0], &rec[0])?);
        curvature.push(parse_field(path, row, TRACK_HEADER[1], &rec[1])?);
        if with_speed {
            speed.push(parse_field(path, row, TRACK_HEADER[2], &rec[2])?);
        }
    }
    let track = TrackProfile::new(stations, curvature).map_err(|e| Error::input(path, e))?;
    let speed = if with_speed {
        Some(SpeedProfile::new(&track, speed).map_err(|e| Error::input(path, e))?)
    } else {
        None
    };
    Ok(TrackTable { track, speed })
}

/// Learned input table: sample index, lookup distance and value.
pub fn learned_input_csv(grid: &TimeGrid, values: &[f64]) -> String {
    let mut out = version_line();
    out += &LEARNED_HEADER.join(",");
    out.push('\n');
    for (k, (s, v)) in learned_stations(grid).iter().zip(values).enumerate() {
        let _ = writeln!(out, "{k},{},{}", fmt_f64(*s), fmt_f64(*v));
    }
    out
}

pub fn write_learned_input(path: &Path, grid: &TimeGrid, values: &[f64]) -> Result<()> {
    write_file(path, &learned_input_csv(grid, values))
}

/// Reads a learned input and checks it has one value per sample of `grid`.
pub fn read_learned_input(path: &Path, grid: &TimeGrid) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let mut rdr = reader(&text);
    let headers = rdr.headers().map_err(|e| Error::input(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != LEARNED_HEADER {
        return Err(Error::input(
            path,
            format!("expected header {}", LEARNED_HEADER.join(",")),
        ));
    }
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::input(path, e))?;
        let k: usize = rec[0]
            .parse()
            .map_err(|_| Error::input(path, format!("row {}: bad sample index", i + 1)))?;
        if k != i {
            return Err(Error::input(
                path,
                format!("row {}: sample index {k} out of order", i + 1),
            ));
        }
        values.push(parse_field(path, i + 1, LEARNED_HEADER[2], &rec[2])?);
    }
    if values.len() != grid.n() {
        return Err(Error::input(
            path,
            format!("{} samples in file, the lap has {}", values.len(), grid.n()),
        ));
    }
    Ok(values)
}

/// Row-major dump of a matrix with a `# N=<rows> Ts=<ts>` header line.
pub fn matrix_csv(m: &DMatrix<f64>, sample_time: f64) -> String {
    let mut out = version_line();
    let _ = writeln!(out, "# N={} Ts={}", m.nrows(), fmt_f64(sample_time));
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|x| fmt_f64(*x)).collect();
        out += &row.join(",");
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, sample_time: f64) -> Result<()> {
    write_file(path, &matrix_csv(m, sample_time))
}

pub fn read_matrix(path: &Path) -> Result<(DMatrix<f64>, f64)> {
    let text = read_text(path)?;
    let mut dims: Option<(usize, f64)> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix('#') {
            let mut n = None;
            let mut ts = None;
            for tok in comment.split_whitespace() {
                if let Some(v) = tok.strip_prefix("N=") {
                    n = v.parse().ok();
                } else if let Some(v) = tok.strip_prefix("Ts=") {
                    ts = v.parse().ok();
                }
            }
            if let (Some(n), Some(ts)) = (n, ts) {
                dims = Some((n, ts));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| parse_field(path, line_no + 1, "value", f.trim()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let (n, ts) = dims.ok_or_else(|| Error::input(path, "missing '# N=<n> Ts=<ts>' header"))?;
    if rows.len() != n {
        return Err(Error::input(
            path,
            format!("header says {n} rows, found {}", rows.len()),
        ));
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::input(path, "ragged rows"));
    }
    Ok((DMatrix::from_fn(n, cols, |i, j| rows[i][j]), ts))
}
