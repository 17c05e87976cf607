//! Trajectory and summary CSV files.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values. Files are written to a temporary
//! sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use adaprecon::{StepKind, Trajectory};

use crate::error::{CliError, CliResult};

/// Trajectories list coordinates only up to this dimension.
pub const MAX_LOGGED_DIM: usize = 8;

pub const SUMMARY_HEADER: [&str; 12] = [
    "run_id",
    "seed",
    "status",
    "final_f",
    "min_f",
    "f_threshold",
    "iters_to_threshold",
    "escape_level",
    "escape_time",
    "mean_last_1000_f",
    "sup_est_error",
    "trajectory",
];

/// One row of a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRow {
    pub iter: i64,
    pub step_kind: StepKind,
    pub f: f64,
    pub grad_norm: f64,
    pub lambda_min_h: Option<f64>,
    pub est_error: Option<f64>,
    pub x: Vec<f64>,
}

impl TrajRow {
    pub fn is_iterate(&self) -> bool {
        matches!(self.step_kind, StepKind::Normal | StepKind::Large)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.parse()
        .map_err(|_| CliError::config(format!("{what}: not a number: {s:?}")))
}

fn parse_opt(s: &str, what: &str) -> CliResult<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

/// Rows to log: every `log_every`-th iterate plus the last one; burn-in and
/// hallucinated records only when every record is logged.
pub fn rows_from_trajectory(traj: &Trajectory, dim: usize, log_every: usize) -> Vec<TrajRow> {
    let last_iter = traj.iterates().last().map(|r| r.iter);
    traj.records
        .iter()
        .filter(|r| {
            if log_every <= 1 {
                return true;
            }
            matches!(r.step_kind, StepKind::Normal | StepKind::Large)
                && (r.iter % log_every as i64 == 0 || Some(r.iter) == last_iter)
        })
        .map(|r| TrajRow {
            iter: r.iter,
            step_kind: r.step_kind,
            f: r.f_val,
            grad_norm: r.grad_norm,
            lambda_min_h: r.lambda_min_h,
            est_error: r.est_error,
            x: if dim <= MAX_LOGGED_DIM { r.x.clone() } else { Vec::new() },
        })
        .collect()
}

pub fn trajectory_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "step_kind", "f", "grad_norm", "lambda_min_H", "est_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if dim <= MAX_LOGGED_DIM {
        h.extend((0..dim).map(|i| format!("x_{i}")));
    }
    h
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_trajectory(path: &Path, dim: usize, rows: &[TrajRow]) -> CliResult<()> {
    let bytes = csv_bytes(
        &trajectory_header(dim),
        rows.iter().map(|r| {
            let mut rec = vec![
                r.iter.to_string(),
                r.step_kind.as_str().to_string(),
                fmt_f64(r.f),
                fmt_f64(r.grad_norm),
                fmt_opt(r.lambda_min_h),
                fmt_opt(r.est_error),
            ];
            rec.extend(r.x.iter().map(|v| fmt_f64(*v)));
            rec
        }),
    )?;
    write_atomic(path, &bytes)
}

pub fn read_trajectory(path: &Path) -> CliResult<(Vec<String>, Vec<TrajRow>)> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let fixed = trajectory_header(0);
    if header.len() < fixed.len() || header[..fixed.len()] != fixed[..] {
        return Err(CliError::config(format!("{}: not a trajectory file", path.display())));
    }
    let what = path.display().to_string();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let kind = StepKind::parse(&rec[1])
            .ok_or_else(|| CliError::config(format!("{what}: unknown step kind {:?}", &rec[1])))?;
        rows.push(TrajRow {
            iter: rec[0].parse().map_err(|_| CliError::config(format!("{what}: bad iter")))?,
            step_kind: kind,
            f: parse_f64(&rec[2], &what)?,
            grad_norm: parse_f64(&rec[3], &what)?,
            lambda_min_h: parse_opt(&rec[4], &what)?,
            est_error: parse_opt(&rec[5], &what)?,
            x: rec.iter().skip(6).map(|s| parse_f64(s, &what)).collect::<CliResult<_>>()?,
        });
    }
    Ok((header, rows))
}

/// Per-(run, seed) summary, computed from the logged rows alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    /// `ok` or `diverged`.
    pub status: String,
    pub final_f: f64,
    pub min_f: f64,
    pub f_threshold: Option<f64>,
    pub iters_to_threshold: Option<i64>,
    pub escape_level: f64,
    pub escape_time: Option<i64>,
    pub mean_last_1000_f: f64,
    pub sup_est_error: Option<f64>,
    /// Trajectory file name, relative to the summary's directory.
    pub trajectory: String,
}

pub fn summarize(
    run_id: &str,
    seed: u64,
    status: &str,
    rows: &[TrajRow],
    f_threshold: Option<f64>,
    escape_level: f64,
    trajectory: &str,
) -> RunSummary {
    let iterates: Vec<&TrajRow> = rows.iter().filter(|r| r.is_iterate()).collect();
    let first_at_or_below = |level: f64| iterates.iter().find(|r| r.f <= level).map(|r| r.iter);
    // iterates within the last 1000 iterations, whatever the logging stride
    let last_iter = iterates.last().map_or(0, |r| r.iter);
    let tail: Vec<&&TrajRow> = iterates.iter().filter(|r| r.iter > last_iter - 1000).collect();
    let mean_tail = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().map(|r| r.f).sum::<f64>() / tail.len() as f64
    };
    let sup_est_error = rows
        .iter()
        .filter_map(|r| r.est_error)
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    RunSummary {
        run_id: run_id.to_string(),
        seed,
        status: status.to_string(),
        final_f: iterates.last().map_or(f64::NAN, |r| r.f),
        min_f: iterates.iter().map(|r| r.f).fold(f64::INFINITY, f64::min),
        f_threshold,
        iters_to_threshold: f_threshold.and_then(first_at_or_below),
        escape_level,
        escape_time: first_at_or_below(escape_level),
        mean_last_1000_f: mean_tail,
        sup_est_error,
        trajectory: trajectory.to_string(),
    }
}

fn summary_record(s: &RunSummary) -> Vec<String> {
    vec![
        s.run_id.clone(),
        s.seed.to_string(),
        s.status.clone(),
        fmt_f64(s.final_f),
        fmt_f64(s.min_f),
        fmt_opt(s.f_threshold),
        s.iters_to_threshold.map(|v| v.to_string()).unwrap_or_default(),
        fmt_f64(s.escape_level),
        s.escape_time.map(|v| v.to_string()).unwrap_or_default(),
        fmt_f64(s.mean_last_1000_f),
        fmt_opt(s.sup_est_error),
        s.trajectory.clone(),
    ]
}

pub fn write_summary(path: &Path, rows: &[RunSummary]) -> CliResult<()> {
    let header: Vec<String> = SUMMARY_HEADER.iter().map(|s| s.to_string()).collect();
    write_atomic(path, &csv_bytes(&header, rows.iter().map(summary_record))?)
}

pub fn read_summary(path: &Path) -> CliResult<Vec<RunSummary>> {
    let what = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::config(format!("{what}: {e}")))?;
    let header: Vec<&str> = rdr.headers()?.iter().collect::<Vec<_>>().to_vec();
    if header != SUMMARY_HEADER {
        return Err(CliError::config(format!("{what}: not a run summary (header {header:?})")));
    }
    let int = |s: &str| -> CliResult<Option<i64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| CliError::config(format!("{what}: bad integer {s:?}")))
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(RunSummary {
            run_id: rec[0].to_string(),
            seed: rec[1].parse().map_err(|_| CliError::config(format!("{what}: bad seed")))?,
            status: rec[2].to_string(),
            final_f: parse_f64(&rec[3], &what)?,
            min_f: parse_f64(&rec[4], &what)?,
            f_threshold: parse_opt(&rec[5], &what)?,
            iters_to_threshold: int(&rec[6])?,
            escape_level: parse_f64(&rec[7], &what)?,
            escape_time: int(&rec[8])?,
            mean_last_1000_f: parse_f64(&rec[9], &what)?,
            sup_est_error: parse_opt(&rec[10], &what)?,
            trajectory: rec[11].to_string(),
        });
    }
    Ok(out)
}

/// File-system-safe form of a run id.
pub fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' })
        .collect()
}

pub fn trajectory_file_name(run_id: &str, seed: u64) -> String {
    format!("{}_seed{seed}.csv", sanitize(run_id))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
