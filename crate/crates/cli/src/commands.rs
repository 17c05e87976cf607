//! The four subcommands, usable in-process.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use adaprecon::estimation::{
    beta_schedule, burn_in_length, estimation_error_bound, EstimationBoundInputs,
};
use adaprecon::{run_rng, StepKind};
use rayon::prelude::*;
use toml::{Table, Value};

use crate::config::{self, value_label, ExperimentConfig, SweepAxis};
use crate::error::{CliError, CliResult};
use crate::experiment::{resolve, Algorithm, ResolvedRun};
use crate::output::{
    fmt_f64, read_summary, read_trajectory, rows_from_trajectory, sanitize, summarize,
    trajectory_file_name, write_atomic, write_summary, write_trajectory, RunSummary,
};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct GlobalOptions {
    /// Overrides the config's output path and the environment default.
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed_offset: u64,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self { out: None, jobs: None, seed_offset: 0 }
    }
}

pub const OUT_DIR_ENV: &str = "ADAPRECON_OUT";

impl GlobalOptions {
    fn out_dir(&self, cfg: Option<&ExperimentConfig>) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        if let Some(o) = cfg.and_then(|c| c.run.output.as_ref()) {
            return PathBuf::from(o);
        }
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(CliError::config("--jobs must be at least 1"));
            }
            b = b.num_threads(j);
        }
        b.build().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// One point of a sweep: a config plus the axis values that produced it.
#[derive(Debug, Clone)]
pub struct Condition {
    pub run_id: String,
    pub axis_values: Vec<Value>,
    pub config: ExperimentConfig,
}

/// Cross product of the axes applied to the base table, in axis order.
pub fn expand_conditions(base: &Table, axes: &[SweepAxis]) -> CliResult<Vec<Condition>> {
    for a in axes {
        if a.values.is_empty() {
            return Err(CliError::config(format!("sweep axis `{}`: empty value list", a.name)));
        }
    }
    let base_cfg = config::from_table(base.clone())?;
    let mut combos: Vec<Vec<Value>> = vec![Vec::new()];
    for a in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                a.values.iter().map(move |v| {
                    let mut n = c.clone();
                    n.push(v.clone());
                    n
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|vals| {
            let mut t = base.clone();
            let mut id = base_cfg.name().to_string();
            for (a, v) in axes.iter().zip(&vals) {
                config::set_dotted(&mut t, &a.name, v.clone())?;
                let short = a.name.rsplit('.').next().unwrap_or(&a.name);
                id.push_str(&format!("__{short}={}", value_label(v)));
            }
            let cfg = config::from_table(t).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("condition {id}: {m}")),
                other => other,
            })?;
            Ok(Condition { run_id: id, axis_values: vals, config: cfg })
        })
        .collect()
}

/// Outcome of a single (condition, seed) job.
#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub condition: usize,
    pub summary: RunSummary,
    pub error: Option<String>,
}

/// Runs every (condition, seed) pair on the worker pool, writing one
/// trajectory per pair, and returns outcomes ordered by (condition, seed).
pub fn execute_conditions(
    conditions: &[Condition],
    out_dir: &Path,
    opts: &GlobalOptions,
) -> CliResult<Vec<JobOutcome>> {
    let resolved: Vec<ResolvedRun> = conditions
        .iter()
        .map(|c| {
            resolve(&c.config).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", c.run_id)),
                other => other,
            })
        })
        .collect::<CliResult<_>>()?;
    for (c, r) in conditions.iter().zip(&resolved) {
        for w in &r.warnings {
            eprintln!("warning [{}]: {w}", c.run_id);
        }
    }
    let jobs: Vec<(usize, u64)> = conditions
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.config.seeds().into_iter().map(move |s| (i, s)))
        .map(|(i, s)| (i, s + opts.seed_offset))
        .collect();
    std::fs::create_dir_all(out_dir)?;
    let pool = opts.pool()?;
    let mut outcomes: Vec<JobOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(ci, seed)| -> CliResult<JobOutcome> {
                let cond = &conditions[ci];
                let run = &resolved[ci];
                let (traj, status, error) = match run.execute(seed) {
                    Ok(t) => (t, "ok", None),
                    Err(f) => (f.partial, "diverged", Some(f.error.to_string())),
                };
                let dim = run.problem.as_dyn().dim();
                let rows = rows_from_trajectory(&traj, dim, cond.config.log_every());
                let file = trajectory_file_name(&cond.run_id, seed);
                write_trajectory(&out_dir.join(&file), dim, &rows)?;
                let summary = summarize(
                    &cond.run_id,
                    seed,
                    status,
                    &rows,
                    cond.config.run.f_threshold,
                    cond.config.escape_level(),
                    &file,
                );
                Ok(JobOutcome { condition: ci, summary, error })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    outcomes.sort_by(|a, b| {
        compare_values(&conditions[a.condition].axis_values, &conditions[b.condition].axis_values)
            .then(a.condition.cmp(&b.condition))
            .then(a.summary.seed.cmp(&b.summary.seed))
    });
    Ok(outcomes)
}

fn compare_values(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = match (as_number(x), as_number(y)) {
            (Some(p), Some(q)) => p.total_cmp(&q),
            _ => value_label(x).cmp(&value_label(y)),
        };
        if o != Ordering::Equal {
            return o;
        }
    }
    Ordering::Equal
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

/// Result of `run` or `sweep`.
#[derive(Debug, Clone)]
pub struct BatchReport {
    pub summary_path: PathBuf,
    pub outcomes: Vec<JobOutcome>,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = &JobOutcome> {
        self.outcomes.iter().filter(|o| o.error.is_some())
    }

    /// `Err(Numeric)` when any run diverged; all files are already written.
    pub fn into_result(self) -> CliResult<Self> {
        if let Some(f) = self.failures().next() {
            return Err(CliError::Numeric(format!(
                "{} seed {}: {}",
                f.summary.run_id,
                f.summary.seed,
                f.error.as_deref().unwrap_or("")
            )));
        }
        Ok(self)
    }
}

fn run_batch(
    conditions: &[Condition],
    out_dir: &Path,
    summary_name: &str,
    opts: &GlobalOptions,
) -> CliResult<BatchReport> {
    let outcomes = execute_conditions(conditions, out_dir, opts)?;
    let summaries: Vec<RunSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    let summary_path = out_dir.join(summary_name);
    write_summary(&summary_path, &summaries)?;
    Ok(BatchReport { summary_path, outcomes })
}

pub fn cmd_run_table(table: &Table, opts: &GlobalOptions) -> CliResult<BatchReport> {
    let conds = expand_conditions(table, &[])?;
    let out = opts.out_dir(Some(&conds[0].config));
    let name = format!("{}_summary.csv", sanitize(conds[0].config.name()));
    run_batch(&conds, &out, &name, opts)
}

pub fn cmd_run(config: &Path, opts: &GlobalOptions) -> CliResult<BatchReport> {
    cmd_run_table(&config::read_table(config)?, opts)
}

/// Axes from the command line win over the config's `[sweep]` section.
pub fn cmd_sweep_table(table: &Table, axes: &[SweepAxis], opts: &GlobalOptions) -> CliResult<BatchReport> {
    let base = config::from_table(table.clone())?;
    let axes: Vec<SweepAxis> = if axes.is_empty() {
        base.sweep.as_ref().map(|s| s.axes.clone()).unwrap_or_default()
    } else {
        axes.to_vec()
    };
    if axes.is_empty() {
        return Err(CliError::config("sweep: no axis given (use --axis/--values or [sweep].axes)"));
    }
    let conds = expand_conditions(table, &axes)?;
    let out = opts.out_dir(Some(&base));
    let axis_tag: Vec<&str> = axes.iter().map(|a| a.name.rsplit('.').next().unwrap_or(&a.name)).collect();
    let name = format!("{}_sweep_{}_summary.csv", sanitize(base.name()), sanitize(&axis_tag.join("-")));
    run_batch(&conds, &out, &name, opts)
}

pub fn cmd_sweep(config: &Path, axes: &[SweepAxis], opts: &GlobalOptions) -> CliResult<BatchReport> {
    cmd_sweep_table(&config::read_table(config)?, axes, opts)
}

/// Builds sweep axes from `--axis name --values a,b,c` pairs.
pub fn axes_from_flags(names: &[String], values: &[String]) -> CliResult<Vec<SweepAxis>> {
    if names.len() != values.len() {
        return Err(CliError::config("each --axis needs exactly one --values list"));
    }
    names
        .iter()
        .zip(values)
        .map(|(n, v)| {
            let vals: Vec<Value> = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(config::parse_scalar)
                .collect();
            if vals.is_empty() {
                return Err(CliError::config(format!("sweep axis `{n}`: empty value list")));
            }
            Ok(SweepAxis { name: n.clone(), values: vals })
        })
        .collect()
}

/// One row of the estimation-scaling table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub eta: f64,
    pub beta: f64,
    pub burn_in: usize,
    pub horizon: usize,
    pub sup_error: f64,
    pub sigma_max: f64,
    pub m_step: f64,
    pub l_g: f64,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub table_path: PathBuf,
    pub fit_path: PathBuf,
}

/// Least-squares fit of `ln y = a + b ln x`; returns `(b, a)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn scaling_point(
    cfg: &ExperimentConfig,
    eta: f64,
    seed: u64,
) -> CliResult<ScalingPoint> {
    let est = cfg.estimation.as_ref().expect("checked by caller");
    let beta = beta_schedule(eta, est.c).map_err(|e| CliError::config(format!("estimation.etas: {e}")))?;
    let burn_in = burn_in_length(eta, est.burn_in_c()).map_err(|e| CliError::config(e.to_string()))?;
    let horizon = (est.horizon_factor / (1.0 - beta)).ceil() as usize;

    let mut cfg = cfg.clone();
    cfg.optimizer.eta = Some(eta);
    cfg.optimizer.r = Some(eta);
    cfg.optimizer.beta = Some(beta);
    cfg.optimizer.beta_mode = Some("fixed".into());
    cfg.optimizer.burn_in = Some(burn_in);
    cfg.optimizer.auto = None;
    cfg.run.iterations = Some(horizon);
    cfg.run.track_estimation_error = Some(true);
    cfg.run.hessian_every = None;
    let mut base = resolve(&cfg)?;
    let kind = base.algorithm.kind();
    base.algorithm = Algorithm::RmspropBurnin(kind);
    let problem = base.problem.as_dyn();
    let traj = base.execute(seed).map_err(|f| CliError::Numeric(format!("eta = {eta}: {f}")))?;

    let sup_error = traj.records.iter().filter_map(|r| r.est_error).fold(0.0, f64::max);
    let iterates: Vec<_> = traj.iterates().collect();
    let m_step = iterates
        .windows(2)
        .filter(|w| w[1].step_kind == StepKind::Normal)
        .map(|w| {
            w[1].x.iter().zip(&w[0].x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / eta
        })
        .fold(0.0, f64::max);
    let radius = iterates
        .iter()
        .map(|r| r.x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let l_g = base.problem.second_moment_lipschitz(radius)?;
    let every = (iterates.len() / 50).max(1);
    let mut rng = run_rng(seed, 1);
    let mut sigma_max = 0.0f64;
    for r in iterates.iter().step_by(every) {
        sigma_max = sigma_max.max(base.problem.sigma_max_at(&r.x, &mut rng)?);
    }
    let inp = EstimationBoundInputs {
        sigma_max,
        r_dev: sigma_max,
        m_step,
        l_g,
        eta,
        beta,
        horizon: burn_in + horizon,
        dim: problem.dim(),
        delta_prob: est.delta,
    };
    let bound = estimation_error_bound(&inp).map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(ScalingPoint { eta, beta, burn_in, horizon, sup_error, sigma_max, m_step, l_g, bound })
}

pub fn cmd_estimation_scaling_table(table: &Table, opts: &GlobalOptions) -> CliResult<ScalingReport> {
    let cfg = config::from_table(table.clone())?;
    let est = cfg
        .estimation
        .as_ref()
        .ok_or_else(|| CliError::config("estimation: section missing"))?;
    let mut etas = est.etas.clone();
    etas.sort_by(|a, b| b.total_cmp(a));
    etas.dedup();
    if etas.len() < 2 {
        return Err(CliError::config("estimation.etas: need at least two distinct values to fit a slope"));
    }
    let seed = cfg.seeds()[0] + opts.seed_offset;
    let pool = opts.pool()?;
    let points: Vec<ScalingPoint> = pool.install(|| {
        etas.par_iter().map(|&eta| scaling_point(&cfg, eta, seed)).collect::<CliResult<_>>()
    })?;
    let xs: Vec<f64> = points.iter().map(|p| p.eta).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sup_error).collect();
    let (slope, intercept) = if ys.iter().all(|y| *y > 0.0) {
        log_log_fit(&xs, &ys)
    } else {
        eprintln!("warning: some sup-errors are zero; slope undefined");
        (f64::NAN, f64::NAN)
    };

    let out = opts.out_dir(Some(&cfg));
    let stem = sanitize(cfg.name());
    let table_path = out.join(format!("{stem}_estimation_scaling.csv"));
    let fit_path = out.join(format!("{stem}_estimation_fit.csv"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "eta", "beta", "burn_in", "horizon", "sup_error", "sigma_max", "m_step", "l_g", "bound",
        "ratio",
    ])?;
    for p in &points {
        w.write_record([
            fmt_f64(p.eta),
            fmt_f64(p.beta),
            p.burn_in.to_string(),
            p.horizon.to_string(),
            fmt_f64(p.sup_error),
            fmt_f64(p.sigma_max),
            fmt_f64(p.m_step),
            fmt_f64(p.l_g),
            fmt_f64(p.bound),
            fmt_f64(p.sup_error / p.bound),
        ])?;
    }
    write_atomic(&table_path, &w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["slope", "intercept", "points"])?;
    w.write_record([fmt_f64(slope), fmt_f64(intercept), points.len().to_string()])?;
    write_atomic(&fit_path, &w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)?;
    Ok(ScalingReport { points, slope, intercept, table_path, fit_path })
}

pub fn cmd_estimation_scaling(config: &Path, opts: &GlobalOptions) -> CliResult<ScalingReport> {
    cmd_estimation_scaling_table(&config::read_table(config)?, opts)
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Writes `<run_id>_bands.csv` (iter, n, q10, median, q90 of f over seeds)
/// for every run listed in the given summaries.
pub fn cmd_report(files: &[PathBuf], opts: &GlobalOptions) -> CliResult<Vec<PathBuf>> {
    if files.is_empty() {
        return Err(CliError::config("report: no summary files given"));
    }
    let mut runs: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for f in files {
        let dir = f.parent().map(Path::to_path_buf).unwrap_or_default();
        for s in read_summary(f)? {
            let path = dir.join(&s.trajectory);
            match runs.iter_mut().find(|(id, _)| *id == s.run_id) {
                Some((_, v)) => v.push(path),
                None => runs.push((s.run_id.clone(), vec![path])),
            }
        }
    }
    let out = opts.out_dir(None);
    let mut written = Vec::new();
    for (run_id, paths) in runs {
        let mut header: Option<Vec<String>> = None;
        let mut by_iter: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
        for p in &paths {
            let (h, rows) = read_trajectory(p)?;
            match &header {
                None => header = Some(h),
                Some(prev) if *prev != h => {
                    return Err(CliError::config(format!(
                        "{run_id}: trajectories have different schemas ({})",
                        p.display()
                    )))
                }
                _ => {}
            }
            for r in rows.iter().filter(|r| r.is_iterate()) {
                by_iter.entry(r.iter).or_default().push(r.f);
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "n", "q10", "median", "q90"])?;
        for (iter, mut fs) in by_iter {
            fs.sort_by(f64::total_cmp);
            w.write_record([
                iter.to_string(),
                fs.len().to_string(),
                fmt_f64(quantile(&fs, 0.1)),
                fmt_f64(quantile(&fs, 0.5)),
                fmt_f64(quantile(&fs, 0.9)),
            ])?;
        }
        let path = out.join(format!("{}_bands.csv", sanitize(&run_id)));
        write_atomic(&path, &w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn fit_recovers_power_law() {
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.0 * x.powf(1.0 / 3.0)).collect();
        let (slope, icpt) = log_log_fit(&xs, &ys);
        assert!((slope - 1.0 / 3.0).abs() < 1e-12);
        assert!((icpt - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn flag_axes() {
        let axes = axes_from_flags(&["optimizer.eta".into()], &["0.01, 0.001".into()]).unwrap();
        assert_eq!(axes[0].values, vec![Value::Float(0.01), Value::Float(0.001)]);
        assert!(axes_from_flags(&["optimizer.eta".into()], &[",".into()]).is_err());
        assert!(axes_from_flags(&["a.b".into()], &[]).is_err());
    }
}
