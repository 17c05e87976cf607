//! Optimization loops and theorem-driven hyperparameter calculators.
//!
//! Every loop is preconditioned SGD `x ← x − η Â g`; the variants differ in
//! where `Â` comes from (an idealized oracle or an EMA estimate), whether the
//! estimate is burned in at `x₀`, and whether every `t_thresh`-th step uses a
//! larger stepsize `r` (followed, for estimates, by hallucinated samples along
//! the large step).

use crate::error::{Error, Result};
use crate::estimation::{beta_schedule, burn_in_length, ceil_tol};
use crate::linalg::SymMatrix;
use crate::preconditioner::{
    check_point, idealized_a, EmaEstimator, PreconditionerConstants, PreconditionerKind,
    PreconditionerVariant,
};
use crate::problems::{ProblemSmoothness, StochasticProblem};
use crate::rng::RunRng;

/// Hyperparameters of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Base stepsize η.
    pub eta: f64,
    /// Large stepsize r.
    pub r: f64,
    /// EMA parameter β.
    pub beta: f64,
    /// Regularizer ε.
    pub epsilon: f64,
    /// Period of large steps.
    pub t_thresh: usize,
    /// Burn-in length W.
    pub w: usize,
    /// Hallucination divisor S (S + 1 samples per large step).
    pub s: usize,
    /// Target tolerance τ.
    pub tau: f64,
    /// Failure probability δ.
    pub delta_prob: f64,
    /// Log-factor constant ω.
    pub omega: f64,
    /// Universal constant K.
    pub k_const: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            r: 1e-3,
            beta: 0.99,
            epsilon: 1e-8,
            t_thresh: 1,
            w: 0,
            s: 1,
            tau: 0.1,
            delta_prob: 0.05,
            omega: 5.0,
            k_const: 0.125,
        }
    }
}

impl HyperParams {
    pub fn validate(&self, large_steps: bool) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| -> Result<()> {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and ≥ 0, got {v}")));
            }
            Ok(())
        };
        finite_nonneg("eta", self.eta)?;
        finite_nonneg("r", self.r)?;
        finite_nonneg("epsilon", self.epsilon)?;
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.t_thresh == 0 {
            return Err(Error::invalid("t_thresh must be at least 1"));
        }
        if !(self.k_const > 0.0 && self.k_const < 1.0) {
            return Err(Error::invalid("K must lie in (0, 1)"));
        }
        if large_steps && self.r < self.eta {
            return Err(Error::invalid(format!(
                "large stepsize r = {} must be ≥ eta = {}",
                self.r, self.eta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    Normal,
    Large,
    BurnIn,
    Hallucinated,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Normal => "normal",
            StepKind::Large => "large",
            StepKind::BurnIn => "burnin",
            StepKind::Hallucinated => "hallucinated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(StepKind::Normal),
            "large" => Some(StepKind::Large),
            "burnin" => Some(StepKind::BurnIn),
            "hallucinated" => Some(StepKind::Hallucinated),
            _ => None,
        }
    }
}

/// One logged event of a run.
///
/// `iter` is the optimizer iteration: record `iter = t` holds `x_t` (so
/// `iter = 0` is the starting point and `iter = t` with kind `Large` is the
/// result of a large step). Burn-in records carry `iter = −W..−1`;
/// hallucinated records share the `iter` of the large step they follow.
/// `seq` is strictly increasing across all records.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seq: u64,
    pub iter: i64,
    pub x: Vec<f64>,
    pub f_val: f64,
    pub grad_norm: f64,
    pub lambda_min_h: Option<f64>,
    pub est_error: Option<f64>,
    pub step_kind: StepKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    /// Records of optimizer iterates (kinds `Normal` and `Large`), in order.
    pub fn iterates(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.records
            .iter()
            .filter(|r| matches!(r.step_kind, StepKind::Normal | StepKind::Large))
    }

    pub fn final_point(&self) -> Option<&[f64]> {
        self.iterates().last().map(|r| r.x.as_slice())
    }

    pub fn final_value(&self) -> Option<f64> {
        self.iterates().last().map(|r| r.f_val)
    }

    /// First iteration with `f ≤ level`.
    pub fn first_iter_at_or_below(&self, level: f64) -> Option<i64> {
        self.iterates().find(|r| r.f_val <= level).map(|r| r.iter)
    }
}

/// A run that stopped early, with everything logged before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Trajectory,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} records)",
            self.error,
            self.partial.records.len()
        )
    }
}

impl std::error::Error for RunFailure {}

pub type RunResult = std::result::Result<Trajectory, RunFailure>;

/// Where the preconditioner comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreconditionerSource {
    /// `A(x_t)` from the exact second moment.
    Idealized(PreconditionerKind),
    /// `Â_t` from the EMA of observed gradients.
    Estimated(PreconditionerKind),
}

impl PreconditionerSource {
    pub fn kind(&self) -> &PreconditionerKind {
        match self {
            PreconditionerSource::Idealized(k) | PreconditionerSource::Estimated(k) => k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSchedule {
    /// `η_t = η`.
    #[default]
    Constant,
    /// `η_t = η/√(t+1)`.
    InverseSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BetaMode {
    /// `β` from the hyperparameters.
    #[default]
    Fixed,
    /// `β_t = 1 − C η_t^{2/3}`.
    Schedule { c: f64 },
}

/// Period-`t_thresh` large steps of size `r`, with `s` hallucination intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeStepConfig {
    pub r: f64,
    pub t_thresh: usize,
    pub s: usize,
}

/// Everything about a run except the problem, hyperparameters and RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub x0: Vec<f64>,
    pub iterations: usize,
    pub step_schedule: StepSchedule,
    pub beta_mode: BetaMode,
    /// Log `λ_min(∇²f)` every k-th iterate.
    pub hessian_every: Option<usize>,
    /// Log `‖Â_t − A(x_t)‖` for estimated preconditioners (needs the exact second moment).
    pub track_estimation_error: bool,
    /// Adam-style `Ĝ/(1 − β^t)` for estimated preconditioners.
    pub bias_correction: bool,
    /// Abort when `|f|` exceeds this.
    pub divergence_threshold: f64,
}

impl RunOptions {
    pub fn new(x0: Vec<f64>, iterations: usize) -> Self {
        Self {
            x0,
            iterations,
            step_schedule: StepSchedule::Constant,
            beta_mode: BetaMode::Fixed,
            hessian_every: None,
            track_estimation_error: false,
            bias_correction: false,
            divergence_threshold: 1e100,
        }
    }
}

struct Engine<'a> {
    problem: &'a dyn StochasticProblem,
    source: PreconditionerSource,
    hp: HyperParams,
    opts: &'a RunOptions,
    trajectory: Trajectory,
    seq: u64,
}

impl<'a> Engine<'a> {
    fn eta_at(&self, t: usize) -> f64 {
        match self.opts.step_schedule {
            StepSchedule::Constant => self.hp.eta,
            StepSchedule::InverseSqrt => self.hp.eta / ((t + 1) as f64).sqrt(),
        }
    }

    fn beta_at(&self, t: usize) -> Result<f64> {
        match self.opts.beta_mode {
            BetaMode::Fixed => Ok(self.hp.beta),
            BetaMode::Schedule { c } => beta_schedule(self.eta_at(t), c),
        }
    }

    fn log(
        &mut self,
        iter: i64,
        x: &[f64],
        kind: StepKind,
        est_error: Option<f64>,
    ) -> Result<()> {
        let f_val = self.problem.value(x);
        let grad = self.problem.grad(x);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let lambda_min_h = match self.opts.hessian_every {
            Some(k) if k > 0 && iter >= 0 && iter as usize % k == 0 && kind != StepKind::Hallucinated => {
                let h = self
                    .problem
                    .hessian(x)
                    .ok_or(Error::MissingOracle("Hessian"))?;
                Some(h.min_eigenvalue()?)
            }
            _ => None,
        };
        self.trajectory.records.push(TrajectoryRecord {
            seq: self.seq,
            iter,
            x: x.to_vec(),
            f_val,
            grad_norm,
            lambda_min_h,
            est_error,
            step_kind: kind,
        });
        self.seq += 1;
        if !f_val.is_finite()
            || f_val.abs() > self.opts.divergence_threshold
            || x.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "run diverged at iteration {iter} (f = {f_val:e})"
            )));
        }
        Ok(())
    }

    fn observe(&self, est: &mut EmaEstimator, x: &[f64], rng: &mut RunRng) -> Result<Vec<f64>> {
        let g = self.problem.sample_grad(x, rng);
        if self.source.kind().variant == PreconditionerVariant::CovarianceFullMatrix {
            let g2 = self.problem.sample_grad(x, rng);
            est.observe_pair(&g, &g2)?;
        } else {
            est.observe(&g)?;
        }
        Ok(g)
    }

    fn run(
        &mut self,
        burn_in: usize,
        large: Option<LargeStepConfig>,
        rng: &mut RunRng,
    ) -> Result<()> {
        let problem = self.problem;
        let mut x = self.opts.x0.clone();
        problem.project(&mut x);
        let kind = *self.source.kind();
        let mut est = match self.source {
            PreconditionerSource::Estimated(_) => {
                Some(
                    EmaEstimator::new(problem.dim(), self.beta_at(0)?)?
                        .with_bias_correction(self.opts.bias_correction),
                )
            }
            PreconditionerSource::Idealized(_) => None,
        };

        if let Some(est) = est.as_mut() {
            for w in 0..burn_in {
                self.observe(est, &x, rng)?;
                let x_now = x.clone();
                self.log(w as i64 - burn_in as i64, &x_now, StepKind::BurnIn, None)?;
            }
        }
        self.log(0, &x.clone(), StepKind::Normal, None)?;

        for t in 0..self.opts.iterations {
            let (a, g, est_error) = match est.as_mut() {
                None => {
                    let a = idealized_a(problem, &kind, &x)?;
                    (a, problem.sample_grad(&x, rng), None)
                }
                Some(est) => {
                    est.set_beta(self.beta_at(t)?)?;
                    let g = self.observe(est, &x, rng)?;
                    let a = est.estimate(&kind)?;
                    let err = if self.opts.track_estimation_error {
                        Some(a.sub(&idealized_a(problem, &kind, &x)?)?.op_norm()?)
                    } else {
                        None
                    };
                    (a, g, err)
                }
            };
            let is_large = large.is_some_and(|l| t % l.t_thresh == 0);
            let step = match large {
                Some(l) if is_large => l.r,
                _ => self.eta_at(t),
            };
            let dir = a.mul_vec(&g)?;
            let x_start = x.clone();
            for (xi, di) in x.iter_mut().zip(&dir) {
                *xi -= step * di;
            }
            problem.project(&mut x);
            let kind_tag = if is_large { StepKind::Large } else { StepKind::Normal };
            let x_now = x.clone();
            self.log(t as i64 + 1, &x_now, kind_tag, est_error)?;

            if let (true, Some(est), Some(l)) = (is_large, est.as_mut(), large) {
                // s = 0..=S along x_start → x_end.
                for s in 0..=l.s {
                    let frac = s as f64 / l.s as f64;
                    let p: Vec<f64> = x_start
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| a + frac * (b - a))
                        .collect();
                    self.observe(est, &p, rng)?;
                    self.log(t as i64 + 1, &p, StepKind::Hallucinated, None)?;
                }
            }
        }
        Ok(())
    }
}

fn execute(
    problem: &dyn StochasticProblem,
    source: PreconditionerSource,
    hp: &HyperParams,
    opts: &RunOptions,
    burn_in: usize,
    large: Option<LargeStepConfig>,
    rng: &mut RunRng,
) -> RunResult {
    let fail = |error: Error| RunFailure {
        error,
        partial: Trajectory::default(),
    };
    hp.validate(large.is_some()).map_err(fail)?;
    check_point(problem, &opts.x0).map_err(fail)?;
    if let Some(l) = large {
        if l.t_thresh == 0 {
            return Err(fail(Error::invalid("t_thresh must be at least 1")));
        }
        if matches!(source, PreconditionerSource::Estimated(_)) && l.s == 0 {
            return Err(fail(Error::invalid("hallucination length S must be at least 1")));
        }
    }
    if let PreconditionerSource::Idealized(k) = source {
        if k.variant != PreconditionerVariant::Identity
            && problem.exact_second_moment(&opts.x0).is_none()
        {
            return Err(fail(Error::MissingOracle("exact second moment G(x)")));
        }
    }
    let mut engine = Engine {
        problem,
        source,
        hp: *hp,
        opts,
        trajectory: Trajectory::default(),
        seq: 0,
    };
    match engine.run(burn_in, large, rng) {
        Ok(()) => Ok(engine.trajectory),
        Err(error) => Err(RunFailure {
            error,
            partial: engine.trajectory,
        }),
    }
}

/// Preconditioned SGD `x_{t+1} = x_t − η A_t g_t`.
pub fn run_preconditioned_sgd(
    problem: &dyn StochasticProblem,
    source: PreconditionerSource,
    hp: &HyperParams,
    opts: &RunOptions,
    rng: &mut RunRng,
) -> RunResult {
    execute(problem, source, hp, opts, 0, None, rng)
}

/// RMSProp: EMA-update `Ĝ`, then step with `Â = (Ĝ + εI)^p` (or its diagonal form).
pub fn run_rmsprop(
    problem: &dyn StochasticProblem,
    kind: PreconditionerKind,
    hp: &HyperParams,
    opts: &RunOptions,
    rng: &mut RunRng,
) -> RunResult {
    execute(problem, PreconditionerSource::Estimated(kind), hp, opts, 0, None, rng)
}

/// RMSProp preceded by `hp.w` EMA updates at `x₀` that do not move `x`.
pub fn run_rmsprop_with_burnin(
    problem: &dyn StochasticProblem,
    kind: PreconditionerKind,
    hp: &HyperParams,
    opts: &RunOptions,
    rng: &mut RunRng,
) -> RunResult {
    execute(problem, PreconditionerSource::Estimated(kind), hp, opts, hp.w, None, rng)
}

/// Every `t_thresh`-th step (starting at `t = 0`) uses stepsize `r`. With an
/// estimated preconditioner the run starts with `hp.w` burn-in samples and
/// each large step is followed by `S + 1` hallucinated samples.
pub fn run_large_step_variant(
    problem: &dyn StochasticProblem,
    source: PreconditionerSource,
    hp: &HyperParams,
    opts: &RunOptions,
    rng: &mut RunRng,
) -> RunResult {
    let large = LargeStepConfig {
        r: hp.r,
        t_thresh: hp.t_thresh,
        s: hp.s,
    };
    let burn_in = match source {
        PreconditionerSource::Estimated(_) => hp.w,
        PreconditionerSource::Idealized(_) => 0,
    };
    execute(problem, source, hp, opts, burn_in, Some(large), rng)
}

/// Constants for the first-order calculator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderInputs {
    /// Gradient Lipschitz constant L.
    pub l: f64,
    pub c3: f64,
    pub lambda_minus: f64,
    /// `f(x₀) − f*`.
    pub f_gap: f64,
}

/// Stepsize and horizon that drive the average squared gradient norm below `τ²`.
///
/// Exact preconditioner: `η = τ²λ₋/(Lc₃)`, `T = ⌈2Δf·L·c₃/(τ⁴λ₋²)⌉`.
/// Inexact: `η = τ²λ₋/(4√2·Lc₃)`, `T = ⌈32Δf·L·c₃/(τ⁴λ₋²)⌉`.
pub fn first_order_params(inp: &FirstOrderInputs, tau: f64, exact: bool) -> Result<(f64, usize)> {
    for (name, v) in [
        ("L", inp.l),
        ("c3", inp.c3),
        ("lambda_minus", inp.lambda_minus),
        ("f0 - f*", inp.f_gap),
        ("tau", tau),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let (eta_div, t_mul) = if exact {
        (1.0, 2.0)
    } else {
        (4.0 * std::f64::consts::SQRT_2, 32.0)
    };
    let eta = tau * tau * inp.lambda_minus / (eta_div * inp.l * inp.c3);
    let t = t_mul * inp.f_gap * inp.l * inp.c3 / (tau.powi(4) * inp.lambda_minus.powi(2));
    Ok((eta, ceil_tol(t) as usize))
}

/// Parameters for second-order convergence, with the intermediate quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderParams {
    pub hp: HyperParams,
    /// `γ = λ₋ √(ρτ)`.
    pub gamma: f64,
    pub f_thresh: f64,
    pub g_thresh: f64,
    /// Set when the formulas give `r < η` (τ outside the small-τ regime).
    pub r_below_eta: bool,
}

/// `r`, `η`, `f_thresh`, `t_thresh`, `g_thresh`, `W` and `S` from the
/// preconditioner constants and problem smoothness. `k.m_bound` must be set.
pub fn second_order_params(
    k: &PreconditionerConstants,
    smooth: &ProblemSmoothness,
    tau: f64,
    delta_prob: f64,
    omega: f64,
    k_const: f64,
) -> Result<SecondOrderParams> {
    let m = k
        .m_bound
        .ok_or_else(|| Error::invalid("preconditioner constants need the step bound M"))?;
    for (name, v) in [
        ("nu1", k.nu1),
        ("nu2", k.nu2),
        ("c3", k.c3),
        ("c4", k.c4),
        ("lambda_minus", k.lambda_minus),
        ("M", m),
        ("L", smooth.l),
        ("rho", smooth.rho),
        ("tau", tau),
        ("delta", delta_prob),
        ("omega", omega),
        ("K", k_const),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if k_const >= 1.0 {
        return Err(Error::invalid("K must lie in (0, 1)"));
    }
    let (nu1, nu2, c3, c4, l, rho) = (k.nu1, k.nu2, k.c3, k.c4, smooth.l, smooth.rho);
    let gamma = k.lambda_minus * (rho * tau).sqrt();
    let nn = nu1 * nu2;
    let r = gamma.powi(2) * delta_prob * c4 * k_const / (54.0 * nn * c3 * l * rho * m);
    let eta = gamma.powi(5) * (delta_prob * c4 * k_const).powi(2)
        / (324.0 * (m * l * nn * c3 * rho).powi(2) * omega);
    let f_thresh = gamma.powi(4) * delta_prob * (c4 * k_const).powi(2)
        / (54.0 * 12.0 * nn * nn * c3 * l * (rho * m).powi(2));
    // Integer counts saturate at usize::MAX; g_thresh uses the unrounded-down count.
    let t_thresh_real = ceil_tol(omega / (eta * gamma)).max(1.0);
    let t_thresh = t_thresh_real as usize;
    let g_thresh = f_thresh / t_thresh_real;
    let w = burn_in_length(eta, 1.0)?;
    let s = (ceil_tol(r / eta) as usize).max(1);
    let r_below_eta = r < eta;
    Ok(SecondOrderParams {
        hp: HyperParams {
            eta,
            r,
            beta: HyperParams::default().beta,
            epsilon: HyperParams::default().epsilon,
            t_thresh,
            w,
            s,
            tau,
            delta_prob,
            omega,
            k_const,
        },
        gamma,
        f_thresh,
        g_thresh,
        r_below_eta,
    })
}

/// Report for a `(τ_g, τ_h)`-stationarity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub tau_g: f64,
    pub tau_h: f64,
    pub is_stationary: bool,
    pub grad_norm: f64,
    pub lambda_min_h: f64,
}

/// The conventional Hessian tolerance `√(ρ τ_g)`.
pub fn hessian_tolerance(rho: f64, tau_g: f64) -> f64 {
    (rho * tau_g).sqrt()
}

/// `‖∇f(x)‖ ≤ τ_g` and `λ_min(∇²f(x)) ≥ −τ_h`.
pub fn check_stationarity(
    problem: &dyn StochasticProblem,
    x: &[f64],
    tau_g: f64,
    tau_h: f64,
) -> Result<StationarityReport> {
    check_point(problem, x)?;
    if !(tau_g >= 0.0) || !(tau_h >= 0.0) {
        return Err(Error::invalid("tolerances must be nonnegative"));
    }
    let h: SymMatrix = problem.hessian(x).ok_or(Error::MissingOracle("Hessian"))?;
    let grad_norm = problem.grad(x).iter().map(|g| g * g).sum::<f64>().sqrt();
    let lambda_min_h = h.min_eigenvalue()?;
    Ok(StationarityReport {
        tau_g,
        tau_h,
        is_stationary: grad_norm <= tau_g && lambda_min_h >= -tau_h,
        grad_norm,
        lambda_min_h,
    })
}
