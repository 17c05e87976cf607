//! Estimating a matrix sequence `G(x_t)` along slowly moving iterates with an
//! exponential moving average, and the bias/variance bound that governs how
//! the EMA parameter β should track the stepsize η.
//!
//! The error bound has two competing terms: a variance term `∝ √(1−β)` and a
//! bias (drift) term `∝ η/(1−β)`. Balancing them gives `1 − β ∝ η^{2/3}` and
//! an error of order `η^{1/3}`.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::preconditioner::{check_point, idealized_a, EmaEstimator, PreconditionerKind};
use crate::problems::StochasticProblem;
use crate::rng::RunRng;

/// `ceil` that ignores representation error: values within a relative 1e-9
/// of an integer snap to it (so `100.00000000000001` gives 100).
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Normalized EMA weights `w_t ∝ β^{T−t}`, `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaWeighting {
    pub beta: f64,
    pub horizon: usize,
    pub weights: Vec<f64>,
}

impl EmaWeighting {
    pub fn new(beta: f64, horizon: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1), got {beta}")));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        // (1−β) β^{T−t} / (1 − β^T)
        let norm = (1.0 - beta) / (1.0 - beta.powi(horizon as i32));
        let weights = (1..=horizon)
            .map(|t| norm * beta.powi((horizon - t) as i32))
            .collect();
        Ok(Self {
            beta,
            horizon,
            weights,
        })
    }

    pub fn sq_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// `2(1−β)/(1−β^T)`.
    pub fn sq_norm_bound(&self) -> f64 {
        2.0 * (1.0 - self.beta) / (1.0 - self.beta.powi(self.horizon as i32))
    }

    /// `Σ_t w_t M_t` for a sequence of matrices aligned with the weights.
    pub fn weighted_sum(&self, mats: &[SymMatrix]) -> Result<SymMatrix> {
        if mats.len() != self.horizon {
            return Err(Error::DimMismatch {
                expected: self.horizon,
                got: mats.len(),
            });
        }
        let mut acc = SymMatrix::zeros(mats[0].dim());
        for (w, m) in self.weights.iter().zip(mats) {
            acc = acc.linear_combination(1.0, m, *w)?;
        }
        Ok(acc)
    }
}

/// Inputs to [`estimation_error_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationBoundInputs {
    /// `‖E[(Y_t − G_t)²]‖^{1/2}` bound for the per-sample matrices `Y_t = g_t g_tᵀ`.
    pub sigma_max: f64,
    /// Per-sample deviation bound `‖Y_t − G_t‖ ≤ R` (enters only the tail regime).
    pub r_dev: f64,
    /// Per-step displacement bound: `‖x_t − x_{t−1}‖ ≤ η·M`.
    pub m_step: f64,
    /// Lipschitz constant of `x ↦ G(x)`.
    pub l_g: f64,
    pub eta: f64,
    pub beta: f64,
    pub horizon: usize,
    pub dim: usize,
    pub delta_prob: f64,
}

impl EstimationBoundInputs {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_max", self.sigma_max),
            ("r_dev", self.r_dev),
            ("m_step", self.m_step),
            ("l_g", self.l_g),
            ("eta", self.eta),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.delta_prob > 0.0 && self.delta_prob < 1.0) {
            return Err(Error::invalid("delta_prob must lie in (0, 1)"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        Ok(())
    }
}

/// `β = 1 − C·η^{2/3}`.
pub fn beta_schedule(eta: f64, c: f64) -> Result<f64> {
    if !(eta > 0.0) || !(c > 0.0) || !eta.is_finite() || !c.is_finite() {
        return Err(Error::invalid(format!("eta and C must be positive, got eta={eta}, C={c}")));
    }
    let gap = c * eta.powf(2.0 / 3.0);
    if gap >= 1.0 {
        return Err(Error::invalid(format!("C·η^(2/3) = {gap} must be < 1")));
    }
    Ok(1.0 - gap)
}

/// High-probability bound on `‖Ĝ_T − G_T‖` for the EMA estimate:
///
/// `[2^{3/2} σ_max √(1−β) √(log(d/δ)) + M L_G η/(1−β)] / (1 − β^T)`.
pub fn estimation_error_bound(inp: &EstimationBoundInputs) -> Result<f64> {
    inp.validate()?;
    let one_minus = 1.0 - inp.beta;
    if (inp.horizon as f64) <= 4.0 / one_minus * (1.0 + 1e-12) {
        return Err(Error::precondition(format!(
            "horizon T = {} must exceed 4/(1−β) = {}",
            inp.horizon,
            4.0 / one_minus
        )));
    }
    let log_term = (inp.dim as f64 / inp.delta_prob).ln();
    let variance = 2f64.powf(1.5) * inp.sigma_max * one_minus.sqrt() * log_term.sqrt();
    let bias = inp.m_step * inp.l_g * inp.eta / one_minus;
    Ok((variance + bias) / (1.0 - inp.beta.powi(inp.horizon.min(i32::MAX as usize) as i32)))
}

/// The β minimizing the long-horizon bound `a√(1−β) + b/(1−β)`, with the
/// bound at that β. `1 − β* = (2b/a)^{2/3}`, which is `∝ η^{2/3}`.
pub fn optimal_beta(inp: &EstimationBoundInputs) -> Result<(f64, f64)> {
    let probe = EstimationBoundInputs { beta: 0.5, ..*inp };
    probe.validate()?;
    let log_term = (inp.dim as f64 / inp.delta_prob).ln();
    let a = 2f64.powf(1.5) * inp.sigma_max * log_term.sqrt();
    let b = inp.m_step * inp.l_g * inp.eta;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid("both bias and variance terms must be positive"));
    }
    let gap = (2.0 * b / a).powf(2.0 / 3.0);
    if gap >= 1.0 {
        return Err(Error::invalid(format!("optimal 1−β = {gap} is not below 1 (η too large)")));
    }
    Ok((1.0 - gap, a * gap.sqrt() + b / gap))
}

/// `ceil(c_w · η^{−2/3})`.
pub fn burn_in_length(eta: f64, c_w: f64) -> Result<usize> {
    if !(eta > 0.0) || !eta.is_finite() || !(c_w > 0.0) || !c_w.is_finite() {
        return Err(Error::invalid(format!("eta and c_w must be positive, got eta={eta}, c_w={c_w}")));
    }
    Ok(ceil_tol(c_w * eta.powf(-2.0 / 3.0)) as usize)
}

/// Certificate that a matrix sequence is estimable: after `burn_in` samples,
/// the EMA stays within `mu` of the truth for `horizon` steps of size at
/// most `eta_eff`, with probability `1 − delta_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimabilityCert {
    pub burn_in: usize,
    pub horizon: usize,
    pub eta_eff: f64,
    pub mu: f64,
    pub delta_prob: f64,
}

impl EstimabilityCert {
    /// Certificate from the explicit error bound with `W = burn_in_length(η, c_w)`.
    pub fn from_bound(inp: &EstimationBoundInputs, c_w: f64) -> Result<Self> {
        let mu = estimation_error_bound(inp)?;
        let burn_in = burn_in_length(inp.eta.max(f64::MIN_POSITIVE), c_w)?.max(1);
        Ok(Self {
            burn_in,
            horizon: inp.horizon,
            eta_eff: inp.eta,
            mu,
            delta_prob: inp.delta_prob,
        })
    }
}

/// Per-iteration operator-norm error with its running supremum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorSeries {
    pub errors: Vec<f64>,
    pub running_sup: Vec<f64>,
}

impl ErrorSeries {
    pub fn push(&mut self, e: f64) {
        let prev = self.running_sup.last().copied().unwrap_or(0.0);
        self.errors.push(e);
        self.running_sup.push(prev.max(e));
    }

    pub fn sup(&self) -> f64 {
        self.running_sup.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }
}

/// `‖Â − A(x)‖` for the estimator's current state against the idealized preconditioner.
pub fn estimation_error_at(
    problem: &dyn StochasticProblem,
    kind: &PreconditionerKind,
    state: &EmaEstimator,
    x: &[f64],
) -> Result<f64> {
    let truth = idealized_a(problem, kind, x)?;
    state.estimate(kind)?.sub(&truth)?.op_norm()
}

/// Feeds one stochastic gradient per point into `state` and records the
/// estimation error after each update.
pub fn measure_estimation_error(
    problem: &dyn StochasticProblem,
    kind: &PreconditionerKind,
    points: &[Vec<f64>],
    state: &mut EmaEstimator,
    rng: &mut RunRng,
) -> Result<ErrorSeries> {
    let mut series = ErrorSeries::default();
    for x in points {
        check_point(problem, x)?;
        if problem.exact_second_moment(x).is_none() {
            return Err(Error::MissingOracle("exact second moment G(x)"));
        }
        state.observe(&problem.sample_grad(x, rng))?;
        series.push(estimation_error_at(problem, kind, state, x)?);
    }
    Ok(series)
}

/// Monte-Carlo `‖mean (ggᵀ − G)²‖^{1/2}` at `x`.
pub fn estimate_sigma_max(
    problem: &dyn StochasticProblem,
    x: &[f64],
    samples: usize,
    rng: &mut RunRng,
) -> Result<f64> {
    check_point(problem, x)?;
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    let g = problem
        .exact_second_moment(x)
        .ok_or(Error::MissingOracle("exact second moment G(x)"))?;
    let d = problem.dim();
    let mut acc = SymMatrix::zeros(d);
    for _ in 0..samples {
        let dev = SymMatrix::outer(&problem.sample_grad(x, rng))?.sub(&g)?;
        let sq = SymMatrix::new(d, dev.matmul(&dev)?)?;
        acc = acc.linear_combination(1.0, &sq, 1.0 / samples as f64)?;
    }
    Ok(acc.op_norm()?.sqrt())
}
