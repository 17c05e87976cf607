//! Turning a validated config into problems, hyperparameters and runs.

use adaprecon::estimation::{burn_in_length, estimate_sigma_max};
use adaprecon::optimizer::{
    first_order_params, run_large_step_variant, run_preconditioned_sgd, run_rmsprop,
    run_rmsprop_with_burnin, second_order_params, FirstOrderInputs, RunResult,
};
use adaprecon::preconditioner::{
    constants_diagonal, constants_full_matrix, constants_identity, estimate_step_bound,
    idealized_a,
};
use adaprecon::problems::{
    make_counterexample, make_logistic_regression, make_quadratic_gaussian, make_saddle_problem,
    synthetic_logistic_data, CounterexampleProblem, Dataset, LogisticRegression,
    QuadraticGaussian, SaddleProblem2D,
};
use adaprecon::{
    run_rng, BetaMode, Exponent, HyperParams, PreconditionerConstants, PreconditionerKind,
    PreconditionerSource, PreconditionerVariant, RunOptions, RunRng, StepSchedule,
    StochasticProblem, SymMatrix,
};

use crate::config::{ExperimentConfig, OptimizerSection, ProblemSection};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub enum BuiltProblem {
    Saddle(SaddleProblem2D),
    Counterexample(CounterexampleProblem),
    Quadratic(QuadraticGaussian),
    Logistic(LogisticRegression),
}

impl BuiltProblem {
    pub fn as_dyn(&self) -> &dyn StochasticProblem {
        match self {
            BuiltProblem::Saddle(p) => p,
            BuiltProblem::Counterexample(p) => p,
            BuiltProblem::Quadratic(p) => p,
            BuiltProblem::Logistic(p) => p,
        }
    }

    /// `σ_max` at `x`: closed form where known, Monte Carlo otherwise.
    pub fn sigma_max_at(&self, x: &[f64], rng: &mut RunRng) -> CliResult<f64> {
        match self {
            BuiltProblem::Quadratic(q) => q.sigma_max_at(x).map_err(numeric),
            BuiltProblem::Counterexample(p) => Ok(p.smoothness().sigma_max.unwrap_or(0.0)),
            _ => estimate_sigma_max(self.as_dyn(), x, 2000, rng).map_err(numeric),
        }
    }

    /// Lipschitz constant of `G` on the ball of the given radius.
    pub fn second_moment_lipschitz(&self, radius: f64) -> CliResult<f64> {
        match self {
            BuiltProblem::Quadratic(q) => Ok(q.second_moment_lipschitz(radius)),
            other => other.as_dyn().smoothness().l_g.ok_or_else(|| {
                CliError::config(format!(
                    "problem `{}` has no known Lipschitz constant for G",
                    other.as_dyn().name()
                ))
            }),
        }
    }

    /// Minimum objective value where it is known in closed form.
    pub fn min_value(&self) -> Option<f64> {
        match self {
            BuiltProblem::Saddle(_) => Some(SaddleProblem2D::min_value()),
            BuiltProblem::Counterexample(p) => Some(-p.zeta),
            BuiltProblem::Quadratic(q) => q.curvature().is_psd(1e-12).ok().filter(|b| *b).map(|_| 0.0),
            BuiltProblem::Logistic(_) => None,
        }
    }
}

fn numeric(e: adaprecon::Error) -> CliError {
    CliError::Numeric(e.to_string())
}

fn invalid(field: &str, e: adaprecon::Error) -> CliError {
    CliError::config(format!("{field}: {e}"))
}

fn matrix(field: &str, diag: &Option<Vec<f64>>, full: &Option<Vec<Vec<f64>>>) -> CliResult<Option<SymMatrix>> {
    match (diag, full) {
        (Some(_), Some(_)) => Err(CliError::config(format!(
            "problem.{field}: give either the diagonal or the full matrix, not both"
        ))),
        (Some(d), None) => SymMatrix::from_diag(d).map(Some).map_err(|e| invalid(field, e)),
        (None, Some(rows)) => SymMatrix::from_rows(rows).map(Some).map_err(|e| invalid(field, e)),
        (None, None) => Ok(None),
    }
}

pub fn build_problem(spec: &ProblemSection) -> CliResult<BuiltProblem> {
    match spec.name.as_str() {
        "saddle" => Ok(BuiltProblem::Saddle(make_saddle_problem())),
        "counterexample" => {
            let c = spec.c.unwrap_or(10.0);
            let zeta = spec.zeta.unwrap_or(0.05);
            make_counterexample(c, zeta)
                .map(BuiltProblem::Counterexample)
                .map_err(|e| invalid("problem", e))
        }
        "quadratic" => {
            let h = matrix("h", &spec.h_diag, &spec.h)?
                .ok_or_else(|| CliError::config("problem.h_diag: quadratic needs h_diag or h"))?;
            let noise = matrix("noise", &spec.noise_diag, &spec.noise_cov)?
                .unwrap_or_else(|| SymMatrix::identity(h.dim()));
            make_quadratic_gaussian(h, noise)
                .map(BuiltProblem::Quadratic)
                .map_err(|e| invalid("problem", e))
        }
        "logistic" => {
            let data = match &spec.data_path {
                Some(path) => Dataset::from_csv(path).map_err(|e| invalid("problem.data_path", e))?,
                None => synthetic_logistic_data(
                    spec.n.unwrap_or(2000),
                    spec.d.unwrap_or(20),
                    spec.noise_sd.unwrap_or(0.5),
                    spec.data_seed.unwrap_or(0),
                )
                .map_err(|e| invalid("problem", e))?,
            };
            let batch = spec.batch.unwrap_or(100.min(data.n));
            make_logistic_regression(data, batch)
                .map(BuiltProblem::Logistic)
                .map_err(|e| invalid("problem.batch", e))
        }
        other => Err(CliError::config(format!("problem.name: unknown problem `{other}`"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Sgd,
    PreconditionedSgd(PreconditionerSource),
    Rmsprop(PreconditionerKind),
    RmspropBurnin(PreconditionerKind),
    LargeStep(PreconditionerSource),
}

impl Algorithm {
    pub fn execute(
        &self,
        problem: &dyn StochasticProblem,
        hp: &HyperParams,
        opts: &RunOptions,
        rng: &mut RunRng,
    ) -> RunResult {
        match *self {
            Algorithm::Sgd => run_preconditioned_sgd(
                problem,
                PreconditionerSource::Idealized(PreconditionerKind::identity()),
                hp,
                opts,
                rng,
            ),
            Algorithm::PreconditionedSgd(src) => run_preconditioned_sgd(problem, src, hp, opts, rng),
            Algorithm::Rmsprop(kind) => run_rmsprop(problem, kind, hp, opts, rng),
            Algorithm::RmspropBurnin(kind) => run_rmsprop_with_burnin(problem, kind, hp, opts, rng),
            Algorithm::LargeStep(src) => run_large_step_variant(problem, src, hp, opts, rng),
        }
    }

    pub fn kind(&self) -> PreconditionerKind {
        match *self {
            Algorithm::Sgd => PreconditionerKind::identity(),
            Algorithm::PreconditionedSgd(s) | Algorithm::LargeStep(s) => *s.kind(),
            Algorithm::Rmsprop(k) | Algorithm::RmspropBurnin(k) => k,
        }
    }
}

fn preconditioner_kind(opt: &OptimizerSection) -> CliResult<PreconditionerKind> {
    let variant = match opt.preconditioner.as_deref().unwrap_or("diagonal") {
        "identity" => PreconditionerVariant::Identity,
        "full" => PreconditionerVariant::FullMatrix,
        "diagonal" => PreconditionerVariant::Diagonal,
        "covariance" => PreconditionerVariant::CovarianceFullMatrix,
        other => {
            return Err(CliError::config(format!(
                "optimizer.preconditioner: unknown preconditioner `{other}` (expected identity, full, diagonal, covariance)"
            )))
        }
    };
    let exponent = Exponent::from_value(opt.exponent.unwrap_or(-0.5))
        .map_err(|e| invalid("optimizer.exponent", e))?;
    PreconditionerKind::new(variant, opt.epsilon.unwrap_or(1e-8), exponent)
        .map_err(|e| invalid("optimizer", e))
}

fn source(opt: &OptimizerSection, kind: PreconditionerKind) -> CliResult<PreconditionerSource> {
    match opt.source.as_deref().unwrap_or("estimated") {
        "estimated" => Ok(PreconditionerSource::Estimated(kind)),
        "idealized" => Ok(PreconditionerSource::Idealized(kind)),
        other => Err(CliError::config(format!(
            "optimizer.source: unknown source `{other}` (expected estimated, idealized)"
        ))),
    }
}

pub fn algorithm(opt: &OptimizerSection) -> CliResult<Algorithm> {
    let kind = preconditioner_kind(opt)?;
    Ok(match opt.algorithm.as_str() {
        "sgd" => Algorithm::Sgd,
        "preconditioned_sgd" => Algorithm::PreconditionedSgd(source(opt, kind)?),
        "rmsprop" => Algorithm::Rmsprop(kind),
        "rmsprop_burnin" => Algorithm::RmspropBurnin(kind),
        "large_step" => Algorithm::LargeStep(source(opt, kind)?),
        other => {
            return Err(CliError::config(format!("optimizer.algorithm: unknown algorithm `{other}`")))
        }
    })
}

/// Everything needed to execute one condition for any seed.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub problem: BuiltProblem,
    pub algorithm: Algorithm,
    pub hp: HyperParams,
    pub opts: RunOptions,
    pub warnings: Vec<String>,
}

impl ResolvedRun {
    pub fn execute(&self, seed: u64) -> RunResult {
        let mut rng = run_rng(seed, 0);
        self.algorithm.execute(self.problem.as_dyn(), &self.hp, &self.opts, &mut rng)
    }
}

fn constants_at(
    problem: &dyn StochasticProblem,
    kind: &PreconditionerKind,
    x: &[f64],
) -> adaprecon::Result<PreconditionerConstants> {
    match kind.variant {
        PreconditionerVariant::Identity => constants_identity(problem, x),
        PreconditionerVariant::FullMatrix | PreconditionerVariant::CovarianceFullMatrix => {
            constants_full_matrix(problem, x, kind.epsilon)
        }
        PreconditionerVariant::Diagonal => constants_diagonal(problem, x, kind.epsilon),
    }
}

pub fn resolve(cfg: &ExperimentConfig) -> CliResult<ResolvedRun> {
    let problem = build_problem(&cfg.problem)?;
    let p = problem.as_dyn();
    let opt = &cfg.optimizer;
    let algo = algorithm(opt)?;
    let defaults = HyperParams::default();
    let eta = opt.eta.unwrap_or(defaults.eta);
    let mut hp = HyperParams {
        eta,
        r: opt.r.unwrap_or(eta),
        beta: opt.beta.unwrap_or(defaults.beta),
        epsilon: opt.epsilon.unwrap_or(defaults.epsilon),
        t_thresh: opt.t_thresh.unwrap_or(defaults.t_thresh),
        w: 0,
        s: opt.hallucination.unwrap_or(defaults.s),
        tau: opt.tau.unwrap_or(defaults.tau),
        delta_prob: opt.delta.unwrap_or(defaults.delta_prob),
        omega: opt.omega.unwrap_or(defaults.omega),
        k_const: opt.k_const.unwrap_or(defaults.k_const),
    };
    let x0 = cfg.run.x0.clone().unwrap_or_else(|| vec![0.0; p.dim()]);
    if x0.len() != p.dim() {
        return Err(CliError::config(format!(
            "run.x0: expected {} coordinates, got {}",
            p.dim(),
            x0.len()
        )));
    }
    let mut opts = RunOptions::new(x0.clone(), cfg.run.iterations.unwrap_or(0));
    opts.step_schedule = match opt.step_schedule.as_deref().unwrap_or("constant") {
        "constant" => StepSchedule::Constant,
        "inv_sqrt" => StepSchedule::InverseSqrt,
        other => {
            return Err(CliError::config(format!(
                "optimizer.step_schedule: unknown schedule `{other}` (expected constant, inv_sqrt)"
            )))
        }
    };
    opts.beta_mode = match opt.beta_mode.as_deref().unwrap_or("fixed") {
        "fixed" => BetaMode::Fixed,
        "schedule" => BetaMode::Schedule { c: opt.beta_c.unwrap_or(1.0) },
        other => {
            return Err(CliError::config(format!(
                "optimizer.beta_mode: unknown mode `{other}` (expected fixed, schedule)"
            )))
        }
    };
    opts.hessian_every = cfg.run.hessian_every;
    opts.track_estimation_error = cfg.run.track_estimation_error.unwrap_or(false);
    opts.bias_correction = opt.bias_correction.unwrap_or(false);

    let mut warnings = Vec::new();
    match opt.auto.as_deref() {
        None => {}
        Some(mode @ ("first_order" | "first_order_inexact")) => {
            let k = constants_at(p, &algo.kind(), &x0).map_err(|e| invalid("optimizer.auto", e))?;
            let f_gap = match opt.f_gap {
                Some(g) => g,
                None => problem
                    .min_value()
                    .map(|fstar| p.value(&x0) - fstar)
                    .ok_or_else(|| CliError::config("optimizer.f_gap: required for this problem"))?,
            };
            let inp = FirstOrderInputs { l: p.smoothness().l, c3: k.c3, lambda_minus: k.lambda_minus, f_gap };
            let (eta, t) = first_order_params(&inp, hp.tau, mode == "first_order")
                .map_err(|e| invalid("optimizer.auto", e))?;
            hp.eta = eta;
            hp.r = eta;
            opts.iterations = t;
        }
        Some("second_order") => {
            let kind = algo.kind();
            let mut k = constants_at(p, &kind, &x0).map_err(|e| invalid("optimizer.auto", e))?;
            let m = match opt.m_bound {
                Some(m) => m,
                None => {
                    let a = idealized_a(p, &kind, &x0).map_err(|e| invalid("optimizer.auto", e))?;
                    let mut rng = run_rng(u64::MAX, 0);
                    estimate_step_bound(p, &a, &x0, 2000, &mut rng).map_err(numeric)?
                }
            };
            k = k.with_m_bound(m);
            let sp = second_order_params(&k, &p.smoothness(), hp.tau, hp.delta_prob, hp.omega, hp.k_const)
                .map_err(|e| invalid("optimizer.auto", e))?;
            if sp.r_below_eta {
                warnings.push(format!(
                    "second-order parameters give r = {:e} < eta = {:e}; raising r to eta",
                    sp.hp.r, sp.hp.eta
                ));
            }
            let beta = hp.beta;
            let epsilon = hp.epsilon;
            hp = HyperParams { beta, epsilon, r: sp.hp.r.max(sp.hp.eta), ..sp.hp };
            if cfg.run.iterations.is_none() {
                return Err(CliError::config("run.iterations: required with auto = \"second_order\""));
            }
        }
        Some(other) => {
            return Err(CliError::config(format!(
                "optimizer.auto: unknown mode `{other}` (expected first_order, first_order_inexact, second_order)"
            )))
        }
    }
    hp.w = match (opt.burn_in, algo) {
        (Some(w), _) => w,
        (None, Algorithm::RmspropBurnin(_)) => burn_in_length(hp.eta, 1.0).map_err(|e| invalid("optimizer.eta", e))?,
        (None, _) if opt.auto.as_deref() == Some("second_order") => hp.w,
        (None, _) => 0,
    };
    let large = matches!(algo, Algorithm::LargeStep(_));
    hp.validate(large).map_err(|e| invalid("optimizer", e))?;
    if opts.iterations == 0 {
        return Err(CliError::config("run.iterations: must be at least 1"));
    }
    if let Algorithm::PreconditionedSgd(PreconditionerSource::Idealized(k))
    | Algorithm::LargeStep(PreconditionerSource::Idealized(k)) = algo
    {
        if k.variant != PreconditionerVariant::Identity && p.exact_second_moment(&x0).is_none() {
            return Err(CliError::config(format!(
                "optimizer.source: idealized preconditioning needs the exact second moment, which problem `{}` lacks",
                p.name()
            )));
        }
    }
    if opts.track_estimation_error && p.exact_second_moment(&x0).is_none() {
        return Err(CliError::config(format!(
            "run.track_estimation_error: problem `{}` has no exact second moment",
            p.name()
        )));
    }
    Ok(ResolvedRun { problem, algorithm: algo, hp, opts, warnings })
}
