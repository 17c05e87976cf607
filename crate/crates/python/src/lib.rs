//! Python bindings: test problems, optimizer runs, and the numeric helpers.

use adaprecon::estimation::{self, EstimationBoundInputs};
use adaprecon::linalg::{self, SymMatrix};
use adaprecon::optimizer::{
    self, run_large_step_variant, run_preconditioned_sgd, run_rmsprop, run_rmsprop_with_burnin,
    FirstOrderInputs,
};
use adaprecon::problems::{
    make_counterexample, make_logistic_regression, make_quadratic_gaussian, make_saddle_problem,
    synthetic_logistic_data, Dataset,
};
use adaprecon::theory_checks;
use adaprecon::{
    run_rng, BetaMode, Error, Exponent, HyperParams, PreconditionerKind, PreconditionerSource,
    PreconditionerVariant, RunOptions, StepSchedule, StochasticProblem, Trajectory,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyNotImplementedError, PyValueError};
use pyo3::prelude::*;

create_exception!(adaprecon, DivergenceError, PyArithmeticError, "A run produced non-finite values.");
create_exception!(adaprecon, SingularMatrixError, PyArithmeticError, "A matrix was singular.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NonFinite(_) => DivergenceError::new_err(e.to_string()),
        Error::SingularMatrix => SingularMatrixError::new_err(e.to_string()),
        Error::MissingOracle(_) => PyNotImplementedError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SymMatrix> {
    SymMatrix::from_rows(&rows).map_err(to_py)
}

/// A stochastic objective with gradient oracles.
#[pyclass(module = "adaprecon", frozen)]
pub struct Problem {
    inner: Box<dyn StochasticProblem + Send + Sync>,
}

#[pymethods]
impl Problem {
    /// Two-dimensional saddle with anisotropic gradient noise.
    #[staticmethod]
    fn saddle() -> Self {
        Problem { inner: Box::new(make_saddle_problem()) }
    }

    /// One-dimensional problem on [-1, 1] where EMA preconditioning stalls.
    #[staticmethod]
    #[pyo3(signature = (c = 10.0, zeta = 0.05))]
    fn counterexample(c: f64, zeta: f64) -> PyResult<Self> {
        Ok(Problem { inner: Box::new(make_counterexample(c, zeta).map_err(to_py)?) })
    }

    /// `f(x) = ½ xᵀHx` with Gaussian gradient noise of covariance `noise_cov`.
    #[staticmethod]
    fn quadratic(h: Vec<Vec<f64>>, noise_cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let q = make_quadratic_gaussian(matrix(h)?, matrix(noise_cov)?).map_err(to_py)?;
        Ok(Problem { inner: Box::new(q) })
    }

    /// Logistic regression on synthetic data, or on `features`/`labels` when given.
    #[staticmethod]
    #[pyo3(signature = (n = 2000, d = 20, noise_sd = 0.5, data_seed = 0, batch = 100, features = None, labels = None))]
    #[allow(clippy::too_many_arguments)]
    fn logistic(
        n: usize,
        d: usize,
        noise_sd: f64,
        data_seed: u64,
        batch: usize,
        features: Option<Vec<Vec<f64>>>,
        labels: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let data = match (features, labels) {
            (Some(f), Some(l)) => {
                let d = f.first().map_or(0, Vec::len);
                let n = f.len();
                Dataset::new(n, d, f.into_iter().flatten().collect(), l).map_err(to_py)?
            }
            (None, None) => synthetic_logistic_data(n, d, noise_sd, data_seed).map_err(to_py)?,
            _ => return Err(PyValueError::new_err("features and labels must be given together")),
        };
        Ok(Problem { inner: Box::new(make_logistic_regression(data, batch).map_err(to_py)?) })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.value(&x))
    }

    fn grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.grad(&x))
    }

    #[pyo3(signature = (x, seed = 0))]
    fn sample_grad(&self, x: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.sample_grad(&x, &mut run_rng(seed, 0)))
    }

    /// `E[g gᵀ]` at `x`, or `None` when the problem has no closed form.
    fn second_moment(&self, x: Vec<f64>) -> PyResult<Option<Vec<Vec<f64>>>> {
        self.check(&x)?;
        Ok(self.inner.exact_second_moment(&x).map(|m| m.to_rows()))
    }

    fn hessian(&self, x: Vec<f64>) -> PyResult<Option<Vec<Vec<f64>>>> {
        self.check(&x)?;
        Ok(self.inner.hessian(&x).map(|m| m.to_rows()))
    }

    fn __repr__(&self) -> String {
        format!("Problem({}, dim={})", self.inner.name(), self.inner.dim())
    }
}

impl Problem {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(to_py(Error::DimMismatch { expected: self.inner.dim(), got: x.len() }));
        }
        Ok(())
    }
}

/// Logged records of a run, one entry per record in column form.
#[pyclass(module = "adaprecon", frozen)]
pub struct Run {
    #[pyo3(get)]
    iter: Vec<i64>,
    #[pyo3(get)]
    step_kind: Vec<String>,
    #[pyo3(get)]
    f: Vec<f64>,
    #[pyo3(get)]
    grad_norm: Vec<f64>,
    #[pyo3(get)]
    lambda_min_h: Vec<Option<f64>>,
    #[pyo3(get)]
    est_error: Vec<Option<f64>>,
    #[pyo3(get)]
    x: Vec<Vec<f64>>,
    /// Error message when the run stopped early; the records are the partial run.
    #[pyo3(get)]
    error: Option<String>,
}

impl Run {
    fn from_trajectory(t: Trajectory, error: Option<String>) -> Self {
        let r = &t.records;
        Run {
            iter: r.iter().map(|r| r.iter).collect(),
            step_kind: r.iter().map(|r| r.step_kind.as_str().to_string()).collect(),
            f: r.iter().map(|r| r.f_val).collect(),
            grad_norm: r.iter().map(|r| r.grad_norm).collect(),
            lambda_min_h: r.iter().map(|r| r.lambda_min_h).collect(),
            est_error: r.iter().map(|r| r.est_error).collect(),
            x: t.records.into_iter().map(|r| r.x).collect(),
            error,
        }
    }
}

#[pymethods]
impl Run {
    fn __len__(&self) -> usize {
        self.f.len()
    }

    /// Objective at the last iterate.
    #[getter]
    fn final_f(&self) -> Option<f64> {
        self.step_kind
            .iter()
            .zip(&self.f)
            .rev()
            .find(|(k, _)| matches!(k.as_str(), "normal" | "large"))
            .map(|(_, f)| *f)
    }

    fn __repr__(&self) -> String {
        format!("Run(records={}, error={:?})", self.f.len(), self.error)
    }
}

fn kind_from(name: &str, epsilon: f64, exponent: f64) -> PyResult<PreconditionerKind> {
    let variant = match name {
        "identity" => PreconditionerVariant::Identity,
        "full" => PreconditionerVariant::FullMatrix,
        "diagonal" => PreconditionerVariant::Diagonal,
        "covariance" => PreconditionerVariant::CovarianceFullMatrix,
        other => return Err(PyValueError::new_err(format!("unknown preconditioner `{other}`"))),
    };
    PreconditionerKind::new(variant, epsilon, Exponent::from_value(exponent).map_err(to_py)?).map_err(to_py)
}

/// Runs one optimizer. `algorithm` is `sgd`, `preconditioned_sgd`, `rmsprop`,
/// `rmsprop_burnin` or `large_step`. With `strict` a divergence raises
/// `DivergenceError`; otherwise the partial run is returned with `error` set.
#[pyfunction]
#[pyo3(signature = (
    problem, x0, iterations, algorithm = "rmsprop", eta = 1e-3, beta = 0.99, epsilon = 1e-8,
    preconditioner = "diagonal", exponent = -0.5, idealized = false, seed = 0, beta_c = None,
    step_schedule = "constant", burn_in = 0, r = None, t_thresh = 1, hallucination = 1,
    bias_correction = false, track_estimation_error = false, hessian_every = None, strict = true,
))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    problem: &Problem,
    x0: Vec<f64>,
    iterations: usize,
    algorithm: &str,
    eta: f64,
    beta: f64,
    epsilon: f64,
    preconditioner: &str,
    exponent: f64,
    idealized: bool,
    seed: u64,
    beta_c: Option<f64>,
    step_schedule: &str,
    burn_in: usize,
    r: Option<f64>,
    t_thresh: usize,
    hallucination: usize,
    bias_correction: bool,
    track_estimation_error: bool,
    hessian_every: Option<usize>,
    strict: bool,
) -> PyResult<Run> {
    problem.check(&x0)?;
    let kind = kind_from(preconditioner, epsilon, exponent)?;
    let source = if idealized {
        PreconditionerSource::Idealized(kind)
    } else {
        PreconditionerSource::Estimated(kind)
    };
    let hp = HyperParams {
        eta,
        r: r.unwrap_or(eta),
        beta,
        epsilon,
        t_thresh,
        w: burn_in,
        s: hallucination,
        ..Default::default()
    };
    let mut opts = RunOptions::new(x0, iterations);
    opts.step_schedule = match step_schedule {
        "constant" => StepSchedule::Constant,
        "inv_sqrt" => StepSchedule::InverseSqrt,
        other => return Err(PyValueError::new_err(format!("unknown step schedule `{other}`"))),
    };
    opts.beta_mode = beta_c.map_or(BetaMode::Fixed, |c| BetaMode::Schedule { c });
    opts.bias_correction = bias_correction;
    opts.track_estimation_error = track_estimation_error;
    opts.hessian_every = hessian_every;
    let p = problem.inner.as_ref();
    let result = py.detach(|| {
        let mut rng = run_rng(seed, 0);
        match algorithm {
            "sgd" => Ok(run_preconditioned_sgd(
                p,
                PreconditionerSource::Idealized(PreconditionerKind::identity()),
                &hp,
                &opts,
                &mut rng,
            )),
            "preconditioned_sgd" => Ok(run_preconditioned_sgd(p, source, &hp, &opts, &mut rng)),
            "rmsprop" => Ok(run_rmsprop(p, kind, &hp, &opts, &mut rng)),
            "rmsprop_burnin" => Ok(run_rmsprop_with_burnin(p, kind, &hp, &opts, &mut rng)),
            "large_step" => Ok(run_large_step_variant(p, source, &hp, &opts, &mut rng)),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    });
    match result.map_err(PyValueError::new_err)? {
        Ok(t) => Ok(Run::from_trajectory(t, None)),
        Err(f) if strict || f.partial.records.is_empty() => Err(to_py(f.error)),
        Err(f) => Ok(Run::from_trajectory(f.partial, Some(f.error.to_string()))),
    }
}

/// `M^p` through the eigendecomposition; eigenvalues below `clamp_floor` are raised to it.
#[pyfunction]
#[pyo3(signature = (m, p, clamp_floor = 0.0))]
fn sym_power(m: Vec<Vec<f64>>, p: f64, clamp_floor: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(linalg::sym_power(&matrix(m)?, p, clamp_floor).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn op_norm(m: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::op_norm(&matrix(m)?).map_err(to_py)
}

#[pyfunction]
fn inv_perturbation_bound(lambda_min_g: f64, eps: f64) -> PyResult<f64> {
    linalg::inv_perturbation_bound(lambda_min_g, eps).map_err(to_py)
}

#[pyfunction]
fn sqrt_perturbation_bound(lambda_min_g: f64, eps: f64) -> PyResult<f64> {
    linalg::sqrt_perturbation_bound(lambda_min_g, eps).map_err(to_py)
}

#[pyfunction]
fn invsqrt_preconditioner_bound(lambda_min_g: f64, delta_reg: f64, eps: f64) -> PyResult<f64> {
    linalg::invsqrt_preconditioner_bound(lambda_min_g, delta_reg, eps).map_err(to_py)
}

/// `β = 1 − C η^{2/3}`.
#[pyfunction]
#[pyo3(signature = (eta, c = 1.0))]
fn beta_schedule(eta: f64, c: f64) -> PyResult<f64> {
    estimation::beta_schedule(eta, c).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (eta, c_w = 1.0))]
fn burn_in_length(eta: f64, c_w: f64) -> PyResult<usize> {
    estimation::burn_in_length(eta, c_w).map_err(to_py)
}

/// High-probability bound on the EMA estimation error after `horizon` samples.
#[pyfunction]
#[pyo3(signature = (*, sigma_max, m_step, l_g, eta, beta, horizon, dim, delta_prob = 0.05, r_dev = None))]
#[allow(clippy::too_many_arguments)]
fn estimation_error_bound(
    sigma_max: f64,
    m_step: f64,
    l_g: f64,
    eta: f64,
    beta: f64,
    horizon: usize,
    dim: usize,
    delta_prob: f64,
    r_dev: Option<f64>,
) -> PyResult<f64> {
    estimation::estimation_error_bound(&EstimationBoundInputs {
        sigma_max,
        r_dev: r_dev.unwrap_or(sigma_max),
        m_step,
        l_g,
        eta,
        beta,
        horizon,
        dim,
        delta_prob,
    })
    .map_err(to_py)
}

/// Stepsize and horizon `(eta, T)` for average squared gradient norm below `tau²`.
#[pyfunction]
#[pyo3(signature = (*, l, c3, lambda_minus, f_gap, tau, exact = true))]
fn first_order_params(l: f64, c3: f64, lambda_minus: f64, f_gap: f64, tau: f64, exact: bool) -> PyResult<(f64, usize)> {
    optimizer::first_order_params(&FirstOrderInputs { l, c3, lambda_minus, f_gap }, tau, exact).map_err(to_py)
}

/// Largest entrywise deviation of the whitened noise covariance from its prediction.
#[pyfunction]
#[pyo3(signature = (problem, x, n_samples = 100_000, seed = 0))]
fn isotropy_covariance_check(py: Python<'_>, problem: &Problem, x: Vec<f64>, n_samples: usize, seed: u64) -> PyResult<f64> {
    problem.check(&x)?;
    let p = problem.inner.as_ref();
    py.detach(|| theory_checks::isotropy_covariance_check(p, &x, n_samples, &mut run_rng(seed, 0)))
        .map_err(to_py)
}

#[pymodule]
#[pyo3(name = "adaprecon")]
fn adaprecon_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Run>()?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add("SingularMatrixError", m.py().get_type::<SingularMatrixError>())?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sym_power, m)?)?;
    m.add_function(wrap_pyfunction!(op_norm, m)?)?;
    m.add_function(wrap_pyfunction!(inv_perturbation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_perturbation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(invsqrt_preconditioner_bound, m)?)?;
    m.add_function(wrap_pyfunction!(beta_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(burn_in_length, m)?)?;
    m.add_function(wrap_pyfunction!(estimation_error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(first_order_params, m)?)?;
    m.add_function(wrap_pyfunction!(isotropy_covariance_check, m)?)?;
    Ok(())
}
