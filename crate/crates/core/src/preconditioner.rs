//! Preconditioners: idealized oracles built from the exact second moment,
//! EMA-estimated preconditioners, and the scalar constants that govern the
//! convergence rate of preconditioned SGD.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::problems::StochasticProblem;
use crate::rng::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreconditionerVariant {
    /// `A = I` (plain SGD).
    Identity,
    /// `A = (G + εI)^p`.
    FullMatrix,
    /// `A = (diag(G) + εI)^p`.
    Diagonal,
    /// `A = (Σ + εI)^p` with `Σ = Cov(g)`.
    CovarianceFullMatrix,
}

/// Power applied to the regularized second moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Exponent {
    /// `−1/2`, the RMSProp/Adam choice.
    #[default]
    InvSqrt,
    /// `−1`. Reduces to normalized gradient descent without noise and is
    /// unstable near stationary points; kept for demonstrating that.
    Inverse,
}

impl Exponent {
    pub fn value(self) -> f64 {
        match self {
            Exponent::InvSqrt => -0.5,
            Exponent::Inverse => -1.0,
        }
    }

    pub fn from_value(p: f64) -> Result<Self> {
        if p == -0.5 {
            Ok(Exponent::InvSqrt)
        } else if p == -1.0 {
            Ok(Exponent::Inverse)
        } else {
            Err(Error::invalid(format!("exponent must be -0.5 or -1, got {p}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionerKind {
    pub variant: PreconditionerVariant,
    pub epsilon: f64,
    pub exponent: Exponent,
}

impl PreconditionerKind {
    pub fn new(variant: PreconditionerVariant, epsilon: f64, exponent: Exponent) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be finite and ≥ 0, got {epsilon}")));
        }
        Ok(Self {
            variant,
            epsilon,
            exponent,
        })
    }

    pub fn identity() -> Self {
        Self {
            variant: PreconditionerVariant::Identity,
            epsilon: 0.0,
            exponent: Exponent::InvSqrt,
        }
    }

    pub fn full_matrix(epsilon: f64) -> Self {
        Self {
            variant: PreconditionerVariant::FullMatrix,
            epsilon,
            exponent: Exponent::InvSqrt,
        }
    }

    pub fn diagonal(epsilon: f64) -> Self {
        Self {
            variant: PreconditionerVariant::Diagonal,
            epsilon,
            exponent: Exponent::InvSqrt,
        }
    }

    /// True for the exponent −1 mode, whose runs are flagged as unstable in output.
    pub fn is_unstable_mode(&self) -> bool {
        self.exponent == Exponent::Inverse && self.variant != PreconditionerVariant::Identity
    }

    /// Applies this preconditioner's map to a second-moment (or covariance) estimate.
    pub fn from_moment(&self, m: &SymMatrix) -> Result<SymMatrix> {
        let p = self.exponent.value();
        match self.variant {
            PreconditionerVariant::Identity => Ok(SymMatrix::identity(m.dim())),
            PreconditionerVariant::FullMatrix | PreconditionerVariant::CovarianceFullMatrix => {
                m.add_identity(self.epsilon).power(p, 0.0)
            }
            PreconditionerVariant::Diagonal => {
                let diag = m.diagonal();
                let mut out = Vec::with_capacity(diag.len());
                for v in diag {
                    let s = v.max(0.0) + self.epsilon;
                    if s <= 0.0 {
                        return Err(Error::SingularMatrix);
                    }
                    out.push(s.powf(p));
                }
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("diagonal preconditioner".into()));
                }
                SymMatrix::from_diag(&out)
            }
        }
    }
}

fn require_second_moment(problem: &dyn StochasticProblem, x: &[f64]) -> Result<SymMatrix> {
    problem
        .exact_second_moment(x)
        .ok_or(Error::MissingOracle("exact second moment G(x)"))
}

/// `Σ(x) = G(x) − ∇f ∇fᵀ`.
pub fn exact_covariance(problem: &dyn StochasticProblem, x: &[f64]) -> Result<SymMatrix> {
    let g = require_second_moment(problem, x)?;
    let mean = problem.grad(x);
    g.sub(&SymMatrix::outer(&mean)?)
}

/// The idealized preconditioner `A(x)` computed from the exact second moment.
pub fn idealized_a(
    problem: &dyn StochasticProblem,
    kind: &PreconditionerKind,
    x: &[f64],
) -> Result<SymMatrix> {
    check_point(problem, x)?;
    match kind.variant {
        PreconditionerVariant::Identity => Ok(SymMatrix::identity(problem.dim())),
        PreconditionerVariant::CovarianceFullMatrix => kind.from_moment(&exact_covariance(problem, x)?),
        PreconditionerVariant::FullMatrix | PreconditionerVariant::Diagonal => {
            kind.from_moment(&require_second_moment(problem, x)?)
        }
    }
}

pub(crate) fn check_point(problem: &dyn StochasticProblem, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::DimMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("point".into()));
    }
    Ok(())
}

/// Exponential moving average `Ĝ ← βĜ + (1−β) v vᵀ`, started from `Ĝ₀ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaEstimator {
    g_hat: SymMatrix,
    beta: f64,
    steps_seen: u64,
    bias_corrected: bool,
    /// Product of the β used in every update; `1 − decay` is the weight mass
    /// accumulated so far (equal to `1 − β^t` for constant β).
    decay: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    Ok(())
}

impl EmaEstimator {
    pub fn new(dim: usize, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(Self {
            g_hat: SymMatrix::zeros(dim),
            beta,
            steps_seen: 0,
            bias_corrected: false,
            decay: 1.0,
        })
    }

    /// Enables Adam-style `Ĝ / (1 − β^t)` in [`EmaEstimator::estimate`].
    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_corrected = on;
        self
    }

    pub fn g_hat(&self) -> &SymMatrix {
        &self.g_hat
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    pub fn bias_corrected(&self) -> bool {
        self.bias_corrected
    }

    pub fn dim(&self) -> usize {
        self.g_hat.dim()
    }

    /// Changes β for subsequent updates (time-varying schedules).
    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        check_beta(beta)?;
        self.beta = beta;
        Ok(())
    }

    /// Returns the state after observing gradient `g`.
    pub fn update(&self, g: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.observe(g)?;
        Ok(next)
    }

    /// In-place form of [`EmaEstimator::update`].
    pub fn observe(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient sample".into()));
        }
        self.g_hat.rank_one_blend(self.beta, 1.0 - self.beta, g);
        self.steps_seen += 1;
        self.decay *= self.beta;
        Ok(())
    }

    /// Observes `½ (g₁ − g₂)(g₁ − g₂)ᵀ`, whose expectation is `Cov(g)` for
    /// independent draws at the same point.
    pub fn observe_pair(&mut self, g1: &[f64], g2: &[f64]) -> Result<()> {
        if g1.len() != g2.len() {
            return Err(Error::DimMismatch {
                expected: g1.len(),
                got: g2.len(),
            });
        }
        let diff: Vec<f64> = g1
            .iter()
            .zip(g2)
            .map(|(a, b)| (a - b) * std::f64::consts::FRAC_1_SQRT_2)
            .collect();
        self.observe(&diff)
    }

    /// `Ĝ`, bias corrected when enabled.
    pub fn moment(&self) -> SymMatrix {
        if self.bias_corrected && self.steps_seen > 0 && self.decay < 1.0 {
            self.g_hat.scale(1.0 / (1.0 - self.decay))
        } else {
            self.g_hat.clone()
        }
    }

    /// The estimated preconditioner `Â`.
    pub fn estimate(&self, kind: &PreconditionerKind) -> Result<SymMatrix> {
        kind.from_moment(&self.moment())
    }
}

/// Constants `(ν₁, ν₂, c₃, c₄, λ₋)` certifying a preconditioner at a point,
/// plus an optional uniform step bound `M ≥ ‖A g‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionerConstants {
    /// `‖A∇f‖² ≤ ν₁ ‖A^{1/2}∇f‖²`.
    pub nu1: f64,
    /// Scaling of the residual from the local quadratic model.
    pub nu2: f64,
    /// `E‖Ag‖² ≤ c₃`.
    pub c3: f64,
    /// `λ_min(A G Aᵀ) ≥ c₄`.
    pub c4: f64,
    /// `λ_min(A) ≥ λ₋`.
    pub lambda_minus: f64,
    pub m_bound: Option<f64>,
}

impl PreconditionerConstants {
    pub fn with_m_bound(mut self, m: f64) -> Self {
        self.m_bound = Some(m);
        self
    }
}

/// Constants for `A = I` given the second moment `G`.
pub fn constants_identity_for(g: &SymMatrix) -> Result<PreconditionerConstants> {
    Ok(PreconditionerConstants {
        nu1: 1.0,
        nu2: 1.0,
        c3: g.trace(),
        c4: g.min_eigenvalue()?,
        lambda_minus: 1.0,
        m_bound: None,
    })
}

/// Constants for `A = (G + εI)^{-1/2}`.
pub fn constants_full_matrix_for(g: &SymMatrix, eps: f64) -> Result<PreconditionerConstants> {
    check_eps(eps)?;
    let lmin = g.min_eigenvalue()?;
    let lmax = g.max_eigenvalue()?;
    if lmin + eps <= 0.0 {
        return Err(Error::SingularMatrix);
    }
    let d = g.dim() as f64;
    let nu = (lmin + eps).powf(-0.5);
    Ok(PreconditionerConstants {
        nu1: nu,
        nu2: nu,
        c3: d * lmax / (eps + lmax),
        c4: lmin / (lmin + eps),
        lambda_minus: (lmax + eps).powf(-0.5),
        m_bound: None,
    })
}

/// `D^{-1/2} G D^{-1/2}` with `D = diag(G)`; similar to `G·diag(G)^{-1}`.
fn diagonally_scaled(g: &SymMatrix) -> Result<SymMatrix> {
    let diag = g.diagonal();
    if diag.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::SingularMatrix);
    }
    SymMatrix::from_fn(g.dim(), |i, j| {
        if i == j {
            1.0
        } else {
            g.get(i, j) / (diag[i] * diag[j]).sqrt()
        }
    })
}

/// Constants for `A = (diag(G) + εI)^{-1/2}`.
pub fn constants_diagonal_for(g: &SymMatrix, eps: f64) -> Result<PreconditionerConstants> {
    check_eps(eps)?;
    let diag = g.diagonal();
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if dmin + eps <= 0.0 {
        return Err(Error::SingularMatrix);
    }
    let d = g.dim() as f64;
    let nu = (eps + dmin).powf(-0.5);
    let scaled_min = diagonally_scaled(g)?.min_eigenvalue()?;
    Ok(PreconditionerConstants {
        nu1: nu,
        nu2: nu,
        c3: d * dmax / (eps + dmax),
        c4: scaled_min * dmin / (eps + dmin),
        lambda_minus: (eps + dmax).powf(-0.5),
        m_bound: None,
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("epsilon must be finite and ≥ 0, got {eps}")));
    }
    Ok(())
}

pub fn constants_identity(
    problem: &dyn StochasticProblem,
    x: &[f64],
) -> Result<PreconditionerConstants> {
    check_point(problem, x)?;
    constants_identity_for(&require_second_moment(problem, x)?)
}

pub fn constants_full_matrix(
    problem: &dyn StochasticProblem,
    x: &[f64],
    eps: f64,
) -> Result<PreconditionerConstants> {
    check_point(problem, x)?;
    constants_full_matrix_for(&require_second_moment(problem, x)?, eps)
}

pub fn constants_diagonal(
    problem: &dyn StochasticProblem,
    x: &[f64],
    eps: f64,
) -> Result<PreconditionerConstants> {
    check_point(problem, x)?;
    constants_diagonal_for(&require_second_moment(problem, x)?, eps)
}

/// `ν₁⁴ ν₂⁴ c₃⁴ / (λ₋¹⁰ c₄⁴)`, the preconditioner-dependent factor in the
/// second-order iteration complexity.
pub fn second_order_complexity_factor(k: &PreconditionerConstants) -> Result<f64> {
    for (name, v) in [
        ("nu1", k.nu1),
        ("nu2", k.nu2),
        ("c3", k.c3),
        ("c4", k.c4),
        ("lambda_minus", k.lambda_minus),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok((k.nu1 * k.nu2 * k.c3 / k.c4).powi(4) / k.lambda_minus.powi(10))
}

/// Monte-Carlo root-mean-square of `‖A g‖` at `x`, a scale for the step bound `M`.
pub fn estimate_step_bound(
    problem: &dyn StochasticProblem,
    a: &SymMatrix,
    x: &[f64],
    samples: usize,
    rng: &mut RunRng,
) -> Result<f64> {
    check_point(problem, x)?;
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    let mut acc = 0.0;
    for _ in 0..samples {
        let ag = a.mul_vec(&problem.sample_grad(x, rng))?;
        acc += ag.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((acc / samples as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_counterexample, make_quadratic_gaussian, make_saddle_problem};
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> SymMatrix {
        SymMatrix::from_diag(v).unwrap()
    }

    #[test]
    fn identity_kind_gives_identity() {
        let p = make_saddle_problem();
        let a = idealized_a(&p, &PreconditionerKind::identity(), &[0.3, -0.2]).unwrap();
        assert_eq!(a, SymMatrix::identity(2));
    }

    #[test]
    fn counterexample_idealized_is_constant() {
        let p = make_counterexample(2.0, 0.1).unwrap();
        for x in [-1.0, 0.0, 0.7] {
            let a = idealized_a(&p, &PreconditionerKind::full_matrix(0.0), &[x]).unwrap();
            assert_relative_eq!(a.get(0, 0), 1.0 / 2.1f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn saddle_idealized_at_origin() {
        let p = make_saddle_problem();
        let a = idealized_a(&p, &PreconditionerKind::full_matrix(0.0), &[0.0, 0.0]).unwrap();
        assert_relative_eq!(a.get(0, 0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(a.get(1, 1), 10.0, epsilon = 1e-12);
        assert_relative_eq!(a.get(0, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_variant_ignores_mean() {
        let q = make_quadratic_gaussian(SymMatrix::identity(2), diag(&[4.0, 1.0])).unwrap();
        let kind = PreconditionerKind::new(
            PreconditionerVariant::CovarianceFullMatrix,
            0.0,
            Exponent::InvSqrt,
        )
        .unwrap();
        let a = idealized_a(&q, &kind, &[3.0, -1.0]).unwrap();
        assert_relative_eq!(a.get(0, 0), 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.get(1, 1), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn missing_oracle_is_reported() {
        use crate::problems::{make_logistic_regression, Dataset};
        let data = Dataset::new(2, 1, vec![1.0, -1.0], vec![1.0, 0.0]).unwrap();
        let p = make_logistic_regression(data, 1).unwrap();
        assert!(matches!(
            idealized_a(&p, &PreconditionerKind::full_matrix(0.0), &[0.0]),
            Err(Error::MissingOracle(_))
        ));
        assert!(matches!(constants_identity(&p, &[0.0]), Err(Error::MissingOracle(_))));
    }

    #[test]
    fn ema_single_update() {
        let s = EmaEstimator::new(2, 0.9).unwrap();
        let s = s.update(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(s.g_hat().get(0, 0), 0.1, epsilon = 1e-16);
        assert_eq!(s.g_hat().get(1, 1), 0.0);
        assert_eq!(s.g_hat().get(0, 1), 0.0);
        assert_eq!(s.steps_seen(), 1);
    }

    #[test]
    fn ema_repeated_sample_is_geometric() {
        let g = [0.5, -2.0, 1.0];
        let beta = 0.8;
        let mut s = EmaEstimator::new(3, beta).unwrap();
        let t = 25;
        for _ in 0..t {
            s = s.update(&g).unwrap();
        }
        let want = SymMatrix::outer(&g).unwrap().scale(1.0 - beta.powi(t));
        assert!(s.g_hat().sub(&want).unwrap().op_norm().unwrap() < 1e-13);
    }

    #[test]
    fn ema_without_memory() {
        let mut s = EmaEstimator::new(2, 0.0).unwrap();
        s.observe(&[3.0, 1.0]).unwrap();
        s.observe(&[1.0, 2.0]).unwrap();
        assert_eq!(s.g_hat(), &SymMatrix::outer(&[1.0, 2.0]).unwrap());
    }

    #[test]
    fn ema_rejects_bad_input() {
        assert!(EmaEstimator::new(2, 1.0).is_err());
        assert!(EmaEstimator::new(2, -0.1).is_err());
        let s = EmaEstimator::new(2, 0.5).unwrap();
        assert!(matches!(s.update(&[1.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn bias_correction_recovers_constant_sample() {
        let g = [1.0, 2.0];
        let mut s = EmaEstimator::new(2, 0.99).unwrap().with_bias_correction(true);
        for _ in 0..3 {
            s.observe(&g).unwrap();
        }
        let want = SymMatrix::outer(&g).unwrap();
        assert!(s.moment().sub(&want).unwrap().op_norm().unwrap() < 1e-12);
    }

    #[test]
    fn estimated_a_examples() {
        let kind = PreconditionerKind::full_matrix(1.0);
        let m = diag(&[3.0, 0.0]);
        let a = kind.from_moment(&m).unwrap();
        assert_relative_eq!(a.get(0, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(a.get(1, 1), 1.0, epsilon = 1e-15);
        let a = PreconditionerKind::full_matrix(0.0)
            .from_moment(&SymMatrix::identity(3))
            .unwrap();
        assert_eq!(a, SymMatrix::identity(3));
    }

    #[test]
    fn estimated_a_from_empty_state_is_singular_without_epsilon() {
        let s = EmaEstimator::new(2, 0.9).unwrap();
        assert_eq!(
            s.estimate(&PreconditionerKind::full_matrix(0.0)),
            Err(Error::SingularMatrix)
        );
        assert_eq!(
            s.estimate(&PreconditionerKind::diagonal(0.0)),
            Err(Error::SingularMatrix)
        );
    }

    #[test]
    fn identity_constants() {
        let k = constants_identity_for(&diag(&[1.0, 0.01])).unwrap();
        assert_eq!((k.nu1, k.nu2, k.lambda_minus), (1.0, 1.0, 1.0));
        assert_relative_eq!(k.c3, 1.01);
        assert_relative_eq!(k.c4, 0.01);
        let k = constants_identity_for(&SymMatrix::identity(3)).unwrap();
        assert_eq!((k.c3, k.c4), (3.0, 1.0));
    }

    #[test]
    fn full_matrix_constants() {
        let k = constants_full_matrix_for(&diag(&[1.0, 0.01]), 0.0).unwrap();
        assert_relative_eq!(k.nu1, 10.0, epsilon = 1e-12);
        assert_relative_eq!(k.c3, 2.0);
        assert_relative_eq!(k.c4, 1.0);
        assert_relative_eq!(k.lambda_minus, 1.0);
        let k = constants_full_matrix_for(&SymMatrix::identity(4), 0.0).unwrap();
        assert_eq!((k.nu1, k.c3, k.c4, k.lambda_minus), (1.0, 4.0, 1.0, 1.0));
        let k = constants_full_matrix_for(&diag(&[1.0, 0.01]), 1e12).unwrap();
        assert!(k.c3 < 1e-11 && k.c4 < 1e-13 && k.lambda_minus < 1e-5);
        assert_eq!(
            constants_full_matrix_for(&diag(&[1.0, 0.0]), 0.0),
            Err(Error::SingularMatrix)
        );
    }

    #[test]
    fn diagonal_constants() {
        let g = diag(&[1.0, 0.01]);
        assert_eq!(
            constants_diagonal_for(&g, 0.0).unwrap(),
            constants_full_matrix_for(&g, 0.0).unwrap()
        );
        assert_eq!(
            constants_diagonal_for(&g, 0.3).unwrap(),
            constants_full_matrix_for(&g, 0.3).unwrap()
        );
        let k = constants_diagonal_for(&g, 0.0).unwrap();
        assert_relative_eq!(k.nu1, 10.0, epsilon = 1e-12);
        assert_relative_eq!(k.c3, 2.0);
        assert_relative_eq!(k.c4, 1.0);
        let coupled = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let k = constants_diagonal_for(&coupled, 0.0).unwrap();
        assert_relative_eq!(k.c4, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn complexity_factor() {
        let k = constants_identity_for(&SymMatrix::identity(1)).unwrap();
        assert_eq!(second_order_complexity_factor(&k).unwrap(), 1.0);
        let g = SymMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let k = constants_full_matrix_for(&g, 0.0).unwrap();
        let (lmin, lmax) = (g.min_eigenvalue().unwrap(), g.max_eigenvalue().unwrap());
        let want = 16.0 * (lmax / lmin).powi(4) * lmax;
        assert_relative_eq!(second_order_complexity_factor(&k).unwrap(), want, max_relative = 1e-9);
        let bad = PreconditionerConstants { c4: 0.0, ..k };
        assert!(second_order_complexity_factor(&bad).is_err());
    }

    #[test]
    fn rmsprop_beats_sgd_bound_when_lambda_max_below_one() {
        // The comparison is against the SGD bound d⁴κ(G)⁴ ≥ (tr G / λ_min)⁴.
        let g = diag(&[0.5, 0.005]);
        let sgd_exact =
            second_order_complexity_factor(&constants_identity_for(&g).unwrap()).unwrap();
        let kappa: f64 = 0.5 / 0.005;
        let sgd_bound = 16.0 * kappa.powi(4);
        assert!(sgd_exact <= sgd_bound);
        let rms =
            second_order_complexity_factor(&constants_full_matrix_for(&g, 0.0).unwrap()).unwrap();
        assert!(rms < sgd_bound, "rms {rms} sgd bound {sgd_bound}");
    }
}
