//! Computable forms of the auxiliary inequalities used in the convergence
//! analysis. Each oracle returns both sides so tests can assert `lhs ≤ rhs`
//! on random inputs.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{sym_power, SymMatrix};
use crate::preconditioner::check_point;
use crate::problems::StochasticProblem;
use crate::rng::RunRng;

/// Relative slack allowed for rounding in deterministic inequalities.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCase {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// Inputs, for diagnostics.
    pub inputs: Vec<(&'static str, f64)>,
}

impl InequalityCase {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + ROUNDING_SLACK)
    }
}

impl std::fmt::Display for InequalityCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {:e} <= {:e}", self.name, self.lhs, self.rhs)?;
        for (k, v) in &self.inputs {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// `Σ_{i=1}^t (1+b)^{t−i} i^k` for `k = 0, 1, 2` against
/// `2b⁻¹(1+b)^t`, `2b⁻²(1+b)^t` and `6b⁻³(1+b)^t`.
pub fn series_bounds(beta_pos: f64, t: usize) -> Result<[InequalityCase; 3]> {
    if !(beta_pos > 0.0 && beta_pos < 1.0) {
        return Err(Error::invalid(format!("beta_pos must lie in (0, 1), got {beta_pos}")));
    }
    if t == 0 {
        return Err(Error::invalid("t must be at least 1"));
    }
    let growth = (1.0 + beta_pos).powf(t as f64);
    if !growth.is_finite() {
        return Err(Error::invalid(format!("(1 + beta_pos)^t overflows for t = {t}")));
    }
    let sums = series_sums(beta_pos, t);
    let inputs = vec![("beta_pos", beta_pos), ("t", t as f64)];
    let rhs = [
        2.0 / beta_pos * growth,
        2.0 / beta_pos.powi(2) * growth,
        6.0 / beta_pos.powi(3) * growth,
    ];
    let names = ["series_geometric", "series_linear", "series_quadratic"];
    Ok(std::array::from_fn(|k| InequalityCase {
        name: names[k],
        lhs: sums[k],
        rhs: rhs[k],
        inputs: inputs.clone(),
    }))
}

/// Direct left-to-right sums `Σ_{i=1}^t (1+b)^{t−i} i^k`, `k = 0, 1, 2`.
pub fn series_sums(beta_pos: f64, t: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 1..=t {
        let w = (1.0 + beta_pos).powi((t - i) as i32);
        let fi = i as f64;
        out[0] += w;
        out[1] += w * fi;
        out[2] += w * fi * fi;
    }
    out
}

/// `√(Az² + Bz + C) ≤ √A (2z + B/(2A) + √(C/A))` for nonnegative inputs.
pub fn quadratic_sqrt_bound(a: f64, b: f64, c: f64, z: f64) -> Result<InequalityCase> {
    if !(a > 0.0) || !(b >= 0.0) || !(c >= 0.0) || !(z >= 0.0) {
        return Err(Error::invalid("need A > 0 and B, C, z ≥ 0"));
    }
    Ok(InequalityCase {
        name: "quadratic_sqrt",
        lhs: (a * z * z + b * z + c).sqrt(),
        rhs: a.sqrt() * (2.0 * z + b / (2.0 * a) + (c / a).sqrt()),
        inputs: vec![("A", a), ("B", b), ("C", c), ("z", z)],
    })
}

/// With `t = ⌈2 ln C / x⌉`, `(1 + x)^t ≥ C`.
pub fn exp_growth_bound(x: f64, c_target: f64) -> Result<InequalityCase> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::invalid(format!("x must lie in (0, 1), got {x}")));
    }
    if !(c_target > 1.0) || !c_target.is_finite() {
        return Err(Error::invalid(format!("C must be a finite value > 1, got {c_target}")));
    }
    let t = (2.0 * c_target.ln() / x).ceil();
    Ok(InequalityCase {
        name: "exp_growth",
        lhs: c_target,
        rhs: (1.0 + x).powf(t),
        inputs: vec![("x", x), ("C", c_target), ("t", t)],
    })
}

/// Monte-Carlo check that `E‖Âg‖² ≤ (9/4) c₃` when `‖Â − A‖ < λ_min(A)/2`
/// and `E‖Ag‖² ≤ c₃`, for `g ~ N(0, Σ)`.
///
/// `lhs` is the sample mean of `‖Âg‖²`; `rhs` is `(9/4)c₃` plus four
/// standard errors.
pub fn inexact_noise_amplification(
    a: &SymMatrix,
    a_hat: &SymMatrix,
    noise_cov: &SymMatrix,
    c3: f64,
    n_samples: usize,
    rng: &mut RunRng,
) -> Result<InequalityCase> {
    let d = a.dim();
    if a_hat.dim() != d || noise_cov.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            got: if a_hat.dim() != d { a_hat.dim() } else { noise_cov.dim() },
        });
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let lambda_minus = a.min_eigenvalue()?;
    if !(lambda_minus > 0.0) {
        return Err(Error::invalid("A must be positive definite"));
    }
    let mu = a_hat.sub(a)?.op_norm()?;
    if !(mu < lambda_minus / 2.0) {
        return Err(Error::invalid(format!(
            "perturbation {mu} is not below lambda_min(A)/2 = {}",
            lambda_minus / 2.0
        )));
    }
    if !noise_cov.is_psd(1e-12)? {
        return Err(Error::invalid("noise covariance must be PSD"));
    }
    // E‖Ag‖² = tr(AΣA).
    let exact = a.congruence(noise_cov)?.trace();
    if !(exact <= c3 * (1.0 + ROUNDING_SLACK)) {
        return Err(Error::invalid(format!("E|Ag|^2 = {exact} exceeds c3 = {c3}")));
    }
    let root = sym_power(noise_cov, 0.5, 0.0)?;
    let mut z = vec![0.0; d];
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 0..n_samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let g = root.mul_vec(&z)?;
        let v: f64 = a_hat.mul_vec(&g)?.iter().map(|x| x * x).sum();
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let se = (m2 / (n_samples - 1) as f64 / n_samples as f64).sqrt();
    Ok(InequalityCase {
        name: "inexact_noise_amplification",
        lhs: mean,
        rhs: 2.25 * c3 + 4.0 * se,
        inputs: vec![("c3", c3), ("mu", mu), ("lambda_minus", lambda_minus), ("se", se)],
    })
}

/// `λ_min(A)·|λ_min(H)| ≤ |λ_min(A^{1/2} H A^{1/2})|` for PD `A` and indefinite `H`.
pub fn negative_eigenvalue_bound(a: &SymMatrix, h: &SymMatrix) -> Result<InequalityCase> {
    if a.dim() != h.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), got: h.dim() });
    }
    let lam_a = a.min_eigenvalue()?;
    if !(lam_a > 0.0) {
        return Err(Error::invalid("A must be positive definite"));
    }
    let lam_h = h.min_eigenvalue()?;
    if !(lam_h < 0.0) {
        return Err(Error::invalid("H must have a negative eigenvalue"));
    }
    let root = sym_power(a, 0.5, 0.0)?;
    let lam_sandwich = root.congruence(h)?.min_eigenvalue()?;
    Ok(InequalityCase {
        name: "negative_eigenvalue",
        lhs: lam_a * lam_h.abs(),
        rhs: lam_sandwich.min(0.0).abs(),
        inputs: vec![("lambda_min_A", lam_a), ("lambda_min_H", lam_h)],
    })
}

/// Max entrywise gap between the empirical covariance of
/// `ξ = G^{−1/2}(g − ∇f)` and `I − G^{−1/2}∇∇ᵀG^{−1/2}`.
pub fn isotropy_covariance_check(
    problem: &dyn StochasticProblem,
    x: &[f64],
    n_samples: usize,
    rng: &mut RunRng,
) -> Result<f64> {
    check_point(problem, x)?;
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let g = problem
        .exact_second_moment(x)
        .ok_or(Error::MissingOracle("exact second moment G(x)"))?;
    let eig = g.eigen()?;
    let (lo, hi) = (eig.eigenvalues[0], eig.eigenvalues[eig.dim() - 1]);
    if !(lo > 1e-12 * hi.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularMatrix);
    }
    let w = sym_power(&g, -0.5, 0.0)?;
    let d = problem.dim();
    let grad = problem.grad(x);
    let u = w.mul_vec(&grad)?;

    let mut mean = vec![0.0; d];
    let mut scatter = vec![0.0; d * d];
    for k in 0..n_samples {
        let s = problem.sample_grad(x, rng);
        let diff: Vec<f64> = s.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let xi = w.mul_vec(&diff)?;
        // Welford update of mean and scatter matrix.
        let n = (k + 1) as f64;
        let before: Vec<f64> = xi.iter().zip(&mean).map(|(a, m)| a - m).collect();
        for (m, b) in mean.iter_mut().zip(&before) {
            *m += b / n;
        }
        let after: Vec<f64> = xi.iter().zip(&mean).map(|(a, m)| a - m).collect();
        for i in 0..d {
            for j in 0..d {
                scatter[i * d + j] += before[i] * after[j];
            }
        }
    }
    let denom = (n_samples - 1) as f64;
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 } - u[i] * u[j];
            worst = worst.max((scatter[i * d + j] / denom - target).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic_gaussian, make_saddle_problem};
    use crate::rng::run_rng;
    use approx::assert_relative_eq;

    #[test]
    fn series_small_cases() {
        let [a, b, c] = series_bounds(0.5, 1).unwrap();
        assert_eq!(a.lhs, 1.0);
        assert_relative_eq!(a.rhs, 6.0);
        assert_eq!(b.lhs, 1.0);
        assert_eq!(c.lhs, 1.0);
        assert!(a.holds() && b.holds() && c.holds());
        for case in series_bounds(0.9, 100).unwrap() {
            assert!(case.holds(), "{case}");
        }
        assert!(series_bounds(1.0, 3).is_err());
        assert!(series_bounds(0.5, 0).is_err());
    }

    #[test]
    fn quadratic_sqrt_examples() {
        let c = quadratic_sqrt_bound(1.0, 4.0, 4.0, 1.0).unwrap();
        assert_relative_eq!(c.lhs, 3.0);
        assert_relative_eq!(c.rhs, 6.0);
        let c = quadratic_sqrt_bound(1.0, 0.0, 0.0, 2.5).unwrap();
        assert_eq!((c.lhs, c.rhs), (2.5, 5.0));
        assert!(quadratic_sqrt_bound(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn exp_growth_examples() {
        let c = exp_growth_bound(0.5, 2.0).unwrap();
        assert_eq!(c.inputs[2].1, 3.0);
        assert_relative_eq!(c.rhs, 3.375);
        assert!(c.holds());
        let c = exp_growth_bound(0.3, 1.0 + 1e-12).unwrap();
        assert!(c.holds() && c.rhs >= 1.0);
        assert!(exp_growth_bound(1.0, 2.0).is_err());
        assert!(exp_growth_bound(0.5, 1.0).is_err());
    }

    #[test]
    fn noise_amplification_extremes() {
        let a = SymMatrix::from_diag(&[1.0, 2.0]).unwrap();
        let cov = SymMatrix::from_diag(&[1.0, 0.5]).unwrap();
        let c3 = a.congruence(&cov).unwrap().trace();
        let mut rng = run_rng(1, 0);
        let same = inexact_noise_amplification(&a, &a, &cov, c3, 20_000, &mut rng).unwrap();
        assert!(same.holds());
        assert!((same.lhs - c3).abs() < 5.0 * same.inputs[3].1);
        // Â = (3/2)A sits exactly at the allowed scaling.
        let wide = a.scale(1.5);
        let near = a.add_identity(0.499);
        assert!(inexact_noise_amplification(&a, &wide, &cov, c3, 100, &mut rng).is_err());
        let case = inexact_noise_amplification(&a, &near, &cov, c3, 20_000, &mut rng).unwrap();
        assert!(case.holds(), "{case}");
        let scaled = a.scale(1.5).congruence(&cov).unwrap().trace();
        assert_relative_eq!(scaled, 2.25 * c3, max_relative = 1e-14);
    }

    #[test]
    fn negative_eigenvalue_examples() {
        let h = SymMatrix::from_diag(&[1.0, -1.0]).unwrap();
        let c = negative_eigenvalue_bound(&SymMatrix::identity(2), &h).unwrap();
        assert_eq!(c.lhs, c.rhs);
        let a = SymMatrix::from_diag(&[2.0, 0.5]).unwrap();
        let c = negative_eigenvalue_bound(&a, &h).unwrap();
        assert_relative_eq!(c.lhs, 0.5);
        assert_relative_eq!(c.rhs, 0.5);
        assert!(c.holds());
        assert!(negative_eigenvalue_bound(&a, &SymMatrix::identity(2)).is_err());
    }

    #[test]
    fn isotropy_at_saddle_origin() {
        let p = make_saddle_problem();
        let n = 100_000;
        let dev = isotropy_covariance_check(&p, &[0.0, 0.0], n, &mut run_rng(4, 0)).unwrap();
        assert!(dev <= 5.0 * (2.0 / n as f64).sqrt(), "deviation {dev}");
    }

    #[test]
    fn isotropy_needs_invertible_moment() {
        let q = make_quadratic_gaussian(SymMatrix::identity(2), SymMatrix::zeros(2)).unwrap();
        let err = isotropy_covariance_check(&q, &[1.0, 0.5], 100, &mut run_rng(0, 0)).unwrap_err();
        assert_eq!(err, Error::SingularMatrix);
    }
}
