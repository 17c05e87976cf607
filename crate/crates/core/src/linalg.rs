//! Dense symmetric-matrix numerics.
//!
//! [`SymMatrix`] is the carrier for every second-moment, preconditioner and
//! Hessian matrix in the crate. Matrices are symmetrized on construction and
//! cache their eigendecomposition, which all spectral functions go through.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense symmetric `dim × dim` matrix stored row-major.
#[derive(Clone)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
    eigen: OnceLock<EigenDecomposition>,
}

/// Spectral decomposition `M = V diag(λ) Vᵀ` with eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Row-major `dim × dim`; column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.eigenvectors[i * d + k]).collect()
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += v[i * d + k] * mapped[k] * v[j * d + k];
                }
                out[i * d + j] = s;
                out[j * d + i] = s;
            }
        }
        SymMatrix::from_symmetric_unchecked(d, out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_spectrum(|l| l)
    }
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, storing `(M + Mᵀ)/2`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::DimMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        let mut sym = data;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (sym[i * dim + j] + sym[j * dim + i]);
                sym[i * dim + j] = avg;
                sym[j * dim + i] = avg;
            }
        }
        Ok(Self::from_symmetric_unchecked(dim, sym))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix rows must all have length equal to the row count"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self::new(dim, data)
    }

    pub(crate) fn from_symmetric_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self {
            dim,
            data,
            eigen: OnceLock::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        Self::from_symmetric_unchecked(dim, vec![0.0; dim * dim])
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = s;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        if d == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diagonal entries".into()));
        }
        let mut m = Self::zeros(d);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * d + i] = v;
        }
        Ok(m)
    }

    /// `v vᵀ`.
    pub fn outer(v: &[f64]) -> Result<Self> {
        let d = v.len();
        if d == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("outer-product vector".into()));
        }
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = v[i] * v[j];
            }
        }
        Ok(Self::from_symmetric_unchecked(d, data))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// The matrix with all off-diagonal entries zeroed.
    pub fn diagonal_part(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            m.data[i * self.dim + i] = self.get(i, i);
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.get(i, j) == 0.0))
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.linear_combination(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.linear_combination(1.0, other, -1.0)
    }

    /// `a·self + b·other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_dim(other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_symmetric_unchecked(self.dim, data))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_symmetric_unchecked(self.dim, self.data.iter().map(|x| s * x).collect())
    }

    /// `self + s·I`.
    pub fn add_identity(&self, s: f64) -> Self {
        let mut m = Self::from_symmetric_unchecked(self.dim, self.data.clone());
        for i in 0..self.dim {
            m.data[i * self.dim + i] += s;
        }
        m
    }

    /// In-place `self ← a·self + b·v vᵀ`, the EMA update kernel.
    pub(crate) fn rank_one_blend(&mut self, a: f64, b: f64, v: &[f64]) {
        let d = self.dim;
        for i in 0..d {
            let bi = b * v[i];
            for j in 0..d {
                let idx = i * d + j;
                self.data[idx] = a * self.data[idx] + bi * v[j];
            }
        }
        // Products are computed symmetrically; restore exact symmetry after rounding anyway.
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg;
            }
        }
        self.eigen = OnceLock::new();
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(self
            .data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        let mv = self.mul_vec(v)?;
        Ok(mv.iter().zip(v).map(|(a, b)| a * b).sum())
    }

    /// General (not necessarily symmetric) product `self · other`, row-major.
    pub fn matmul(&self, other: &Self) -> Result<Vec<f64>> {
        self.check_dim(other)?;
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out[i * d + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// `self · m · self`, symmetric whenever both factors are.
    pub fn congruence(&self, m: &Self) -> Result<Self> {
        self.check_dim(m)?;
        let d = self.dim;
        let sm = self.matmul(m)?;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = sm[i * d + k];
                for j in 0..d {
                    out[i * d + j] += a * self.get(k, j);
                }
            }
        }
        Self::new(d, out)
    }

    /// Cached eigendecomposition.
    pub fn eigen(&self) -> Result<&EigenDecomposition> {
        if let Some(e) = self.eigen.get() {
            return Ok(e);
        }
        let e = self.compute_eigen()?;
        Ok(self.eigen.get_or_init(|| e))
    }

    fn compute_eigen(&self) -> Result<EigenDecomposition> {
        let d = self.dim;
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        if self.is_diagonal() {
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| self.get(a, a).total_cmp(&self.get(b, b)));
            let mut vectors = vec![0.0; d * d];
            for (k, &i) in order.iter().enumerate() {
                vectors[i * d + k] = 1.0;
            }
            return Ok(EigenDecomposition {
                eigenvalues: order.iter().map(|&i| self.get(i, i)).collect(),
                eigenvectors: vectors,
            });
        }
        let m = DMatrix::from_row_slice(d, d, &self.data);
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut vectors = vec![0.0; d * d];
        for (k, &src) in order.iter().enumerate() {
            for i in 0..d {
                vectors[i * d + k] = eig.eigenvectors[(i, src)];
            }
        }
        Ok(EigenDecomposition {
            eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
            eigenvectors: vectors,
        })
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.eigenvalues[0])
    }

    pub fn max_eigenvalue(&self) -> Result<f64> {
        Ok(*self.eigen()?.eigenvalues.last().expect("dim >= 1"))
    }

    /// See [`sym_power`].
    pub fn power(&self, p: f64, clamp_floor: f64) -> Result<Self> {
        sym_power(self, p, clamp_floor)
    }

    /// See [`op_norm`].
    pub fn op_norm(&self) -> Result<f64> {
        op_norm(self)
    }

    /// True when every eigenvalue is at least `-tol`.
    pub fn is_psd(&self, tol: f64) -> Result<bool> {
        Ok(self.min_eigenvalue()? >= -tol)
    }
}

impl PartialEq for SymMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymMatrix")
            .field("dim", &self.dim)
            .field("rows", &self.to_rows())
            .finish()
    }
}

/// `V · diag(max(λᵢ, clamp_floor)^p) · Vᵀ`.
///
/// Negative exponents require every clamped eigenvalue to be strictly
/// positive, otherwise [`Error::SingularMatrix`].
pub fn sym_power(m: &SymMatrix, p: f64, clamp_floor: f64) -> Result<SymMatrix> {
    if !p.is_finite() {
        return Err(Error::invalid("exponent must be finite"));
    }
    if !(clamp_floor >= 0.0) || !clamp_floor.is_finite() {
        return Err(Error::invalid("clamp_floor must be finite and nonnegative"));
    }
    let eig = m.eigen()?;
    let clamped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| l.max(clamp_floor))
        .collect();
    if p < 0.0 && clamped.iter().any(|&l| l <= 0.0) {
        return Err(Error::SingularMatrix);
    }
    let is_integer = p.fract() == 0.0;
    if !is_integer && clamped.iter().any(|&l| l < 0.0) {
        return Err(Error::precondition(
            "fractional power of a matrix with negative eigenvalues (raise clamp_floor)",
        ));
    }
    let out = eig.map_spectrum(|l| {
        let l = l.max(clamp_floor);
        if is_integer {
            l.powi(p as i32)
        } else {
            l.powf(p)
        }
    });
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix power overflowed".into()));
    }
    Ok(out)
}

/// Operator (spectral) norm `max |λᵢ|`.
pub fn op_norm(m: &SymMatrix) -> Result<f64> {
    let eig = m.eigen()?;
    let lo = eig.eigenvalues[0].abs();
    let hi = eig.eigenvalues[eig.dim() - 1].abs();
    Ok(lo.max(hi))
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// Bound on `‖G⁻¹ − Ĝ⁻¹‖` given `‖G − Ĝ‖ ≤ eps`, valid while `eps/λ_min(G) < 1/2`.
///
/// Returns `2·eps/λ_min(G)²`: from `δ ≤ ‖G⁻¹‖²ε/(1 − ε‖G⁻¹‖)` with the
/// denominator at least 1/2.
pub fn inv_perturbation_bound(lambda_min_g: f64, eps: f64) -> Result<f64> {
    if !(lambda_min_g > 0.0) || !lambda_min_g.is_finite() {
        return Err(Error::invalid("lambda_min_G must be positive"));
    }
    check_nonneg("eps", eps)?;
    if eps >= 0.5 * lambda_min_g {
        return Err(Error::precondition(format!(
            "eps·‖G⁻¹‖ < 1/2 required (eps = {eps}, λ_min = {lambda_min_g})"
        )));
    }
    Ok(2.0 * eps / (lambda_min_g * lambda_min_g))
}

/// Bound on `‖G^{1/2} − Ĝ^{1/2}‖` given `‖G − Ĝ‖ ≤ eps < ¾·λ_min(G)`.
pub fn sqrt_perturbation_bound(lambda_min_g: f64, eps: f64) -> Result<f64> {
    if !(lambda_min_g > 0.0) || !lambda_min_g.is_finite() {
        return Err(Error::invalid("lambda_min_G must be positive"));
    }
    check_nonneg("eps", eps)?;
    if eps >= 0.75 * lambda_min_g {
        return Err(Error::precondition(format!(
            "eps < 3/4·λ_min required (eps = {eps}, λ_min = {lambda_min_g})"
        )));
    }
    Ok(eps / lambda_min_g.sqrt())
}

/// Bound on `‖(G+δI)^{-1/2} − (Ĝ+δI)^{-1/2}‖` given `‖G − Ĝ‖ ≤ eps`.
///
/// Composes the square-root bound (on `G+δI`) with the inverse bound (on
/// `(G+δI)^{1/2}`), giving `2·eps/(δ + λ_min)^{3/2}` for `eps < (δ + λ_min)/2`.
pub fn invsqrt_preconditioner_bound(lambda_min_g: f64, delta_reg: f64, eps: f64) -> Result<f64> {
    check_nonneg("lambda_min_G", lambda_min_g)?;
    check_nonneg("delta_reg", delta_reg)?;
    check_nonneg("eps", eps)?;
    let shifted = lambda_min_g + delta_reg;
    if !(shifted > 0.0) {
        return Err(Error::precondition("delta_reg + λ_min(G) must be positive"));
    }
    // The inverse step sees perturbation eps/√shifted on a matrix with λ_min = √shifted.
    if eps >= 0.5 * shifted {
        return Err(Error::precondition(format!(
            "eps < (δ + λ_min)/2 required (eps = {eps}, δ + λ_min = {shifted})"
        )));
    }
    Ok(2.0 * eps / shifted.powf(1.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> SymMatrix {
        SymMatrix::from_diag(v).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::new(2, vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            SymMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            SymMatrix::new(2, vec![1.0; 3]),
            Err(Error::DimMismatch { .. })
        ));
        assert!(SymMatrix::new(0, vec![]).is_err());
    }

    #[test]
    fn power_of_diagonal() {
        let r = sym_power(&diag(&[4.0, 9.0]), -0.5, 0.0).unwrap();
        assert_relative_eq!(r.get(0, 0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.get(1, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.get(0, 1), 0.0);
    }

    #[test]
    fn power_of_identity() {
        let r = sym_power(&SymMatrix::identity(3), -0.5, 0.0).unwrap();
        assert_eq!(r, SymMatrix::identity(3));
    }

    #[test]
    fn inverse_sqrt_of_coupled_2x2() {
        let g = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let a = sym_power(&g, -0.5, 0.0).unwrap();
        let e = a.eigen().unwrap();
        assert_relative_eq!(e.eigenvalues[0], 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-12);
        let back = sym_power(&a, -2.0, 0.0).unwrap();
        assert!(back.sub(&g).unwrap().op_norm().unwrap() < 1e-12);
    }

    #[test]
    fn negative_power_of_singular_matrix_errors() {
        let m = diag(&[1.0, 0.0]);
        assert_eq!(sym_power(&m, -0.5, 0.0), Err(Error::SingularMatrix));
        // A positive floor makes it well defined.
        let r = sym_power(&m, -0.5, 0.25).unwrap();
        assert_relative_eq!(r.get(1, 1), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn clamping_fixes_slightly_indefinite_input() {
        let m = diag(&[1.0, -1e-14]);
        let r = sym_power(&m, 0.5, 0.0).unwrap();
        assert_eq!(r.get(1, 1), 0.0);
    }

    #[test]
    fn op_norm_examples() {
        assert_eq!(op_norm(&diag(&[-3.0, 2.0])).unwrap(), 3.0);
        assert_eq!(op_norm(&SymMatrix::zeros(4)).unwrap(), 0.0);
    }

    #[test]
    fn eigen_is_orthonormal_and_reconstructs() {
        let m = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0],
            vec![1.0, 2.0, 0.5],
            vec![-2.0, 0.5, 3.0],
        ])
        .unwrap();
        let e = m.eigen().unwrap();
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let back = e.reconstruct();
        assert!(back.sub(&m).unwrap().op_norm().unwrap() <= 1e-10 * m.op_norm().unwrap());
        // VᵀV = I
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3)
                    .map(|i| e.eigenvectors[i * 3 + a] * e.eigenvectors[i * 3 + b])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inv_bound_examples() {
        assert_relative_eq!(inv_perturbation_bound(1.0, 0.1).unwrap(), 0.2);
        assert!((1.0 - 1.0 / 1.1f64).abs() <= 0.2);
        assert_eq!(inv_perturbation_bound(1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(inv_perturbation_bound(4.0, 0.5).unwrap(), 0.0625);
        assert!((0.25 - 1.0 / 4.5f64).abs() <= 0.0625);
        assert!(matches!(
            inv_perturbation_bound(1.0, 0.5),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn inv_bound_paper_constant_is_too_small() {
        // G = I, Ĝ = 1.1 I: the true gap exceeds eps/(2 λ_min²) = 0.05.
        let actual = 1.0 - 1.0 / 1.1f64;
        assert!(actual > 0.1 / 2.0);
        assert!(actual <= inv_perturbation_bound(1.0, 0.1).unwrap());
    }

    #[test]
    fn sqrt_bound_examples() {
        assert_relative_eq!(sqrt_perturbation_bound(4.0, 0.5).unwrap(), 0.25);
        assert!((4.5f64.sqrt() - 2.0).abs() <= 0.25);
        assert_eq!(sqrt_perturbation_bound(4.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(sqrt_perturbation_bound(1.0, 0.5).unwrap(), 0.5);
        assert!((1.5f64.sqrt() - 1.0).abs() <= 0.5);
        assert!(sqrt_perturbation_bound(1.0, 0.75).is_err());
    }

    #[test]
    fn invsqrt_bound_examples() {
        let b = invsqrt_preconditioner_bound(4.0, 0.0, 0.5).unwrap();
        assert_relative_eq!(b, 0.125);
        assert!((0.5 - 1.0 / 4.5f64.sqrt()).abs() <= b);
        // Downward perturbation, the case a ε/(2λ^{3/2}) constant misses.
        assert!((1.0 / 3.5f64.sqrt() - 0.5).abs() <= b);
        assert!((1.0 / 3.5f64.sqrt() - 0.5).abs() > 0.5 / (2.0 * 8.0));
        assert_eq!(invsqrt_preconditioner_bound(4.0, 0.0, 0.0).unwrap(), 0.0);
        let b = invsqrt_preconditioner_bound(0.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(b, 0.2);
        assert!((1.0 - 1.0 / 1.1f64.sqrt()).abs() <= b);
        assert!(invsqrt_preconditioner_bound(0.0, 0.0, 0.0).is_err());
        assert!(invsqrt_preconditioner_bound(1.0, 0.0, 0.6).is_err());
    }
}
