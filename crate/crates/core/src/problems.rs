//! Stochastic optimization problems.
//!
//! Each problem exposes its exact objective and gradient, an unbiased
//! stochastic-gradient sampler, and where it is computable the exact
//! second-moment matrix `G(x) = E[g gᵀ]` and the Hessian.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::{run_rng, RunRng};

/// Regularity constants of a problem. Values that are not known globally are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProblemSmoothness {
    /// Gradient Lipschitz constant.
    pub l: f64,
    /// Hessian Lipschitz constant.
    pub rho: f64,
    /// Lipschitz constant of the preconditioner `x ↦ A(x)`.
    pub alpha: Option<f64>,
    /// Lipschitz constant of `x ↦ G(x)`.
    pub l_g: Option<f64>,
    /// Bound on `‖E[(ggᵀ − G)²]‖^{1/2}`.
    pub sigma_max: Option<f64>,
    /// Bound on `‖ggᵀ − G‖` per sample.
    pub r_dev: Option<f64>,
    /// Uniform bound on `‖A g‖`; problem and preconditioner specific, usually user supplied.
    pub m_step: Option<f64>,
}

pub trait StochasticProblem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn grad(&self, x: &[f64]) -> Vec<f64>;

    /// Unbiased stochastic gradient at `x`.
    fn sample_grad(&self, x: &[f64], rng: &mut RunRng) -> Vec<f64>;

    /// Exact `G(x) = E[g gᵀ]`, when available in closed form.
    fn exact_second_moment(&self, _x: &[f64]) -> Option<SymMatrix> {
        None
    }

    fn hessian(&self, _x: &[f64]) -> Option<SymMatrix> {
        None
    }

    fn smoothness(&self) -> ProblemSmoothness;

    /// Coordinatewise box constraint the optimizer projects onto after each step.
    fn domain(&self) -> Option<(f64, f64)> {
        None
    }

    fn project(&self, x: &mut [f64]) {
        if let Some((lo, hi)) = self.domain() {
            for v in x.iter_mut() {
                *v = v.clamp(lo, hi);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Saddle problem

/// Noise support: uniform over these four points gives mean 0 and covariance diag(1, 0.01).
pub const SADDLE_NOISE_SUPPORT: [[f64; 2]; 4] = [[1.0, 0.1], [1.0, -0.1], [-1.0, 0.1], [-1.0, -0.1]];
pub const SADDLE_CURVATURE: [f64; 2] = [1.0, -0.1];

/// `f(x) = ½ xᵀHx + E[b]ᵀx + Σⱼ xⱼ¹⁰` with `H = diag(1, −0.1)`.
///
/// Saddle at the origin with `f = 0`; the noise is small along the escape
/// direction `e₂`. The global minima sit at `x = (0, ±0.01^{1/8})` with
/// `f* = 0.01^{5/4} − 0.05·0.01^{1/4} ≈ −0.01265`.
#[derive(Debug, Clone, Default)]
pub struct SaddleProblem2D;

impl SaddleProblem2D {
    fn mean_grad(x: &[f64]) -> [f64; 2] {
        [
            SADDLE_CURVATURE[0] * x[0] + 10.0 * x[0].powi(9),
            SADDLE_CURVATURE[1] * x[1] + 10.0 * x[1].powi(9),
        ]
    }

    /// Smallest objective value, attained at `(0, ±0.01^{1/8})`.
    pub fn min_value() -> f64 {
        let x2 = 0.01f64.powf(0.125);
        0.5 * SADDLE_CURVATURE[1] * x2 * x2 + x2.powi(10)
    }
}

pub fn make_saddle_problem() -> SaddleProblem2D {
    SaddleProblem2D
}

impl StochasticProblem for SaddleProblem2D {
    fn name(&self) -> &str {
        "saddle"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * (SADDLE_CURVATURE[0] * x[0] * x[0] + SADDLE_CURVATURE[1] * x[1] * x[1])
            + x[0].powi(10)
            + x[1].powi(10)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        Self::mean_grad(x).to_vec()
    }

    fn sample_grad(&self, x: &[f64], rng: &mut RunRng) -> Vec<f64> {
        let b = SADDLE_NOISE_SUPPORT[rng.random_range(0..SADDLE_NOISE_SUPPORT.len())];
        let m = Self::mean_grad(x);
        vec![m[0] + b[0], m[1] + b[1]]
    }

    fn exact_second_moment(&self, x: &[f64]) -> Option<SymMatrix> {
        let m = Self::mean_grad(x);
        let n = SADDLE_NOISE_SUPPORT.len() as f64;
        let mut acc = [0.0; 4];
        for b in SADDLE_NOISE_SUPPORT {
            let g = [m[0] + b[0], m[1] + b[1]];
            acc[0] += g[0] * g[0];
            acc[1] += g[0] * g[1];
            acc[3] += g[1] * g[1];
        }
        acc[2] = acc[1];
        SymMatrix::new(2, acc.iter().map(|v| v / n).collect()).ok()
    }

    fn hessian(&self, x: &[f64]) -> Option<SymMatrix> {
        SymMatrix::from_diag(&[
            SADDLE_CURVATURE[0] + 90.0 * x[0].powi(8),
            SADDLE_CURVATURE[1] + 90.0 * x[1].powi(8),
        ])
        .ok()
    }

    /// Constants over the box `[−1, 1]²` (the degree-10 term is not globally smooth).
    fn smoothness(&self) -> ProblemSmoothness {
        // On the box: |∂²f| ≤ 1 + 90, |∂³f| ≤ 720, ‖∇f‖ ≤ ‖(11, 10.1)‖.
        let mean_bound = (11.0f64 * 11.0 + 10.1 * 10.1).sqrt();
        let b_norm = 1.01f64.sqrt();
        ProblemSmoothness {
            l: 91.0,
            rho: 720.0,
            alpha: None,
            // G(x) = m mᵀ + Cov(b) with m = ∇f(x), so ‖dG‖ ≤ 2‖m‖‖∇²f‖‖dx‖.
            l_g: Some(2.0 * mean_bound * 91.0),
            // ggᵀ − G = m bᵀ + b mᵀ + (bbᵀ − Cov(b)), and ‖bbᵀ − Cov(b)‖ = 0.1.
            sigma_max: Some(2.0 * mean_bound * b_norm + 0.1),
            r_dev: Some(2.0 * mean_bound * b_norm + 0.1),
            m_step: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Counterexample

/// One-dimensional problem on `[−1, 1]` where the oracle returns `C` with
/// probability `p = (1+ζ)/(C+1)` and `−1` otherwise, so `F(x) = ζx`.
#[derive(Debug, Clone)]
pub struct CounterexampleProblem {
    pub c: f64,
    pub zeta: f64,
    pub p: f64,
}

pub fn make_counterexample(c: f64, zeta: f64) -> Result<CounterexampleProblem> {
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::invalid(format!("C must be > 1, got {c}")));
    }
    if !(zeta > 0.0 && zeta < c) {
        return Err(Error::invalid(format!("zeta must lie in (0, C), got {zeta}")));
    }
    let p = (1.0 + zeta) / (c + 1.0);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p = {p} outside (0, 1)")));
    }
    Ok(CounterexampleProblem { c, zeta, p })
}

impl CounterexampleProblem {
    /// `E[g²] = p·C² + (1−p)`, which equals `C(1+ζ) − ζ`.
    pub fn second_moment(&self) -> f64 {
        self.p * self.c * self.c + (1.0 - self.p)
    }
}

impl StochasticProblem for CounterexampleProblem {
    fn name(&self) -> &str {
        "counterexample"
    }

    fn dim(&self) -> usize {
        1
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.zeta * x[0]
    }

    fn grad(&self, _x: &[f64]) -> Vec<f64> {
        vec![self.zeta]
    }

    fn sample_grad(&self, _x: &[f64], rng: &mut RunRng) -> Vec<f64> {
        let u: f64 = rng.random();
        vec![if u < self.p { self.c } else { -1.0 }]
    }

    fn exact_second_moment(&self, _x: &[f64]) -> Option<SymMatrix> {
        SymMatrix::from_diag(&[self.second_moment()]).ok()
    }

    fn hessian(&self, _x: &[f64]) -> Option<SymMatrix> {
        Some(SymMatrix::zeros(1))
    }

    fn smoothness(&self) -> ProblemSmoothness {
        let g = self.second_moment();
        let c2 = self.c * self.c;
        let var = self.p * c2 * c2 + (1.0 - self.p) - g * g;
        ProblemSmoothness {
            l: 0.0,
            rho: 0.0,
            alpha: Some(0.0),
            l_g: Some(0.0),
            sigma_max: Some(var.max(0.0).sqrt()),
            r_dev: Some((c2 - g).max(g - 1.0)),
            m_step: None,
        }
    }

    fn domain(&self) -> Option<(f64, f64)> {
        Some((-1.0, 1.0))
    }
}

// ---------------------------------------------------------------------------
// Quadratic with Gaussian gradient noise

/// `f(x) = ½ xᵀHx`, `g = Hx + N(0, Σ)`.
#[derive(Debug, Clone)]
pub struct QuadraticGaussian {
    h: SymMatrix,
    noise_cov: SymMatrix,
    noise_factor: SymMatrix,
}

pub fn make_quadratic_gaussian(h: SymMatrix, noise_cov: SymMatrix) -> Result<QuadraticGaussian> {
    if h.dim() != noise_cov.dim() {
        return Err(Error::invalid(format!(
            "H is {}x{} but noise_cov is {}x{}",
            h.dim(),
            h.dim(),
            noise_cov.dim(),
            noise_cov.dim()
        )));
    }
    let scale = noise_cov.op_norm()?.max(1.0);
    if !noise_cov.is_psd(1e-12 * scale)? {
        return Err(Error::invalid("noise_cov must be positive semidefinite"));
    }
    let noise_factor = noise_cov.power(0.5, 0.0)?;
    Ok(QuadraticGaussian {
        h,
        noise_cov,
        noise_factor,
    })
}

impl QuadraticGaussian {
    pub fn curvature(&self) -> &SymMatrix {
        &self.h
    }

    pub fn noise_cov(&self) -> &SymMatrix {
        &self.noise_cov
    }

    /// Lipschitz constant of `G(x) = Hxxᵀ H + Σ` on the ball `‖x‖ ≤ radius`.
    pub fn second_moment_lipschitz(&self, radius: f64) -> f64 {
        let h = self.h.op_norm().unwrap_or(f64::INFINITY);
        2.0 * h * h * radius
    }

    /// `E[(ggᵀ − G)²] = G² + tr(G)·G − 2‖m‖²·mmᵀ` for `g ~ N(m, Σ)`, `m = Hx`.
    pub fn second_moment_variance(&self, x: &[f64]) -> Result<SymMatrix> {
        let m = self.h.mul_vec(x)?;
        let g = self.exact_second_moment(x).expect("closed form");
        let gg = SymMatrix::new(g.dim(), g.matmul(&g)?)?;
        let mm = SymMatrix::outer(&m)?;
        let m2 = dot(&m, &m);
        gg.linear_combination(1.0, &g, g.trace())?
            .linear_combination(1.0, &mm, -2.0 * m2)
    }

    /// `σ_max = ‖E[(ggᵀ − G)²]‖^{1/2}` at `x`.
    pub fn sigma_max_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.second_moment_variance(x)?.op_norm()?.sqrt())
    }
}

impl StochasticProblem for QuadraticGaussian {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.h.quad_form(x).expect("dimension checked by caller")
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.h.mul_vec(x).expect("dimension checked by caller")
    }

    fn sample_grad(&self, x: &[f64], rng: &mut RunRng) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        let noise = self.noise_factor.mul_vec(&z).expect("dimension");
        self.grad(x).iter().zip(noise).map(|(a, b)| a + b).collect()
    }

    fn exact_second_moment(&self, x: &[f64]) -> Option<SymMatrix> {
        let m = self.grad(x);
        SymMatrix::outer(&m).ok()?.add(&self.noise_cov).ok()
    }

    fn hessian(&self, _x: &[f64]) -> Option<SymMatrix> {
        Some(self.h.clone())
    }

    fn smoothness(&self) -> ProblemSmoothness {
        ProblemSmoothness {
            l: self.h.op_norm().unwrap_or(f64::INFINITY),
            rho: 0.0,
            ..Default::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Logistic regression

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::DataFormat("dataset must have at least one row and column".into()));
        }
        if features.len() != n * d {
            return Err(Error::DataFormat(format!(
                "expected {} feature values for {n}x{d}, got {}",
                n * d,
                features.len()
            )));
        }
        if labels.len() != n {
            return Err(Error::DataFormat(format!(
                "expected {n} labels, got {}",
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataFormat("non-finite feature value".into()));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::DataFormat("labels must be 0 or 1".into()));
        }
        Ok(Self {
            n,
            d,
            features,
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Loads a CSV with a header row: feature columns, then a final `label` column.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path.as_ref())
            .map_err(|e| Error::DataFormat(e.to_string()))?;
        let headers = reader
            .headers()
            .map_err(|e| Error::DataFormat(e.to_string()))?
            .clone();
        let ncols = headers.len();
        if ncols < 2 || headers.get(ncols - 1).map(str::trim) != Some("label") {
            return Err(Error::DataFormat(
                "last CSV column must be named `label` and follow at least one feature".into(),
            ));
        }
        let d = ncols - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::DataFormat(e.to_string()))?;
            if rec.len() != ncols {
                return Err(Error::DataFormat(format!(
                    "row {} has {} fields, expected {ncols}",
                    line + 2,
                    rec.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::DataFormat(format!("row {} column {}: not a number: {field:?}", line + 2, j + 1))
                })?;
                if j < d {
                    features.push(v);
                } else {
                    labels.push(v);
                }
            }
        }
        let n = labels.len();
        Self::new(n, d, features, labels)
    }
}

/// Linearly separable data with label noise: `y = 1[xᵀw* + noise_sd·z > 0]`,
/// `x, w*, z` standard normal. The final feature is a constant 1 (intercept).
pub fn synthetic_logistic_data(n: usize, d: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d < 2 {
        return Err(Error::invalid("synthetic data needs n ≥ 1 and d ≥ 2"));
    }
    let mut rng = run_rng(seed, 0);
    let w_star: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
        row.push(1.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        let score = dot(&row, &w_star) + noise_sd * z;
        labels.push(if score > 0.0 { 1.0 } else { 0.0 });
        features.extend(row);
    }
    Dataset::new(n, d, features, labels)
}

/// Mean cross-entropy of a linear logistic model; stochastic gradients are
/// minibatch averages drawn without replacement.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: Dataset,
    batch: usize,
    lipschitz: f64,
}

pub fn make_logistic_regression(data: Dataset, batch: usize) -> Result<LogisticRegression> {
    if batch == 0 || batch > data.n {
        return Err(Error::invalid(format!(
            "batch must be in 1..={}, got {batch}",
            data.n
        )));
    }
    // L = λ_max(XᵀX)/(4n)
    let d = data.d;
    let mut xtx = vec![0.0; d * d];
    for i in 0..data.n {
        let r = data.row(i);
        for a in 0..d {
            for b in 0..d {
                xtx[a * d + b] += r[a] * r[b];
            }
        }
    }
    let lipschitz = SymMatrix::new(d, xtx)?.max_eigenvalue()? / (4.0 * data.n as f64);
    Ok(LogisticRegression {
        data,
        batch,
        lipschitz,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticRegression {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    fn grad_over(&self, x: &[f64], rows: impl Iterator<Item = usize>, count: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.data.d];
        for i in rows {
            let r = self.data.row(i);
            let resid = sigmoid(dot(r, x)) - self.data.labels[i];
            for (gj, rj) in g.iter_mut().zip(r) {
                *gj += resid * rj;
            }
        }
        let inv = 1.0 / count as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }
}

impl StochasticProblem for LogisticRegression {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.data.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        let total: f64 = (0..self.data.n)
            .map(|i| {
                let z = dot(self.data.row(i), x);
                softplus(z) - self.data.labels[i] * z
            })
            .sum();
        total / self.data.n as f64
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.grad_over(x, 0..self.data.n, self.data.n)
    }

    fn sample_grad(&self, x: &[f64], rng: &mut RunRng) -> Vec<f64> {
        if self.batch == self.data.n {
            return self.grad(x);
        }
        let idx = index::sample(rng, self.data.n, self.batch);
        self.grad_over(x, idx.into_iter(), self.batch)
    }

    fn hessian(&self, x: &[f64]) -> Option<SymMatrix> {
        let d = self.data.d;
        let mut h = vec![0.0; d * d];
        for i in 0..self.data.n {
            let r = self.data.row(i);
            let s = sigmoid(dot(r, x));
            let w = s * (1.0 - s);
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] += w * r[a] * r[b];
                }
            }
        }
        let inv = 1.0 / self.data.n as f64;
        SymMatrix::new(d, h.into_iter().map(|v| v * inv).collect()).ok()
    }

    fn smoothness(&self) -> ProblemSmoothness {
        ProblemSmoothness {
            l: self.lipschitz,
            ..Default::default()
        }
    }
}
