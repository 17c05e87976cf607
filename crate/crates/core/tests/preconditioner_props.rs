mod common;

use adaprecon::linalg::sym_power;
use adaprecon::preconditioner::{
    constants_diagonal_for, constants_full_matrix_for, constants_identity_for,
};
use adaprecon::problems::make_saddle_problem;
use adaprecon::{run_rng, EmaEstimator, PreconditionerConstants, PreconditionerKind, StochasticProblem, SymMatrix};
use common::{norm, normal_vec, random_psd};
use proptest::prelude::*;
use rand::Rng;

fn check_constants(
    g: &SymMatrix,
    a: &SymMatrix,
    k: &PreconditionerConstants,
    grad: &[f64],
) -> Result<(), TestCaseError> {
    let a_half = sym_power(a, 0.5, 0.0).unwrap();
    let lhs = norm(&a.mul_vec(grad).unwrap()).powi(2);
    let rhs = k.nu1 * norm(&a_half.mul_vec(grad).unwrap()).powi(2);
    prop_assert!(lhs <= rhs * (1.0 + 1e-9), "nu1: {lhs} > {rhs}");
    let aga = a.congruence(g).unwrap();
    let lam = aga.min_eigenvalue().unwrap();
    prop_assert!(lam >= k.c4 * (1.0 - 1e-9), "c4: {lam} < {}", k.c4);
    let tr = aga.trace();
    prop_assert!(tr <= k.c3 * (1.0 + 1e-9), "c3: {tr} > {}", k.c3);
    let lam_a = a.min_eigenvalue().unwrap();
    prop_assert!(lam_a >= k.lambda_minus * (1.0 - 1e-9), "lambda_minus: {lam_a} < {}", k.lambda_minus);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn defining_inequalities_hold(seed: u64, d in 1usize..=6) {
        let mut rng = run_rng(seed, 0);
        let g = random_psd(d, 1e-3, &mut rng);
        let grad = normal_vec(d, &mut rng);
        let eps = 10f64.powf(rng.random_range(-6.0..0.0));

        check_constants(&g, &SymMatrix::identity(d), &constants_identity_for(&g).unwrap(), &grad)?;

        let kind = PreconditionerKind::full_matrix(eps);
        let a = kind.from_moment(&g).unwrap();
        check_constants(&g, &a, &constants_full_matrix_for(&g, eps).unwrap(), &grad)?;

        let kind = PreconditionerKind::diagonal(eps);
        let a = kind.from_moment(&g).unwrap();
        check_constants(&g, &a, &constants_diagonal_for(&g, eps).unwrap(), &grad)?;
    }
}

#[test]
fn ema_is_consistent_at_a_fixed_point() {
    let p = make_saddle_problem();
    let mut rng = run_rng(17, 0);
    let x = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
    let beta = 0.99;
    let mut est = EmaEstimator::new(2, beta).unwrap();
    for _ in 0..5000 {
        est.observe(&p.sample_grad(&x, &mut rng)).unwrap();
    }
    let g = p.exact_second_moment(&x).unwrap();
    // Exact σ_max² = ‖E[(ggᵀ − G)²]‖ over the four-point noise support.
    let m = p.grad(&x);
    let mut acc = SymMatrix::zeros(2);
    for b in adaprecon::problems::SADDLE_NOISE_SUPPORT {
        let s = [m[0] + b[0], m[1] + b[1]];
        let dev = SymMatrix::outer(&s).unwrap().sub(&g).unwrap();
        let sq = SymMatrix::new(2, dev.matmul(&dev).unwrap()).unwrap();
        acc = acc.linear_combination(1.0, &sq, 0.25).unwrap();
    }
    let sigma_max = acc.op_norm().unwrap().sqrt();
    let err = est.g_hat().sub(&g).unwrap().op_norm().unwrap();
    let bound = 5.0 * (1.0 - beta as f64).sqrt() * sigma_max * 2f64.ln().sqrt();
    assert!(err <= bound, "{err} > {bound}");
}

#[test]
fn covariance_pair_estimator_is_unbiased() {
    let p = make_saddle_problem();
    let x = [0.4, -0.3];
    let mut rng = run_rng(3, 0);
    let n = 100_000;
    let mut acc = [0.0; 3];
    let mut acc2 = [0.0; 3];
    for _ in 0..n {
        let mut e = EmaEstimator::new(2, 0.0).unwrap();
        e.observe_pair(&p.sample_grad(&x, &mut rng), &p.sample_grad(&x, &mut rng)).unwrap();
        let v = [e.g_hat().get(0, 0), e.g_hat().get(0, 1), e.g_hat().get(1, 1)];
        for k in 0..3 {
            acc[k] += v[k];
            acc2[k] += v[k] * v[k];
        }
    }
    let want = [1.0, 0.0, 0.01];
    for k in 0..3 {
        let mean = acc[k] / n as f64;
        let se = ((acc2[k] / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - want[k]).abs() <= 4.0 * se + 1e-15, "entry {k}: {mean} (se {se})");
    }
}
