mod common;

use adaprecon::linalg::{
    inv_perturbation_bound, invsqrt_preconditioner_bound, sqrt_perturbation_bound, sym_power,
};
use adaprecon::run_rng;
use common::{random_psd, random_sym_with_norm};
use proptest::prelude::*;
use rand::Rng;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(200)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn inverse_perturbation(seed: u64, d in 1usize..=8, frac in 0.0f64..0.999) {
        let mut rng = run_rng(seed, 0);
        let g = random_psd(d, 0.05, &mut rng);
        let lam = g.min_eigenvalue().unwrap();
        let eps = frac * lam / 2.0;
        let e = random_sym_with_norm(d, eps, &mut rng);
        let lhs = sym_power(&g, -1.0, 0.0).unwrap()
            .sub(&sym_power(&g.add(&e).unwrap(), -1.0, 0.0).unwrap()).unwrap()
            .op_norm().unwrap();
        let rhs = inv_perturbation_bound(lam, eps).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn sqrt_perturbation(seed: u64, d in 1usize..=8, frac in 0.0f64..0.999) {
        let mut rng = run_rng(seed, 1);
        let g = random_psd(d, 0.05, &mut rng);
        let lam = g.min_eigenvalue().unwrap();
        let eps = frac * 0.75 * lam;
        let e = random_sym_with_norm(d, eps, &mut rng);
        let lhs = sym_power(&g, 0.5, 0.0).unwrap()
            .sub(&sym_power(&g.add(&e).unwrap(), 0.5, 0.0).unwrap()).unwrap()
            .op_norm().unwrap();
        let rhs = sqrt_perturbation_bound(lam, eps).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn invsqrt_preconditioner_perturbation(seed: u64, d in 1usize..=8, frac in 0.0f64..0.999) {
        let mut rng = run_rng(seed, 2);
        let g = random_psd(d, 0.0, &mut rng);
        let delta = 10f64.powf(rng.random_range(-4.0..0.0));
        let lam = g.min_eigenvalue().unwrap().max(0.0);
        let eps = frac * (delta + lam) / 2.0;
        let e = random_sym_with_norm(d, eps, &mut rng);
        let lhs = sym_power(&g.add_identity(delta), -0.5, 0.0).unwrap()
            .sub(&sym_power(&g.add(&e).unwrap().add_identity(delta), -0.5, 0.0).unwrap()).unwrap()
            .op_norm().unwrap();
        let rhs = invsqrt_preconditioner_bound(lam, delta, eps).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn sqrt_then_square_reconstructs(seed: u64, d in 1usize..=8) {
        let mut rng = run_rng(seed, 3);
        let m = random_psd(d, 0.0, &mut rng);
        let back = sym_power(&sym_power(&m, 0.5, 0.0).unwrap(), 2.0, 0.0).unwrap();
        let err = back.sub(&m).unwrap().op_norm().unwrap();
        prop_assert!(err <= 1e-8 * m.op_norm().unwrap());
    }

    #[test]
    fn sqrt_is_monotone(seed: u64, d in 1usize..=8) {
        let mut rng = run_rng(seed, 4);
        let a = random_psd(d, 0.0, &mut rng);
        let b = a.add(&random_psd(d, 0.0, &mut rng)).unwrap();
        let la = sym_power(&a, 0.5, 0.0).unwrap().min_eigenvalue().unwrap();
        let lb = sym_power(&b, 0.5, 0.0).unwrap().min_eigenvalue().unwrap();
        prop_assert!(la <= lb * (1.0 + 1e-9) + 1e-12);
    }
}
