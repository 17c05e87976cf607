mod common;

use adaprecon::problems::{
    make_counterexample, make_logistic_regression, make_quadratic_gaussian, make_saddle_problem,
    synthetic_logistic_data,
};
use adaprecon::{run_rng, StochasticProblem, SymMatrix};
use rand::Rng;

const N: usize = 100_000;

/// Componentwise mean and standard error of `n` stochastic gradients.
fn sample_stats(p: &dyn StochasticProblem, x: &[f64], n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let d = p.dim();
    let mut rng = run_rng(seed, 7);
    let (mut s, mut s2) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        let g = p.sample_grad(x, &mut rng);
        for j in 0..d {
            s[j] += g[j];
            s2[j] += g[j] * g[j];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = s.iter().map(|v| v / nf).collect();
    let se = s2
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / nf - m * m).max(0.0) * nf / (nf - 1.0) / nf).sqrt())
        .collect();
    (mean, se)
}

fn check_unbiased(p: &dyn StochasticProblem, points: &[Vec<f64>]) {
    for (k, x) in points.iter().enumerate() {
        let (mean, se) = sample_stats(p, x, N, k as u64);
        let truth = p.grad(x);
        for j in 0..p.dim() {
            let slack = 4.0 * se[j] + 1e-12 * truth[j].abs().max(1.0);
            assert!(
                (mean[j] - truth[j]).abs() <= slack,
                "{} at {x:?}, coord {j}: mean {} vs grad {} (se {})",
                p.name(),
                mean[j],
                truth[j],
                se[j]
            );
        }
    }
}

fn random_points(d: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = run_rng(seed, 99);
    (0..5).map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

#[test]
fn saddle_gradients_are_unbiased() {
    check_unbiased(&make_saddle_problem(), &random_points(2, -1.0, 1.0, 1));
}

#[test]
fn counterexample_gradients_are_unbiased() {
    check_unbiased(&make_counterexample(10.0, 0.05).unwrap(), &random_points(1, -1.0, 1.0, 2));
}

#[test]
fn quadratic_gradients_are_unbiased() {
    let h = SymMatrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.1], vec![0.0, 0.1, 0.5]]).unwrap();
    let cov = SymMatrix::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.2, 0.5, 0.0], vec![0.0, 0.0, 0.1]]).unwrap();
    let q = make_quadratic_gaussian(h, cov).unwrap();
    check_unbiased(&q, &random_points(3, -2.0, 2.0, 3));
}

#[test]
fn logistic_gradients_are_unbiased() {
    let data = synthetic_logistic_data(200, 4, 0.5, 11).unwrap();
    let p = make_logistic_regression(data, 10).unwrap();
    check_unbiased(&p, &random_points(4, -1.0, 1.0, 4));
}

#[test]
fn saddle_noise_covariance_at_origin() {
    let p = make_saddle_problem();
    let mut rng = run_rng(5, 0);
    let mut c = [0.0; 3];
    for _ in 0..N {
        let g = p.sample_grad(&[0.0, 0.0], &mut rng);
        c[0] += g[0] * g[0];
        c[1] += g[0] * g[1];
        c[2] += g[1] * g[1];
    }
    let c: Vec<f64> = c.iter().map(|v| v / N as f64).collect();
    assert!((c[0] - 1.0).abs() <= 0.05);
    assert!((c[2] - 0.01).abs() <= 0.05 * 0.01);
    // Off-diagonal target is 0; 5% of the smaller variance scale.
    assert!(c[1].abs() <= 0.05 * 0.1, "cross moment {}", c[1]);
}

#[test]
fn counterexample_second_moment() {
    let (c, zeta) = (10.0, 0.05);
    let p = make_counterexample(c, zeta).unwrap();
    let mut rng = run_rng(6, 0);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..N {
        let g = p.sample_grad(&[0.0], &mut rng)[0];
        s += g * g;
        s2 += g.powi(4);
    }
    let nf = N as f64;
    let mean = s / nf;
    let se = ((s2 / nf - mean * mean) / nf).sqrt();
    let want = c * (1.0 + zeta) - zeta;
    assert!((mean - want).abs() <= 3.0 * se, "{mean} vs {want} (se {se})");
}
