#![allow(dead_code)]

use adaprecon::{RunRng, SymMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal_vec(d: usize, rng: &mut RunRng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// `B Bᵀ/d + floor·I` with Gaussian `B`; eigenvalues spread over a few decades.
pub fn random_psd(d: usize, floor: f64, rng: &mut RunRng) -> SymMatrix {
    let b: Vec<f64> = normal_vec(d * d, rng);
    let scale: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-1.5..1.0))).collect();
    SymMatrix::from_fn(d, |i, j| {
        let s: f64 = (0..d).map(|k| b[i * d + k] * b[j * d + k] * scale[k]).sum();
        s / d as f64 + if i == j { floor } else { 0.0 }
    })
    .unwrap()
}

/// Random symmetric matrix with operator norm exactly `norm`.
pub fn random_sym_with_norm(d: usize, norm: f64, rng: &mut RunRng) -> SymMatrix {
    let raw = normal_vec(d * d, rng);
    let m = SymMatrix::new(d, raw).unwrap();
    let n = m.op_norm().unwrap();
    m.scale(norm / n)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
