#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tiltfit_core::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_data(n: usize, mean: &[f64], seed: u64) -> Dataset {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| mean.iter().map(|m| m + r.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    Dataset::from_rows(&rows).unwrap()
}

/// Rows `(x, y)` with `y = xᵀβ + ε`.
pub fn regression_data(n: usize, beta: &[f64], seed: u64) -> Dataset {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = beta.iter().map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let y = row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() + r.sample::<f64, _>(StandardNormal);
            row.push(y);
            row
        })
        .collect();
    Dataset::from_rows(&rows).unwrap()
}
