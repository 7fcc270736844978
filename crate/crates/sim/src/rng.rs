//! Deterministic random streams and the few distributions the generators need.
//!
//! Every replication owns two independent ChaCha streams derived from the master
//! seed: one for data, one for anything a method draws (cross-validation
//! shuffles). Adding or removing methods therefore never changes the data.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Stream `id` of the generator keyed by `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn data_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    stream(seed, 2 * rep as u64)
}

/// Seed for method-level randomness in replication `rep`.
pub fn method_seed(seed: u64, rep: usize) -> u64 {
    stream(seed, 2 * rep as u64 + 1).next_u64()
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `Gamma(shape, scale)`; rand_distr uses Marsaglia–Tsang with the usual boost for shape < 1.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, scale).expect("shape and scale must be positive").sample(rng)
}

/// `χ²_df = Gamma(df/2, 2)`, for any real `df > 0`.
pub fn chi_squared<R: Rng + ?Sized>(rng: &mut R, df: f64) -> f64 {
    gamma(rng, df / 2.0, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| data_rng(7, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(data_rng(7, 3).next_u64(), data_rng(7, 4).next_u64());
        assert_ne!(data_rng(7, 3).next_u64(), stream(7, 7).next_u64());
    }

    #[test]
    fn chi_squared_moments() {
        let mut rng = stream(11, 0);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| chi_squared(&mut rng, 1.2)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // Var(mean) = 2.4/n; Var(sample variance) ≈ (μ₄ − σ⁴)/n with μ₄ = 3k(k+2)θ⁴ ≈ 74.9
        assert!((mean - 1.2).abs() < 4.0 * (2.4 / n as f64).sqrt());
        assert!((var - 2.4).abs() < 4.0 * (70.0 / n as f64).sqrt(), "variance {var}");
    }
}
