//! Seeded parameter initializers.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

/// Xavier/Glorot uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-a..a))
}

/// N(0, std^2), used for learnable positional embeddings.
pub fn normal(rng: &mut ChaCha20Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("std must be finite and positive");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

/// U(-a, a) with a = 1/sqrt(hidden), the usual recurrent-layer init.
pub fn uniform_recurrent(
    rng: &mut ChaCha20Rng,
    rows: usize,
    cols: usize,
    hidden: usize,
) -> Array2<f64> {
    let a = 1.0 / (hidden as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn xavier_bound_is_respected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let w = xavier_uniform(&mut rng, 100, 50);
        let a = (6.0 / 150.0_f64).sqrt();
        assert!(w.iter().all(|v| v.abs() < a));
    }

    #[test]
    fn same_seed_same_init() {
        let w1 = xavier_uniform(&mut ChaCha20Rng::seed_from_u64(9), 10, 10);
        let w2 = xavier_uniform(&mut ChaCha20Rng::seed_from_u64(9), 10, 10);
        assert_eq!(w1, w2);
    }
}
