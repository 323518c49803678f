use rand::Rng as _;

use super::tensor::{Real, Tensor};
use crate::seed::Rng;

/// Glorot-uniform: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
/// Draws are made in `f64` so the same seed gives the same values at any
/// precision.
pub fn glorot_uniform<F: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in &mut t.data {
        *v = F::lit(rng.random_range(-limit..limit));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn within_limit_and_seeded() {
        let a: Tensor<f32> = glorot_uniform(&[10, 20], 10, 20, &mut Rng::seed_from_u64(3));
        let b: Tensor<f32> = glorot_uniform(&[10, 20], 10, 20, &mut Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let l = (6.0f32 / 30.0).sqrt();
        assert!(a.data.iter().all(|v| v.abs() <= l));
        assert!(a.data.iter().any(|&v| v != 0.0));
    }
}
