//! Mixup: convex combinations of two training samples and their labels,
//! `x = λ a + (1 - λ) b`, `y = λ y_a + (1 - λ) y_b`, with `λ ~ Beta(α, α)`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixupConfig {
    pub enabled: bool,
    pub alpha: f64,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self { enabled: true, alpha: 0.2 }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("mixup alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Draws `λ = g1 / (g1 + g2)` with `g1, g2 ~ Gamma(α, 1)`.
pub fn sample_lambda(cfg: &MixupConfig, rng: &mut Rng) -> Result<f64> {
    cfg.validate()?;
    let gamma = Gamma::new(cfg.alpha, 1.0).map_err(|e| Error::Config(format!("mixup alpha: {e}")))?;
    loop {
        let g1: f64 = gamma.sample(rng);
        let g2: f64 = gamma.sample(rng);
        let s = g1 + g2;
        // both draws can underflow to zero for small alpha
        if s > 0.0 && s.is_finite() {
            return Ok(g1 / s);
        }
    }
}

/// `(λ a + (1 - λ) b, λ y_a + (1 - λ) y_b)`.
pub fn mixup_pair<F: Real>(a: &[F], ya: &[F], b: &[F], yb: &[F], lambda: F) -> Result<(Vec<F>, Vec<F>)> {
    if a.len() != b.len() || ya.len() != yb.len() {
        return Err(Error::Shape(format!(
            "mixup operands differ: features {} vs {}, labels {} vs {}",
            a.len(),
            b.len(),
            ya.len(),
            yb.len()
        )));
    }
    let mu = F::one() - lambda;
    let x = a.iter().zip(b).map(|(&p, &q)| lambda * p + mu * q).collect();
    let y = ya.iter().zip(yb).map(|(&p, &q)| lambda * p + mu * q).collect();
    Ok((x, y))
}

/// Tensor form of [`mixup_pair`] over whole batches of equal shape.
pub fn mixup_batch<F: Real>(
    a: &Tensor<F>,
    ya: &Tensor<F>,
    b: &Tensor<F>,
    yb: &Tensor<F>,
    lambda: F,
) -> Result<(Tensor<F>, Tensor<F>)> {
    if a.shape() != b.shape() || ya.shape() != yb.shape() {
        return Err(Error::Shape(format!(
            "mixup batch shapes differ: {:?}/{:?} and {:?}/{:?}",
            a.shape(),
            ya.shape(),
            b.shape(),
            yb.shape()
        )));
    }
    let (x, y) = mixup_pair(&a.data, &ya.data, &b.data, &yb.data, lambda)?;
    Ok((Tensor::from_vec(a.shape(), x)?, Tensor::from_vec(ya.shape(), y)?))
}

/// Mixes a minibatch in place. The batch is visited in a shuffled order and
/// element `i` of that order is mixed with element `i + offset` (cyclic), one
/// λ per pair. `features` is `[B, ...]` and `labels` is `[B, C]`.
pub fn mix_minibatch<F: Real>(
    features: &mut Tensor<F>,
    labels: &mut Tensor<F>,
    cfg: &MixupConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let b = features.shape().first().copied().unwrap_or(0);
    if labels.shape().len() != 2 || labels.shape()[0] != b {
        return Err(Error::Shape(format!(
            "labels {:?} for batch {:?}",
            labels.shape(),
            features.shape()
        )));
    }
    if b < 2 {
        return Ok(Vec::new());
    }
    let fx = features.len() / b;
    let c = labels.shape()[1];
    let mut order: Vec<usize> = (0..b).collect();
    order.shuffle(rng);
    let offset = rng.random_range(1..b);
    let src_x = features.data.clone();
    let src_y = labels.data.clone();
    let mut lambdas = Vec::with_capacity(b);
    for i in 0..b {
        let (p, q) = (order[i], order[(i + offset) % b]);
        let lambda = sample_lambda(cfg, rng)?;
        let (x, y) = mixup_pair(
            &src_x[p * fx..(p + 1) * fx],
            &src_y[p * c..(p + 1) * c],
            &src_x[q * fx..(q + 1) * fx],
            &src_y[q * c..(q + 1) * c],
            F::lit(lambda),
        )?;
        features.data[p * fx..(p + 1) * fx].copy_from_slice(&x);
        labels.data[p * c..(p + 1) * c].copy_from_slice(&y);
        lambdas.push(lambda);
    }
    Ok(lambdas)
}
