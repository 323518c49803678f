//! Central finite-difference checks of analytic gradients in `f64`.

use rand::seq::index;
use rand::SeedableRng;

use super::loss::softmax_cross_entropy;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Scalar objective over the network output.
#[derive(Debug, Clone)]
pub enum Objective {
    /// Mean softmax cross-entropy against `[B, C]` targets.
    CrossEntropy(Tensor<f64>),
    /// `sum_i c_i y_i` over the flattened output.
    Linear(Vec<f64>),
}

impl Objective {
    fn eval(&self, y: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
        match self {
            Objective::CrossEntropy(t) => {
                let ce = softmax_cross_entropy(y, t)?;
                Ok((ce.loss, ce.grad))
            }
            Objective::Linear(c) => {
                if c.len() != y.len() {
                    return Err(Error::Shape(format!("{} coefficients for output {:?}", c.len(), y.shape())));
                }
                let v = c.iter().zip(&y.data).map(|(a, b)| a * b).sum();
                Ok((v, Tensor::from_vec(y.shape(), c.clone())?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Coordinates whose analytic and numeric gradients are both at or
    /// below this magnitude are counted as skipped.
    pub min_abs_grad: f64,
    /// Sample this many coordinates per tensor; `None` checks all of them.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            min_abs_grad: 1e-8,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    /// Parameter name, or `input` for the gradient wrt the network input.
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    /// `(index, analytic, numeric)` at the largest relative error.
    pub worst: Option<(usize, f64, f64)>,
    /// `(index, analytic, numeric)` of every checked coordinate.
    pub values: Vec<(usize, f64, f64)>,
}

impl TensorCheck {
    fn new(name: String) -> Self {
        Self {
            name,
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
            worst: None,
            values: Vec::new(),
        }
    }

    /// Checked coordinates whose relative error reaches `tol`.
    pub fn failures(&self, tol: f64) -> impl Iterator<Item = &(usize, f64, f64)> {
        self.values.iter().filter(move |(_, a, n)| relative_error(*a, *n) >= tol)
    }
}

/// `|a - n| / max(|a|, |n|)`, zero when both are zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let d = analytic.abs().max(numeric.abs());
    if d == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / d
    }
}

fn coords(len: usize, cfg: &GradCheckConfig, rng: &mut Rng) -> Vec<usize> {
    match cfg.max_coords_per_tensor {
        Some(k) if k < len => {
            let mut v = index::sample(rng, len, k).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

fn record(check: &mut TensorCheck, cfg: &GradCheckConfig, i: usize, a: f64, n: f64) {
    if a.abs() <= cfg.min_abs_grad && n.abs() <= cfg.min_abs_grad {
        check.skipped += 1;
        return;
    }
    check.checked += 1;
    check.values.push((i, a, n));
    let e = relative_error(a, n);
    if check.worst.is_none() || e > check.max_rel_err {
        check.max_rel_err = e;
        check.worst = Some((i, a, n));
    }
}

fn loss_at(net: &mut Network<f64>, x: &Tensor<f64>, obj: &Objective) -> Result<f64> {
    let y = net.forward(x)?;
    Ok(obj.eval(&y)?.0)
}

/// Compares the backward pass of `net` against central differences for the
/// input and every parameter tensor. Parameters are restored afterwards.
pub fn gradcheck_network(
    net: &mut Network<f64>,
    x: &Tensor<f64>,
    obj: &Objective,
    cfg: &GradCheckConfig,
) -> Result<Vec<TensorCheck>> {
    let mut rng = Rng::seed_from_u64(cfg.seed);
    net.zero_grad();
    let y = net.forward(x)?;
    let (_, dy) = obj.eval(&y)?;
    let dx = net.backward(&dy)?;
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .map(|(_, t)| t.grad.clone().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
    let h = cfg.step;
    let mut out = Vec::new();

    let mut check = TensorCheck::new("input".into());
    let mut xp = x.clone();
    for i in coords(x.len(), cfg, &mut rng) {
        let orig = xp.data[i];
        xp.data[i] = orig + h;
        let lp = loss_at(net, &xp, obj)?;
        xp.data[i] = orig - h;
        let lm = loss_at(net, &xp, obj)?;
        xp.data[i] = orig;
        record(&mut check, cfg, i, dx.data[i], (lp - lm) / (2.0 * h));
    }
    out.push(check);

    for (ti, name) in names.into_iter().enumerate() {
        let mut check = TensorCheck::new(name);
        let len = analytic[ti].len();
        for i in coords(len, cfg, &mut rng) {
            let orig = net.params_mut()[ti].data[i];
            net.params_mut()[ti].data[i] = orig + h;
            let lp = loss_at(net, x, obj)?;
            net.params_mut()[ti].data[i] = orig - h;
            let lm = loss_at(net, x, obj)?;
            net.params_mut()[ti].data[i] = orig;
            record(&mut check, cfg, i, analytic[ti][i], (lp - lm) / (2.0 * h));
        }
        out.push(check);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;
    use rand::Rng as _;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }

    #[test]
    fn dense_softmax_passes() {
        let mut r = Rng::seed_from_u64(9);
        let specs = vec![
            ("s".to_string(), LayerSpec::ToSequence),
            ("m".to_string(), LayerSpec::TimeMean),
            ("fc".to_string(), LayerSpec::Dense { units: 4 }),
        ];
        let mut net = Network::<f64>::new(&specs, [2, 3, 1], &mut r).unwrap();
        let x = Tensor::from_vec(&[2, 2, 3, 1], (0..12).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let t = Tensor::from_vec(&[2, 4], vec![0.1, 0.2, 0.3, 0.4, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let report = gradcheck_network(&mut net, &x, &Objective::CrossEntropy(t), &GradCheckConfig::default()).unwrap();
        for c in report {
            assert!(c.max_rel_err < 1e-5, "{c:?}");
        }
    }
}
