use super::tensor::{expect_rank, Real, Tensor};
use crate::error::{Error, Result};

pub const LOG_EPS: f64 = 1e-12;
pub const LABEL_SUM_TOL: f64 = 1e-6;

/// Row-wise softmax with max subtraction.
pub fn softmax<F: Real>(logits: &Tensor<F>) -> Result<Tensor<F>> {
    expect_rank(logits, 2, "softmax")?;
    let c = logits.shape()[1];
    let mut out = logits.clone();
    out.grad = None;
    for row in out.data.chunks_exact_mut(c) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut s = F::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / s);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SoftmaxCe<F> {
    pub probs: Tensor<F>,
    /// Batch mean of `-sum target * ln(prob + 1e-12)`.
    pub loss: F,
    /// `(prob - target) / B`, the gradient of `loss` wrt the logits.
    pub grad: Tensor<F>,
}

/// Softmax cross-entropy against soft targets, both `[B, C]`.
pub fn softmax_cross_entropy<F: Real>(logits: &Tensor<F>, targets: &Tensor<F>) -> Result<SoftmaxCe<F>> {
    let probs = softmax(logits)?;
    if targets.shape() != logits.shape() {
        return Err(Error::Shape(format!(
            "targets {:?} for logits {:?}",
            targets.shape(),
            logits.shape()
        )));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let eps = F::lit(LOG_EPS);
    let inv_b = F::one() / F::lit(b as f64);
    let mut loss = F::zero();
    let mut grad = Vec::with_capacity(b * c);
    for (i, (p, y)) in probs.data.chunks_exact(c).zip(targets.data.chunks_exact(c)).enumerate() {
        let sum: f64 = y.iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > LABEL_SUM_TOL || y.iter().any(|&v| v < F::zero()) {
            return Err(Error::Label(format!("target row {i} is not a probability vector (sum {sum})")));
        }
        for (&pv, &yv) in p.iter().zip(y) {
            loss -= yv * (pv + eps).ln();
            grad.push((pv - yv) * inv_b);
        }
    }
    Ok(SoftmaxCe {
        probs,
        loss: loss * inv_b,
        grad: Tensor::from_vec(&[b, c], grad)?,
    })
}

pub fn one_hot<F: Real>(labels: &[usize], n_classes: usize) -> Result<Tensor<F>> {
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::Label(format!("label {l} out of range for {n_classes} classes")));
        }
        t.data[i * n_classes + l] = F::one();
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_n() {
        let logits = Tensor::<f64>::zeros(&[1, 50]);
        let y = one_hot(&[7], 50).unwrap();
        let ce = softmax_cross_entropy(&logits, &y).unwrap();
        assert!((ce.loss - 50f64.ln()).abs() < 1e-9);
        assert!((50f64.ln() - 3.912).abs() < 1e-3);
    }

    #[test]
    fn target_equal_to_prediction_gives_entropy() {
        let logits = Tensor::<f64>::from_vec(&[1, 3], vec![0.3, -1.2, 2.0]).unwrap();
        let p = softmax(&logits).unwrap();
        let ce = softmax_cross_entropy(&logits, &p).unwrap();
        let h: f64 = p.data.iter().map(|&q| -q * q.ln()).sum();
        assert!((ce.loss - h).abs() < 1e-9);
    }

    #[test]
    fn shift_invariance() {
        let a = Tensor::<f64>::from_vec(&[1, 4], vec![0.1, 3.0, -2.0, 0.7]).unwrap();
        let b = Tensor::<f64>::from_vec(&[1, 4], a.data.iter().map(|v| v + 123.0).collect()).unwrap();
        let (pa, pb) = (softmax(&a).unwrap(), softmax(&b).unwrap());
        for (x, y) in pa.data.iter().zip(&pb.data) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let logits = Tensor::<f64>::zeros(&[1, 3]);
        let y = Tensor::from_vec(&[1, 3], vec![0.5, 0.2, 0.2]).unwrap();
        assert!(matches!(softmax_cross_entropy(&logits, &y), Err(Error::Label(_))));
        assert!(one_hot::<f64>(&[3], 3).is_err());
    }
}
