use super::tensor::{expect_rank, Real, Tensor};
use crate::error::{Error, Result};

fn missing(what: &str) -> Error {
    Error::State(format!("{what} backward called before forward"))
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward<F: Real>(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut y = x.clone();
        y.grad = None;
        let mut mask = Vec::with_capacity(x.len());
        for v in &mut y.data {
            let on = *v > F::zero();
            if !on {
                *v = F::zero();
            }
            mask.push(on);
        }
        self.mask = Some(mask);
        Ok(y)
    }

    pub fn backward<F: Real>(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let mask = self.mask.take().ok_or_else(|| missing("relu"))?;
        if mask.len() != grad_out.len() {
            return Err(Error::Shape(format!("relu grad {:?}", grad_out.shape())));
        }
        let mut dx = grad_out.clone();
        dx.grad = None;
        for (d, on) in dx.data.iter_mut().zip(mask) {
            if !on {
                *d = F::zero();
            }
        }
        Ok(dx)
    }
}

/// `[B, H, W, C] -> [B, W, H*C]`: the width axis becomes the time axis and
/// each step carries the full frequency-by-channel column.
#[derive(Debug, Clone, Default)]
pub struct ToSequence {
    in_shape: Option<Vec<usize>>,
}

impl ToSequence {
    pub fn forward<F: Real>(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        expect_rank(x, 4, "to_sequence")?;
        let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let mut out = vec![F::zero(); x.len()];
        for n in 0..b {
            for y in 0..h {
                for t in 0..w {
                    let src = ((n * h + y) * w + t) * c;
                    let dst = (n * w + t) * h * c + y * c;
                    out[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                }
            }
        }
        self.in_shape = Some(x.shape().to_vec());
        Tensor::from_vec(&[b, w, h * c], out)
    }

    pub fn backward<F: Real>(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let s = self.in_shape.take().ok_or_else(|| missing("to_sequence"))?;
        let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
        if grad_out.shape() != [b, w, h * c] {
            return Err(Error::Shape(format!("to_sequence grad {:?}", grad_out.shape())));
        }
        let mut dx = vec![F::zero(); grad_out.len()];
        for n in 0..b {
            for y in 0..h {
                for t in 0..w {
                    let dst = ((n * h + y) * w + t) * c;
                    let src = (n * w + t) * h * c + y * c;
                    dx[dst..dst + c].copy_from_slice(&grad_out.data[src..src + c]);
                }
            }
        }
        Tensor::from_vec(&s, dx)
    }
}

/// Mean over the time axis: `[B, T, F] -> [B, F]`.
#[derive(Debug, Clone, Default)]
pub struct TimeMean {
    in_shape: Option<Vec<usize>>,
}

impl TimeMean {
    pub fn forward<F: Real>(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        expect_rank(x, 3, "time_mean")?;
        let (b, t, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if t == 0 {
            return Err(Error::Shape("time_mean over an empty sequence".into()));
        }
        let scale = F::one() / F::lit(t as f64);
        let mut out = vec![F::zero(); b * f];
        for n in 0..b {
            let acc = &mut out[n * f..(n + 1) * f];
            for step in x.data[n * t * f..(n + 1) * t * f].chunks_exact(f) {
                for (a, &v) in acc.iter_mut().zip(step) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
        }
        self.in_shape = Some(x.shape().to_vec());
        Tensor::from_vec(&[b, f], out)
    }

    pub fn backward<F: Real>(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let s = self.in_shape.take().ok_or_else(|| missing("time_mean"))?;
        let (b, t, f) = (s[0], s[1], s[2]);
        if grad_out.shape() != [b, f] {
            return Err(Error::Shape(format!("time_mean grad {:?}", grad_out.shape())));
        }
        let scale = F::one() / F::lit(t as f64);
        let mut dx = Vec::with_capacity(b * t * f);
        for n in 0..b {
            let g = &grad_out.data[n * f..(n + 1) * f];
            for _ in 0..t {
                dx.extend(g.iter().map(|&v| v * scale));
            }
        }
        Tensor::from_vec(&s, dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_and_mask() {
        let mut r = Relu::default();
        let x = Tensor::<f64>::from_vec(&[4], vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        assert_eq!(r.forward(&x).unwrap().data, vec![0.0, 0.0, 2.0, 0.0]);
        let g = Tensor::from_vec(&[4], vec![1.0; 4]).unwrap();
        assert_eq!(r.backward(&g).unwrap().data, vec![0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(r.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn to_sequence_table_shape_and_layout() {
        let mut s = ToSequence::default();
        let y = s.forward(&Tensor::<f32>::zeros(&[1, 4, 8, 256])).unwrap();
        assert_eq!(y.shape(), &[1, 8, 1024]);

        // [1, H=2, W=3, C=1], value = 10*y + t
        let x = Tensor::<f64>::from_vec(&[1, 2, 3, 1], vec![0., 1., 2., 10., 11., 12.]).unwrap();
        let y = s.forward(&x).unwrap();
        assert_eq!(y.data, vec![0., 10., 1., 11., 2., 12.]);
        assert_eq!(s.backward(&y).unwrap(), x);
    }

    #[test]
    fn time_mean_forward_backward() {
        let mut m = TimeMean::default();
        let x = Tensor::<f64>::from_vec(&[1, 2, 2], vec![1., 2., 3., 6.]).unwrap();
        assert_eq!(m.forward(&x).unwrap().data, vec![2., 4.]);
        let dx = m.backward(&Tensor::from_vec(&[1, 2], vec![1., 2.]).unwrap()).unwrap();
        assert_eq!(dx.data, vec![0.5, 1., 0.5, 1.]);
    }
}
