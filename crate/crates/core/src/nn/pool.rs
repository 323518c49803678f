use super::tensor::{expect_rank, Real, Tensor};
use crate::error::{Error, Result};

/// Non-overlapping max pooling (kernel = stride) with ceil-mode output, so a
/// trailing partial window is pooled over whatever cells it covers.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub stride: (usize, usize),
    argmax: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(stride: (usize, usize)) -> Result<Self> {
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("pool stride must be at least 1".into()));
        }
        Ok(Self { stride, argmax: None })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride.0), w.div_ceil(self.stride.1))
    }

    pub fn forward<F: Real>(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        expect_rank(x, 4, "maxpool2d")?;
        let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        if h == 0 || w == 0 {
            return Err(Error::Shape("maxpool2d input has an empty spatial dimension".into()));
        }
        if self.stride.0 > h || self.stride.1 > w {
            return Err(Error::Shape(format!("pool stride {:?} exceeds input {h}x{w}", self.stride)));
        }
        let (sh, sw) = self.stride;
        let (ho, wo) = self.output_hw(h, w);
        let mut out = Vec::with_capacity(b * ho * wo * c);
        let mut idx = Vec::with_capacity(b * ho * wo * c);
        for n in 0..b {
            for oy in 0..ho {
                for ox in 0..wo {
                    for ch in 0..c {
                        let mut best = usize::MAX;
                        let mut best_v = F::neg_infinity();
                        // row-major scan with strict '>' keeps the lowest linear index on ties
                        for iy in oy * sh..((oy + 1) * sh).min(h) {
                            for ix in ox * sw..((ox + 1) * sw).min(w) {
                                let i = ((n * h + iy) * w + ix) * c + ch;
                                if best == usize::MAX || x.data[i] > best_v {
                                    best = i;
                                    best_v = x.data[i];
                                }
                            }
                        }
                        out.push(best_v);
                        idx.push(best);
                    }
                }
            }
        }
        self.argmax = Some((idx, x.shape().to_vec()));
        Tensor::from_vec(&[b, ho, wo, c], out)
    }

    pub fn backward<F: Real>(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let (idx, in_shape) = self
            .argmax
            .take()
            .ok_or_else(|| Error::State("maxpool2d backward called before forward".into()))?;
        if grad_out.len() != idx.len() {
            return Err(Error::Shape(format!("maxpool2d grad {:?}", grad_out.shape())));
        }
        let mut dx = Tensor::zeros(&in_shape);
        for (&i, &g) in idx.iter().zip(&grad_out.data) {
            dx.data[i] += g;
        }
        Ok(dx)
    }
}
