use super::init::glorot_uniform;
use super::tensor::{expect_rank, gemm, MatRef, Real, Tensor};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// `y = x W + b` over `[B, F_in]`.
#[derive(Debug, Clone)]
pub struct Dense<F> {
    /// `[F_in, F_out]`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    input: Option<Tensor<F>>,
}

impl<F: Real> Dense<F> {
    pub fn new(f_in: usize, f_out: usize, rng: &mut Rng) -> Result<Self> {
        if f_in == 0 || f_out == 0 {
            return Err(Error::Shape(format!("dense {f_in}->{f_out}")));
        }
        Ok(Self {
            weight: glorot_uniform(&[f_in, f_out], f_in, f_out, rng),
            bias: Tensor::zeros(&[f_out]),
            input: None,
        })
    }

    pub fn from_params(weight: Tensor<F>, bias: Tensor<F>) -> Result<Self> {
        expect_rank(&weight, 2, "dense weight")?;
        if bias.shape() != [weight.shape()[1]] {
            return Err(Error::Shape(format!("dense bias {:?} for weight {:?}", bias.shape(), weight.shape())));
        }
        Ok(Self { weight, bias, input: None })
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        expect_rank(x, 2, "dense")?;
        let (f_in, f_out) = self.dims();
        let b = x.shape()[0];
        if x.shape()[1] != f_in {
            return Err(Error::Shape(format!("dense expects {f_in} features, got {}", x.shape()[1])));
        }
        let mut out = Vec::with_capacity(b * f_out);
        for _ in 0..b {
            out.extend_from_slice(&self.bias.data);
        }
        gemm(MatRef::new(&x.data, b, f_in), MatRef::new(&self.weight.data, f_in, f_out), F::one(), &mut out, f_out);
        self.input = Some(x.clone());
        Tensor::from_vec(&[b, f_out], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        let (f_in, f_out) = self.dims();
        let b = x.shape()[0];
        if grad_out.shape() != [b, f_out] {
            return Err(Error::Shape(format!("dense grad {:?}", grad_out.shape())));
        }
        let dy = MatRef::new(&grad_out.data, b, f_out);
        gemm(MatRef::new(&x.data, b, f_in).t(), dy, F::one(), self.weight.grad_mut(), f_out);
        let db = self.bias.grad_mut();
        for row in grad_out.data.chunks_exact(f_out) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = vec![F::zero(); b * f_in];
        gemm(dy, MatRef::new(&self.weight.data, f_in, f_out).t(), F::zero(), &mut dx, f_in);
        Tensor::from_vec(&[b, f_in], dx)
    }

    pub fn params(&self) -> [&Tensor<F>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<F>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}
