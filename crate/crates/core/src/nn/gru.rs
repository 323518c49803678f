use super::init::glorot_uniform;
use super::tensor::{expect_rank, gemm, MatRef, Real, Tensor};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// One GRU direction. Gate columns are ordered `[z | r | n]`:
///
/// ```text
/// z = sigmoid(x Wz + h Uz + bz)
/// r = sigmoid(x Wr + h Ur + br)
/// n = tanh(x Wn + (r * h) Un + bn)
/// h' = (1 - z) * h + z * n
/// ```
#[derive(Debug, Clone)]
pub struct GruCell<F> {
    /// `[F_in, 3U]`
    pub w: Tensor<F>,
    /// `[U, 3U]`
    pub u: Tensor<F>,
    /// `[3U]`
    pub b: Tensor<F>,
}

#[derive(Debug, Clone)]
struct StepCache<F> {
    h_prev: Vec<F>,
    z: Vec<F>,
    r: Vec<F>,
    n: Vec<F>,
    rh: Vec<F>,
}

#[derive(Debug, Clone)]
struct DirCache<F> {
    /// in processing order
    steps: Vec<StepCache<F>>,
}

fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

impl<F: Real> GruCell<F> {
    pub fn new(f_in: usize, units: usize, rng: &mut Rng) -> Self {
        Self {
            w: glorot_uniform(&[f_in, 3 * units], f_in, 3 * units, rng),
            u: glorot_uniform(&[units, 3 * units], units, 3 * units, rng),
            b: Tensor::zeros(&[3 * units]),
        }
    }

    pub fn units(&self) -> usize {
        self.u.shape()[0]
    }

    fn check(&self) -> Result<()> {
        let u = self.units();
        if self.w.shape().len() != 2
            || self.w.shape()[1] != 3 * u
            || self.u.shape() != [u, 3 * u]
            || self.b.shape() != [3 * u]
        {
            return Err(Error::Shape(format!(
                "gru params w {:?} u {:?} b {:?}",
                self.w.shape(),
                self.u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    /// Runs the recurrence over the steps of `x` (`[B, T, F]`) in `order`,
    /// writing `h(t)` into columns `col..col+U` of `out` (`[B, T, out_w]`).
    fn run(&self, x: &Tensor<F>, order: &[usize], out: &mut [F], out_w: usize, col: usize) -> DirCache<F> {
        let (b, t_len, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let u = self.units();
        let g = 3 * u;

        let mut xw = Vec::with_capacity(b * t_len * g);
        for _ in 0..b * t_len {
            xw.extend_from_slice(&self.b.data);
        }
        gemm(MatRef::new(&x.data, b * t_len, f), MatRef::new(&self.w.data, f, g), F::one(), &mut xw, g);

        let mut h = vec![F::zero(); b * u];
        let mut steps = Vec::with_capacity(order.len());
        let mut a = vec![F::zero(); b * g];
        for &t in order {
            for n in 0..b {
                let row = (n * t_len + t) * g;
                a[n * g..(n + 1) * g].copy_from_slice(&xw[row..row + g]);
            }
            gemm(
                MatRef::new(&h, b, u),
                MatRef::cols_of(&self.u.data, u, g, 0, 2 * u),
                F::one(),
                &mut a,
                g,
            );
            let mut z = vec![F::zero(); b * u];
            let mut r = vec![F::zero(); b * u];
            let mut rh = vec![F::zero(); b * u];
            for n in 0..b {
                for j in 0..u {
                    let i = n * u + j;
                    z[i] = sigmoid(a[n * g + j]);
                    r[i] = sigmoid(a[n * g + u + j]);
                    rh[i] = r[i] * h[i];
                }
            }
            gemm(
                MatRef::new(&rh, b, u),
                MatRef::cols_of(&self.u.data, u, g, 2 * u, u),
                F::one(),
                &mut a[2 * u..],
                g,
            );
            let mut nc = vec![F::zero(); b * u];
            let mut h_new = vec![F::zero(); b * u];
            for n in 0..b {
                for j in 0..u {
                    let i = n * u + j;
                    nc[i] = a[n * g + 2 * u + j].tanh();
                    h_new[i] = (F::one() - z[i]) * h[i] + z[i] * nc[i];
                    out[(n * t_len + t) * out_w + col + j] = h_new[i];
                }
            }
            let h_prev = std::mem::replace(&mut h, h_new);
            steps.push(StepCache { h_prev, z, r, n: nc, rh });
        }
        DirCache { steps }
    }

    /// Backpropagates through one direction. `dout` is the `[B, T, out_w]`
    /// output gradient; returns the gradient wrt `x`.
    fn back(
        &mut self,
        x: &Tensor<F>,
        order: &[usize],
        cache: &DirCache<F>,
        dout: &[F],
        out_w: usize,
        col: usize,
    ) -> Vec<F> {
        let (b, t_len, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let u = self.units();
        let g = 3 * u;
        let mut dxw = vec![F::zero(); b * t_len * g];
        let mut dh_next = vec![F::zero(); b * u];
        let mut da = vec![F::zero(); b * g];
        let mut drh = vec![F::zero(); b * u];

        for (s, &t) in order.iter().enumerate().rev() {
            let c = &cache.steps[s];
            let mut dh_prev = vec![F::zero(); b * u];
            for n in 0..b {
                for j in 0..u {
                    let i = n * u + j;
                    let dh = dout[(n * t_len + t) * out_w + col + j] + dh_next[i];
                    let dz = dh * (c.n[i] - c.h_prev[i]);
                    let dn = dh * c.z[i];
                    dh_prev[i] = dh * (F::one() - c.z[i]);
                    da[n * g + j] = dz * c.z[i] * (F::one() - c.z[i]);
                    da[n * g + 2 * u + j] = dn * (F::one() - c.n[i] * c.n[i]);
                }
            }
            gemm(
                MatRef::cols_of(&da, b, g, 2 * u, u),
                MatRef::cols_of(&self.u.data, u, g, 2 * u, u).t(),
                F::zero(),
                &mut drh,
                u,
            );
            for n in 0..b {
                for j in 0..u {
                    let i = n * u + j;
                    let dr = drh[i] * c.h_prev[i];
                    dh_prev[i] += drh[i] * c.r[i];
                    da[n * g + u + j] = dr * c.r[i] * (F::one() - c.r[i]);
                }
            }
            let du = self.u.grad_mut();
            gemm(
                MatRef::new(&c.h_prev, b, u).t(),
                MatRef::cols_of(&da, b, g, 0, 2 * u),
                F::one(),
                du,
                g,
            );
            gemm(
                MatRef::new(&c.rh, b, u).t(),
                MatRef::cols_of(&da, b, g, 2 * u, u),
                F::one(),
                &mut du[2 * u..],
                g,
            );
            gemm(
                MatRef::cols_of(&da, b, g, 0, 2 * u),
                MatRef::cols_of(&self.u.data, u, g, 0, 2 * u).t(),
                F::one(),
                &mut dh_prev,
                u,
            );
            for n in 0..b {
                let row = (n * t_len + t) * g;
                dxw[row..row + g].copy_from_slice(&da[n * g..(n + 1) * g]);
            }
            dh_next = dh_prev;
        }

        gemm(MatRef::new(&x.data, b * t_len, f).t(), MatRef::new(&dxw, b * t_len, g), F::one(), self.w.grad_mut(), g);
        let db = self.b.grad_mut();
        for row in dxw.chunks_exact(g) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = vec![F::zero(); b * t_len * f];
        gemm(
            MatRef::new(&dxw, b * t_len, g),
            MatRef::new(&self.w.data, f, g).t(),
            F::zero(),
            &mut dx,
            f,
        );
        dx
    }
}

/// Bidirectional GRU over `[B, T, F]`, output `[B, T, 2U]` with the forward
/// state in the first `U` columns and the backward state in the last `U`.
/// Both directions start from a zero state.
#[derive(Debug, Clone)]
pub struct BiGru<F> {
    pub fwd: GruCell<F>,
    pub bwd: GruCell<F>,
    cache: Option<(Tensor<F>, DirCache<F>, DirCache<F>)>,
}

impl<F: Real> BiGru<F> {
    pub fn new(f_in: usize, units: usize, rng: &mut Rng) -> Result<Self> {
        if f_in == 0 || units == 0 {
            return Err(Error::Shape(format!("bigru {f_in} inputs, {units} units")));
        }
        let fwd = GruCell::new(f_in, units, rng);
        let bwd = GruCell::new(f_in, units, rng);
        Ok(Self { fwd, bwd, cache: None })
    }

    pub fn from_cells(fwd: GruCell<F>, bwd: GruCell<F>) -> Result<Self> {
        fwd.check()?;
        bwd.check()?;
        if fwd.w.shape() != bwd.w.shape() {
            return Err(Error::Shape("bigru directions disagree on shape".into()));
        }
        Ok(Self { fwd, bwd, cache: None })
    }

    pub fn units(&self) -> usize {
        self.fwd.units()
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        expect_rank(x, 3, "bigru")?;
        let (b, t_len, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if t_len == 0 {
            return Err(Error::Shape("bigru over a zero-length sequence".into()));
        }
        if f != self.fwd.w.shape()[0] {
            return Err(Error::Shape(format!("bigru expects {} features, got {f}", self.fwd.w.shape()[0])));
        }
        let u = self.units();
        let mut out = vec![F::zero(); b * t_len * 2 * u];
        let fwd_order: Vec<usize> = (0..t_len).collect();
        let bwd_order: Vec<usize> = (0..t_len).rev().collect();
        let cf = self.fwd.run(x, &fwd_order, &mut out, 2 * u, 0);
        let cb = self.bwd.run(x, &bwd_order, &mut out, 2 * u, u);
        self.cache = Some((x.clone(), cf, cb));
        Tensor::from_vec(&[b, t_len, 2 * u], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let (x, cf, cb) = self
            .cache
            .take()
            .ok_or_else(|| Error::State("bigru backward called before forward".into()))?;
        let (b, t_len) = (x.shape()[0], x.shape()[1]);
        let u = self.units();
        if grad_out.shape() != [b, t_len, 2 * u] {
            return Err(Error::Shape(format!("bigru grad {:?}", grad_out.shape())));
        }
        let fwd_order: Vec<usize> = (0..t_len).collect();
        let bwd_order: Vec<usize> = (0..t_len).rev().collect();
        let mut dx = self.fwd.back(&x, &fwd_order, &cf, &grad_out.data, 2 * u, 0);
        let dxb = self.bwd.back(&x, &bwd_order, &cb, &grad_out.data, 2 * u, u);
        for (a, v) in dx.iter_mut().zip(dxb) {
            *a += v;
        }
        Tensor::from_vec(x.shape(), dx)
    }

    pub fn params(&self) -> [&Tensor<F>; 6] {
        [&self.fwd.w, &self.fwd.u, &self.fwd.b, &self.bwd.w, &self.bwd.u, &self.bwd.b]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<F>; 6] {
        let (f, b) = (&mut self.fwd, &mut self.bwd);
        [&mut f.w, &mut f.u, &mut f.b, &mut b.w, &mut b.u, &mut b.b]
    }
}
