use super::init::glorot_uniform;
use super::tensor::{expect_rank, gemm, MatRef, Real, Tensor};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// 2-D cross-correlation over NHWC input with "same" zero padding.
///
/// Output size is `ceil(H / sh) x ceil(W / sw)`; at stride 1 the spatial
/// size is preserved.
///
/// Stride 1 uses shifted GEMMs over a zero-padded copy of the input: with
/// the padded image flattened to rows of `C` values, tap `(ky, kx)` of output
/// row `r` reads padded row `r + ky * Wp + kx`, so each tap is a single GEMM
/// over the whole batch. Outputs landing in the padding are computed and
/// dropped. Other strides and narrow inputs use im2col.
#[derive(Debug, Clone)]
pub struct Conv2d<F> {
    /// `[kh, kw, c_in, c_out]`
    pub weight: Tensor<F>,
    /// `[c_out]`
    pub bias: Tensor<F>,
    pub stride: (usize, usize),
    input: Option<Tensor<F>>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    b: usize,
    h: usize,
    w: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    pad_top: usize,
    pad_left: usize,
    sh: usize,
    sw: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.kh * self.kw * self.c_in
    }

    fn rows(&self) -> usize {
        self.b * self.ho * self.wo
    }

    /// Visit every (column row, column offset, input offset) with the input
    /// inside the image; padded positions are skipped.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let patch = self.patch();
        for n in 0..self.b {
            for oy in 0..self.ho {
                for ox in 0..self.wo {
                    let row = (n * self.ho + oy) * self.wo + ox;
                    for ky in 0..self.kh {
                        let iy = (oy * self.sh + ky) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for kx in 0..self.kw {
                            let ix = (ox * self.sw + kx) as isize - self.pad_left as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let col = (ky * self.kw + kx) * self.c_in;
                            let src = ((n * self.h + iy as usize) * self.w + ix as usize) * self.c_in;
                            f(row * patch + col, src, self.c_in);
                        }
                    }
                }
            }
        }
    }
}

fn same_padding(size: usize, k: usize, s: usize) -> (usize, usize) {
    let out = size.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(size);
    (out, total / 2)
}

impl<F: Real> Conv2d<F> {
    pub fn new(kernel: (usize, usize), c_in: usize, c_out: usize, stride: (usize, usize), rng: &mut Rng) -> Result<Self> {
        if kernel.0 == 0 || kernel.1 == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::Shape(format!("conv kernel {kernel:?} with {c_in}->{c_out} channels")));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("conv stride must be at least 1".into()));
        }
        let fan_in = kernel.0 * kernel.1 * c_in;
        let fan_out = kernel.0 * kernel.1 * c_out;
        Ok(Self {
            weight: glorot_uniform(&[kernel.0, kernel.1, c_in, c_out], fan_in, fan_out, rng),
            bias: Tensor::zeros(&[c_out]),
            stride,
            input: None,
        })
    }

    pub fn from_params(weight: Tensor<F>, bias: Tensor<F>, stride: (usize, usize)) -> Result<Self> {
        expect_rank(&weight, 4, "conv weight")?;
        if bias.shape() != [weight.shape()[3]] {
            return Err(Error::Shape(format!("conv bias {:?} for weight {:?}", bias.shape(), weight.shape())));
        }
        Ok(Self { weight, bias, stride, input: None })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[3]
    }

    fn geometry(&self, x: &Tensor<F>) -> Result<Geometry> {
        expect_rank(x, 4, "conv2d")?;
        let ws = self.weight.shape();
        let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        if c != ws[2] {
            return Err(Error::Shape(format!("conv2d expects {} input channels, got {c}", ws[2])));
        }
        if h == 0 || w == 0 {
            return Err(Error::Shape("conv2d input has an empty spatial dimension".into()));
        }
        let (ho, pad_top) = same_padding(h, ws[0], self.stride.0);
        let (wo, pad_left) = same_padding(w, ws[1], self.stride.1);
        Ok(Geometry {
            b,
            h,
            w,
            c_in: c,
            kh: ws[0],
            kw: ws[1],
            ho,
            wo,
            pad_top,
            pad_left,
            sh: self.stride.0,
            sw: self.stride.1,
        })
    }

    fn im2col(g: &Geometry, x: &[F]) -> Vec<F> {
        let mut cols = vec![F::zero(); g.rows() * g.patch()];
        g.for_each_tap(|dst, src, len| cols[dst..dst + len].copy_from_slice(&x[src..src + len]));
        cols
    }

    pub fn forward(&mut self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let g = self.geometry(x)?;
        if Self::use_shifted(&g) {
            let out = self.forward_shifted(&g, x)?;
            self.input = Some(x.clone());
            return Ok(out);
        }
        let c_out = self.out_channels();
        let cols = Self::im2col(&g, &x.data);
        let mut out = vec![F::zero(); g.rows() * c_out];
        for row in out.chunks_exact_mut(c_out) {
            row.copy_from_slice(&self.bias.data);
        }
        gemm(
            MatRef::new(&cols, g.rows(), g.patch()),
            MatRef::new(&self.weight.data, g.patch(), c_out),
            F::one(),
            &mut out,
            c_out,
        );
        self.input = Some(x.clone());
        Tensor::from_vec(&[g.b, g.ho, g.wo, c_out], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::State("conv2d backward called before forward".into()))?;
        let g = self.geometry(&x)?;
        let c_out = self.out_channels();
        if grad_out.shape() != [g.b, g.ho, g.wo, c_out] {
            return Err(Error::Shape(format!("conv2d grad {:?}", grad_out.shape())));
        }
        if Self::use_shifted(&g) {
            return self.backward_shifted(&g, &x, grad_out);
        }
        let cols = Self::im2col(&g, &x.data);
        let dy = MatRef::new(&grad_out.data, g.rows(), c_out);

        gemm(MatRef::new(&cols, g.rows(), g.patch()).t(), dy, F::one(), self.weight.grad_mut(), c_out);
        let db = self.bias.grad_mut();
        for row in grad_out.data.chunks_exact(c_out) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }

        let mut dcols = vec![F::zero(); g.rows() * g.patch()];
        gemm(dy, MatRef::new(&self.weight.data, g.patch(), c_out).t(), F::zero(), &mut dcols, g.patch());
        let mut dx = vec![F::zero(); x.len()];
        g.for_each_tap(|src, dst, len| {
            for (d, &v) in dx[dst..dst + len].iter_mut().zip(&dcols[src..src + len]) {
                *d += v;
            }
        });
        Tensor::from_vec(x.shape(), dx)
    }

    /// Shifted GEMMs have inner dimension `C`, which starves the kernel for
    /// very few input channels.
    fn use_shifted(g: &Geometry) -> bool {
        g.sh == 1 && g.sw == 1 && g.c_in >= 8
    }

    fn padded_dims(g: &Geometry) -> (usize, usize, usize, usize) {
        let hp = g.h + g.kh - 1;
        let wp = g.w + g.kw - 1;
        let m = g.b * hp * wp;
        let extra = (g.kh - 1) * wp + (g.kw - 1);
        (hp, wp, m, extra)
    }

    fn forward_shifted(&self, g: &Geometry, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (hp, wp, m, extra) = Self::padded_dims(g);
        let (c, c_out) = (g.c_in, self.out_channels());
        let mut padded = vec![F::zero(); (m + extra) * c];
        for n in 0..g.b {
            for y in 0..g.h {
                let src = (n * g.h + y) * g.w * c;
                let dst = ((n * hp + y + g.pad_top) * wp + g.pad_left) * c;
                padded[dst..dst + g.w * c].copy_from_slice(&x.data[src..src + g.w * c]);
            }
        }
        let mut acc = vec![F::zero(); m * c_out];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let off = (ky * wp + kx) * c;
                let tap = (ky * g.kw + kx) * c * c_out;
                gemm(
                    MatRef::new(&padded[off..off + m * c], m, c),
                    MatRef::new(&self.weight.data[tap..tap + c * c_out], c, c_out),
                    F::one(),
                    &mut acc,
                    c_out,
                );
            }
        }
        let mut out = Vec::with_capacity(g.b * g.h * g.w * c_out);
        for n in 0..g.b {
            for y in 0..g.h {
                let row = (n * hp + y) * wp * c_out;
                for px in acc[row..row + g.w * c_out].chunks_exact(c_out) {
                    out.extend(px.iter().zip(&self.bias.data).map(|(&a, &b)| a + b));
                }
            }
        }
        Tensor::from_vec(&[g.b, g.h, g.w, c_out], out)
    }

    fn backward_shifted(&mut self, g: &Geometry, x: &Tensor<F>, grad_out: &Tensor<F>) -> Result<Tensor<F>> {
        let (hp, wp, m, extra) = Self::padded_dims(g);
        let (c, c_out) = (g.c_in, self.out_channels());
        let mut padded = vec![F::zero(); (m + extra) * c];
        let mut dacc = vec![F::zero(); m * c_out];
        for n in 0..g.b {
            for y in 0..g.h {
                let src = (n * g.h + y) * g.w * c;
                let dst = ((n * hp + y + g.pad_top) * wp + g.pad_left) * c;
                padded[dst..dst + g.w * c].copy_from_slice(&x.data[src..src + g.w * c]);
                let gsrc = (n * g.h + y) * g.w * c_out;
                let gdst = (n * hp + y) * wp * c_out;
                dacc[gdst..gdst + g.w * c_out].copy_from_slice(&grad_out.data[gsrc..gsrc + g.w * c_out]);
            }
        }
        let db = self.bias.grad_mut();
        for row in grad_out.data.chunks_exact(c_out) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let dy = MatRef::new(&dacc, m, c_out);
        let mut dpad = vec![F::zero(); (m + extra) * c];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let off = (ky * wp + kx) * c;
                let tap = (ky * g.kw + kx) * c * c_out;
                gemm(
                    MatRef::new(&padded[off..off + m * c], m, c).t(),
                    dy,
                    F::one(),
                    &mut self.weight.grad_mut()[tap..tap + c * c_out],
                    c_out,
                );
                gemm(
                    dy,
                    MatRef::new(&self.weight.data[tap..tap + c * c_out], c, c_out).t(),
                    F::one(),
                    &mut dpad[off..off + m * c],
                    c,
                );
            }
        }
        let mut dx = Vec::with_capacity(x.len());
        for n in 0..g.b {
            for y in 0..g.h {
                let src = ((n * hp + y + g.pad_top) * wp + g.pad_left) * c;
                dx.extend_from_slice(&dpad[src..src + g.w * c]);
            }
        }
        Tensor::from_vec(x.shape(), dx)
    }

    pub fn params(&self) -> [&Tensor<F>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<F>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn rng() -> Rng {
        Rng::seed_from_u64(5)
    }

    /// Six nested loops, zero padding by bounds checks.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (n, h, wd, ci) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (kh, kw, _, co) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let (pt, pl) = ((kh - 1) / 2, (kw - 1) / 2);
        let mut out = vec![0.0; n * h * wd * co];
        for bi in 0..n {
            for y in 0..h {
                for xx in 0..wd {
                    for o in 0..co {
                        let mut acc = b.data[o];
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = y as isize + ky as isize - pt as isize;
                                let ix = xx as isize + kx as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                for c in 0..ci {
                                    acc += x.data[((bi * h + iy as usize) * wd + ix as usize) * ci + c]
                                        * w.data[((ky * kw + kx) * ci + c) * co + o];
                                }
                            }
                        }
                        out[((bi * h + y) * wd + xx) * co + o] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_adds_bias() {
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![0.25]).unwrap();
        let mut conv = Conv2d::<f64>::from_params(w, b, (1, 1)).unwrap();
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(conv.forward(&x).unwrap().data, vec![1.25, -1.75, 3.25, 0.75]);
    }

    #[test]
    fn table_conv1_shape() {
        let mut conv = Conv2d::<f32>::new((3, 3), 3, 32, (1, 1), &mut rng()).unwrap();
        let y = conv.forward(&Tensor::zeros(&[1, 60, 60, 3])).unwrap();
        assert_eq!(y.shape(), &[1, 60, 60, 32]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut r = rng();
        for (kh, kw, c) in [(3, 3, 2), (3, 1, 2), (1, 3, 2), (2, 2, 2), (3, 3, 9), (2, 3, 9)] {
            let mut conv = Conv2d::<f64>::new((kh, kw), c, 3, (1, 1), &mut r).unwrap();
            conv.bias.data.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
            let x = Tensor::from_vec(&[2, 5, 5, c], (0..50 * c).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
            let y = conv.forward(&x).unwrap();
            let expect = naive(&x, &conv.weight, &conv.bias);
            for (a, b) in y.data.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        use crate::nn::{gradcheck_network, GradCheckConfig, LayerSpec, Network, Objective};
        let mut r = rng();
        for (c, stride, kernel) in [(2, (1, 1), (3, 3)), (9, (1, 1), (3, 2)), (3, (2, 3), (3, 3))] {
            let specs = vec![("c".to_string(), LayerSpec::Conv2d { filters: 2, kernel, stride })];
            let mut net = Network::<f64>::new(&specs, [5, 6, c], &mut r).unwrap();
            let x = Tensor::from_vec(&[2, 5, 6, c], (0..60 * c).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
            let n_out = 2 * net.n_outputs().unwrap();
            let obj = Objective::Linear((0..n_out).map(|_| r.random_range(-1.0..1.0)).collect());
            for t in gradcheck_network(&mut net, &x, &obj, &GradCheckConfig::default()).unwrap() {
                assert!(t.max_rel_err < 1e-5, "{t:?}");
            }
        }
    }

    #[test]
    fn strided_output_size() {
        let mut conv = Conv2d::<f32>::new((3, 3), 1, 1, (2, 3), &mut rng()).unwrap();
        let y = conv.forward(&Tensor::zeros(&[1, 7, 7, 1])).unwrap();
        assert_eq!(y.shape(), &[1, 4, 3, 1]);
    }

    #[test]
    fn errors() {
        let mut conv = Conv2d::<f32>::new((3, 3), 3, 4, (1, 1), &mut rng()).unwrap();
        assert!(matches!(conv.forward(&Tensor::zeros(&[1, 4, 4, 2])), Err(Error::Shape(_))));
        assert!(matches!(conv.backward(&Tensor::zeros(&[1, 4, 4, 4])), Err(Error::State(_))));
        assert!(Conv2d::<f32>::new((0, 3), 3, 4, (1, 1), &mut rng()).is_err());
    }
}
