use super::config::SpectrogramConfig;
use super::mel::MelFilterBank;
use super::stft::EnergySpectrum;
use crate::error::{Error, Result};

/// Regression half-width of the delta operator.
pub const DELTA_WIDTH: usize = 2;

/// Row-major `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }
}

/// Three-channel feature block for one band of one window:
/// `n_frames x n_mels x 3`, channel fastest (logmel, delta, delta-delta).
#[derive(Debug, Clone, PartialEq)]
pub struct LogmelTensor {
    pub data: Vec<f32>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub band_index: usize,
    pub clip_id: String,
    pub window_index: usize,
}

impl LogmelTensor {
    pub const CHANNELS: usize = 3;

    pub fn shape(&self) -> [usize; 3] {
        [self.n_frames, self.n_mels, Self::CHANNELS]
    }

    pub fn get(&self, n: usize, k: usize, c: usize) -> f32 {
        self.data[(n * self.n_mels + k) * Self::CHANNELS + c]
    }
}

/// log(sum_m E(n, m) H(m, k) + floor), natural log.
pub fn logmel(spec: &EnergySpectrum, bank: &MelFilterBank, cfg: &SpectrogramConfig) -> Result<Matrix> {
    if spec.n_bins != bank.n_bins {
        return Err(Error::Shape(format!(
            "spectrum has {} bins but the filterbank expects {}",
            spec.n_bins, bank.n_bins
        )));
    }
    let mut out = Matrix::zeros(spec.n_frames, bank.n_filters);
    for n in 0..spec.n_frames {
        let energy = spec.row(n);
        for k in 0..bank.n_filters {
            let sum = match bank.support(k) {
                Some((a, b)) => bank.row(k)[a..=b]
                    .iter()
                    .zip(&energy[a..=b])
                    .map(|(h, e)| h * e)
                    .sum::<f64>(),
                None => 0.0,
            };
            out.set(n, k, (sum + cfg.log_floor).ln());
        }
    }
    Ok(out)
}

/// Regression delta along rows (time) with edge replication:
/// d(n) = sum_{d=1..2} d (x(n+d) - x(n-d)) / (2 sum d^2).
pub fn delta(x: &Matrix) -> Matrix {
    let norm: f64 = 2.0 * (1..=DELTA_WIDTH).map(|d| (d * d) as f64).sum::<f64>();
    let last = x.rows as isize - 1;
    let clamp = |n: isize| n.clamp(0, last) as usize;
    let mut out = Matrix::zeros(x.rows, x.cols);
    for n in 0..x.rows as isize {
        for k in 0..x.cols {
            let mut acc = 0.0;
            for d in 1..=DELTA_WIDTH as isize {
                acc += d as f64 * (x.get(clamp(n + d), k) - x.get(clamp(n - d), k));
            }
            out.set(n as usize, k, acc / norm);
        }
    }
    out
}

/// Stack logmel, delta and delta-delta into a [`LogmelTensor`].
pub fn delta_channels(logmel: &Matrix) -> Result<LogmelTensor> {
    let needed = 2 * DELTA_WIDTH + 1;
    if logmel.rows < needed {
        return Err(Error::TooFewFrames {
            needed,
            got: logmel.rows,
        });
    }
    let d1 = delta(logmel);
    let d2 = delta(&d1);
    let mut data = Vec::with_capacity(logmel.data.len() * 3);
    for ((a, b), c) in logmel.data.iter().zip(&d1.data).zip(&d2.data) {
        data.extend_from_slice(&[*a as f32, *b as f32, *c as f32]);
    }
    Ok(LogmelTensor {
        data,
        n_frames: logmel.rows,
        n_mels: logmel.cols,
        band_index: 0,
        clip_id: String::new(),
        window_index: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
    }

    fn small_cfg() -> SpectrogramConfig {
        SpectrogramConfig {
            fft_size: 64,
            n_frames: 6,
            n_mels: 4,
            sample_rate_hz: 8000,
            ..Default::default()
        }
    }

    #[test]
    fn zero_spectrum_gives_log_floor() {
        let cfg = small_cfg();
        let bank = MelFilterBank::new(&cfg, 0.0, 4000.0).unwrap();
        let spec = EnergySpectrum::zeros(6, 32, 32);
        let out = logmel(&spec, &bank, &cfg).unwrap();
        assert!(out.data.iter().all(|&v| v == cfg.log_floor.ln()));
    }

    #[test]
    fn impulse_spectrum() {
        let cfg = small_cfg();
        let bank = MelFilterBank::new(&cfg, 0.0, 4000.0).unwrap();
        let mut spec = EnergySpectrum::zeros(6, 32, 32);
        let (m_star, e) = (9, 7.5);
        for n in 0..6 {
            spec.values[n * 32 + m_star - 1] = e;
        }
        let out = logmel(&spec, &bank, &cfg).unwrap();
        for n in 0..6 {
            for k in 0..4 {
                let expect = (e * bank.get(k, m_star) + cfg.log_floor).ln();
                assert_eq!(out.get(n, k), expect);
            }
        }
    }

    #[test]
    fn matches_double_loop_oracle() {
        let cfg = small_cfg();
        let bank = MelFilterBank::new(&cfg, 300.0, 3500.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut spec = EnergySpectrum::zeros(6, 32, 32);
        spec.values.iter_mut().for_each(|v| *v = rng.random_range(0.0..50.0));
        let out = logmel(&spec, &bank, &cfg).unwrap();
        for n in 0..6 {
            for k in 0..4 {
                let mut s = 0.0;
                for m in 1..=32 {
                    s += spec.get(n, m) * bank.get(k, m);
                }
                assert!((out.get(n, k) - (s + cfg.log_floor).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let cfg = small_cfg();
        let bank = MelFilterBank::new(&cfg, 0.0, 4000.0).unwrap();
        let spec = EnergySpectrum::zeros(6, 16, 32);
        assert!(matches!(logmel(&spec, &bank, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn delta_of_constant_is_zero() {
        let x = Matrix::from_vec(8, 2, vec![4.25; 16]).unwrap();
        let t = delta_channels(&x).unwrap();
        for n in 0..8 {
            for k in 0..2 {
                assert_eq!(t.get(n, k, 1), 0.0);
                assert_eq!(t.get(n, k, 2), 0.0);
            }
        }
    }

    #[test]
    fn delta_of_ramp_is_slope() {
        let c = 0.75;
        let x = Matrix::from_vec(10, 1, (0..10).map(|n| c * n as f64).collect()).unwrap();
        let d = delta(&x);
        for n in 2..8 {
            assert!((d.get(n, 0) - c).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_matches_direct_formula() {
        let x = random(9, 3, 5);
        let d = delta(&x);
        let at = |n: isize, k: usize| x.get(n.clamp(0, 8) as usize, k);
        for n in 0..9isize {
            for k in 0..3 {
                let expect = (1.0 * (at(n + 1, k) - at(n - 1, k)) + 2.0 * (at(n + 2, k) - at(n - 2, k))) / 10.0;
                assert!((d.get(n as usize, k) - expect).abs() < 1e-12);
            }
        }
        let dd = delta(&d);
        let t = delta_channels(&x).unwrap();
        assert_eq!(t.get(4, 1, 2), dd.get(4, 1) as f32);
    }

    #[test]
    fn too_few_frames() {
        let x = random(4, 2, 1);
        assert!(matches!(delta_channels(&x), Err(Error::TooFewFrames { needed: 5, got: 4 })));
    }
}
