use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::config::SpectrogramConfig;
use crate::error::{Error, Result};

/// |S(m, n)|^2 for one feature window: `n_frames` rows by `n_bins` columns,
/// where column `j` holds DFT bin `m = j + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum {
    pub values: Vec<f64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub frame_hop: usize,
}

impl EnergySpectrum {
    pub fn zeros(n_frames: usize, n_bins: usize, frame_hop: usize) -> Self {
        Self {
            values: vec![0.0; n_frames * n_bins],
            n_frames,
            n_bins,
            frame_hop,
        }
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn get(&self, n: usize, bin_m: usize) -> f64 {
        self.values[n * self.n_bins + bin_m - 1]
    }
}

/// Reusable FFT plan for a fixed frame length.
pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Option<Vec<f64>>,
    cfg: SpectrogramConfig,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: &SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let t = cfg.fft_size;
        let window = cfg.hann_window.then(|| {
            (0..t)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / t as f64).cos())
                .collect()
        });
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(t),
            window,
            cfg: cfg.clone(),
        })
    }

    /// Energy spectrum of window `window_index`: frames
    /// `window_index * hop_frames ..` with frame `n` covering samples
    /// `n*T/2 .. n*T/2 + T` (rectangular window unless configured).
    pub fn energy<S: Copy + Into<f64>>(&self, samples: &[S], window_index: usize) -> Result<EnergySpectrum> {
        let cfg = &self.cfg;
        let needed = cfg.samples_for_window(window_index);
        if samples.len() < needed {
            return Err(Error::WindowOutOfRange {
                window: window_index,
                needed,
                available: samples.len(),
            });
        }
        let t = cfg.fft_size;
        let hop = cfg.hop();
        let bins = cfg.n_bins();
        let first = window_index * cfg.window_hop_frames;

        let mut out = EnergySpectrum::zeros(cfg.n_frames, bins, hop);
        let mut buf = vec![Complex::new(0.0, 0.0); t];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for n in 0..cfg.n_frames {
            let start = (first + n) * hop;
            let frame = &samples[start..start + t];
            for (i, (b, &s)) in buf.iter_mut().zip(frame).enumerate() {
                let w = self.window.as_ref().map_or(1.0, |w| w[i]);
                *b = Complex::new(s.into() * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            let row = &mut out.values[n * bins..(n + 1) * bins];
            for (j, e) in row.iter_mut().enumerate() {
                *e = buf[j + 1].norm_sqr();
            }
        }
        Ok(out)
    }
}

/// One-shot convenience over [`Stft::energy`].
pub fn stft_energy<S: Copy + Into<f64>>(samples: &[S], cfg: &SpectrogramConfig, window_index: usize) -> Result<EnergySpectrum> {
    Stft::new(cfg)?.energy(samples, window_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(t: usize, frames: usize) -> SpectrogramConfig {
        SpectrogramConfig {
            fft_size: t,
            n_frames: frames,
            ..Default::default()
        }
    }

    #[test]
    fn zero_signal() {
        let c = cfg(64, 3);
        let s = vec![0.0f32; c.samples_for_window(0)];
        assert!(stft_energy(&s, &c, 0).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_aligned_cosine() {
        let c = cfg(64, 1);
        let m0 = 5;
        let s: Vec<f64> = (0..64)
            .map(|t| (2.0 * PI * m0 as f64 * t as f64 / 64.0).cos())
            .collect();
        let e = stft_energy(&s, &c, 0).unwrap();
        assert!((e.get(0, m0) - 1024.0).abs() < 1e-9);
        for m in (1..=32).filter(|&m| m != m0) {
            assert!(e.get(0, m) < 1e-9 * 1024.0, "bin {m}: {}", e.get(0, m));
        }
    }

    #[test]
    fn circular_shift_keeps_frame_energy() {
        let c = cfg(128, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<f32> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let total = |x: &[f32]| stft_energy(x, &c, 0).unwrap().values.iter().sum::<f64>();
        let base = total(&s);
        for shift in [1, 17, 64] {
            let mut r = s.clone();
            r.rotate_left(shift);
            assert!((total(&r) - base).abs() <= 1e-6 * base);
        }
    }

    #[test]
    fn out_of_range_window() {
        let c = cfg(64, 4);
        let s = vec![0.0f32; c.samples_for_window(0)];
        assert!(stft_energy(&s, &c, 0).is_ok());
        assert!(matches!(stft_energy(&s, &c, 1), Err(Error::WindowOutOfRange { window: 1, .. })));
    }

    #[test]
    fn window_offset_follows_hop() {
        // window 1 starts window_hop_frames frames later
        let c = SpectrogramConfig {
            fft_size: 32,
            n_frames: 4,
            window_hop_frames: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s: Vec<f32> = (0..c.samples_for_window(1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w0 = stft_energy(&s, &c, 0).unwrap();
        let w1 = stft_energy(&s, &c, 1).unwrap();
        assert_eq!(w0.row(2), w1.row(0));
        assert_eq!(w0.row(3), w1.row(1));
    }
}
