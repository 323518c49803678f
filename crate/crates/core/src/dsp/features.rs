use super::config::{BandScheme, SpectrogramConfig};
use super::logmel::{delta_channels, logmel, LogmelTensor};
use super::mel::MelFilterBank;
use super::stft::Stft;
use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// Per-band Logmel extraction with filterbanks built once.
///
/// Every band gets its own `n_mels`-filter bank spanning (f_{i-1}, f_i), so
/// each band yields the same `n_frames x n_mels x 3` block. The energy
/// spectrum of a window is computed once and shared across bands.
#[derive(Debug)]
pub struct FeatureExtractor {
    cfg: SpectrogramConfig,
    scheme: BandScheme,
    stft: Stft,
    banks: Vec<MelFilterBank>,
}

impl FeatureExtractor {
    pub fn new(cfg: &SpectrogramConfig, scheme: &BandScheme) -> Result<Self> {
        cfg.validate()?;
        scheme.validate(cfg.sample_rate_hz)?;
        let banks = scheme
            .bands()
            .map(|(lo, hi)| MelFilterBank::new(cfg, lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            scheme: scheme.clone(),
            stft: Stft::new(cfg)?,
            banks,
        })
    }

    /// Whole-band (0, f_s/2) extractor.
    pub fn baseline(cfg: &SpectrogramConfig) -> Result<Self> {
        Self::new(cfg, &BandScheme::whole_band(cfg.sample_rate_hz))
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> &BandScheme {
        &self.scheme
    }

    pub fn banks(&self) -> &[MelFilterBank] {
        &self.banks
    }

    /// Features for every (window, band) pair, window-major. The tail of the
    /// clip is zero padded so the last window is complete.
    pub fn extract(&self, clip: &AudioClip) -> Result<Vec<LogmelTensor>> {
        if clip.sample_rate_hz != self.cfg.sample_rate_hz {
            return Err(Error::SampleRate {
                path: clip.clip_id.clone(),
                expected: self.cfg.sample_rate_hz,
                found: clip.sample_rate_hz,
            });
        }
        let windows = self.cfg.windows_in(clip.samples.len());
        let needed = self.cfg.samples_for_window(windows - 1);
        let padded;
        let samples = if clip.samples.len() < needed {
            let mut v = clip.samples.clone();
            v.resize(needed, 0.0);
            padded = v;
            &padded
        } else {
            &clip.samples
        };

        let mut out = Vec::with_capacity(windows * self.banks.len());
        for w in 0..windows {
            let spec = self.stft.energy(samples, w)?;
            for (b, bank) in self.banks.iter().enumerate() {
                let mut t = delta_channels(&logmel(&spec, bank, &self.cfg)?)?;
                t.band_index = b;
                t.window_index = w;
                t.clip_id = clip.clip_id.clone();
                out.push(t);
            }
        }
        Ok(out)
    }
}

/// One-shot form of [`FeatureExtractor::extract`].
pub fn extract_features(clip: &AudioClip, cfg: &SpectrogramConfig, scheme: &BandScheme) -> Result<Vec<LogmelTensor>> {
    FeatureExtractor::new(cfg, scheme)?.extract(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn clip(samples: Vec<f32>) -> AudioClip {
        AudioClip {
            samples,
            sample_rate_hz: 44100,
            clip_id: "c".into(),
            fold: 1,
            class_index: 0,
        }
    }

    #[test]
    fn window_and_band_layout() {
        let cfg = SpectrogramConfig::default();
        let scheme = BandScheme::from_inner_khz(&[10.0], 44100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = clip((0..44100 * 2).map(|_| rng.random_range(-0.5..0.5)).collect());
        let feats = extract_features(&c, &cfg, &scheme).unwrap();
        // 2 s: 171 frames -> floor(111/30)+1 = 4 windows, remainder 21 -> 5
        assert_eq!(cfg.frames_in(c.samples.len()), 171);
        assert_eq!(feats.len(), 5 * 2);
        for (i, f) in feats.iter().enumerate() {
            assert_eq!(f.shape(), [60, 60, 3]);
            assert_eq!((f.window_index, f.band_index), (i / 2, i % 2));
            assert!(f.data.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn low_pass_signal_leaves_upper_band_at_floor() {
        let cfg = SpectrogramConfig::default();
        let scheme = BandScheme::from_inner_khz(&[10.0], 44100).unwrap();
        // partials on exact bin frequencies below 8 kHz: no leakage under a
        // rectangular window
        let bin_hz = 44100.0 / 1024.0;
        let n = cfg.samples_for_window(0);
        let s: Vec<f64> = (0..n)
            .map(|t| {
                [20usize, 75, 160]
                    .iter()
                    .map(|&m| 0.3 * (2.0 * PI * m as f64 * bin_hz * t as f64 / 44100.0).sin())
                    .sum()
            })
            .collect();
        let feats = extract_features(&clip(s.iter().map(|&x| x as f32).collect()), &cfg, &scheme).unwrap();
        let floor = cfg.log_floor.ln() as f32;
        let high = &feats[1];
        let high_max = (0..60).flat_map(|n| (0..60).map(move |k| (n, k))).map(|(n, k)| high.get(n, k, 0)).fold(f32::MIN, f32::max);
        assert!(high_max < floor + 1.0, "upper band max {high_max}, floor {floor}");
        let low = &feats[0];
        let low_max = (0..60).map(|k| low.get(30, k, 0)).fold(f32::MIN, f32::max);
        assert!(low_max > 5.0);
    }

    #[test]
    fn single_band_scheme_equals_baseline() {
        let cfg = SpectrogramConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = clip((0..50_000).map(|_| rng.random_range(-0.5..0.5)).collect());
        let base = FeatureExtractor::baseline(&cfg).unwrap().extract(&c).unwrap();
        let seg = extract_features(&c, &cfg, &BandScheme::new(vec![0.0, 22050.0], 44100).unwrap()).unwrap();
        assert_eq!(base, seg);
    }

    #[test]
    fn short_clip_is_padded() {
        let cfg = SpectrogramConfig::default();
        let feats = FeatureExtractor::baseline(&cfg).unwrap().extract(&clip(vec![0.1; 300])).unwrap();
        assert_eq!(feats.len(), 1);
        assert!(feats[0].data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rate_mismatch() {
        let cfg = SpectrogramConfig::default();
        let mut c = clip(vec![0.0; 2000]);
        c.sample_rate_hz = 16000;
        assert!(matches!(
            FeatureExtractor::baseline(&cfg).unwrap().extract(&c),
            Err(Error::SampleRate { .. })
        ));
    }
}
