use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::logmel::LogmelTensor;
use crate::error::{Error, IoContext, Result};

const STD_FLOOR: f64 = 1e-8;
const CHANNELS: usize = LogmelTensor::CHANNELS;

/// Per-channel mean and standard deviation of the training features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl NormStats {
    /// Two-pass statistics in a fixed order (features in sequence, values in
    /// storage order), so the result does not depend on scheduling.
    pub fn compute(features: &[LogmelTensor]) -> Result<Self> {
        let count: usize = features.iter().map(|f| f.data.len() / CHANNELS).sum();
        if count == 0 {
            return Err(Error::Stats("no training features to compute statistics from".into()));
        }
        let mut sum = [0.0f64; CHANNELS];
        for f in features {
            for px in f.data.chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    sum[c] += px[c] as f64;
                }
            }
        }
        let mean = sum.map(|s| s / count as f64);
        let mut sq = [0.0f64; CHANNELS];
        for f in features {
            for px in f.data.chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    let d = px[c] as f64 - mean[c];
                    sq[c] += d * d;
                }
            }
        }
        let std = sq.map(|s| (s / count as f64).sqrt().max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn apply(&self, feature: &mut LogmelTensor) {
        for px in feature.data.chunks_exact_mut(CHANNELS) {
            for c in 0..CHANNELS {
                px[c] = ((px[c] as f64 - self.mean[c]) / self.std[c]) as f32;
            }
        }
    }

    pub fn invert(&self, feature: &mut LogmelTensor) {
        for px in feature.data.chunks_exact_mut(CHANNELS) {
            for c in 0..CHANNELS {
                px[c] = (px[c] as f64 * self.std[c] + self.mean[c]) as f32;
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# per-channel feature standardization (0 = logmel, 1 = delta, 2 = delta-delta)\nversion = 1\n");
        for c in 0..CHANNELS {
            // 17 significant digits round-trips any f64
            writeln!(s, "channel.{c}.mean = {:.16e}", self.mean[c]).unwrap();
            writeln!(s, "channel.{c}.std = {:.16e}", self.std[c]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mean = [f64::NAN; CHANNELS];
        let mut std = [f64::NAN; CHANNELS];
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Stats(format!("malformed line `{line}`")))?;
            if key == "version" {
                if value != "1" {
                    return Err(Error::Stats(format!("unsupported stats version {value}")));
                }
                continue;
            }
            let parts: Vec<&str> = key.split('.').collect();
            let (c, field) = match parts.as_slice() {
                ["channel", c, f] => (c.parse::<usize>().ok().filter(|&c| c < CHANNELS), *f),
                _ => (None, ""),
            };
            let c = c.ok_or_else(|| Error::Stats(format!("unknown key `{key}`")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| Error::Stats(format!("bad number `{value}` for `{key}`")))?;
            match field {
                "mean" => mean[c] = v,
                "std" => std[c] = v,
                _ => return Err(Error::Stats(format!("unknown key `{key}`"))),
            }
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) || std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Stats("incomplete or invalid statistics".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).ctx(|| format!("writing {}", path.display()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path).ctx(|| format!("reading {}", path.display()))?)
    }
}

/// Standardize in place. Without `stats` the collection is treated as the
/// training split and its statistics are computed and returned.
pub fn normalize_features(features: &mut [LogmelTensor], stats: Option<&NormStats>) -> Result<NormStats> {
    let stats = match stats {
        Some(s) => *s,
        None => NormStats::compute(features)?,
    };
    features.iter_mut().for_each(|f| stats.apply(f));
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tensor(data: Vec<f32>) -> LogmelTensor {
        let n_mels = data.len() / 3;
        LogmelTensor {
            data,
            n_frames: 1,
            n_mels,
            band_index: 0,
            clip_id: String::new(),
            window_index: 0,
        }
    }

    fn random_set(seed: u64) -> Vec<LogmelTensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..5)
            .map(|_| {
                tensor(
                    (0..300)
                        .map(|i| match i % 3 {
                            0 => rng.random_range(-23.0..12.0),
                            1 => rng.random_range(-2.0..2.0),
                            _ => rng.random_range(-0.5..0.5),
                        })
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn standardizes_training_data() {
        let mut feats = random_set(1);
        normalize_features(&mut feats, None).unwrap();
        let again = NormStats::compute(&feats).unwrap();
        for c in 0..3 {
            assert!(again.mean[c].abs() < 1e-6);
            assert!((again.std[c] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_goes_to_zero() {
        let mut feats = vec![tensor(vec![4.0, 1.0, -2.0, 4.0, 3.0, 5.0])];
        let stats = normalize_features(&mut feats, None).unwrap();
        assert_eq!(stats.std[0], 1e-8);
        assert_eq!(feats[0].data[0], 0.0);
        assert_eq!(feats[0].data[3], 0.0);
    }

    #[test]
    fn inverse_transform() {
        let orig = random_set(2);
        let mut feats = orig.clone();
        let stats = normalize_features(&mut feats, None).unwrap();
        feats.iter_mut().for_each(|f| stats.invert(f));
        for (a, b) in orig.iter().zip(&feats) {
            for (x, y) in a.data.iter().zip(&b.data) {
                // f32 storage: tolerance relative to magnitude
                assert!((x - y).abs() as f64 <= 1e-6 * (x.abs() as f64).max(1.0));
            }
        }
    }

    #[test]
    fn empty_without_stats() {
        assert!(matches!(normalize_features(&mut [], None), Err(Error::Stats(_))));
        let stats = NormStats { mean: [0.0; 3], std: [1.0; 3] };
        assert!(normalize_features(&mut [], Some(&stats)).is_ok());
    }

    #[test]
    fn text_round_trip() {
        let stats = NormStats::compute(&random_set(3)).unwrap();
        let back = NormStats::from_text(&stats.to_text()).unwrap();
        assert_eq!(stats, back);
        assert!(NormStats::from_text("version = 1\nchannel.0.mean = 1\n").is_err());
    }
}
