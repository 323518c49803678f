use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::LogmelTensor;
use crate::error::{Error, Result};
use crate::nn::{read_checkpoint, write_checkpoint, LayerSpec, Network, SgdNesterov, Tensor};
use crate::seed::Rng;

/// Parameter count of the CRNN on `(60, 60, 3)` input with 50 classes.
pub const CRNN_PARAM_COUNT_50: usize = 2_181_970;

pub const INPUT_MELS: usize = 60;
pub const INPUT_FRAMES: usize = 60;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Conv stack followed by two bidirectional GRUs.
    Crnn,
    /// Conv stack with the GRUs replaced by a temporal mean over Pool4.
    CnnOnly,
}

impl Architecture {
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Crnn => "CRNN",
            Architecture::CnnOnly => "CNN",
        }
    }
}

fn conv(filters: usize, kernel: (usize, usize)) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel,
        stride: (1, 1),
    }
}

fn pool(stride: (usize, usize)) -> LayerSpec {
    LayerSpec::MaxPool2d { stride }
}

/// The layer stack, with a ReLU after every convolution.
pub fn crnn_specs(n_classes: usize, arch: Architecture) -> Vec<(String, LayerSpec)> {
    let mut s: Vec<(String, LayerSpec)> = Vec::new();
    let mut push = |name: &str, spec: LayerSpec| s.push((name.to_string(), spec));
    let blocks = [
        (32, (3, 3), (4, 2)),
        (64, (3, 1), (2, 1)),
        (128, (1, 3), (1, 2)),
        (256, (3, 3), (2, 2)),
    ];
    for (b, &(filters, kernel, stride)) in blocks.iter().enumerate() {
        for j in 1..=2 {
            let i = 2 * b + j;
            push(&format!("conv{i}"), conv(filters, kernel));
            push(&format!("relu{i}"), LayerSpec::Relu);
        }
        push(&format!("pool{}", b + 1), pool(stride));
    }
    push("to_sequence", LayerSpec::ToSequence);
    if arch == Architecture::Crnn {
        push("gru1", LayerSpec::BiGru { units: 128 });
        push("gru2", LayerSpec::BiGru { units: 128 });
    }
    push("time_mean", LayerSpec::TimeMean);
    push("fc1", LayerSpec::Dense { units: n_classes });
    push("softmax", LayerSpec::Softmax);
    s
}

/// A class-probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub probs: Vec<f64>,
}

impl ScoreVector {
    pub const SUM_TOL: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let s: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0 + Self::SUM_TOL).contains(p)) || (s - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::NonFinite(format!("not a probability vector (sum {s})")));
        }
        Ok(Self { probs })
    }

    pub fn argmax(&self) -> usize {
        crate::fusion::argmax(&self.probs)
    }
}

/// One branch classifier, `f32` parameters.
#[derive(Debug, Clone)]
pub struct CrnnModel {
    pub net: Network<f32>,
    pub n_classes: usize,
    pub band_index: usize,
    pub arch: Architecture,
}

/// Packs features into a `[B, mels, frames, 3]` batch: height is frequency
/// and width is time.
pub fn to_batch(features: &[&LogmelTensor]) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(features.len() * INPUT_MELS * INPUT_FRAMES * INPUT_CHANNELS);
    for f in features {
        if f.shape() != [INPUT_FRAMES, INPUT_MELS, INPUT_CHANNELS] {
            return Err(Error::Shape(format!(
                "feature {}#{} has shape {:?}, expected ({INPUT_FRAMES}, {INPUT_MELS}, {INPUT_CHANNELS})",
                f.clip_id,
                f.window_index,
                f.shape()
            )));
        }
        for k in 0..INPUT_MELS {
            for n in 0..INPUT_FRAMES {
                let i = (n * INPUT_MELS + k) * INPUT_CHANNELS;
                data.extend_from_slice(&f.data[i..i + INPUT_CHANNELS]);
            }
        }
    }
    Tensor::from_vec(&[features.len(), INPUT_MELS, INPUT_FRAMES, INPUT_CHANNELS], data)
}

impl CrnnModel {
    pub fn new(n_classes: usize, band_index: usize, arch: Architecture, rng: &mut Rng) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {n_classes}")));
        }
        let net = Network::new(&crnn_specs(n_classes, arch), [INPUT_MELS, INPUT_FRAMES, INPUT_CHANNELS], rng)?;
        Ok(Self {
            net,
            n_classes,
            band_index,
            arch,
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Class probabilities for each feature, in `f64`.
    pub fn predict_batch(&mut self, features: &[&LogmelTensor]) -> Result<Vec<ScoreVector>> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(f) = features.iter().find(|f| f.band_index != self.band_index) {
            return Err(Error::Config(format!(
                "feature from band {} given to the band {} model",
                f.band_index, self.band_index
            )));
        }
        let p = self.net.predict(&to_batch(features)?)?;
        if !p.all_finite() {
            return Err(Error::NonFinite("model produced non-finite scores".into()));
        }
        p.data
            .chunks_exact(self.n_classes)
            .map(|row| {
                let probs: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                ScoreVector::new(probs)
            })
            .collect()
    }

    pub fn predict(&mut self, feature: &LogmelTensor) -> Result<ScoreVector> {
        Ok(self.predict_batch(&[feature])?.remove(0))
    }

    pub fn save(&self, path: &Path, optimizer: Option<&SgdNesterov<f32>>) -> Result<()> {
        write_checkpoint(path, &self.net.params(), optimizer)
    }

    /// Rebuilds the architecture and loads parameters by name. Returns the
    /// stored optimizer state when present.
    pub fn load(
        path: &Path,
        n_classes: usize,
        band_index: usize,
        arch: Architecture,
    ) -> Result<(Self, Option<SgdNesterov<f32>>)> {
        let ckpt = read_checkpoint::<f32>(path)?;
        let mut rng = <Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Self::new(n_classes, band_index, arch, &mut rng)?;
        model.net.load_params(&ckpt.tensors)?;
        Ok((model, ckpt.optimizer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn parameter_count_matches_constant() {
        let m = CrnnModel::new(50, 0, Architecture::Crnn, &mut Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m.param_count(), CRNN_PARAM_COUNT_50);
        let c = CrnnModel::new(50, 0, Architecture::CnnOnly, &mut Rng::seed_from_u64(0)).unwrap();
        assert_eq!(c.param_count(), 987_936 + 1024 * 50 + 50);
    }

    #[test]
    fn stack_order() {
        let names: Vec<String> = crnn_specs(50, Architecture::Crnn)
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| !n.starts_with("relu") && n != "to_sequence" && n != "time_mean" && n != "softmax")
            .collect();
        let expect = [
            "conv1", "conv2", "pool1", "conv3", "conv4", "pool2", "conv5", "conv6", "pool3", "conv7", "conv8", "pool4",
            "gru1", "gru2", "fc1",
        ];
        assert_eq!(names, expect);
    }

    #[test]
    fn batch_layout_puts_time_on_width() {
        let mut data = vec![0f32; INPUT_FRAMES * INPUT_MELS * 3];
        // frame 5, mel 7, channel 2
        data[(5 * INPUT_MELS + 7) * 3 + 2] = 1.0;
        let f = LogmelTensor {
            data,
            n_frames: INPUT_FRAMES,
            n_mels: INPUT_MELS,
            band_index: 0,
            clip_id: "c".into(),
            window_index: 0,
        };
        let b = to_batch(&[&f]).unwrap();
        assert_eq!(b.data[(7 * INPUT_FRAMES + 5) * 3 + 2], 1.0);
        assert_eq!(b.data.iter().sum::<f32>(), 1.0);
    }
}
