use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::MixupConfig;
use crate::dsp::{BandScheme, SpectrogramConfig};
use crate::error::{Error, IoContext, Result};
use crate::fusion::FusionWeights;
use crate::model::{Architecture, TrainConfig};
use crate::nn::LrSchedule;

pub const CONFIG_VERSION: u32 = 1;

/// One train/validation/test assignment of folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub test_fold: u32,
    pub val_fold: u32,
    pub train_folds: Vec<u32>,
}

/// Rotating cross-validation: for each test fold `t` the validation fold is
/// the next one (`t % n_folds + 1`) and the remaining folds train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldPolicy {
    pub n_folds: u32,
    /// Test folds to rotate over; empty means every fold.
    #[serde(default)]
    pub test_folds: Vec<u32>,
}

impl Default for FoldPolicy {
    fn default() -> Self {
        Self {
            n_folds: 5,
            test_folds: Vec::new(),
        }
    }
}

impl FoldPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 3 {
            return Err(Error::Config(format!(
                "fold policy needs at least 3 folds (train, validation, test), got {}",
                self.n_folds
            )));
        }
        if let Some(f) = self.test_folds.iter().find(|&&f| f == 0 || f > self.n_folds) {
            return Err(Error::Config(format!("test fold {f} outside 1..={}", self.n_folds)));
        }
        let mut seen = self.test_folds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.test_folds.len() {
            return Err(Error::Config(format!("duplicate test folds in {:?}", self.test_folds)));
        }
        Ok(())
    }

    pub fn splits(&self) -> Vec<Split> {
        let tests: Vec<u32> = if self.test_folds.is_empty() {
            (1..=self.n_folds).collect()
        } else {
            self.test_folds.clone()
        };
        tests
            .into_iter()
            .map(|t| {
                let v = t % self.n_folds + 1;
                Split {
                    test_fold: t,
                    val_fold: v,
                    train_folds: (1..=self.n_folds).filter(|&f| f != t && f != v).collect(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSettings {
    /// Grid-search the weights on the validation fold. When off (and no
    /// explicit weights are given) the branches are averaged uniformly.
    pub search: bool,
    pub step: f64,
    /// Fixed weights; these take precedence over the search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            search: true,
            step: 0.1,
            weights: None,
        }
    }
}

/// Everything needed to reproduce an experiment. Stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset_root: PathBuf,
    /// `path,fold,target` index relative to the dataset root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_index: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Master seed; must fit in a signed 64-bit integer.
    pub seed: u64,
    pub network: Architecture,
    /// Cut points in Hz, f_L first and f_H last.
    pub bands: BandScheme,
    pub spectrogram: SpectrogramConfig,
    pub mixup: MixupConfig,
    pub training: TrainConfig,
    pub folds: FoldPolicy,
    pub fusion: FusionSettings,
}

impl ExperimentConfig {
    /// Full-size ESC-50 settings. Empty mel filters are allowed because 60
    /// filters below 3 kHz are narrower than the lowest FFT bins.
    pub fn esc50(dataset_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let spectrogram = SpectrogramConfig {
            allow_empty_filters: true,
            ..Default::default()
        };
        Self {
            version: CONFIG_VERSION,
            dataset_root: dataset_root.into(),
            csv_index: None,
            output_dir: output_dir.into(),
            seed: 1,
            network: Architecture::Crnn,
            bands: BandScheme::from_inner_khz(&[3.0, 6.0, 10.0], spectrogram.sample_rate_hz).expect("valid scheme"),
            spectrogram,
            mixup: MixupConfig::default(),
            training: TrainConfig::default(),
            folds: FoldPolicy::default(),
            fusion: FusionSettings::default(),
        }
    }

    /// Settings sized for the synthetic dataset from [`super::generate_toy_dataset`]:
    /// two bands split at 10 kHz, one test fold, a short schedule.
    pub fn toy(dataset_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let mut c = Self::esc50(dataset_root, output_dir);
        c.bands = BandScheme::from_inner_khz(&[10.0], c.spectrogram.sample_rate_hz).expect("valid scheme");
        c.training = TrainConfig {
            epochs: 12,
            batch_size: 16,
            momentum: 0.9,
            lr: LrSchedule {
                initial: 0.01,
                decay_factor: 10.0,
                period_epochs: 100,
            },
        };
        c.folds.test_folds = vec![1];
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} does not fit in a signed 64-bit integer", self.seed)));
        }
        self.spectrogram.validate()?;
        self.bands.validate(self.spectrogram.sample_rate_hz)?;
        if self.mixup.enabled {
            self.mixup.validate()?;
        }
        self.training.validate()?;
        self.folds.validate()?;
        if let Some(w) = &self.fusion.weights {
            let w = FusionWeights::new(w.clone())?;
            if w.len() != self.bands.n_bands() {
                return Err(Error::Config(format!(
                    "{} fusion weights for {} bands",
                    w.len(),
                    self.bands.n_bands()
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("parsing config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).ctx(|| format!("writing {}", path.display()))
    }

    /// SHA-256 (hex) of the canonical TOML form with `output_dir` blanked,
    /// so moving the outputs does not change the hash.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Ok(hex_digest(c.to_toml()?.as_bytes()))
    }

    /// Hash of the settings that determine the feature cache.
    pub fn feature_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            dataset_root: &'a Path,
            csv_index: &'a Option<PathBuf>,
            bands: &'a BandScheme,
            spectrogram: &'a SpectrogramConfig,
        }
        let key = Key {
            dataset_root: &self.dataset_root,
            csv_index: &self.csv_index,
            bands: &self.bands,
            spectrogram: &self.spectrogram,
        };
        let text = toml::to_string(&key).map_err(|e| Error::Config(format!("serializing config: {e}")))?;
        Ok(hex_digest(text.as_bytes()))
    }

    /// Hash of the settings that determine the trained checkpoints.
    pub fn model_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            features: String,
            seed: u64,
            network: Architecture,
            mixup: &'a MixupConfig,
            training: &'a TrainConfig,
            folds: &'a FoldPolicy,
        }
        let key = Key {
            features: self.feature_hash()?,
            seed: self.seed,
            network: self.network,
            mixup: &self.mixup,
            training: &self.training,
            folds: &self.folds,
        };
        let text = toml::to_string(&key).map_err(|e| Error::Config(format!("serializing config: {e}")))?;
        Ok(hex_digest(text.as_bytes()))
    }

    pub fn features_dir(&self) -> Result<PathBuf> {
        Ok(self.output_dir.join("features").join(&self.feature_hash()?[..16]))
    }

    pub fn models_dir(&self) -> Result<PathBuf> {
        Ok(self.output_dir.join("models").join(&self.model_hash()?[..16]))
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
