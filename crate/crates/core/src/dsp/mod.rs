//! Logmel feature extraction with sub-band segmentation.
//!
//! The pipeline per feature window is
//!
//! ```text
//! samples -> |DFT|^2 per frame (T points, hop T/2) -> per-band mel filterbank
//!         -> ln(. + floor) -> [logmel, delta, delta-delta]
//! ```
//!
//! A [`BandScheme`] splits (f_L, f_H) into sub-bands; each sub-band gets a
//! full `n_mels` filterbank of its own.

mod cache;
mod config;
mod features;
mod logmel;
mod mel;
mod normalize;
mod stft;

pub use cache::{decode_cache, encode_cache, read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use config::{BandScheme, SpectrogramConfig};
pub use features::{extract_features, FeatureExtractor};
pub use logmel::{delta, delta_channels, logmel, LogmelTensor, Matrix, DELTA_WIDTH};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterBank};
pub use normalize::{normalize_features, NormStats};
pub use stft::{stft_energy, EnergySpectrum, Stft};
