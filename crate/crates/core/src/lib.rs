//! Environmental sound classification with sub-spectrogram segmentation.
//!
//! The crate covers the whole pipeline:
//!
//! - [`audio_io`]: WAV decoding and ESC-50 style dataset manifests.
//! - [`dsp`]: energy spectrogram, per-band mel filterbanks, Logmel with
//!   delta channels, normalization and the feature cache.
//! - [`nn`]: a small reverse-mode tensor engine with the layers the CRNN
//!   needs, softmax cross-entropy and Nesterov SGD.
//! - [`model`]: the CRNN classifier, branch training and clip prediction.
//! - [`augment`]: mixup over features and soft labels.
//! - [`fusion`]: weighted score fusion and the simplex weight search.
//! - [`harness`]: experiment configuration, commands and reports used by the
//!   command line tool.

pub mod audio_io;
pub mod augment;
pub mod dsp;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod model;
pub mod nn;
pub mod seed;

pub use error::{Error, ErrorClass, Result};
