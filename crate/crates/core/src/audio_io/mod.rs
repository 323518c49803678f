//! WAV decoding and ESC-50 style dataset manifests.

mod manifest;
mod wav;

pub use manifest::{
    parse_esc50_name, scan_dataset, AudioClip, ClipRef, DatasetManifest, ManifestLayout,
    DEFAULT_INDEX,
};
pub use wav::{decode_wav, decode_wav_bytes, encode_wav_pcm16, write_wav_pcm16, DecodedAudio};
