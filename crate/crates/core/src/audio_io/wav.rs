//! Minimal RIFF/WAVE reader and a 16-bit PCM writer.
//!
//! Only what the dataset needs: little-endian integer PCM (8/16/24/32 bit)
//! or 32-bit IEEE float, mono or stereo. Stereo is folded to mono by the
//! arithmetic mean of the two channels.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, IoContext, Result};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Mono samples in [-1, 1] with the rate from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedAudio {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SampleFormat {
    Int(u16),
    Float32,
}

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    format: SampleFormat,
}

pub fn decode_wav(path: impl AsRef<Path>) -> Result<DecodedAudio> {
    let path = path.as_ref();
    let bytes = fs::read(path).ctx(|| format!("reading {}", path.display()))?;
    decode_wav_bytes(&bytes)
}

pub fn decode_wav_bytes(bytes: &[u8]) -> Result<DecodedAudio> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE signature".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                let end = body
                    .checked_add(size)
                    .filter(|&e| e <= bytes.len())
                    .ok_or_else(|| Error::Format("fmt chunk runs past end of file".into()))?;
                fmt = Some(parse_fmt(&bytes[body..end])?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| Error::Format("data chunk before fmt chunk".into()))?;
                let available = bytes.len() - body;
                if size > available {
                    return Err(Error::Truncated {
                        expected: size,
                        found: available,
                    });
                }
                return decode_samples(&bytes[body..body + size], fmt);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body.saturating_add(size).saturating_add(size & 1);
    }
    Err(Error::Format(if fmt.is_some() {
        "no data chunk".into()
    } else {
        "no fmt chunk".into()
    }))
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::Format(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let le16 = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut tag = le16(0);
    let channels = le16(2);
    let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let block_align = le16(12);
    let bits = le16(14);

    if tag == FORMAT_EXTENSIBLE {
        // the sub-format GUID starts with the plain format tag
        if body.len() < 26 {
            return Err(Error::Format("extensible fmt chunk too short".into()));
        }
        tag = le16(24);
    }

    let format = match (tag, bits) {
        (FORMAT_PCM, 8 | 16 | 24 | 32) => SampleFormat::Int(bits),
        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        (FORMAT_PCM, b) => return Err(Error::UnsupportedFormat(format!("{b}-bit integer PCM"))),
        (FORMAT_IEEE_FLOAT, b) => return Err(Error::UnsupportedFormat(format!("{b}-bit float"))),
        (t, _) => return Err(Error::UnsupportedFormat(format!("format tag {t:#06x}"))),
    };
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedFormat(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(Error::Format("sample rate is zero".into()));
    }
    let expected_align = channels * (bits / 8);
    if block_align != expected_align {
        return Err(Error::Format(format!(
            "block align {block_align} does not match {channels} x {bits}-bit"
        )));
    }
    Ok(FmtChunk {
        channels,
        sample_rate,
        block_align,
        format,
    })
}

fn decode_samples(data: &[u8], fmt: FmtChunk) -> Result<DecodedAudio> {
    let frame_bytes = fmt.block_align as usize;
    let width = frame_bytes / fmt.channels as usize;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(Error::Format("data chunk holds no complete frames".into()));
    }

    let read = |chunk: &[u8]| -> f32 {
        match fmt.format {
            SampleFormat::Int(8) => (chunk[0] as f32 - 128.0) / 128.0,
            SampleFormat::Int(16) => i16::from_le_bytes([chunk[0], chunk[1]]) as f32 / 32768.0,
            SampleFormat::Int(24) => {
                // sign-extend through the top byte of an i32
                let v = i32::from_le_bytes([0, chunk[0], chunk[1], chunk[2]]) >> 8;
                (v as f64 / 8_388_608.0) as f32
            }
            SampleFormat::Int(_) => {
                let v = i32::from_le_bytes(chunk[..4].try_into().unwrap());
                (v as f64 / 2_147_483_648.0) as f32
            }
            SampleFormat::Float32 => f32::from_le_bytes(chunk[..4].try_into().unwrap()),
        }
    };

    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(frame_bytes) {
        let s = if fmt.channels == 1 {
            read(frame)
        } else {
            0.5 * (read(&frame[..width]) + read(&frame[width..]))
        };
        if !s.is_finite() {
            return Err(Error::Format("non-finite float sample".into()));
        }
        samples.push(s.clamp(-1.0, 1.0));
    }
    Ok(DecodedAudio {
        samples,
        sample_rate_hz: fmt.sample_rate,
    })
}

/// Quantize to 16-bit PCM, mono. Values are clamped to the representable range.
pub fn encode_wav_pcm16(samples: &[f32], sample_rate_hz: u32) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f32], sample_rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).ctx(|| format!("creating {}", path.display()))?;
    f.write_all(&encode_wav_pcm16(samples, sample_rate_hz))
        .ctx(|| format!("writing {}", path.display()))
}
