//! Binary feature cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SSLM"  u16 version
//! repeated until EOF:
//!   u32 clip_id length, clip_id UTF-8 bytes
//!   u32 window index, u16 band index
//!   u32 x 3 dims (frames, mels, channels)
//!   f32 x frames*mels*channels, frame-major with channel fastest
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::logmel::LogmelTensor;
use crate::error::{Error, IoContext, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"SSLM";
pub const CACHE_VERSION: u16 = 1;

pub fn encode_cache(records: &[LogmelTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for r in records {
        let [n, k, c] = r.shape();
        if r.data.len() != n * k * c {
            return Err(Error::Shape(format!("record {} has {} values for {n}x{k}x{c}", r.clip_id, r.data.len())));
        }
        let band = u16::try_from(r.band_index).map_err(|_| Error::Cache("band index exceeds u16".into()))?;
        let window = u32::try_from(r.window_index).map_err(|_| Error::Cache("window index exceeds u32".into()))?;
        out.extend_from_slice(&(r.clip_id.len() as u32).to_le_bytes());
        out.extend_from_slice(r.clip_id.as_bytes());
        out.extend_from_slice(&window.to_le_bytes());
        out.extend_from_slice(&band.to_le_bytes());
        for d in [n, k, c] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &r.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Cache(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_cache(bytes: &[u8]) -> Result<Vec<LogmelTensor>> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = cur.u16()?;
    if version != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let len = cur.u32()? as usize;
        let clip_id = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Cache("clip id is not UTF-8".into()))?
            .to_owned();
        let window_index = cur.u32()? as usize;
        let band_index = cur.u16()? as usize;
        let (n, k, c) = (cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize);
        if c != LogmelTensor::CHANNELS {
            return Err(Error::Cache(format!("record {clip_id} has {c} channels")));
        }
        let payload = cur.take(n * k * c * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(LogmelTensor {
            data,
            n_frames: n,
            n_mels: k,
            band_index,
            clip_id,
            window_index,
        });
    }
    Ok(out)
}

pub fn write_cache(path: impl AsRef<Path>, records: &[LogmelTensor]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_cache(records)?;
    let f = fs::File::create(path).ctx(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    w.write_all(&bytes).ctx(|| format!("writing {}", path.display()))?;
    w.flush().ctx(|| format!("writing {}", path.display()))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<LogmelTensor>> {
    let path = path.as_ref();
    decode_cache(&fs::read(path).ctx(|| format!("reading {}", path.display()))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, window: usize, band: usize, data: Vec<f32>) -> LogmelTensor {
        LogmelTensor {
            n_frames: 1,
            n_mels: data.len() / 3,
            data,
            band_index: band,
            clip_id: id.into(),
            window_index: window,
        }
    }

    #[test]
    fn exact_bytes_for_one_record() {
        let bytes = encode_cache(&[record("ab", 2, 1, vec![1.0, -2.0, 0.5])]).unwrap();
        let mut expect = b"SSLM".to_vec();
        expect.extend_from_slice(&[1, 0]);
        expect.extend_from_slice(&[2, 0, 0, 0, b'a', b'b']);
        expect.extend_from_slice(&[2, 0, 0, 0, 1, 0]);
        expect.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.extend_from_slice(&(-2.0f32).to_le_bytes());
        expect.extend_from_slice(&0.5f32.to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(decode_cache(b"SSNN\x01\x00").is_err());
        assert!(decode_cache(b"SSLM\x02\x00").is_err());
        let mut bytes = encode_cache(&[record("x", 0, 0, vec![0.0; 6])]).unwrap();
        bytes.pop();
        assert!(matches!(decode_cache(&bytes), Err(Error::Cache(_))));
    }

    proptest! {
        #[test]
        fn round_trip(ids in proptest::collection::vec("[a-z0-9-]{0,12}", 1..5), seed in 0u32..1000) {
            let recs: Vec<_> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| record(id, i + seed as usize, i % 3, (0..3 * (i + 1)).map(|v| v as f32 * 0.37 - seed as f32).collect()))
                .collect();
            let back = decode_cache(&encode_cache(&recs).unwrap()).unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
