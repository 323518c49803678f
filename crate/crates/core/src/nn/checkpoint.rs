//! `SSNN` checkpoint files.
//!
//! ```text
//! "SSNN" | u16 version | u32 n_tensors
//! per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | f32 payload
//! u8 has_optimizer
//! if 1: f64 lr_initial | f64 decay | u32 period | f64 momentum | u32 epoch
//!       u32 n_buffers | per buffer: u32 len | f32 payload
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::optim::{LrSchedule, SgdNesterov};
use super::tensor::{Real, Tensor};
use crate::error::{Error, IoContext, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSNN";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint<F> {
    pub tensors: Vec<(String, Tensor<F>)>,
    pub optimizer: Option<SgdNesterov<F>>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s<F: Real>(out: &mut Vec<u8>, data: &[F]) {
    for v in data {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint<F: Real>(tensors: &[(String, &Tensor<F>)], optimizer: Option<&SgdNesterov<F>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut out, tensors.len())?;
    for (name, t) in tensors {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        put_f32s(&mut out, &t.data);
    }
    match optimizer {
        None => out.push(0),
        Some(o) => {
            out.push(1);
            out.extend_from_slice(&o.schedule.initial.to_le_bytes());
            out.extend_from_slice(&o.schedule.decay_factor.to_le_bytes());
            put_u32(&mut out, o.schedule.period_epochs)?;
            out.extend_from_slice(&o.momentum.to_le_bytes());
            put_u32(&mut out, o.epoch)?;
            put_u32(&mut out, o.velocity.len())?;
            for v in &o.velocity {
                put_u32(&mut out, v.len())?;
                put_f32s(&mut out, v);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s<F: Real>(&mut self, n: usize) -> Result<Vec<F>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("payload size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| F::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect())
    }
}

pub fn decode_checkpoint<F: Real>(bytes: &[u8]) -> Result<Checkpoint<F>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not an SSNN checkpoint".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32()?;
    let mut tensors = Vec::new();
    for _ in 0..n {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        let mut dims = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            dims.push(r.u32()?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is too large")))?;
        let data = r.f32s(count)?;
        tensors.push((name, Tensor::from_vec(&dims, data)?));
    }
    let optimizer = match r.take(1)?[0] {
        0 => None,
        1 => {
            let schedule = LrSchedule {
                initial: r.f64()?,
                decay_factor: r.f64()?,
                period_epochs: r.u32()?,
            };
            let momentum = r.f64()?;
            let epoch = r.u32()?;
            let mut velocity = Vec::new();
            for _ in 0..r.u32()? {
                let len = r.u32()?;
                velocity.push(r.f32s(len)?);
            }
            let mut o = SgdNesterov::new(schedule, momentum).map_err(|e| Error::Checkpoint(e.to_string()))?;
            o.epoch = epoch;
            o.velocity = velocity;
            Some(o)
        }
        b => return Err(Error::Checkpoint(format!("bad optimizer flag {b}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint { tensors, optimizer })
}

pub fn write_checkpoint<F: Real>(
    path: &Path,
    tensors: &[(String, &Tensor<F>)],
    optimizer: Option<&SgdNesterov<F>>,
) -> Result<()> {
    let bytes = encode_checkpoint(tensors, optimizer)?;
    std::fs::write(path, bytes).ctx(|| format!("writing checkpoint {}", path.display()))
}

pub fn read_checkpoint<F: Real>(path: &Path) -> Result<Checkpoint<F>> {
    let bytes = std::fs::read(path).ctx(|| format!("reading checkpoint {}", path.display()))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_layout() {
        let t = Tensor::<f32>::from_vec(&[1], vec![1.0]).unwrap();
        let bytes = encode_checkpoint(&[("a".into(), &t)], None).unwrap();
        let mut expect = b"SSNN".to_vec();
        expect.extend_from_slice(&[1, 0, 1, 0, 0, 0, 1, 0, 0, 0, b'a', 1, 0, 0, 0, 1, 0, 0, 0]);
        expect.extend_from_slice(&1.0f32.to_le_bytes());
        expect.push(0);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn round_trip_with_optimizer() {
        let t = Tensor::<f32>::from_vec(&[2, 2], vec![0.5, -1.0, 3.25, 1e-7]).unwrap();
        let mut o = SgdNesterov::<f32>::new(LrSchedule::default(), 0.9).unwrap();
        o.epoch = 17;
        o.velocity = vec![vec![0.1, 0.2, 0.3, 0.4]];
        let bytes = encode_checkpoint(&[("w".into(), &t)], Some(&o)).unwrap();
        let c = decode_checkpoint::<f32>(&bytes).unwrap();
        assert_eq!(c.tensors, vec![("w".to_string(), t)]);
        assert_eq!(c.optimizer, Some(o));
    }

    #[test]
    fn rejects_corrupt_input() {
        let t = Tensor::<f32>::zeros(&[3]);
        let bytes = encode_checkpoint(&[("w".into(), &t)], None).unwrap();
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 2]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint::<f32>(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint::<f32>(&extra).is_err());
    }
}
