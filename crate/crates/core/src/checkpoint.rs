//! Binary checkpoint container.
//!
//! Layout (all integers little-endian `u32`, floats little-endian `f32`):
//!
//! ```text
//! magic      8 bytes  "NCAUQCKP"
//! version    u32      = 1
//! channels   u32
//! hidden     u32
//! fire_rate  f32
//! n_params   u32
//! n_params × { name_len u32, name bytes, rank u32, dims u32 × rank, values f32 × prod(dims) }
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nca::{NcaHyper, NcaParams};

pub const MAGIC: &[u8; 8] = b"NCAUQCKP";
pub const VERSION: u32 = 1;

pub fn encode(params: &NcaParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.hyper.num_channels as u32).to_le_bytes());
    out.extend_from_slice(&(params.hyper.hidden_size as u32).to_le_bytes());
    out.extend_from_slice(&params.hyper.fire_rate.to_le_bytes());
    let named = params.named();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<NcaParams> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let hyper = NcaHyper {
        num_channels: r.u32()? as usize,
        hidden_size: r.u32()? as usize,
        fire_rate: r.f32()?,
    };
    let n = r.u32()?;
    let (mut w1, mut b1, mut w2) = (None, None, None);
    for _ in 0..n {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let raw = r.take(count.checked_mul(4).ok_or_else(|| {
            Error::Checkpoint(format!("parameter {name} is implausibly large"))
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(dims, data)?;
        match name.as_str() {
            "w1" => w1 = Some(t),
            "b1" => b1 = Some(t),
            "w2" => w2 = Some(t),
            other => return Err(Error::Checkpoint(format!("unknown parameter {other:?}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let missing = |n: &str| Error::Checkpoint(format!("missing parameter {n}"));
    NcaParams::from_tensors(
        hyper,
        w1.ok_or_else(|| missing("w1"))?,
        b1.ok_or_else(|| missing("b1"))?,
        w2.ok_or_else(|| missing("w2"))?,
    )
}

pub fn save_checkpoint(params: &NcaParams, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::file(path, e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<NcaParams> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e.to_string()))?;
    decode(&bytes).map_err(|e| Error::file(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nca::seeded_rng;
    use rand::Rng;

    fn random_params(hyper: NcaHyper, seed: u64) -> NcaParams {
        let mut rng = seeded_rng(seed, 0);
        let mut p = NcaParams::init(hyper, &mut rng).unwrap();
        for v in p.w2.data_mut().iter_mut().chain(p.b1.data_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = random_params(
            NcaHyper {
                num_channels: 9,
                hidden_size: 7,
                fire_rate: 0.3,
            },
            1,
        );
        let q = decode(&encode(&p)).unwrap();
        for ((_, a), (_, b)) in p.named().into_iter().zip(q.named()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
            assert_eq!(a.shape(), b.shape());
        }
        assert_eq!(p.hyper, q.hyper);
    }

    #[test]
    fn default_hyperparameters_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&random_params(NcaHyper::default(), 2), &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(q.hyper.num_channels, 64);
        assert_eq!(q.hyper.hidden_size, 128);
        assert_eq!(q.hyper.fire_rate, 0.5);
    }

    #[test]
    fn truncated_and_corrupt_files_error() {
        let p = random_params(
            NcaHyper {
                num_channels: 8,
                hidden_size: 4,
                fire_rate: 0.5,
            },
            3,
        );
        let bytes = encode(&p);
        for cut in [0, 5, 12, 30, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xff;
        assert!(matches!(decode(&bad_magic), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(matches!(decode(&bad_version), Err(Error::Checkpoint(m)) if m.contains("version")));
    }
}
