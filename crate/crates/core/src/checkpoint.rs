//! Named-section tensor files for encoder parameters and prototype banks.
//!
//! Layout (little-endian): magic `MCLK`, `u16` version, `u16` reserved, `u32`
//! section count, then per section a `u16` name length, UTF-8 name, `u32` rows,
//! `u32` cols and `rows * cols` `f64` values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::EncoderParams;
use crate::protobank::PrototypeBank;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MCLK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub sections: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.sections.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, m) in &self.sections {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(magic);
            return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found });
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        r.u16()?;
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Malformed(format!("section name: {e}")))?
                .to_owned();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Malformed("section size overflows".into()))?;
            let data = r
                .take(n.checked_mul(8).ok_or_else(|| Error::Malformed("section size overflows".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            sections.push((name, Matrix::from_vec(rows, cols, data)));
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { sections })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn from_params(params: &EncoderParams) -> Self {
        let mut c = Self::default();
        c.push("encoder.w1", params.w1.clone());
        c.push("encoder.b1", Matrix::from_vec(1, params.b1.len(), params.b1.clone()));
        c.push("encoder.w2", params.w2.clone());
        c.push("encoder.b2", Matrix::from_vec(1, params.b2.len(), params.b2.clone()));
        c
    }

    pub fn add_bank(&mut self, bank: &PrototypeBank) {
        self.push("bank.prototypes", bank.weights().clone());
    }

    pub fn params(&self) -> Result<EncoderParams> {
        let get = |name: &str| {
            self.get(name)
                .cloned()
                .ok_or_else(|| Error::Malformed(format!("checkpoint is missing section {name}")))
        };
        let w1 = get("encoder.w1")?;
        let b1 = get("encoder.b1")?.as_slice().to_vec();
        let w2 = get("encoder.w2")?;
        let b2 = get("encoder.b2")?.as_slice().to_vec();
        let linear = w1.rows() == 0;
        let consistent = b1.len() == w1.rows()
            && b2.len() == w2.rows()
            && (linear || w2.cols() == w1.rows());
        if !consistent {
            return Err(Error::Malformed("encoder sections have inconsistent shapes".into()));
        }
        let p = EncoderParams { w1, b1, w2, b2 };
        if !p.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(p)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
