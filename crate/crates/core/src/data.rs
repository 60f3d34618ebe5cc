//! Synthetic identity pools and the `MCLF` feature file format.
//!
//! A pool holds raw feature vectors with a hidden ground-truth identity. Training
//! code only ever looks at `features` and `sample_id`; `identity` is read by the
//! evaluation routines in [`crate::metrics`].

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MCLF_MAGIC: [u8; 4] = *b"MCLF";
pub const MCLF_VERSION: u16 = 1;
const FLAG_LABELS: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub features: Vec<f32>,
    /// Ground-truth identity. Evaluation only.
    pub identity: u32,
    pub sample_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    samples: Vec<RawSample>,
    d_raw: usize,
    num_identities: usize,
}

/// Parameters of the synthetic identity generator.
///
/// `intra_class_sigma` is the expected norm of the per-sample noise vector, so each
/// coordinate gets standard deviation `intra_class_sigma / sqrt(d_raw)`. Identity
/// means are unit vectors, which makes sigma a noise-to-signal ratio independent of
/// the dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub d_raw: usize,
    pub intra_class_sigma: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities < 2 {
            return Err(Error::InvalidSpec(format!(
                "num_identities must be >= 2, got {}",
                self.num_identities
            )));
        }
        if self.samples_per_identity < 2 {
            return Err(Error::InvalidSpec(format!(
                "samples_per_identity must be >= 2, got {}",
                self.samples_per_identity
            )));
        }
        if self.d_raw == 0 {
            return Err(Error::InvalidSpec("d_raw must be positive".into()));
        }
        if !(self.intra_class_sigma >= 0.0) || !self.intra_class_sigma.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "intra_class_sigma must be finite and >= 0, got {}",
                self.intra_class_sigma
            )));
        }
        let total = self.num_identities.checked_mul(self.samples_per_identity);
        if total.is_none_or(|t| t > u32::MAX as usize) {
            return Err(Error::InvalidSpec("sample count overflows u32".into()));
        }
        Ok(())
    }
}

impl Pool {
    /// Builds a pool, checking shared dimension, finiteness and id uniqueness.
    pub fn new(samples: Vec<RawSample>, d_raw: usize) -> Result<Self> {
        if d_raw == 0 {
            return Err(Error::InvalidSpec("d_raw must be positive".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(samples.len());
        let mut max_identity = 0u32;
        for (row, s) in samples.iter().enumerate() {
            if s.features.len() != d_raw {
                return Err(Error::DimensionMismatch {
                    expected: d_raw,
                    found: s.features.len(),
                });
            }
            if let Some(c) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("sample row {row}, coordinate {c}")));
            }
            if !seen.insert(s.sample_id) {
                return Err(Error::Malformed(format!("duplicate sample_id {}", s.sample_id)));
            }
            max_identity = max_identity.max(s.identity);
        }
        let num_identities = if samples.is_empty() { 1 } else { max_identity as usize + 1 };
        Ok(Self { samples, d_raw, num_identities })
    }

    pub fn samples(&self) -> &[RawSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn d_raw(&self) -> usize {
        self.d_raw
    }

    pub fn num_identities(&self) -> usize {
        self.num_identities
    }

    pub fn identities(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.identity).collect()
    }

    /// Keeps the samples for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&RawSample) -> bool) -> Pool {
        let samples: Vec<_> = self.samples.iter().filter(|s| keep(s)).cloned().collect();
        Pool {
            num_identities: self.num_identities,
            samples,
            d_raw: self.d_raw,
        }
    }

    /// Splits off the last `holdout` identities (by identity number) as an
    /// evaluation pool. Returns `(train, held_out)`.
    pub fn split_identities(&self, holdout: usize) -> (Pool, Pool) {
        let cut = self.num_identities.saturating_sub(holdout) as u32;
        (self.filter(|s| s.identity < cut), self.filter(|s| s.identity >= cut))
    }
}

/// Draws identity means uniformly on the unit sphere and samples around them.
pub fn generate_pool(spec: &GenSpec) -> Result<Pool> {
    spec.validate()?;
    let d = spec.d_raw;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> = (0..spec.num_identities)
        .map(|_| random_unit(&mut rng, d))
        .collect();
    let coord_sigma = spec.intra_class_sigma / (d as f64).sqrt();
    let mut samples = Vec::with_capacity(spec.num_identities * spec.samples_per_identity);
    for (identity, mean) in means.iter().enumerate() {
        for _ in 0..spec.samples_per_identity {
            let features = mean
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    (m + coord_sigma * z) as f32
                })
                .collect();
            let sample_id = samples.len() as u32;
            samples.push(RawSample { features, identity: identity as u32, sample_id });
        }
    }
    Ok(Pool { samples, d_raw: d, num_identities: spec.num_identities })
}

pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Encodes a pool as an `MCLF` byte buffer. Labels are always written.
pub fn encode_features(pool: &Pool) -> Vec<u8> {
    let rows = pool.samples.iter().map(|s| s.features.as_slice());
    let labels: Vec<u32> = pool.samples.iter().map(|s| s.identity).collect();
    encode_rows(pool.len(), pool.d_raw, rows, Some(&labels))
}

pub(crate) fn encode_rows<'a>(
    n: usize,
    d: usize,
    rows: impl Iterator<Item = &'a [f32]>,
    labels: Option<&[u32]>,
) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + n * d * 4 + n * 4);
    buf.extend_from_slice(&MCLF_MAGIC);
    buf.extend_from_slice(&MCLF_VERSION.to_le_bytes());
    let flags = if labels.is_some() { FLAG_LABELS } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    for row in rows {
        debug_assert_eq!(row.len(), d);
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(labels) = labels {
        for l in labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
    }
    buf
}

/// Decodes an `MCLF` buffer. Rows become samples with `sample_id` equal to the
/// row index; a file without labels yields identity 0 everywhere.
pub fn decode_features(bytes: &[u8]) -> Result<Pool> {
    let table = decode_table(bytes)?;
    let d = table.d;
    let labels = table.labels.unwrap_or_else(|| vec![0; table.n]);
    let samples = table
        .values
        .chunks_exact(d.max(1))
        .zip(labels)
        .enumerate()
        .map(|(i, (row, identity))| RawSample {
            features: row.to_vec(),
            identity,
            sample_id: i as u32,
        })
        .collect();
    Pool::new(samples, d)
}

/// Raw contents of an `MCLF` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f32>,
    pub labels: Option<Vec<u32>>,
}

pub fn decode_table(bytes: &[u8]) -> Result<FeatureTable> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MCLF_MAGIC {
            return Err(bad_magic(bytes));
        }
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
    }
    if bytes[..4] != MCLF_MAGIC {
        return Err(bad_magic(bytes));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MCLF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if d == 0 {
        return Err(Error::Malformed("header declares d = 0".into()));
    }
    let has_labels = flags & FLAG_LABELS != 0;
    let payload = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(if has_labels { n } else { 0 }))
        .and_then(|words| words.checked_mul(4))
        .ok_or_else(|| Error::Malformed("header sizes overflow".into()))?;
    let expected = HEADER_LEN + payload;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let body = &bytes[HEADER_LEN..];
    let values = body[..n * d * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = has_labels.then(|| {
        body[n * d * 4..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    });
    Ok(FeatureTable { n, d, values, labels })
}

fn bad_magic(bytes: &[u8]) -> Error {
    let mut found = [0u8; 4];
    found.copy_from_slice(&bytes[..4]);
    Error::BadMagic { expected: MCLF_MAGIC, found }
}

pub fn write_features(pool: &Pool, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_features(pool))?;
    file.sync_all()?;
    Ok(())
}

/// Reads an `MCLF` file, or a CSV file when the contents do not start with the
/// magic and the first line is a `d=<int>` header.
pub fn read_features(path: impl AsRef<Path>) -> Result<Pool> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.starts_with(b"d=") {
        return read_csv(&bytes[..]);
    }
    decode_features(&bytes)
}

/// CSV fallback: a `d=<int>` header line, then one comma-separated row per sample
/// holding `d` features and an optional trailing integer identity.
pub fn read_csv<R: Read>(reader: R) -> Result<Pool> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Malformed("empty csv".into()))?;
    let d: usize = header
        .trim()
        .strip_prefix("d=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Malformed(format!("expected `d=<int>` header, got {header:?}")))?;
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let identity = match fields.len() {
            n if n == d => 0,
            n if n == d + 1 => fields[d].parse::<u32>().map_err(|e| {
                Error::Malformed(format!("row {row}: bad identity {:?}: {e}", fields[d]))
            })?,
            n => return Err(Error::DimensionMismatch { expected: d, found: n }),
        };
        let features = fields[..d]
            .iter()
            .map(|f| {
                f.parse::<f32>()
                    .map_err(|e| Error::Malformed(format!("row {row}: bad value {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let sample_id = samples.len() as u32;
        samples.push(RawSample { features, identity, sample_id });
    }
    Pool::new(samples, d)
}
