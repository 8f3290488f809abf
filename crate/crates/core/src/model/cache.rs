//! On-disk feature cache. Sequences of per-step feature vectors are written
//! once after phase 1 and re-read by the temporal trainer, so the feature
//! provider never runs twice.
//!
//! Layout (all integers little-endian `u32`, all records little-endian
//! `f32`):
//!
//! ```text
//! magic   4 bytes  b"CYCF"
//! version u32      currently 1
//! f_dim   u32      per-step feature dimension F
//! latent  u32      latent dimension of the model the cache was built for
//! n_steps u32      steps per sequence N
//! count   u32      number of sequences
//! data    count * n_steps * f_dim  f32 records, row-major per sequence
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use thiserror::Error;

use super::ModelConfig;

pub const CACHE_MAGIC: [u8; 4] = *b"CYCF";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("failed to access cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a feature cache (bad magic {found:?})")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("unsupported cache version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("cache {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: String, expected: usize, found: usize },
    #[error("cache contains no sequences")]
    Empty,
    #[error("all cached sequences must share one shape; sequence {index} is {found_rows}x{found_cols}, expected {rows}x{cols}")]
    RaggedSequences { index: usize, found_rows: usize, found_cols: usize, rows: usize, cols: usize },
    #[error("sequence {index} contains a non-finite feature value")]
    NonFinite { index: usize },
    #[error("cache {path} is truncated or has trailing bytes")]
    BadLength { path: PathBuf },
}

/// A fully decoded cache: header metadata plus the feature sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub sequence_length: usize,
    pub sequences: Vec<Array2<f64>>,
}

impl FeatureCache {
    /// The dimension-compatibility gate run before training from a cache.
    pub fn check_model(&self, config: &ModelConfig) -> Result<(), CacheError> {
        if self.feature_dim != config.feature_dim {
            return Err(CacheError::DimensionMismatch {
                what: "feature dimension".to_string(),
                expected: config.feature_dim,
                found: self.feature_dim,
            });
        }
        if self.latent_dim != config.latent_dim {
            return Err(CacheError::DimensionMismatch {
                what: "latent dimension".to_string(),
                expected: config.latent_dim,
                found: self.latent_dim,
            });
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CacheError + '_ {
    move |source| CacheError::Io { path: path.to_path_buf(), source }
}

/// Write `sequences` to `path`. All sequences must share one `(N, F)` shape
/// and contain only finite values; `latent_dim` records the model the cache
/// is meant for.
pub fn write_feature_cache(
    path: &Path,
    latent_dim: usize,
    sequences: &[Array2<f64>],
) -> Result<(), CacheError> {
    let first = sequences.first().ok_or(CacheError::Empty)?;
    let (rows, cols) = (first.nrows(), first.ncols());
    for (index, seq) in sequences.iter().enumerate() {
        if seq.nrows() != rows || seq.ncols() != cols {
            return Err(CacheError::RaggedSequences {
                index,
                found_rows: seq.nrows(),
                found_cols: seq.ncols(),
                rows,
                cols,
            });
        }
        if seq.iter().any(|v| !v.is_finite()) {
            return Err(CacheError::NonFinite { index });
        }
    }

    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    writer.write_all(&CACHE_MAGIC).map_err(io_err(path))?;
    for value in
        [CACHE_VERSION, cols as u32, latent_dim as u32, rows as u32, sequences.len() as u32]
    {
        writer.write_all(&value.to_le_bytes()).map_err(io_err(path))?;
    }
    for seq in sequences {
        for &v in seq.iter() {
            writer.write_all(&(v as f32).to_le_bytes()).map_err(io_err(path))?;
        }
    }
    writer.flush().map_err(io_err(path))
}

fn read_u32(reader: &mut impl Read, path: &Path) -> Result<u32, CacheError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(io_err(path))?;
    Ok(u32::from_le_bytes(buf))
}

/// Read a cache written by [`write_feature_cache`]. Record values come back
/// as `f64` holding exactly the stored `f32`.
pub fn read_feature_cache(path: &Path) -> Result<FeatureCache, CacheError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io_err(path))?;
    if magic != CACHE_MAGIC {
        return Err(CacheError::BadMagic { path: path.to_path_buf(), found: magic });
    }
    let version = read_u32(&mut reader, path)?;
    if version != CACHE_VERSION {
        return Err(CacheError::UnsupportedVersion { found: version, expected: CACHE_VERSION });
    }
    let feature_dim = read_u32(&mut reader, path)? as usize;
    let latent_dim = read_u32(&mut reader, path)? as usize;
    let sequence_length = read_u32(&mut reader, path)? as usize;
    let count = read_u32(&mut reader, path)? as usize;
    if count == 0 {
        return Err(CacheError::Empty);
    }

    let per_sequence = sequence_length * feature_dim;
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(io_err(path))?;
    if raw.len() != count * per_sequence * 4 {
        return Err(CacheError::BadLength { path: path.to_path_buf() });
    }

    let mut sequences = Vec::with_capacity(count);
    for s in 0..count {
        let mut data = Vec::with_capacity(per_sequence);
        for i in 0..per_sequence {
            let off = (s * per_sequence + i) * 4;
            let bits: [u8; 4] = raw[off..off + 4].try_into().expect("length checked");
            data.push(f32::from_le_bytes(bits) as f64);
        }
        let seq = Array2::from_shape_vec((sequence_length, feature_dim), data)
            .expect("shape matches payload length");
        sequences.push(seq);
    }

    Ok(FeatureCache { feature_dim, latent_dim, sequence_length, sequences })
}
