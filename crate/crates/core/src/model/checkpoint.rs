//! Versioned binary model checkpoints, sharing the little-endian `f32`
//! float convention of the feature cache.
//!
//! Layout:
//!
//! ```text
//! magic        4 bytes  b"CYCM"
//! version      u32      currently 1
//! feature_dim  u32
//! latent_dim   u32
//! enc_hidden   u32      0 encodes a single-layer encoder
//! heads        u32
//! blocks       u32
//! ff_expansion u32
//! param_count  u64
//! params       param_count f32 values in flatten order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{ModelConfig, ModelError, ModelParams};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CYCM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to access checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a model checkpoint (bad magic {found:?})")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("checkpoint parameter count {found} does not match architecture ({expected})")]
    ParamCountMismatch { expected: usize, found: usize },
    #[error("checkpoint {path} is truncated or has trailing bytes")]
    BadLength { path: PathBuf },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

/// Serialize the architecture and all parameters. Values are narrowed to
/// `f32`; saving and reloading is lossless only for `f32`-representable
/// parameters, which a prior load guarantees.
pub fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<(), CheckpointError> {
    let cfg = &params.config;
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = BufWriter::new(file);
    writer.write_all(&CHECKPOINT_MAGIC).map_err(io_err(path))?;
    let hidden = cfg.encoder_hidden.unwrap_or(0) as u32;
    for value in [
        CHECKPOINT_VERSION,
        cfg.feature_dim as u32,
        cfg.latent_dim as u32,
        hidden,
        cfg.heads as u32,
        cfg.blocks as u32,
        cfg.ff_expansion as u32,
    ] {
        writer.write_all(&value.to_le_bytes()).map_err(io_err(path))?;
    }
    let flat = params.flatten();
    writer.write_all(&(flat.len() as u64).to_le_bytes()).map_err(io_err(path))?;
    for v in flat {
        writer.write_all(&(v as f32).to_le_bytes()).map_err(io_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

fn read_u32(reader: &mut impl Read, path: &Path) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(io_err(path))?;
    Ok(u32::from_le_bytes(buf))
}

/// Reconstruct a model from a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io_err(path))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic { path: path.to_path_buf(), found: magic });
    }
    let version = read_u32(&mut reader, path)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let feature_dim = read_u32(&mut reader, path)? as usize;
    let latent_dim = read_u32(&mut reader, path)? as usize;
    let hidden = read_u32(&mut reader, path)? as usize;
    let heads = read_u32(&mut reader, path)? as usize;
    let blocks = read_u32(&mut reader, path)? as usize;
    let ff_expansion = read_u32(&mut reader, path)? as usize;
    let config = ModelConfig {
        feature_dim,
        latent_dim,
        encoder_hidden: if hidden == 0 { None } else { Some(hidden) },
        heads,
        blocks,
        ff_expansion,
    };

    let mut count_buf = [0u8; 8];
    reader.read_exact(&mut count_buf).map_err(io_err(path))?;
    let param_count = u64::from_le_bytes(count_buf) as usize;

    let mut params = ModelParams::init(config, 0)?;
    if param_count != params.param_count() {
        return Err(CheckpointError::ParamCountMismatch {
            expected: params.param_count(),
            found: param_count,
        });
    }

    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(io_err(path))?;
    if raw.len() != param_count * 4 {
        return Err(CheckpointError::BadLength { path: path.to_path_buf() });
    }
    let flat: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    params.set_from_flat(&flat)?;
    Ok(params)
}
