//! Sinusoidal positional encoding added to the encoded latents before the
//! attention blocks.

use ndarray::Array2;

use super::ModelError;

/// `PE[pos, 2i] = sin(pos / 10000^(2i/dim))`,
/// `PE[pos, 2i+1] = cos(pos / 10000^(2i/dim))`; `dim` must be even.
pub fn positional_encoding(len: usize, dim: usize) -> Result<Array2<f64>, ModelError> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(ModelError::OddEncodingDim(dim));
    }
    if len == 0 {
        return Err(ModelError::EmptySequence);
    }
    let mut pe = Array2::zeros((len, dim));
    for pos in 0..len {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            pe[[pos, 2 * i]] = angle.sin();
            pe[[pos, 2 * i + 1]] = angle.cos();
        }
    }
    Ok(pe)
}
