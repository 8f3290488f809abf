//! Temporal sequence classifier: a per-step feature encoder, sinusoidal
//! positional encoding, a stack of masked multi-head self-attention blocks
//! and a hierarchical main/sub-class decoder, trained with a
//! confidence-weighted loss in two phases (per-step first, temporal second).
//!
//! Everything runs on the CPU in `f64` with hand-written backward passes;
//! checkpoints and feature caches serialize through little-endian `f32`.

pub mod attention;
pub mod cache;
pub mod checkpoint;
pub mod encoding;
pub mod layers;
pub mod loss;
pub mod manifest;
pub mod train;

pub use attention::{AttentionBlock, AttentionMask};
pub use cache::{read_feature_cache, write_feature_cache, CacheError, FeatureCache};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use encoding::positional_encoding;
pub use layers::{LayerNorm, Linear, Mlp};
pub use loss::{hierarchical_loss, hierarchical_loss_backward, StepLabel};
pub use manifest::{
    flatten_steps, load_dataset, load_manifest, save_manifest, DatasetManifest, ManifestError,
    ManifestVideo, VideoData, MANIFEST_VERSION,
};
pub use train::{train_phase1, train_phase2, StepSample, TrainConfig, TrainError, TrainReport};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{ClassConfidence, MainClass, SubClass, MAIN_CLASS_COUNT, SUB_CLASS_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch { what: String, expected: usize, found: usize },
    #[error("positional encoding dimension must be even and nonzero, got {0}")]
    OddEncodingDim(usize),
    #[error("sequence must contain at least one step")]
    EmptySequence,
    #[error("attention mask forbids step {0} from attending to itself")]
    MaskedDiagonal(usize),
    #[error("latent dimension {dim} is not divisible by {heads} heads")]
    HeadsMismatch { dim: usize, heads: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("a step without a class cannot carry confidence {0}")]
    InvalidLabel(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Input feature dimension F.
    pub feature_dim: usize,
    /// Latent dimension carried through the attention stack.
    pub latent_dim: usize,
    /// Hidden width of the two-layer encoder; `None` makes it single-layer.
    pub encoder_hidden: Option<usize>,
    pub heads: usize,
    pub blocks: usize,
    pub ff_expansion: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 64,
            latent_dim: 64,
            encoder_hidden: Some(64),
            heads: 4,
            blocks: 3,
            ff_expansion: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.feature_dim == 0
            || self.latent_dim == 0
            || self.blocks == 0
            || self.ff_expansion == 0
        {
            return Err(ModelError::InvalidConfig("all dimensions must be nonzero".to_string()));
        }
        if !self.latent_dim.is_multiple_of(2) {
            return Err(ModelError::OddEncodingDim(self.latent_dim));
        }
        if self.heads == 0 || !self.latent_dim.is_multiple_of(self.heads) {
            return Err(ModelError::HeadsMismatch { dim: self.latent_dim, heads: self.heads });
        }
        if self.encoder_hidden == Some(0) {
            return Err(ModelError::InvalidConfig(
                "encoder hidden width must be nonzero".to_string(),
            ));
        }
        Ok(())
    }

    fn encoder_dims(&self) -> Vec<usize> {
        match self.encoder_hidden {
            Some(h) => vec![self.feature_dim, h, self.latent_dim],
            None => vec![self.feature_dim, self.latent_dim],
        }
    }
}

/// The class heads mapping a latent to main and sub logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub main: Linear,
    pub sub: Linear,
}

/// All trainable parameters plus the configuration they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: Mlp,
    pub blocks: Vec<AttentionBlock>,
    pub decoder: DecoderParams,
}

impl ModelParams {
    /// Xavier-initialized parameters, deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::xavier(&config.encoder_dims(), &mut rng);
        let blocks = (0..config.blocks)
            .map(|_| {
                AttentionBlock::xavier(
                    config.latent_dim,
                    config.heads,
                    config.ff_expansion,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let decoder = DecoderParams {
            main: Linear::xavier(MAIN_CLASS_COUNT, config.latent_dim, &mut rng),
            sub: Linear::xavier(SUB_CLASS_COUNT, config.latent_dim, &mut rng),
        };
        Ok(ModelParams { config, encoder, blocks, decoder })
    }

    /// Same shapes, all parameters zero — the gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            config: self.config,
            encoder: self.encoder.zeros_like(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            decoder: DecoderParams {
                main: Linear::zeros(MAIN_CLASS_COUNT, self.config.latent_dim),
                sub: Linear::zeros(SUB_CLASS_COUNT, self.config.latent_dim),
            },
        }
    }

    /// Re-randomize the attention stack (fresh blocks for phase 2) and zero
    /// each block's residual outputs so the stack starts as an identity map.
    pub fn reset_attention_for_phase2(&mut self, seed: u64) -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &self.config;
        let mut blocks = (0..cfg.blocks)
            .map(|_| AttentionBlock::xavier(cfg.latent_dim, cfg.heads, cfg.ff_expansion, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        for block in &mut blocks {
            block.zero_residual_outputs();
        }
        self.blocks = blocks;
        Ok(())
    }

    fn visit<'a>(&'a self, mut f: impl FnMut(&'a [f64])) {
        for layer in &self.encoder.layers {
            f(layer.w.as_slice().expect("contiguous"));
            f(layer.b.as_slice().expect("contiguous"));
        }
        for b in &self.blocks {
            f(b.ln1.gamma.as_slice().expect("contiguous"));
            f(b.ln1.beta.as_slice().expect("contiguous"));
            for lin in [&b.wq, &b.wk, &b.wv, &b.wo] {
                f(lin.w.as_slice().expect("contiguous"));
                f(lin.b.as_slice().expect("contiguous"));
            }
            f(b.ln2.gamma.as_slice().expect("contiguous"));
            f(b.ln2.beta.as_slice().expect("contiguous"));
            for lin in [&b.ff1, &b.ff2] {
                f(lin.w.as_slice().expect("contiguous"));
                f(lin.b.as_slice().expect("contiguous"));
            }
        }
        for lin in [&self.decoder.main, &self.decoder.sub] {
            f(lin.w.as_slice().expect("contiguous"));
            f(lin.b.as_slice().expect("contiguous"));
        }
    }

    fn visit_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for layer in &mut self.encoder.layers {
            f(layer.w.as_slice_mut().expect("contiguous"));
            f(layer.b.as_slice_mut().expect("contiguous"));
        }
        for b in &mut self.blocks {
            f(b.ln1.gamma.as_slice_mut().expect("contiguous"));
            f(b.ln1.beta.as_slice_mut().expect("contiguous"));
            for lin in [&mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo] {
                f(lin.w.as_slice_mut().expect("contiguous"));
                f(lin.b.as_slice_mut().expect("contiguous"));
            }
            f(b.ln2.gamma.as_slice_mut().expect("contiguous"));
            f(b.ln2.beta.as_slice_mut().expect("contiguous"));
            for lin in [&mut b.ff1, &mut b.ff2] {
                f(lin.w.as_slice_mut().expect("contiguous"));
                f(lin.b.as_slice_mut().expect("contiguous"));
            }
        }
        for lin in [&mut self.decoder.main, &mut self.decoder.sub] {
            f(lin.w.as_slice_mut().expect("contiguous"));
            f(lin.b.as_slice_mut().expect("contiguous"));
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|s| n += s.len());
        n
    }

    /// All parameters in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(|s| out.extend_from_slice(s));
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.param_count() {
            return Err(ModelError::ShapeMismatch {
                what: "flat parameter vector".to_string(),
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        self.visit_mut(|s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    /// `self *= factor`, elementwise.
    pub fn scale(&mut self, factor: f64) {
        self.visit_mut(|s| {
            for v in s {
                *v *= factor;
            }
        });
    }

    /// `self += alpha * other`, elementwise. Shapes must match.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        let flat = other.flatten();
        let mut offset = 0;
        self.visit_mut(|s| {
            let n = s.len();
            for (v, o) in s.iter_mut().zip(&flat[offset..offset + n]) {
                *v += alpha * o;
            }
            offset += n;
        });
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|s| {
            if s.iter().any(|v| !v.is_finite()) {
                ok = false;
            }
        });
        ok
    }
}

/// One labeled sequence of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// `(steps, feature_dim)`.
    pub features: Array2<f64>,
    pub labels: Vec<StepLabel>,
    /// Which steps were replaced by the blackout vector (diagnostic only).
    pub blackout_mask: Vec<bool>,
}

impl FeatureSequence {
    pub fn new(features: Array2<f64>, labels: Vec<StepLabel>) -> Result<Self, ModelError> {
        if features.nrows() != labels.len() {
            return Err(ModelError::ShapeMismatch {
                what: "sequence labels".to_string(),
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if features.nrows() == 0 {
            return Err(ModelError::EmptySequence);
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("sequence features"));
        }
        let steps = features.nrows();
        Ok(FeatureSequence { features, labels, blackout_mask: vec![false; steps] })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

/// The decoder's output for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPrediction {
    pub main_probs: [f64; MAIN_CLASS_COUNT],
    /// Nonzero only on the winning main class's children.
    pub sub_probs: [f64; SUB_CLASS_COUNT],
    pub main_argmax: MainClass,
    pub sub_argmax: SubClass,
}

impl HierarchicalPrediction {
    pub fn main_prob(&self) -> f64 {
        self.main_probs[self.main_argmax.id()]
    }

    pub fn sub_prob(&self) -> f64 {
        self.sub_probs[self.sub_argmax.id()]
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax the main logits, pick the winner (ties to the lowest id), then
/// softmax only the winner's children among the sub logits.
pub fn decode_hierarchical(
    main_logits: ArrayView1<f64>,
    sub_logits: ArrayView1<f64>,
) -> Result<HierarchicalPrediction, ModelError> {
    if main_logits.len() != MAIN_CLASS_COUNT {
        return Err(ModelError::ShapeMismatch {
            what: "main logits".to_string(),
            expected: MAIN_CLASS_COUNT,
            found: main_logits.len(),
        });
    }
    if sub_logits.len() != SUB_CLASS_COUNT {
        return Err(ModelError::ShapeMismatch {
            what: "sub logits".to_string(),
            expected: SUB_CLASS_COUNT,
            found: sub_logits.len(),
        });
    }
    let mut main_probs = [0.0; MAIN_CLASS_COUNT];
    softmax_into(main_logits.as_slice().expect("contiguous"), &mut main_probs);
    let mut best = 0;
    for (i, p) in main_probs.iter().enumerate() {
        if *p > main_probs[best] {
            best = i;
        }
    }
    let main_argmax = MainClass::from_id(best).expect("softmax index in range");

    let children = main_argmax.subclasses();
    let branch: Vec<f64> = children.iter().map(|c| sub_logits[c.id()]).collect();
    let mut branch_probs = vec![0.0; children.len()];
    softmax_into(&branch, &mut branch_probs);

    let mut sub_probs = [0.0; SUB_CLASS_COUNT];
    let mut sub_best = 0;
    for (i, (child, p)) in children.iter().zip(&branch_probs).enumerate() {
        sub_probs[child.id()] = *p;
        if *p > branch_probs[sub_best] {
            sub_best = i;
        }
    }
    Ok(HierarchicalPrediction {
        main_probs,
        sub_probs,
        main_argmax,
        sub_argmax: children[sub_best],
    })
}

/// Encode a single feature vector to its latent (no positional term).
pub fn encode(params: &ModelParams, feature: ArrayView1<f64>) -> Result<Array1<f64>, ModelError> {
    if feature.len() != params.config.feature_dim {
        return Err(ModelError::ShapeMismatch {
            what: "feature vector".to_string(),
            expected: params.config.feature_dim,
            found: feature.len(),
        });
    }
    let x = feature.insert_axis(Axis(0)).to_owned();
    Ok(params.encoder.forward(&x).remove_axis(Axis(0)))
}

/// Full forward intermediates, consumed by the training backward pass.
pub struct ForwardTrace {
    encoder: layers::MlpCache,
    blocks: Vec<(Array2<f64>, attention::BlockCache)>,
    latents: Array2<f64>,
}

/// Run encoder → positional encoding → attention stack, returning the final
/// latents and the caches needed for backprop.
pub fn forward_latents(
    params: &ModelParams,
    features: &Array2<f64>,
    mask: &AttentionMask,
) -> Result<(Array2<f64>, ForwardTrace), ModelError> {
    if features.ncols() != params.config.feature_dim {
        return Err(ModelError::ShapeMismatch {
            what: "feature dimension".to_string(),
            expected: params.config.feature_dim,
            found: features.ncols(),
        });
    }
    let (encoded, encoder_cache) = params.encoder.forward_cached(features);
    let pe = positional_encoding(features.nrows(), params.config.latent_dim)?;
    let mut x = encoded + pe;
    let mut block_caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (y, cache) = block.forward_cached(&x, mask)?;
        block_caches.push((x, cache));
        x = y;
    }
    Ok((x.clone(), ForwardTrace { encoder: encoder_cache, blocks: block_caches, latents: x }))
}

/// Latents through the decoder heads: `(steps × 5, steps × 13)`.
pub fn decode_logits(params: &ModelParams, latents: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    (params.decoder.main.forward(latents), params.decoder.sub.forward(latents))
}

/// Backward pass from logit gradients through the whole model; gradients are
/// accumulated into `grads`.
pub fn backward_from_logits(
    params: &ModelParams,
    trace: &ForwardTrace,
    mask: &AttentionMask,
    d_main: &Array2<f64>,
    d_sub: &Array2<f64>,
    grads: &mut ModelParams,
) {
    let mut d_latents =
        params.decoder.main.backward(&trace.latents, d_main, &mut grads.decoder.main);
    d_latents =
        d_latents + params.decoder.sub.backward(&trace.latents, d_sub, &mut grads.decoder.sub);
    for (i, block) in params.blocks.iter().enumerate().rev() {
        let (_, cache) = &trace.blocks[i];
        d_latents = block.backward(cache, mask, &d_latents, &mut grads.blocks[i]);
    }
    // The positional term is additive, so its gradient passes straight to
    // the encoder output.
    params.encoder.backward(&trace.encoder, &d_latents, &mut grads.encoder);
}

/// Output of [`forward_per_step_logits`]:
/// `(main_logits, sub_logits, encoder_cache, latents)`.
pub type PerStepForward = (Array2<f64>, Array2<f64>, layers::MlpCache, Array2<f64>);

/// Forward pass without attention: encoder straight into the decoder, one
/// row per step. Used by phase-1 training and the per-step baseline.
pub fn forward_per_step_logits(
    params: &ModelParams,
    features: &Array2<f64>,
) -> Result<PerStepForward, ModelError> {
    if features.ncols() != params.config.feature_dim {
        return Err(ModelError::ShapeMismatch {
            what: "feature dimension".to_string(),
            expected: params.config.feature_dim,
            found: features.ncols(),
        });
    }
    let (latents, cache) = params.encoder.forward_cached(features);
    let (main, sub) = decode_logits(params, &latents);
    Ok((main, sub, cache, latents))
}

/// The complete inference pass: one hierarchical prediction per step.
pub fn forward(
    params: &ModelParams,
    features: &Array2<f64>,
    causal: bool,
) -> Result<Vec<HierarchicalPrediction>, ModelError> {
    let n = features.nrows();
    if n == 0 {
        return Err(ModelError::EmptySequence);
    }
    let mask = if causal { AttentionMask::causal(n) } else { AttentionMask::full(n) };
    let (latents, _) = forward_latents(params, features, &mask)?;
    let (main, sub) = decode_logits(params, &latents);
    (0..n).map(|i| decode_hierarchical(main.row(i), sub.row(i))).collect()
}

/// Per-step inference with the phase-1 (no-attention) path.
pub fn forward_per_step(
    params: &ModelParams,
    features: &Array2<f64>,
) -> Result<Vec<HierarchicalPrediction>, ModelError> {
    let (main, sub, _, _) = forward_per_step_logits(params, features)?;
    (0..features.nrows()).map(|i| decode_hierarchical(main.row(i), sub.row(i))).collect()
}

/// Confidence attached to a prediction when exporting labels.
pub fn prediction_confidence(pred: &HierarchicalPrediction) -> ClassConfidence {
    ClassConfidence::new(pred.sub_prob().clamp(0.0, 1.0)).expect("softmax output is a probability")
}
