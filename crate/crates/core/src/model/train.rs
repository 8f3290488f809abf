//! Two-phase optimizer: phase 1 fits the encoder and decoder on shuffled
//! individual steps (no temporal context); phase 2 warm-starts from those
//! weights, re-initializes the attention stack with zeroed residual outputs
//! and fine-tunes the whole model on full sequences.
//!
//! Both phases use minibatch SGD with classical momentum and are bitwise
//! deterministic for a fixed seed: shuffles come from a seeded ChaCha8
//! stream, and the parallel per-sequence gradients of phase 2 are reduced
//! in sequence order.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{hierarchical_loss, hierarchical_loss_backward, StepLabel};
use super::{
    backward_from_logits, decode_logits, forward_latents, forward_per_step_logits, AttentionMask,
    FeatureSequence, ModelConfig, ModelError, ModelParams,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite loss) in phase {phase}, epoch {epoch}, batch {batch}")]
    Diverged { phase: u8, epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Optimizer hyperparameters shared by both phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the main-class term in the loss.
    pub w_m: f64,
    /// Weight of the sub-class term in the loss.
    pub w_s: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Steps per batch in phase 1; sequences per batch in phase 2.
    pub batch_size: usize,
    pub seed: u64,
    /// Restrict phase-2 attention to past-and-present steps.
    pub causal_mask: bool,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            w_m: 1.0,
            w_s: 0.5,
            learning_rate: 1e-2,
            epochs: 10,
            batch_size: 32,
            seed: 42,
            causal_mask: false,
            momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !self.w_m.is_finite() || !self.w_s.is_finite() || self.w_m < 0.0 || self.w_s < 0.0 {
            return Err(TrainError::InvalidConfig(
                "loss weights must be finite and non-negative".to_string(),
            ));
        }
        if self.w_m + self.w_s == 0.0 {
            return Err(TrainError::InvalidConfig(
                "at least one loss weight must be positive".to_string(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::InvalidConfig(
                "learning rate must be finite and non-negative".to_string(),
            ));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".to_string()));
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::InvalidConfig("momentum must lie in [0, 1)".to_string()));
        }
        Ok(())
    }
}

/// One independent training step for phase 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSample {
    pub feature: Array1<f64>,
    pub label: StepLabel,
}

/// Trained parameters plus the mean batch loss per epoch.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ModelParams,
    pub epoch_losses: Vec<f64>,
}

/// `velocity = momentum * velocity + grads; params -= lr * velocity`.
fn sgd_step(
    params: &mut ModelParams,
    velocity: &mut ModelParams,
    grads: &ModelParams,
    learning_rate: f64,
    momentum: f64,
) {
    velocity.scale(momentum);
    velocity.axpy(1.0, grads);
    params.axpy(-learning_rate, velocity);
}

/// Train the encoder and decoder on independent steps. The attention stack
/// is initialized but never touched here; phase 2 replaces it anyway.
pub fn train_phase1(
    samples: &[StepSample],
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    model_config.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for sample in samples {
        if sample.feature.len() != model_config.feature_dim {
            return Err(ModelError::ShapeMismatch {
                what: "sample feature".to_string(),
                expected: model_config.feature_dim,
                found: sample.feature.len(),
            }
            .into());
        }
    }

    let mut params = ModelParams::init(model_config, config.seed)?;
    let mut velocity = params.zeros_like();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut batch_losses = Vec::new();
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut features = Array2::zeros((chunk.len(), model_config.feature_dim));
            let mut labels = Vec::with_capacity(chunk.len());
            for (row, &i) in chunk.iter().enumerate() {
                features.row_mut(row).assign(&samples[i].feature);
                labels.push(samples[i].label);
            }

            let (main_logits, sub_logits, encoder_cache, latents) =
                forward_per_step_logits(&params, &features)?;
            let loss =
                hierarchical_loss(&main_logits, &sub_logits, &labels, config.w_m, config.w_s)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { phase: 1, epoch, batch: batch_idx });
            }
            batch_losses.push(loss);

            let (d_main, d_sub) = hierarchical_loss_backward(
                &main_logits,
                &sub_logits,
                &labels,
                config.w_m,
                config.w_s,
            )?;
            let mut grads = params.zeros_like();
            let mut d_latents =
                params.decoder.main.backward(&latents, &d_main, &mut grads.decoder.main);
            d_latents =
                d_latents + params.decoder.sub.backward(&latents, &d_sub, &mut grads.decoder.sub);
            params.encoder.backward(&encoder_cache, &d_latents, &mut grads.encoder);

            sgd_step(&mut params, &mut velocity, &grads, config.learning_rate, config.momentum);
        }
        epoch_losses.push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
    }

    Ok(TrainReport { params, epoch_losses })
}

fn sequence_loss_and_grads(
    params: &ModelParams,
    sequence: &FeatureSequence,
    config: &TrainConfig,
) -> Result<(f64, ModelParams), ModelError> {
    let mask = if config.causal_mask {
        AttentionMask::causal(sequence.len())
    } else {
        AttentionMask::full(sequence.len())
    };
    let (latents, trace) = forward_latents(params, &sequence.features, &mask)?;
    let (main_logits, sub_logits) = decode_logits(params, &latents);
    let loss =
        hierarchical_loss(&main_logits, &sub_logits, &sequence.labels, config.w_m, config.w_s)?;
    let (d_main, d_sub) = hierarchical_loss_backward(
        &main_logits,
        &sub_logits,
        &sequence.labels,
        config.w_m,
        config.w_s,
    )?;
    let mut grads = params.zeros_like();
    backward_from_logits(params, &trace, &mask, &d_main, &d_sub, &mut grads);
    Ok((loss, grads))
}

/// Fine-tune the full model on sequences, warm-starting from phase-1
/// parameters. Per-sequence gradients within a batch are computed in
/// parallel and reduced in sequence order, so results do not depend on the
/// thread count.
pub fn train_phase2(
    sequences: &[FeatureSequence],
    phase1_params: &ModelParams,
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let feature_dim = phase1_params.config.feature_dim;
    for sequence in sequences {
        if sequence.features.ncols() != feature_dim {
            return Err(ModelError::ShapeMismatch {
                what: "sequence feature dimension".to_string(),
                expected: feature_dim,
                found: sequence.features.ncols(),
            }
            .into());
        }
    }

    let mut params = phase1_params.clone();
    params.reset_attention_for_phase2(config.seed)?;
    let mut velocity = params.zeros_like();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut batch_losses = Vec::new();
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let results: Vec<Result<(f64, ModelParams), ModelError>> = chunk
                .par_iter()
                .map(|&i| sequence_loss_and_grads(&params, &sequences[i], config))
                .collect();

            let mut batch_loss = 0.0;
            let mut grads = params.zeros_like();
            for result in results {
                let (loss, seq_grads) = result?;
                batch_loss += loss;
                grads.axpy(1.0, &seq_grads);
            }
            let scale = 1.0 / chunk.len() as f64;
            batch_loss *= scale;
            grads.scale(scale);
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { phase: 2, epoch, batch: batch_idx });
            }
            batch_losses.push(batch_loss);

            sgd_step(&mut params, &mut velocity, &grads, config.learning_rate, config.momentum);
        }
        epoch_losses.push(batch_losses.iter().sum::<f64>() / batch_losses.len() as f64);
    }

    Ok(TrainReport { params, epoch_losses })
}

/// Mean loss of the full temporal model over a set of sequences, without
/// touching any parameters. Useful for held-out evaluation.
pub fn evaluate_loss(
    params: &ModelParams,
    sequences: &[FeatureSequence],
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    if sequences.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut total = 0.0;
    for sequence in sequences {
        let mask = if config.causal_mask {
            AttentionMask::causal(sequence.len())
        } else {
            AttentionMask::full(sequence.len())
        };
        let (latents, _) = forward_latents(params, &sequence.features, &mask)?;
        let (main_logits, sub_logits) = decode_logits(params, &latents);
        total +=
            hierarchical_loss(&main_logits, &sub_logits, &sequence.labels, config.w_m, config.w_s)?;
    }
    Ok(total / sequences.len() as f64)
}
