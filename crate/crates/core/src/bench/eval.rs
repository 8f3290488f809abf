//! Protocol-driven evaluation: accuracy metrics and normalized confusion
//! matrices over labeled sequences.
//!
//! The two temporal protocols slide a window of `window` steps over each
//! sequence with stride `stride` and record a `stride`-wide block of
//! outputs per window, so every labeled step is recorded exactly once:
//!
//! * `proposed` runs bidirectional attention and records the center block
//!   (window positions `(window-stride)/2 ..`).
//! * `no_future` runs causally masked attention and records the most recent
//!   block (the last `stride` positions).
//! * `no_temporal` skips attention entirely and decodes each step from the
//!   per-step encoder path.
//!
//! Window positions outside the sequence are padded with the blackout
//! feature vector.

use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::blackout_feature;
use super::BenchError;
use crate::model::{forward, forward_per_step, FeatureSequence, ModelParams, VideoData};
use crate::taxonomy::{MainClass, SubClass, MAIN_CLASS_COUNT, SUB_CLASS_COUNT};

/// The sampling protocol used to produce per-step predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Proposed,
    NoFuture,
    NoTemporal,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Proposed => "proposed",
            Protocol::NoFuture => "no_future",
            Protocol::NoTemporal => "no_temporal",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "proposed" => Some(Protocol::Proposed),
            "no_future" => Some(Protocol::NoFuture),
            "no_temporal" => Some(Protocol::NoTemporal),
            _ => None,
        }
    }
}

/// Windowing parameters and the padding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub window: usize,
    pub stride: usize,
    /// Padding/blackout feature; all zeros when absent.
    pub blackout_vector: Option<Vec<f64>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { window: 50, stride: 10, blackout_vector: None }
    }
}

impl EvalConfig {
    /// Check the window arithmetic for `protocol` and the padding vector
    /// against `feature_dim`.
    pub fn validate(&self, protocol: Protocol, feature_dim: usize) -> Result<(), BenchError> {
        if let Some(v) = &self.blackout_vector {
            if v.len() != feature_dim {
                return Err(BenchError::BlackoutDimension {
                    expected: feature_dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(BenchError::InvalidConfig(
                    "blackout vector must be finite".to_string(),
                ));
            }
        }
        if protocol == Protocol::NoTemporal {
            return Ok(());
        }
        if self.window == 0 || self.stride == 0 {
            return Err(BenchError::InvalidConfig("window and stride must be nonzero".to_string()));
        }
        if self.stride > self.window {
            return Err(BenchError::InvalidConfig(format!(
                "stride {} exceeds window {}",
                self.stride, self.window
            )));
        }
        if protocol == Protocol::Proposed && !(self.window - self.stride).is_multiple_of(2) {
            return Err(BenchError::InvalidConfig(format!(
                "centered recording needs an even window-stride gap, got {} - {}",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    fn padding(&self, feature_dim: usize) -> Array1<f64> {
        match &self.blackout_vector {
            Some(v) => Array1::from_vec(v.clone()),
            None => blackout_feature(feature_dim),
        }
    }
}

/// Accuracy of one sub-class, with the number of labeled steps behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: SubClass,
    pub support: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAccuracy {
    pub video_id: String,
    pub labeled_steps: usize,
    /// Fraction of labeled steps with the correct sub-class.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub labeled_steps: usize,
    /// Mean per-class accuracy over main classes with at least one sample.
    pub main_macro_accuracy: f64,
    /// Mean per-class accuracy over sub classes with at least one sample.
    pub sub_macro_accuracy: f64,
    pub main_micro_accuracy: f64,
    pub sub_micro_accuracy: f64,
    /// One entry per sub-class, in id order.
    pub per_class_accuracy: Vec<ClassAccuracy>,
    /// Row-normalized over the true class; all-zero rows are listed in
    /// `empty_main_rows` instead of holding NaN.
    pub main_confusion: Vec<Vec<f64>>,
    pub sub_confusion: Vec<Vec<f64>>,
    pub empty_main_rows: Vec<MainClass>,
    pub empty_sub_rows: Vec<SubClass>,
    pub per_video_accuracy: Vec<VideoAccuracy>,
}

/// The window start and the global step range recorded from it, for every
/// window touching a sequence of `len` steps. The recorded ranges tile
/// `0..len`, so each step is recorded exactly once.
fn record_plan(len: usize, stride: usize, record_start: usize) -> Vec<(isize, Range<usize>)> {
    let mut plan = Vec::new();
    let mut block_start = 0;
    while block_start < len {
        let block_end = (block_start + stride).min(len);
        let window_start = block_start as isize - record_start as isize;
        plan.push((window_start, block_start..block_end));
        block_start = block_end;
    }
    plan
}

#[cfg(test)]
pub(crate) fn record_plan_for_tests(
    len: usize,
    stride: usize,
    record_start: usize,
) -> Vec<(isize, Range<usize>)> {
    record_plan(len, stride, record_start)
}

fn build_window(
    features: &Array2<f64>,
    window_start: isize,
    window: usize,
    padding: &Array1<f64>,
) -> Array2<f64> {
    let len = features.nrows() as isize;
    let mut out = Array2::zeros((window, features.ncols()));
    for j in 0..window {
        let g = window_start + j as isize;
        if (0..len).contains(&g) {
            out.row_mut(j).assign(&features.row(g as usize));
        } else {
            out.row_mut(j).assign(padding);
        }
    }
    out
}

/// `(true sub-class, predicted main, predicted sub)` for one labeled step.
type StepOutcome = (SubClass, MainClass, SubClass);

/// [`StepOutcome`] for every labeled step of one sequence.
fn eval_sequence(
    params: &ModelParams,
    sequence: &FeatureSequence,
    protocol: Protocol,
    cfg: &EvalConfig,
) -> Result<Vec<StepOutcome>, BenchError> {
    let len = sequence.len();
    let mut predictions: Vec<Option<(MainClass, SubClass)>> = vec![None; len];

    match protocol {
        Protocol::NoTemporal => {
            let preds = forward_per_step(params, &sequence.features)?;
            for (slot, p) in predictions.iter_mut().zip(preds) {
                *slot = Some((p.main_argmax, p.sub_argmax));
            }
        }
        Protocol::Proposed | Protocol::NoFuture => {
            let record_start = match protocol {
                Protocol::Proposed => (cfg.window - cfg.stride) / 2,
                _ => cfg.window - cfg.stride,
            };
            let padding = cfg.padding(sequence.features.ncols());
            let causal = protocol == Protocol::NoFuture;
            for (window_start, block) in record_plan(len, cfg.stride, record_start) {
                let window = build_window(&sequence.features, window_start, cfg.window, &padding);
                let preds = forward(params, &window, causal)?;
                for g in block {
                    let pos = (g as isize - window_start) as usize;
                    predictions[g] = Some((preds[pos].main_argmax, preds[pos].sub_argmax));
                }
            }
        }
    }

    let mut out = Vec::new();
    for (label, prediction) in sequence.labels.iter().zip(&predictions) {
        if let Some(true_sub) = label.sub_class {
            if label.confidence.value() > 0.0 {
                let (pred_main, pred_sub) = prediction.expect("every step recorded");
                out.push((true_sub, pred_main, pred_sub));
            }
        }
    }
    Ok(out)
}

fn normalize_rows(counts: &[Vec<usize>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut normalized = Vec::with_capacity(counts.len());
    let mut empty = Vec::new();
    for (i, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            empty.push(i);
            normalized.push(vec![0.0; row.len()]);
        } else {
            normalized.push(row.iter().map(|&c| c as f64 / total as f64).collect());
        }
    }
    (normalized, empty)
}

fn macro_accuracy(counts: &[Vec<usize>]) -> f64 {
    let mut sum = 0.0;
    let mut classes = 0;
    for (i, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total > 0 {
            sum += row[i] as f64 / total as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        0.0
    } else {
        sum / classes as f64
    }
}

fn micro_accuracy(counts: &[Vec<usize>]) -> f64 {
    let correct: usize = counts.iter().enumerate().map(|(i, row)| row[i]).sum();
    let total: usize = counts.iter().map(|row| row.iter().sum::<usize>()).sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Evaluate `params` over every labeled step of every video.
pub fn evaluate(
    params: &ModelParams,
    videos: &[VideoData],
    protocol: Protocol,
    cfg: &EvalConfig,
) -> Result<EvalReport, BenchError> {
    cfg.validate(protocol, params.config.feature_dim)?;

    let jobs: Vec<(usize, &FeatureSequence)> = videos
        .iter()
        .enumerate()
        .flat_map(|(v, video)| video.sequences.iter().map(move |s| (v, s)))
        .collect();
    let results: Vec<Result<(usize, Vec<StepOutcome>), BenchError>> = jobs
        .par_iter()
        .map(|&(v, sequence)| Ok((v, eval_sequence(params, sequence, protocol, cfg)?)))
        .collect();

    let mut main_counts = vec![vec![0usize; MAIN_CLASS_COUNT]; MAIN_CLASS_COUNT];
    let mut sub_counts = vec![vec![0usize; SUB_CLASS_COUNT]; SUB_CLASS_COUNT];
    let mut video_correct = vec![0usize; videos.len()];
    let mut video_total = vec![0usize; videos.len()];
    for result in results {
        let (v, rows) = result?;
        for (true_sub, pred_main, pred_sub) in rows {
            main_counts[true_sub.main().id()][pred_main.id()] += 1;
            sub_counts[true_sub.id()][pred_sub.id()] += 1;
            video_total[v] += 1;
            if pred_sub == true_sub {
                video_correct[v] += 1;
            }
        }
    }

    let labeled_steps: usize = video_total.iter().sum();
    if labeled_steps == 0 {
        return Err(BenchError::EmptyDataset);
    }

    let (main_confusion, empty_main) = normalize_rows(&main_counts);
    let (sub_confusion, empty_sub) = normalize_rows(&sub_counts);
    let per_class_accuracy = (0..SUB_CLASS_COUNT)
        .map(|i| {
            let support: usize = sub_counts[i].iter().sum();
            ClassAccuracy {
                class: SubClass::from_id(i).expect("id in range"),
                support,
                accuracy: if support == 0 { 0.0 } else { sub_counts[i][i] as f64 / support as f64 },
            }
        })
        .collect();
    let per_video_accuracy = videos
        .iter()
        .enumerate()
        .map(|(v, video)| VideoAccuracy {
            video_id: video.id.clone(),
            labeled_steps: video_total[v],
            accuracy: if video_total[v] == 0 {
                0.0
            } else {
                video_correct[v] as f64 / video_total[v] as f64
            },
        })
        .collect();

    Ok(EvalReport {
        protocol,
        labeled_steps,
        main_macro_accuracy: macro_accuracy(&main_counts),
        sub_macro_accuracy: macro_accuracy(&sub_counts),
        main_micro_accuracy: micro_accuracy(&main_counts),
        sub_micro_accuracy: micro_accuracy(&sub_counts),
        per_class_accuracy,
        main_confusion,
        sub_confusion,
        empty_main_rows: empty_main
            .into_iter()
            .map(|i| MainClass::from_id(i).expect("id in range"))
            .collect(),
        empty_sub_rows: empty_sub
            .into_iter()
            .map(|i| SubClass::from_id(i).expect("id in range"))
            .collect(),
        per_video_accuracy,
    })
}

/// Write the report as pretty-printed JSON.
pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<(), BenchError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json + "\n")
        .map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}
