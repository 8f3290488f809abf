//! Robustness sweep: sub-class accuracy as a function of the blackout
//! probability, aggregated over several checkpoints and repeated passes.
//!
//! For each probability p in {0.00, 0.05, ..., 1.00} every checkpoint is
//! evaluated `passes` times; each pass corrupts every test sequence once
//! with a fresh deterministic blackout mask (one mask per sequence per
//! pass, not per window). With 3 checkpoints and 2 passes that is 6
//! accuracy datapoints per probability, summarized as mean/min/max.

use std::path::Path;

use rayon::prelude::*;

use super::eval::{evaluate, EvalConfig, Protocol};
use super::synth::apply_blackout;
use super::BenchError;
use crate::model::{ModelParams, VideoData};

/// The sweep grid: 21 probabilities in 0.05 increments.
pub fn blackout_probabilities() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackoutPoint {
    pub p: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Number of accuracy datapoints behind the summary.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackoutCurve {
    pub points: Vec<BlackoutPoint>,
}

/// Deterministic seed for one (probability, checkpoint, pass, sequence)
/// cell; an arbitrary but fixed 64-bit mix.
fn mix_seed(base: u64, parts: [u64; 4]) -> u64 {
    let mut h = base ^ 0x51_7c_c1_b7_27_22_0a_95;
    for p in parts {
        h ^= p.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(31);
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
    }
    h
}

fn blacked_dataset(
    videos: &[VideoData],
    p: f64,
    base_seed: u64,
    parts: [u64; 3],
) -> Result<Vec<VideoData>, BenchError> {
    let mut out = Vec::with_capacity(videos.len());
    let mut sequence_counter = 0u64;
    for video in videos {
        let mut sequences = Vec::with_capacity(video.sequences.len());
        for sequence in &video.sequences {
            let seed = mix_seed(base_seed, [parts[0], parts[1], parts[2], sequence_counter]);
            sequences.push(apply_blackout(sequence, p, seed)?);
            sequence_counter += 1;
        }
        out.push(VideoData { id: video.id.clone(), sequences });
    }
    Ok(out)
}

/// Sweep all probabilities over all checkpoints. Each (probability,
/// checkpoint, pass) evaluation is independent and runs in parallel; the
/// summary reduction is ordered, so the curve is deterministic in `seed`.
pub fn blackout_sweep(
    checkpoints: &[ModelParams],
    videos: &[VideoData],
    protocol: Protocol,
    cfg: &EvalConfig,
    passes: usize,
    seed: u64,
) -> Result<BlackoutCurve, BenchError> {
    if checkpoints.is_empty() {
        return Err(BenchError::NoCheckpoints);
    }
    if passes == 0 {
        return Err(BenchError::InvalidConfig("passes must be at least 1".to_string()));
    }

    let probabilities = blackout_probabilities();
    let jobs: Vec<(usize, usize, usize)> = probabilities
        .iter()
        .enumerate()
        .flat_map(|(pi, _)| {
            (0..checkpoints.len()).flat_map(move |ci| (0..passes).map(move |pass| (pi, ci, pass)))
        })
        .collect();

    let accuracies: Vec<Result<f64, BenchError>> = jobs
        .par_iter()
        .map(|&(pi, ci, pass)| {
            let corrupted = blacked_dataset(
                videos,
                probabilities[pi],
                seed,
                [pi as u64, ci as u64, pass as u64],
            )?;
            let report = evaluate(&checkpoints[ci], &corrupted, protocol, cfg)?;
            Ok(report.sub_macro_accuracy)
        })
        .collect();

    let per_point = checkpoints.len() * passes;
    let mut points = Vec::with_capacity(probabilities.len());
    let mut iter = accuracies.into_iter();
    for &p in &probabilities {
        let mut values = Vec::with_capacity(per_point);
        for _ in 0..per_point {
            values.push(iter.next().expect("job per (p, checkpoint, pass)")?);
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // Guard the documented min <= mean <= max invariant against the
        // final ulp of the division.
        let mean = (values.iter().sum::<f64>() / values.len() as f64).clamp(min, max);
        points.push(BlackoutPoint { p, mean, min, max, samples: values.len() });
    }
    Ok(BlackoutCurve { points })
}

/// Write the curve as `p,mean,min,max` CSV rows.
pub fn write_curve_csv(path: &Path, curve: &BlackoutCurve) -> Result<(), BenchError> {
    let mut text = String::from("p,mean,min,max\n");
    for point in &curve.points {
        text.push_str(&format!(
            "{:.2},{:.6},{:.6},{:.6}\n",
            point.p, point.mean, point.min, point.max
        ));
    }
    std::fs::write(path, text).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}
