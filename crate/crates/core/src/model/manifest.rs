//! Dataset manifests: a small JSON document tying one or more videos, each
//! with a binary feature cache and a frame-label CSV, into a training or
//! evaluation dataset.
//!
//! Paths inside the manifest are resolved relative to the manifest file, so
//! a dataset directory can be moved as a unit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{read_feature_cache, CacheError};
use super::loss::StepLabel;
use super::{FeatureSequence, ModelError};
use crate::frames::{read_labels_csv, FrameError};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to access manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} is not valid JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("unsupported manifest version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("manifest lists no videos")]
    Empty,
    #[error("video {video}: cache holds sequences of length {cache}, manifest says {manifest}")]
    SequenceLengthMismatch { video: String, cache: usize, manifest: usize },
    #[error("video {video}: {labels} label rows cannot cover {features} feature steps")]
    LabelCountMismatch { video: String, labels: usize, features: usize },
    #[error("video {video}: label row {row} has frame_index {found}, expected {expected}")]
    NonContiguousLabels { video: String, row: usize, found: u32, expected: u32 },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One video's worth of data: a feature cache plus its labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestVideo {
    pub id: String,
    /// Feature cache path, relative to the manifest.
    pub features: String,
    /// Frame-label CSV path, relative to the manifest.
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    /// Steps per sequence N.
    pub sequence_length: usize,
    /// Seconds between consecutive steps.
    pub spacing: f64,
    pub videos: Vec<ManifestVideo>,
}

/// A fully loaded video: id plus its labeled sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoData {
    pub id: String,
    pub sequences: Vec<FeatureSequence>,
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), ManifestError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, json + "\n")
        .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| ManifestError::Json { path: path.to_path_buf(), message: e.to_string() })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(ManifestError::UnsupportedVersion {
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    if manifest.videos.is_empty() {
        return Err(ManifestError::Empty);
    }
    Ok(manifest)
}

fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Load every video referenced by the manifest at `path`. Labels are read
/// from frame-label CSVs whose rows must be contiguous from frame 0 and
/// cover every step of every sequence in the video's cache.
pub fn load_dataset(path: &Path) -> Result<Vec<VideoData>, ManifestError> {
    let manifest = load_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for video in &manifest.videos {
        let cache = read_feature_cache(&resolve(base, &video.features))?;
        if cache.sequence_length != manifest.sequence_length {
            return Err(ManifestError::SequenceLengthMismatch {
                video: video.id.clone(),
                cache: cache.sequence_length,
                manifest: manifest.sequence_length,
            });
        }
        let frame_labels = read_labels_csv(&resolve(base, &video.labels))?;
        let total_steps = cache.sequences.len() * cache.sequence_length;
        if frame_labels.len() != total_steps {
            return Err(ManifestError::LabelCountMismatch {
                video: video.id.clone(),
                labels: frame_labels.len(),
                features: total_steps,
            });
        }
        for (row, label) in frame_labels.iter().enumerate() {
            if label.frame_index != row as u32 {
                return Err(ManifestError::NonContiguousLabels {
                    video: video.id.clone(),
                    row,
                    found: label.frame_index,
                    expected: row as u32,
                });
            }
        }

        let n = cache.sequence_length;
        let mut sequences = Vec::with_capacity(cache.sequences.len());
        for (s, features) in cache.sequences.into_iter().enumerate() {
            let labels: Vec<StepLabel> = frame_labels[s * n..(s + 1) * n]
                .iter()
                .map(|l| StepLabel::new(l.sub_class, l.confidence))
                .collect::<Result<_, _>>()?;
            sequences.push(FeatureSequence::new(features, labels)?);
        }
        videos.push(VideoData { id: video.id.clone(), sequences });
    }
    Ok(videos)
}

/// Flatten a dataset into independent `(feature, label)` steps for phase-1
/// training.
pub fn flatten_steps(videos: &[VideoData]) -> Vec<super::train::StepSample> {
    let mut samples = Vec::new();
    for video in videos {
        for sequence in &video.sequences {
            for (i, label) in sequence.labels.iter().enumerate() {
                samples.push(super::train::StepSample {
                    feature: sequence.features.row(i).to_owned(),
                    label: *label,
                });
            }
        }
    }
    samples
}
