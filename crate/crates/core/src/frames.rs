//! Frame labeling: interpolate classified GPS coordinates onto video-frame
//! timestamps and apply manual override ranges.
//!
//! A frame exactly on a GPS timestamp takes that coordinate's label. A frame
//! between two same-class coordinates takes the class with linearly
//! interpolated confidence. Between different classes the label switches at
//! the interval midpoint and every frame strictly inside the interval has
//! its confidence halved. Frames outside coverage stay unlabeled.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::LabeledCoordinate;
use crate::taxonomy::{ClassConfidence, MainClass, SubClass};

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame stamps must increase in both index and timestamp (record {0})")]
    UnsortedFrames(usize),
    #[error("coordinates must have strictly increasing timestamps (index {0})")]
    UnsortedCoords(usize),
    #[error("non-finite timestamp at record {0}")]
    NonFiniteTimestamp(usize),
    #[error("invalid overrides: {}", problems.join("; "))]
    InvalidOverrides { problems: Vec<String> },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}, record {record}: {message}")]
    Parse { path: PathBuf, record: usize, message: String },
}

/// A video frame's index and capture time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStamp {
    pub frame_index: u32,
    pub timestamp: f64,
}

/// Where a frame label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Auto,
    Override,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            LabelSource::Auto => "auto",
            LabelSource::Override => "override",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "auto" => Some(LabelSource::Auto),
            "override" => Some(LabelSource::Override),
            _ => None,
        }
    }
}

/// The label attached to one video frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLabel {
    pub frame_index: u32,
    pub sub_class: Option<SubClass>,
    pub confidence: ClassConfidence,
    pub source: LabelSource,
}

impl FrameLabel {
    pub fn main_class(&self) -> Option<MainClass> {
        self.sub_class.map(|s| s.main())
    }
}

/// An inclusive frame range to relabel by hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideEntry {
    pub start: u32,
    pub end: u32,
    pub sub_class: SubClass,
}

/// Diagnostics about one labeling run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LabelStats {
    /// Output frames that ended up with no class.
    pub unlabeled_frames: usize,
    /// True when there were no input coordinates at all.
    pub empty_coords: bool,
}

fn validate_frames(frames: &[FrameStamp]) -> Result<(), FrameError> {
    for (i, f) in frames.iter().enumerate() {
        if !f.timestamp.is_finite() {
            return Err(FrameError::NonFiniteTimestamp(i));
        }
        if i > 0
            && (f.frame_index <= frames[i - 1].frame_index
                || f.timestamp <= frames[i - 1].timestamp)
        {
            return Err(FrameError::UnsortedFrames(i));
        }
    }
    Ok(())
}

fn validate_coords(coords: &[LabeledCoordinate]) -> Result<(), FrameError> {
    for (i, c) in coords.iter().enumerate() {
        if i > 0 && c.point.timestamp <= coords[i - 1].point.timestamp {
            return Err(FrameError::UnsortedCoords(i));
        }
    }
    Ok(())
}

/// Interpolate coordinate labels onto frame timestamps.
pub fn label_frames(
    coords: &[LabeledCoordinate],
    frames: &[FrameStamp],
) -> Result<(Vec<FrameLabel>, LabelStats), FrameError> {
    validate_frames(frames)?;
    validate_coords(coords)?;
    let mut stats = LabelStats { empty_coords: coords.is_empty(), ..Default::default() };
    let mut labels = Vec::with_capacity(frames.len());
    for frame in frames {
        let (sub_class, confidence) = interpolate_at(coords, frame.timestamp);
        if sub_class.is_none() {
            stats.unlabeled_frames += 1;
        }
        labels.push(FrameLabel {
            frame_index: frame.frame_index,
            sub_class,
            confidence: ClassConfidence::new(confidence)
                .expect("interpolated confidence stays within [0, 1]"),
            source: LabelSource::Auto,
        });
    }
    Ok((labels, stats))
}

fn interpolate_at(coords: &[LabeledCoordinate], t: f64) -> (Option<SubClass>, f64) {
    // Number of coordinates with timestamp <= t.
    let k = coords.partition_point(|c| c.point.timestamp <= t);
    if k == 0 {
        return (None, 0.0);
    }
    let left = &coords[k - 1];
    if left.point.timestamp == t {
        return (left.sub_class, left.confidence.value());
    }
    if k == coords.len() {
        return (None, 0.0);
    }
    let right = &coords[k];
    let (t0, t1) = (left.point.timestamp, right.point.timestamp);
    let frac = (t - t0) / (t1 - t0);
    let lerp =
        left.confidence.value() + (right.confidence.value() - left.confidence.value()) * frac;
    match (left.sub_class, right.sub_class) {
        (Some(a), Some(b)) if a == b => (Some(a), lerp),
        (Some(a), Some(b)) => {
            let midpoint = (t0 + t1) / 2.0;
            let class = if t < midpoint { a } else { b };
            (Some(class), lerp * 0.5)
        }
        // A gap in coverage on either side: refuse to interpolate across it.
        _ => (None, 0.0),
    }
}

/// Replace labels inside override ranges with the override class at full
/// confidence. Fails if any range is inverted, overlaps another, or reaches
/// past the labeled frames; all offending entries are reported together.
pub fn apply_overrides(
    labels: &[FrameLabel],
    overrides: &[OverrideEntry],
) -> Result<Vec<FrameLabel>, FrameError> {
    let mut problems = Vec::new();
    let max_index = labels.iter().map(|l| l.frame_index).max();
    for (i, entry) in overrides.iter().enumerate() {
        if entry.start > entry.end {
            problems.push(format!("entry {i} has start {} after end {}", entry.start, entry.end));
        }
        match max_index {
            Some(max) if entry.end <= max => {}
            _ => problems.push(format!(
                "entry {i} ends at frame {} beyond the last labeled frame {}",
                entry.end,
                max_index.map(|m| m.to_string()).unwrap_or_else(|| "<none>".to_string())
            )),
        }
    }
    // Overlap detection only makes sense between well-formed entries;
    // inverted ones were already reported above.
    let mut order: Vec<usize> =
        (0..overrides.len()).filter(|&i| overrides[i].start <= overrides[i].end).collect();
    order.sort_by_key(|&i| overrides[i].start);
    for pair in order.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if overrides[a].end >= overrides[b].start {
            problems.push(format!(
                "entries {a} and {b} overlap (frames {}..={} and {}..={})",
                overrides[a].start, overrides[a].end, overrides[b].start, overrides[b].end
            ));
        }
    }
    if !problems.is_empty() {
        return Err(FrameError::InvalidOverrides { problems });
    }

    let mut out = labels.to_vec();
    for label in &mut out {
        let covering =
            overrides.iter().find(|e| e.start <= label.frame_index && label.frame_index <= e.end);
        if let Some(entry) = covering {
            label.sub_class = Some(entry.sub_class);
            label.confidence = ClassConfidence::ONE;
            label.source = LabelSource::Override;
        }
    }
    Ok(out)
}

/// Read a `frame_index,timestamp` CSV.
pub fn read_frames_csv(path: &Path) -> Result<Vec<FrameStamp>, FrameError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?;
    let headers = reader
        .headers()
        .map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?
        .clone();
    let got: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if got.len() < 2 || got[..2] != ["frame_index", "timestamp"] {
        return Err(FrameError::Parse {
            path: path.to_path_buf(),
            record: 0,
            message: format!("expected header [frame_index, timestamp], found {got:?}"),
        });
    }
    let mut frames = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?;
        let parse_err =
            |message: String| FrameError::Parse { path: path.to_path_buf(), record: i, message };
        let frame_index = row
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err("invalid frame_index".to_string()))?;
        let timestamp = row
            .get(1)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err("invalid timestamp".to_string()))?;
        frames.push(FrameStamp { frame_index, timestamp });
    }
    validate_frames(&frames)?;
    Ok(frames)
}

/// Write labels as `frame_index,sub_class,main_class,confidence,source` with
/// six decimal places of confidence.
pub fn write_labels_csv(path: &Path, labels: &[FrameLabel]) -> Result<(), FrameError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?;
    let to_csv = |source: csv::Error| FrameError::Csv { path: path.to_path_buf(), source };
    writer
        .write_record(["frame_index", "sub_class", "main_class", "confidence", "source"])
        .map_err(to_csv)?;
    for l in labels {
        writer
            .write_record([
                l.frame_index.to_string(),
                l.sub_class.map(|s| s.name().to_string()).unwrap_or_default(),
                l.main_class().map(|m| m.name().to_string()).unwrap_or_default(),
                format!("{:.6}", l.confidence.value()),
                l.source.name().to_string(),
            ])
            .map_err(to_csv)?;
    }
    writer.flush().map_err(|source| FrameError::Io { path: path.to_path_buf(), source })
}

/// Read a file produced by [`write_labels_csv`].
pub fn read_labels_csv(path: &Path) -> Result<Vec<FrameLabel>, FrameError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?;
    let headers = reader
        .headers()
        .map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?
        .clone();
    let got: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let expected = ["frame_index", "sub_class", "main_class", "confidence", "source"];
    if got.len() < expected.len() || got[..expected.len()] != expected {
        return Err(FrameError::Parse {
            path: path.to_path_buf(),
            record: 0,
            message: format!("expected header {expected:?}, found {got:?}"),
        });
    }
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|source| FrameError::Csv { path: path.to_path_buf(), source })?;
        let parse_err =
            |message: String| FrameError::Parse { path: path.to_path_buf(), record: i, message };
        let frame_index = row
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err("invalid frame_index".to_string()))?;
        let sub_raw = row.get(1).unwrap_or("").trim();
        let sub_class = if sub_raw.is_empty() {
            None
        } else {
            Some(SubClass::from_name(sub_raw).map_err(|e| parse_err(e.to_string()))?)
        };
        let main_raw = row.get(2).unwrap_or("").trim();
        let expected_main = sub_class.map(|s| s.main().name()).unwrap_or("");
        if main_raw != expected_main {
            return Err(parse_err(format!(
                "main_class {main_raw:?} does not match sub_class {sub_raw:?}"
            )));
        }
        let confidence: f64 = row
            .get(3)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err("invalid confidence".to_string()))?;
        let source = row
            .get(4)
            .and_then(|v| LabelSource::from_name(v.trim()))
            .ok_or_else(|| parse_err("invalid source".to_string()))?;
        labels.push(FrameLabel {
            frame_index,
            sub_class,
            confidence: ClassConfidence::new(confidence).map_err(|e| parse_err(e.to_string()))?,
            source,
        });
    }
    Ok(labels)
}

/// Read an override file: a JSON list of `{start, end, sub_class}` entries.
pub fn load_overrides(path: &Path) -> Result<Vec<OverrideEntry>, FrameError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| FrameError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| FrameError::Parse {
        path: path.to_path_buf(),
        record: e.line(),
        message: e.to_string(),
    })
}
