//! Geometric GPS-to-segment matching: propose nearby, direction-compatible
//! road segments for each trajectory coordinate, score them by combined
//! distance, and assign the best-scoring infrastructure class with a
//! normalized confidence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angular_distance, colinear_distance, combined_distance_with, distance_to_segment,
    fit_local_line, perpendicular_distance, to_local_plane, DistanceWeights, GeometryError,
    PlanarPoint,
};
use crate::ingest::{ClassifiedSegment, SegmentIndex};
use crate::taxonomy::{ClassConfidence, MainClass, SubClass};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("trajectory {id:?} needs at least 2 points for matching, found {found}")]
    TooFewPoints { id: String, found: usize },
    #[error("trajectory {id:?}: timestamps must be strictly increasing (point {index})")]
    NonMonotoneTimestamps { id: String, index: usize },
    #[error("trajectory {id:?}: non-finite coordinate at point {index}")]
    NonFinitePoint { id: String, index: usize },
    #[error(
        "trajectory centroid ({lat:.3}, {lon:.3}) is more than a degree from the index \
         origin ({origin_lat:.3}, {origin_lon:.3}); the index was built for a different area"
    )]
    OriginMismatch { lat: f64, lon: f64, origin_lat: f64, origin_lon: f64 },
    #[error("invalid match configuration: {0}")]
    InvalidConfig(String),
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
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One timestamped GPS fix in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
}

/// An ordered GPS trace; construction enforces finite fields and strictly
/// increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub points: Vec<GpsPoint>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, points: Vec<GpsPoint>) -> Result<Self, MatchError> {
        let id = id.into();
        for (i, p) in points.iter().enumerate() {
            if !p.timestamp.is_finite() || !p.lat.is_finite() || !p.lon.is_finite() {
                return Err(MatchError::NonFinitePoint { id, index: i });
            }
            if i > 0 && p.timestamp <= points[i - 1].timestamp {
                return Err(MatchError::NonMonotoneTimestamps { id, index: i });
            }
        }
        Ok(Trajectory { id, points })
    }

    /// Read a `timestamp,lat,lon` CSV; the trajectory id is the file stem.
    pub fn from_csv_path(path: &Path) -> Result<Self, MatchError> {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trajectory".to_string());
        let mut reader = csv::Reader::from_path(path)
            .map_err(|source| MatchError::Csv { path: path.to_path_buf(), source })?;
        expect_headers(&mut reader, path, &["timestamp", "lat", "lon"])?;
        let mut points = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|source| MatchError::Csv { path: path.to_path_buf(), source })?;
            points.push(GpsPoint {
                timestamp: parse_field(&row, 0, path, i, "timestamp")?,
                lat: parse_field(&row, 1, path, i, "lat")?,
                lon: parse_field(&row, 2, path, i, "lon")?,
            });
        }
        Trajectory::new(id, points)
    }

    fn centroid(&self) -> (f64, f64) {
        let n = self.points.len().max(1) as f64;
        let lat = self.points.iter().map(|p| p.lat).sum::<f64>() / n;
        let lon = self.points.iter().map(|p| p.lon).sum::<f64>() / n;
        (lat, lon)
    }
}

/// Matching thresholds and distance weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Half-width in seconds of the sample window for the heading line fit.
    pub time_window: f64,
    /// Candidate gate: maximum point-to-segment distance in meters.
    pub max_distance: f64,
    /// Candidate gate: maximum angle in degrees between heading and segment.
    pub max_angle: f64,
    pub epsilon: f64,
    pub w_perp: f64,
    pub w_colin: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            time_window: 3.0,
            max_distance: 25.0,
            max_angle: 30.0,
            epsilon: 1.0,
            w_perp: 1.0,
            w_colin: 2.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        let positive = [
            ("time_window", self.time_window),
            ("max_distance", self.max_distance),
            ("max_angle", self.max_angle),
            ("epsilon", self.epsilon),
            ("w_perp", self.w_perp),
            ("w_colin", self.w_colin),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(MatchError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_angle > 90.0 {
            return Err(MatchError::InvalidConfig(format!(
                "max_angle must be at most 90 degrees, got {}",
                self.max_angle
            )));
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self, MatchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| MatchError::Io { path: path.to_path_buf(), source })?;
        let cfg: MatchConfig = serde_json::from_str(&text).map_err(|e| MatchError::Parse {
            path: path.to_path_buf(),
            record: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn weights(&self) -> DistanceWeights {
        DistanceWeights { w_perp: self.w_perp, w_colin: self.w_colin, epsilon: self.epsilon }
    }
}

/// A GPS point with its assigned class; no class means confidence 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledCoordinate {
    pub point: GpsPoint,
    pub sub_class: Option<SubClass>,
    pub confidence: ClassConfidence,
}

impl LabeledCoordinate {
    pub fn main_class(&self) -> Option<MainClass> {
        self.sub_class.map(|s| s.main())
    }
}

/// Candidate segments for `p`: within `max_distance` of the point and, when
/// the local heading line can be fit from the trajectory samples inside
/// `time_window`, within `max_angle` of that heading.
pub fn propose_candidates(
    p: &GpsPoint,
    traj: &Trajectory,
    index: &SegmentIndex,
    cfg: &MatchConfig,
) -> Result<Vec<ClassifiedSegment>, MatchError> {
    cfg.validate()?;
    check_origin(traj, index)?;
    propose_candidates_unchecked(p, traj, index, cfg)
}

fn propose_candidates_unchecked(
    p: &GpsPoint,
    traj: &Trajectory,
    index: &SegmentIndex,
    cfg: &MatchConfig,
) -> Result<Vec<ClassifiedSegment>, MatchError> {
    let origin = index.origin();
    let pp = to_local_plane(p.lat, p.lon, origin)?;

    let mut nearby: Vec<ClassifiedSegment> = index
        .query_radius(pp, cfg.max_distance)
        .into_iter()
        .filter(|s| distance_to_segment(pp, &s.segment) <= cfg.max_distance)
        .copied()
        .collect();

    let window: Vec<PlanarPoint> = traj
        .points
        .iter()
        .filter(|q| (q.timestamp - p.timestamp).abs() <= cfg.time_window)
        .map(|q| to_local_plane(q.lat, q.lon, origin))
        .collect::<Result<_, _>>()?;
    // A stationary rider has no heading; keep the distance-filtered set.
    if let Ok(heading) = fit_local_line(&window) {
        let mut kept = Vec::with_capacity(nearby.len());
        for s in nearby {
            if angular_distance(&heading, &s.segment)? <= cfg.max_angle {
                kept.push(s);
            }
        }
        nearby = kept;
    }
    Ok(nearby)
}

/// Score candidates and pick the winning class.
///
/// Each candidate `i` gets a combined distance `D_i` and a score
/// `S_i = (sum of all D_j) / D_i`; a class scores the maximum over its
/// candidates, the best class wins, and the confidence is the winning score
/// divided by the sum of all class scores. Ties go to the lowest sub-class
/// id.
pub fn score_and_assign(
    p: &GpsPoint,
    candidates: &[ClassifiedSegment],
    cfg: &MatchConfig,
    origin_point: PlanarPoint,
) -> Result<LabeledCoordinate, MatchError> {
    if candidates.is_empty() {
        return Ok(LabeledCoordinate {
            point: *p,
            sub_class: None,
            confidence: ClassConfidence::ZERO,
        });
    }
    let first = candidates[0].sub_class;
    if candidates.iter().all(|c| c.sub_class == first) {
        return Ok(LabeledCoordinate {
            point: *p,
            sub_class: Some(first),
            confidence: ClassConfidence::ONE,
        });
    }

    let weights = cfg.weights();
    let distances: Vec<f64> = candidates
        .iter()
        .map(|c| {
            combined_distance_with(
                perpendicular_distance(origin_point, &c.segment),
                colinear_distance(origin_point, &c.segment),
                &weights,
            )
        })
        .collect::<Result<_, _>>()?;
    let total: f64 = distances.iter().sum();

    let mut class_scores: BTreeMap<SubClass, f64> = BTreeMap::new();
    for (candidate, d) in candidates.iter().zip(&distances) {
        let score = total / d;
        let entry = class_scores.entry(candidate.sub_class).or_insert(0.0);
        if score > *entry {
            *entry = score;
        }
    }

    let score_sum: f64 = class_scores.values().sum();
    // BTreeMap iterates in sub-class id order, so a strict comparison keeps
    // the lowest id on ties.
    let (winner, best) =
        class_scores
            .iter()
            .fold((first, 0.0), |acc, (&cls, &s)| if s > acc.1 { (cls, s) } else { acc });
    Ok(LabeledCoordinate {
        point: *p,
        sub_class: Some(winner),
        confidence: ClassConfidence::new(best / score_sum)
            .expect("normalized score is within [0, 1]"),
    })
}

fn check_origin(traj: &Trajectory, index: &SegmentIndex) -> Result<(), MatchError> {
    let (lat, lon) = traj.centroid();
    let origin = index.origin();
    if (lat - origin.lat0).abs() > 1.0 || (lon - origin.lon0).abs() > 1.0 {
        return Err(MatchError::OriginMismatch {
            lat,
            lon,
            origin_lat: origin.lat0,
            origin_lon: origin.lon0,
        });
    }
    Ok(())
}

/// Label every point of `traj` against `index`, preserving order.
pub fn classify_trajectory(
    traj: &Trajectory,
    index: &SegmentIndex,
    cfg: &MatchConfig,
) -> Result<Vec<LabeledCoordinate>, MatchError> {
    cfg.validate()?;
    if traj.points.len() < 2 {
        return Err(MatchError::TooFewPoints { id: traj.id.clone(), found: traj.points.len() });
    }
    check_origin(traj, index)?;
    traj.points
        .par_iter()
        .map(|p| {
            let candidates = propose_candidates_unchecked(p, traj, index, cfg)?;
            let pp = to_local_plane(p.lat, p.lon, index.origin())?;
            score_and_assign(p, &candidates, cfg, pp)
        })
        .collect()
}

fn expect_headers(
    reader: &mut csv::Reader<std::fs::File>,
    path: &Path,
    expected: &[&str],
) -> Result<(), MatchError> {
    let headers =
        reader.headers().map_err(|source| MatchError::Csv { path: path.to_path_buf(), source })?;
    let got: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(MatchError::Parse {
            path: path.to_path_buf(),
            record: 0,
            message: format!("expected header {expected:?}, found {got:?}"),
        });
    }
    Ok(())
}

fn parse_field(
    row: &csv::StringRecord,
    col: usize,
    path: &Path,
    record: usize,
    name: &str,
) -> Result<f64, MatchError> {
    let raw = row.get(col).ok_or_else(|| MatchError::Parse {
        path: path.to_path_buf(),
        record,
        message: format!("missing {name} column"),
    })?;
    raw.trim().parse().map_err(|_| MatchError::Parse {
        path: path.to_path_buf(),
        record,
        message: format!("invalid {name}: {raw:?}"),
    })
}

/// Write labeled coordinates as
/// `timestamp,lat,lon,sub_class,main_class,confidence` with six decimal
/// places of confidence; unmatched points leave the class columns empty.
pub fn write_matches_csv(path: &Path, labeled: &[LabeledCoordinate]) -> Result<(), MatchError> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|source| MatchError::Csv { path: path.to_path_buf(), source })?;
    let to_csv = |source: csv::Error| MatchError::Csv { path: path.to_path_buf(), source };
    writer
        .write_record(["timestamp", "lat", "lon", "sub_class", "main_class", "confidence"])
        .map_err(to_csv)?;
    for l in labeled {
        writer
            .write_record([
                l.point.timestamp.to_string(),
                l.point.lat.to_string(),
                l.point.lon.to_string(),
                l.sub_class.map(|s| s.name().to_string()).unwrap_or_default(),
                l.main_class().map(|m| m.name().to_string()).unwrap_or_default(),
                format!("{:.6}", l.confidence.value()),
            ])
            .map_err(to_csv)?;
    }
    writer.flush().map_err(|source| MatchError::Io { path: path.to_path_buf(), source })
}

/// Read a file produced by [`write_matches_csv`].
pub fn read_matches_csv(path: &Path) -> Result<Vec<LabeledCoordinate>, MatchError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|source| MatchError::Csv { path: path.to_path_buf(), source })?;
    expect_headers(
        &mut reader,
        path,
        &["timestamp", "lat", "lon", "sub_class", "main_class", "confidence"],
    )?;
    let mut labeled = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|source| MatchError::Csv { path: path.to_path_buf(), source })?;
        let parse_err =
            |message: String| MatchError::Parse { path: path.to_path_buf(), record: i, message };
        let point = GpsPoint {
            timestamp: parse_field(&row, 0, path, i, "timestamp")?,
            lat: parse_field(&row, 1, path, i, "lat")?,
            lon: parse_field(&row, 2, path, i, "lon")?,
        };
        let sub_raw = row.get(3).unwrap_or("").trim();
        let sub_class = if sub_raw.is_empty() {
            None
        } else {
            Some(SubClass::from_name(sub_raw).map_err(|e| parse_err(e.to_string()))?)
        };
        let main_raw = row.get(4).unwrap_or("").trim();
        let expected_main = sub_class.map(|s| s.main().name()).unwrap_or("");
        if main_raw != expected_main {
            return Err(parse_err(format!(
                "main_class {main_raw:?} does not match sub_class {sub_raw:?}"
            )));
        }
        let confidence = parse_field(&row, 5, path, i, "confidence")?;
        if sub_class.is_none() != (confidence == 0.0) {
            return Err(parse_err(format!(
                "confidence {confidence} inconsistent with sub_class {sub_raw:?}"
            )));
        }
        labeled.push(LabeledCoordinate {
            point,
            sub_class,
            confidence: ClassConfidence::new(confidence).map_err(|e| parse_err(e.to_string()))?,
        });
    }
    Ok(labeled)
}
