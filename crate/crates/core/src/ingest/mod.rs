//! Road-network ingestion: parse a GeoJSON extract of tagged ways, classify
//! each way with the rule cascade, and build a spatial index of planar
//! segments ready for GPS matching.
//!
//! The expected input is a `FeatureCollection` whose `LineString` features
//! carry tags in `properties`. Converting raw OpenStreetMap dumps into that
//! shape is out of scope here.

mod index;
pub mod rules;

pub use index::{ClassifiedSegment, SegmentIndex, INDEX_FORMAT_VERSION};
pub use rules::{classify_way, default_rules, ClassificationRule, RuleSet, TagCondition};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{to_local_plane, GeoOrigin, GeometryError, Segment2D};
use crate::taxonomy::{MainClass, SubClass};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path} (line {line}, column {column}): {message}")]
    Json { path: PathBuf, line: usize, column: usize, message: String },
    #[error("expected a FeatureCollection, found {0:?}")]
    NotFeatureCollection(String),
    #[error("feature {index}: {reason}")]
    BadFeature { index: usize, reason: String },
    #[error("rule {0} has no conditions and would match every way")]
    EmptyRule(usize),
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("unsupported index format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error(
        "segment of way {way_id} declares main class {main_class:?} but sub class {sub_class:?}"
    )]
    InconsistentClass { way_id: i64, sub_class: SubClass, main_class: MainClass },
    #[error("extract contains no coordinates to derive an origin from")]
    EmptyExtract,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl IngestError {
    fn json(path: &Path, e: &serde_json::Error) -> Self {
        IngestError::Json {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// A node coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCoord {
    pub lat: f64,
    pub lon: f64,
}

/// One tagged way of the road network.
#[derive(Debug, Clone, PartialEq)]
pub struct Way {
    pub way_id: i64,
    pub nodes: Vec<NodeCoord>,
    pub tags: BTreeMap<String, String>,
}

/// Counts of tolerated oddities encountered while parsing an extract.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct IngestWarnings {
    /// Features whose geometry was missing or not a LineString.
    pub skipped_geometries: usize,
    /// LineStrings with fewer than two coordinates.
    pub short_ways: usize,
    /// Ways dropped because their id was already taken.
    pub duplicate_way_ids: usize,
}

impl IngestWarnings {
    pub fn total(&self) -> usize {
        self.skipped_geometries + self.short_ways + self.duplicate_way_ids
    }
}

/// A parsed road-network extract.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkExtract {
    pub ways: Vec<Way>,
    pub warnings: IngestWarnings,
}

impl NetworkExtract {
    /// Mean lat/lon over every node of every way; the natural projection
    /// origin for the extract.
    pub fn centroid_origin(&self) -> Result<GeoOrigin, IngestError> {
        let mut n = 0usize;
        let (mut lat, mut lon) = (0.0, 0.0);
        for way in &self.ways {
            for node in &way.nodes {
                lat += node.lat;
                lon += node.lon;
                n += 1;
            }
        }
        if n == 0 {
            return Err(IngestError::EmptyExtract);
        }
        Ok(GeoOrigin::new(lat / n as f64, lon / n as f64)?)
    }
}

#[derive(Deserialize)]
struct RawFeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    features: Vec<RawFeature>,
}

#[derive(Deserialize)]
struct RawFeature {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    geometry: Option<RawGeometry>,
    #[serde(default)]
    properties: Option<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Deserialize)]
struct RawGeometry {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    coordinates: serde_json::Value,
}

/// Read and parse a GeoJSON extract file.
pub fn load_extract(path: &Path) -> Result<NetworkExtract, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    parse_extract(&text).map_err(|e| match e {
        // Re-attach the file path to errors produced by the string parser.
        IngestError::Json { line, column, message, .. } => {
            IngestError::Json { path: path.to_path_buf(), line, column, message }
        }
        other => other,
    })
}

/// Parse GeoJSON text into a [`NetworkExtract`].
///
/// Non-LineString features and LineStrings with fewer than two coordinates
/// are skipped and counted in the warnings; malformed coordinates are hard
/// errors carrying the feature index.
pub fn parse_extract(text: &str) -> Result<NetworkExtract, IngestError> {
    let collection: RawFeatureCollection =
        serde_json::from_str(text).map_err(|e| IngestError::json(Path::new("<input>"), &e))?;
    if collection.kind != "FeatureCollection" {
        return Err(IngestError::NotFeatureCollection(collection.kind));
    }

    let mut warnings = IngestWarnings::default();
    let mut ways = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (i, feature) in collection.features.iter().enumerate() {
        if feature.kind != "Feature" {
            warnings.skipped_geometries += 1;
            continue;
        }
        let geometry = match &feature.geometry {
            Some(g) if g.kind == "LineString" => g,
            _ => {
                warnings.skipped_geometries += 1;
                continue;
            }
        };
        let nodes = parse_line_string(&geometry.coordinates, i)?;
        if nodes.len() < 2 {
            warnings.short_ways += 1;
            continue;
        }
        let tags = parse_tags(feature.properties.as_ref());
        let way_id = extract_way_id(feature, &tags).unwrap_or(i as i64);
        if !seen_ids.insert(way_id) {
            warnings.duplicate_way_ids += 1;
            continue;
        }
        ways.push(Way { way_id, nodes, tags });
    }
    Ok(NetworkExtract { ways, warnings })
}

fn parse_line_string(
    coords: &serde_json::Value,
    index: usize,
) -> Result<Vec<NodeCoord>, IngestError> {
    let bad = |reason: &str| IngestError::BadFeature { index, reason: reason.to_string() };
    let list = coords.as_array().ok_or_else(|| bad("LineString coordinates are not an array"))?;
    let mut nodes = Vec::with_capacity(list.len());
    for pair in list {
        let pair = pair.as_array().ok_or_else(|| bad("coordinate is not an array"))?;
        if pair.len() < 2 {
            return Err(bad("coordinate has fewer than two components"));
        }
        // GeoJSON position order is [lon, lat, ...].
        let lon = pair[0].as_f64().ok_or_else(|| bad("longitude is not a number"))?;
        let lat = pair[1].as_f64().ok_or_else(|| bad("latitude is not a number"))?;
        if !lon.is_finite() || !lat.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
            return Err(bad("coordinate outside valid lat/lon range"));
        }
        nodes.push(NodeCoord { lat, lon });
    }
    Ok(nodes)
}

fn parse_tags(
    properties: Option<&serde_json::Map<String, serde_json::Value>>,
) -> BTreeMap<String, String> {
    let mut tags = BTreeMap::new();
    if let Some(props) = properties {
        for (key, value) in props {
            let text = match value {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                // Nested structures and nulls are not tags.
                _ => continue,
            };
            tags.insert(key.clone(), text);
        }
    }
    tags
}

/// Way-id precedence: the feature-level `id`, then `way_id`/`osm_id`/`id`
/// tags; features without any usable id get their position in the file.
fn extract_way_id(feature: &RawFeature, tags: &BTreeMap<String, String>) -> Option<i64> {
    if let Some(id) = &feature.id {
        if let Some(parsed) = id.as_i64().or_else(|| id.as_str().and_then(|s| s.parse().ok())) {
            return Some(parsed);
        }
    }
    for key in ["way_id", "osm_id", "id"] {
        if let Some(parsed) = tags.get(key).and_then(|v| v.parse().ok()) {
            return Some(parsed);
        }
    }
    None
}

/// Statistics reported by [`build_index`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct BuildStats {
    pub ways_total: usize,
    pub ways_unclassifiable: usize,
    pub segments_built: usize,
    /// Consecutive node pairs that projected to the same planar point.
    pub degenerate_segments_skipped: usize,
    pub grid_cells: usize,
}

impl BuildStats {
    /// True when nothing made it into the index — worth a loud warning.
    pub fn empty_index(&self) -> bool {
        self.segments_built == 0
    }
}

/// Classify every way of `extract` and decompose the classified ones into
/// indexed planar segments.
pub fn build_index(
    extract: &NetworkExtract,
    origin: GeoOrigin,
    cell_size: f64,
    rules: &RuleSet,
) -> Result<(SegmentIndex, BuildStats), IngestError> {
    let mut idx = SegmentIndex::new(origin, cell_size)?;
    let mut stats = BuildStats { ways_total: extract.ways.len(), ..Default::default() };
    for way in &extract.ways {
        let Some(sub_class) = rules.classify(&way.tags) else {
            stats.ways_unclassifiable += 1;
            continue;
        };
        for pair in way.nodes.windows(2) {
            let a = to_local_plane(pair[0].lat, pair[0].lon, &origin)?;
            let b = to_local_plane(pair[1].lat, pair[1].lon, &origin)?;
            match Segment2D::new(a, b) {
                Ok(segment) => {
                    idx.insert(ClassifiedSegment { segment, way_id: way.way_id, sub_class });
                    stats.segments_built += 1;
                }
                Err(GeometryError::DegenerateSegment) => stats.degenerate_segments_skipped += 1,
                Err(other) => return Err(other.into()),
            }
        }
    }
    stats.grid_cells = idx.cell_count();
    Ok((idx, stats))
}
