//! Grid-accelerated spatial index over classified road segments.
//!
//! Segments are registered in every grid cell their bounding box overlaps, so
//! a radius query returns a superset of the segments actually within range;
//! callers apply exact distance tests afterwards. The index serializes to
//! versioned JSON (origin, cell size, segments); the grid itself is rebuilt
//! on load.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::geometry::{GeoOrigin, PlanarPoint, Segment2D};
use crate::taxonomy::{MainClass, SubClass};

/// Version written into index files; bump on any layout change.
pub const INDEX_FORMAT_VERSION: u32 = 1;

/// A planar road segment carrying its source way and infrastructure class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedSegment {
    pub segment: Segment2D,
    pub way_id: i64,
    pub sub_class: SubClass,
}

impl ClassifiedSegment {
    pub fn main_class(&self) -> MainClass {
        self.sub_class.main()
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    way_id: i64,
    sub_class: SubClass,
    main_class: MainClass,
    a: PlanarPoint,
    b: PlanarPoint,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    origin: GeoOrigin,
    cell_size: f64,
    segments: Vec<SegmentRecord>,
}

/// Immutable-after-build spatial index of [`ClassifiedSegment`]s.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    origin: GeoOrigin,
    cell_size: f64,
    segments: Vec<ClassifiedSegment>,
    grid: HashMap<(i64, i64), Vec<u32>>,
}

impl SegmentIndex {
    pub fn new(origin: GeoOrigin, cell_size: f64) -> Result<Self, IngestError> {
        if !cell_size.is_finite() || cell_size <= 0.0 {
            return Err(IngestError::InvalidCellSize(cell_size));
        }
        Ok(SegmentIndex { origin, cell_size, segments: Vec::new(), grid: HashMap::new() })
    }

    pub fn origin(&self) -> &GeoOrigin {
        &self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn segments(&self) -> &[ClassifiedSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.grid.len()
    }

    fn cell_of(&self, v: f64) -> i64 {
        (v / self.cell_size).floor() as i64
    }

    pub fn insert(&mut self, seg: ClassifiedSegment) {
        let id = u32::try_from(self.segments.len()).expect("segment count exceeds u32 range");
        let (x0, x1) = min_max(seg.segment.a.x, seg.segment.b.x);
        let (y0, y1) = min_max(seg.segment.a.y, seg.segment.b.y);
        for cx in self.cell_of(x0)..=self.cell_of(x1) {
            for cy in self.cell_of(y0)..=self.cell_of(y1) {
                self.grid.entry((cx, cy)).or_default().push(id);
            }
        }
        self.segments.push(seg);
    }

    /// All segments whose bounding-box cells overlap the axis-aligned box of
    /// radius `radius` around `p`, in segment-id order. Guaranteed to be a
    /// superset of the segments within `radius` of `p`.
    pub fn query_radius(&self, p: PlanarPoint, radius: f64) -> Vec<&ClassifiedSegment> {
        if !radius.is_finite() || radius < 0.0 {
            return Vec::new();
        }
        let mut ids = BTreeSet::new();
        for cx in self.cell_of(p.x - radius)..=self.cell_of(p.x + radius) {
            for cy in self.cell_of(p.y - radius)..=self.cell_of(p.y + radius) {
                if let Some(bucket) = self.grid.get(&(cx, cy)) {
                    ids.extend(bucket.iter().copied());
                }
            }
        }
        ids.iter().map(|&id| &self.segments[id as usize]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let file = IndexFile {
            version: INDEX_FORMAT_VERSION,
            origin: self.origin,
            cell_size: self.cell_size,
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    way_id: s.way_id,
                    sub_class: s.sub_class,
                    main_class: s.main_class(),
                    a: s.segment.a,
                    b: s.segment.b,
                })
                .collect(),
        };
        let text = serde_json::to_string(&file).expect("index serialization cannot fail");
        std::fs::write(path, text)
            .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        let file: IndexFile =
            serde_json::from_str(&text).map_err(|e| IngestError::json(path, &e))?;
        if file.version != INDEX_FORMAT_VERSION {
            return Err(IngestError::UnsupportedVersion {
                found: file.version,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let mut index = SegmentIndex::new(file.origin, file.cell_size)?;
        for record in file.segments {
            if record.main_class != record.sub_class.main() {
                return Err(IngestError::InconsistentClass {
                    way_id: record.way_id,
                    sub_class: record.sub_class,
                    main_class: record.main_class,
                });
            }
            let segment = Segment2D::new(record.a, record.b)?;
            index.insert(ClassifiedSegment {
                segment,
                way_id: record.way_id,
                sub_class: record.sub_class,
            });
        }
        Ok(index)
    }
}

fn min_max(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}
