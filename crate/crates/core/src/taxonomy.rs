//! Hierarchical infrastructure class scheme: five main classes, thirteen
//! sub-classes, and the fixed sub-to-main mapping.
//!
//! Ids are assigned in declaration order (mains 0..4, subs 0..12) and the
//! snake_case names returned by [`MainClass::name`] / [`SubClass::name`] are
//! the canonical spelling in every file format this crate reads or writes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("unknown main class name: {0:?}")]
    UnknownMainClass(String),
    #[error("unknown sub class name: {0:?}")]
    UnknownSubClass(String),
    #[error("class id {id} out of range (max {max})")]
    IdOutOfRange { id: usize, max: usize },
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
}

/// One of the five top-level infrastructure categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainClass {
    NoInfrastructure = 0,
    PaintedBikeLane = 1,
    BufferedBikeLane = 2,
    ProtectedBikeLane = 3,
    OffRoad = 4,
}

/// One of the thirteen leaf classes; every sub-class has exactly one
/// [`MainClass`] parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubClass {
    MixedTraffic = 0,
    Shoulder = 1,
    BusLane = 2,
    SharedZone = 3,
    Sharrow = 4,
    PaintedBikeLane = 5,
    BufferedKerbSide = 6,
    BufferedRoadSide = 7,
    BufferedBoth = 8,
    ProtectedBikeLane = 9,
    SharedOffRoadPath = 10,
    DedicatedOffRoadBikePath = 11,
    OffPath = 12,
}

pub const MAIN_CLASS_COUNT: usize = 5;
pub const SUB_CLASS_COUNT: usize = 13;

pub const ALL_MAIN_CLASSES: [MainClass; MAIN_CLASS_COUNT] = [
    MainClass::NoInfrastructure,
    MainClass::PaintedBikeLane,
    MainClass::BufferedBikeLane,
    MainClass::ProtectedBikeLane,
    MainClass::OffRoad,
];

pub const ALL_SUB_CLASSES: [SubClass; SUB_CLASS_COUNT] = [
    SubClass::MixedTraffic,
    SubClass::Shoulder,
    SubClass::BusLane,
    SubClass::SharedZone,
    SubClass::Sharrow,
    SubClass::PaintedBikeLane,
    SubClass::BufferedKerbSide,
    SubClass::BufferedRoadSide,
    SubClass::BufferedBoth,
    SubClass::ProtectedBikeLane,
    SubClass::SharedOffRoadPath,
    SubClass::DedicatedOffRoadBikePath,
    SubClass::OffPath,
];

impl MainClass {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self, TaxonomyError> {
        ALL_MAIN_CLASSES
            .get(id)
            .copied()
            .ok_or(TaxonomyError::IdOutOfRange { id, max: MAIN_CLASS_COUNT - 1 })
    }

    pub fn name(self) -> &'static str {
        match self {
            MainClass::NoInfrastructure => "no_infrastructure",
            MainClass::PaintedBikeLane => "painted_bike_lane",
            MainClass::BufferedBikeLane => "buffered_bike_lane",
            MainClass::ProtectedBikeLane => "protected_bike_lane",
            MainClass::OffRoad => "off_road",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, TaxonomyError> {
        ALL_MAIN_CLASSES
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| TaxonomyError::UnknownMainClass(name.to_string()))
    }

    /// The sub-classes belonging to this main class, in canonical id order.
    pub fn subclasses(self) -> &'static [SubClass] {
        match self {
            MainClass::NoInfrastructure => &[
                SubClass::MixedTraffic,
                SubClass::Shoulder,
                SubClass::BusLane,
                SubClass::SharedZone,
                SubClass::Sharrow,
            ],
            MainClass::PaintedBikeLane => &[SubClass::PaintedBikeLane],
            MainClass::BufferedBikeLane => {
                &[SubClass::BufferedKerbSide, SubClass::BufferedRoadSide, SubClass::BufferedBoth]
            }
            MainClass::ProtectedBikeLane => &[SubClass::ProtectedBikeLane],
            MainClass::OffRoad => &[
                SubClass::SharedOffRoadPath,
                SubClass::DedicatedOffRoadBikePath,
                SubClass::OffPath,
            ],
        }
    }
}

impl SubClass {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self, TaxonomyError> {
        ALL_SUB_CLASSES
            .get(id)
            .copied()
            .ok_or(TaxonomyError::IdOutOfRange { id, max: SUB_CLASS_COUNT - 1 })
    }

    pub fn name(self) -> &'static str {
        match self {
            SubClass::MixedTraffic => "mixed_traffic",
            SubClass::Shoulder => "shoulder",
            SubClass::BusLane => "bus_lane",
            SubClass::SharedZone => "shared_zone",
            SubClass::Sharrow => "sharrow",
            SubClass::PaintedBikeLane => "painted_bike_lane",
            SubClass::BufferedKerbSide => "buffered_kerb_side",
            SubClass::BufferedRoadSide => "buffered_road_side",
            SubClass::BufferedBoth => "buffered_both",
            SubClass::ProtectedBikeLane => "protected_bike_lane",
            SubClass::SharedOffRoadPath => "shared_off_road_path",
            SubClass::DedicatedOffRoadBikePath => "dedicated_off_road_bike_path",
            SubClass::OffPath => "off_path",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, TaxonomyError> {
        ALL_SUB_CLASSES
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| TaxonomyError::UnknownSubClass(name.to_string()))
    }

    /// The unique parent main class.
    pub fn main(self) -> MainClass {
        match self {
            SubClass::MixedTraffic
            | SubClass::Shoulder
            | SubClass::BusLane
            | SubClass::SharedZone
            | SubClass::Sharrow => MainClass::NoInfrastructure,
            SubClass::PaintedBikeLane => MainClass::PaintedBikeLane,
            SubClass::BufferedKerbSide | SubClass::BufferedRoadSide | SubClass::BufferedBoth => {
                MainClass::BufferedBikeLane
            }
            SubClass::ProtectedBikeLane => MainClass::ProtectedBikeLane,
            SubClass::SharedOffRoadPath
            | SubClass::DedicatedOffRoadBikePath
            | SubClass::OffPath => MainClass::OffRoad,
        }
    }
}

/// Confidence of a class assignment, constrained to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ClassConfidence(f64);

impl ClassConfidence {
    pub const ZERO: ClassConfidence = ClassConfidence(0.0);
    pub const ONE: ClassConfidence = ClassConfidence(1.0);

    pub fn new(value: f64) -> Result<Self, TaxonomyError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(ClassConfidence(value))
        } else {
            Err(TaxonomyError::ConfidenceOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ClassConfidence {
    type Error = TaxonomyError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        ClassConfidence::new(value)
    }
}

impl From<ClassConfidence> for f64 {
    fn from(c: ClassConfidence) -> f64 {
        c.0
    }
}

/// JSON document describing the full class scheme, emitted by `taxonomy dump`.
pub fn dump_document() -> serde_json::Value {
    let mains: Vec<_> = ALL_MAIN_CLASSES
        .iter()
        .map(|m| {
            let subs: Vec<_> = m
                .subclasses()
                .iter()
                .map(|s| serde_json::json!({ "id": s.id(), "name": s.name() }))
                .collect();
            serde_json::json!({ "id": m.id(), "name": m.name(), "sub_classes": subs })
        })
        .collect();
    serde_json::json!({
        "main_class_count": MAIN_CLASS_COUNT,
        "sub_class_count": SUB_CLASS_COUNT,
        "main_classes": mains,
    })
}
