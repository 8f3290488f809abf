//! Ordered tag-to-class rule cascade used to classify road-network ways.
//!
//! A rule is a conjunction of tag conditions; the first rule whose conditions
//! all hold assigns the class. Ways matching no rule stay unclassified and
//! never enter the index. The built-in table can be replaced by a JSON rules
//! file (an ordered list of `{"match": [...], "class": "..."}` objects).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::taxonomy::SubClass;

/// One tag test: the key must be present; if `values` is given the tag value
/// must additionally equal one of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCondition {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
}

impl TagCondition {
    pub fn equals(key: &str, value: &str) -> Self {
        TagCondition { key: key.to_string(), values: Some(vec![value.to_string()]) }
    }

    pub fn any_of(key: &str, values: &[&str]) -> Self {
        TagCondition {
            key: key.to_string(),
            values: Some(values.iter().map(|v| v.to_string()).collect()),
        }
    }

    pub fn present(key: &str) -> Self {
        TagCondition { key: key.to_string(), values: None }
    }

    pub fn matches(&self, tags: &BTreeMap<String, String>) -> bool {
        match (tags.get(&self.key), &self.values) {
            (Some(_), None) => true,
            (Some(v), Some(allowed)) => allowed.iter().any(|a| a == v),
            (None, _) => false,
        }
    }
}

/// A conjunction of conditions mapping to one sub-class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRule {
    #[serde(rename = "match")]
    pub conditions: Vec<TagCondition>,
    pub class: SubClass,
}

impl ClassificationRule {
    pub fn matches(&self, tags: &BTreeMap<String, String>) -> bool {
        self.conditions.iter().all(|c| c.matches(tags))
    }
}

/// An ordered rule table; first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    pub rules: Vec<ClassificationRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        fn rule(conditions: Vec<TagCondition>, class: SubClass) -> ClassificationRule {
            ClassificationRule { conditions, class }
        }
        use TagCondition as C;
        RuleSet {
            rules: vec![
                rule(vec![C::equals("cycleway", "track")], SubClass::ProtectedBikeLane),
                rule(
                    vec![C::equals("highway", "cycleway"), C::equals("separated", "yes")],
                    SubClass::ProtectedBikeLane,
                ),
                rule(vec![C::equals("highway", "cycleway")], SubClass::DedicatedOffRoadBikePath),
                rule(
                    vec![C::any_of("highway", &["path", "footway"]), C::equals("bicycle", "yes")],
                    SubClass::SharedOffRoadPath,
                ),
                rule(
                    vec![C::equals("cycleway", "lane"), C::equals("buffer", "both")],
                    SubClass::BufferedBoth,
                ),
                rule(vec![C::equals("buffer", "kerb-side")], SubClass::BufferedKerbSide),
                rule(vec![C::equals("buffer", "road-side")], SubClass::BufferedRoadSide),
                rule(vec![C::equals("cycleway", "lane")], SubClass::PaintedBikeLane),
                rule(vec![C::equals("cycleway", "shared_lane")], SubClass::Sharrow),
                rule(vec![C::equals("highway", "living_street")], SubClass::SharedZone),
                rule(vec![C::present("lanes:bus")], SubClass::BusLane),
                rule(vec![C::equals("shoulder", "yes")], SubClass::Shoulder),
                rule(vec![C::present("highway")], SubClass::MixedTraffic),
            ],
        }
    }
}

impl RuleSet {
    /// Class of the first matching rule, or `None` when the way is
    /// unclassifiable.
    pub fn classify(&self, tags: &BTreeMap<String, String>) -> Option<SubClass> {
        self.rules.iter().find(|r| r.matches(tags)).map(|r| r.class)
    }

    /// Load an ordered rule list from a JSON file.
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        let set: RuleSet = serde_json::from_str(&text).map_err(|e| IngestError::json(path, &e))?;
        set.validate()?;
        Ok(set)
    }

    /// Reject rule tables containing an unconditional rule, which would
    /// shadow everything after it.
    pub fn validate(&self) -> Result<(), IngestError> {
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.conditions.is_empty() {
                return Err(IngestError::EmptyRule(i));
            }
        }
        Ok(())
    }
}

/// Shared instance of the built-in rule table.
pub fn default_rules() -> &'static RuleSet {
    static RULES: OnceLock<RuleSet> = OnceLock::new();
    RULES.get_or_init(RuleSet::default)
}

/// Classify a tag map with the built-in rule table.
pub fn classify_way(tags: &BTreeMap<String, String>) -> Option<SubClass> {
    default_rules().classify(tags)
}
