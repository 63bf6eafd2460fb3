use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndicatorError, InputField};

pub type Vocabulary = BTreeMap<InputField, Vec<String>>;
pub type Discriminators = BTreeMap<InputField, BTreeMap<String, Vec<String>>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorSpec {
    pub name: String,
    pub goal: String,
    pub allowed_values: Vec<String>,
    pub base_query_terms: Vec<String>,
    pub relevant_input_fields: Vec<InputField>,
    #[serde(default)]
    pub hint_terms: Vec<String>,
    #[serde(default)]
    pub instructions: Vec<String>,
}

impl IndicatorSpec {
    pub fn allows(&self, value: &str) -> bool {
        self.allowed_values.iter().any(|v| v == value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTrigger {
    pub indicator: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConflict {
    pub indicators: Vec<String>,
    pub values: Vec<String>,
}

/// Fires when `when.indicator` takes one of `when.values` and any of
/// `conflicts_with.indicators` takes one of `conflicts_with.values`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceRule {
    pub id: String,
    pub when: RuleTrigger,
    pub conflicts_with: RuleConflict,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatorCatalog {
    #[serde(default)]
    pub note: String,
    pub vocabulary: Vocabulary,
    pub discriminators: Discriminators,
    pub indicators: Vec<IndicatorSpec>,
    #[serde(default)]
    pub coherence_rules: Vec<CoherenceRule>,
}

impl Default for IndicatorCatalog {
    fn default() -> Self {
        Self::from_json_str(include_str!("../../data/indicators.json")).expect("bundled catalog is valid")
    }
}

impl IndicatorCatalog {
    pub fn from_json_str(s: &str) -> Result<Self, IndicatorError> {
        let cat: Self = serde_json::from_str(s).map_err(|e| IndicatorError::InvalidCatalog(e.to_string()))?;
        cat.validate()?;
        Ok(cat)
    }

    pub fn from_path(path: &Path) -> Result<Self, IndicatorError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| IndicatorError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn spec(&self, name: &str) -> Result<&IndicatorSpec, IndicatorError> {
        self.indicators
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| IndicatorError::UnknownIndicator(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.indicators.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn discriminator_terms(&self, field: InputField, value: &str) -> &[String] {
        self.discriminators
            .get(&field)
            .and_then(|m| m.get(value))
            .map_or(&[], Vec::as_slice)
    }

    fn validate(&self) -> Result<(), IndicatorError> {
        let bad = |m: String| Err(IndicatorError::InvalidCatalog(m));
        for field in InputField::ALL {
            match self.vocabulary.get(&field) {
                Some(v) if !v.is_empty() => {}
                _ => return bad(format!("vocabulary for {field} is missing or empty")),
            }
        }
        for (field, map) in &self.discriminators {
            let vocab = &self.vocabulary[field];
            if let Some(v) = map.keys().find(|v| !vocab.contains(v)) {
                return bad(format!("discriminator value {v:?} is not in the {field} vocabulary"));
            }
        }
        let mut names = BTreeSet::new();
        for spec in &self.indicators {
            if !names.insert(spec.name.as_str()) {
                return bad(format!("indicator {} defined twice", spec.name));
            }
            if spec.allowed_values.is_empty() {
                return bad(format!("indicator {} has no allowed values", spec.name));
            }
        }
        for rule in &self.coherence_rules {
            let trigger = self.spec(&rule.when.indicator).map_err(|_| {
                IndicatorError::InvalidCatalog(format!("rule {} names unknown indicator {}", rule.id, rule.when.indicator))
            })?;
            if let Some(v) = rule.when.values.iter().find(|v| !trigger.allows(v)) {
                return bad(format!("rule {} uses value {v:?} not allowed for {}", rule.id, trigger.name));
            }
            for name in &rule.conflicts_with.indicators {
                if self.spec(name).is_err() {
                    return bad(format!("rule {} names unknown indicator {name}", rule.id));
                }
            }
        }
        Ok(())
    }
}
