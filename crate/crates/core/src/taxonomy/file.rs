use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Condition, Modality, OrganThreshold, RegionRule, Taxonomy, TaxonomyError};
use crate::labels::Region;

/// On-disk taxonomy override. Every field is optional; omitted fields keep
/// their builtin values.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modality: Option<Modality>,
    /// `false` starts from an empty rule set instead of the builtin rules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inherit: Option<bool>,
    /// Class name -> label id, added to or replacing dictionary entries.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub classes: BTreeMap<String, u32>,
    #[serde(default)]
    pub regions: BTreeMap<String, RegionPatch>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub organs: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertebrae: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stated_organ_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stated_vertebra_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<Condition>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertebra_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub organ_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub organ_min_count: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_cm: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent_window: Option<[f64; 2]>,
}

impl TaxonomyFile {
    pub fn from_toml_str(text: &str) -> Result<Self, TaxonomyError> {
        toml::from_str(text).map_err(|e| TaxonomyError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("taxonomy file serializes")
    }

    pub(crate) fn from_taxonomy(t: &Taxonomy) -> Self {
        let classes = t.class_names().iter().map(|(&id, n)| (n.clone(), id)).collect();
        let regions = t
            .rules()
            .map(|(region, rule)| {
                let (fraction, min_count) = match rule.organ_threshold {
                    OrganThreshold::Fraction(f) => (Some(f), None),
                    OrganThreshold::MinCount(n) => (None, Some(n)),
                };
                let patch = RegionPatch {
                    organs: Some(rule.expected_organs.clone()),
                    vertebrae: Some(rule.expected_vertebrae.clone()),
                    stated_organ_count: Some(rule.stated_organ_count),
                    stated_vertebra_count: Some(rule.stated_vertebra_count),
                    conditions: Some(rule.conditions.clone()),
                    vertebra_threshold: Some(rule.vertebra_threshold),
                    organ_fraction: fraction,
                    organ_min_count: min_count,
                    extent_cm: Some([rule.extent_cm.0, rule.extent_cm.1]),
                    extent_window: Some([rule.extent_window.0, rule.extent_window.1]),
                };
                (region.to_string(), patch)
            })
            .collect();
        TaxonomyFile {
            modality: Some(t.modality()),
            inherit: Some(false),
            classes,
            regions,
        }
    }

    /// Applies the file on top of `base` and validates the result.
    pub(crate) fn apply(self, mut base: Taxonomy) -> Result<Taxonomy, TaxonomyError> {
        if let Some(m) = self.modality {
            if m != base.modality() {
                return Err(TaxonomyError::ModalityMismatch {
                    expected: base.modality(),
                    found: m,
                });
            }
        }
        for (name, id) in &self.classes {
            if *id == 0 {
                return Err(TaxonomyError::Parse(format!("class `{name}` uses reserved id 0")));
            }
            base.set_class(name, *id);
        }
        for (key, patch) in self.regions {
            let region: Region = key
                .parse()
                .map_err(|_| TaxonomyError::UnknownRegion(key.clone()))?;
            let rule = patch.apply(region, base.rules.get(&region).cloned())?;
            base.set_rule(region, rule);
        }
        base.validate()?;
        Ok(base)
    }
}

impl RegionPatch {
    fn apply(self, region: Region, base: Option<RegionRule>) -> Result<RegionRule, TaxonomyError> {
        let invalid = |reason: &str| TaxonomyError::InvalidRule {
            region,
            reason: reason.to_string(),
        };
        if self.organ_fraction.is_some() && self.organ_min_count.is_some() {
            return Err(invalid("organ_fraction and organ_min_count are mutually exclusive"));
        }
        let organ_threshold = match (self.organ_fraction, self.organ_min_count) {
            (Some(f), _) => Some(OrganThreshold::Fraction(f)),
            (_, Some(n)) => Some(OrganThreshold::MinCount(n)),
            _ => None,
        };
        let mut rule = match base {
            Some(rule) => rule,
            None => {
                let missing = |field: &str| invalid(&format!("missing `{field}` for a new region"));
                RegionRule {
                    expected_organs: self.organs.clone().ok_or_else(|| missing("organs"))?,
                    expected_vertebrae: self.vertebrae.clone().ok_or_else(|| missing("vertebrae"))?,
                    stated_organ_count: 0,
                    stated_vertebra_count: 0,
                    extent_cm: self
                        .extent_cm
                        .map(|[a, b]| (a, b))
                        .ok_or_else(|| missing("extent_cm"))?,
                    conditions: self.conditions.clone().ok_or_else(|| missing("conditions"))?,
                    organ_threshold: organ_threshold.unwrap_or(OrganThreshold::Fraction(0.3)),
                    vertebra_threshold: self
                        .vertebra_threshold
                        .ok_or_else(|| missing("vertebra_threshold"))?,
                    extent_window: self
                        .extent_window
                        .map(|[a, b]| (a, b))
                        .ok_or_else(|| missing("extent_window"))?,
                }
            }
        };
        if let Some(organs) = self.organs {
            rule.stated_organ_count = organs.len();
            rule.expected_organs = organs;
        }
        if let Some(vertebrae) = self.vertebrae {
            rule.stated_vertebra_count = vertebrae.len();
            rule.expected_vertebrae = vertebrae;
        }
        if let Some(n) = self.stated_organ_count {
            rule.stated_organ_count = n;
        }
        if let Some(n) = self.stated_vertebra_count {
            rule.stated_vertebra_count = n;
        }
        if let Some(mut conditions) = self.conditions {
            conditions.sort();
            conditions.dedup();
            rule.conditions = conditions;
        }
        if let Some(t) = self.vertebra_threshold {
            rule.vertebra_threshold = t;
        }
        if let Some(t) = organ_threshold {
            rule.organ_threshold = t;
        }
        if let Some([a, b]) = self.extent_cm {
            rule.extent_cm = (a, b);
        }
        if let Some([a, b]) = self.extent_window {
            rule.extent_window = (a, b);
        }
        for list in [&rule.expected_organs, &rule.expected_vertebrae] {
            let mut seen = std::collections::BTreeSet::new();
            if let Some(dup) = list.iter().find(|n| !seen.insert(n.as_str())) {
                return Err(invalid(&format!("`{dup}` listed twice")));
            }
        }
        Ok(rule)
    }
}
