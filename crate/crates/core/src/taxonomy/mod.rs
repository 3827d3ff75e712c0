//! Anatomical knowledge per modality: class dictionaries, organ and vertebra
//! groups per region, and the quantitative rule each region must satisfy.
//!
//! The builtin tables live in `data/` as TOML in the same schema accepted by
//! [`Taxonomy::load_override`], so every threshold can be changed without
//! touching code. See the README for the file format.

mod file;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::Region;

pub use file::TaxonomyFile;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("region {region}: unknown class name `{name}`")]
    UnknownClassName { region: String, name: String },
    #[error("region {region}: {field} = {value} is outside (0, 1]")]
    InvalidThreshold {
        region: Region,
        field: &'static str,
        value: f64,
    },
    #[error("no rule defined for region {0}")]
    MissingRegionRule(Region),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("invalid rule for region {region}: {reason}")]
    InvalidRule { region: Region, reason: String },
    #[error("override is for modality {found}, expected {expected}")]
    ModalityMismatch { expected: Modality, found: Modality },
    #[error("invalid class dictionary line {line}: {reason}")]
    BadClassDictionary { line: usize, reason: String },
    #[error("cannot parse taxonomy file: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ct,
    Mr,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Ct => "ct",
            Modality::Mr => "mr",
        })
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ct" => Ok(Modality::Ct),
            "mr" | "mri" => Ok(Modality::Mr),
            other => Err(format!("unknown modality `{other}` (expected ct or mr)")),
        }
    }
}

/// One of the three per-region tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Vertebrae,
    Organs,
    Extent,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Vertebrae, Condition::Organs, Condition::Extent];
}

/// How the organ condition is won.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrganThreshold {
    /// Fraction of expected organs present must reach this value.
    Fraction(f64),
    /// At least this many expected organs must be present.
    MinCount(u32),
}

/// Quantitative rule for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRule {
    pub expected_vertebrae: Vec<String>,
    /// Vertebra count as printed in the source table; informational.
    pub stated_vertebra_count: usize,
    pub expected_organs: Vec<String>,
    /// Organ count as printed in the source table; informational.
    pub stated_organ_count: usize,
    /// Nominal cranio-caudal extent `(min, max)` in cm.
    pub extent_cm: (f64, f64),
    /// Conditions evaluated for this region, in canonical order.
    pub conditions: Vec<Condition>,
    pub organ_threshold: OrganThreshold,
    pub vertebra_threshold: f64,
    /// Factors applied to the nominal extent: the window is
    /// `[low * min, high * max]`.
    pub extent_window: (f64, f64),
}

impl RegionRule {
    pub fn applies(&self, condition: Condition) -> bool {
        self.conditions.contains(&condition)
    }

    /// Inclusive window of accepted extents in cm.
    pub fn extent_bounds_cm(&self) -> (f64, f64) {
        (
            self.extent_window.0 * self.extent_cm.0,
            self.extent_window.1 * self.extent_cm.1,
        )
    }

    fn validate(&self, region: Region) -> Result<(), TaxonomyError> {
        let unit = |field: &'static str, value: f64| {
            if value > 0.0 && value <= 1.0 {
                Ok(())
            } else {
                Err(TaxonomyError::InvalidThreshold { region, field, value })
            }
        };
        unit("vertebra_threshold", self.vertebra_threshold)?;
        match self.organ_threshold {
            OrganThreshold::Fraction(f) => unit("organ_fraction", f)?,
            OrganThreshold::MinCount(0) => {
                return Err(TaxonomyError::InvalidRule {
                    region,
                    reason: "organ_min_count must be at least 1".into(),
                })
            }
            OrganThreshold::MinCount(_) => {}
        }
        unit("extent_window[0]", self.extent_window.0)?;
        let invalid = |reason: String| TaxonomyError::InvalidRule { region, reason };
        if !(self.extent_window.1 >= 1.0 && self.extent_window.1.is_finite()) {
            return Err(invalid(format!(
                "extent_window[1] = {} must be >= 1",
                self.extent_window.1
            )));
        }
        let (lo, hi) = self.extent_cm;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(invalid(format!("extent_cm = ({lo}, {hi}) must satisfy 0 < min < max")));
        }
        if self.conditions.is_empty() {
            return Err(invalid("no conditions".into()));
        }
        if self.applies(Condition::Vertebrae) && self.expected_vertebrae.is_empty() {
            return Err(invalid("vertebrae condition with no expected vertebrae".into()));
        }
        if (self.applies(Condition::Organs) || self.applies(Condition::Extent))
            && self.expected_organs.is_empty()
        {
            return Err(invalid("organ or extent condition with no expected organs".into()));
        }
        Ok(())
    }
}

/// Start and end landmark of each region, head to feet.
pub fn region_boundaries(region: Region) -> (&'static str, &'static str) {
    match region {
        Region::Head => ("Above the skull", "Below the chin / C3-C4"),
        Region::Neck => ("Skull", "Manubrium sterni / T1-T2"),
        Region::Chest => ("First rib / C6-C7", "Below the diaphragm / L1"),
        Region::Abdomen => ("Above diaphragm / T8-T9", "Iliac crests upper edge / L3-L4"),
        Region::Pelvis => ("Iliac crests upper edge / L3-L4", "Below symphysis pubis"),
    }
}

/// Fixed cranio-caudal order of regions.
pub fn region_order() -> [Region; 5] {
    Region::ALL
}

/// Sorts regions into cranio-caudal order, removing duplicates.
pub fn sort_regions(regions: &mut Vec<Region>) {
    regions.sort();
    regions.dedup();
}

#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    modality: Modality,
    class_names: BTreeMap<u32, String>,
    class_ids: BTreeMap<String, u32>,
    organ_groups: BTreeMap<Region, Vec<String>>,
    vertebra_groups: BTreeMap<Region, Vec<String>>,
    rules: BTreeMap<Region, RegionRule>,
}

const CT_CLASSES: &str = include_str!("../../data/classes_ct.txt");
const MR_CLASSES: &str = include_str!("../../data/classes_mr.txt");
const CT_RULES: &str = include_str!("../../data/taxonomy_ct.toml");
const MR_RULES: &str = include_str!("../../data/taxonomy_mr.toml");

/// Parses `<id> <name>` lines; `#` starts a comment.
pub fn parse_class_dictionary(text: &str) -> Result<BTreeMap<u32, String>, TaxonomyError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| TaxonomyError::BadClassDictionary {
            line: n + 1,
            reason: reason.to_string(),
        };
        let mut parts = line.split_whitespace();
        let id: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("expected a numeric id"))?;
        let name = parts.next().ok_or_else(|| bad("missing class name"))?;
        if id == 0 {
            return Err(bad("id 0 is reserved for background"));
        }
        if parts.next().is_some() {
            return Err(bad("trailing fields"));
        }
        if out.insert(id, name.to_string()).is_some() {
            return Err(bad("duplicate id"));
        }
    }
    Ok(out)
}

impl Taxonomy {
    /// The builtin taxonomy for a modality.
    pub fn builtin(modality: Modality) -> Taxonomy {
        let (classes, rules) = match modality {
            Modality::Ct => (CT_CLASSES, CT_RULES),
            Modality::Mr => (MR_CLASSES, MR_RULES),
        };
        let classes = parse_class_dictionary(classes).expect("builtin class dictionary");
        let file = TaxonomyFile::from_toml_str(rules).expect("builtin rule file");
        file.apply(Taxonomy::bare(modality, classes))
            .expect("builtin taxonomy is valid")
    }

    /// Builtin taxonomy with the overrides in `path` applied.
    pub fn load_override(modality: Modality, path: &Path) -> Result<Taxonomy, TaxonomyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_override_str(modality, &text)
    }

    pub fn from_override_str(modality: Modality, text: &str) -> Result<Taxonomy, TaxonomyError> {
        let file = TaxonomyFile::from_toml_str(text)?;
        let base = if file.inherit.unwrap_or(true) {
            Taxonomy::builtin(modality)
        } else {
            let classes = Taxonomy::builtin(modality).class_names;
            Taxonomy::bare(modality, classes)
        };
        file.apply(base)
    }

    fn bare(modality: Modality, class_names: BTreeMap<u32, String>) -> Taxonomy {
        let class_ids = class_names.iter().map(|(&id, n)| (n.clone(), id)).collect();
        Taxonomy {
            modality,
            class_names,
            class_ids,
            organ_groups: BTreeMap::new(),
            vertebra_groups: BTreeMap::new(),
            rules: BTreeMap::new(),
        }
    }

    pub(crate) fn set_class(&mut self, name: &str, id: u32) {
        if let Some(old_id) = self.class_ids.remove(name) {
            self.class_names.remove(&old_id);
        }
        if let Some(old_name) = self.class_names.insert(id, name.to_string()) {
            self.class_ids.remove(&old_name);
        }
        self.class_ids.insert(name.to_string(), id);
    }

    pub(crate) fn set_rule(&mut self, region: Region, rule: RegionRule) {
        self.organ_groups.insert(region, rule.expected_organs.clone());
        self.vertebra_groups.insert(region, rule.expected_vertebrae.clone());
        self.rules.insert(region, rule);
    }

    /// Checks the invariants: every region has a valid rule and every group
    /// member resolves to a class id.
    pub fn validate(&self) -> Result<(), TaxonomyError> {
        for region in Region::ALL {
            let rule = self
                .rules
                .get(&region)
                .ok_or(TaxonomyError::MissingRegionRule(region))?;
            rule.validate(region)?;
            for name in rule.expected_organs.iter().chain(&rule.expected_vertebrae) {
                if !self.class_ids.contains_key(name) {
                    return Err(TaxonomyError::UnknownClassName {
                        region: region.to_string(),
                        name: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn class_names(&self) -> &BTreeMap<u32, String> {
        &self.class_names
    }

    pub fn class_name(&self, id: u32) -> Option<&str> {
        self.class_names.get(&id).map(String::as_str)
    }

    pub fn class_id(&self, name: &str) -> Option<u32> {
        self.class_ids.get(name).copied()
    }

    pub fn organ_group(&self, region: Region) -> &[String] {
        self.organ_groups.get(&region).map_or(&[], Vec::as_slice)
    }

    pub fn vertebra_group(&self, region: Region) -> &[String] {
        self.vertebra_groups.get(&region).map_or(&[], Vec::as_slice)
    }

    pub fn rule(&self, region: Region) -> &RegionRule {
        &self.rules[&region]
    }

    pub fn rules(&self) -> impl Iterator<Item = (Region, &RegionRule)> {
        self.rules.iter().map(|(r, rule)| (*r, rule))
    }

    /// Class ids of a list of names. Names are validated on construction.
    pub fn ids_of<'a>(&'a self, names: &'a [String]) -> impl Iterator<Item = u32> + 'a {
        names.iter().filter_map(|n| self.class_id(n))
    }

    /// Regions whose organ or vertebra group contains the class.
    pub fn regions_of_class(&self, id: u32) -> Vec<Region> {
        let Some(name) = self.class_name(id) else {
            return Vec::new();
        };
        Region::ALL
            .into_iter()
            .filter(|r| {
                self.organ_group(*r).iter().any(|n| n == name)
                    || self.vertebra_group(*r).iter().any(|n| n == name)
            })
            .collect()
    }

    /// The taxonomy in override-file form; loading it back reproduces it.
    pub fn dump(&self) -> String {
        TaxonomyFile::from_taxonomy(self).to_toml_string()
    }
}
