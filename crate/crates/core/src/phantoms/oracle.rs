//! Expected label of a phantom, recomputed from the placed structures.
//!
//! Works on slice ranges from the spec, not on voxels, and uses integer
//! cross-multiplication for every fraction.

use std::collections::BTreeMap;

use super::{slice_range, PhantomSpec};
use crate::labels::{Region, RegionSet};
use crate::taxonomy::{Condition, OrganThreshold, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub min_voxels: u64,
    pub tau: f64,
    /// Keep every region reaching tau instead of only the top-scoring ones.
    pub threshold_all: bool,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            min_voxels: 10,
            tau: 2.0 / 3.0,
            threshold_all: false,
        }
    }
}

/// Present structures and their slice ranges.
fn present(spec: &PhantomSpec, min_voxels: u64) -> BTreeMap<&str, (usize, usize)> {
    let sp = spec.si_spacing_cm();
    let mut out: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for s in &spec.structures {
        let Some((lo, hi)) = slice_range(s.si_start_cm, s.si_end_cm, sp) else {
            continue;
        };
        if (hi - lo + 1) as u64 * s.voxels_per_slice as u64 >= min_voxels {
            out.insert(s.class_name.as_str(), (lo, hi));
        }
    }
    out
}

// `a/b >= t` with a margin for thresholds like 0.6 that are not exact in
// binary.
fn at_least(a: usize, b: usize, t: f64) -> bool {
    b > 0 && (a as f64) >= t * b as f64 - 1e-9
}

/// `(wins, applicable)` per region.
pub fn region_scores(spec: &PhantomSpec, taxonomy: &Taxonomy, settings: &OracleSettings) -> Vec<(Region, u32, u32)> {
    let have = present(spec, settings.min_voxels);
    let sp = spec.si_spacing_cm();
    let mut out = Vec::new();
    for region in Region::ALL {
        let rule = taxonomy.rule(region);
        let mut wins = 0;
        let mut applicable = 0;
        let organs: Vec<(usize, usize)> = rule
            .expected_organs
            .iter()
            .filter_map(|n| have.get(n.as_str()).copied())
            .collect();
        if rule.conditions.contains(&Condition::Vertebrae) {
            applicable += 1;
            let n = rule.expected_vertebrae.iter().filter(|v| have.contains_key(v.as_str())).count();
            if at_least(n, rule.expected_vertebrae.len(), rule.vertebra_threshold) {
                wins += 1;
            }
        }
        if rule.conditions.contains(&Condition::Organs) {
            applicable += 1;
            let won = match rule.organ_threshold {
                OrganThreshold::Fraction(f) => at_least(organs.len(), rule.expected_organs.len(), f),
                OrganThreshold::MinCount(k) => organs.len() >= k as usize,
            };
            if won {
                wins += 1;
            }
        }
        if rule.conditions.contains(&Condition::Extent) && !organs.is_empty() {
            let lo = organs.iter().map(|r| r.0).min().unwrap_or(0);
            let hi = organs.iter().map(|r| r.1).max().unwrap_or(0);
            let extent = (hi - lo + 1) as f64 * sp;
            let min = rule.extent_window.0 * rule.extent_cm.0;
            let max = rule.extent_window.1 * rule.extent_cm.1;
            if extent >= min - 1e-9 && extent <= max + 1e-9 {
                wins += 1;
            }
        }
        if rule.conditions.contains(&Condition::Extent) {
            applicable += 1;
        }
        out.push((region, wins, applicable));
    }
    out
}

pub fn expected_label(spec: &PhantomSpec, taxonomy: &Taxonomy, settings: &OracleSettings) -> RegionSet {
    if present(spec, settings.min_voxels).is_empty() {
        return RegionSet::other();
    }
    let scores = region_scores(spec, taxonomy, settings);
    let reaches = |w: u32, a: u32| a > 0 && w as f64 >= settings.tau * a as f64 - 1e-9;
    let keep: Vec<Region> = if settings.threshold_all {
        scores.iter().filter(|s| reaches(s.1, s.2)).map(|s| s.0).collect()
    } else {
        // best fraction by cross-multiplication
        let mut best = (0u32, 1u32);
        for &(_, w, a) in &scores {
            if a > 0 && w * best.1 > best.0 * a {
                best = (w, a);
            }
        }
        if reaches(best.0, best.1) {
            scores
                .iter()
                .filter(|s| s.2 > 0 && s.1 * best.1 == best.0 * s.2)
                .map(|s| s.0)
                .collect()
        } else {
            Vec::new()
        }
    };
    RegionSet::from_regions_or_other(keep)
}
