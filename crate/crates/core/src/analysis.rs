//! The three measurement streams computed from a slice presence index:
//! vertebrae presence, organ presence and extent, and edge-slice content.
//!
//! A class with fewer than [`AnalysisOptions::min_voxels`] voxels is treated
//! exactly like an absent class by every stream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::labels::Region;
use crate::taxonomy::Taxonomy;
use crate::volume::{SlicePresenceIndex, VolumeError};

pub const DEFAULT_MIN_VOXELS: u64 = 10;

/// Which structures define a region's cranio-caudal extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtentSource {
    #[default]
    Organs,
    OrgansAndVertebrae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub min_voxels: u64,
    pub extent_source: ExtentSource,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            min_voxels: DEFAULT_MIN_VOXELS,
            extent_source: ExtentSource::Organs,
        }
    }
}

impl AnalysisOptions {
    fn present(&self, index: &SlicePresenceIndex, id: u32) -> bool {
        index.get(id).is_some_and(|p| p.voxel_count >= self.min_voxels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMeasurement {
    pub vertebra_fraction: f64,
    pub present_vertebrae: Vec<String>,
    pub organ_fraction: f64,
    pub organ_count: usize,
    pub present_organs: Vec<String>,
    /// `None` when no constituent structure is present.
    pub extent_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    /// Classes present on the most superior non-empty slice.
    pub top_classes: BTreeSet<u32>,
    /// Classes present on the most inferior non-empty slice.
    pub bottom_classes: BTreeSet<u32>,
    pub top_regions: BTreeSet<Region>,
    pub bottom_regions: BTreeSet<Region>,
    /// True when a present structure of the region touches the first or last
    /// slice of the volume.
    pub truncation_flags: BTreeMap<Region, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeasurements {
    pub regions: BTreeMap<Region, RegionMeasurement>,
    pub edge: EdgeReport,
}

fn present_names(
    index: &SlicePresenceIndex,
    taxonomy: &Taxonomy,
    names: &[String],
    options: &AnalysisOptions,
) -> Vec<String> {
    names
        .iter()
        .filter(|n| {
            taxonomy
                .class_id(n)
                .is_some_and(|id| options.present(index, id))
        })
        .cloned()
        .collect()
}

fn fraction(present: usize, expected: usize) -> f64 {
    if expected == 0 {
        0.0
    } else {
        present as f64 / expected as f64
    }
}

/// Fraction of each region's expected vertebrae that are present.
pub fn vertebrae_presence(
    index: &SlicePresenceIndex,
    taxonomy: &Taxonomy,
    options: &AnalysisOptions,
) -> BTreeMap<Region, f64> {
    Region::ALL
        .into_iter()
        .map(|r| {
            let expected = &taxonomy.rule(r).expected_vertebrae;
            let present = present_names(index, taxonomy, expected, options).len();
            (r, fraction(present, expected.len()))
        })
        .collect()
}

/// `(fraction, count)` of each region's expected organs that are present.
pub fn organ_presence(
    index: &SlicePresenceIndex,
    taxonomy: &Taxonomy,
    options: &AnalysisOptions,
) -> BTreeMap<Region, (f64, usize)> {
    Region::ALL
        .into_iter()
        .map(|r| {
            let expected = &taxonomy.rule(r).expected_organs;
            let present = present_names(index, taxonomy, expected, options).len();
            (r, (fraction(present, expected.len()), present))
        })
        .collect()
}

/// Inclusive slice span of the region's present constituents, in cm.
pub fn region_extent(
    index: &SlicePresenceIndex,
    taxonomy: &Taxonomy,
    options: &AnalysisOptions,
) -> BTreeMap<Region, Option<f64>> {
    Region::ALL
        .into_iter()
        .map(|r| {
            let mut names: Vec<&String> = taxonomy.organ_group(r).iter().collect();
            if options.extent_source == ExtentSource::OrgansAndVertebrae {
                names.extend(taxonomy.vertebra_group(r));
            }
            let span = names
                .into_iter()
                .filter_map(|n| taxonomy.class_id(n))
                .filter(|&id| options.present(index, id))
                .filter_map(|id| index.get(id))
                .fold(None, |acc: Option<(usize, usize)>, p| match acc {
                    None => Some((p.min_slice, p.max_slice)),
                    Some((lo, hi)) => Some((lo.min(p.min_slice), hi.max(p.max_slice))),
                });
            let extent = span.map(|(lo, hi)| (hi - lo + 1) as f64 * index.si_spacing_cm);
            (r, extent)
        })
        .collect()
}

/// Structures on the first and last non-empty slices, and per-region
/// truncation flags.
pub fn edge_content(
    index: &SlicePresenceIndex,
    taxonomy: &Taxonomy,
    options: &AnalysisOptions,
) -> Result<EdgeReport, VolumeError> {
    let index = index
        .retain_min_voxels(options.min_voxels)
        .ok_or(VolumeError::EmptyVolume)?;
    let top_classes: BTreeSet<u32> = index
        .per_class
        .iter()
        .filter(|(_, p)| p.max_slice == index.last_nonempty_slice)
        .map(|(&id, _)| id)
        .collect();
    let bottom_classes: BTreeSet<u32> = index
        .per_class
        .iter()
        .filter(|(_, p)| p.min_slice == index.first_nonempty_slice)
        .map(|(&id, _)| id)
        .collect();
    let regions_of = |ids: &BTreeSet<u32>| -> BTreeSet<Region> {
        ids.iter()
            .flat_map(|&id| taxonomy.regions_of_class(id))
            .collect()
    };
    let truncation_flags = Region::ALL
        .into_iter()
        .map(|r| {
            let touches = taxonomy
                .ids_of(taxonomy.organ_group(r))
                .chain(taxonomy.ids_of(taxonomy.vertebra_group(r)))
                .filter_map(|id| index.get(id))
                .any(|p| index.is_volume_boundary(p.min_slice) || index.is_volume_boundary(p.max_slice));
            (r, touches)
        })
        .collect();
    Ok(EdgeReport {
        top_regions: regions_of(&top_classes),
        bottom_regions: regions_of(&bottom_classes),
        top_classes,
        bottom_classes,
        truncation_flags,
    })
}

/// Runs all streams. Fails with `EmptyVolume` when no class survives the
/// voxel-count filter.
pub fn measure(
    index: &SlicePresenceIndex,
    taxonomy: &Taxonomy,
    options: &AnalysisOptions,
) -> Result<StreamMeasurements, VolumeError> {
    let edge = edge_content(index, taxonomy, options)?;
    let vertebrae = vertebrae_presence(index, taxonomy, options);
    let organs = organ_presence(index, taxonomy, options);
    let extents = region_extent(index, taxonomy, options);
    let regions = Region::ALL
        .into_iter()
        .map(|r| {
            let rule = taxonomy.rule(r);
            let (organ_fraction, organ_count) = organs[&r];
            let m = RegionMeasurement {
                vertebra_fraction: vertebrae[&r],
                present_vertebrae: present_names(index, taxonomy, &rule.expected_vertebrae, options),
                organ_fraction,
                organ_count,
                present_organs: present_names(index, taxonomy, &rule.expected_organs, options),
                extent_cm: extents[&r],
            };
            (r, m)
        })
        .collect();
    Ok(StreamMeasurements { regions, edge })
}
