use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::render::CompositeImage;
use super::MllmError;
use crate::analysis::{self, AnalysisOptions};
use crate::labels::{Category, Region};
use crate::taxonomy::{region_boundaries, Modality, Taxonomy};
use crate::volume::SlicePresenceIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    #[default]
    Plain,
    SegmentationAware,
}

/// What the segmentation found, passed to the model verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnatomicalEvidence {
    pub present_structures: Vec<String>,
    pub region_extents_cm: BTreeMap<Region, f64>,
}

impl AnatomicalEvidence {
    /// Present class names (after the voxel-count filter) and the extent of
    /// every region with at least one constituent present.
    pub fn from_index(index: &SlicePresenceIndex, taxonomy: &Taxonomy, options: &AnalysisOptions) -> Self {
        let present_structures = index
            .per_class
            .iter()
            .filter(|(_, p)| p.voxel_count >= options.min_voxels)
            .map(|(&id, _)| taxonomy.class_name(id).map_or_else(|| format!("label_{id}"), str::to_string))
            .collect();
        let region_extents_cm = analysis::region_extent(index, taxonomy, options)
            .into_iter()
            .filter_map(|(r, e)| e.map(|e| (r, e)))
            .collect();
        AnatomicalEvidence {
            present_structures,
            region_extents_cm,
        }
    }

    /// Region with the largest extent; ties go to the more cranial region.
    pub fn largest_region(&self) -> Option<Region> {
        self.region_extents_cm
            .iter()
            .fold(None, |best: Option<(Region, f64)>, (&r, &e)| match best {
                Some((_, b)) if b >= e => best,
                _ => Some((r, e)),
            })
            .map(|(r, _)| r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub mode: PromptMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<AnatomicalEvidence>,
    #[serde(skip)]
    pub image: Option<CompositeImage>,
}

impl PromptBundle {
    pub fn with_image(mut self, image: CompositeImage) -> Self {
        self.image = Some(image);
        self
    }

    /// Plain-text dump of both prompt parts.
    pub fn to_text(&self) -> String {
        format!("[system]\n{}\n[user]\n{}\n", self.system_text, self.user_text)
    }
}

pub const DEFAULT_VISIBILITY_PERCENT: u32 = 60;
pub const ANSWER_MARKER: &str = "FINAL:";

fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Ct => "CT",
        Modality::Mr => "MR",
    }
}

fn system_text(taxonomy: &Taxonomy, visibility_percent: u32) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "You are a radiologist. You receive one composite image of a {} scan: axial, sagittal and coronal views placed left to right.",
        modality_name(taxonomy.modality())
    );
    let _ = writeln!(s, "Decide which body regions the scan covers.\n");
    let _ = writeln!(s, "Region boundaries (start / end):");
    for r in Region::ALL {
        let (start, end) = region_boundaries(r);
        let _ = writeln!(s, "- {}: starts at \"{start}\", ends at \"{end}\"", r.as_str());
    }
    let _ = writeln!(s, "\nReference structures per region:");
    for r in Region::ALL {
        let rule = taxonomy.rule(r);
        let (lo, hi) = rule.extent_cm;
        let _ = writeln!(
            s,
            "- {}: organs {}; vertebrae {}; typical cranio-caudal size {lo}-{hi} cm",
            r.as_str(),
            rule.expected_organs.join(", "),
            rule.expected_vertebrae.join(", "),
        );
    }
    let _ = writeln!(
        s,
        "\nInclusion rule: include a region only if at least {visibility_percent}% of it, as defined above, is visible in the three views."
    );
    let labels: Vec<&str> = Category::ALL.iter().map(|c| c.as_str()).collect();
    let _ = writeln!(s, "Allowed labels: {}. Use \"other\" alone when no region qualifies.", labels.join(", "));
    let _ = write!(
        s,
        "Output format: end your answer with a single line `{ANSWER_MARKER} <regions>` listing the regions joined by '+' from head to feet, for example `{ANSWER_MARKER} chest+abdomen`."
    );
    s
}

fn evidence_block(e: &AnatomicalEvidence) -> String {
    let mut s = String::from("\n\nSegmentation evidence for this scan:\n");
    let _ = writeln!(s, "Structures present: {}", e.present_structures.join(", "));
    let extents: Vec<String> = e
        .region_extents_cm
        .iter()
        .map(|(r, cm)| format!("{} {cm:.1} cm", r.as_str()))
        .collect();
    let _ = write!(s, "Region extents: {}", if extents.is_empty() { "none".into() } else { extents.join(", ") });
    s
}

/// Assembles prompt text. Segmentation-aware mode requires evidence; plain
/// mode ignores it.
pub fn build_prompt(
    taxonomy: &Taxonomy,
    mode: PromptMode,
    evidence: Option<&AnatomicalEvidence>,
    visibility_percent: u32,
) -> Result<PromptBundle, MllmError> {
    let mut system = system_text(taxonomy, visibility_percent);
    let evidence = match (mode, evidence) {
        (PromptMode::SegmentationAware, None) => return Err(MllmError::MissingEvidence),
        (PromptMode::SegmentationAware, Some(e)) => {
            system.push_str(&evidence_block(e));
            Some(e.clone())
        }
        (PromptMode::Plain, Some(_)) => {
            log::warn!("plain prompt mode ignores the supplied evidence");
            None
        }
        (PromptMode::Plain, None) => None,
    };
    Ok(PromptBundle {
        system_text: system,
        user_text: "Which body regions does this scan cover?".to_string(),
        mode,
        evidence,
        image: None,
    })
}
