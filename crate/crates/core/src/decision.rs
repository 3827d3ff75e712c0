//! Per-region scoring and the final label decision.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisOptions, EdgeReport, RegionMeasurement, StreamMeasurements};
use crate::labels::{Region, RegionSet};
use crate::taxonomy::{Condition, OrganThreshold, RegionRule, Taxonomy};
use crate::volume::{self, SlicePresenceIndex, Volume, VolumeError, VolumeKind};

/// Slack for floating-point threshold comparisons.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Won,
    Lost,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAssessment {
    pub region: Region,
    pub outcomes: BTreeMap<Condition, Outcome>,
    pub wins: u32,
    pub applicable: u32,
    pub score: f64,
}

/// How assessments are turned into a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep every region tied for the highest score, if that score reaches tau.
    #[default]
    MaxScore,
    /// Keep every region whose score reaches tau.
    ThresholdAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub tau: f64,
    pub selection: Selection,
}

pub const DEFAULT_TAU: f64 = 2.0 / 3.0;

impl Default for DecisionPolicy {
    fn default() -> Self {
        DecisionPolicy {
            tau: DEFAULT_TAU,
            selection: Selection::MaxScore,
        }
    }
}

/// Which pathway produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rules,
    Mllm,
    MllmSegmentation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFlags {
    /// No class survived the voxel-count filter.
    pub empty_volume: bool,
    /// The model answer could not be mapped to a label.
    pub parse_failure: bool,
    /// The model could not be reached.
    pub transport_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub label: RegionSet,
    pub method: Method,
    pub assessments: Vec<RegionAssessment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<StreamMeasurements>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<DecisionPolicy>,
    pub flags: ResultFlags,
    /// Raw model answer, for the MLLM pathways.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

impl ClassificationResult {
    pub(crate) fn other(method: Method) -> Self {
        ClassificationResult {
            label: RegionSet::other(),
            method,
            assessments: Vec::new(),
            measurements: None,
            edge: None,
            policy: None,
            flags: ResultFlags::default(),
            raw_response: None,
        }
    }
}

fn vertebrae_won(m: &RegionMeasurement, rule: &RegionRule) -> bool {
    m.vertebra_fraction + EPS >= rule.vertebra_threshold
}

fn organs_won(m: &RegionMeasurement, rule: &RegionRule) -> bool {
    match rule.organ_threshold {
        OrganThreshold::Fraction(f) => m.organ_fraction + EPS >= f,
        OrganThreshold::MinCount(n) => m.organ_count >= n as usize,
    }
}

fn extent_won(m: &RegionMeasurement, rule: &RegionRule) -> bool {
    let (lo, hi) = rule.extent_bounds_cm();
    m.extent_cm.is_some_and(|e| e + EPS >= lo && e <= hi + EPS)
}

/// Evaluates the applicable conditions of one region.
pub fn score_region(region: Region, m: &RegionMeasurement, rule: &RegionRule) -> RegionAssessment {
    let mut outcomes = BTreeMap::new();
    let (mut wins, mut applicable) = (0, 0);
    for c in Condition::ALL {
        let outcome = if !rule.applies(c) {
            Outcome::NotApplicable
        } else {
            applicable += 1;
            let won = match c {
                Condition::Vertebrae => vertebrae_won(m, rule),
                Condition::Organs => organs_won(m, rule),
                Condition::Extent => extent_won(m, rule),
            };
            if won {
                wins += 1;
                Outcome::Won
            } else {
                Outcome::Lost
            }
        };
        outcomes.insert(c, outcome);
    }
    let score = if applicable == 0 {
        0.0
    } else {
        wins as f64 / applicable as f64
    };
    RegionAssessment {
        region,
        outcomes,
        wins,
        applicable,
        score,
    }
}

/// Picks the label from per-region assessments. Empty selection means
/// `other`.
pub fn aggregate(assessments: &[RegionAssessment], policy: &DecisionPolicy) -> RegionSet {
    let qualifies = |a: &&RegionAssessment| a.applicable > 0 && a.score + EPS >= policy.tau;
    let chosen: Vec<Region> = match policy.selection {
        Selection::ThresholdAll => assessments.iter().filter(qualifies).map(|a| a.region).collect(),
        Selection::MaxScore => {
            // compare wins/applicable as exact fractions
            let best = assessments
                .iter()
                .filter(|a| a.applicable > 0)
                .max_by(|a, b| (a.wins * b.applicable).cmp(&(b.wins * a.applicable)));
            match best {
                Some(best) if qualifies(&best) => assessments
                    .iter()
                    .filter(|a| a.applicable > 0 && a.wins * best.applicable == best.wins * a.applicable)
                    .map(|a| a.region)
                    .collect(),
                _ => Vec::new(),
            }
        }
    };
    RegionSet::from_regions_or_other(chosen)
}

/// Scores every region and decides the label.
pub fn decide(
    measurements: StreamMeasurements,
    taxonomy: &Taxonomy,
    policy: &DecisionPolicy,
) -> ClassificationResult {
    let assessments: Vec<RegionAssessment> = measurements
        .regions
        .iter()
        .map(|(&r, m)| score_region(r, m, taxonomy.rule(r)))
        .collect();
    let label = aggregate(&assessments, policy);
    ClassificationResult {
        label,
        method: Method::Rules,
        assessments,
        edge: Some(measurements.edge.clone()),
        measurements: Some(measurements),
        policy: Some(*policy),
        flags: ResultFlags::default(),
        raw_response: None,
    }
}

/// Rule-based classifier bundling the taxonomy and every tunable.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub taxonomy: Taxonomy,
    pub policy: DecisionPolicy,
    pub options: AnalysisOptions,
    pub oblique_threshold: f64,
}

impl Classifier {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Classifier {
            taxonomy,
            policy: DecisionPolicy::default(),
            options: AnalysisOptions::default(),
            oblique_threshold: volume::DEFAULT_OBLIQUE_THRESHOLD,
        }
    }

    pub fn with_policy(mut self, policy: DecisionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_options(mut self, options: AnalysisOptions) -> Self {
        self.options = options;
        self
    }

    pub fn classify_index(&self, index: &SlicePresenceIndex) -> ClassificationResult {
        match analysis::measure(index, &self.taxonomy, &self.options) {
            Ok(m) => decide(m, &self.taxonomy, &self.policy),
            Err(_) => self.empty(),
        }
    }

    /// Classifies a label volume in any axis-aligned orientation.
    pub fn classify(&self, volume: &Volume) -> Result<ClassificationResult, VolumeError> {
        if volume.kind() != VolumeKind::Label {
            return Err(VolumeError::WrongKind { expected: VolumeKind::Label });
        }
        let canonical = volume::canonicalize_with_threshold(volume, self.oblique_threshold)?;
        match volume::build_presence_index(&canonical) {
            Ok(index) => Ok(self.classify_index(&index)),
            Err(VolumeError::EmptyVolume) => Ok(self.empty()),
            Err(e) => Err(e),
        }
    }

    pub fn classify_path(&self, path: &Path) -> Result<ClassificationResult, VolumeError> {
        let v = volume::load_volume(path, VolumeKind::Label)?;
        self.classify(&v)
    }

    fn empty(&self) -> ClassificationResult {
        let mut r = ClassificationResult::other(Method::Rules);
        r.policy = Some(self.policy);
        r.flags.empty_volume = true;
        r
    }
}

/// Classifies with default analysis options.
pub fn classify_volume(
    volume: &Volume,
    taxonomy: &Taxonomy,
    policy: &DecisionPolicy,
) -> Result<ClassificationResult, VolumeError> {
    Classifier::new(taxonomy.clone()).with_policy(*policy).classify(volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Modality;
    use proptest::prelude::*;

    fn meas(vf: f64, of: f64, oc: usize, extent: Option<f64>) -> RegionMeasurement {
        RegionMeasurement {
            vertebra_fraction: vf,
            present_vertebrae: vec![],
            organ_fraction: of,
            organ_count: oc,
            present_organs: vec![],
            extent_cm: extent,
        }
    }

    fn assess(region: Region, wins: u32, applicable: u32) -> RegionAssessment {
        RegionAssessment {
            region,
            outcomes: BTreeMap::new(),
            wins,
            applicable,
            score: if applicable == 0 { 0.0 } else { wins as f64 / applicable as f64 },
        }
    }

    #[test]
    fn abdomen_two_of_three() {
        let ct = Taxonomy::builtin(Modality::Ct);
        // 7 of 9 vertebrae, 4 of 9 organs, 35 cm exceeds 32.5
        let a = score_region(Region::Abdomen, &meas(7.0 / 9.0, 4.0 / 9.0, 4, Some(35.0)), ct.rule(Region::Abdomen));
        assert_eq!(a.outcomes[&Condition::Vertebrae], Outcome::Won);
        assert_eq!(a.outcomes[&Condition::Organs], Outcome::Won);
        assert_eq!(a.outcomes[&Condition::Extent], Outcome::Lost);
        assert_eq!((a.wins, a.applicable), (2, 3));
        assert!(a.score >= DEFAULT_TAU);
    }

    #[test]
    fn head_has_no_organ_condition() {
        let ct = Taxonomy::builtin(Modality::Ct);
        let a = score_region(Region::Head, &meas(0.0, 1.0, 2, Some(20.0)), ct.rule(Region::Head));
        assert_eq!(a.outcomes[&Condition::Organs], Outcome::NotApplicable);
        assert_eq!((a.wins, a.applicable), (1, 2));
        assert!(a.score < DEFAULT_TAU);
    }

    #[test]
    fn mr_chest_single_organ_wins() {
        let mr = Taxonomy::builtin(Modality::Mr);
        let a = score_region(Region::Chest, &meas(0.0, 1.0 / 6.0, 1, None), mr.rule(Region::Chest));
        assert_eq!(a.outcomes[&Condition::Organs], Outcome::Won);
    }

    #[test]
    fn ct_chest_nine_organs_lose() {
        let ct = Taxonomy::builtin(Modality::Ct);
        let a = score_region(Region::Chest, &meas(0.0, 9.0 / 32.0, 9, None), ct.rule(Region::Chest));
        assert_eq!(a.outcomes[&Condition::Organs], Outcome::Lost);
    }

    #[test]
    fn extent_window_is_inclusive() {
        let ct = Taxonomy::builtin(Modality::Ct);
        let rule = ct.rule(Region::Neck);
        for (e, won) in [(5.6, true), (19.5, true), (5.5, false), (19.6, false)] {
            let a = score_region(Region::Neck, &meas(0.0, 0.0, 0, Some(e)), rule);
            assert_eq!(a.outcomes[&Condition::Extent] == Outcome::Won, won, "{e}");
        }
    }

    #[test]
    fn max_score_ties() {
        let p = DecisionPolicy::default();
        let a = [assess(Region::Chest, 3, 3), assess(Region::Abdomen, 3, 3), assess(Region::Pelvis, 2, 3)];
        assert_eq!(aggregate(&a, &p).to_string(), "chest+abdomen");
        let t = DecisionPolicy { selection: Selection::ThresholdAll, ..p };
        assert_eq!(aggregate(&a, &t).to_string(), "chest+abdomen+pelvis");
    }

    #[test]
    fn below_tau_is_other() {
        let p = DecisionPolicy::default();
        let a = [assess(Region::Head, 1, 2), assess(Region::Chest, 1, 3)];
        assert!(aggregate(&a, &p).is_other());
        assert!(aggregate(&[], &p).is_other());
    }

    #[test]
    fn classify_empty_volume() {
        let ct = Taxonomy::builtin(Modality::Ct);
        let v = Volume::from_labels([2, 2, 2], [1.0; 3], vec![0; 8]).unwrap();
        let r = classify_volume(&v, &ct, &DecisionPolicy::default()).unwrap();
        assert!(r.label.is_other() && r.flags.empty_volume);
    }

    fn arb_assessments() -> impl Strategy<Value = Vec<RegionAssessment>> {
        proptest::collection::vec((0u32..=3, 1u32..=3), 5).prop_map(|v| {
            v.into_iter()
                .zip(Region::ALL)
                .map(|((w, a), r)| assess(r, w.min(a), a))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn max_score_is_subset_of_threshold_all(a in arb_assessments(), tau in 0.1f64..1.0) {
            let m = aggregate(&a, &DecisionPolicy { tau, selection: Selection::MaxScore });
            let t = aggregate(&a, &DecisionPolicy { tau, selection: Selection::ThresholdAll });
            if !m.is_other() {
                for r in m.regions() {
                    prop_assert!(t.contains(r));
                }
            } else {
                prop_assert!(t.is_other());
            }
        }

        #[test]
        fn chosen_regions_reach_tau(a in arb_assessments(), tau in 0.1f64..1.0) {
            let set = aggregate(&a, &DecisionPolicy { tau, selection: Selection::ThresholdAll });
            for x in &a {
                prop_assert_eq!(set.contains(x.region), x.score + EPS >= tau);
            }
        }
    }
}
