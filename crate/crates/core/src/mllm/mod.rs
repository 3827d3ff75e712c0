//! Region labelling by a multimodal language model: composite rendering,
//! prompt assembly, answer parsing and model clients.

pub mod client;
pub mod prompt;
pub mod render;
pub mod response;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::AnalysisOptions;
use crate::decision::{ClassificationResult, Method};
use crate::labels::SynonymTable;
use crate::taxonomy::Taxonomy;
use crate::volume::{self, Volume, VolumeError, VolumeKind};

pub use client::{HttpClient, HttpConfig, MockClient, MockStrategy, ModelClient, RetryingClient, TransportError};
pub use prompt::{build_prompt, AnatomicalEvidence, PromptBundle, PromptMode, DEFAULT_VISIBILITY_PERCENT};
pub use render::{render_views, CompositeImage, Projection, RenderOptions};
pub use response::parse_response;

#[derive(Debug, Error)]
pub enum MllmError {
    #[error("axis {axis} has {len} voxels; at least 2 are needed")]
    DegenerateAxis { axis: usize, len: usize },
    #[error("rendering needs an intensity volume")]
    NotIntensity,
    #[error("segmentation-aware mode needs anatomical evidence")]
    MissingEvidence,
    #[error("no label found in model answer: {0:?}")]
    Unparseable(String),
    #[error("transport error for {scan_id}: {source}")]
    Transport {
        scan_id: String,
        #[source]
        source: TransportError,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MllmConfig {
    pub mode: PromptMode,
    pub render: RenderOptions,
    pub visibility_percent: u32,
    pub analysis: AnalysisOptions,
}

impl MllmConfig {
    pub fn new(taxonomy: &Taxonomy, mode: PromptMode) -> Self {
        MllmConfig {
            mode,
            render: RenderOptions::new(taxonomy.modality()),
            visibility_percent: DEFAULT_VISIBILITY_PERCENT,
            analysis: AnalysisOptions::default(),
        }
    }
}

/// Evidence from a label volume in any axis-aligned orientation.
pub fn evidence_from_labels(
    labels: &Volume,
    taxonomy: &Taxonomy,
    options: &AnalysisOptions,
) -> Result<AnatomicalEvidence, MllmError> {
    let canonical = volume::canonicalize(labels)?;
    match volume::build_presence_index(&canonical) {
        Ok(index) => Ok(AnatomicalEvidence::from_index(&index, taxonomy, options)),
        Err(VolumeError::EmptyVolume) => Ok(AnatomicalEvidence {
            present_structures: Vec::new(),
            region_extents_cm: Default::default(),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Renders and prompts without calling a model.
pub fn prepare_bundle(
    intensity: &Volume,
    labels: Option<&Volume>,
    taxonomy: &Taxonomy,
    config: &MllmConfig,
) -> Result<PromptBundle, MllmError> {
    if intensity.kind() != VolumeKind::Intensity {
        return Err(MllmError::NotIntensity);
    }
    let canonical = volume::canonicalize(intensity)?;
    let image = render_views(&canonical, &config.render)?;
    let evidence = match (config.mode, labels) {
        (PromptMode::SegmentationAware, Some(l)) => Some(evidence_from_labels(l, taxonomy, &config.analysis)?),
        _ => None,
    };
    Ok(build_prompt(taxonomy, config.mode, evidence.as_ref(), config.visibility_percent)?.with_image(image))
}

/// Full MLLM pathway for one scan. Unparseable answers become `other` with
/// the parse-failure flag; transport failures are returned as errors.
pub fn classify_via_mllm(
    client: &dyn ModelClient,
    scan_id: &str,
    intensity: &Volume,
    labels: Option<&Volume>,
    taxonomy: &Taxonomy,
    config: &MllmConfig,
) -> Result<ClassificationResult, MllmError> {
    let bundle = prepare_bundle(intensity, labels, taxonomy, config)?;
    let raw = client.send(&bundle).map_err(|source| MllmError::Transport {
        scan_id: scan_id.to_string(),
        source,
    })?;
    let method = match config.mode {
        PromptMode::Plain => Method::Mllm,
        PromptMode::SegmentationAware => Method::MllmSegmentation,
    };
    let mut result = ClassificationResult::other(method);
    match parse_response(&raw, SynonymTable::builtin()) {
        Ok(label) => result.label = label,
        Err(_) => {
            log::warn!("{scan_id}: unparseable model answer");
            result.flags.parse_failure = true;
        }
    }
    result.raw_response = Some(raw);
    Ok(result)
}

/// Maps `f` over `items` on at most `max_in_flight` threads. Results keep
/// input order.
pub fn ordered_parallel_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(&f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Region, RegionSet};
    use crate::phantoms::{generate, intensity_fill, window_spec};
    use crate::taxonomy::Modality;

    struct Down;

    impl ModelClient for Down {
        fn send(&self, _: &PromptBundle) -> Result<String, TransportError> {
            Err(TransportError::new("timeout", true))
        }

        fn describe(&self) -> String {
            "down".into()
        }
    }

    fn abdomen() -> (Taxonomy, Volume, Volume) {
        let t = Taxonomy::builtin(Modality::Ct);
        let spec = window_spec(&t, 48.0, 75.0, 1.0, 5.0, "abdomen").unwrap();
        let labels = generate(&spec, &t, 0).unwrap();
        let img = intensity_fill(&labels, Modality::Ct);
        (t, labels, img)
    }

    #[test]
    fn fixed_mock_label() {
        let (t, _, img) = abdomen();
        let m = MockClient::new(MockStrategy::Fixed("pelvis".into()));
        let r = classify_via_mllm(&m, "s", &img, None, &t, &MllmConfig::new(&t, PromptMode::Plain)).unwrap();
        assert_eq!(r.label, RegionSet::single(Region::Pelvis));
        assert!(r.assessments.is_empty());
        assert_eq!(r.method, Method::Mllm);
    }

    #[test]
    fn segmentation_aware_largest_extent() {
        let (t, labels, img) = abdomen();
        let m = MockClient::new(MockStrategy::LargestExtent);
        let cfg = MllmConfig::new(&t, PromptMode::SegmentationAware);
        let r = classify_via_mllm(&m, "s", &img, Some(&labels), &t, &cfg).unwrap();
        assert_eq!(r.label, RegionSet::single(Region::Abdomen));
        let missing = classify_via_mllm(&m, "s", &img, None, &t, &cfg);
        assert!(matches!(missing, Err(MllmError::MissingEvidence)));
    }

    #[test]
    fn evidence_names_are_in_index() {
        let (t, labels, _) = abdomen();
        let e = evidence_from_labels(&labels, &t, &AnalysisOptions::default()).unwrap();
        let idx = volume::build_presence_index(&labels).unwrap();
        for n in &e.present_structures {
            assert!(idx.contains(t.class_id(n).unwrap()), "{n}");
        }
    }

    #[test]
    fn unparseable_degrades_to_other() {
        let (t, _, img) = abdomen();
        let m = MockClient::new(MockStrategy::Fixed("I cannot determine the region.".into()));
        let r = classify_via_mllm(&m, "s", &img, None, &t, &MllmConfig::new(&t, PromptMode::Plain)).unwrap();
        assert!(r.label.is_other() && r.flags.parse_failure);
    }

    #[test]
    fn transport_error_carries_scan_id() {
        let (t, _, img) = abdomen();
        let err = classify_via_mllm(&Down, "scan-7", &img, None, &t, &MllmConfig::new(&t, PromptMode::Plain)).unwrap_err();
        assert!(matches!(err, MllmError::Transport { scan_id, .. } if scan_id == "scan-7"));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..50).collect();
        let out = ordered_parallel_map(&items, 4, |&x| {
            std::thread::sleep(std::time::Duration::from_micros((50 - x) * 10));
            x * 2
        });
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
