//! Synthetic label volumes with a known region label.
//!
//! Every structure is an axis-aligned column of voxels in its own in-plane
//! cell, so structures never overlap. The expected label is computed from the
//! generator's own bookkeeping by [`oracle`], which does not use the analysis
//! or decision modules.

mod atlas;
pub mod oracle;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::RegionSet;
use crate::taxonomy::{Modality, Taxonomy};
use crate::volume::{DataType, Volume, VolumeKind, Voxels};

pub use atlas::{atlas, sample_corpus, sample_specs, whole_body_spec, window_spec, AtlasEntry, Scenario};

/// In-plane edge length of a structure cell, in voxels.
pub const CELL: usize = 4;
/// Largest number of voxels a structure can occupy per slice.
pub const CELL_AREA: u32 = (CELL * CELL) as u32;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("spec overflow: {0}")]
    SpecOverflow(String),
    #[error("class `{0}` is not in the dictionary")]
    UnknownClass(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedStructure {
    pub class_name: String,
    /// Distance of the inferior end from the inferior volume edge.
    pub si_start_cm: f64,
    /// Distance of the superior end from the inferior volume edge.
    pub si_end_cm: f64,
    pub voxels_per_slice: u32,
}

/// A structure too small to survive the voxel-count filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speck {
    pub class_name: String,
    pub slice: usize,
    pub voxels: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub modality: Modality,
    pub spacing_mm: [f64; 3],
    pub dims: [usize; 3],
    pub structures: Vec<PlacedStructure>,
    #[serde(default)]
    pub specks: Vec<Speck>,
    pub expected_label: RegionSet,
    #[serde(default)]
    pub scenario: String,
}

/// Slice range `[lo, hi]` covered by a cm interval. `None` when it rounds to
/// no slice.
pub fn slice_range(start_cm: f64, end_cm: f64, spacing_cm: f64) -> Option<(usize, usize)> {
    let lo = (start_cm / spacing_cm).round().max(0.0) as usize;
    let end = (end_cm / spacing_cm).round().max(0.0) as usize;
    (end > lo).then(|| (lo, end - 1))
}

impl PhantomSpec {
    /// Builds a spec and derives the expected label with default settings.
    pub fn build(
        taxonomy: &Taxonomy,
        spacing_mm: [f64; 3],
        slices: usize,
        structures: Vec<PlacedStructure>,
        specks: Vec<Speck>,
        scenario: &str,
    ) -> Result<PhantomSpec, PhantomError> {
        let cells = (structures.len() + specks.len()).max(1);
        let grid = (cells as f64).sqrt().ceil() as usize;
        let mut spec = PhantomSpec {
            modality: taxonomy.modality(),
            spacing_mm,
            dims: [grid * CELL, grid * CELL, slices],
            structures,
            specks,
            expected_label: RegionSet::other(),
            scenario: scenario.to_string(),
        };
        spec.validate(taxonomy)?;
        spec.expected_label = oracle::expected_label(&spec, taxonomy, &oracle::OracleSettings::default());
        Ok(spec)
    }

    pub fn si_spacing_cm(&self) -> f64 {
        self.spacing_mm[2] / 10.0
    }

    fn grid(&self) -> usize {
        self.dims[0] / CELL
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), PhantomError> {
        let overflow = |m: String| Err(PhantomError::SpecOverflow(m));
        let cells = self.structures.len() + self.specks.len();
        if self.dims[0] != self.dims[1] || !self.dims[0].is_multiple_of(CELL) || self.grid().pow(2) < cells {
            return overflow(format!("{cells} structures do not fit in-plane dims {:?}", self.dims));
        }
        if self.dims[2] == 0 {
            return overflow("zero slices".into());
        }
        for s in &self.structures {
            taxonomy
                .class_id(&s.class_name)
                .ok_or_else(|| PhantomError::UnknownClass(s.class_name.clone()))?;
            match slice_range(s.si_start_cm, s.si_end_cm, self.si_spacing_cm()) {
                Some((_, hi)) if hi < self.dims[2] && s.si_start_cm >= 0.0 => {}
                _ => {
                    return overflow(format!(
                        "{} [{}, {}] cm does not fit {} slices",
                        s.class_name, s.si_start_cm, s.si_end_cm, self.dims[2]
                    ))
                }
            }
            if s.voxels_per_slice == 0 || s.voxels_per_slice > CELL_AREA {
                return overflow(format!("{}: {} voxels per slice", s.class_name, s.voxels_per_slice));
            }
        }
        for s in &self.specks {
            taxonomy
                .class_id(&s.class_name)
                .ok_or_else(|| PhantomError::UnknownClass(s.class_name.clone()))?;
            if s.slice >= self.dims[2] || s.voxels == 0 || s.voxels > CELL_AREA {
                return overflow(format!("speck {} does not fit", s.class_name));
            }
        }
        Ok(())
    }
}

/// Rasterizes a spec into a canonical label volume. Deterministic in
/// `(spec, seed)`: the seed only moves voxels within their cells.
pub fn generate(spec: &PhantomSpec, taxonomy: &Taxonomy, seed: u64) -> Result<Volume, PhantomError> {
    spec.validate(taxonomy)?;
    let [nx, ny, nz] = spec.dims;
    let grid = spec.grid();
    let mut labels = vec![0u32; nx * ny * nz];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paint = |cell: usize, slice: usize, count: u32, id: u32, rng: &mut ChaCha8Rng| {
        let (cx, cy) = (cell % grid, cell / grid);
        for pos in sample(rng, CELL * CELL, count as usize) {
            let (i, j) = (cx * CELL + pos % CELL, cy * CELL + pos / CELL);
            labels[i + nx * (j + ny * slice)] = id;
        }
    };
    let sp = spec.si_spacing_cm();
    for (cell, s) in spec.structures.iter().enumerate() {
        let id = taxonomy.class_id(&s.class_name).expect("validated");
        let (lo, hi) = slice_range(s.si_start_cm, s.si_end_cm, sp).expect("validated");
        for k in lo..=hi {
            paint(cell, k, s.voxels_per_slice, id, &mut rng);
        }
    }
    for (n, s) in spec.specks.iter().enumerate() {
        let id = taxonomy.class_id(&s.class_name).expect("validated");
        paint(spec.structures.len() + n, s.slice, s.voxels, id, &mut rng);
    }
    let datatype = if taxonomy.class_names().keys().any(|&id| id > u16::MAX as u32) {
        DataType::Int32
    } else {
        DataType::UInt16
    };
    Ok(Volume::new(spec.dims, spec.spacing_mm, datatype, Voxels::Label(labels)).expect("valid phantom volume"))
}

/// Constant-per-class intensity volume with the label volume's geometry.
pub fn intensity_fill(labels: &Volume, modality: Modality) -> Volume {
    let (background, value): (f64, fn(u32) -> f64) = match modality {
        Modality::Ct => (-1000.0, |id| -150.0 + ((id * 53) % 900) as f64),
        Modality::Mr => (0.0, |id| 100.0 + ((id * 97) % 1000) as f64),
    };
    let data = match labels.voxels() {
        Voxels::Label(l) => l.iter().map(|&id| if id == 0 { background } else { value(id) }).collect(),
        Voxels::Intensity(v) => v.clone(),
    };
    debug_assert_eq!(labels.kind(), VolumeKind::Label);
    Volume::new(labels.dims(), labels.spacing(), DataType::Float32, Voxels::Intensity(data))
        .expect("same geometry")
        .with_direction(*labels.direction())
        .with_origin(labels.origin())
}
