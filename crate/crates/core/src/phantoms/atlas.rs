//! A coarse body atlas and the scan scenarios drawn from it.
//!
//! Positions are depths in cm below the vertex. They are tuned so that a
//! scan covering a whole region satisfies every rule of that region.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate, slice_range, PhantomError, PhantomSpec, PlacedStructure, Speck, CELL_AREA};
use crate::taxonomy::Taxonomy;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtlasEntry {
    pub class_name: &'static str,
    pub top_cm: f64,
    pub bottom_cm: f64,
}

const fn e(class_name: &'static str, top_cm: f64, bottom_cm: f64) -> AtlasEntry {
    AtlasEntry { class_name, top_cm, bottom_cm }
}

const FIXED: &[AtlasEntry] = &[
    e("skull", 0.0, 22.0),
    e("brain", 2.0, 16.0),
    e("spinal_cord", 17.0, 65.0),
    e("esophagus", 24.0, 40.0),
    e("trachea", 24.0, 36.0),
    e("thyroid_gland", 26.0, 30.0),
    e("common_carotid_artery_left", 20.0, 32.0),
    e("common_carotid_artery_right", 20.0, 32.0),
    e("clavicula_left", 29.0, 32.0),
    e("clavicula_right", 29.0, 32.0),
    e("scapula_left", 29.0, 45.0),
    e("scapula_right", 29.0, 45.0),
    e("humerus_left", 30.0, 58.0),
    e("humerus_right", 30.0, 58.0),
    e("lung_upper_lobe_left", 32.0, 48.0),
    e("lung_lower_lobe_left", 40.0, 58.0),
    e("lung_upper_lobe_right", 32.0, 46.0),
    e("lung_middle_lobe_right", 42.0, 52.0),
    e("lung_lower_lobe_right", 44.0, 58.0),
    e("lung_left", 32.0, 58.0),
    e("lung_right", 32.0, 58.0),
    e("heart", 42.0, 56.0),
    e("aorta", 38.0, 72.0),
    e("sternum", 34.0, 52.0),
    e("costal_cartilages", 40.0, 56.0),
    e("autochthon_left", 30.0, 75.0),
    e("autochthon_right", 30.0, 75.0),
    e("liver", 50.0, 66.0),
    e("spleen", 52.0, 62.0),
    e("stomach", 50.0, 62.0),
    e("adrenal_gland_left", 55.0, 58.0),
    e("adrenal_gland_right", 55.0, 58.0),
    e("gallbladder", 58.0, 64.0),
    e("pancreas", 58.0, 64.0),
    e("duodenum", 60.0, 66.0),
    e("kidney_left", 58.0, 70.0),
    e("kidney_right", 58.0, 70.0),
    e("small_bowel", 62.0, 76.0),
    e("colon", 60.0, 75.0),
    e("inferior_vena_cava", 50.0, 72.0),
    e("iliopsoas_left", 64.0, 90.0),
    e("iliopsoas_right", 64.0, 90.0),
    e("iliac_artery_left", 72.0, 84.0),
    e("iliac_artery_right", 72.0, 84.0),
    e("hip_left", 72.0, 92.0),
    e("hip_right", 72.0, 92.0),
    e("sacrum", 73.6, 84.0),
    e("vertebrae_S1", 73.6, 76.0),
    e("gluteus_maximus_left", 74.0, 96.0),
    e("gluteus_maximus_right", 74.0, 96.0),
    e("gluteus_medius_left", 72.0, 86.0),
    e("gluteus_medius_right", 72.0, 86.0),
    e("urinary_bladder", 80.0, 90.0),
    e("prostate", 88.0, 92.0),
    e("femur_left", 88.0, 135.0),
    e("femur_right", 88.0, 135.0),
    e("quadriceps_femoris_left", 92.0, 132.0),
    e("quadriceps_femoris_right", 92.0, 132.0),
    e("sartorius_left", 90.0, 134.0),
    e("sartorius_right", 90.0, 134.0),
    e("tibia", 138.0, 175.0),
    e("fibula", 140.0, 175.0),
];

/// The full atlas: fixed structures, vertebrae and ribs.
pub fn atlas() -> Vec<AtlasEntry> {
    let mut out = FIXED.to_vec();
    const CERVICAL: [&str; 7] = ["vertebrae_C1", "vertebrae_C2", "vertebrae_C3", "vertebrae_C4", "vertebrae_C5", "vertebrae_C6", "vertebrae_C7"];
    const THORACIC: [&str; 12] = [
        "vertebrae_T1", "vertebrae_T2", "vertebrae_T3", "vertebrae_T4", "vertebrae_T5", "vertebrae_T6",
        "vertebrae_T7", "vertebrae_T8", "vertebrae_T9", "vertebrae_T10", "vertebrae_T11", "vertebrae_T12",
    ];
    const LUMBAR: [&str; 5] = ["vertebrae_L1", "vertebrae_L2", "vertebrae_L3", "vertebrae_L4", "vertebrae_L5"];
    const LEFT_RIBS: [&str; 12] = [
        "rib_left_1", "rib_left_2", "rib_left_3", "rib_left_4", "rib_left_5", "rib_left_6",
        "rib_left_7", "rib_left_8", "rib_left_9", "rib_left_10", "rib_left_11", "rib_left_12",
    ];
    const RIGHT_RIBS: [&str; 12] = [
        "rib_right_1", "rib_right_2", "rib_right_3", "rib_right_4", "rib_right_5", "rib_right_6",
        "rib_right_7", "rib_right_8", "rib_right_9", "rib_right_10", "rib_right_11", "rib_right_12",
    ];
    let mut depth = 17.0;
    for (names, height) in [(&CERVICAL[..], 2.0), (&THORACIC[..], 2.3), (&LUMBAR[..], 3.0)] {
        for name in names {
            out.push(e(name, depth, depth + height));
            depth += height;
        }
    }
    for (i, (l, r)) in LEFT_RIBS.iter().zip(RIGHT_RIBS).enumerate() {
        let top = 31.0 + 2.0 * i as f64;
        let bottom = (top + 7.0).min(60.0);
        out.push(e(l, top, bottom));
        out.push(e(r, top, bottom));
    }
    out
}

/// Kinds of synthetic scan, sampled round-robin by [`sample_specs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Head,
    Neck,
    Chest,
    Abdomen,
    Pelvis,
    HeadNeck,
    ChestAbdomen,
    AbdomenPelvis,
    ChestAbdomenPelvis,
    WholeBody,
    /// A short window anywhere on the body.
    Sliver,
    /// A single-region window with the atlas stretched past the extent limit.
    Overscan,
    /// Thighs and lower legs only.
    Extremity,
    /// One organ on its own.
    OrganOnly,
}

impl Scenario {
    pub const ALL: [Scenario; 14] = [
        Scenario::Head,
        Scenario::Neck,
        Scenario::Chest,
        Scenario::Abdomen,
        Scenario::Pelvis,
        Scenario::HeadNeck,
        Scenario::ChestAbdomen,
        Scenario::AbdomenPelvis,
        Scenario::ChestAbdomenPelvis,
        Scenario::WholeBody,
        Scenario::Sliver,
        Scenario::Overscan,
        Scenario::Extremity,
        Scenario::OrganOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Head => "head",
            Scenario::Neck => "neck",
            Scenario::Chest => "chest",
            Scenario::Abdomen => "abdomen",
            Scenario::Pelvis => "pelvis",
            Scenario::HeadNeck => "head_neck",
            Scenario::ChestAbdomen => "chest_abdomen",
            Scenario::AbdomenPelvis => "abdomen_pelvis",
            Scenario::ChestAbdomenPelvis => "chest_abdomen_pelvis",
            Scenario::WholeBody => "whole_body",
            Scenario::Sliver => "sliver",
            Scenario::Overscan => "overscan",
            Scenario::Extremity => "extremity",
            Scenario::OrganOnly => "organ_only",
        }
    }

    /// Depth window `(top, bottom)` ranges, each as `(lo, hi)`.
    fn window(self) -> Option<((f64, f64), (f64, f64))> {
        Some(match self {
            Scenario::Head => ((-2.0, 0.0), (22.0, 26.0)),
            Scenario::Neck => ((15.0, 18.0), (30.0, 33.0)),
            Scenario::Chest => ((29.0, 32.0), (57.0, 61.0)),
            Scenario::Abdomen => ((47.0, 50.0), (73.0, 77.0)),
            Scenario::Pelvis => ((67.0, 71.0), (92.0, 97.0)),
            Scenario::HeadNeck => ((-2.0, 0.0), (30.0, 33.0)),
            Scenario::ChestAbdomen => ((29.0, 32.0), (73.0, 77.0)),
            Scenario::AbdomenPelvis => ((47.0, 50.0), (92.0, 97.0)),
            Scenario::ChestAbdomenPelvis => ((29.0, 32.0), (92.0, 97.0)),
            Scenario::WholeBody => ((-2.0, 0.0), (92.0, 140.0)),
            Scenario::Extremity => ((98.0, 110.0), (130.0, 175.0)),
            _ => return None,
        })
    }
}

const SPACINGS_MM: [f64; 4] = [2.5, 3.0, 4.0, 5.0];
const IN_PLANE_MM: f64 = 1.5;
const MIN_VOXELS: u32 = 10;

fn density(rng: Option<&mut ChaCha8Rng>, slices: usize) -> u32 {
    let base = rng.map_or(8, |r| r.gen_range(4..=CELL_AREA));
    let needed = MIN_VOXELS.div_ceil(slices as u32);
    base.max(needed).min(CELL_AREA)
}

#[allow(clippy::too_many_arguments)]
fn build_window(
    taxonomy: &Taxonomy,
    entries: &[AtlasEntry],
    top: f64,
    bottom: f64,
    scale: f64,
    spacing_mm: f64,
    scenario: &str,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<PhantomSpec, PhantomError> {
    let sp = spacing_mm / 10.0;
    let slices = ((bottom - top) / sp).ceil().max(1.0) as usize;
    let floor = top + slices as f64 * sp;
    let mut structures = Vec::new();
    for a in entries {
        if taxonomy.class_id(a.class_name).is_none() {
            continue;
        }
        let (d0, d1) = (a.top_cm * scale, a.bottom_cm * scale);
        if d1 <= top || d0 >= floor {
            continue;
        }
        let start = floor - d1.min(floor);
        let end = floor - d0.max(top);
        let Some((lo, hi)) = slice_range(start, end, sp) else {
            continue;
        };
        structures.push(PlacedStructure {
            class_name: a.class_name.to_string(),
            si_start_cm: start,
            si_end_cm: end,
            voxels_per_slice: density(rng.as_deref_mut(), hi - lo + 1),
        });
    }
    let mut specks = Vec::new();
    if let Some(rng) = rng {
        let mut unused: Vec<&String> = taxonomy
            .class_names()
            .values()
            .filter(|n| !structures.iter().any(|s| &s.class_name == *n))
            .collect();
        unused.shuffle(rng);
        let n = rng.gen_range(0..=3);
        for name in unused.into_iter().take(n) {
            specks.push(Speck {
                class_name: name.clone(),
                slice: rng.gen_range(0..slices),
                voxels: rng.gen_range(1..MIN_VOXELS),
            });
        }
    }
    PhantomSpec::build(taxonomy, [IN_PLANE_MM, IN_PLANE_MM, spacing_mm], slices, structures, specks, scenario)
}

/// Spec for the atlas between depths `top` and `bottom` (cm below the
/// vertex), with the atlas stretched by `scale`. Fixed voxel density, no
/// specks.
pub fn window_spec(
    taxonomy: &Taxonomy,
    top: f64,
    bottom: f64,
    scale: f64,
    spacing_mm: f64,
    scenario: &str,
) -> Result<PhantomSpec, PhantomError> {
    build_window(taxonomy, &atlas(), top, bottom, scale, spacing_mm, scenario, None)
}

/// Vertex to upper thigh.
pub fn whole_body_spec(taxonomy: &Taxonomy, spacing_mm: f64) -> PhantomSpec {
    window_spec(taxonomy, -1.0, 96.0, 1.0, spacing_mm, "whole_body").expect("atlas fits")
}

fn sample_one(taxonomy: &Taxonomy, entries: &[AtlasEntry], scenario: Scenario, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let spacing = *SPACINGS_MM.choose(rng).expect("non-empty");
    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let (top, bottom, scale, pool): (f64, f64, f64, Option<Vec<AtlasEntry>>) = match scenario {
        Scenario::Sliver => {
            let top = rng.gen_range(0.0..90.0);
            (top, top + rng.gen_range(6.0..12.0), 1.0, None)
        }
        Scenario::Overscan => {
            let base = *[Scenario::Head, Scenario::Neck, Scenario::Chest, Scenario::Abdomen, Scenario::Pelvis]
                .choose(rng)
                .expect("non-empty");
            let (t, b) = base.window().expect("region window");
            let scale = rng.gen_range(1.5..1.8);
            (pick(rng, t) * scale, pick(rng, b) * scale, scale, None)
        }
        Scenario::OrganOnly => {
            let organs: Vec<AtlasEntry> = entries
                .iter()
                .filter(|a| !a.class_name.starts_with("vertebrae") && taxonomy.class_id(a.class_name).is_some())
                .copied()
                .collect();
            let a = *organs.choose(rng).expect("atlas has organs");
            (a.top_cm - 1.0, a.bottom_cm + 1.0, 1.0, Some(vec![a]))
        }
        s => {
            let (t, b) = s.window().expect("window scenario");
            (pick(rng, t), pick(rng, b), 1.0, None)
        }
    };
    let pool = pool.as_deref().unwrap_or(entries);
    build_window(taxonomy, pool, top, bottom, scale, spacing, scenario.name(), Some(rng)).expect("sampled spec fits")
}

/// `n` specs cycling through every [`Scenario`]. Deterministic per seed.
pub fn sample_specs(taxonomy: &Taxonomy, n: usize, seed: u64) -> Vec<PhantomSpec> {
    let entries = atlas();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| sample_one(taxonomy, &entries, Scenario::ALL[i % Scenario::ALL.len()], &mut rng))
        .collect()
}

/// Specs with their generated volumes. Deterministic per seed.
pub fn sample_corpus(taxonomy: &Taxonomy, n: usize, seed: u64) -> Vec<(PhantomSpec, Volume)> {
    sample_specs(taxonomy, n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let v = generate(&spec, taxonomy, seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)).expect("sampled spec fits");
            (spec, v)
        })
        .collect()
}
