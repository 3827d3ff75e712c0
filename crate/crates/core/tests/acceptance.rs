//! Acceptance suite. Runs every gating criterion, prints one line per
//! criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use bodyregion::decision::Classifier;
use bodyregion::labels::{normalize, Category, Region, RegionSet};
use bodyregion::metrics::{evaluate, Confusion, LabeledPrediction};
use bodyregion::mllm::{
    build_prompt, classify_via_mllm, ordered_parallel_map, parse_response, MllmConfig, MllmError, MockClient,
    MockStrategy, PromptMode,
};
use bodyregion::phantoms::{intensity_fill, sample_corpus, slice_range, PhantomSpec};
use bodyregion::taxonomy::{region_boundaries, Condition, Modality, OrganThreshold, Taxonomy};
use bodyregion::volume::{load_volume, write_nifti, DataType, Endianness, Volume, VolumeKind, Voxels};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and sizes pinned by the acceptance criteria.
const MIN_PHANTOMS: usize = 200;
const MAX_PHANTOM_RUNTIME: Duration = Duration::from_secs(30);
const MIN_PER_CATEGORY: usize = 10;
const ORIENTATION_PHANTOMS: usize = 20;
const ORIENTATIONS: usize = 48;
const RANDOM_DATASETS: usize = 100;
const HEADLINE_F1_CT: f64 = 0.947;
const HEADLINE_F1_MR: f64 = 0.914;
const F1_TOLERANCE: f64 = 0.005;
const MIN_PROSE_FIXTURES: usize = 20;
const UNPARSEABLE_FIXTURES: usize = 5;
const MOCK_RUNS: usize = 3;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ct() -> Taxonomy {
    Taxonomy::builtin(Modality::Ct)
}

fn mr() -> Taxonomy {
    Taxonomy::builtin(Modality::Mr)
}

// ---------------------------------------------------------------- phantoms

fn phantom_oracle() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    for (taxonomy, seed) in [(ct(), 101u64), (mr(), 202u64)] {
        let corpus = sample_corpus(&taxonomy, MIN_PHANTOMS, seed);
        let classifier = Classifier::new(taxonomy.clone());
        for c in Category::ALL {
            let n = corpus.iter().filter(|(s, _)| s.expected_label.has_category(c)).count();
            check(n >= MIN_PER_CATEGORY, || format!("{}: only {n} phantoms with {c:?}", taxonomy.modality()))?;
        }
        for scenario in ["sliver", "overscan", "extremity"] {
            check(corpus.iter().any(|(s, _)| s.scenario == scenario), || format!("no {scenario} phantoms"))?;
        }
        for (i, (spec, volume)) in corpus.iter().enumerate() {
            let got = classifier.classify(volume).map_err(|e| e.to_string())?.label;
            check(got == spec.expected_label, || {
                format!("{} phantom {i} ({}): expected {}, got {got}", taxonomy.modality(), spec.scenario, spec.expected_label)
            })?;
        }
        total += corpus.len();
    }
    let elapsed = start.elapsed();
    check(elapsed < MAX_PHANTOM_RUNTIME, || format!("took {elapsed:?}"))?;
    Ok(format!("{total} phantoms (CT + MR) match the generator label, {:.1} s", elapsed.as_secs_f64()))
}

// ------------------------------------------------------------ rule table

struct Row {
    region: Region,
    ct_vertebrae: &'static [&'static str],
    mr_vertebrae: &'static [&'static str],
    stated_vertebrae: (usize, usize),
    ct_organs: &'static [&'static str],
    mr_organs: &'static [&'static str],
    stated_organs: (usize, usize),
    extent: (f64, f64),
    ct_conditions: &'static [Condition],
    mr_conditions: &'static [Condition],
    ct_organ: Option<OrganThreshold>,
    mr_organ: Option<OrganThreshold>,
}

const V: Condition = Condition::Vertebrae;
const O: Condition = Condition::Organs;
const E: Condition = Condition::Extent;

fn table() -> Vec<Row> {
    const CHEST_V: &[&str] = &[
        "vertebrae_L1", "vertebrae_T12", "vertebrae_T11", "vertebrae_T10", "vertebrae_T9", "vertebrae_T8", "vertebrae_T7",
        "vertebrae_T6", "vertebrae_T5", "vertebrae_T4", "vertebrae_T3", "vertebrae_T2", "vertebrae_T1", "vertebrae_C7",
        "vertebrae_C6",
    ];
    const NECK_V: &[&str] = &[
        "vertebrae_T2", "vertebrae_T1", "vertebrae_C7", "vertebrae_C6", "vertebrae_C5", "vertebrae_C4", "vertebrae_C3",
        "vertebrae_C2", "vertebrae_C1",
    ];
    const HEAD_V: &[&str] = &["vertebrae_C4", "vertebrae_C3", "vertebrae_C2", "vertebrae_C1"];
    const ABD_V: &[&str] = &[
        "vertebrae_L4", "vertebrae_L3", "vertebrae_L2", "vertebrae_L1", "vertebrae_T12", "vertebrae_T11", "vertebrae_T10",
        "vertebrae_T9", "vertebrae_T8",
    ];
    const ABD_O: &[&str] = &["spleen", "kidney_right", "kidney_left", "gallbladder", "liver", "stomach", "pancreas", "duodenum", "colon"];
    const PELVIS_O: &[&str] = &["urinary_bladder", "prostate", "hip_left", "hip_right", "sacrum"];
    const CT_CHEST_O: &[&str] = &[
        "lung_upper_lobe_left", "lung_lower_lobe_left", "lung_upper_lobe_right", "lung_middle_lobe_right",
        "lung_lower_lobe_right", "heart", "rib_left_1", "rib_left_2", "rib_left_3", "rib_left_4", "rib_left_5",
        "rib_left_6", "rib_left_7", "rib_left_8", "rib_left_9", "rib_left_10", "rib_left_11", "rib_left_12",
        "rib_right_1", "rib_right_2", "rib_right_3", "rib_right_4", "rib_right_5", "rib_right_6", "rib_right_7",
        "rib_right_8", "rib_right_9", "rib_right_10", "rib_right_11", "rib_right_12", "sternum", "costal_cartilages",
    ];
    let frac = Some(OrganThreshold::Fraction(0.30));
    let one = Some(OrganThreshold::MinCount(1));
    vec![
        Row {
            region: Region::Head,
            ct_vertebrae: HEAD_V,
            mr_vertebrae: HEAD_V,
            stated_vertebrae: (4, 4),
            ct_organs: &["brain", "skull"],
            mr_organs: &["brain"],
            stated_organs: (2, 1),
            extent: (15.0, 25.0),
            ct_conditions: &[V, E],
            mr_conditions: &[V, E],
            ct_organ: None,
            mr_organ: None,
        },
        Row {
            region: Region::Neck,
            ct_vertebrae: NECK_V,
            mr_vertebrae: NECK_V,
            stated_vertebrae: (9, 9),
            ct_organs: &["esophagus", "trachea", "thyroid_gland"],
            mr_organs: &["esophagus"],
            stated_organs: (3, 1),
            extent: (8.0, 15.0),
            ct_conditions: &[V, O, E],
            mr_conditions: &[V, E],
            ct_organ: one,
            mr_organ: None,
        },
        Row {
            region: Region::Chest,
            ct_vertebrae: CHEST_V,
            mr_vertebrae: CHEST_V,
            stated_vertebrae: (15, 15),
            ct_organs: CT_CHEST_O,
            mr_organs: &["lung_left", "lung_right", "heart"],
            stated_organs: (34, 3),
            extent: (20.0, 35.0),
            ct_conditions: &[V, O, E],
            mr_conditions: &[V, O, E],
            ct_organ: frac,
            mr_organ: one,
        },
        Row {
            region: Region::Abdomen,
            ct_vertebrae: ABD_V,
            mr_vertebrae: ABD_V,
            stated_vertebrae: (8, 8),
            ct_organs: ABD_O,
            mr_organs: ABD_O,
            stated_organs: (9, 9),
            extent: (15.0, 25.0),
            ct_conditions: &[V, O, E],
            mr_conditions: &[V, O, E],
            ct_organ: frac,
            mr_organ: frac,
        },
        Row {
            region: Region::Pelvis,
            ct_vertebrae: &["sacrum", "vertebrae_S1", "vertebrae_L5", "vertebrae_L4", "vertebrae_L3"],
            mr_vertebrae: &["sacrum", "vertebrae_L5", "vertebrae_L4", "vertebrae_L3"],
            stated_vertebrae: (5, 4),
            ct_organs: PELVIS_O,
            mr_organs: PELVIS_O,
            stated_organs: (5, 5),
            extent: (15.0, 25.0),
            ct_conditions: &[V, O, E],
            mr_conditions: &[V, O, E],
            ct_organ: frac,
            mr_organ: frac,
        },
    ]
}

fn pick<T>(ct: bool, a: T, b: T) -> T {
    if ct {
        a
    } else {
        b
    }
}

fn rule_table() -> Outcome {
    let mut cells = 0;
    for taxonomy in [ct(), mr()] {
        let is_ct = taxonomy.modality() == Modality::Ct;
        for row in table() {
            let rule = taxonomy.rule(row.region);
            let tag = format!("{} {}", taxonomy.modality(), row.region);
            let same_set = |a: &[String], b: &[&str]| {
                let mut a: Vec<&str> = a.iter().map(String::as_str).collect();
                let mut b = b.to_vec();
                a.sort();
                b.sort();
                a == b
            };
            check(same_set(&rule.expected_vertebrae, pick(is_ct, row.ct_vertebrae, row.mr_vertebrae)), || format!("{tag}: vertebrae {:?}", rule.expected_vertebrae))?;
            check(same_set(&rule.expected_organs, pick(is_ct, row.ct_organs, row.mr_organs)), || format!("{tag}: organs {:?}", rule.expected_organs))?;
            let (sv, so) = (pick(is_ct, row.stated_vertebrae.0, row.stated_vertebrae.1), pick(is_ct, row.stated_organs.0, row.stated_organs.1));
            check(rule.stated_vertebra_count == sv, || format!("{tag}: stated vertebra count {}", rule.stated_vertebra_count))?;
            check(rule.stated_organ_count == so, || format!("{tag}: stated organ count {}", rule.stated_organ_count))?;
            check(rule.vertebra_threshold == 0.60, || format!("{tag}: vertebra threshold"))?;
            check(rule.extent_cm == row.extent, || format!("{tag}: extent {:?}", rule.extent_cm))?;
            check(rule.extent_window == (0.7, 1.3), || format!("{tag}: extent window {:?}", rule.extent_window))?;
            let (lo, hi) = rule.extent_bounds_cm();
            check((lo - 0.7 * row.extent.0).abs() < 1e-12 && (hi - 1.3 * row.extent.1).abs() < 1e-12, || format!("{tag}: bounds"))?;
            let conditions = pick(is_ct, row.ct_conditions, row.mr_conditions);
            check(rule.conditions == conditions, || format!("{tag}: conditions {:?}", rule.conditions))?;
            if let Some(t) = pick(is_ct, row.ct_organ, row.mr_organ) {
                check(rule.organ_threshold == t, || format!("{tag}: organ threshold {:?}", rule.organ_threshold))?;
            }
            cells += 7;
        }
    }
    Ok(format!("{cells} table cells match the builtin taxonomies"))
}

// ----------------------------------------------------------- orientation

/// Brute-force reorientation: new axis `a` is old axis `perm[a]`, reversed
/// when `flip[a]`.
fn reorient(v: &Volume, perm: [usize; 3], flip: [bool; 3]) -> Volume {
    let old = v.dims();
    let dims = [old[perm[0]], old[perm[1]], old[perm[2]]];
    let sp = v.spacing();
    let spacing = [sp[perm[0]], sp[perm[1]], sp[perm[2]]];
    let src = v.labels().expect("label volume");
    let mut out = vec![0u32; src.len()];
    for c in 0..dims[2] {
        for b in 0..dims[1] {
            for a in 0..dims[0] {
                let new = [a, b, c];
                let mut o = [0usize; 3];
                for ax in 0..3 {
                    o[perm[ax]] = if flip[ax] { dims[ax] - 1 - new[ax] } else { new[ax] };
                }
                out[a + dims[0] * (b + dims[1] * c)] = src[o[0] + old[0] * (o[1] + old[1] * o[2])];
            }
        }
    }
    let mut dir = [[0.0; 3]; 3];
    for ax in 0..3 {
        dir[perm[ax]][ax] = if flip[ax] { -1.0 } else { 1.0 };
    }
    Volume::from_labels(dims, spacing, out).expect("valid").with_direction(dir)
}

fn orientations() -> Vec<([usize; 3], [bool; 3])> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for bits in 0..8u8 {
            out.push((p, [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0]));
        }
    }
    out
}

fn orientation_invariance() -> Outcome {
    let all = orientations();
    check(all.len() == ORIENTATIONS, || "orientation count".into())?;
    let mut checked = 0;
    for (taxonomy, seed) in [(ct(), 7u64), (mr(), 8u64)] {
        let classifier = Classifier::new(taxonomy.clone());
        for (spec, volume) in sample_corpus(&taxonomy, ORIENTATION_PHANTOMS / 2, seed) {
            let reference = classifier.classify(&volume).map_err(|e| e.to_string())?;
            for &(perm, flip) in &all {
                let r = classifier.classify(&reorient(&volume, perm, flip)).map_err(|e| e.to_string())?;
                check(r.label == reference.label && r.measurements == reference.measurements, || {
                    format!("{} {}: {perm:?} {flip:?} gives {} instead of {}", taxonomy.modality(), spec.scenario, r.label, reference.label)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} reoriented volumes ({ORIENTATION_PHANTOMS} phantoms x {ORIENTATIONS}) give identical labels"))
}

// --------------------------------------------------------------- metrics

fn recount(pairs: &[LabeledPrediction], category: Category) -> Confusion {
    let positive = |s: RegionSet| match category.region() {
        Some(r) => s.regions().any(|x| x == r),
        None => s.to_string() == "other",
    };
    let mut c = Confusion::default();
    for p in pairs {
        match (positive(p.predicted), positive(p.truth)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

fn metrics_fidelity() -> Outcome {
    let rs = |s: &str| s.parse::<RegionSet>().unwrap();
    let fixture: Vec<LabeledPrediction> = [("abdomen", "abdomen"), ("abdomen+pelvis", "abdomen"), ("chest", "chest"), ("other", "other")]
        .iter()
        .enumerate()
        .map(|(i, (t, p))| LabeledPrediction::new(format!("s{i}"), rs(p), rs(t)))
        .collect();
    let r = evaluate(&fixture).map_err(|e| e.to_string())?;
    // hand-computed: rows are (tp, fp, fn, tn)
    let hand: [(Category, (u64, u64, u64, u64)); 6] = [
        (Category::Head, (0, 0, 0, 4)),
        (Category::Neck, (0, 0, 0, 4)),
        (Category::Chest, (1, 0, 0, 3)),
        (Category::Abdomen, (2, 0, 0, 2)),
        (Category::Pelvis, (0, 0, 1, 3)),
        (Category::Other, (1, 0, 0, 3)),
    ];
    for (c, (tp, fp, fn_, tn)) in hand {
        check(r.per_category[&c].confusion == Confusion { tp, fp, fn_, tn }, || format!("fixture {c:?}: {:?}", r.per_category[&c].confusion))?;
    }
    let p = &r.per_category[&Category::Pelvis];
    check(p.recall == 0.0 && r.per_category[&Category::Abdomen].precision == 1.0 && r.per_category[&Category::Abdomen].recall == 1.0, || "fixture ratios".into())?;
    check(r.per_category[&Category::Chest].f1 == 1.0 && r.per_category[&Category::Other].f1 == 1.0, || "fixture f1".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..RANDOM_DATASETS {
        let n = rng.gen_range(1..30);
        let random_set = |rng: &mut ChaCha8Rng| {
            let bits: u8 = rng.gen_range(0..32);
            RegionSet::from_regions_or_other(Region::ALL.into_iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, r)| r))
        };
        let pairs: Vec<LabeledPrediction> = (0..n)
            .map(|i| {
                let (p, t) = (random_set(&mut rng), random_set(&mut rng));
                LabeledPrediction::new(i.to_string(), p, t)
            })
            .collect();
        let r = evaluate(&pairs).map_err(|e| e.to_string())?;
        for c in Category::ALL {
            check(r.per_category[&c].confusion == recount(&pairs, c), || format!("recount mismatch for {c:?}"))?;
        }
    }

    // (f1, support) per category, head to other
    let table_ct = [(0.921, 60), (0.939, 65), (0.984, 185), (0.976, 276), (0.996, 230), (0.865, 34)];
    let table_mr = [(0.928, 51), (0.800, 25), (0.959, 58), (0.964, 99), (0.891, 60), (0.945, 209)];
    let mut notes = Vec::new();
    for (name, rows, headline) in [("CT", table_ct, HEADLINE_F1_CT), ("MR", table_mr, HEADLINE_F1_MR)] {
        let mean = bodyregion::metrics::macro_f1(rows).unwrap();
        let weighted = bodyregion::metrics::weighted_f1(rows).unwrap();
        let naive_mean = rows.iter().map(|r| r.0).sum::<f64>() / 6.0;
        let naive_weighted = rows.iter().map(|r| r.0 * r.1 as f64).sum::<f64>() / rows.iter().map(|r| r.1 as f64).sum::<f64>();
        check((mean - naive_mean).abs() < 1e-12 && (weighted - naive_weighted).abs() < 1e-12, || "aggregate helpers".into())?;
        check((mean - headline).abs() <= F1_TOLERANCE, || format!("{name}: category-mean F1 {mean:.4} vs {headline}"))?;
        notes.push(format!("{name} mean {mean:.3} (headline {headline}), support-weighted {weighted:.3}"));
    }
    Ok(format!(
        "fixture exact, {RANDOM_DATASETS} recounts exact; table F1: {} (headline figures are the unweighted category mean)",
        notes.join("; ")
    ))
}

// ----------------------------------------------------------------- NIfTI

fn nifti_roundtrip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut files = 0;
    for dt in DataType::ALL {
        for endian in [Endianness::Little, Endianness::Big] {
            for ext in ["nii", "nii.gz"] {
                let dims = [rng.gen_range(2..9), rng.gen_range(2..9), rng.gen_range(2..9)];
                let n: usize = dims.iter().product();
                let spacing = [0.5f32, 0.8, 2.5].map(|s| (s * rng.gen_range(1..4) as f32) as f64);
                let voxels = match dt {
                    DataType::UInt8 => Voxels::Label((0..n).map(|_| rng.gen_range(0..=255)).collect()),
                    DataType::UInt16 => Voxels::Label((0..n).map(|_| rng.gen_range(0..=65535)).collect()),
                    DataType::Int32 => Voxels::Label((0..n).map(|_| rng.gen_range(0..=i32::MAX as u32)).collect()),
                    DataType::Int16 => Voxels::Intensity((0..n).map(|_| rng.gen_range(i16::MIN..=i16::MAX) as f64).collect()),
                    DataType::Float32 => Voxels::Intensity((0..n).map(|_| rng.gen::<f32>() as f64 * 4000.0 - 1000.0).map(|x| x as f32 as f64).collect()),
                    DataType::Float64 => Voxels::Intensity((0..n).map(|_| rng.gen::<f64>() * 1e6 - 5e5).collect()),
                };
                let kind = voxels.kind();
                let v = Volume::new(dims, spacing, dt, voxels).map_err(|e| e.to_string())?;
                let path = dir.path().join(format!("v{files}.{ext}"));
                write_nifti(&path, &v, endian).map_err(|e| e.to_string())?;
                let back = load_volume(&path, kind).map_err(|e| e.to_string())?;
                check(back.dims() == v.dims() && back.spacing() == v.spacing() && back.datatype() == dt, || format!("{dt:?} header"))?;
                let same = match (back.voxels(), v.voxels()) {
                    (Voxels::Label(a), Voxels::Label(b)) => a == b,
                    (Voxels::Intensity(a), Voxels::Intensity(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
                    _ => false,
                };
                check(same, || format!("{dt:?} {endian:?} {ext}: payload differs"))?;
                files += 1;
            }
        }
    }
    let _ = VolumeKind::Label;
    Ok(format!("{files} files over {} datatypes, both byte orders, plain and gzip", DataType::ALL.len()))
}

// ---------------------------------------------------------- label algebra

fn noisy_text() -> impl Strategy<Value = String> {
    let phrase = prop_oneof![
        Just("head"), Just("Neck"), Just("CHEST"), Just("abdomen"), Just("pelvis"), Just("lower abdomen"),
        Just("upper abdomen"), Just("thorax"), Just("pelvic"), Just("brain"), Just("cervical spine"), Just("belly"),
        Just("other"), Just("none"), Just("scan"), Just("of"), Just("the"), Just("left"), Just("forearm"), Just("and"),
        Just("with"), Just("knee"),
    ];
    let sep = prop_oneof![Just(" "), Just("+"), Just(", "), Just(" / "), Just("  "), Just("\t"), Just(";")];
    proptest::collection::vec((phrase, sep), 1..8).prop_map(|v| v.into_iter().map(|(p, s)| format!("{p}{s}")).collect())
}

fn label_algebra() -> Outcome {
    let mut sets = vec![RegionSet::other()];
    for bits in 1u8..32 {
        sets.push(RegionSet::from_regions(Region::ALL.into_iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, r)| r)).unwrap());
    }
    for s in &sets {
        let text = s.format();
        check(RegionSet::parse(&text).ok() == Some(*s), || format!("parse(format({text}))"))?;
        let order: Vec<Region> = s.regions().collect();
        check(order.windows(2).all(|w| w[0] < w[1]), || format!("{text} not in region order"))?;
    }
    let config = Config { cases: 2000, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm));
    runner
        .run(&noisy_text(), |text| {
            if let Ok(once) = normalize(&text) {
                prop_assert_eq!(normalize(&once.format()).unwrap(), once);
                prop_assert_eq!(RegionSet::parse(&once.format()).unwrap(), once);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    check(normalize("lower abdomen").map(|s| s.format()).ok().as_deref() == Some("abdomen"), || "lower abdomen".into())?;
    Ok(format!("{} label sets round-trip; normalize idempotent on 2000 noisy strings; \"lower abdomen\" -> abdomen", sets.len()))
}

// ---------------------------------------------------------------- prompts

const BOUNDARIES: [&str; 10] = [
    "Above the skull",
    "Below the chin / C3-C4",
    "Skull",
    "Manubrium sterni / T1-T2",
    "First rib / C6-C7",
    "Below the diaphragm / L1",
    "Above diaphragm / T8-T9",
    "Iliac crests upper edge / L3-L4",
    "Iliac crests upper edge / L3-L4",
    "Below symphysis pubis",
];

const PROSE: &[(&str, &str)] = &[
    ("The axial view shows lungs and heart; the liver is visible below.\nFINAL: chest+abdomen", "chest+abdomen"),
    ("FINAL: head", "head"),
    ("Final answer: Neck", "neck"),
    ("**FINAL:** Chest + Abdomen + Pelvis", "chest+abdomen+pelvis"),
    ("Reasoning: brain and skull fully visible.\nAnswer: head+neck", "head+neck"),
    ("Label = pelvis", "pelvis"),
    ("After reviewing all three panels I conclude:\nFINAL: abdomen+pelvis", "abdomen+pelvis"),
    ("Observations:\n- kidneys present\n- colon present\n\nFINAL: ABDOMEN", "abdomen"),
    ("The scan covers the thorax only.\nFINAL: chest", "chest"),
    ("No region reaches the visibility rule.\nFINAL: other", "other"),
    ("`FINAL: head+neck+chest+abdomen+pelvis`", "head+neck+chest+abdomen+pelvis"),
    ("Regions: chest+abdomen", "chest+abdomen"),
    ("At first glance it is chest.\nLooking at the coronal view again,\nFINAL: chest+abdomen", "chest+abdomen"),
    ("final: neck+chest", "neck+chest"),
    ("Final Answer: pelvis\n", "pelvis"),
    ("Summary of findings follows.\n\nFINAL:   abdomen  ", "abdomen"),
    ("Step 1: skull identified.\nStep 2: cervical vertebrae identified.\nFINAL: head+neck", "head+neck"),
    ("FINAL: Chest+Abdomen\nThank you.", "chest+abdomen"),
    ("The answer is given below.\nFINAL: neck", "neck"),
    ("FINAL: pelvis+abdomen", "abdomen+pelvis"),
    ("Visible: partial lungs, full liver.\nFINAL: chest+abdomen", "chest+abdomen"),
    ("I see the lower abdomen and pelvis.", "abdomen+pelvis"),
    ("### Result\nFINAL: head", "head"),
];

const UNPARSEABLE: [&str; UNPARSEABLE_FIXTURES] = [
    "I cannot determine the region.",
    "",
    "The image quality is too poor to decide.",
    "FINAL: unknown",
    "Sorry, I am unable to help with this request.",
];

fn prompt_completeness() -> Outcome {
    let mut prompts = 0;
    for taxonomy in [ct(), mr()] {
        let evidence = bodyregion::mllm::AnatomicalEvidence {
            present_structures: vec!["liver".into()],
            region_extents_cm: BTreeMap::from([(Region::Abdomen, 16.0)]),
        };
        for (mode, e) in [(PromptMode::Plain, None), (PromptMode::SegmentationAware, Some(&evidence))] {
            let p = build_prompt(&taxonomy, mode, e, 60).map_err(|e| e.to_string())?;
            for b in BOUNDARIES {
                check(p.system_text.contains(b), || format!("{} {mode:?}: missing {b:?}", taxonomy.modality()))?;
            }
            for r in Region::ALL {
                let (a, b) = region_boundaries(r);
                check(p.system_text.contains(a) && p.system_text.contains(b), || format!("{r} boundaries"))?;
            }
            check(p.system_text.contains("60%") && p.system_text.contains("visible"), || "visibility rule missing".into())?;
            check(Category::ALL.iter().all(|c| p.system_text.contains(c.as_str())), || "allowed labels".into())?;
            prompts += 1;
        }
    }
    check(PROSE.len() >= MIN_PROSE_FIXTURES, || "too few prose fixtures".into())?;
    let synonyms = bodyregion::labels::SynonymTable::builtin();
    for (raw, want) in PROSE {
        let got = parse_response(raw, synonyms).map_err(|e| format!("{raw:?}: {e}"))?;
        check(got.to_string() == *want, || format!("{raw:?}: got {got}, want {want}"))?;
    }
    for raw in UNPARSEABLE {
        check(matches!(parse_response(raw, synonyms), Err(MllmError::Unparseable(_))), || format!("{raw:?} parsed"))?;
    }
    Ok(format!(
        "{prompts} prompts carry all 10 boundary strings and the 60% rule; {} prose fixtures recovered; {UNPARSEABLE_FIXTURES} unparseable flagged",
        PROSE.len()
    ))
}

// ------------------------------------------------------------- mock MLLM

/// Region with the largest organ span, from the generator's bookkeeping.
fn mock_implied(spec: &PhantomSpec, taxonomy: &Taxonomy) -> RegionSet {
    let sp = spec.si_spacing_cm();
    let mut best: Option<(Region, f64)> = None;
    for r in Region::ALL {
        let group = taxonomy.organ_group(r);
        let ranges: Vec<(usize, usize)> = spec
            .structures
            .iter()
            .filter(|s| group.contains(&s.class_name))
            .filter_map(|s| slice_range(s.si_start_cm, s.si_end_cm, sp))
            .collect();
        if ranges.is_empty() {
            continue;
        }
        let lo = ranges.iter().map(|x| x.0).min().unwrap();
        let hi = ranges.iter().map(|x| x.1).max().unwrap();
        let e = (hi - lo + 1) as f64 * sp;
        if best.is_none_or(|(_, b)| e > b) {
            best = Some((r, e));
        }
    }
    best.map_or_else(RegionSet::other, |(r, _)| RegionSet::single(r))
}

fn mock_end_to_end() -> Outcome {
    let mut scans = 0;
    for (taxonomy, seed) in [(ct(), 31u64), (mr(), 32u64)] {
        let corpus = sample_corpus(&taxonomy, 42, seed);
        let client = MockClient::new(MockStrategy::LargestExtent);
        let config = MllmConfig::new(&taxonomy, PromptMode::SegmentationAware);
        let run = || {
            ordered_parallel_map(&corpus, 4, |(_, labels)| {
                let img = intensity_fill(labels, taxonomy.modality());
                classify_via_mllm(&client, "scan", &img, Some(labels), &taxonomy, &config).map(|r| (r.label, r.raw_response))
            })
        };
        let first: Vec<_> = run().into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        for (i, (spec, _)) in corpus.iter().enumerate() {
            let want = mock_implied(spec, &taxonomy);
            check(first[i].0 == want, || format!("{} phantom {i}: mock gave {}, expected {want}", taxonomy.modality(), first[i].0))?;
        }
        for _ in 1..MOCK_RUNS {
            let again: Vec<_> = run().into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            check(again == first, || "repeated run differs".into())?;
        }
        let digest = MockClient::new(MockStrategy::ImageDigest);
        let plain = MllmConfig::new(&taxonomy, PromptMode::Plain);
        let digest_run = || {
            ordered_parallel_map(&corpus, 4, |(_, labels)| {
                let img = intensity_fill(labels, taxonomy.modality());
                classify_via_mllm(&digest, "scan", &img, None, &taxonomy, &plain).map(|r| r.label).map_err(|e| e.to_string())
            })
        };
        let d1 = digest_run();
        for _ in 1..MOCK_RUNS {
            check(digest_run() == d1, || "image-digest mock not deterministic".into())?;
        }
        scans += corpus.len();
    }
    Ok(format!("{scans} scans, mock-implied labels reproduced, {MOCK_RUNS} runs identical"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("phantom oracle suite", phantom_oracle),
        ("rule-table conformance", rule_table),
        ("orientation invariance", orientation_invariance),
        ("metrics fidelity", metrics_fidelity),
        ("NIfTI round-trip", nifti_roundtrip),
        ("label algebra", label_algebra),
        ("prompt completeness", prompt_completeness),
        ("mock MLLM end-to-end", mock_end_to_end),
    ];
    let mut failed = 0;
    println!("\nacceptance criteria");
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2} s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2} s]");
            }
        }
    }
    println!(
        "SKIP  integration on real segmentations: optional and outside CI; needs user-supplied label maps (see README)"
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all gating criteria passed");
}
