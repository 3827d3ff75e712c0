use std::path::Path;

use bodyregion::analysis::{self, AnalysisOptions};
use bodyregion::labels::RegionSet;
use bodyregion::metrics::{evaluate as score, export_report, format_table, LabeledPrediction};
use bodyregion::mllm::{self, render_views as render, PromptMode, RenderOptions};
use bodyregion::phantoms::{intensity_fill, sample_corpus};
use bodyregion::volume::{self, load_volume, write_nifti, Endianness, VolumeError, VolumeKind};
use serde::Serialize;

use crate::args::{EvaluateArgs, GenerateArgs, InspectArgs, PhantomAction, PhantomCommand, PromptArgs, PromptModeArg, RenderArgs, TaxonomyAction, TaxonomyCommand};
use crate::io::{create_dir, load_taxonomy, read_label_table, scan_id, write_file};
use crate::CliError;

fn volume_error(path: &Path, e: VolumeError) -> CliError {
    match e {
        VolumeError::Io(_) | VolumeError::MalformedHeader(_) | VolumeError::DimensionMismatch { .. } => CliError::io(path, e),
        other => CliError::BadConfig(format!("{}: {other}", path.display())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let pred = read_label_table(&a.pred)?;
    let truth = read_label_table(&a.truth)?;
    let missing: Vec<&String> = truth.keys().filter(|k| !pred.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(CliError::BadConfig(format!(
            "{} ground-truth scans have no prediction (first: {})",
            missing.len(),
            missing[0]
        )));
    }
    let extra = pred.keys().filter(|k| !truth.contains_key(*k)).count();
    if extra > 0 {
        log::warn!("{extra} predictions have no ground truth and are ignored");
    }
    let pairs: Vec<LabeledPrediction> = truth
        .iter()
        .map(|(id, (t, _))| {
            let (p, flags) = &pred[id];
            let mut lp = LabeledPrediction::new(id.clone(), *p, *t);
            lp.flags = flags.clone();
            lp
        })
        .collect();
    let report = score(&pairs).map_err(|e| CliError::BadConfig(e.to_string()))?;
    create_dir(&a.out)?;
    export_report(&report, &a.out).map_err(|e| CliError::io(&a.out, e))?;
    print!("{}", format_table(&report));
    Ok(())
}

#[derive(Serialize)]
struct InspectReport<'a> {
    scan_id: String,
    path: &'a Path,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    si_spacing_cm: f64,
    classes: Vec<ClassRow>,
    measurements: Option<analysis::StreamMeasurements>,
    empty_volume: bool,
}

#[derive(Serialize)]
struct ClassRow {
    id: u32,
    name: Option<String>,
    voxels: u64,
    min_slice: usize,
    max_slice: usize,
}

pub fn inspect(a: InspectArgs) -> Result<(), CliError> {
    let tax = load_taxonomy(&a.taxonomy)?;
    let v = load_volume(&a.input, VolumeKind::Label).map_err(|e| volume_error(&a.input, e))?;
    let canonical = volume::canonicalize(&v).map_err(|e| volume_error(&a.input, e))?;
    let options = AnalysisOptions {
        min_voxels: a.min_voxels,
        ..Default::default()
    };
    let (classes, measurements, si) = match volume::build_presence_index(&canonical) {
        Ok(index) => {
            let rows = index
                .per_class
                .iter()
                .map(|(&id, p)| ClassRow {
                    id,
                    name: tax.class_name(id).map(str::to_string),
                    voxels: p.voxel_count,
                    min_slice: p.min_slice,
                    max_slice: p.max_slice,
                })
                .collect();
            (rows, analysis::measure(&index, &tax, &options).ok(), index.si_spacing_cm)
        }
        Err(VolumeError::EmptyVolume) => (Vec::new(), None, canonical.spacing()[2] / 10.0),
        Err(e) => return Err(volume_error(&a.input, e)),
    };
    let report = InspectReport {
        scan_id: scan_id(&a.input),
        path: &a.input,
        dims: canonical.dims(),
        spacing_mm: canonical.spacing(),
        si_spacing_cm: si,
        empty_volume: measurements.is_none(),
        classes,
        measurements,
    };
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&report).expect("report serializes"))
}

pub fn render_views(a: RenderArgs) -> Result<(), CliError> {
    let v = load_volume(&a.input, VolumeKind::Intensity).map_err(|e| volume_error(&a.input, e))?;
    let canonical = volume::canonicalize(&v).map_err(|e| volume_error(&a.input, e))?;
    let mut options = RenderOptions::new(a.modality);
    options.window = a.window;
    options.projection = a.projection.into();
    options.panel_height = a.height.max(1);
    let image = render(&canonical, &options).map_err(|e| CliError::BadConfig(e.to_string()))?;
    write_file(&a.out, image.to_png())
}

pub fn build_prompt(a: PromptArgs) -> Result<(), CliError> {
    let tax = load_taxonomy(&a.taxonomy)?;
    let mode = match a.mode {
        PromptModeArg::Plain => PromptMode::Plain,
        PromptModeArg::SegAware => PromptMode::SegmentationAware,
    };
    let evidence = match &a.labels {
        Some(p) => {
            let v = load_volume(p, VolumeKind::Label).map_err(|e| volume_error(p, e))?;
            Some(mllm::evidence_from_labels(&v, &tax, &AnalysisOptions::default()).map_err(|e| CliError::BadConfig(e.to_string()))?)
        }
        None => None,
    };
    let bundle = mllm::build_prompt(&tax, mode, evidence.as_ref(), a.visibility).map_err(|e| CliError::BadConfig(e.to_string()))?;
    emit(a.out.as_deref(), &bundle.to_text())
}

pub fn taxonomy(a: TaxonomyCommand) -> Result<(), CliError> {
    match a.action {
        TaxonomyAction::Dump(t) => {
            print!("{}", load_taxonomy(&t)?.dump());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SpecLine<'a> {
    scan_id: &'a str,
    label: RegionSet,
    #[serde(flatten)]
    spec: &'a bodyregion::phantoms::PhantomSpec,
}

pub fn phantom(a: PhantomCommand) -> Result<(), CliError> {
    let PhantomAction::Generate(g) = a.action;
    generate(g)
}

fn generate(g: GenerateArgs) -> Result<(), CliError> {
    let tax = load_taxonomy(&g.taxonomy)?;
    create_dir(&g.out)?;
    let mut truth = String::from("scan_id,label\n");
    let mut specs = String::new();
    for (i, (spec, labels)) in sample_corpus(&tax, g.count, g.seed).iter().enumerate() {
        let id = format!("phantom_{i:04}_{}", spec.scenario);
        let file = format!("{id}.nii.gz");
        let path = g.out.join(&file);
        write_nifti(&path, labels, Endianness::Little).map_err(|e| CliError::io(&path, e))?;
        if g.intensity {
            let img = g.out.join("images").join(&file);
            create_dir(img.parent().expect("has parent"))?;
            write_nifti(&img, &intensity_fill(labels, tax.modality()), Endianness::Little).map_err(|e| CliError::io(&img, e))?;
        }
        truth.push_str(&format!("{id},{}\n", spec.expected_label));
        specs.push_str(&serde_json::to_string(&SpecLine { scan_id: &id, label: spec.expected_label, spec }).expect("spec serializes"));
        specs.push('\n');
    }
    write_file(&g.out.join("truth.csv"), truth)?;
    write_file(&g.out.join("specs.jsonl"), specs)?;
    eprintln!("wrote {} phantoms to {}", g.count, g.out.display());
    Ok(())
}
