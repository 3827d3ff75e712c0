use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bodyregion::decision::ResultFlags;
use bodyregion::labels::RegionSet;
use bodyregion::taxonomy::Taxonomy;
use serde::Deserialize;

use crate::args::TaxonomyArgs;
use crate::CliError;

pub fn load_taxonomy(args: &TaxonomyArgs) -> Result<Taxonomy, CliError> {
    match &args.taxonomy {
        None => Ok(Taxonomy::builtin(args.modality)),
        Some(p) => Taxonomy::load_override(args.modality, p).map_err(|e| CliError::BadConfig(format!("{}: {e}", p.display()))),
    }
}

fn is_nifti(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".nii") || name.ends_with(".nii.gz")
}

/// Files as given plus NIfTI files directly inside given directories,
/// sorted and deduplicated.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in fs::read_dir(p).map_err(|e| CliError::io(p, e))? {
                let path = entry.map_err(|e| CliError::io(p, e))?.path();
                if path.is_file() && is_nifti(&path) {
                    out.push(path);
                }
            }
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(CliError::io(p, "no such file or directory"));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// File name without the NIfTI extension.
pub fn scan_id(p: &Path) -> String {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(name)
        .to_string()
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Deserialize)]
struct Row {
    scan_id: String,
    label: String,
    #[serde(default)]
    flags: ResultFlags,
}

/// Reads `scan_id -> (label, flags)` from CSV (header `scan_id,label`) or
/// from JSONL records with `scan_id` and `label` fields, such as the
/// output of `classify`.
pub fn read_label_table(path: &Path) -> Result<BTreeMap<String, (RegionSet, ResultFlags)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, e: String| CliError::BadConfig(format!("{}:{line}: {e}", path.display()));
    let jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    let mut rows = Vec::new();
    if jsonl {
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            rows.push((i + 1, serde_json::from_str::<Row>(line).map_err(|e| bad(i + 1, e.to_string()))?));
        }
    } else {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            rows.push((i + 2, row.map_err(|e| bad(i + 2, e.to_string()))?));
        }
    }
    let mut out = BTreeMap::new();
    for (line, row) in rows {
        let label = row.label.parse::<RegionSet>().map_err(|e| bad(line, e.to_string()))?;
        if out.insert(row.scan_id.clone(), (label, row.flags)).is_some() {
            return Err(bad(line, format!("duplicate scan id {:?}", row.scan_id)));
        }
    }
    Ok(out)
}
