//! Per-category binary metrics over compound labels.
//!
//! A named region is positive for a scan when it is in the label set.
//! `other` is positive only when the label set is exactly `{other}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::ResultFlags;
use crate::labels::{Category, RegionSet};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no scans to evaluate")]
    EmptyDataset,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub scan_id: String,
    pub predicted: RegionSet,
    pub truth: RegionSet,
    #[serde(default)]
    pub flags: ResultFlags,
}

impl LabeledPrediction {
    pub fn new(scan_id: impl Into<String>, predicted: RegionSet, truth: RegionSet) -> Self {
        LabeledPrediction {
            scan_id: scan_id.into(),
            predicted,
            truth,
            flags: ResultFlags::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    #[serde(flatten)]
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the metric had a zero denominator and was reported as 0.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub precision_undefined: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub recall_undefined: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub f1_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl CategoryMetrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let (accuracy, _) = ratio(c.tp + c.tn, c.total());
        let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
        let (f1, f1_undefined) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
        CategoryMetrics {
            confusion: c,
            accuracy,
            precision,
            recall,
            f1,
            support: c.tp + c.fn_,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_category: BTreeMap<Category, CategoryMetrics>,
    /// Support-weighted mean F1 over categories with support > 0.
    pub weighted_f1: f64,
    /// Same, with `other` left out.
    pub weighted_f1_excluding_other: Option<f64>,
    /// Unweighted mean F1 over categories with support > 0.
    pub macro_f1: f64,
    pub n_scans: u64,
    pub parse_failures: u64,
    pub empty_volumes: u64,
}

/// Whether `category` is positive for a label set.
pub fn is_positive(label: RegionSet, category: Category) -> bool {
    match category.region() {
        Some(r) => label.contains(r),
        None => label.is_other(),
    }
}

/// `Σ f1·support / Σ support` over entries with support > 0.
pub fn weighted_f1<I: IntoIterator<Item = (f64, u64)>>(entries: I) -> Option<f64> {
    let (num, den) = entries
        .into_iter()
        .filter(|&(_, s)| s > 0)
        .fold((0.0, 0u64), |(n, d), (f, s)| (n + f * s as f64, d + s));
    (den > 0).then(|| num / den as f64)
}

/// Unweighted mean F1 over entries with support > 0.
pub fn macro_f1<I: IntoIterator<Item = (f64, u64)>>(entries: I) -> Option<f64> {
    let f: Vec<f64> = entries.into_iter().filter(|&(_, s)| s > 0).map(|(f, _)| f).collect();
    (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
}

pub fn evaluate(pairs: &[LabeledPrediction]) -> Result<MetricsReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let mut counts: BTreeMap<Category, Confusion> =
        Category::ALL.into_iter().map(|c| (c, Confusion::default())).collect();
    for p in pairs {
        for (&c, conf) in counts.iter_mut() {
            conf.record(is_positive(p.predicted, c), is_positive(p.truth, c));
        }
    }
    let per_category: BTreeMap<Category, CategoryMetrics> = counts
        .into_iter()
        .map(|(c, conf)| (c, CategoryMetrics::from_confusion(conf)))
        .collect();
    let entries = || per_category.values().map(|m| (m.f1, m.support));
    let named = per_category
        .iter()
        .filter(|(c, _)| **c != Category::Other)
        .map(|(_, m)| (m.f1, m.support));
    Ok(MetricsReport {
        weighted_f1: weighted_f1(entries()).unwrap_or(0.0),
        weighted_f1_excluding_other: weighted_f1(named),
        macro_f1: macro_f1(entries()).unwrap_or(0.0),
        per_category,
        n_scans: pairs.len() as u64,
        parse_failures: pairs.iter().filter(|p| p.flags.parse_failure).count() as u64,
        empty_volumes: pairs.iter().filter(|p| p.flags.empty_volume).count() as u64,
    })
}

/// Fixed-width table with rows in category order and three decimals.
pub fn format_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>8} {:>9} {:>8} {:>8} {:>7}",
        "Region", "Accuracy", "Precision", "Recall", "F1", "Support"
    );
    for c in Category::ALL {
        let m = &report.per_category[&c];
        let flag = |u: bool| if u { "*" } else { " " };
        let _ = writeln!(
            out,
            "{:<8} {:>8.3} {:>8.3}{} {:>7.3}{} {:>7.3}{} {:>7}",
            c.as_str(),
            m.accuracy,
            m.precision,
            flag(m.precision_undefined),
            m.recall,
            flag(m.recall_undefined),
            m.f1,
            flag(m.f1_undefined),
            m.support
        );
    }
    let _ = writeln!(out, "weighted F1 {:.3}", report.weighted_f1);
    if let Some(w) = report.weighted_f1_excluding_other {
        let _ = writeln!(out, "weighted F1 (named regions) {w:.3}");
    }
    let _ = writeln!(out, "macro F1 {:.3}", report.macro_f1);
    let _ = writeln!(out, "scans {}", report.n_scans);
    if report.per_category.values().any(|m| m.precision_undefined || m.recall_undefined || m.f1_undefined) {
        let _ = writeln!(out, "* zero denominator, reported as 0");
    }
    out
}

/// Writes `metrics.json` and `metrics.txt` into `dir`.
pub fn export_report(report: &MetricsReport, dir: &Path) -> Result<(PathBuf, PathBuf), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let json = dir.join("metrics.json");
    let table = dir.join("metrics.txt");
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(&json, text)?;
    std::fs::write(&table, format_table(report))?;
    Ok((json, table))
}
