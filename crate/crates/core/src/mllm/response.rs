use std::sync::OnceLock;

use regex::Regex;

use super::MllmError;
use crate::labels::{RegionSet, SynonymTable};

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:final(?:\s+answer)?|answer|labels?|regions?)\s*[:=]\s*(.+)$").expect("valid regex")
    })
}

fn to_label(text: &str, synonyms: &SynonymTable) -> Option<RegionSet> {
    let (tokens, _) = synonyms.tokenize(text);
    if tokens.is_empty() {
        return None;
    }
    synonyms.normalize(text).ok()
}

/// Extracts the label from a model answer.
///
/// The last line carrying an answer marker wins. Without one, the last line
/// that names a region is used.
pub fn parse_response(raw: &str, synonyms: &SynonymTable) -> Result<RegionSet, MllmError> {
    let lines: Vec<String> = raw
        .lines()
        .map(|l| l.replace(['*', '`', '_'], " ").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let marked = lines
        .iter()
        .rev()
        .find_map(|l| marker().captures(l).map(|c| c[1].to_string()));
    let label = match marked {
        Some(text) => to_label(&text, synonyms),
        None => lines
            .iter()
            .rev()
            .find(|l| synonyms.mentions_region(l))
            .and_then(|l| to_label(l, synonyms)),
    };
    label.ok_or_else(|| MllmError::Unparseable(raw.chars().take(200).collect()))
}
