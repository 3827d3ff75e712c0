//! Region labels: the five anatomical regions, the `other` rejection class and
//! compound labels such as `chest+abdomen`.
//!
//! Three entry points turn text into a [`RegionSet`]:
//!
//! - [`RegionSet::parse`] is strict and only accepts canonical tokens. It is
//!   used for ground-truth files.
//! - [`normalize`] is lenient: it maps synonyms (`thorax`, `lower abdomen`),
//!   drops unknown qualifiers and falls back to `other`. It is used for model
//!   answers.
//! - [`SynonymTable::normalize`] is the same with a custom synonym table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelError {
    #[error("empty label")]
    EmptyInput,
    #[error("unknown region token `{0}`")]
    UnknownToken(String),
    #[error("`other` cannot be combined with named regions: `{0}`")]
    MixedOther(String),
    #[error("invalid synonym table: {0}")]
    InvalidSynonyms(String),
}

/// An anatomical body region, ordered cranio-caudally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Head,
    Neck,
    Chest,
    Abdomen,
    Pelvis,
}

impl Region {
    /// All regions in head-to-feet order.
    pub const ALL: [Region; 5] = [
        Region::Head,
        Region::Neck,
        Region::Chest,
        Region::Abdomen,
        Region::Pelvis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Head => "head",
            Region::Neck => "neck",
            Region::Chest => "chest",
            Region::Abdomen => "abdomen",
            Region::Pelvis => "pelvis",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Region::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| LabelError::UnknownToken(s.to_string()))
    }
}

/// One of the six evaluation categories: a region, or `other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Head,
    Neck,
    Chest,
    Abdomen,
    Pelvis,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Head,
        Category::Neck,
        Category::Chest,
        Category::Abdomen,
        Category::Pelvis,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Other => "other",
            c => c.region().map(Region::as_str).unwrap_or_default(),
        }
    }

    pub fn region(self) -> Option<Region> {
        match self {
            Category::Head => Some(Region::Head),
            Category::Neck => Some(Region::Neck),
            Category::Chest => Some(Region::Chest),
            Category::Abdomen => Some(Region::Abdomen),
            Category::Pelvis => Some(Region::Pelvis),
            Category::Other => None,
        }
    }
}

impl From<Region> for Category {
    fn from(r: Region) -> Self {
        match r {
            Region::Head => Category::Head,
            Region::Neck => Category::Neck,
            Region::Chest => Category::Chest,
            Region::Abdomen => Category::Abdomen,
            Region::Pelvis => Category::Pelvis,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const OTHER_BIT: u8 = 1 << 5;

/// A validated, non-empty compound label.
///
/// Either exactly `{other}` or a non-empty subset of the five regions. Always
/// serialized lowercase, `+`-joined, in head-to-feet order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionSet(u8);

impl RegionSet {
    pub fn other() -> Self {
        RegionSet(OTHER_BIT)
    }

    /// Set of named regions; `None` if the iterator is empty.
    pub fn from_regions<I: IntoIterator<Item = Region>>(regions: I) -> Option<Self> {
        let bits = regions.into_iter().fold(0u8, |acc, r| acc | r.bit());
        (bits != 0).then_some(RegionSet(bits))
    }

    /// Named regions, falling back to `{other}` when empty.
    pub fn from_regions_or_other<I: IntoIterator<Item = Region>>(regions: I) -> Self {
        Self::from_regions(regions).unwrap_or_else(Self::other)
    }

    pub fn single(region: Region) -> Self {
        RegionSet(region.bit())
    }

    pub fn is_other(self) -> bool {
        self.0 == OTHER_BIT
    }

    pub fn contains(self, region: Region) -> bool {
        self.0 & region.bit() != 0
    }

    /// Category membership as used by the evaluation protocol: a region is
    /// positive when it is in the set, `other` only when the set is `{other}`.
    pub fn has_category(self, category: Category) -> bool {
        match category.region() {
            Some(r) => self.contains(r),
            None => self.is_other(),
        }
    }

    /// Regions in head-to-feet order (empty for `{other}`).
    pub fn regions(self) -> impl Iterator<Item = Region> {
        Region::ALL.into_iter().filter(move |r| self.contains(*r))
    }

    pub fn len(self) -> usize {
        if self.is_other() {
            1
        } else {
            self.0.count_ones() as usize
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// Strict parse of a canonical `+`-joined label. Synonyms are rejected.
    pub fn parse(s: &str) -> Result<Self, LabelError> {
        let trimmed = s.trim();
        if trimmed.is_empty() {
            return Err(LabelError::EmptyInput);
        }
        let mut bits = 0u8;
        let mut saw_other = false;
        for token in trimmed.split('+').map(str::trim) {
            if token == "other" {
                saw_other = true;
            } else {
                bits |= token.parse::<Region>()?.bit();
            }
        }
        match (saw_other, bits) {
            (true, 0) => Ok(Self::other()),
            (true, _) => Err(LabelError::MixedOther(trimmed.to_string())),
            (false, b) => Ok(RegionSet(b)),
        }
    }

    /// Canonical serialization, e.g. `abdomen+pelvis`.
    pub fn format(self) -> String {
        if self.is_other() {
            return "other".to_string();
        }
        self.regions()
            .map(Region::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for RegionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

impl fmt::Debug for RegionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RegionSet({})", self.format())
    }
}

impl FromStr for RegionSet {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for RegionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.format())
    }
}

impl<'de> Deserialize<'de> for RegionSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Target of a synonym entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelToken {
    Region(Region),
    Other,
}

/// Result of lenient normalization, including what was thrown away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub label: RegionSet,
    /// Words that matched no synonym entry.
    pub dropped: Vec<String>,
}

/// Phrase-to-region map used by [`normalize`].
#[derive(Debug, Clone)]
pub struct SynonymTable {
    phrases: BTreeMap<Vec<String>, LabelToken>,
    max_words: usize,
}

#[derive(Deserialize)]
struct SynonymFile {
    #[serde(default)]
    synonyms: BTreeMap<String, String>,
}

const BUILTIN_SYNONYMS: &str = include_str!("../data/synonyms.toml");

fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

impl SynonymTable {
    pub fn builtin() -> &'static SynonymTable {
        static TABLE: OnceLock<SynonymTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SynonymTable::from_toml_str(BUILTIN_SYNONYMS).expect("builtin synonym table is valid")
        })
    }

    /// Parses a `[synonyms]` table. Canonical tokens are always present, even
    /// if the file omits them.
    pub fn from_toml_str(s: &str) -> Result<Self, LabelError> {
        let file: SynonymFile =
            toml::from_str(s).map_err(|e| LabelError::InvalidSynonyms(e.to_string()))?;
        let mut table = SynonymTable {
            phrases: BTreeMap::new(),
            max_words: 1,
        };
        for r in Region::ALL {
            table.insert(r.as_str(), LabelToken::Region(r))?;
        }
        table.insert("other", LabelToken::Other)?;
        for (phrase, target) in file.synonyms {
            let token = if target == "other" {
                LabelToken::Other
            } else {
                LabelToken::Region(
                    target
                        .parse()
                        .map_err(|_| LabelError::InvalidSynonyms(format!("`{phrase}` -> `{target}`")))?,
                )
            };
            table.insert(&phrase, token)?;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, LabelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabelError::InvalidSynonyms(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn insert(&mut self, phrase: &str, token: LabelToken) -> Result<(), LabelError> {
        let key = words(phrase);
        if key.is_empty() {
            return Err(LabelError::InvalidSynonyms(format!("blank phrase `{phrase}`")));
        }
        self.max_words = self.max_words.max(key.len());
        self.phrases.insert(key, token);
        Ok(())
    }

    /// Greedy longest-phrase tokenization. Returns matched tokens and the
    /// unmatched words.
    pub fn tokenize(&self, text: &str) -> (Vec<LabelToken>, Vec<String>) {
        let ws = words(text);
        let mut tokens = Vec::new();
        let mut unknown = Vec::new();
        let mut i = 0;
        while i < ws.len() {
            let longest = self.max_words.min(ws.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|n| self.phrases.get(&ws[i..i + n]).map(|t| (n, *t)));
            match hit {
                Some((n, token)) => {
                    tokens.push(token);
                    i += n;
                }
                None => {
                    unknown.push(ws[i].clone());
                    i += 1;
                }
            }
        }
        (tokens, unknown)
    }

    /// Lenient normalization of free text into a label.
    pub fn normalize_detailed(&self, text: &str) -> Result<Normalized, LabelError> {
        if text.trim().is_empty() {
            return Err(LabelError::EmptyInput);
        }
        let (tokens, dropped) = self.tokenize(text);
        let regions = tokens.iter().filter_map(|t| match t {
            LabelToken::Region(r) => Some(*r),
            LabelToken::Other => None,
        });
        let label = RegionSet::from_regions_or_other(regions);
        if !dropped.is_empty() && !label.is_other() {
            log::warn!("dropping unrecognized label words {dropped:?} in {text:?}");
        }
        if !label.is_other() && tokens.contains(&LabelToken::Other) {
            log::warn!("ignoring `other` next to named regions in {text:?}");
        }
        Ok(Normalized { label, dropped })
    }

    pub fn normalize(&self, text: &str) -> Result<RegionSet, LabelError> {
        self.normalize_detailed(text).map(|n| n.label)
    }

    /// True when the text contains at least one named-region phrase.
    pub fn mentions_region(&self, text: &str) -> bool {
        self.tokenize(text)
            .0
            .iter()
            .any(|t| matches!(t, LabelToken::Region(_)))
    }
}

/// Normalizes free text with the builtin synonym table.
pub fn normalize(text: &str) -> Result<RegionSet, LabelError> {
    SynonymTable::builtin().normalize(text)
}
