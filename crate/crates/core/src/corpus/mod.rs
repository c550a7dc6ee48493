//! Corpus model: annotation spans, per-frame records and the feature identity
//! shared by every modality.

mod au;
mod expand;
mod histogram;
mod spans;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use au::{map_to_aus, AuCode, AuMappingTable, UnmappedTally, DEFAULT_AU_TABLE};
pub use expand::{expand_to_frames, expand_with_stats, Expansion, TierKind};
pub use histogram::{feature_counts, write_histograms_csv, CountHistogram};
pub use spans::{parse_annotations, write_spans, AnnotationSpan, SpanFormat};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("record {record}: {reason}")]
    Malformed { record: usize, reason: String },
    #[error("inverted span at record {record}")]
    InvertedSpan { record: usize },
    #[error("unknown span format `{0}` (expected span_csv or span_jsonl)")]
    UnknownFormat(String),
    #[error("AU mapping line {line}: {reason}")]
    BadMapping { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn canonicalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureCategory {
    Facial,
    Linguistic,
    Emotion,
    Au,
    Fer,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 5] = [
        FeatureCategory::Facial,
        FeatureCategory::Linguistic,
        FeatureCategory::Emotion,
        FeatureCategory::Au,
        FeatureCategory::Fer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureCategory::Facial => "facial",
            FeatureCategory::Linguistic => "linguistic",
            FeatureCategory::Emotion => "emotion",
            FeatureCategory::Au => "au",
            FeatureCategory::Fer => "fer",
        }
    }
}

impl fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown feature category `{s}`"))
    }
}

/// Canonical `(category, type, value)` identity of a feature.
///
/// Type and value are canonicalized on construction, so two spellings of the
/// same annotation (`"Eye  Brows"` / `"eye brows"`) compare equal. Ordering is
/// lexicographic over the category name, then type, then value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureId {
    category: FeatureCategory,
    kind: String,
    value: String,
}

impl FeatureId {
    pub fn new(category: FeatureCategory, kind: &str, value: &str) -> Self {
        Self {
            category,
            kind: canonicalize(kind),
            value: canonicalize(value),
        }
    }

    pub fn facial(kind: &str, value: &str) -> Self {
        Self::new(FeatureCategory::Facial, kind, value)
    }

    pub fn linguistic(kind: &str, value: &str) -> Self {
        Self::new(FeatureCategory::Linguistic, kind, value)
    }

    pub fn category(&self) -> FeatureCategory {
        self.category
    }

    /// The feature type (an annotation tier for facial/linguistic features).
    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    /// Short rendering used in report tables: `type=value` for annotation
    /// features, the bare label for action units, `category (lexicon)` for
    /// emotion labels.
    pub fn table_name(&self) -> String {
        match self.category {
            FeatureCategory::Au => self.value.clone(),
            FeatureCategory::Emotion => format!("{} ({})", self.value, self.kind),
            _ => format!("{}={}", self.kind, self.value),
        }
    }
}

impl Ord for FeatureId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.category
            .as_str()
            .cmp(other.category.as_str())
            .then_with(|| self.kind.cmp(&other.kind))
            .then_with(|| self.value.cmp(&other.value))
    }
}

impl PartialOrd for FeatureId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}={}", self.category, self.kind, self.value)
    }
}

// Serialized as a `[category, type, value]` triple.
impl Serialize for FeatureId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (self.category.as_str(), &self.kind, &self.value).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (category, kind, value): (String, String, String) = Deserialize::deserialize(deserializer)?;
        let category = category.parse().map_err(serde::de::Error::custom)?;
        Ok(FeatureId::new(category, &kind, &value))
    }
}

/// One video frame with every feature active on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub features: BTreeSet<FeatureId>,
    pub gloss_tokens: Vec<String>,
    pub translation: String,
}

impl FrameRecord {
    pub fn new(video_id: impl Into<String>, frame_index: u64) -> Self {
        Self {
            video_id: video_id.into(),
            frame_index,
            features: BTreeSet::new(),
            gloss_tokens: Vec::new(),
            translation: String::new(),
        }
    }

    pub fn has_category(&self, category: FeatureCategory) -> bool {
        self.features.iter().any(|f| f.category() == category)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalization_collapses_styling() {
        assert_eq!(
            FeatureId::facial("Eye  Brows ", " LOWERED"),
            FeatureId::facial("eye brows", "lowered")
        );
        assert_eq!(canonicalize("  head\tmvmt:   nod "), "head mvmt: nod");
    }

    #[test]
    fn ordering_is_by_category_name_first() {
        let au = FeatureId::new(FeatureCategory::Au, "au4", "brow lowerer");
        let facial = FeatureId::facial("a", "a");
        assert!(au < facial);
        assert!(FeatureId::facial("a", "b") < FeatureId::facial("b", "a"));
    }

    #[test]
    fn serde_triple_round_trip() {
        let f = FeatureId::facial("nose", "wrinkle");
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"["facial","nose","wrinkle"]"#);
        let back: FeatureId = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn table_names() {
        assert_eq!(FeatureId::facial("nose", "wrinkle").table_name(), "nose=wrinkle");
        assert_eq!(
            FeatureId::new(FeatureCategory::Emotion, "liwc", "negative emotion").table_name(),
            "negative emotion (liwc)"
        );
    }
}
