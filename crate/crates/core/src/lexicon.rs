//! Word/prefix lexica in the LIWC/Empath style and translation tagging.
//!
//! A lexicon file has one rule per line, `pattern : cat1, cat2`. A pattern
//! is a lowercase word or a prefix ending in a single `*`. Lines starting
//! with `#` and blank lines are ignored; repeated patterns merge their
//! categories.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{canonicalize, FeatureCategory, FeatureId, FrameRecord};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: interior wildcard in `{pattern}`")]
    InteriorWildcard { line: usize, pattern: String },
    #[error("line {line}: empty category")]
    EmptyCategory { line: usize },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("min_frames must be at least 1, got {0}")]
    BadThreshold(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A category qualified by the lexicon that defined it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmotionLabel {
    pub lexicon: String,
    pub category: String,
}

impl EmotionLabel {
    pub fn new(lexicon: &str, category: &str) -> Self {
        Self {
            lexicon: canonicalize(lexicon),
            category: canonicalize(category),
        }
    }

    pub fn feature(&self) -> FeatureId {
        FeatureId::new(FeatureCategory::Emotion, &self.lexicon, &self.category)
    }

    pub fn from_feature(feature: &FeatureId) -> Option<Self> {
        (feature.category() == FeatureCategory::Emotion).then(|| Self::new(feature.kind(), feature.value()))
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.category, self.lexicon)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub name: String,
    exact: BTreeMap<String, BTreeSet<String>>,
    /// Keyed by the prefix without its trailing `*`.
    prefixes: BTreeMap<String, BTreeSet<String>>,
    max_prefix_len: usize,
}

impl Lexicon {
    pub fn new(name: &str) -> Self {
        Self {
            name: canonicalize(name),
            ..Default::default()
        }
    }

    pub fn load<R: Read>(name: &str, input: R) -> Result<Self, LexiconError> {
        let mut lexicon = Lexicon::new(name);
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (pattern, categories) = line.split_once(':').ok_or_else(|| LexiconError::Malformed {
                line: line_no,
                reason: "expected `pattern : categories`".into(),
            })?;
            let categories: Vec<&str> = categories.split(',').map(str::trim).collect();
            if categories.iter().any(|c| c.is_empty()) {
                return Err(LexiconError::EmptyCategory { line: line_no });
            }
            lexicon.insert_rule(pattern, &categories, line_no)?;
        }
        Ok(lexicon)
    }

    /// Add one rule; `line` is only used for error reporting.
    pub fn insert_rule(&mut self, pattern: &str, categories: &[&str], line: usize) -> Result<(), LexiconError> {
        let pattern = pattern.trim().to_lowercase();
        if pattern.is_empty() || pattern == "*" {
            return Err(LexiconError::Malformed {
                line,
                reason: "empty pattern".into(),
            });
        }
        if pattern.chars().any(char::is_whitespace) {
            return Err(LexiconError::Malformed {
                line,
                reason: format!("pattern `{pattern}` contains whitespace"),
            });
        }
        let stars = pattern.matches('*').count();
        if stars > 1 || (stars == 1 && !pattern.ends_with('*')) {
            return Err(LexiconError::InteriorWildcard { line, pattern });
        }
        let mut cats = BTreeSet::new();
        for c in categories {
            let c = canonicalize(c);
            if c.is_empty() {
                return Err(LexiconError::EmptyCategory { line });
            }
            cats.insert(c);
        }
        if cats.is_empty() {
            return Err(LexiconError::EmptyCategory { line });
        }
        match pattern.strip_suffix('*') {
            Some(prefix) => {
                self.max_prefix_len = self.max_prefix_len.max(prefix.len());
                self.prefixes.entry(prefix.to_string()).or_default().extend(cats);
            }
            None => self.exact.entry(pattern).or_default().extend(cats),
        }
        Ok(())
    }

    pub fn pattern_count(&self) -> usize {
        self.exact.len() + self.prefixes.len()
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.exact
            .values()
            .chain(self.prefixes.values())
            .flatten()
            .map(String::as_str)
            .collect()
    }

    /// Categories of every pattern matching a normalized token.
    fn matches<'a>(&'a self, token: &str, out: &mut BTreeSet<&'a str>) {
        if let Some(cats) = self.exact.get(token) {
            out.extend(cats.iter().map(String::as_str));
        }
        for (end, _) in token.char_indices().skip(1).chain(std::iter::once((token.len(), ' '))) {
            if end > self.max_prefix_len {
                break;
            }
            if let Some(cats) = self.prefixes.get(&token[..end]) {
                out.extend(cats.iter().map(String::as_str));
            }
        }
    }
}

/// Lowercase and split on every non-alphabetic character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

pub fn tag_text(translation: &str, lexica: &[Lexicon]) -> BTreeSet<EmotionLabel> {
    let tokens: Vec<String> = tokenize(translation).collect();
    let mut labels = BTreeSet::new();
    for lexicon in lexica {
        let mut cats = BTreeSet::new();
        for token in &tokens {
            lexicon.matches(token, &mut cats);
        }
        labels.extend(cats.into_iter().map(|c| EmotionLabel {
            lexicon: lexicon.name.clone(),
            category: c.to_string(),
        }));
    }
    labels
}

/// Labels with at least `min_frames` frames. Fewer than the threshold is
/// dropped, so a label with exactly `min_frames` frames survives.
pub fn apply_threshold(
    label_frame_counts: &BTreeMap<EmotionLabel, u64>,
    min_frames: u64,
) -> Result<BTreeSet<EmotionLabel>, LexiconError> {
    if min_frames < 1 {
        return Err(LexiconError::BadThreshold(min_frames));
    }
    Ok(label_frame_counts
        .iter()
        .filter(|(_, &n)| n >= min_frames)
        .map(|(l, _)| l.clone())
        .collect())
}

/// Result of tagging a frame table.
#[derive(Debug, Clone, Default)]
pub struct TaggedCorpus {
    pub frames: Vec<FrameRecord>,
    /// Frame counts for every label found, before thresholding.
    pub label_counts: BTreeMap<EmotionLabel, u64>,
    pub retained: BTreeSet<EmotionLabel>,
}

/// Attach the labels of each frame's translation to the frame, then drop
/// labels below `min_frames` from every frame.
pub fn tag_frames(frames: &[FrameRecord], lexica: &[Lexicon], min_frames: u64) -> Result<TaggedCorpus, LexiconError> {
    let mut cache: HashMap<&str, BTreeSet<EmotionLabel>> = HashMap::new();
    let mut label_counts: BTreeMap<EmotionLabel, u64> = BTreeMap::new();
    let mut per_frame = Vec::with_capacity(frames.len());
    for frame in frames {
        let labels = cache
            .entry(frame.translation.as_str())
            .or_insert_with(|| tag_text(&frame.translation, lexica));
        for l in labels.iter() {
            *label_counts.entry(l.clone()).or_default() += 1;
        }
        per_frame.push(labels.clone());
    }

    let retained = apply_threshold(&label_counts, min_frames)?;
    let frames = frames
        .iter()
        .zip(per_frame)
        .map(|(frame, labels)| {
            let mut out = frame.clone();
            out.features.extend(
                labels
                    .iter()
                    .filter(|l| retained.contains(*l))
                    .map(EmotionLabel::feature),
            );
            out
        })
        .collect();
    Ok(TaggedCorpus {
        frames,
        label_counts,
        retained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex(name: &str, text: &str) -> Lexicon {
        Lexicon::load(name, text.as_bytes()).unwrap()
    }

    fn label(lexicon: &str, category: &str) -> EmotionLabel {
        EmotionLabel::new(lexicon, category)
    }

    #[test]
    fn load_rule() {
        let l = lex("liwc", "happi* : positive_emotion, affect\n");
        assert_eq!(l.pattern_count(), 1);
        assert_eq!(
            l.prefixes["happi"],
            ["affect", "positive_emotion"].map(String::from).into()
        );
    }

    #[test]
    fn duplicate_patterns_merge() {
        let l = lex("x", "# comment\nsad : sadness\n\nsad : negative\n");
        assert_eq!(l.pattern_count(), 1);
        assert_eq!(l.exact["sad"].len(), 2);
    }

    #[test]
    fn load_errors() {
        let err = Lexicon::load("x", &b"ha*ppy : x\n"[..]).unwrap_err();
        assert!(err.to_string().contains("interior wildcard"), "{err}");
        assert!(matches!(
            Lexicon::load("x", &b"sad : \n"[..]),
            Err(LexiconError::EmptyCategory { line: 1 })
        ));
        assert!(matches!(
            Lexicon::load("x", &b"ok : a\nsad : a,,b\n"[..]),
            Err(LexiconError::EmptyCategory { line: 2 })
        ));
        assert!(Lexicon::load("x", &b"no separator\n"[..]).is_err());
        assert!(Lexicon::load("x", &b"a** : b\n"[..]).is_err());
    }

    #[test]
    fn prefix_match() {
        let l = lex("lex", "happi* : positive_emotion\n");
        assert_eq!(
            tag_text("I am so happy today", std::slice::from_ref(&l)),
            BTreeSet::new()
        );
        let l = lex("lex", "happ* : positive_emotion\n");
        assert_eq!(
            tag_text("I am so happy today", &[l]),
            [label("lex", "positive_emotion")].into()
        );
    }

    #[test]
    fn happi_prefix_matches_happiness() {
        let l = lex("lex", "happi* : positive_emotion\n");
        assert_eq!(
            tag_text("Such happiness!", &[l]),
            [label("lex", "positive_emotion")].into()
        );
    }

    #[test]
    fn no_emotion_words() {
        let l = lex("lex", "sad* : sad\n");
        assert!(tag_text("the chair is red", &[l]).is_empty());
        assert!(tag_text("", &[]).is_empty());
    }

    #[test]
    fn punctuation_and_multiple_categories() {
        let l = lex("lex", "sad* : sad\nterrif* : horror, negative_emotion\n");
        let tags = tag_text("sadly, he was terrified", &[l]);
        assert_eq!(
            tags,
            [
                label("lex", "sad"),
                label("lex", "horror"),
                label("lex", "negative_emotion")
            ]
            .into()
        );
    }

    #[test]
    fn exact_does_not_prefix_match() {
        let l = lex("lex", "sad : sad\n");
        assert!(tag_text("sadly", std::slice::from_ref(&l)).is_empty());
        assert_eq!(tag_text("SAD.", &[l]).len(), 1);
    }

    #[test]
    fn same_category_two_lexica_stays_distinct() {
        let a = lex("liwc", "hurt* : negative emotion\n");
        let b = lex("empath", "hurt : negative emotion\n");
        let tags = tag_text("it hurt", &[a, b]);
        assert_eq!(tags.len(), 2);
        let names: Vec<String> = tags.iter().map(ToString::to_string).collect();
        assert_eq!(names, vec!["negative emotion (empath)", "negative emotion (liwc)"]);
    }

    #[test]
    fn threshold_boundary() {
        let counts: BTreeMap<_, _> = [(label("l", "nine"), 9), (label("l", "ten"), 10)].into();
        assert_eq!(apply_threshold(&counts, 10).unwrap(), [label("l", "ten")].into());
        let low: BTreeMap<_, _> = [(label("l", "a"), 3)].into();
        assert!(apply_threshold(&low, 10).unwrap().is_empty());
        assert!(matches!(apply_threshold(&low, 0), Err(LexiconError::BadThreshold(0))));
    }

    #[test]
    fn tag_frames_thresholds_per_frame_labels() {
        let l = lex("lex", "sad* : sad\nangr* : anger\n");
        let mut frames = Vec::new();
        for i in 0..12 {
            let mut f = FrameRecord::new("v", i);
            f.translation = if i < 10 {
                "so sad".into()
            } else {
                "angry and sad".into()
            };
            frames.push(f);
        }
        let tagged = tag_frames(&frames, &[l], 10).unwrap();
        assert_eq!(tagged.label_counts[&label("lex", "sad")], 12);
        assert_eq!(tagged.label_counts[&label("lex", "anger")], 2);
        assert_eq!(tagged.retained, [label("lex", "sad")].into());
        assert!(tagged.frames[11].features.contains(&label("lex", "sad").feature()));
        assert!(!tagged.frames[11].features.contains(&label("lex", "anger").feature()));
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{1,7}"
    }

    proptest! {
        #[test]
        fn normalization_invariance(words in prop::collection::vec(word(), 0..8), rules in prop::collection::vec((word(), any::<bool>()), 1..6)) {
            let mut l = Lexicon::new("p");
            for (i, (w, prefix)) in rules.iter().enumerate() {
                let pattern = if *prefix { format!("{w}*") } else { w.clone() };
                l.insert_rule(&pattern, &[&format!("c{i}")], i + 1).unwrap();
            }
            let text = words.join(" ");
            let base = tag_text(&text, std::slice::from_ref(&l));
            prop_assert_eq!(&tag_text(&text.to_uppercase(), std::slice::from_ref(&l)), &base);
            let noisy: String = words.iter().map(|w| format!("\"{w}!?, ")).collect();
            prop_assert_eq!(&tag_text(&noisy, std::slice::from_ref(&l)), &base);
        }

        #[test]
        fn monotone_in_lexicon(words in prop::collection::vec(word(), 0..8), rules in prop::collection::vec(word(), 1..8), split in 0usize..8) {
            let mut small = Lexicon::new("m");
            let mut big = Lexicon::new("m");
            for (i, w) in rules.iter().enumerate() {
                let pattern = if i % 2 == 0 { format!("{w}*") } else { w.clone() };
                if i < split {
                    small.insert_rule(&pattern, &["c"], i).unwrap();
                }
                big.insert_rule(&pattern, &[&format!("c{}", i % 3)], i).unwrap();
                big.insert_rule(&pattern, &["c"], i).unwrap();
            }
            let text = words.join(" ");
            let a = tag_text(&text, &[small]);
            let b = tag_text(&text, &[big]);
            prop_assert!(a.is_subset(&b));
        }

        #[test]
        fn threshold_one_keeps_every_seen_label(counts in prop::collection::btree_map("[a-z]{1,4}", 1u64..50, 0..10)) {
            let counts: BTreeMap<EmotionLabel, u64> = counts.into_iter().map(|(k, v)| (label("l", &k), v)).collect();
            let kept = apply_threshold(&counts, 1).unwrap();
            prop_assert_eq!(kept.len(), counts.len());
        }
    }
}
