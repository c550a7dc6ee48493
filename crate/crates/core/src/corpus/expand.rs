use std::collections::BTreeMap;

use super::{canonicalize, AnnotationSpan, FeatureId, FrameRecord};

/// How a tier's values are carried onto frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierKind {
    /// Non-manual face/head/eye channels; values become facial features.
    Facial,
    /// Syntactic and other descriptors; values become linguistic features.
    Linguistic,
    /// Sign glosses; tokens go to `gloss_tokens` and the gloss is also a
    /// linguistic feature (the current sign).
    Gloss,
    /// English translation text; feeds the lexicon tagger.
    Translation,
}

const FACIAL_TIER_PREFIXES: &[&str] = &[
    "eye brows",
    "eyebrows",
    "eye gaze",
    "eye aperture",
    "eyes",
    "nose",
    "mouth",
    "cheeks",
    "lips",
    "tongue",
    "head pos",
    "head mvmt",
];

impl TierKind {
    pub fn of(tier: &str) -> TierKind {
        let tier = canonicalize(tier);
        if tier.contains("translation") {
            TierKind::Translation
        } else if tier.contains("gloss") {
            TierKind::Gloss
        } else if FACIAL_TIER_PREFIXES.iter().any(|p| tier.starts_with(p)) {
            TierKind::Facial
        } else {
            TierKind::Linguistic
        }
    }
}

/// Frames produced by [`expand_with_stats`] plus the number of per-frame
/// feature instances the spans contributed before set deduplication.
#[derive(Debug, Clone, Default)]
pub struct Expansion {
    pub frames: Vec<FrameRecord>,
    pub instances: u64,
}

pub fn expand_to_frames(spans: &[AnnotationSpan]) -> Vec<FrameRecord> {
    expand_with_stats(spans).frames
}

/// Copy every span onto each frame of its inclusive interval.
///
/// Frames without any span do not appear; output is ordered by
/// `(video_id, frame_index)`.
pub fn expand_with_stats(spans: &[AnnotationSpan]) -> Expansion {
    let mut frames: BTreeMap<(&str, u64), FrameRecord> = BTreeMap::new();
    let mut instances = 0u64;

    for span in spans {
        let kind = TierKind::of(&span.tier);
        let feature = match kind {
            TierKind::Facial => Some(FeatureId::facial(&span.tier, &span.value)),
            TierKind::Linguistic => Some(FeatureId::linguistic(&span.tier, &span.value)),
            TierKind::Gloss => Some(FeatureId::linguistic("gloss", &span.value)),
            TierKind::Translation => None,
        };
        for frame_index in span.start_frame..=span.end_frame {
            instances += 1;
            let frame = frames
                .entry((span.video_id.as_str(), frame_index))
                .or_insert_with(|| FrameRecord::new(span.video_id.as_str(), frame_index));
            if let Some(f) = &feature {
                frame.features.insert(f.clone());
            }
            match kind {
                TierKind::Gloss => frame
                    .gloss_tokens
                    .extend(span.value.split_whitespace().map(str::to_string)),
                TierKind::Translation => {
                    let text = span.value.trim();
                    if frame.translation.is_empty() {
                        frame.translation = text.to_string();
                    } else if frame.translation != text {
                        frame.translation.push(' ');
                        frame.translation.push_str(text);
                    }
                }
                _ => {}
            }
        }
    }

    Expansion {
        frames: frames.into_values().collect(),
        instances,
    }
}
