//! Facial-expression-recognition sidecar ingestion.
//!
//! The sidecar is JSON Lines, one frame per line:
//!
//! ```text
//! {"video_id":"v1","frame_index":12,"angry":0.01,"disgust":0.0,"fear":0.02,
//!  "happy":0.9,"sad":0.02,"surprise":0.03,"neutral":0.02,"face_found":true}
//! ```
//!
//! Scores of frames with a face form a distribution over the seven classes;
//! frames without a face carry all-zero scores. Classes scoring at or above
//! the threshold become `fer:emotion=<class>` features.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde::Deserialize;

use super::PipelineError;
use crate::corpus::{FeatureCategory, FeatureId, FrameRecord};

pub const FER_CLASSES: [&str; 7] = ["angry", "disgust", "fear", "happy", "sad", "surprise", "neutral"];
const SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FerRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub angry: f64,
    pub disgust: f64,
    pub fear: f64,
    pub happy: f64,
    pub sad: f64,
    pub surprise: f64,
    pub neutral: f64,
    pub face_found: bool,
}

impl FerRecord {
    pub fn scores(&self) -> [f64; 7] {
        [
            self.angry,
            self.disgust,
            self.fear,
            self.happy,
            self.sad,
            self.surprise,
            self.neutral,
        ]
    }
}

pub fn fer_feature(class: &str) -> FeatureId {
    FeatureId::new(FeatureCategory::Fer, "emotion", class)
}

pub type FerFeatures = BTreeMap<(String, u64), BTreeSet<FeatureId>>;

/// Parse a sidecar and binarize each frame's scores at `threshold`.
pub fn ingest_fer_sidecar<R: Read>(input: R, threshold: f64) -> Result<FerFeatures, PipelineError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PipelineError::usage("FER threshold must lie strictly between 0 and 1"));
    }
    let mut out = FerFeatures::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let bad = |reason: String| PipelineError::data(format!("FER sidecar line {line_no}: {reason}"));
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FerRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let scores = record.scores();
        if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(bad("score outside [0, 1]".into()));
        }
        let sum: f64 = scores.iter().sum();
        if record.face_found && (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(bad(format!("scores sum to {sum}, expected 1")));
        }
        if !record.face_found && sum != 0.0 {
            return Err(bad("face_found is false but scores are non-zero".into()));
        }
        let features = out.entry((record.video_id.clone(), record.frame_index)).or_default();
        for (class, score) in FER_CLASSES.iter().zip(scores) {
            if score >= threshold {
                features.insert(fer_feature(class));
            }
        }
    }
    Ok(out)
}

/// Add sidecar features to matching frames. Returns how many sidecar frames
/// matched a corpus frame.
pub fn merge_fer(frames: &mut [FrameRecord], fer: &FerFeatures) -> usize {
    let mut matched = 0;
    for frame in frames.iter_mut() {
        if let Some(features) = fer.get(&(frame.video_id.clone(), frame.frame_index)) {
            matched += 1;
            frame.features.extend(features.iter().cloned());
        }
    }
    matched
}
