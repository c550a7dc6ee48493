//! Frame-level analytics for multi-tier sign-language annotation corpora.
//!
//! The pipeline aligns annotation spans to video frames, maps facial features
//! onto FACS action units, tags English translations with lexicon emotion
//! categories, and then relates the two sides with conditional probabilities
//! and a multi-label random forest evaluated by k-fold cross-validation.
//!
//! Modules, bottom-up:
//!
//! - [`corpus`]: span parsing, frame expansion, AU mapping, frame histograms
//! - [`lexicon`]: word/prefix lexica, translation tagging, frame-support threshold
//! - [`cooccur`]: joint/marginal frame counts and conditional-probability rankings
//! - [`forest`]: binary-relevance random forest over one-hot features
//! - [`metrics`]: fold assignment, precision/recall/F1, cross-validated evaluation
//! - [`pipeline`]: configuration, commands, artifacts and the run manifest

pub mod cooccur;
pub mod corpus;
pub mod forest;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;
pub mod rng;

pub use cooccur::{CondProbEntry, CoocCounts, Ranking};
pub use corpus::{
    AnnotationSpan, AuCode, AuMappingTable, CountHistogram, FeatureCategory, FeatureId, FrameRecord, SpanFormat,
};
pub use forest::{Hyperparams, MultiLabelForest, SampleMatrix};
pub use lexicon::{EmotionLabel, Lexicon};
pub use metrics::{EvalReport, FoldAssignment, LabelMetrics};
