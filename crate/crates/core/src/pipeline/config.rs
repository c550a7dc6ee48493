//! Flat `key = value` configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Relative paths are resolved against the directory of the config file.
//! Command-line flags are applied on top with [`PipelineConfig::set`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corpus::SpanFormat;
use crate::forest::Hyperparams;
use crate::metrics::Grouping;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub spans: Option<PathBuf>,
    pub span_format: Option<SpanFormat>,
    /// `None` uses the bundled default table.
    pub au_map: Option<PathBuf>,
    pub lexica: Vec<PathBuf>,
    pub fer: Option<PathBuf>,
    pub fer_threshold: f64,
    pub out_dir: PathBuf,
    pub min_frames: u64,
    pub min_support: u64,
    /// `hyperparams.seed` is overwritten by `seed` at run time.
    pub hyperparams: Hyperparams,
    pub folds: usize,
    pub seed: u64,
    pub include_negative: bool,
    pub group_by: Grouping,
    /// Worker threads; 0 lets rayon decide. Never affects artifacts.
    pub threads: usize,
    /// Labels to rank in `stats` (category name or `category (lexicon)`);
    /// empty means every retained label.
    pub labels: Vec<String>,
    pub top_k: usize,
    pub full_precision: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            spans: None,
            span_format: None,
            au_map: None,
            lexica: Vec::new(),
            fer: None,
            fer_threshold: 0.5,
            out_dir: PathBuf::from("out"),
            min_frames: 10,
            min_support: 10,
            hyperparams: Hyperparams::default(),
            folds: 10,
            seed: 0,
            include_negative: false,
            group_by: Grouping::Frame,
            threads: 0,
            labels: Vec::new(),
            top_k: 10,
            full_precision: false,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, PipelineError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(PipelineError::usage(format!(
            "{key}: expected true or false, got `{v}`"
        ))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, PipelineError> {
    v.parse()
        .map_err(|_| PipelineError::usage(format!("{key}: cannot parse `{v}`")))
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::data(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let mut config = PipelineConfig::default();
        config.apply_text(&text, base)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), PipelineError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::usage(format!("config line {}: expected `key = value`", i + 1)))?;
            self.set(key.trim(), value.trim(), base)?;
        }
        Ok(())
    }

    /// Set one key. Path values are joined onto `base` when relative.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), PipelineError> {
        let path = |v: &str| base.join(v);
        let hp = &mut self.hyperparams;
        match key {
            "spans" => self.spans = Some(path(value)),
            "span_format" => {
                self.span_format = Some(
                    value
                        .parse()
                        .map_err(|e: crate::corpus::CorpusError| PipelineError::usage(e.to_string()))?,
                )
            }
            "au_map" => self.au_map = (!value.is_empty() && value != "default").then(|| path(value)),
            "lexica" => self.lexica = list(value).map(path).collect(),
            "fer" => self.fer = (!value.is_empty()).then(|| path(value)),
            "fer_threshold" => self.fer_threshold = parse_num(key, value)?,
            "out" => self.out_dir = path(value),
            "min_frames" => self.min_frames = parse_num(key, value)?,
            "min_support" => self.min_support = parse_num(key, value)?,
            "n_trees" => hp.n_trees = parse_num(key, value)?,
            "max_depth" => {
                hp.max_depth = match value {
                    "none" | "" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "min_samples_split" => hp.min_samples_split = parse_num(key, value)?,
            "features_per_split" => hp.features_per_split = value.parse().map_err(PipelineError::usage)?,
            "bootstrap" => hp.bootstrap = parse_bool(key, value)?,
            "vote_threshold" => hp.vote_threshold = parse_num(key, value)?,
            "balanced" => hp.balanced = parse_bool(key, value)?,
            "folds" => self.folds = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "include_negative" => self.include_negative = parse_bool(key, value)?,
            "group_folds_by" => self.group_by = value.parse().map_err(PipelineError::usage)?,
            "threads" => self.threads = parse_num(key, value)?,
            "labels" => self.labels = list(value).map(String::from).collect(),
            "top_k" => self.top_k = parse_num(key, value)?,
            "full_precision" => self.full_precision = parse_bool(key, value)?,
            other => return Err(PipelineError::usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.fer_threshold > 0.0 && self.fer_threshold < 1.0) {
            return Err(PipelineError::usage("fer_threshold must lie strictly between 0 and 1"));
        }
        if self.min_frames < 1 || self.min_support < 1 {
            return Err(PipelineError::usage("min_frames and min_support must be at least 1"));
        }
        if self.top_k < 1 {
            return Err(PipelineError::usage("top_k must be at least 1"));
        }
        if self.folds < 2 {
            return Err(PipelineError::usage("folds must be at least 2"));
        }
        self.hyperparams
            .validate()
            .map_err(|e| PipelineError::usage(e.to_string()))
    }

    pub fn effective_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            seed: self.seed,
            ..self.hyperparams.clone()
        }
    }

    /// Settings that can change an artifact, rendered as sorted key/value
    /// pairs. The output directory and thread count are left out.
    pub fn canonical(&self) -> BTreeMap<&'static str, String> {
        let p = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let hp = &self.hyperparams;
        let mut m = BTreeMap::new();
        m.insert("spans", p(&self.spans));
        m.insert(
            "span_format",
            match self.span_format {
                Some(SpanFormat::SpanCsv) => "span_csv".into(),
                Some(SpanFormat::SpanJsonl) => "span_jsonl".into(),
                None => String::new(),
            },
        );
        m.insert("au_map", p(&self.au_map));
        m.insert(
            "lexica",
            self.lexica
                .iter()
                .map(|l| l.display().to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("fer", p(&self.fer));
        m.insert("fer_threshold", format!("{:?}", self.fer_threshold));
        m.insert("min_frames", self.min_frames.to_string());
        m.insert("min_support", self.min_support.to_string());
        m.insert("n_trees", hp.n_trees.to_string());
        m.insert("max_depth", hp.max_depth.map_or("none".into(), |d| d.to_string()));
        m.insert("min_samples_split", hp.min_samples_split.to_string());
        m.insert("features_per_split", hp.features_per_split.to_string());
        m.insert("bootstrap", hp.bootstrap.to_string());
        m.insert("vote_threshold", format!("{:?}", hp.vote_threshold));
        m.insert("balanced", hp.balanced.to_string());
        m.insert("folds", self.folds.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("include_negative", self.include_negative.to_string());
        m.insert("group_folds_by", self.group_by.to_string());
        m.insert("labels", self.labels.join(","));
        m.insert("top_k", self.top_k.to_string());
        m.insert("full_precision", self.full_precision.to_string());
        m
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.canonical() {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
