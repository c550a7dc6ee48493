//! Command orchestration and artifact emission.
//!
//! Every command recomputes what it needs from the inputs in memory and
//! writes only its own artifacts, so `all` produces exactly the union of
//! `ingest`, `tag`, `stats`, `train`, `eval` and `report`.
//!
//! | command  | artifacts |
//! |----------|-----------|
//! | ingest   | `frames.jsonl` |
//! | tag      | `frames_tagged.jsonl`, `label_counts.csv` |
//! | stats    | `rankings.csv`, `ranking_<lexicon>_<category>.csv` per label |
//! | train    | `model.forest`, `importance.csv`, `importance_by_label.csv` |
//! | eval     | `eval.csv`, `eval.json` |
//! | report   | `histogram_facial.csv`, `histogram_linguistic.csv`, `histogram_emotion.csv`, `summary.json` |
//!
//! `manifest.json` is rewritten after every command.

mod config;
mod fer;
mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cooccur::{self, Ranking};
use crate::corpus::{
    self, canonicalize, feature_counts, AuMappingTable, CorpusError, CountHistogram, FeatureCategory, FeatureId,
    FrameRecord, SpanFormat,
};
use crate::forest::{self, ForestError, MultiLabelForest, SampleMatrix};
use crate::lexicon::{self, EmotionLabel, Lexicon, LexiconError, TaggedCorpus};
use crate::metrics::{self, EvalReport, Grouping, MetricsError};

pub use config::PipelineConfig;
pub use fer::{fer_feature, ingest_fer_sidecar, merge_fer, FerFeatures, FerRecord, FER_CLASSES};
pub use manifest::{digest_bytes, digest_file, FileDigest, Manifest, OutputEntry, Staging, MANIFEST_NAME};

pub const TOOL_NAME: &str = "signaffect";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, config keys or values.
    Usage,
    /// Missing or malformed input data, or data that cannot support the command.
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineError {
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for PipelineError {}

macro_rules! data_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::data(e.to_string())
            }
        }
    )*};
}
data_error_from!(
    CorpusError,
    LexiconError,
    ForestError,
    MetricsError,
    cooccur::StatsError,
    csv::Error
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    Ingest,
    Tag,
    Stats,
    Train,
    Eval,
    Report,
    All,
}

impl Command {
    pub const STAGES: [Command; 6] = [
        Command::Ingest,
        Command::Tag,
        Command::Stats,
        Command::Train,
        Command::Eval,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Tag => "tag",
            Command::Stats => "stats",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Report => "report",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Command {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::STAGES
            .into_iter()
            .chain([Command::All])
            .find(|c| c.as_str() == s)
            .ok_or_else(|| PipelineError::usage(format!("unknown command `{s}`")))
    }
}

/// What a run wrote and what it wants the user to know.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    /// Artifact names relative to the output directory, manifest excluded.
    pub written: Vec<String>,
    pub warnings: Vec<String>,
}

/// Frames after expansion, AU mapping and FER merge.
#[derive(Debug, Clone)]
pub struct IngestedCorpus {
    /// Frames as annotated, before AU mapping.
    pub annotated: Vec<FrameRecord>,
    pub frames: Vec<FrameRecord>,
    /// Span-frame instances before per-frame deduplication.
    pub instances: u64,
    pub spans: usize,
    pub unmapped: BTreeMap<FeatureId, u64>,
    pub fer_frames: usize,
    pub fer_matched: usize,
}

/// The classifier's view of a tagged corpus.
#[derive(Debug, Clone)]
pub struct ClassifierData {
    pub matrix: SampleMatrix,
    /// Utterance id of every row, for grouped folds.
    pub groups: Vec<u64>,
}

fn read_input(path: &Path) -> Result<File, PipelineError> {
    File::open(path).map_err(|e| PipelineError::data(format!("cannot open {}: {e}", path.display())))
}

fn context<E: fmt::Display>(path: &Path) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::data(format!("{}: {e}", path.display()))
}

/// Every input the config refers to, in a fixed order.
fn input_paths(config: &PipelineConfig) -> Vec<&PathBuf> {
    config
        .spans
        .iter()
        .chain(&config.au_map)
        .chain(&config.lexica)
        .chain(&config.fer)
        .collect()
}

pub fn ingest(config: &PipelineConfig) -> Result<IngestedCorpus, PipelineError> {
    let spans_path = config
        .spans
        .as_ref()
        .ok_or_else(|| PipelineError::usage("no spans file configured (set `spans`)"))?;
    let format = match config.span_format {
        Some(f) => f,
        None => SpanFormat::from_path(spans_path).ok_or_else(|| {
            PipelineError::usage(format!(
                "cannot infer the span format of {}; set `span_format`",
                spans_path.display()
            ))
        })?,
    };
    let spans = corpus::parse_annotations(read_input(spans_path)?, format).map_err(context(spans_path))?;
    let expansion = corpus::expand_with_stats(&spans);

    let table = match &config.au_map {
        Some(path) => AuMappingTable::load(read_input(path)?).map_err(context(path))?,
        None => AuMappingTable::default_table(),
    };
    let (mut frames, tally) = table.map_all(&expansion.frames);

    let (mut fer_frames, mut fer_matched) = (0, 0);
    if let Some(path) = &config.fer {
        let fer = ingest_fer_sidecar(read_input(path)?, config.fer_threshold).map_err(|e| PipelineError {
            message: format!("{}: {}", path.display(), e.message),
            ..e
        })?;
        fer_frames = fer.len();
        fer_matched = merge_fer(&mut frames, &fer);
    }

    Ok(IngestedCorpus {
        annotated: expansion.frames,
        frames,
        instances: expansion.instances,
        spans: spans.len(),
        unmapped: tally.frames,
        fer_frames,
        fer_matched,
    })
}

pub fn load_lexica(config: &PipelineConfig) -> Result<Vec<Lexicon>, PipelineError> {
    if config.lexica.is_empty() {
        return Err(PipelineError::usage("no lexicon configured (set `lexica`)"));
    }
    config
        .lexica
        .iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Lexicon::load(&name, read_input(path)?).map_err(context(path))
        })
        .collect()
}

pub fn tag(config: &PipelineConfig, corpus: &IngestedCorpus) -> Result<TaggedCorpus, PipelineError> {
    let lexica = load_lexica(config)?;
    Ok(lexicon::tag_frames(&corpus.frames, &lexica, config.min_frames)?)
}

/// Candidates for conditional-probability rankings: the annotated
/// SignStream-style features, without glosses (which restate the sentence).
pub fn is_ranking_candidate(f: &FeatureId) -> bool {
    match f.category() {
        FeatureCategory::Facial => true,
        FeatureCategory::Linguistic => f.kind() != "gloss",
        _ => false,
    }
}

/// Retained labels matching a user-supplied name: either the bare category
/// or `category (lexicon)`.
pub fn resolve_label<'a>(name: &str, retained: &'a BTreeSet<EmotionLabel>) -> Vec<&'a EmotionLabel> {
    let wanted = canonicalize(name);
    retained
        .iter()
        .filter(|l| l.category == wanted || canonicalize(&l.to_string()) == wanted)
        .collect()
}

pub fn rankings(config: &PipelineConfig, tagged: &TaggedCorpus) -> Result<(Vec<Ranking>, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    let labels: Vec<&EmotionLabel> = if config.labels.is_empty() {
        tagged.retained.iter().collect()
    } else {
        let mut chosen = BTreeSet::new();
        for name in &config.labels {
            let found = resolve_label(name, &tagged.retained);
            if found.is_empty() {
                warnings.push(format!(
                    "label `{name}` is not among the retained labels; no ranking written"
                ));
            }
            chosen.extend(found);
        }
        chosen.into_iter().collect()
    };

    let keep = |f: &FeatureId| is_ranking_candidate(f) || f.category() == FeatureCategory::Emotion;
    let counts = cooccur::accumulate_par(&tagged.frames, Some(&keep), 4096);
    let mut out = Vec::with_capacity(labels.len());
    for label in labels {
        let r = cooccur::rank_candidates(
            &counts,
            &label.feature(),
            config.top_k,
            config.min_support,
            &is_ranking_candidate,
        )?;
        if let Some(w) = &r.warning {
            warnings.push(w.clone());
        }
        if r.entries.is_empty() && r.warning.is_none() {
            warnings.push(format!(
                "label `{label}`: no candidate feature reaches min_support {}",
                config.min_support
            ));
        }
        out.push(r);
    }
    Ok((out, warnings))
}

/// Rows are frames (only labelled ones unless `include_negative`), columns
/// every AU and FER feature seen in the corpus, labels the retained set.
pub fn classifier_data(config: &PipelineConfig, tagged: &TaggedCorpus) -> Result<ClassifierData, PipelineError> {
    let labels: Vec<EmotionLabel> = tagged.retained.iter().cloned().collect();
    if labels.is_empty() {
        return Err(PipelineError::data(format!(
            "no emotion label reaches min_frames {}; nothing to classify",
            config.min_frames
        )));
    }
    let features: Vec<FeatureId> = tagged
        .frames
        .iter()
        .flat_map(|f| &f.features)
        .filter(|f| matches!(f.category(), FeatureCategory::Au | FeatureCategory::Fer))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if features.is_empty() {
        return Err(PipelineError::data(
            "no AU or FER features in the corpus; check the AU mapping table",
        ));
    }
    let label_features: Vec<FeatureId> = labels.iter().map(EmotionLabel::feature).collect();

    let (mut xs, mut ys, mut groups) = (Vec::new(), Vec::new(), Vec::new());
    let mut group = 0u64;
    let mut previous: Option<(&str, &str)> = None;
    for frame in &tagged.frames {
        let key = (frame.video_id.as_str(), frame.translation.as_str());
        if previous.is_some_and(|p| p != key) {
            group += 1;
        }
        previous = Some(key);
        let y: Vec<u8> = label_features
            .iter()
            .map(|l| u8::from(frame.features.contains(l)))
            .collect();
        if !config.include_negative && y.iter().all(|&v| v == 0) {
            continue;
        }
        xs.push(features.iter().map(|f| u8::from(frame.features.contains(f))).collect());
        ys.push(y);
        groups.push(group);
    }
    if xs.is_empty() {
        return Err(PipelineError::data("no frame carries a retained label"));
    }
    Ok(ClassifierData {
        matrix: SampleMatrix::new(xs, ys, features, labels)?,
        groups,
    })
}

pub fn train(config: &PipelineConfig, data: &ClassifierData) -> Result<MultiLabelForest, PipelineError> {
    Ok(forest::fit(&data.matrix, &config.effective_hyperparams())?)
}

pub fn evaluate(config: &PipelineConfig, data: &ClassifierData) -> Result<EvalReport, PipelineError> {
    let groups = (config.group_by == Grouping::Utterance).then_some(data.groups.as_slice());
    let folds = metrics::kfold_split(data.matrix.n_rows(), config.folds, config.seed, groups)?;
    Ok(metrics::evaluate_cv(
        &data.matrix,
        &config.effective_hyperparams(),
        &folds,
    )?)
}

fn jsonl(frames: &[FrameRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in frames {
        serde_json::to_writer(&mut out, f).expect("frame serializes");
        out.push(b'\n');
    }
    out
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

pub fn ranking_file_name(label: &EmotionLabel) -> String {
    format!("ranking_{}_{}.csv", slug(&label.lexicon), slug(&label.category))
}

/// One label's ranking as `feature,probability,support`.
pub fn write_label_ranking_csv<W: std::io::Write>(ranking: &Ranking, full_precision: bool, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["feature", "probability", "support"])?;
    for e in &ranking.entries {
        let p = if full_precision {
            format!("{}", e.probability)
        } else {
            format!("{:.3}", e.probability)
        };
        writer.write_record([e.feature.table_name(), p, e.support.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn label_counts_csv(tagged: &TaggedCorpus) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lexicon", "category", "frames", "retained"])?;
    for (label, n) in &tagged.label_counts {
        w.write_record([
            label.lexicon.as_str(),
            &label.category,
            &n.to_string(),
            if tagged.retained.contains(label) {
                "true"
            } else {
                "false"
            },
        ])?;
    }
    w.into_inner().map_err(|e| PipelineError::data(e.to_string()))
}

fn importance_by_label_csv(model: &MultiLabelForest) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "au", "importance"])?;
    for (j, label) in model.label_names.iter().enumerate() {
        for (f, v) in forest::label_importance_report(model, j, model.feature_names.len()) {
            w.write_record([label.to_string(), f.table_name(), format!("{v:.6}")])?;
        }
    }
    w.into_inner().map_err(|e| PipelineError::data(e.to_string()))
}

#[derive(Serialize)]
struct EvalSetup {
    rows: usize,
    features: usize,
    labels: usize,
    folds: usize,
    grouping: Grouping,
    include_negative: bool,
    /// Positive (row, label) cells in the matrix; equals `total_support`.
    positive_cells: u64,
}

#[derive(Serialize)]
struct EvalJson<'a> {
    setup: EvalSetup,
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct Summary {
    spans: usize,
    annotated_frames: usize,
    feature_instances: u64,
    mean_features_per_frame: f64,
    distinct_features_per_frame: f64,
    labelled_frames: usize,
    label_counts: BTreeMap<String, u64>,
    retained_labels: Vec<String>,
    unmapped_facial_features: BTreeMap<String, u64>,
    fer_sidecar_frames: usize,
    fer_matched_frames: usize,
}

fn summary(corpus: &IngestedCorpus, tagged: &TaggedCorpus) -> Summary {
    let n = corpus.annotated.len();
    let distinct: usize = corpus.annotated.iter().map(|f| f.features.len()).sum();
    let emotion = |f: &FrameRecord| f.has_category(FeatureCategory::Emotion);
    Summary {
        spans: corpus.spans,
        annotated_frames: n,
        feature_instances: corpus.instances,
        mean_features_per_frame: if n == 0 {
            0.0
        } else {
            corpus.instances as f64 / n as f64
        },
        distinct_features_per_frame: if n == 0 { 0.0 } else { distinct as f64 / n as f64 },
        labelled_frames: tagged.frames.iter().filter(|f| emotion(f)).count(),
        label_counts: tagged.label_counts.iter().map(|(l, n)| (l.to_string(), *n)).collect(),
        retained_labels: tagged.retained.iter().map(|l| l.to_string()).collect(),
        unmapped_facial_features: corpus.unmapped.iter().map(|(f, n)| (f.to_string(), *n)).collect(),
        fer_sidecar_frames: corpus.fer_frames,
        fer_matched_frames: corpus.fer_matched,
    }
}

fn histogram_csv(h: &CountHistogram) -> Result<Vec<u8>, PipelineError> {
    let mut out = Vec::new();
    corpus::write_histograms_csv(&[h], &mut out)?;
    Ok(out)
}

/// Lazily computed intermediate results shared by the stages of one run.
struct Session<'c> {
    config: &'c PipelineConfig,
    corpus: Option<IngestedCorpus>,
    tagged: Option<TaggedCorpus>,
    data: Option<ClassifierData>,
    warnings: Vec<String>,
}

impl<'c> Session<'c> {
    fn corpus(&mut self) -> Result<&IngestedCorpus, PipelineError> {
        if self.corpus.is_none() {
            let c = ingest(self.config)?;
            if !c.unmapped.is_empty() {
                let total: u64 = c.unmapped.values().sum();
                self.warnings.push(format!(
                    "{} facial feature values ({total} frame instances) have no AU mapping",
                    c.unmapped.len()
                ));
            }
            if self.config.fer.is_some() && c.fer_matched < c.fer_frames {
                self.warnings.push(format!(
                    "{} of {} FER sidecar frames match no annotated frame",
                    c.fer_frames - c.fer_matched,
                    c.fer_frames
                ));
            }
            self.corpus = Some(c);
        }
        Ok(self.corpus.as_ref().expect("set above"))
    }

    fn tagged(&mut self) -> Result<&TaggedCorpus, PipelineError> {
        if self.tagged.is_none() {
            let t = tag(self.config, self.corpus()?)?;
            self.tagged = Some(t);
        }
        Ok(self.tagged.as_ref().expect("set above"))
    }

    fn data(&mut self) -> Result<&ClassifierData, PipelineError> {
        if self.data.is_none() {
            let d = classifier_data(self.config, self.tagged()?)?;
            self.data = Some(d);
        }
        Ok(self.data.as_ref().expect("set above"))
    }

    fn stage(
        &mut self,
        command: Command,
        staging: &mut Staging,
        owner: &mut BTreeMap<String, Command>,
    ) -> Result<(), PipelineError> {
        let config = self.config;
        let mut put = |staging: &mut Staging, name: String, bytes: Vec<u8>| {
            owner.insert(name.clone(), command);
            staging.write(&name, &bytes)
        };
        match command {
            Command::Ingest => {
                let bytes = jsonl(&self.corpus()?.frames);
                put(staging, "frames.jsonl".into(), bytes)?;
            }
            Command::Tag => {
                let tagged = self.tagged()?;
                let frames = jsonl(&tagged.frames);
                let counts = label_counts_csv(tagged)?;
                put(staging, "frames_tagged.jsonl".into(), frames)?;
                put(staging, "label_counts.csv".into(), counts)?;
            }
            Command::Stats => {
                let (ranked, warnings) = rankings(config, self.tagged()?)?;
                self.warnings.extend(warnings);
                let mut all = Vec::new();
                cooccur::write_rankings_csv(&ranked, config.full_precision, &mut all)?;
                put(staging, "rankings.csv".into(), all)?;
                for r in &ranked {
                    let label = EmotionLabel::from_feature(&r.label).expect("rankings are keyed by labels");
                    let mut one = Vec::new();
                    write_label_ranking_csv(r, config.full_precision, &mut one)?;
                    put(staging, ranking_file_name(&label), one)?;
                }
            }
            Command::Train => {
                let model = train(config, self.data()?)?;
                self.warnings.extend(model.warnings.iter().cloned());
                let mut bytes = Vec::new();
                forest::write_model(&model, &mut bytes)?;
                put(staging, "model.forest".into(), bytes)?;
                let mut imp = Vec::new();
                forest::write_importance_csv(
                    &forest::feature_importance_report(&model, model.feature_names.len()),
                    &mut imp,
                )?;
                put(staging, "importance.csv".into(), imp)?;
                put(
                    staging,
                    "importance_by_label.csv".into(),
                    importance_by_label_csv(&model)?,
                )?;
            }
            Command::Eval => {
                let data = self.data()?;
                let report = evaluate(config, data)?;
                let m = &data.matrix;
                let setup = EvalSetup {
                    rows: m.n_rows(),
                    features: m.n_features(),
                    labels: m.n_labels(),
                    folds: config.folds,
                    grouping: config.group_by,
                    include_negative: config.include_negative,
                    positive_cells: (0..m.n_rows())
                        .map(|r| m.labels_of(r).iter().map(|&v| v as u64).sum::<u64>())
                        .sum(),
                };
                let mut csv_bytes = Vec::new();
                metrics::write_eval_csv(&report, &mut csv_bytes)?;
                self.warnings.extend(report.warnings.iter().cloned());
                put(staging, "eval.csv".into(), csv_bytes)?;
                put(
                    staging,
                    "eval.json".into(),
                    pretty_json(&EvalJson { setup, report: &report }),
                )?;
            }
            Command::Report => {
                self.tagged()?;
                let corpus = self.corpus.as_ref().expect("computed by tagged()");
                let tagged = self.tagged.as_ref().expect("computed above");
                let facial = feature_counts(&corpus.annotated, Some(FeatureCategory::Facial));
                let linguistic = feature_counts(&corpus.annotated, Some(FeatureCategory::Linguistic));
                let emotion = feature_counts(&tagged.frames, Some(FeatureCategory::Emotion));
                let files = [
                    ("histogram_facial.csv", histogram_csv(&facial)?),
                    ("histogram_linguistic.csv", histogram_csv(&linguistic)?),
                    ("histogram_emotion.csv", histogram_csv(&emotion)?),
                    ("summary.json", pretty_json(&summary(corpus, tagged))),
                ];
                for (name, bytes) in files {
                    put(staging, name.into(), bytes)?;
                }
            }
            Command::All => unreachable!("expanded by run"),
        }
        Ok(())
    }
}

fn check_inputs(config: &PipelineConfig) -> Result<BTreeMap<String, FileDigest>, PipelineError> {
    if config.spans.is_none() {
        return Err(PipelineError::usage("no spans file configured (set `spans`)"));
    }
    let mut inputs = BTreeMap::new();
    for path in input_paths(config) {
        if !path.is_file() {
            return Err(PipelineError::data(format!("input not found: {}", path.display())));
        }
        inputs.insert(path.display().to_string(), digest_file(path)?);
    }
    Ok(inputs)
}

/// Run one command (or all of them) and write its artifacts plus the
/// manifest into `config.out_dir`.
pub fn run(config: &PipelineConfig, command: Command) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| PipelineError::usage(format!("cannot start {} worker threads: {e}", config.threads)))?;
        pool.install(|| run_inner(config, command))
    } else {
        run_inner(config, command)
    }
}

fn run_inner(config: &PipelineConfig, command: Command) -> Result<RunOutcome, PipelineError> {
    let inputs = check_inputs(config)?;
    let stages: Vec<Command> = match command {
        Command::All => Command::STAGES.to_vec(),
        c => vec![c],
    };

    let out_dir = &config.out_dir;
    fs::create_dir_all(out_dir).map_err(context(out_dir))?;
    let mut staging = Staging::new(out_dir, command.as_str())?;
    let mut session = Session {
        config,
        corpus: None,
        tagged: None,
        data: None,
        warnings: Vec::new(),
    };
    let mut owner = BTreeMap::new();
    for stage in stages {
        session.stage(stage, &mut staging, &mut owner)?;
    }

    let mut manifest = Manifest {
        tool: TOOL_NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config.digest(),
        config: config
            .canonical()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        inputs,
        outputs: BTreeMap::new(),
    };
    for (name, digest) in staging.files() {
        manifest.outputs.insert(
            name.clone(),
            OutputEntry {
                command: owner[name].as_str().to_string(),
                sha256: digest.sha256.clone(),
                bytes: digest.bytes,
            },
        );
    }
    let previous = Manifest::load(out_dir);
    manifest.absorb(previous);
    // A rerun of a command replaces its earlier outputs; names it no longer
    // writes (a label that dropped out of the ranking) must not linger.
    let fresh: BTreeSet<&str> = owner.values().map(|c| c.as_str()).collect();
    let written: BTreeSet<String> = owner.keys().cloned().collect();
    manifest
        .outputs
        .retain(|name, e| written.contains(name) || !fresh.contains(e.command.as_str()));
    let written: Vec<String> = written.into_iter().collect();
    staging.write(MANIFEST_NAME, manifest.to_json().as_bytes())?;

    let stale: Vec<PathBuf> = Manifest::load(out_dir)
        .map(|m| {
            m.outputs
                .keys()
                .filter(|k| !manifest.outputs.contains_key(*k))
                .map(|k| out_dir.join(k))
                .collect()
        })
        .unwrap_or_default();
    staging.commit()?;
    for path in stale {
        let _ = fs::remove_file(path);
    }

    Ok(RunOutcome {
        written,
        warnings: session.warnings,
    })
}
