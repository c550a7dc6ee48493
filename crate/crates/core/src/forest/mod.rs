//! Multi-label random forest over binary (one-hot) features.
//!
//! Labels are handled by binary relevance: every label gets its own ensemble
//! of Gini trees. Trees split on a single feature (`x == 1` goes right), pick
//! the best split among a random feature subset at every node, and are grown
//! until pure or until no split reduces impurity. Each `(label, tree)` pair
//! draws from its own [`SplitMix64`] stream, so the model does not depend on
//! how rayon schedules the work.

mod io;
mod tree;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::FeatureId;
use crate::lexicon::EmotionLabel;
use crate::rng::SplitMix64;

pub use io::{read_model, write_model, FORMAT_VERSION};
pub use tree::{gini, DecisionTree, Node};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("sample matrix has no rows")]
    NoRows,
    #[error("sample matrix has no feature columns")]
    NoFeatures,
    #[error("sample matrix has no label columns")]
    NoLabels,
    #[error("{0}")]
    Shape(String),
    #[error("row has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("gini of an empty node")]
    EmptyNode,
    #[error("model file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary design matrix: `x` is n × d features, `y` is n × L labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    x: Vec<u8>,
    y: Vec<u8>,
    pub feature_names: Vec<FeatureId>,
    pub label_names: Vec<EmotionLabel>,
}

impl SampleMatrix {
    pub fn new(
        x_rows: Vec<Vec<u8>>,
        y_rows: Vec<Vec<u8>>,
        feature_names: Vec<FeatureId>,
        label_names: Vec<EmotionLabel>,
    ) -> Result<Self, ForestError> {
        let (d, l) = (feature_names.len(), label_names.len());
        if x_rows.is_empty() {
            return Err(ForestError::NoRows);
        }
        if d == 0 {
            return Err(ForestError::NoFeatures);
        }
        if l == 0 {
            return Err(ForestError::NoLabels);
        }
        if y_rows.len() != x_rows.len() {
            return Err(ForestError::Shape(format!(
                "{} feature rows but {} label rows",
                x_rows.len(),
                y_rows.len()
            )));
        }
        let mut x = Vec::with_capacity(x_rows.len() * d);
        let mut y = Vec::with_capacity(x_rows.len() * l);
        for (i, (xr, yr)) in x_rows.iter().zip(&y_rows).enumerate() {
            if xr.len() != d || yr.len() != l {
                return Err(ForestError::Shape(format!("row {i} has the wrong width")));
            }
            if xr.iter().chain(yr).any(|&v| v > 1) {
                return Err(ForestError::Shape(format!("row {i} has a non-binary entry")));
            }
            x.extend_from_slice(xr);
            y.extend_from_slice(yr);
        }
        Ok(Self {
            n: x_rows.len(),
            x,
            y,
            feature_names,
            label_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    #[inline]
    pub fn x(&self, row: usize, feature: usize) -> u8 {
        self.x[row * self.n_features() + feature]
    }

    #[inline]
    pub fn y(&self, row: usize, label: usize) -> u8 {
        self.y[row * self.n_labels() + label]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        let d = self.n_features();
        &self.x[row * d..(row + 1) * d]
    }

    pub fn labels_of(&self, row: usize) -> &[u8] {
        let l = self.n_labels();
        &self.y[row * l..(row + 1) * l]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturesPerSplit {
    /// `ceil(sqrt(d))`
    Sqrt,
    All,
    Count(usize),
}

impl fmt::Display for FeaturesPerSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeaturesPerSplit::Sqrt => f.write_str("sqrt"),
            FeaturesPerSplit::All => f.write_str("all"),
            FeaturesPerSplit::Count(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for FeaturesPerSplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "sqrt" => Ok(FeaturesPerSplit::Sqrt),
            "all" => Ok(FeaturesPerSplit::All),
            k => match k.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(FeaturesPerSplit::Count(k)),
                _ => Err(format!(
                    "features_per_split `{s}`: expected sqrt, all or a positive integer"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
    pub seed: u64,
    pub vote_threshold: f64,
    /// Reweight classes to equal total weight inside every tree.
    pub balanced: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: FeaturesPerSplit::Sqrt,
            bootstrap: true,
            seed: 0,
            vote_threshold: 0.5,
            balanced: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::Hyperparams(m.to_string()));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if !(self.vote_threshold > 0.0 && self.vote_threshold < 1.0) {
            return bad("vote_threshold must lie strictly between 0 and 1");
        }
        if self.features_per_split == FeaturesPerSplit::Count(0) {
            return bad("features_per_split must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelForest {
    /// One ensemble per label, in `label_names` order.
    pub per_label: Vec<Vec<DecisionTree>>,
    pub hyperparams: Hyperparams,
    pub feature_names: Vec<FeatureId>,
    pub label_names: Vec<EmotionLabel>,
    /// Mean decrease in impurity aggregated over labels, summing to 1 when
    /// any split happened.
    pub importance: Vec<f64>,
    /// Per-label importance, each normalized on its own.
    pub label_importance: Vec<Vec<f64>>,
    /// Diagnostics from training (constant label columns). Not persisted.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Indices of asserted labels.
    pub labels: Vec<usize>,
    /// Fraction of each label's trees voting positive.
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn asserted(&self, label: usize) -> bool {
        self.labels.contains(&label)
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        v.to_vec()
    }
}

pub fn fit(data: &SampleMatrix, hp: &Hyperparams) -> Result<MultiLabelForest, ForestError> {
    let rows: Vec<u32> = (0..data.n_rows() as u32).collect();
    fit_rows(data, &rows, hp)
}

/// Train on a subset of rows (the training side of a fold).
pub fn fit_rows(data: &SampleMatrix, rows: &[u32], hp: &Hyperparams) -> Result<MultiLabelForest, ForestError> {
    hp.validate()?;
    if rows.is_empty() {
        return Err(ForestError::NoRows);
    }
    let (d, l) = (data.n_features(), data.n_labels());

    let mut warnings = Vec::new();
    let constant: Vec<Option<u8>> = (0..l)
        .map(|j| {
            let first = data.y(rows[0] as usize, j);
            rows.iter().all(|&r| data.y(r as usize, j) == first).then_some(first)
        })
        .collect();
    for (j, c) in constant.iter().enumerate() {
        if let Some(v) = c {
            warnings.push(format!(
                "label `{}` is constant ({}) on the training rows; using a constant predictor",
                data.label_names[j],
                if *v == 1 { "always present" } else { "never present" }
            ));
        }
    }

    let jobs: Vec<(usize, usize)> = (0..l)
        .filter(|&j| constant[j].is_none())
        .flat_map(|j| (0..hp.n_trees).map(move |t| (j, t)))
        .collect();
    let grown: Vec<tree::GrownTree> = jobs
        .par_iter()
        .map(|&(j, t)| tree::grow_tree(data, rows, j, hp, SplitMix64::for_tree(hp.seed, j, t)))
        .collect();

    let mut per_label: Vec<Vec<DecisionTree>> = vec![Vec::new(); l];
    let mut raw_label_importance = vec![vec![0.0; d]; l];
    for (&(j, _), g) in jobs.iter().zip(grown) {
        for (acc, v) in raw_label_importance[j].iter_mut().zip(&g.importance) {
            *acc += v;
        }
        per_label[j].push(g.tree);
    }
    for j in 0..l {
        if let Some(v) = constant[j] {
            per_label[j].push(DecisionTree::leaf(v as f64));
        }
        let n = per_label[j].len() as f64;
        raw_label_importance[j].iter_mut().for_each(|x| *x /= n);
    }

    let mut total = vec![0.0; d];
    for imp in &raw_label_importance {
        for (acc, v) in total.iter_mut().zip(imp) {
            *acc += v;
        }
    }

    Ok(MultiLabelForest {
        per_label,
        hyperparams: hp.clone(),
        feature_names: data.feature_names.clone(),
        label_names: data.label_names.clone(),
        importance: normalized(&total),
        label_importance: raw_label_importance.iter().map(|v| normalized(v)).collect(),
        warnings,
    })
}

impl MultiLabelForest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn score(&self, label: usize, row: &[u8]) -> f64 {
        let trees = &self.per_label[label];
        let votes = trees.iter().filter(|t| t.votes_positive(row)).count();
        votes as f64 / trees.len() as f64
    }
}

pub fn predict(model: &MultiLabelForest, row: &[u8]) -> Result<Prediction, ForestError> {
    if row.len() != model.n_features() {
        return Err(ForestError::DimensionMismatch {
            expected: model.n_features(),
            got: row.len(),
        });
    }
    let scores: Vec<f64> = (0..model.per_label.len()).map(|j| model.score(j, row)).collect();
    let labels = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= model.hyperparams.vote_threshold)
        .map(|(j, _)| j)
        .collect();
    Ok(Prediction { labels, scores })
}

fn top_k(names: &[FeatureId], values: &[f64], k: usize) -> Vec<(FeatureId, f64)> {
    let mut ranked: Vec<(FeatureId, f64)> = names.iter().cloned().zip(values.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// The `k` most important features, descending; ties in feature order.
pub fn feature_importance_report(model: &MultiLabelForest, k: usize) -> Vec<(FeatureId, f64)> {
    top_k(&model.feature_names, &model.importance, k)
}

pub fn label_importance_report(model: &MultiLabelForest, label: usize, k: usize) -> Vec<(FeatureId, f64)> {
    top_k(&model.feature_names, &model.label_importance[label], k)
}

/// Two-column `au,importance` table with six decimals.
pub fn write_importance_csv<W: std::io::Write>(report: &[(FeatureId, f64)], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["au", "importance"])?;
    for (f, v) in report {
        writer.write_record([f.table_name(), format!("{v:.6}")])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeatureCategory;

    pub(crate) fn names(d: usize, l: usize) -> (Vec<FeatureId>, Vec<EmotionLabel>) {
        (
            (0..d)
                .map(|i| FeatureId::new(FeatureCategory::Au, &format!("au{i}"), &format!("unit {i:02}")))
                .collect(),
            (0..l)
                .map(|j| EmotionLabel::new("synthetic", &format!("label {j}")))
                .collect(),
        )
    }

    /// All 2^d inputs, label 0 copies feature `signal`, label 1 is all-ones.
    fn exhaustive(d: usize, signal: usize) -> SampleMatrix {
        let (f, l) = names(d, 2);
        let x: Vec<Vec<u8>> = (0..1u32 << d)
            .map(|m| (0..d).map(|b| (m >> b & 1) as u8).collect())
            .collect();
        let y = x.iter().map(|r| vec![r[signal], 1]).collect();
        SampleMatrix::new(x, y, f, l).unwrap()
    }

    #[test]
    fn matrix_validation() {
        let (f, l) = names(2, 1);
        assert!(matches!(
            SampleMatrix::new(vec![], vec![], f.clone(), l.clone()),
            Err(ForestError::NoRows)
        ));
        assert!(matches!(
            SampleMatrix::new(vec![vec![]], vec![vec![0]], vec![], l.clone()),
            Err(ForestError::NoFeatures)
        ));
        assert!(SampleMatrix::new(vec![vec![0, 2]], vec![vec![1]], f.clone(), l.clone()).is_err());
        assert!(SampleMatrix::new(vec![vec![0]], vec![vec![1]], f, l).is_err());
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        for hp in [
            Hyperparams {
                n_trees: 0,
                ..Default::default()
            },
            Hyperparams {
                min_samples_split: 1,
                ..Default::default()
            },
            Hyperparams {
                vote_threshold: 1.0,
                ..Default::default()
            },
            Hyperparams {
                vote_threshold: 0.0,
                ..Default::default()
            },
        ] {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
        assert_eq!("sqrt".parse::<FeaturesPerSplit>().unwrap(), FeaturesPerSplit::Sqrt);
        assert_eq!("3".parse::<FeaturesPerSplit>().unwrap(), FeaturesPerSplit::Count(3));
        assert!("0".parse::<FeaturesPerSplit>().is_err());
    }

    #[test]
    fn noise_free_signal_is_learned() {
        let data = exhaustive(8, 7);
        let model = fit(
            &data,
            &Hyperparams {
                n_trees: 30,
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        for r in 0..data.n_rows() {
            let p = predict(&model, data.row(r)).unwrap();
            assert_eq!(p.asserted(0), data.y(r, 0) == 1);
        }
        let top = label_importance_report(&model, 0, 1);
        assert_eq!(top[0].0, data.feature_names[7]);
        assert_eq!(feature_importance_report(&model, 1)[0].0, data.feature_names[7]);

        // With every feature considered, each tree splits on feature 7 at the root.
        let all = fit(
            &data,
            &Hyperparams {
                n_trees: 30,
                seed: 9,
                features_per_split: FeaturesPerSplit::All,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(all.per_label[0]
            .iter()
            .all(|t| matches!(t.nodes[0], Node::Split { feature: 7, .. })));
        let mut on = vec![0u8; 8];
        on[7] = 1;
        let p = predict(&all, &on).unwrap();
        assert_eq!(p.scores[0], 1.0);
        assert!(p.asserted(0));
        assert_eq!(predict(&all, &[0; 8]).unwrap().scores[0], 0.0);
    }

    #[test]
    fn constant_label_predictors() {
        let data = exhaustive(4, 1);
        let model = fit(
            &data,
            &Hyperparams {
                n_trees: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.per_label[1].len(), 1);
        assert_eq!(model.label_importance[1].iter().sum::<f64>(), 0.0);
        assert_eq!(model.warnings.len(), 1);
        let p = predict(&model, &[0, 0, 0, 0]).unwrap();
        assert_eq!(p.scores[1], 1.0);
        assert!(p.asserted(1));

        let (f, l) = names(2, 1);
        let never = SampleMatrix::new(vec![vec![0, 0], vec![1, 1]], vec![vec![0], vec![0]], f, l).unwrap();
        let model = fit(&never, &Hyperparams::default()).unwrap();
        let p = predict(&model, &[0, 0]).unwrap();
        assert_eq!(p.scores[0], 0.0);
        assert!(p.labels.is_empty());
    }

    #[test]
    fn deterministic_for_seed() {
        let data = exhaustive(6, 2);
        let hp = Hyperparams {
            n_trees: 20,
            seed: 1234,
            ..Default::default()
        };
        let a = fit(&data, &hp).unwrap();
        let b = fit(&data, &hp).unwrap();
        assert_eq!(a, b);
        let c = fit(&data, &Hyperparams { seed: 99, ..hp }).unwrap();
        assert_ne!(a.per_label, c.per_label);
    }

    #[test]
    fn same_model_on_any_thread_count() {
        let data = exhaustive(6, 3);
        let hp = Hyperparams {
            n_trees: 16,
            seed: 5,
            ..Default::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| fit(&data, &hp)).unwrap();
        let b = many.install(|| fit(&data, &hp)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn importance_sums_to_one() {
        let data = exhaustive(5, 0);
        let model = fit(
            &data,
            &Hyperparams {
                n_trees: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let all = feature_importance_report(&model, 5);
        assert_eq!(all.len(), 5);
        assert!((all.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(model.importance.iter().all(|&v| v >= 0.0));
        assert!(all.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn dimension_mismatch() {
        let model = fit(
            &exhaustive(3, 0),
            &Hyperparams {
                n_trees: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            predict(&model, &[1, 0]),
            Err(ForestError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn score_at_threshold_is_asserted() {
        let (f, l) = names(1, 1);
        let model = MultiLabelForest {
            per_label: vec![vec![DecisionTree::leaf(1.0), DecisionTree::leaf(0.0)]],
            hyperparams: Hyperparams::default(),
            feature_names: f,
            label_names: l,
            importance: vec![0.0],
            label_importance: vec![vec![0.0]],
            warnings: vec![],
        };
        let p = predict(&model, &[0]).unwrap();
        assert_eq!(p.scores, vec![0.5]);
        assert!(p.asserted(0));
    }

    #[test]
    fn score_is_vote_fraction() {
        let data = exhaustive(5, 4);
        let model = fit(
            &data,
            &Hyperparams {
                n_trees: 7,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for r in 0..data.n_rows() {
            let row = data.row(r);
            let votes = model.per_label[0].iter().filter(|t| t.leaf_fraction(row) > 0.5).count();
            assert_eq!(model.score(0, row), votes as f64 / 7.0);
        }
    }

    #[test]
    fn importance_csv() {
        let (f, _) = names(2, 1);
        let mut buf = Vec::new();
        write_importance_csv(&[(f[0].clone(), 0.101988)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "au,importance\nunit 00,0.101988\n");
    }
}
