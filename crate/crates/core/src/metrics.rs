//! K-fold cross-validation and multi-label precision/recall/F1.
//!
//! Counts are pooled across folds per label before any ratio is taken, and
//! every ratio with a zero denominator is defined as 0.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{self, ForestError, Hyperparams, SampleMatrix};
use crate::lexicon::EmotionLabel;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("cannot split {units} {what} into {k} folds")]
    TooFewRows { units: usize, k: usize, what: &'static str },
    #[error("group list has {got} entries for {expected} rows")]
    GroupShape { expected: usize, got: usize },
    #[error("no labels to aggregate")]
    NoLabels,
    #[error("fold assignment covers {got} rows, data has {expected}")]
    FoldShape { expected: usize, got: usize },
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Frame,
    Utterance,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Frame => "frame",
            Grouping::Utterance => "utterance",
        })
    }
}

impl std::str::FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frame" => Ok(Grouping::Frame),
            "utterance" => Ok(Grouping::Utterance),
            _ => Err(format!("unknown fold grouping `{s}` (expected frame or utterance)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub grouping: Grouping,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<u32> {
        (0..self.fold_of.len() as u32)
            .filter(|&r| self.fold_of[r as usize] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<u32> {
        (0..self.fold_of.len() as u32)
            .filter(|&r| self.fold_of[r as usize] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffle rows (or whole groups, when `groups` is given) with the seeded
/// generator and deal them round-robin into `k` folds. Under frame grouping
/// fold sizes differ by at most one.
pub fn kfold_split(n_rows: usize, k: usize, seed: u64, groups: Option<&[u64]>) -> Result<FoldAssignment, MetricsError> {
    if k < 2 {
        return Err(MetricsError::TooFewFolds(k));
    }
    let mut rng = SplitMix64::new(seed);
    match groups {
        None => {
            if n_rows < k {
                return Err(MetricsError::TooFewRows {
                    units: n_rows,
                    k,
                    what: "rows",
                });
            }
            let mut order: Vec<usize> = (0..n_rows).collect();
            rng.shuffle(&mut order);
            let mut fold_of = vec![0; n_rows];
            for (pos, &row) in order.iter().enumerate() {
                fold_of[row] = pos % k;
            }
            Ok(FoldAssignment {
                fold_of,
                k,
                seed,
                grouping: Grouping::Frame,
            })
        }
        Some(groups) => {
            if groups.len() != n_rows {
                return Err(MetricsError::GroupShape {
                    expected: n_rows,
                    got: groups.len(),
                });
            }
            let mut distinct: Vec<u64> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            if distinct.len() < k {
                return Err(MetricsError::TooFewRows {
                    units: distinct.len(),
                    k,
                    what: "groups",
                });
            }
            rng.shuffle(&mut distinct);
            let fold_of_group: BTreeMap<u64, usize> = distinct.iter().enumerate().map(|(i, &g)| (g, i % k)).collect();
            Ok(FoldAssignment {
                fold_of: groups.iter().map(|g| fold_of_group[g]).collect(),
                k,
                seed,
                grouping: Grouping::Utterance,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

pub fn prf(tp: u64, fp: u64, fn_: u64) -> Prf {
    let precision = ratio(tp as f64, (tp + fp) as f64);
    let recall = ratio(tp as f64, (tp + fn_) as f64);
    Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: EmotionLabel,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl LabelMetrics {
    pub fn from_counts(label: EmotionLabel, tp: u64, fp: u64, fn_: u64) -> Self {
        let m = prf(tp, fp, fn_);
        Self {
            label,
            tp,
            fp,
            fn_,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            support: tp + fn_,
        }
    }
}

/// Counts of one fold, for the JSON breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldBreakdown {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Held-out rows whose feature vector also occurs in the training rows.
    pub test_rows_seen_in_train: usize,
    /// `[tp, fp, fn]` per label, in report order.
    pub counts: Vec<[u64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_label: Vec<LabelMetrics>,
    pub micro: Prf,
    pub weighted: Prf,
    pub total_support: u64,
    #[serde(default)]
    pub folds: Vec<FoldBreakdown>,
    /// Labels that are present on every row (any predictor has recall 1).
    #[serde(default)]
    pub degenerate: Vec<EmotionLabel>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub fn aggregate(per_label: Vec<LabelMetrics>) -> Result<EvalReport, MetricsError> {
    if per_label.is_empty() {
        return Err(MetricsError::NoLabels);
    }
    let (tp, fp, fn_) = per_label
        .iter()
        .fold((0, 0, 0), |(a, b, c), m| (a + m.tp, b + m.fp, c + m.fn_));
    let total_support: u64 = per_label.iter().map(|m| m.support).sum();
    let mut warnings = Vec::new();

    let (micro, weighted) = if total_support == 0 {
        warnings.push("total support is 0; aggregate metrics reported as 0".to_string());
        (Prf::default(), Prf::default())
    } else {
        let w = |get: fn(&LabelMetrics) -> f64| {
            per_label.iter().map(|m| m.support as f64 * get(m)).sum::<f64>() / total_support as f64
        };
        (
            prf(tp, fp, fn_),
            Prf {
                precision: w(|m| m.precision),
                recall: w(|m| m.recall),
                f1: w(|m| m.f1),
            },
        )
    };
    Ok(EvalReport {
        per_label,
        micro,
        weighted,
        total_support,
        folds: Vec::new(),
        degenerate: Vec::new(),
        warnings,
    })
}

/// Train on each fold's complement, predict the fold, pool counts per label.
pub fn evaluate_cv(data: &SampleMatrix, hp: &Hyperparams, folds: &FoldAssignment) -> Result<EvalReport, MetricsError> {
    if folds.fold_of.len() != data.n_rows() {
        return Err(MetricsError::FoldShape {
            expected: data.n_rows(),
            got: folds.fold_of.len(),
        });
    }
    let l = data.n_labels();
    let mut pooled = vec![[0u64; 3]; l];
    let mut breakdown = Vec::with_capacity(folds.k);
    let mut warnings = Vec::new();

    for fold in 0..folds.k {
        let test = folds.test_rows(fold);
        let train = folds.train_rows(fold);
        if test.is_empty() || train.is_empty() {
            warnings.push(format!("fold {fold}: empty train or test side, skipped"));
            continue;
        }
        let model = forest::fit_rows(data, &train, hp)?;
        warnings.extend(model.warnings.iter().map(|w| format!("fold {fold}: {w}")));

        let seen: HashSet<&[u8]> = train.iter().map(|&r| data.row(r as usize)).collect();
        let mut counts = vec![[0u64; 3]; l];
        let mut leaked = 0;
        for &r in &test {
            let row = data.row(r as usize);
            leaked += usize::from(seen.contains(row));
            let p = forest::predict(&model, row)?;
            for (j, c) in counts.iter_mut().enumerate() {
                match (p.asserted(j), data.y(r as usize, j) == 1) {
                    (true, true) => c[0] += 1,
                    (true, false) => c[1] += 1,
                    (false, true) => c[2] += 1,
                    (false, false) => {}
                }
            }
        }
        for (acc, c) in pooled.iter_mut().zip(&counts) {
            for i in 0..3 {
                acc[i] += c[i];
            }
        }
        breakdown.push(FoldBreakdown {
            fold,
            train_rows: train.len(),
            test_rows: test.len(),
            test_rows_seen_in_train: leaked,
            counts,
        });
    }

    let per_label = data
        .label_names
        .iter()
        .zip(&pooled)
        .map(|(name, c)| LabelMetrics::from_counts(name.clone(), c[0], c[1], c[2]))
        .collect();
    let mut report = aggregate(per_label)?;
    report.degenerate = (0..l)
        .filter(|&j| (0..data.n_rows()).all(|r| data.y(r, j) == 1))
        .map(|j| data.label_names[j].clone())
        .collect();
    let leaked: usize = breakdown.iter().map(|b| b.test_rows_seen_in_train).sum();
    if folds.grouping == Grouping::Frame && leaked > 0 {
        warnings.push(format!(
            "{leaked} of {} held-out rows have an identical feature vector in their training split \
             (frame-level folds; consider utterance grouping)",
            data.n_rows()
        ));
    }
    report.folds = breakdown;
    report.warnings.extend(warnings);
    Ok(report)
}

/// Half away from zero, two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// `feature,precision,recall,f1,support` with per-label rows followed by
/// `micro avg` and `weighted avg`. Values are rounded to two decimals.
pub fn write_eval_csv<W: Write>(report: &EvalReport, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["feature", "precision", "recall", "f1", "support"])?;
    let row = |name: String, p: f64, r: f64, f: f64, s: u64| {
        [
            name,
            format!("{:.2}", round2(p)),
            format!("{:.2}", round2(r)),
            format!("{:.2}", round2(f)),
            s.to_string(),
        ]
    };
    for m in &report.per_label {
        writer.write_record(row(m.label.to_string(), m.precision, m.recall, m.f1, m.support))?;
    }
    let (mi, we) = (report.micro, report.weighted);
    writer.write_record(row(
        "micro avg".into(),
        mi.precision,
        mi.recall,
        mi.f1,
        report.total_support,
    ))?;
    writer.write_record(row(
        "weighted avg".into(),
        we.precision,
        we.recall,
        we.f1,
        report.total_support,
    ))?;
    writer.flush()?;
    Ok(())
}
