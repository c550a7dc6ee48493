//! Joint and marginal frame counts over features, and conditional
//! probabilities read off them.
//!
//! `cond_prob(given, target)` is `joint(given, target) / marginal(given)`:
//! the fraction of frames carrying `given` that also carry `target`. Rankings
//! for an emotion label score every candidate feature `f` as
//! `cond_prob(f, label)`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{FeatureId, FrameRecord};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("`{0}` never occurs; conditional probability is undefined")]
    UndefinedSupport(FeatureId),
    #[error("{0}")]
    BadArgument(String),
}

/// Sparse co-occurrence counts. Features are interned; a pair absent from
/// `joint` has joint count 0.
#[derive(Debug, Clone, Default)]
pub struct CoocCounts {
    vocab: Vec<FeatureId>,
    index: HashMap<FeatureId, u32>,
    marginal: Vec<u64>,
    /// Keyed by `(min index, max index)`, diagonal excluded.
    joint: HashMap<(u32, u32), u64>,
    total_frames: u64,
}

impl CoocCounts {
    pub fn total_frames(&self) -> u64 {
        self.total_frames
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn features(&self) -> impl Iterator<Item = &FeatureId> {
        self.vocab.iter()
    }

    pub fn marginal(&self, f: &FeatureId) -> u64 {
        self.index.get(f).map_or(0, |&i| self.marginal[i as usize])
    }

    pub fn joint(&self, a: &FeatureId, b: &FeatureId) -> u64 {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&i), Some(&j)) if i == j => self.marginal[i as usize],
            (Some(&i), Some(&j)) => self.joint.get(&(i.min(j), i.max(j))).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Marginals sorted by feature.
    pub fn marginals(&self) -> BTreeMap<&FeatureId, u64> {
        self.vocab.iter().zip(&self.marginal).map(|(f, &n)| (f, n)).collect()
    }

    fn intern(&mut self, f: &FeatureId) -> u32 {
        if let Some(&i) = self.index.get(f) {
            return i;
        }
        let i = self.vocab.len() as u32;
        self.vocab.push(f.clone());
        self.index.insert(f.clone(), i);
        self.marginal.push(0);
        i
    }

    fn add_frame<'a>(&mut self, features: impl Iterator<Item = &'a FeatureId>) {
        self.total_frames += 1;
        let mut ids: Vec<u32> = features.map(|f| self.intern(f)).collect();
        ids.sort_unstable();
        ids.dedup();
        for (k, &i) in ids.iter().enumerate() {
            self.marginal[i as usize] += 1;
            for &j in &ids[k + 1..] {
                *self.joint.entry((i, j)).or_insert(0) += 1;
            }
        }
    }

    /// Add another set of counts. Addition is commutative and associative,
    /// so shard order never changes query results.
    pub fn merge(&mut self, other: &CoocCounts) {
        let remap: Vec<u32> = other.vocab.iter().map(|f| self.intern(f)).collect();
        for (i, &n) in other.marginal.iter().enumerate() {
            self.marginal[remap[i] as usize] += n;
        }
        for (&(a, b), &n) in &other.joint {
            let (x, y) = (remap[a as usize], remap[b as usize]);
            *self.joint.entry((x.min(y), x.max(y))).or_insert(0) += n;
        }
        self.total_frames += other.total_frames;
    }
}

pub type FeatureFilter<'a> = &'a (dyn Fn(&FeatureId) -> bool + Sync);

pub fn accumulate(frames: &[FrameRecord], filter: Option<FeatureFilter<'_>>) -> CoocCounts {
    let mut counts = CoocCounts::default();
    for frame in frames {
        counts.add_frame(frame.features.iter().filter(|f| filter.is_none_or(|p| p(f))));
    }
    counts
}

/// [`accumulate`] over rayon shards of `chunk` frames, merged in shard order.
pub fn accumulate_par(frames: &[FrameRecord], filter: Option<FeatureFilter<'_>>, chunk: usize) -> CoocCounts {
    frames
        .par_chunks(chunk.max(1))
        .map(|shard| accumulate(shard, filter))
        .collect::<Vec<_>>()
        .iter()
        .fold(CoocCounts::default(), |mut acc, part| {
            acc.merge(part);
            acc
        })
}

pub fn cond_prob(counts: &CoocCounts, given: &FeatureId, target: &FeatureId) -> Result<f64, StatsError> {
    let support = counts.marginal(given);
    if support == 0 {
        return Err(StatsError::UndefinedSupport(given.clone()));
    }
    Ok(counts.joint(given, target) as f64 / support as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondProbEntry {
    pub feature: FeatureId,
    pub probability: f64,
    /// Frames carrying `feature` (the conditioning marginal).
    pub support: u64,
    /// Frames carrying both `feature` and the label.
    pub joint: u64,
}

impl CondProbEntry {
    /// Descending probability (compared exactly as fractions), then higher
    /// support, then feature order.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        let lhs = self.joint as u128 * other.support as u128;
        let rhs = other.joint as u128 * self.support as u128;
        rhs.cmp(&lhs)
            .then_with(|| other.support.cmp(&self.support))
            .then_with(|| self.feature.cmp(&other.feature))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub label: FeatureId,
    pub label_support: u64,
    pub entries: Vec<CondProbEntry>,
    pub warning: Option<String>,
}

pub fn rank_features_for_label(
    counts: &CoocCounts,
    label: &FeatureId,
    k: usize,
    min_support: u64,
) -> Result<Ranking, StatsError> {
    rank_candidates(counts, label, k, min_support, &|_| true)
}

/// Like [`rank_features_for_label`], restricted to candidates accepted by
/// `candidate`. The label itself is never a candidate.
pub fn rank_candidates(
    counts: &CoocCounts,
    label: &FeatureId,
    k: usize,
    min_support: u64,
    candidate: &dyn Fn(&FeatureId) -> bool,
) -> Result<Ranking, StatsError> {
    if k < 1 {
        return Err(StatsError::BadArgument("k must be at least 1".into()));
    }
    if min_support < 1 {
        return Err(StatsError::BadArgument("min_support must be at least 1".into()));
    }
    let label_support = counts.marginal(label);
    if label_support == 0 {
        return Ok(Ranking {
            label: label.clone(),
            label_support,
            entries: Vec::new(),
            warning: Some(format!("label `{label}` does not occur in the corpus")),
        });
    }

    let mut entries: Vec<CondProbEntry> = counts
        .vocab
        .iter()
        .zip(&counts.marginal)
        .filter(|(f, &n)| *f != label && n >= min_support && candidate(f))
        .map(|(f, &support)| {
            let joint = counts.joint(f, label);
            CondProbEntry {
                feature: f.clone(),
                probability: joint as f64 / support as f64,
                support,
                joint,
            }
        })
        .collect();
    entries.sort_by(CondProbEntry::rank_cmp);
    entries.truncate(k);
    Ok(Ranking {
        label: label.clone(),
        label_support,
        entries,
        warning: None,
    })
}

/// `label,feature,probability,support` rows. Probabilities use three
/// decimals unless `full_precision` is set.
pub fn write_rankings_csv<W: Write>(rankings: &[Ranking], full_precision: bool, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["label", "feature", "probability", "support"])?;
    for r in rankings {
        let label = r.label.table_name();
        for e in &r.entries {
            let p = if full_precision {
                format!("{}", e.probability)
            } else {
                format!("{:.3}", e.probability)
            };
            writer.write_record([label.as_str(), &e.feature.table_name(), &p, &e.support.to_string()])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeatureCategory;
    use proptest::prelude::*;

    fn f(name: &str) -> FeatureId {
        FeatureId::facial("t", name)
    }

    fn frame(features: &[&FeatureId]) -> FrameRecord {
        let mut r = FrameRecord::new("v", 0);
        r.features.extend(features.iter().map(|x| (*x).clone()));
        r
    }

    #[test]
    fn single_frame_pair() {
        let (a, b) = (f("a"), f("b"));
        let c = accumulate(&[frame(&[&a, &b])], None);
        assert_eq!((c.marginal(&a), c.marginal(&b), c.joint(&a, &b)), (1, 1, 1));
        assert_eq!(c.joint(&b, &a), 1);
    }

    #[test]
    fn two_frames() {
        let (a, b) = (f("a"), f("b"));
        let c = accumulate(&[frame(&[&a, &b]), frame(&[&a])], None);
        assert_eq!((c.marginal(&a), c.marginal(&b), c.joint(&a, &b)), (2, 1, 1));
        assert_eq!(c.total_frames(), 2);
    }

    #[test]
    fn empty_corpus() {
        let c = accumulate(&[], None);
        assert_eq!(c.total_frames(), 0);
        assert_eq!(c.vocab_len(), 0);
        assert!(matches!(
            cond_prob(&c, &f("a"), &f("b")),
            Err(StatsError::UndefinedSupport(_))
        ));
    }

    #[test]
    fn cond_prob_cases() {
        let (a, b, t) = (f("a"), f("b"), f("target"));
        let frames = [frame(&[&a, &t]), frame(&[&a]), frame(&[&a]), frame(&[&a]), frame(&[&b])];
        let c = accumulate(&frames, None);
        assert_eq!(cond_prob(&c, &a, &a).unwrap(), 1.0);
        assert_eq!(cond_prob(&c, &b, &t).unwrap(), 0.0);
        assert_eq!(cond_prob(&c, &a, &t).unwrap(), 0.25);
        assert_eq!(cond_prob(&c, &t, &a).unwrap(), 1.0);
    }

    #[test]
    fn filter_restricts_vocab() {
        let (a, b) = (f("a"), FeatureId::linguistic("pos", "noun"));
        let only_facial = |x: &FeatureId| x.category() == FeatureCategory::Facial;
        let c = accumulate(&[frame(&[&a, &b])], Some(&only_facial));
        assert_eq!(c.vocab_len(), 1);
        assert_eq!(c.marginal(&b), 0);
    }

    #[test]
    fn planted_ranking() {
        let (fe, g, l) = (f("f"), f("g"), FeatureId::new(FeatureCategory::Emotion, "lex", "sad"));
        let mut frames = Vec::new();
        for _ in 0..20 {
            frames.push(frame(&[&fe, &l]));
        }
        for i in 0..20 {
            if i < 10 {
                frames.push(frame(&[&g, &l]));
            } else {
                frames.push(frame(&[&g]));
            }
        }
        let c = accumulate(&frames, None);
        let r = rank_features_for_label(&c, &l, 10, 10).unwrap();
        let got: Vec<(FeatureId, f64)> = r.entries.iter().map(|e| (e.feature.clone(), e.probability)).collect();
        assert_eq!(got, vec![(fe, 1.0), (g, 0.5)]);
        assert_eq!(r.label_support, 30);
    }

    #[test]
    fn ranking_edge_cases() {
        let (a, b, l) = (f("a"), f("b"), f("label"));
        let c = accumulate(&[frame(&[&a, &l]), frame(&[&b])], None);
        let r = rank_features_for_label(&c, &l, 100, 1).unwrap();
        assert_eq!(r.entries.len(), 2);
        let absent = rank_features_for_label(&c, &f("nope"), 3, 1).unwrap();
        assert!(absent.entries.is_empty());
        assert!(absent.warning.is_some());
        assert!(rank_features_for_label(&c, &l, 0, 1).is_err());
        assert!(rank_features_for_label(&c, &l, 1, 0).is_err());
    }

    #[test]
    fn ties_break_on_support_then_name() {
        let (a, b, z, l) = (f("a"), f("b"), f("z"), f("label"));
        // a: 1/2, b: 2/4, z: 2/4 -> b and z outrank a on support, b before z by name.
        let frames = [
            frame(&[&a, &l]),
            frame(&[&a]),
            frame(&[&b, &z, &l]),
            frame(&[&b, &z, &l]),
            frame(&[&b, &z]),
            frame(&[&b, &z]),
        ];
        let r = rank_features_for_label(&accumulate(&frames, None), &l, 10, 1).unwrap();
        let names: Vec<&str> = r.entries.iter().map(|e| e.feature.value()).collect();
        assert_eq!(names, vec!["b", "z", "a"]);
    }

    #[test]
    fn csv_output() {
        let (a, l) = (f("a"), FeatureId::new(FeatureCategory::Emotion, "empath", "confusion"));
        let c = accumulate(&[frame(&[&a, &l]), frame(&[&a]), frame(&[&a])], None);
        let r = rank_features_for_label(&c, &l, 5, 1).unwrap();
        let mut buf = Vec::new();
        write_rankings_csv(std::slice::from_ref(&r), false, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "label,feature,probability,support\nconfusion (empath),t=a,0.333,3\n"
        );
        let mut buf = Vec::new();
        write_rankings_csv(&[r], true, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("0.3333333333333333"));
    }

    proptest! {
        #[test]
        fn sharded_equals_serial(rows in prop::collection::vec(prop::collection::btree_set(0usize..8, 0..5), 0..60), chunk in 1usize..9) {
            let vocab: Vec<FeatureId> = (0..8).map(|i| f(&i.to_string())).collect();
            let frames: Vec<FrameRecord> = rows.iter().map(|r| frame(&r.iter().map(|&i| &vocab[i]).collect::<Vec<_>>())).collect();
            let serial = accumulate(&frames, None);
            let sharded = accumulate_par(&frames, None, chunk);
            prop_assert_eq!(serial.total_frames(), sharded.total_frames());
            for a in &vocab {
                prop_assert_eq!(serial.marginal(a), sharded.marginal(a));
                for b in &vocab {
                    prop_assert_eq!(serial.joint(a, b), sharded.joint(a, b));
                }
            }
        }

        #[test]
        fn count_invariants(rows in prop::collection::vec(prop::collection::btree_set(0usize..6, 0..6), 1..40)) {
            let vocab: Vec<FeatureId> = (0..6).map(|i| f(&i.to_string())).collect();
            let frames: Vec<FrameRecord> = rows.iter().map(|r| frame(&r.iter().map(|&i| &vocab[i]).collect::<Vec<_>>())).collect();
            let c = accumulate(&frames, None);
            for a in &vocab {
                prop_assert!(c.marginal(a) <= c.total_frames());
                prop_assert_eq!(c.joint(a, a), c.marginal(a));
                for b in &vocab {
                    prop_assert_eq!(c.joint(a, b), c.joint(b, a));
                    prop_assert!(c.joint(a, b) <= c.marginal(a).min(c.marginal(b)));
                    if c.marginal(a) > 0 && c.marginal(b) > 0 {
                        let ab = cond_prob(&c, a, b).unwrap();
                        let ba = cond_prob(&c, b, a).unwrap();
                        prop_assert!((0.0..=1.0).contains(&ab));
                        prop_assert!((ab * c.marginal(a) as f64 - ba * c.marginal(b) as f64).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
