//! Line-oriented model file. See `docs/model-format.md` for the layout.
//!
//! Reals are written with Rust's shortest round-trip formatting, so a loaded
//! model reproduces the saved leaf fractions and importances bit for bit.

use std::io::{BufRead, BufReader, Read, Write};

use super::{DecisionTree, FeaturesPerSplit, ForestError, Hyperparams, MultiLabelForest, Node};
use crate::corpus::FeatureId;
use crate::lexicon::EmotionLabel;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "signaffect-forest";

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_model<W: Write>(model: &MultiLabelForest, out: W) -> Result<(), ForestError> {
    let mut out = std::io::BufWriter::new(out);
    let hp = &model.hyperparams;
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "n_trees {}", hp.n_trees)?;
    match hp.max_depth {
        Some(d) => writeln!(out, "max_depth {d}")?,
        None => writeln!(out, "max_depth none")?,
    }
    writeln!(out, "min_samples_split {}", hp.min_samples_split)?;
    writeln!(out, "features_per_split {}", hp.features_per_split)?;
    writeln!(out, "bootstrap {}", hp.bootstrap)?;
    writeln!(out, "seed {}", hp.seed)?;
    writeln!(out, "vote_threshold {:?}", hp.vote_threshold)?;
    writeln!(out, "balanced {}", hp.balanced)?;
    writeln!(out, "features {}", model.feature_names.len())?;
    for f in &model.feature_names {
        writeln!(out, "feature\t{}\t{}\t{}", f.category(), f.kind(), f.value())?;
    }
    writeln!(out, "labels {}", model.label_names.len())?;
    for l in &model.label_names {
        writeln!(out, "label\t{}\t{}", l.lexicon, l.category)?;
    }
    writeln!(out, "importance {}", floats(&model.importance))?;
    for (j, imp) in model.label_importance.iter().enumerate() {
        writeln!(out, "label_importance {j} {}", floats(imp))?;
    }
    for (j, trees) in model.per_label.iter().enumerate() {
        writeln!(out, "ensemble {j} {}", trees.len())?;
        for t in trees {
            writeln!(out, "tree {}", t.nodes.len())?;
            for node in &t.nodes {
                match node {
                    Node::Split { feature, left, right } => writeln!(out, "s {feature} {left} {right}")?,
                    Node::Leaf { fraction } => writeln!(out, "l {fraction:?}")?,
                }
            }
        }
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<BufReader<R>>,
    line: usize,
}

impl<R: Read> Lines<R> {
    fn err(&self, reason: impl Into<String>) -> ForestError {
        ForestError::Format {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<String, ForestError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn keyed(&mut self, key: &str) -> Result<String, ForestError> {
        let line = self.next()?;
        let mut parts = line.splitn(2, [' ', '\t']);
        if parts.next() != Some(key) {
            return Err(self.err(format!("expected `{key}`")));
        }
        Ok(parts.next().unwrap_or("").to_string())
    }

    fn parse<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, ForestError> {
        s.trim().parse().map_err(|_| self.err(format!("bad {what} `{s}`")))
    }

    fn floats(&self, s: &str, n: usize) -> Result<Vec<f64>, ForestError> {
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|t| self.parse(t, "real"))
            .collect::<Result<_, _>>()?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

pub fn read_model<R: Read>(input: R) -> Result<MultiLabelForest, ForestError> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        line: 0,
    };
    let version = lines.keyed(MAGIC)?;
    if lines.parse::<u32>(&version, "version")? != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported format version {version}")));
    }

    let n_trees = lines.keyed("n_trees")?;
    let n_trees = lines.parse(&n_trees, "n_trees")?;
    let max_depth = match lines.keyed("max_depth")?.as_str() {
        "none" => None,
        d => Some(lines.parse(d, "max_depth")?),
    };
    let mss = lines.keyed("min_samples_split")?;
    let fps = lines.keyed("features_per_split")?;
    let bootstrap = lines.keyed("bootstrap")?;
    let seed = lines.keyed("seed")?;
    let vote = lines.keyed("vote_threshold")?;
    let balanced = lines.keyed("balanced")?;
    let hyperparams = Hyperparams {
        n_trees,
        max_depth,
        min_samples_split: lines.parse(&mss, "min_samples_split")?,
        features_per_split: fps.parse::<FeaturesPerSplit>().map_err(|e| lines.err(e))?,
        bootstrap: lines.parse(&bootstrap, "bootstrap")?,
        seed: lines.parse(&seed, "seed")?,
        vote_threshold: lines.parse(&vote, "vote_threshold")?,
        balanced: lines.parse(&balanced, "balanced")?,
    };
    hyperparams.validate().map_err(|e| lines.err(e.to_string()))?;

    let d: usize = {
        let s = lines.keyed("features")?;
        lines.parse(&s, "feature count")?
    };
    let mut feature_names = Vec::with_capacity(d);
    for _ in 0..d {
        let rest = lines.keyed("feature")?;
        let parts: Vec<&str> = rest.split('\t').collect();
        if parts.len() != 3 {
            return Err(lines.err("feature needs category, type and value"));
        }
        let category = parts[0].parse().map_err(|e: String| lines.err(e))?;
        feature_names.push(FeatureId::new(category, parts[1], parts[2]));
    }
    let l: usize = {
        let s = lines.keyed("labels")?;
        lines.parse(&s, "label count")?
    };
    let mut label_names = Vec::with_capacity(l);
    for _ in 0..l {
        let rest = lines.keyed("label")?;
        let (lexicon, category) = rest
            .split_once('\t')
            .ok_or_else(|| lines.err("label needs lexicon and category"))?;
        label_names.push(EmotionLabel::new(lexicon, category));
    }

    let imp = lines.keyed("importance")?;
    let importance = lines.floats(&imp, d)?;
    let mut label_importance = Vec::with_capacity(l);
    for j in 0..l {
        let rest = lines.keyed("label_importance")?;
        let (idx, values) = rest.split_once(' ').unwrap_or((rest.as_str(), ""));
        if lines.parse::<usize>(idx, "label index")? != j {
            return Err(lines.err("label_importance out of order"));
        }
        label_importance.push(lines.floats(values, d)?);
    }

    let mut per_label = Vec::with_capacity(l);
    for j in 0..l {
        let rest = lines.keyed("ensemble")?;
        let (idx, count) = rest
            .split_once(' ')
            .ok_or_else(|| lines.err("ensemble needs index and size"))?;
        if lines.parse::<usize>(idx, "label index")? != j {
            return Err(lines.err("ensemble out of order"));
        }
        let count: usize = lines.parse(count, "tree count")?;
        if count == 0 {
            return Err(lines.err("empty ensemble"));
        }
        let mut trees = Vec::with_capacity(count);
        for _ in 0..count {
            let n = lines.keyed("tree")?;
            let n: usize = lines.parse(&n, "node count")?;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                let line = lines.next()?;
                let fields: Vec<&str> = line.split(' ').collect();
                let node = match fields.as_slice() {
                    ["s", f, a, b] => {
                        let feature: u32 = lines.parse(f, "feature index")?;
                        let (left, right): (u32, u32) = (lines.parse(a, "child")?, lines.parse(b, "child")?);
                        if feature as usize >= d || left as usize >= n || right as usize >= n {
                            return Err(lines.err("node index out of range"));
                        }
                        Node::Split { feature, left, right }
                    }
                    ["l", v] => {
                        let fraction: f64 = lines.parse(v, "leaf fraction")?;
                        if !(0.0..=1.0).contains(&fraction) {
                            return Err(lines.err("leaf fraction outside [0, 1]"));
                        }
                        Node::Leaf { fraction }
                    }
                    _ => return Err(lines.err("expected `s <feature> <left> <right>` or `l <fraction>`")),
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(lines.err("tree without nodes"));
            }
            trees.push(DecisionTree {
                nodes,
                trained_on: Vec::new(),
            });
        }
        per_label.push(trees);
    }
    if lines.next()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    while let Some(extra) = lines.inner.next() {
        lines.line += 1;
        if !extra?.trim().is_empty() {
            return Err(lines.err("content after `end`"));
        }
    }

    Ok(MultiLabelForest {
        per_label,
        hyperparams,
        feature_names,
        label_names,
        importance,
        label_importance,
        warnings: Vec::new(),
    })
}
