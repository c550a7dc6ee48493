use crate::rng::SplitMix64;

use super::{FeaturesPerSplit, Hyperparams, SampleMatrix};

/// Relative to the node weight: gains closer than this are equal, and a
/// split gaining no more than this is not made.
const TIE_TOLERANCE: f64 = 1e-12;

/// Gini impurity of a binary node, `1 - p^2 - (1-p)^2` with `p = pos / (pos + neg)`.
pub fn gini(pos: u64, neg: u64) -> Result<f64, super::ForestError> {
    if pos + neg == 0 {
        return Err(super::ForestError::EmptyNode);
    }
    Ok(weighted_gini(pos as f64, neg as f64))
}

pub(crate) fn weighted_gini(pos: f64, neg: f64) -> f64 {
    let p = pos / (pos + neg);
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] == 1` go right.
    Split { feature: u32, left: u32, right: u32 },
    /// Weighted fraction of positive training rows that reached the leaf.
    Leaf { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
    /// Bootstrap multiset of training row indices, sorted. Empty for
    /// deserialized trees.
    pub trained_on: Vec<u32>,
}

impl DecisionTree {
    pub fn leaf(fraction: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { fraction }],
            trained_on: Vec::new(),
        }
    }

    pub fn leaf_fraction(&self, row: &[u8]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { fraction } => return fraction,
                Node::Split { feature, left, right } => {
                    at = if row[feature as usize] == 1 { right } else { left } as usize;
                }
            }
        }
    }

    /// A tree votes positive when its leaf fraction is strictly above 1/2.
    pub fn votes_positive(&self, row: &[u8]) -> bool {
        self.leaf_fraction(row) > 0.5
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) struct GrownTree {
    pub tree: DecisionTree,
    /// Impurity decrease per feature, as a fraction of the root weight.
    pub importance: Vec<f64>,
}

struct Builder<'a> {
    data: &'a SampleMatrix,
    label: usize,
    hp: &'a Hyperparams,
    weight: Vec<f64>,
    /// Number of bootstrap draws per row.
    draws: Vec<u32>,
    rng: SplitMix64,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    root_weight: f64,
    n_candidates: usize,
}

struct Stats {
    pos: f64,
    neg: f64,
    draws: u64,
}

impl Builder<'_> {
    fn stats(&self, rows: &[u32]) -> Stats {
        let mut s = Stats {
            pos: 0.0,
            neg: 0.0,
            draws: 0,
        };
        for &r in rows {
            let r = r as usize;
            if self.data.y(r, self.label) == 1 {
                s.pos += self.weight[r];
            } else {
                s.neg += self.weight[r];
            }
            s.draws += self.draws[r] as u64;
        }
        s
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let node = self.stats(rows);
        let total = node.pos + node.neg;
        let fraction = node.pos / total;
        self.nodes.push(Node::Leaf { fraction });

        let stop = self.hp.max_depth.is_some_and(|m| depth >= m)
            || node.draws < self.hp.min_samples_split as u64
            || node.pos == 0.0
            || node.neg == 0.0;
        if stop {
            return id;
        }

        let d = self.data.n_features();
        let candidates: Vec<usize> = if self.n_candidates >= d {
            (0..d).collect()
        } else {
            let mut c = self.rng.sample_indices(d, self.n_candidates);
            c.sort_unstable();
            c
        };

        let node_impurity = total * weighted_gini(node.pos, node.neg);
        let mut best: Option<(usize, f64)> = None;
        for &f in &candidates {
            let (mut rp, mut rn, mut rdraws) = (0.0, 0.0, 0u64);
            for &r in rows.iter() {
                let r = r as usize;
                if self.data.x(r, f) == 1 {
                    if self.data.y(r, self.label) == 1 {
                        rp += self.weight[r];
                    } else {
                        rn += self.weight[r];
                    }
                    rdraws += self.draws[r] as u64;
                }
            }
            if rdraws == 0 || rdraws == node.draws {
                continue;
            }
            let (lp, ln) = (node.pos - rp, node.neg - rn);
            let children = (lp + ln) * weighted_gini(lp, ln) + (rp + rn) * weighted_gini(rp, rn);
            let gain = node_impurity - children;
            // Gains within rounding of each other are ties; the lower index wins.
            if best.is_none_or(|(_, g)| gain > g + TIE_TOLERANCE * total) {
                best = Some((f, gain));
            }
        }

        let Some((feature, gain)) = best else { return id };
        if gain <= TIE_TOLERANCE * total {
            return id;
        }
        self.importance[feature] += gain / self.root_weight;

        // Partition: x == 0 first.
        let mut split = 0;
        for i in 0..rows.len() {
            if self.data.x(rows[i] as usize, feature) == 0 {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: feature as u32,
            left,
            right,
        };
        id
    }
}

/// Grow one tree for `label` on the given training rows.
pub(crate) fn grow_tree(
    data: &SampleMatrix,
    train_rows: &[u32],
    label: usize,
    hp: &Hyperparams,
    mut rng: SplitMix64,
) -> GrownTree {
    let n = data.n_rows();
    let mut draws = vec![0u32; n];
    let mut trained_on: Vec<u32> = if hp.bootstrap {
        (0..train_rows.len())
            .map(|_| train_rows[rng.below(train_rows.len() as u64) as usize])
            .collect()
    } else {
        train_rows.to_vec()
    };
    trained_on.sort_unstable();
    for &r in &trained_on {
        draws[r as usize] += 1;
    }

    let class_weight = if hp.balanced {
        let pos: f64 = trained_on.iter().filter(|&&r| data.y(r as usize, label) == 1).count() as f64;
        let total = trained_on.len() as f64;
        let neg = total - pos;
        [
            if neg > 0.0 { total / (2.0 * neg) } else { 1.0 },
            if pos > 0.0 { total / (2.0 * pos) } else { 1.0 },
        ]
    } else {
        [1.0, 1.0]
    };
    let mut weight = vec![0.0; n];
    for r in 0..n {
        if draws[r] > 0 {
            weight[r] = draws[r] as f64 * class_weight[data.y(r, label) as usize];
        }
    }

    let mut rows: Vec<u32> = trained_on.clone();
    rows.dedup();
    let root_weight: f64 = rows.iter().map(|&r| weight[r as usize]).sum();

    let n_candidates = match hp.features_per_split {
        FeaturesPerSplit::Sqrt => (data.n_features() as f64).sqrt().ceil() as usize,
        FeaturesPerSplit::All => data.n_features(),
        FeaturesPerSplit::Count(k) => k,
    }
    .clamp(1, data.n_features());

    let mut builder = Builder {
        data,
        label,
        hp,
        weight,
        draws,
        rng,
        nodes: Vec::new(),
        importance: vec![0.0; data.n_features()],
        root_weight,
        n_candidates,
    };
    builder.grow(&mut rows, 0);
    GrownTree {
        tree: DecisionTree {
            nodes: builder.nodes,
            trained_on,
        },
        importance: builder.importance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(10, 0).unwrap(), 0.0);
        assert_eq!(gini(5, 5).unwrap(), 0.5);
        assert_eq!(gini(3, 1).unwrap(), 0.375);
        assert_eq!(gini(0, 4).unwrap(), 0.0);
        assert!(gini(0, 0).is_err());
    }

    #[test]
    fn leaf_tree_votes() {
        assert!(DecisionTree::leaf(1.0).votes_positive(&[0, 1]));
        assert!(!DecisionTree::leaf(0.5).votes_positive(&[0, 1]));
        assert_eq!(DecisionTree::leaf(0.2).depth(), 0);
    }
}
