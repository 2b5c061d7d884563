//! Bagged ensemble of Gini-impurity decision trees with majority voting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::data::{Category, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate attributes per split; `None` means `ceil(sqrt(m))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 200,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(Category),
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> Category {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    num_categories: usize,
    input_dim: usize,
}

impl RandomForest {
    /// Assembles a forest from already-built trees.
    pub fn from_trees(trees: Vec<DecisionTree>, num_categories: usize, input_dim: usize) -> Self {
        RandomForest {
            trees,
            num_categories,
            input_dim,
        }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    /// Parses a forest written by [`RandomForest::to_json`] and checks that
    /// every node reference and leaf category is in range.
    pub fn from_json(text: &str) -> Result<Self> {
        let forest: RandomForest =
            serde_json::from_str(text).map_err(|e| Error::format("forest", e.to_string()))?;
        if forest.trees.is_empty() || forest.num_categories == 0 {
            return Err(Error::format("forest", "no trees or no categories"));
        }
        for tree in &forest.trees {
            let n = tree.nodes.len();
            let ok = n > 0
                && tree.nodes.iter().enumerate().all(|(at, node)| match node {
                    Node::Leaf(c) => c.0 >= 1 && c.0 <= forest.num_categories,
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => {
                        *feature < forest.input_dim
                            && (at + 1..n).contains(left)
                            && (at + 1..n).contains(right)
                    }
                });
            if !ok {
                return Err(Error::format("forest", "tree references out of range"));
            }
        }
        Ok(forest)
    }

    pub fn predict_row(&self, row: &[f64]) -> Category {
        let mut votes = vec![0usize; self.num_categories];
        for tree in &self.trees {
            votes[tree.predict_row(row).index()] += 1;
        }
        majority(&votes)
    }
}

impl Classifier for RandomForest {
    fn num_categories(&self) -> usize {
        self.num_categories
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<Category>> {
        if let Some(bad) = rows.iter().find(|r| r.len() != self.input_dim) {
            return Err(Error::Schema(format!(
                "row of length {} for a model over {} attributes",
                bad.len(),
                self.input_dim
            )));
        }
        if rows.len() >= 256 {
            Ok(rows.par_iter().map(|r| self.predict_row(r)).collect())
        } else {
            Ok(rows.iter().map(|r| self.predict_row(r)).collect())
        }
    }

    fn descriptor(&self) -> String {
        format!("random-forest(trees={})", self.trees.len())
    }
}

/// Most frequent category; ties go to the lowest id.
fn majority(counts: &[usize]) -> Category {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Category::from_index(best)
}

pub fn train_forest(train: &Dataset, config: &ForestConfig) -> Result<RandomForest> {
    let labels = train
        .source_labels()
        .ok_or_else(|| Error::Schema("training a forest requires source labels".into()))?;
    if config.num_trees == 0 {
        return Err(Error::InvalidConfig("num_trees must be at least 1".into()));
    }
    if config.min_leaf == 0 {
        return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
    }
    if train.len() < config.min_leaf {
        return Err(Error::InsufficientData(format!(
            "{} rows but min_leaf = {}",
            train.len(),
            config.min_leaf
        )));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::SingleClassTraining);
    }
    let m = train.num_attributes();
    let mtry = config
        .features_per_split
        .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
        .clamp(1, m);
    let builder = TreeBuilder {
        rows: train.rows(),
        labels,
        num_categories: train.category_names().len(),
        mtry,
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
    };
    let trees = (0..config.num_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let n = train.len();
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            builder.build(sample, &mut rng)
        })
        .collect();
    Ok(RandomForest {
        trees,
        num_categories: builder.num_categories,
        input_dim: m,
    })
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [Category],
    num_categories: usize,
    mtry: usize,
    max_depth: Option<usize>,
    min_leaf: usize,
}

struct SplitChoice {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&self, sample: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        let mut nodes = vec![Node::Leaf(Category(1))];
        // (node slot, members, depth)
        let mut stack = vec![(0usize, sample, 0usize)];
        while let Some((slot, members, depth)) = stack.pop() {
            let counts = self.counts(&members);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
            let split = if pure || depth_capped || members.len() < 2 * self.min_leaf {
                None
            } else {
                self.best_split(&members, rng)
            };
            match split {
                None => nodes[slot] = Node::Leaf(majority(&counts)),
                Some(choice) => {
                    let (left, right): (Vec<usize>, Vec<usize>) = members
                        .iter()
                        .partition(|&&i| self.rows[i][choice.feature] <= choice.threshold);
                    let l = nodes.len();
                    nodes.push(Node::Leaf(Category(1)));
                    nodes.push(Node::Leaf(Category(1)));
                    nodes[slot] = Node::Split {
                        feature: choice.feature,
                        threshold: choice.threshold,
                        left: l,
                        right: l + 1,
                    };
                    stack.push((l + 1, right, depth + 1));
                    stack.push((l, left, depth + 1));
                }
            }
        }
        DecisionTree { nodes }
    }

    fn counts(&self, members: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_categories];
        for &i in members {
            counts[self.labels[i].index()] += 1;
        }
        counts
    }

    /// Draws attributes in random order until `mtry` non-constant ones have
    /// been scored, then keeps the lowest weighted Gini impurity. Ties go to
    /// the lowest attribute index, then the lowest threshold.
    fn best_split(&self, members: &[usize], rng: &mut ChaCha8Rng) -> Option<SplitChoice> {
        let m = self.rows[0].len();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        let mut best: Option<SplitChoice> = None;
        let mut scored = 0;
        let mut values: Vec<(f64, usize)> = Vec::with_capacity(members.len());
        for feature in order {
            if scored == self.mtry {
                break;
            }
            values.clear();
            values.extend(members.iter().map(|&i| (self.rows[i][feature], i)));
            values.sort_by(|a, b| a.0.total_cmp(&b.0));
            if values[0].0 == values[values.len() - 1].0 {
                continue;
            }
            scored += 1;
            if let Some(candidate) = self.scan_feature(feature, &values) {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        candidate.impurity < b.impurity
                            || (candidate.impurity == b.impurity
                                && (candidate.feature, candidate.threshold)
                                    < (b.feature, b.threshold))
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        best
    }

    fn scan_feature(&self, feature: usize, sorted: &[(f64, usize)]) -> Option<SplitChoice> {
        let n = sorted.len();
        let mut right = vec![0usize; self.num_categories];
        for &(_, i) in sorted {
            right[self.labels[i].index()] += 1;
        }
        let mut left = vec![0usize; self.num_categories];
        let mut best: Option<SplitChoice> = None;
        for pos in 0..n - 1 {
            let c = self.labels[sorted[pos].1].index();
            left[c] += 1;
            right[c] -= 1;
            let (lo, hi) = (sorted[pos].0, sorted[pos + 1].0);
            let n_left = pos + 1;
            if lo == hi || n_left < self.min_leaf || n - n_left < self.min_leaf {
                continue;
            }
            let impurity = (n_left as f64 * gini(&left, n_left)
                + (n - n_left) as f64 * gini(&right, n - n_left))
                / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(SplitChoice {
                    impurity,
                    feature,
                    threshold: midpoint(lo, hi),
                });
            }
        }
        best
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    // Guard against rounding onto the upper value for adjacent floats.
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}
