//! Second-order gradient boosting of regression trees on the logistic
//! loss, with the XGBoost parameterization.
//!
//! For a node with gradient sum `G` and hessian sum `H` the optimal
//! weight under L2 penalty `lambda` and L1 penalty `alpha` is
//!
//! ```text
//! w = −T(G) / (H + lambda),   T(G) = sign(G) · max(|G| − alpha, 0)
//! ```
//!
//! and the node's score is `T(G)² / (H + lambda)`. A split is kept when
//! half the score gain exceeds [`MIN_SPLIT_GAIN`] and both children carry
//! a hessian sum of at least `min_child_weight`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::elastic_net::sigmoid;
use crate::dataset::Dataset;
use crate::seed;

pub const MIN_SPLIT_GAIN: f64 = 1e-6;
const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub nrounds: usize,
    pub eta: f64,
    pub subsample: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
    pub lambda: f64,
    pub alpha: f64,
}

/// L1 soft-threshold of a gradient sum.
pub fn threshold_l1(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

pub fn leaf_weight(g: f64, h: f64, alpha: f64, lambda: f64) -> f64 {
    -threshold_l1(g, alpha) / (h + lambda)
}

fn node_score(g: f64, h: f64, alpha: f64, lambda: f64) -> f64 {
    let t = threshold_l1(g, alpha);
    t * t / (h + lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { value } => return *value,
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    /// Initial margin: log-odds of the training positive rate.
    pub base_margin: f64,
    pub trees: Vec<RegTree>,
}

fn sample_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).round() as usize).clamp(1, total)
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    p: usize,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a BoostParams,
    /// Candidate features per depth level.
    levels: Vec<Vec<usize>>,
    nodes: Vec<RegNode>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i], h + self.hess[i])
        });
        let id = self.nodes.len();
        let leaf = RegNode::Leaf {
            value: self.params.eta * leaf_weight(g, h, self.params.alpha, self.params.lambda),
        };
        self.nodes.push(leaf);
        if depth >= self.params.max_depth || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows, g, h, depth) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i * self.p + feature] <= threshold);
        let l = self.build(&left, depth + 1);
        let r = self.build(&right, depth + 1);
        self.nodes[id] = RegNode::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64, depth: usize) -> Option<(usize, f64)> {
        let BoostParams {
            alpha,
            lambda,
            min_child_weight,
            ..
        } = *self.params;
        let parent = node_score(g, h, alpha, lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut column: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for &feature in &self.levels[depth.min(self.levels.len() - 1)] {
            column.clear();
            column.extend(rows.iter().map(|&i| (self.x[i * self.p + feature], i)));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 1..column.len() {
                let prev = column[k - 1].1;
                gl += self.grad[prev];
                hl += self.hess[prev];
                if column[k - 1].0 == column[k].0 {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < min_child_weight || hr < min_child_weight {
                    continue;
                }
                let gain = 0.5
                    * (node_score(gl, hl, alpha, lambda) + node_score(gr, hr, alpha, lambda)
                        - parent);
                if gain > MIN_SPLIT_GAIN && best.is_none_or(|b| gain > b.0) {
                    let (lo, hi) = (column[k - 1].0, column[k].0);
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((gain, feature, if mid < hi { mid } else { lo }));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

impl Booster {
    pub fn fit(train: &Dataset, params: &BoostParams, rng: &mut seed::Rng) -> Self {
        let n = train.n_rows();
        let p = train.n_cols();
        let y = train.labels();
        let rate = y.iter().filter(|&&v| v == 1).count() as f64 / n as f64;
        let base_margin = (rate / (1.0 - rate)).ln();
        let mut margin = vec![base_margin; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let n_rows = sample_count(params.subsample, n);
        let n_tree_cols = sample_count(params.colsample_bytree, p);
        let n_level_cols = sample_count(params.colsample_bylevel, n_tree_cols);
        let mut trees = Vec::with_capacity(params.nrounds);
        for _ in 0..params.nrounds {
            for i in 0..n {
                let prob = sigmoid(margin[i]);
                grad[i] = prob - f64::from(y[i]);
                hess[i] = (prob * (1.0 - prob)).max(MIN_HESSIAN);
            }
            let mut rows = if n_rows < n {
                index::sample(rng, n, n_rows).into_vec()
            } else {
                (0..n).collect()
            };
            rows.sort_unstable();
            let tree_cols = pick(rng, &(0..p).collect::<Vec<_>>(), n_tree_cols);
            let levels = (0..params.max_depth.max(1))
                .map(|_| pick(rng, &tree_cols, n_level_cols))
                .collect();
            let mut builder = TreeBuilder {
                x: train.features(),
                p,
                grad: &grad,
                hess: &hess,
                params,
                levels,
                nodes: Vec::new(),
            };
            builder.build(&rows, 0);
            let tree = RegTree {
                nodes: builder.nodes,
            };
            for (i, m) in margin.iter_mut().enumerate() {
                *m += tree.predict_row(train.row(i));
            }
            trees.push(tree);
        }
        Self { base_margin, trees }
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_margin + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    /// 1 when the predicted probability exceeds 0.5; exactly 0.5 maps to 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(sigmoid(self.margin(row)) > 0.5)
    }
}

fn pick(rng: &mut seed::Rng, from: &[usize], k: usize) -> Vec<usize> {
    if k >= from.len() {
        return from.to_vec();
    }
    let mut chosen: Vec<usize> = index::sample(rng, from.len(), k)
        .into_iter()
        .map(|j| from[j])
        .collect();
    chosen.sort_unstable();
    chosen
}
