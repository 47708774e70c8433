//! CART classification trees with Gini impurity.
//!
//! Impurities are kept as weighted totals `m · G(node)` where
//! `G = 2 q (1 − q)` for the positive fraction `q`, so a split's decrease
//! is `m·G(parent) − m_L·G(left) − m_R·G(right)`. The complexity
//! parameter is applied while growing: a split is kept only if its
//! decrease is positive and at least `cp` times the root's total.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Nodes with fewer samples are not split.
    pub min_split: usize,
    /// Every child must hold at least this many samples.
    pub min_bucket: usize,
    pub cp: f64,
    /// Features tried per split; all when `None`.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub depth: usize,
    pub n_samples: usize,
    pub n_positive: usize,
    pub split: Option<Split>,
}

impl Node {
    /// Weighted Gini total `m · 2q(1−q)`.
    pub fn impurity(&self) -> f64 {
        gini_total(self.n_positive, self.n_samples)
    }

    /// Majority label, ties to 0.
    pub fn label(&self) -> u8 {
        u8::from(2 * self.n_positive > self.n_samples)
    }
}

pub fn gini_total(positive: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    2.0 * positive as f64 * (total - positive) as f64 / total as f64
}

/// A fitted tree; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

struct Grower<'a> {
    x: &'a [f64],
    y: &'a [u8],
    p: usize,
    params: TreeParams,
    min_decrease: f64,
    nodes: Vec<Node>,
}

impl Tree {
    /// Grows a tree on `rows` of the row-major matrix `x` (`p` columns).
    /// `rows` may repeat indices (bootstrap samples). `rng` is only used
    /// when `params.mtry` restricts the candidate features.
    pub fn fit(
        x: &[f64],
        y: &[u8],
        p: usize,
        rows: &[usize],
        params: TreeParams,
        rng: &mut seed::Rng,
    ) -> Self {
        let n_positive = rows.iter().filter(|&&i| y[i] == 1).count();
        let root_total = gini_total(n_positive, rows.len());
        let mut grower = Grower {
            x,
            y,
            p,
            params,
            min_decrease: params.cp * root_total,
            nodes: Vec::new(),
        };
        let mut rows = rows.to_vec();
        grower.grow(&mut rows, 0, rng);
        Tree {
            nodes: grower.nodes,
        }
    }

    fn leaf(&self, row: &[f64]) -> &Node {
        let mut node = &self.nodes[0];
        while let Some(s) = &node.split {
            node = if row[s.feature] <= s.threshold {
                &self.nodes[s.left]
            } else {
                &self.nodes[s.right]
            };
        }
        node
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        self.leaf(row).label()
    }

    /// Fraction of positive training samples in the leaf reached by `row`.
    pub fn probability(&self, row: &[f64]) -> f64 {
        let leaf = self.leaf(row);
        leaf.n_positive as f64 / leaf.n_samples as f64
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut seed::Rng) -> usize {
        let m = rows.len();
        let n_positive = rows.iter().filter(|&&i| self.y[i] == 1).count();
        let id = self.nodes.len();
        self.nodes.push(Node {
            depth,
            n_samples: m,
            n_positive,
            split: None,
        });
        if depth >= self.params.max_depth
            || m < self.params.min_split
            || m < 2 * self.params.min_bucket
            || n_positive == 0
            || n_positive == m
        {
            return id;
        }
        let Some(best) = self.best_split(rows, n_positive, rng) else {
            return id;
        };
        if !(best.decrease > 0.0 && best.decrease >= self.min_decrease) {
            return id;
        }
        // stable partition keeps child row order deterministic
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i * self.p + best.feature] <= best.threshold);
        let l = self.grow(&mut left, depth + 1, rng);
        let r = self.grow(&mut right, depth + 1, rng);
        self.nodes[id].split = Some(Split {
            left: l,
            right: r,
            ..best
        });
        id
    }

    fn best_split(&self, rows: &[usize], n_positive: usize, rng: &mut seed::Rng) -> Option<Split> {
        let m = rows.len();
        let parent = gini_total(n_positive, m);
        let features: Vec<usize> = match self.params.mtry {
            Some(k) if k < self.p => {
                let mut f = index::sample(rng, self.p, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.p).collect(),
        };
        let mut best: Option<Split> = None;
        let mut column: Vec<(f64, u8)> = Vec::with_capacity(m);
        for feature in features {
            column.clear();
            column.extend(
                rows.iter()
                    .map(|&i| (self.x[i * self.p + feature], self.y[i])),
            );
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left_pos = 0;
            for i in 1..m {
                left_pos += usize::from(column[i - 1].1);
                if column[i - 1].0 == column[i].0 {
                    continue;
                }
                if i < self.params.min_bucket || m - i < self.params.min_bucket {
                    continue;
                }
                let decrease =
                    parent - gini_total(left_pos, i) - gini_total(n_positive - left_pos, m - i);
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let (lo, hi) = (column[i - 1].0, column[i].0);
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some(Split {
                        feature,
                        threshold: if mid < hi { mid } else { lo },
                        left: 0,
                        right: 0,
                        decrease,
                    });
                }
            }
        }
        best
    }
}
