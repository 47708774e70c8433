//! Random forest of unpruned CART trees on bootstrap samples.
//!
//! `min.node.size` follows ranger's reading: a node holding
//! `min.node.size` samples or fewer is not split further.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cart::{Tree, TreeParams};
use crate::dataset::Dataset;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    pub sample_fraction: f64,
    pub mtry: usize,
    pub min_node_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(train: &Dataset, params: ForestParams, rng: &mut seed::Rng) -> Self {
        let n = train.n_rows();
        let p = train.n_cols();
        let draws = ((params.sample_fraction * n as f64).round() as usize).max(1);
        let tree_params = TreeParams {
            max_depth: usize::MAX,
            min_split: params.min_node_size.max(1) + 1,
            min_bucket: 1,
            cp: 0.0,
            mtry: Some(params.mtry.clamp(1, p)),
        };
        let mut rows = vec![0usize; draws];
        let trees = (0..params.num_trees)
            .map(|_| {
                rows.iter_mut().for_each(|r| *r = rng.random_range(0..n));
                Tree::fit(train.features(), train.labels(), p, &rows, tree_params, rng)
            })
            .collect();
        Self { trees }
    }

    pub fn votes(&self, row: &[f64]) -> usize {
        self.trees
            .iter()
            .map(|t| usize::from(t.predict_row(row)))
            .sum()
    }

    /// Majority vote of the trees; an even split goes to 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(2 * self.votes(row) > self.trees.len())
    }
}
