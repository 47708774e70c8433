//! k-nearest-neighbour classifier on standardized features.
//!
//! Neighbours are ranked by Euclidean distance, then by training-row
//! index. Every training row tied with the k-th distance joins the vote,
//! so a query equidistant from all rows is decided by the whole training
//! set. A tied vote goes to the single nearest neighbour.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub standardizer: Standardizer,
    /// Standardized training matrix, row-major.
    pub x: Vec<f64>,
    pub y: Vec<u8>,
}

impl KnnModel {
    pub fn fit(train: &Dataset, k: usize) -> Self {
        let standardizer = Standardizer::fit(train);
        let x = standardizer.transform(train.features());
        Self {
            k: k.max(1),
            standardizer,
            x,
            y: train.labels().to_vec(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let p = self.standardizer.means.len();
        let mut q = Vec::with_capacity(p);
        self.standardizer.transform_row(row, &mut q);
        let mut dist: Vec<(f64, usize)> = self
            .x
            .chunks(p)
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        dist.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dist.len());
        let cutoff = dist[k - 1].0;
        let (mut votes, mut ones) = (0usize, 0usize);
        for &(_, i) in dist.iter().take_while(|(d, _)| *d <= cutoff) {
            votes += 1;
            ones += usize::from(self.y[i]);
        }
        match (2 * ones).cmp(&votes) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => self.y[dist[0].1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_neighbour_reproduces_training_labels() {
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![f64::from(i), f64::from(i * i % 7)])
            .collect();
        let labels: Vec<u8> = (0..15).map(|i| u8::from(i % 4 == 1)).collect();
        let d = Dataset::from_rows("k1", &rows, labels.clone(), 1).unwrap();
        let m = KnnModel::fit(&d, 1);
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(m.predict_row(r), *l);
        }
    }

    #[test]
    fn duplicate_features_vote_with_whole_training_set() {
        let rows = vec![vec![2.0, 2.0]; 11];
        // first rows are positive, but negatives are the majority
        let labels = vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let d = Dataset::from_rows("dup", &rows, labels, 1).unwrap();
        for k in [1, 3, 7, 30] {
            let m = KnnModel::fit(&d, k);
            assert_eq!(m.predict_row(&[2.0, 2.0]), 0);
            assert_eq!(m.predict_row(&[-5.0, 9.0]), 0);
        }
    }

    #[test]
    fn tied_vote_follows_nearest() {
        let rows = vec![vec![0.0], vec![1.0], vec![3.0], vec![10.0]];
        let d = Dataset::from_rows("t", &rows, vec![1, 0, 0, 1], 1).unwrap();
        let m = KnnModel::fit(&d, 2);
        // neighbours of 0.2: rows 0 (label 1) and 1 (label 0)
        assert_eq!(m.predict_row(&[0.2]), 1);
        // neighbours of 0.9: rows 1 (label 0) and 0 (label 1)
        assert_eq!(m.predict_row(&[0.9]), 0);
    }
}
