//! Elastic-net penalized logistic regression fitted by proximal gradient
//! descent.
//!
//! Objective, on standardized features with an unpenalized intercept `b`:
//!
//! ```text
//! (1/n) Σ [log(1 + e^{z_i}) − y_i z_i] + λ (α ‖w‖₁ + (1−α)/2 ‖w‖₂²),   z_i = b + x_iᵀw
//! ```
//!
//! The smooth part (loss + ridge term) takes a gradient step of length
//! `1/L`, the L1 part is handled by soft-thresholding. With a fixed step
//! bounded by the Lipschitz constant every iteration is a descent step,
//! so the objective never increases.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardizer};

pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 20_000;

/// A logistic regression problem on an already standardized row-major
/// design matrix.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub x: &'a [f64],
    pub y: &'a [u8],
    pub n_cols: usize,
    pub lambda: f64,
    pub alpha: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

impl Problem<'_> {
    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn margin(&self, i: usize, w: &[f64], b: f64) -> f64 {
        let row = &self.x[i * self.n_cols..(i + 1) * self.n_cols];
        b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>()
    }

    /// Value of the smooth part (mean logistic loss plus ridge term).
    pub fn smooth_value(&self, w: &[f64], b: f64) -> f64 {
        let n = self.n_rows() as f64;
        let loss: f64 = (0..self.n_rows())
            .map(|i| {
                let z = self.margin(i, w, b);
                softplus(z) - f64::from(self.y[i]) * z
            })
            .sum::<f64>()
            / n;
        let ridge = 0.5 * self.lambda * (1.0 - self.alpha) * w.iter().map(|v| v * v).sum::<f64>();
        loss + ridge
    }

    /// Gradient of [`Problem::smooth_value`] with respect to `(w, b)`.
    pub fn smooth_gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.n_rows() as f64;
        let mut gw = vec![0.0; self.n_cols];
        let mut gb = 0.0;
        for i in 0..self.n_rows() {
            let r = sigmoid(self.margin(i, w, b)) - f64::from(self.y[i]);
            gb += r;
            let row = &self.x[i * self.n_cols..(i + 1) * self.n_cols];
            for (g, a) in gw.iter_mut().zip(row) {
                *g += r * a;
            }
        }
        let ridge = self.lambda * (1.0 - self.alpha);
        for (g, wj) in gw.iter_mut().zip(w) {
            *g = *g / n + ridge * wj;
        }
        (gw, gb / n)
    }

    pub fn objective(&self, w: &[f64], b: f64) -> f64 {
        self.smooth_value(w, b) + self.lambda * self.alpha * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Upper bound on the Lipschitz constant of the smooth gradient:
    /// `trace([1 X]ᵀ[1 X]) / (4n) + λ(1−α)`.
    pub fn lipschitz(&self) -> f64 {
        let n = self.n_rows() as f64;
        let frob: f64 = self.x.iter().map(|v| v * v).sum();
        0.25 * (n + frob) / n + self.lambda * (1.0 - self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    /// Norm of the final gradient mapping.
    pub residual: f64,
    pub converged: bool,
}

/// Runs proximal gradient from `w = 0, b = 0`. When `trace` is given it
/// receives the objective value before the first and after every step.
pub fn solve(problem: &Problem<'_>, max_iter: usize, mut trace: Option<&mut Vec<f64>>) -> Solution {
    let step = 1.0 / problem.lipschitz();
    let shrink = step * problem.lambda * problem.alpha;
    let mut w = vec![0.0; problem.n_cols];
    let mut b = 0.0;
    if let Some(t) = trace.as_deref_mut() {
        t.push(problem.objective(&w, b));
    }
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let (gw, gb) = problem.smooth_gradient(&w, b);
        let next_w: Vec<f64> = w
            .iter()
            .zip(&gw)
            .map(|(wj, g)| soft_threshold(wj - step * g, shrink))
            .collect();
        let next_b = b - step * gb;
        let sq: f64 = w
            .iter()
            .zip(&next_w)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            + (b - next_b) * (b - next_b);
        residual = sq.sqrt() / step;
        w = next_w;
        b = next_b;
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(problem.objective(&w, b));
        }
        if residual <= TOLERANCE {
            break;
        }
    }
    Solution {
        weights: w,
        intercept: b,
        iterations,
        residual,
        converged: residual <= TOLERANCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    pub solution: Solution,
}

impl LogisticModel {
    pub fn fit(train: &Dataset, lambda: f64, alpha: f64) -> Self {
        let standardizer = Standardizer::fit(train);
        let x = standardizer.transform(train.features());
        let problem = Problem {
            x: &x,
            y: train.labels(),
            n_cols: train.n_cols(),
            lambda,
            alpha,
        };
        let solution = solve(&problem, MAX_ITERATIONS, None);
        Self {
            standardizer,
            solution,
        }
    }

    /// Linear score `b + wᵀz` of a raw (unstandardized) row.
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(row.len());
        self.standardizer.transform_row(row, &mut z);
        self.solution.intercept
            + z.iter()
                .zip(&self.solution.weights)
                .map(|(a, c)| a * c)
                .sum::<f64>()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    /// 1 when the probability exceeds 0.5; exactly 0.5 maps to 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.probability(row) > 0.5)
    }
}
