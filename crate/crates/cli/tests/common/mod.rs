//! Synthetic datasets shared by the integration tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hypermult_core::seed;
use rand::Rng;

/// Writes a headed CSV with `p` gaussian-ish features and a 0/1 target
/// column `y` (last). The target is a noisy linear rule whose positive
/// share is roughly `positive_share`; `noise = 0` makes it separable.
pub fn write_dataset(
    dir: &Path,
    name: &str,
    n: usize,
    p: usize,
    noise: f64,
    positive_share: f64,
    seed_value: u64,
) -> PathBuf {
    let mut rng = seed::rng(seed_value);
    let weights: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>())
                .collect()
        })
        .collect();
    let scores: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>()
                + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[((1.0 - positive_share) * n as f64) as usize];
    let mut text = String::new();
    let header: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    writeln!(text, "{},y", header.join(",")).unwrap();
    for (r, s) in rows.iter().zip(&scores) {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(text, "{},{}", cells.join(","), u8::from(*s >= cut)).unwrap();
    }
    let path = dir.join(format!("{name}.csv"));
    fs::write(&path, text).unwrap();
    path
}
