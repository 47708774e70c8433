//! Run manifest: everything needed to reproduce a report.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use hypermult_core::{Impute, ModelKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub path: PathBuf,
    pub sha256: String,
    pub n_rows: usize,
    pub n_features: usize,
    pub positive_label: u8,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: ModelKind,
    /// Random full-space configurations per dataset (default excluded).
    pub full_count: Option<usize>,
    /// Marginal grid points per hyperparameter.
    pub marginals: BTreeMap<String, usize>,
    /// Pairwise grids as (h1, h2, points).
    pub joints: Vec<(String, String, usize)>,
    /// Configurations trained (or imported) over all datasets.
    pub configs_trained: usize,
    pub failed: usize,
    pub non_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub split_fraction: f64,
    pub eval_on: String,
    pub impute: Impute,
    pub target: Option<String>,
    pub positive: Option<String>,
    pub axis_bins: usize,
    pub config_file: Option<FileRecord>,
    pub datasets: Vec<DatasetRecord>,
    pub models: Vec<ModelRecord>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<FileRecord>,
    pub started_at: String,
    pub finished_at: String,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}
