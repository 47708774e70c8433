//! Declarative sweep configuration (TOML).
//!
//! ```toml
//! seed = 42                 # optional; --seed wins
//! split_fraction = 0.3      # evaluation share of each class
//! eval_on = "holdout"       # or "train"
//! impute = "reject"         # or "mean"
//! target = "class"          # header name or 0-based index; default: last column
//! positive = "1"            # target value treated as positive
//! axis_bins = 10            # regions per axis in bivariate panels
//! datasets = ["data/a.csv", "data/b.csv"]   # relative to this file
//!
//! [[models]]
//! name = "RandomForest"
//! count = 50                # random configurations besides the default
//!
//! [models.points]           # marginal grids: parameter -> points
//! "min.node.size" = 11
//!
//! [[models.joint]]          # pairwise grids
//! h1 = "num.trees"
//! h2 = "mtry"
//! points = 5
//! ```
//!
//! Parameter names are those of the hyperparameter tables, e.g.
//! `min.node.size` or `colsample_bytree`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hypermult_core::space::param_names;
use hypermult_core::{EvalOn, Impute, ModelKind};
use serde::Deserialize;

pub const DEFAULT_COUNT: usize = 50;
pub const DEFAULT_POINTS: usize = 5;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: Option<u64>,
    pub split_fraction: Option<f64>,
    pub eval_on: Option<EvalOn>,
    pub impute: Option<Impute>,
    pub target: Option<String>,
    pub positive: Option<String>,
    pub axis_bins: Option<usize>,
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub models: Vec<ModelSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSweep {
    pub name: String,
    /// Random configurations drawn from the full space; 0 skips the
    /// full-space sweep.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub points: BTreeMap<String, usize>,
    #[serde(default)]
    pub joint: Vec<JointSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSweep {
    pub h1: String,
    pub h2: String,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_count() -> usize {
    DEFAULT_COUNT
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

/// Parses a model name, pointing SVM users at `import`.
pub fn builtin_model(name: &str) -> anyhow::Result<ModelKind> {
    let kind: ModelKind = name.parse()?;
    if !kind.is_builtin() {
        bail!(
            "{kind} has no built-in trainer; train it externally, write its predictions in the \
             interchange format and run `hypermult import`"
        );
    }
    Ok(kind)
}

pub fn check_param(kind: ModelKind, name: &str) -> anyhow::Result<()> {
    let valid = param_names(kind);
    if !valid.contains(&name) {
        return Err(hypermult_core::Error::UnknownParam {
            model: kind.to_string(),
            name: name.to_string(),
            valid: valid.join(", "),
        }
        .into());
    }
    Ok(())
}

impl ModelSweep {
    pub fn kind(&self) -> anyhow::Result<ModelKind> {
        builtin_model(&self.name)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let kind = self.kind()?;
        for (name, &points) in &self.points {
            check_param(kind, name)?;
            if points == 0 {
                bail!("{kind}: marginal grid for `{name}` needs at least one point");
            }
        }
        for j in &self.joint {
            check_param(kind, &j.h1)?;
            check_param(kind, &j.h2)?;
            if j.h1 == j.h2 {
                return Err(hypermult_core::Error::SameParam(j.h1.clone()).into());
            }
            if j.points == 0 {
                bail!(
                    "{kind}: joint grid ({}, {}) needs at least one point",
                    j.h1,
                    j.h2
                );
            }
        }
        Ok(())
    }
}

impl SweepConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: SweepConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative dataset paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading sweep config {}", path.display()))?;
        let mut config =
            Self::parse(&text).with_context(|| format!("in sweep config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut config.datasets {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.models.is_empty() {
            bail!("sweep config lists no [[models]]");
        }
        for m in &self.models {
            m.validate()?;
        }
        if let Some(f) = self.split_fraction {
            check_fraction(f)?;
        }
        if self.axis_bins == Some(0) {
            bail!("axis_bins must be positive");
        }
        Ok(())
    }
}

pub fn check_fraction(f: f64) -> anyhow::Result<()> {
    if !(f > 0.0 && f < 1.0) {
        bail!("split fraction must lie strictly between 0 and 1, got {f}");
    }
    Ok(())
}
