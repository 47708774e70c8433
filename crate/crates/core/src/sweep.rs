//! Trains a model family over a list of configurations and collects the
//! evaluation-split labels of each.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SplitPair;
use crate::error::{Error, Result};
use crate::learners::{train, ModelKind};
use crate::metrics::{Entry, PredictionSet};
use crate::seed;
use crate::space::Config;

/// Which rows predictions are compared on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalOn {
    #[default]
    Holdout,
    Train,
}

impl std::str::FromStr for EvalOn {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "holdout" => Ok(EvalOn::Holdout),
            "train" => Ok(EvalOn::Train),
            _ => Err(format!("expected `train` or `holdout`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub predictions: PredictionSet,
    /// Ids of elastic-net configurations that hit the iteration cap.
    pub non_converged: Vec<String>,
}

/// Training seed of one configuration. Depends only on its inputs, so
/// concurrent and sequential sweeps agree.
pub fn config_seed(seed: u64, dataset_id: &str, kind: ModelKind, config: &Config) -> u64 {
    seed::derive_seed(seed, &["train", dataset_id, kind.name(), config.id()])
}

/// Trains every configuration on `split.train` and predicts the
/// evaluation rows. Configurations that fail to train are recorded as
/// failed entries; the default configuration failing aborts the sweep.
/// Runs on the current rayon pool; output is independent of scheduling.
pub fn run_sweep(
    kind: ModelKind,
    configs: &[Config],
    split: &SplitPair,
    eval_on: EvalOn,
    seed: u64,
) -> Result<SweepOutcome> {
    let defaults = configs.iter().filter(|c| c.is_default()).count();
    if defaults != 1 {
        return Err(Error::InvalidPredictionSet(format!(
            "a sweep needs exactly one default configuration, got {defaults}"
        )));
    }
    let eval = match eval_on {
        EvalOn::Holdout => &split.eval,
        EvalOn::Train => &split.train,
    };
    let dataset_id = split.train.id();
    let results: Vec<(Entry, bool)> = configs
        .par_iter()
        .map(|config| {
            let s = config_seed(seed, dataset_id, kind, config);
            match train(kind, config, &split.train, s).and_then(|m| {
                let labels = m.predict_dataset(eval)?;
                Ok((labels, m.converged()))
            }) {
                Ok((labels, converged)) => (Entry::ok(config.clone(), labels), converged),
                Err(e) => (Entry::failed(config.clone(), e.to_string()), true),
            }
        })
        .collect();
    if let Some((e, _)) = results
        .iter()
        .find(|(e, _)| e.config.is_default() && e.is_failed())
    {
        return Err(Error::InvalidConfig(format!(
            "default configuration of {kind} failed on `{dataset_id}`: {}",
            e.failure.as_deref().unwrap_or_default()
        )));
    }
    let non_converged = results
        .iter()
        .filter(|(_, c)| !c)
        .map(|(e, _)| e.config.id().to_string())
        .collect();
    let entries = results.into_iter().map(|(e, _)| e).collect();
    let predictions = PredictionSet::new(
        dataset_id,
        kind,
        split.train.positive_label(),
        eval.labels().to_vec(),
        entries,
    )?;
    Ok(SweepOutcome {
        predictions,
        non_converged,
    })
}
