//! Discrepancy, F1, tunability and cross-dataset aggregation.
//!
//! Every configuration's hard labels on the evaluation split are compared
//! with the labels of the default configuration. Discrepancy is the
//! largest fraction of disagreeing instances over a set of
//! configurations; tunability is the largest F1 gain over the default.
//! All comparisons run on integer counts, so results are exact and
//! independent of entry order (argmax ties go to the lowest config id).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::ModelKind;
use crate::space::Config;

pub fn disagreement_count(a: &[u8], b: &[u8]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty);
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Fraction of positions where `a` and `b` differ (normalized Hamming
/// distance).
pub fn disagreement(a: &[u8], b: &[u8]) -> Result<f64> {
    Ok(disagreement_count(a, b)? as f64 / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], truth: &[u8], positive: u8) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch(pred.len(), truth.len()));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p == positive, t == positive) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(c)
    }

    /// No predicted and no actual positives: F1 is reported as 0.
    pub fn is_degenerate(&self) -> bool {
        2 * self.tp + self.fp + self.fn_ == 0
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

/// `2TP / (2TP + FP + FN)`, or 0 when the denominator vanishes.
pub fn f1(pred: &[u8], truth: &[u8], positive: u8) -> Result<f64> {
    Ok(Confusion::from_labels(pred, truth, positive)?.f1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub config: Config,
    /// Evaluation-split labels; empty when the configuration failed.
    pub labels: Vec<u8>,
    /// Error message of a failed configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Entry {
    pub fn ok(config: Config, labels: Vec<u8>) -> Self {
        Self {
            config,
            labels,
            failure: None,
        }
    }

    pub fn failed(config: Config, message: impl Into<String>) -> Self {
        Self {
            config,
            labels: Vec::new(),
            failure: Some(message.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Per-(dataset, model) predictions of every configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    dataset_id: String,
    model: ModelKind,
    positive_label: u8,
    eval_labels: Vec<u8>,
    entries: Vec<Entry>,
    default_entry: usize,
}

impl PredictionSet {
    /// Validates: exactly one default entry, which has not failed; every
    /// non-failed label vector matches the evaluation labels in length;
    /// all labels are 0 or 1.
    pub fn new(
        dataset_id: impl Into<String>,
        model: ModelKind,
        positive_label: u8,
        eval_labels: Vec<u8>,
        entries: Vec<Entry>,
    ) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidPredictionSet(m));
        if eval_labels.is_empty() {
            return invalid("no evaluation instances".into());
        }
        if positive_label > 1 || eval_labels.iter().any(|&l| l > 1) {
            return invalid("evaluation labels must be 0 or 1".into());
        }
        let defaults: Vec<usize> = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.config.is_default())
            .map(|(i, _)| i)
            .collect();
        let default_entry = match defaults.as_slice() {
            [d] => *d,
            [] => return invalid("no default entry".into()),
            _ => return invalid(format!("{} default entries", defaults.len())),
        };
        if entries[default_entry].is_failed() {
            return invalid("the default entry failed".into());
        }
        for e in entries.iter().filter(|e| !e.is_failed()) {
            if e.labels.len() != eval_labels.len() {
                return invalid(format!(
                    "entry {} has {} labels, expected {}",
                    e.config.id(),
                    e.labels.len(),
                    eval_labels.len()
                ));
            }
            if e.labels.iter().any(|&l| l > 1) {
                return invalid(format!(
                    "entry {} has a label outside {{0,1}}",
                    e.config.id()
                ));
            }
        }
        Ok(Self {
            dataset_id: dataset_id.into(),
            model,
            positive_label,
            eval_labels,
            entries,
            default_entry,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn positive_label(&self) -> u8 {
        self.positive_label
    }

    pub fn eval_labels(&self) -> &[u8] {
        &self.eval_labels
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn default_entry(&self) -> &Entry {
        &self.entries[self.default_entry]
    }

    pub fn default_index(&self) -> usize {
        self.default_entry
    }

    pub fn failed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_failed()).count()
    }

    /// Non-default, non-failed entries.
    pub fn candidates(&self) -> impl Iterator<Item = &Entry> {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(i, e)| *i != self.default_entry && !e.is_failed())
            .map(|(_, e)| e)
    }

    /// Same data with the entries restricted to those accepted by `keep`
    /// (the default entry is always kept).
    pub fn filtered(&self, mut keep: impl FnMut(&Entry) -> bool) -> Self {
        let mut entries = Vec::new();
        let mut default_entry = 0;
        for (i, e) in self.entries.iter().enumerate() {
            if i == self.default_entry {
                default_entry = entries.len();
                entries.push(e.clone());
            } else if keep(e) {
                entries.push(e.clone());
            }
        }
        Self {
            entries,
            default_entry,
            ..self.clone()
        }
    }

    pub fn default_f1(&self) -> f64 {
        Confusion::from_labels(
            &self.default_entry().labels,
            &self.eval_labels,
            self.positive_label,
        )
        .map(|c| c.f1())
        .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scope {
    Model,
    Marginal { param: String },
    Joint { h1: String, h2: String },
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Model => f.write_str("model"),
            Scope::Marginal { param } => write!(f, "marginal({param})"),
            Scope::Joint { h1, h2 } => write!(f, "joint({h1},{h2})"),
        }
    }
}

impl Scope {
    pub fn marginal(param: impl Into<String>) -> Self {
        Scope::Marginal {
            param: param.into(),
        }
    }

    pub fn joint(h1: impl Into<String>, h2: impl Into<String>) -> Self {
        Scope::Joint {
            h1: h1.into(),
            h2: h2.into(),
        }
    }

    fn allows(&self, param: &str) -> bool {
        match self {
            Scope::Model => true,
            Scope::Marginal { param: h } => h == param,
            Scope::Joint { h1, h2 } => h1 == param || h2 == param,
        }
    }

    /// Fails when some non-default entry varies a parameter outside the
    /// scope.
    pub fn check(&self, ps: &PredictionSet) -> Result<()> {
        let default = &ps.default_entry().config;
        for (i, e) in ps.entries().iter().enumerate() {
            if i == ps.default_index() {
                continue;
            }
            if let Some(param) = e
                .config
                .differing_params(default)
                .into_iter()
                .find(|p| !self.allows(p))
            {
                let config_id = e.config.id().to_string();
                let param = param.to_string();
                return Err(match self {
                    Scope::Model => unreachable!(),
                    Scope::Marginal { param: h } => Error::NotMarginal {
                        config_id,
                        param,
                        scope: h.clone(),
                    },
                    Scope::Joint { h1, h2 } => Error::NotPairwise {
                        config_id,
                        param,
                        h1: h1.clone(),
                        h2: h2.clone(),
                    },
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyResult {
    pub dataset_id: String,
    pub model: ModelKind,
    pub scope: Scope,
    pub value: f64,
    /// Disagreeing evaluation instances of the argmax entry.
    pub disagreements: usize,
    pub n_eval: usize,
    pub argmax_config: Config,
    /// Entries the maximum ran over.
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunabilityResult {
    pub dataset_id: String,
    pub model: ModelKind,
    pub scope: Scope,
    /// Best F1 minus default F1; negative when every candidate is worse.
    pub value: f64,
    pub default_f1: f64,
    pub best_f1: f64,
    pub best_config: Config,
    pub compared: usize,
}

/// Largest key over candidates; equal keys go to the lowest config id.
fn argmax_by<K: PartialOrd + Copy>(
    ps: &PredictionSet,
    mut key: impl FnMut(&Entry) -> K,
) -> Result<(&Entry, K, usize)> {
    let mut best: Option<(&Entry, K)> = None;
    let mut compared = 0;
    for e in ps.candidates() {
        compared += 1;
        let k = key(e);
        let better = match &best {
            None => true,
            Some((b, bk)) => k > *bk || (k == *bk && e.config.id() < b.config.id()),
        };
        if better {
            best = Some((e, k));
        }
    }
    best.map(|(e, k)| (e, k, compared))
        .ok_or(Error::NoComparableEntry)
}

pub fn discrepancy(ps: &PredictionSet, scope: Scope) -> Result<DiscrepancyResult> {
    scope.check(ps)?;
    let baseline = &ps.default_entry().labels;
    let (entry, count, compared) = argmax_by(ps, |e| {
        e.labels
            .iter()
            .zip(baseline)
            .filter(|(a, b)| a != b)
            .count()
    })?;
    let n = baseline.len();
    Ok(DiscrepancyResult {
        dataset_id: ps.dataset_id.clone(),
        model: ps.model,
        scope,
        value: count as f64 / n as f64,
        disagreements: count,
        n_eval: n,
        argmax_config: entry.config.clone(),
        compared,
    })
}

pub fn model_discrepancy(ps: &PredictionSet) -> Result<DiscrepancyResult> {
    discrepancy(ps, Scope::Model)
}

pub fn marginal_discrepancy(ps: &PredictionSet, h: &str) -> Result<DiscrepancyResult> {
    discrepancy(ps, Scope::marginal(h))
}

pub fn joint_discrepancy(ps: &PredictionSet, h1: &str, h2: &str) -> Result<DiscrepancyResult> {
    discrepancy(ps, Scope::joint(h1, h2))
}

pub fn tunability_in(ps: &PredictionSet, scope: Scope) -> Result<TunabilityResult> {
    scope.check(ps)?;
    let truth = &ps.eval_labels;
    let positive = ps.positive_label;
    let default_f1 = ps.default_f1();
    let (entry, best_f1, compared) = argmax_by(ps, |e| {
        Confusion::from_labels(&e.labels, truth, positive)
            .map(|c| c.f1())
            .unwrap_or(0.0)
    })?;
    Ok(TunabilityResult {
        dataset_id: ps.dataset_id.clone(),
        model: ps.model,
        scope,
        value: best_f1 - default_f1,
        default_f1,
        best_f1,
        best_config: entry.config.clone(),
        compared,
    })
}

/// Model-scope tunability over the full sweep.
pub fn tunability(ps: &PredictionSet) -> Result<TunabilityResult> {
    tunability_in(ps, Scope::Model)
}

pub fn marginal_tunability(ps: &PredictionSet, h: &str) -> Result<TunabilityResult> {
    tunability_in(ps, Scope::marginal(h))
}

/// Summary of per-dataset values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `m − 1`); absent for one value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl AggregateStat {
    /// `"mean ± std"` with four decimals; `NA` stands in for a missing std.
    pub fn render(&self) -> String {
        match self.std {
            Some(s) => format!("{:.4} ± {:.4}", self.mean, s),
            None => format!("{:.4} ± NA", self.mean),
        }
    }
}

pub fn aggregate(values: &[f64]) -> Result<AggregateStat> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    let std = (m >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (m - 1) as f64).sqrt()
    });
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) / 2.0
    };
    Ok(AggregateStat {
        count: m,
        mean,
        std,
        median,
        min: sorted[0],
        max: sorted[m - 1],
    })
}
