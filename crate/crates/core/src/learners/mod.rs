//! Built-in model families and the common train/predict surface.

pub mod boosting;
pub mod cart;
pub mod elastic_net;
pub mod forest;
pub mod knn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;
use crate::space::{space_for, Config};

use boosting::{BoostParams, Booster};
use cart::{Tree, TreeParams};
use elastic_net::LogisticModel;
use forest::{Forest, ForestParams};
use knn::KnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    ElasticNet,
    DecisionTree,
    #[serde(rename = "KNN")]
    Knn,
    /// Recognized for imported predictions only.
    #[serde(rename = "SVM")]
    Svm,
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::ElasticNet,
        ModelKind::DecisionTree,
        ModelKind::Knn,
        ModelKind::Svm,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
    ];

    pub const BUILTIN: [ModelKind; 5] = [
        ModelKind::ElasticNet,
        ModelKind::DecisionTree,
        ModelKind::Knn,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
    ];

    pub fn is_builtin(self) -> bool {
        self != ModelKind::Svm
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ElasticNet => "ElasticNet",
            ModelKind::DecisionTree => "DecisionTree",
            ModelKind::Knn => "KNN",
            ModelKind::Svm => "SVM",
            ModelKind::RandomForest => "RandomForest",
            ModelKind::GradientBoosting => "GradientBoosting",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "elasticnet" | "en" | "glmnet" => ModelKind::ElasticNet,
            "decisiontree" | "dt" | "rpart" | "cart" => ModelKind::DecisionTree,
            "knn" | "knearestneighbor" | "knearestneighbors" | "kknn" => ModelKind::Knn,
            "svm" | "supportvectormachine" => ModelKind::Svm,
            "randomforest" | "randomforests" | "rf" | "ranger" => ModelKind::RandomForest,
            "gradientboosting" | "xgb" | "xgboost" | "extremegradientboosting" => {
                ModelKind::GradientBoosting
            }
            _ => return Err(Error::UnknownModel(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    ElasticNet(LogisticModel),
    DecisionTree(Tree),
    Knn(KnnModel),
    RandomForest(Forest),
    GradientBoosting(Booster),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub config: Config,
    pub seed: u64,
    pub n_features: usize,
    pub state: ModelState,
}

impl FittedModel {
    /// False when the elastic-net optimizer stopped at its iteration cap
    /// before reaching the gradient-mapping tolerance. The last iterate
    /// is still used for prediction.
    pub fn converged(&self) -> bool {
        match &self.state {
            ModelState::ElasticNet(m) => m.solution.converged,
            _ => true,
        }
    }

    fn predict_row(&self, row: &[f64]) -> u8 {
        match &self.state {
            ModelState::ElasticNet(m) => m.predict_row(row),
            ModelState::DecisionTree(t) => t.predict_row(row),
            ModelState::Knn(m) => m.predict_row(row),
            ModelState::RandomForest(f) => f.predict_row(row),
            ModelState::GradientBoosting(b) => b.predict_row(row),
        }
    }

    /// Hard labels for a row-major matrix with `n_cols` columns.
    pub fn predict(&self, features: &[f64], n_cols: usize) -> Result<Vec<u8>> {
        if n_cols != self.n_features || !features.len().is_multiple_of(n_cols.max(1)) {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: n_cols,
            });
        }
        Ok(features
            .chunks(n_cols)
            .map(|r| self.predict_row(r))
            .collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<u8>> {
        self.predict(data.features(), data.n_cols())
    }
}

fn param(config: &Config, name: &str) -> Result<f64> {
    config
        .get(name)
        .ok_or_else(|| Error::InvalidConfig(format!("missing value for `{name}`")))
}

fn count(config: &Config, name: &str) -> Result<usize> {
    let v = param(config, name)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::InvalidConfig(format!(
            "`{name}` = {v} is not a count"
        )));
    }
    Ok(v as usize)
}

/// Trains one model. `config` is validated against the model's space
/// resolved on `train` (default configs are exempt from bound checks).
pub fn train(kind: ModelKind, config: &Config, train: &Dataset, seed: u64) -> Result<FittedModel> {
    let space = space_for(kind, train)?;
    space.validate(config)?;
    let mut rng = seed::rng(seed);
    let state = match kind {
        ModelKind::ElasticNet => {
            let alpha = param(config, "alpha")?;
            let lambda = param(config, "lambda")?;
            if !(0.0..=1.0).contains(&alpha) || lambda < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "alpha = {alpha}, lambda = {lambda}"
                )));
            }
            ModelState::ElasticNet(LogisticModel::fit(train, lambda, alpha))
        }
        ModelKind::DecisionTree => {
            let params = TreeParams {
                max_depth: count(config, "maxdepth")?,
                min_split: count(config, "minsplit")?,
                min_bucket: count(config, "minbucket")?.max(1),
                cp: param(config, "cp")?,
                mtry: None,
            };
            let rows: Vec<usize> = (0..train.n_rows()).collect();
            ModelState::DecisionTree(Tree::fit(
                train.features(),
                train.labels(),
                train.n_cols(),
                &rows,
                params,
                &mut rng,
            ))
        }
        ModelKind::Knn => ModelState::Knn(KnnModel::fit(train, count(config, "k")?)),
        ModelKind::RandomForest => {
            let params = ForestParams {
                num_trees: count(config, "num.trees")?,
                sample_fraction: param(config, "sample.fraction")?,
                mtry: count(config, "mtry")?,
                min_node_size: count(config, "min.node.size")?,
            };
            if params.num_trees == 0 {
                return Err(Error::InvalidConfig("num.trees must be positive".into()));
            }
            ModelState::RandomForest(Forest::fit(train, params, &mut rng))
        }
        ModelKind::GradientBoosting => {
            let params = BoostParams {
                nrounds: count(config, "nrounds")?,
                eta: param(config, "eta")?,
                subsample: param(config, "subsample")?,
                max_depth: count(config, "max_depth")?,
                min_child_weight: param(config, "min_child_weight")?,
                colsample_bytree: param(config, "colsample_bytree")?,
                colsample_bylevel: param(config, "colsample_bylevel")?,
                lambda: param(config, "lambda")?,
                alpha: param(config, "alpha")?,
            };
            if params.nrounds == 0 {
                return Err(Error::InvalidConfig("nrounds must be at least 1".into()));
            }
            ModelState::GradientBoosting(Booster::fit(train, &params, &mut rng))
        }
        ModelKind::Svm => unreachable!("space_for rejects SVM"),
    };
    Ok(FittedModel {
        kind,
        config: config.clone(),
        seed,
        n_features: train.n_cols(),
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::space_for_dims;
    use std::collections::BTreeMap;

    fn data() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![f64::from(i), f64::from((i * 11) % 7)])
            .collect();
        let labels = (0..40).map(|i| u8::from(i >= 28)).collect();
        Dataset::from_rows("m", &rows, labels, 1).unwrap()
    }

    #[test]
    fn model_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert_eq!(
            "xgboost".parse::<ModelKind>().unwrap(),
            ModelKind::GradientBoosting
        );
        assert_eq!("k-NN".parse::<ModelKind>().unwrap(), ModelKind::Knn);
        assert!("lightgbm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn every_builtin_trains_with_defaults() {
        let d = data();
        for kind in ModelKind::BUILTIN {
            let config = space_for(kind, &d).unwrap().default_config();
            let m = train(kind, &config, &d, 1).unwrap();
            let labels = m.predict_dataset(&d).unwrap();
            assert_eq!(labels.len(), d.n_rows());
            assert_eq!(m, train(kind, &config, &d, 1).unwrap());
        }
    }

    #[test]
    fn svm_is_not_trainable() {
        let d = data();
        let config = Config::new(BTreeMap::new(), true);
        assert!(matches!(
            train(ModelKind::Svm, &config, &d, 0),
            Err(Error::UnknownModel(_))
        ));
    }

    #[test]
    fn out_of_range_config_rejected() {
        let d = data();
        let space = space_for_dims(ModelKind::Knn, 40, 2).unwrap();
        let mut values = space.default_values();
        values.insert("k".into(), 31.0);
        let err = train(ModelKind::Knn, &Config::new(values, false), &d, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let mut values = space.default_values();
        values.insert("k".into(), 2.5);
        assert!(train(ModelKind::Knn, &Config::new(values, false), &d, 0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let d = data();
        let config = space_for(ModelKind::Knn, &d).unwrap().default_config();
        let m = train(ModelKind::Knn, &config, &d, 0).unwrap();
        assert!(matches!(
            m.predict(&[1.0, 2.0, 3.0], 3),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }
}
