//! Hyperparameter search spaces, their defaults, and configuration
//! generators (random sweep, marginal grid, pairwise grid).
//!
//! Parameter names are the ones used by the R/XGBoost learners the
//! spaces were published for (`min.node.size`, `colsample_bytree`, ...),
//! so sweep files and imported metadata can use them verbatim.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::ModelKind;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Real,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log2,
}

/// Where a default value comes from before it is resolved against data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultRule {
    Value(f64),
    /// `round(sqrt(p))`
    SqrtP,
    /// `1 / p`
    InvP,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum UpperRule {
    Value(f64),
    /// number of training rows
    N,
    /// number of features
    P,
}

/// One resolved hyperparameter: bounds, scale and default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    pub default: f64,
    pub default_rule: DefaultRule,
}

impl ParamSpec {
    /// Maps a raw value onto the axis the parameter is swept on.
    /// Non-positive values on a log2 axis map to `-inf`.
    pub fn to_axis(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log2 if v > 0.0 => v.log2(),
            Scale::Log2 => f64::NEG_INFINITY,
        }
    }

    pub fn from_axis(&self, a: f64) -> f64 {
        match self.scale {
            Scale::Linear => a,
            Scale::Log2 => a.exp2(),
        }
    }

    /// Whether `v` is an admissible value. The parameter's own default
    /// is always admissible, even when it sits outside the sweep range
    /// (elastic-net `lambda = 0`, boosting `alpha = 0`).
    pub fn admits(&self, v: f64) -> bool {
        if v == self.default {
            return true;
        }
        if !v.is_finite() || v < self.lower || v > self.upper {
            return false;
        }
        self.kind == ParamKind::Real || v.fract() == 0.0
    }

    fn sample(&self, rng: &mut seed::Rng) -> f64 {
        match (self.kind, self.scale) {
            (ParamKind::Integer, _) => {
                rng.random_range(self.lower as i64..=self.upper as i64) as f64
            }
            (ParamKind::Real, Scale::Linear) => rng.random_range(self.lower..=self.upper),
            (ParamKind::Real, Scale::Log2) => {
                let e = rng.random_range(self.lower.log2()..=self.upper.log2());
                e.exp2().clamp(self.lower, self.upper)
            }
        }
    }

    /// `points` values evenly spaced on the parameter's scale, endpoints
    /// included, integer-rounded and deduplicated for integer params,
    /// with the default inserted when absent. Sorted ascending.
    pub fn axis(&self, points: usize) -> Vec<f64> {
        let lo = self.to_axis(self.lower);
        let hi = self.to_axis(self.upper);
        let mut values: Vec<f64> = match points {
            0 => Vec::new(),
            1 => vec![self.lower],
            _ => (0..points)
                .map(|i| {
                    if i == points - 1 {
                        return self.upper;
                    }
                    let a = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                    self.from_axis(a)
                })
                .collect(),
        };
        if self.kind == ParamKind::Integer {
            values.iter_mut().for_each(|v| *v = v.round());
        }
        values.push(self.default);
        values.sort_by(f64::total_cmp);
        values.dedup();
        values
    }
}

/// Ordered parameter list of one model family with resolved defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamSpace {
    pub model: ModelKind,
    pub params: Vec<ParamSpec>,
}

struct Row {
    name: &'static str,
    kind: ParamKind,
    lower: f64,
    upper: UpperRule,
    scale: Scale,
    default: DefaultRule,
}

const fn row(
    name: &'static str,
    kind: ParamKind,
    lower: f64,
    upper: UpperRule,
    scale: Scale,
    default: DefaultRule,
) -> Row {
    Row {
        name,
        kind,
        lower,
        upper,
        scale,
        default,
    }
}

fn table(model: ModelKind) -> Vec<Row> {
    use DefaultRule as D;
    use ParamKind::{Integer as I, Real as R};
    use Scale::{Linear as Lin, Log2};
    use UpperRule as U;
    let pow = |e: i32| 2f64.powi(e);
    match model {
        ModelKind::ElasticNet => vec![
            row("alpha", R, 0.0, U::Value(1.0), Lin, D::Value(1.0)),
            row(
                "lambda",
                R,
                pow(-10),
                U::Value(pow(10)),
                Log2,
                D::Value(0.0),
            ),
        ],
        ModelKind::DecisionTree => vec![
            row("cp", R, 0.0, U::Value(1.0), Lin, D::Value(0.1)),
            row("maxdepth", I, 1.0, U::Value(30.0), Lin, D::Value(30.0)),
            row("minbucket", I, 1.0, U::Value(60.0), Lin, D::Value(7.0)),
            row("minsplit", I, 1.0, U::Value(60.0), Lin, D::Value(20.0)),
        ],
        ModelKind::Knn => vec![row("k", I, 1.0, U::Value(30.0), Lin, D::Value(7.0))],
        ModelKind::Svm => vec![
            row("cost", R, pow(-10), U::Value(pow(10)), Log2, D::Value(1.0)),
            row("gamma", R, pow(-10), U::Value(pow(10)), Log2, D::InvP),
            row("degree", I, 2.0, U::Value(5.0), Lin, D::Value(3.0)),
        ],
        ModelKind::RandomForest => vec![
            row("num.trees", I, 1.0, U::Value(2000.0), Lin, D::Value(500.0)),
            row("sample.fraction", R, 0.1, U::Value(1.0), Lin, D::Value(1.0)),
            row("mtry", I, 0.0, U::P, Lin, D::SqrtP),
            row("min.node.size", I, 1.0, U::N, Lin, D::Value(1.0)),
        ],
        ModelKind::GradientBoosting => vec![
            row("nrounds", I, 1.0, U::Value(5000.0), Lin, D::Value(500.0)),
            row("eta", R, 0.0, U::Value(1.0), Lin, D::Value(0.3)),
            row("subsample", R, 0.1, U::Value(1.0), Lin, D::Value(1.0)),
            row("max_depth", I, 1.0, U::Value(15.0), Lin, D::Value(6.0)),
            row(
                "min_child_weight",
                R,
                1.0,
                U::Value(14.0),
                Lin,
                D::Value(1.0),
            ),
            row(
                "colsample_bytree",
                R,
                0.0,
                U::Value(1.0),
                Lin,
                D::Value(1.0),
            ),
            row(
                "colsample_bylevel",
                R,
                0.0,
                U::Value(1.0),
                Lin,
                D::Value(1.0),
            ),
            row(
                "lambda",
                R,
                pow(-10),
                U::Value(pow(10)),
                Log2,
                D::Value(1.0),
            ),
            row("alpha", R, pow(-10), U::Value(pow(10)), Log2, D::Value(0.0)),
        ],
    }
}

fn resolve(model: ModelKind, n: usize, p: usize) -> HyperparamSpace {
    let params = table(model)
        .into_iter()
        .map(|r| {
            let upper = match r.upper {
                UpperRule::Value(v) => v,
                UpperRule::N => n as f64,
                UpperRule::P => p as f64,
            };
            let default = match r.default {
                DefaultRule::Value(v) => v,
                DefaultRule::SqrtP => (p as f64).sqrt().round(),
                DefaultRule::InvP => 1.0 / p as f64,
            };
            ParamSpec {
                name: r.name.to_string(),
                kind: r.kind,
                lower: r.lower,
                upper,
                scale: r.scale,
                default,
                default_rule: r.default,
            }
        })
        .collect();
    HyperparamSpace { model, params }
}

/// Search space of a built-in model family, with `n`/`p`-dependent
/// bounds and defaults resolved against the training data.
pub fn space_for(model: ModelKind, train: &Dataset) -> Result<HyperparamSpace> {
    space_for_dims(model, train.n_rows(), train.n_cols())
}

pub fn space_for_dims(model: ModelKind, n: usize, p: usize) -> Result<HyperparamSpace> {
    if !model.is_builtin() {
        return Err(Error::UnknownModel(format!(
            "{model} has no built-in trainer; audit it with `import`"
        )));
    }
    Ok(resolve(model, n, p))
}

/// Space used to validate metadata of imported predictions. Unlike
/// [`space_for_dims`] this also covers SVM.
pub fn import_space(model: ModelKind, n: usize, p: usize) -> HyperparamSpace {
    resolve(model, n, p)
}

/// Parameter names of a model family, in table order.
pub fn param_names(model: ModelKind) -> Vec<&'static str> {
    table(model).into_iter().map(|r| r.name).collect()
}

impl HyperparamSpace {
    pub fn param(&self, name: &str) -> Result<&ParamSpec> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| self.unknown(name))
    }

    fn unknown(&self, name: &str) -> Error {
        Error::UnknownParam {
            model: self.model.to_string(),
            name: name.to_string(),
            valid: self
                .params
                .iter()
                .map(|p| p.name.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        }
    }

    pub fn default_values(&self) -> BTreeMap<String, f64> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.default))
            .collect()
    }

    pub fn default_config(&self) -> Config {
        Config::new(self.default_values(), true)
    }

    /// Checks that `config` names exactly this space's parameters and
    /// that every value is admissible. Default configs skip bound checks.
    pub fn validate(&self, config: &Config) -> Result<()> {
        for name in config.values().keys() {
            self.param(name)?;
        }
        for spec in &self.params {
            let v = config.get(&spec.name).ok_or_else(|| {
                Error::InvalidConfig(format!("missing value for `{}`", spec.name))
            })?;
            if !config.is_default() && !spec.admits(v) {
                return Err(Error::InvalidConfig(format!(
                    "`{}` = {v} outside [{}, {}]{}",
                    spec.name,
                    spec.lower,
                    spec.upper,
                    if spec.kind == ParamKind::Integer {
                        " or not an integer"
                    } else {
                        ""
                    }
                )));
            }
        }
        Ok(())
    }
}

/// A point in a hyperparameter space.
///
/// The id is a hash of the value map only, so two configs with equal
/// values share an id regardless of their default flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    values: BTreeMap<String, f64>,
    id: String,
    is_default: bool,
}

impl Config {
    pub fn new(mut values: BTreeMap<String, f64>, is_default: bool) -> Self {
        for v in values.values_mut() {
            // -0.0 and 0.0 are the same configuration
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        let id = config_id(&values);
        Self {
            values,
            id,
            is_default,
        }
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_default(&self) -> bool {
        self.is_default
    }

    /// Same values, default flag cleared.
    pub fn as_candidate(&self) -> Self {
        Self {
            is_default: false,
            ..self.clone()
        }
    }

    /// Names of parameters whose value differs from `other`'s.
    pub fn differing_params<'a>(&'a self, other: &'a Config) -> Vec<&'a str> {
        self.values
            .iter()
            .filter(|(k, v)| other.values.get(*k) != Some(*v))
            .map(|(k, _)| k.as_str())
            .chain(
                other
                    .values
                    .keys()
                    .filter(|k| !self.values.contains_key(*k))
                    .map(String::as_str),
            )
            .collect()
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

fn config_id(values: &BTreeMap<String, f64>) -> String {
    let mut hasher = Sha256::new();
    for (k, v) in values {
        // Debug formatting of f64 is the shortest exact round-trip form
        hasher.update(format!("{k}={v:?};").as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// `count` configurations drawn independently per parameter (uniform,
/// log-uniform on log2 axes, uniform integers), followed by the default.
pub fn sample_full(space: &HyperparamSpace, count: usize, seed: u64) -> Vec<Config> {
    let mut rng = seed::rng(seed);
    let mut configs: Vec<Config> = (0..count)
        .map(|_| {
            let values = space
                .params
                .iter()
                .map(|p| (p.name.clone(), p.sample(&mut rng)))
                .collect();
            Config::new(values, false)
        })
        .collect();
    configs.push(space.default_config());
    configs
}

/// Configurations varying only `h` over [`ParamSpec::axis`], others at
/// default, followed by the default itself.
pub fn marginal_grid(space: &HyperparamSpace, h: &str, points: usize) -> Result<Vec<Config>> {
    let spec = space.param(h)?;
    let defaults = space.default_values();
    let mut configs: Vec<Config> = spec
        .axis(points)
        .into_iter()
        .map(|v| {
            let mut values = defaults.clone();
            values.insert(h.to_string(), v);
            Config::new(values, false)
        })
        .collect();
    configs.push(space.default_config());
    Ok(configs)
}

/// Cartesian product of the two axes (others at default), followed by
/// the default. Since each axis contains its default, every marginal
/// grid of `h1` or `h2` with the same `points` is contained in it.
pub fn pairwise_grid(
    space: &HyperparamSpace,
    h1: &str,
    h2: &str,
    points_per_axis: usize,
) -> Result<Vec<Config>> {
    let a1 = space.param(h1)?.axis(points_per_axis);
    let a2 = space.param(h2)?.axis(points_per_axis);
    if h1 == h2 {
        return Err(Error::SameParam(h1.to_string()));
    }
    let defaults = space.default_values();
    let mut configs = Vec::with_capacity(a1.len() * a2.len() + 1);
    for &v1 in &a1 {
        for &v2 in &a2 {
            let mut values = defaults.clone();
            values.insert(h1.to_string(), v1);
            values.insert(h2.to_string(), v2);
            configs.push(Config::new(values, false));
        }
    }
    configs.push(space.default_config());
    Ok(configs)
}
