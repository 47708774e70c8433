//! Python bindings.
//!
//! Exposes dataset loading, the built-in sweeps, the discrepancy and
//! tunability metrics, bivariate region panels and the predictions
//! interchange format. Structured results come back as plain Python
//! dicts built from the same JSON the command-line reports use.
//!
//! ```python
//! import hypermult as hm
//! data = hm.Dataset.load("credit.csv", positive="bad")
//! ps = hm.sweep(data, "DecisionTree", count=50, seed=1)
//! print(ps.discrepancy()["value"], ps.tunability()["value"])
//! ```

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use hypermult_core::interchange::{self, Dims, SpaceCheck};
use hypermult_core::reports::{self, BivariatePanel};
use hypermult_core::seed::derive_seed;
use hypermult_core::space::param_names as core_param_names;
use hypermult_core::{
    self as core, load_csv, marginal_grid, pairwise_grid, run_sweep, sample_full, space_for,
    space_for_dims, split, Config, EvalOn, Impute, LoadOptions, ModelKind, Scope, SplitPair,
    TargetColumn,
};

create_exception!(
    hypermult,
    HypermultError,
    PyException,
    "Raised for any hypermult failure."
);

fn err(e: impl std::fmt::Display) -> PyErr {
    HypermultError::new_err(e.to_string())
}

/// Serializes through JSON so Python sees the report field names.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Labels as Python ints; a bare `Vec<u8>` would become `bytes`.
fn ints(labels: &[u8]) -> Vec<u32> {
    labels.iter().map(|&l| u32::from(l)).collect()
}

fn parse_model(name: &str) -> PyResult<ModelKind> {
    name.parse().map_err(err)
}

fn parse_scope(scope: &str, h1: Option<&str>, h2: Option<&str>) -> PyResult<Scope> {
    match (scope, h1, h2) {
        ("model", None, None) => Ok(Scope::Model),
        ("marginal", Some(h), None) => Ok(Scope::marginal(h)),
        ("joint", Some(a), Some(b)) => Ok(Scope::joint(a, b)),
        _ => Err(err(format!(
            "scope `{scope}` takes {} parameter name(s)",
            match scope {
                "model" => "no",
                "marginal" => "one",
                "joint" => "two",
                _ =>
                    return Err(err(format!(
                        "unknown scope `{scope}`: expected model, marginal or joint"
                    ))),
            }
        ))),
    }
}

/// A binary classification dataset with labels mapped to 0/1.
#[pyclass(module = "hypermult", frozen)]
struct Dataset {
    inner: core::Dataset,
}

#[pymethods]
impl Dataset {
    /// Loads a headed CSV file.
    ///
    /// Args:
    ///     path: CSV file.
    ///     target: header name or 0-based index; default the last column.
    ///     positive: target value treated as positive; default the minority.
    ///     impute: "reject" (default) or "mean" for missing feature cells.
    ///     id: dataset id; default the file stem.
    #[staticmethod]
    #[pyo3(signature = (path, target=None, positive=None, impute="reject", id=None))]
    fn load(
        path: std::path::PathBuf,
        target: Option<&str>,
        positive: Option<String>,
        impute: &str,
        id: Option<String>,
    ) -> PyResult<Self> {
        let mut opts = LoadOptions::new(target.map_or(TargetColumn::Last, TargetColumn::parse));
        opts.positive = positive;
        opts.impute = match impute {
            "reject" => Impute::Reject,
            "mean" => Impute::Mean,
            other => {
                return Err(err(format!(
                    "impute must be `reject` or `mean`, got `{other}`"
                )))
            }
        };
        opts.id = id;
        Ok(Self {
            inner: load_csv(path, &opts).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_cols()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    /// 0/1 labels; 1 is the positive class.
    #[getter]
    fn labels(&self) -> Vec<u32> {
        ints(self.inner.labels())
    }

    #[getter]
    fn class_counts(&self) -> (usize, usize) {
        let [a, b] = self.inner.class_counts();
        (a, b)
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(id={:?}, n_rows={}, n_features={})",
            self.inner.id(),
            self.inner.n_rows(),
            self.inner.n_cols()
        )
    }
}

/// Evaluation-split labels of one model family under a list of
/// configurations, one of them the default.
#[pyclass(module = "hypermult", frozen, from_py_object)]
#[derive(Clone)]
struct PredictionSet {
    inner: core::PredictionSet,
    dims: Dims,
    /// Elastic-net configurations that hit the iteration cap.
    non_converged: Vec<String>,
}

#[pymethods]
impl PredictionSet {
    #[getter]
    fn dataset_id(&self) -> &str {
        self.inner.dataset_id()
    }

    #[getter]
    fn model(&self) -> &'static str {
        self.inner.model().name()
    }

    #[getter]
    fn n_eval(&self) -> usize {
        self.inner.eval_labels().len()
    }

    #[getter]
    fn eval_labels(&self) -> Vec<u32> {
        ints(self.inner.eval_labels())
    }

    #[getter]
    fn failed_count(&self) -> usize {
        self.inner.failed_count()
    }

    #[getter]
    fn non_converged(&self) -> Vec<String> {
        self.non_converged.clone()
    }

    #[getter]
    fn default_f1(&self) -> f64 {
        self.inner.default_f1()
    }

    /// Every entry as a dict: config (id, values, default flag), labels
    /// and failure message.
    fn entries(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.entries())
    }

    /// Largest share of evaluation rows on which a configuration in the
    /// scope disagrees with the default.
    ///
    /// Args:
    ///     scope: "model", "marginal" or "joint".
    ///     h1, h2: parameter names the scope varies.
    #[pyo3(signature = (scope="model", h1=None, h2=None))]
    fn discrepancy(
        &self,
        py: Python<'_>,
        scope: &str,
        h1: Option<&str>,
        h2: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let scope = parse_scope(scope, h1, h2)?;
        to_py(py, &core::discrepancy(&self.inner, scope).map_err(err)?)
    }

    /// Best F1 in the scope minus the default configuration's F1.
    #[pyo3(signature = (scope="model", h1=None, h2=None))]
    fn tunability(
        &self,
        py: Python<'_>,
        scope: &str,
        h1: Option<&str>,
        h2: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let scope = parse_scope(scope, h1, h2)?;
        to_py(
            py,
            &core::metrics::tunability_in(&self.inner, scope).map_err(err)?,
        )
    }

    /// Interchange text of this set.
    fn to_interchange(&self) -> String {
        interchange::to_string(&self.inner, self.dims)
    }

    /// Writes the interchange file.
    fn export(&self, path: std::path::PathBuf) -> PyResult<()> {
        interchange::export_predictions(path, &self.inner, self.dims).map_err(err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "PredictionSet(dataset_id={:?}, model={}, entries={}, n_eval={})",
            self.inner.dataset_id(),
            self.inner.model(),
            self.inner.entries().len(),
            self.inner.eval_labels().len()
        )
    }
}

struct SweepArgs {
    seed: u64,
    split_fraction: f64,
    eval_on: EvalOn,
}

impl SweepArgs {
    fn new(seed: u64, split_fraction: f64, eval_on: &str) -> PyResult<Self> {
        Ok(Self {
            seed,
            split_fraction,
            eval_on: eval_on.parse().map_err(err)?,
        })
    }

    fn split(&self, data: &core::Dataset) -> PyResult<SplitPair> {
        let s = derive_seed(self.seed, &["split", data.id()]);
        split(data, self.split_fraction, s).map_err(err)
    }

    fn run(
        &self,
        py: Python<'_>,
        kind: ModelKind,
        split: &SplitPair,
        configs: Vec<Config>,
    ) -> PyResult<PredictionSet> {
        let outcome = py
            .detach(|| run_sweep(kind, &configs, split, self.eval_on, self.seed))
            .map_err(err)?;
        Ok(PredictionSet {
            inner: outcome.predictions,
            dims: Dims {
                n_train: Some(split.train.n_rows()),
                n_features: Some(split.train.n_cols()),
            },
            non_converged: outcome.non_converged,
        })
    }
}

/// Trains the default plus `count` random configurations from the full
/// space. Seeds match the `hypermult` command line.
#[pyfunction]
#[pyo3(signature = (data, model, count=50, seed=0, split_fraction=0.3, eval_on="holdout"))]
fn sweep(
    py: Python<'_>,
    data: &Dataset,
    model: &str,
    count: usize,
    seed: u64,
    split_fraction: f64,
    eval_on: &str,
) -> PyResult<PredictionSet> {
    let kind = parse_model(model)?;
    let args = SweepArgs::new(seed, split_fraction, eval_on)?;
    let pair = args.split(&data.inner)?;
    let space = space_for(kind, &pair.train).map_err(err)?;
    let sample_seed = derive_seed(seed, &["sample", data.inner.id(), kind.name()]);
    let configs = sample_full(&space, count, sample_seed);
    args.run(py, kind, &pair, configs)
}

/// Varies one parameter over `points` grid values, others at default.
#[pyfunction]
#[pyo3(signature = (data, model, param, points=21, seed=0, split_fraction=0.3, eval_on="holdout"))]
#[allow(clippy::too_many_arguments)]
fn marginal_sweep(
    py: Python<'_>,
    data: &Dataset,
    model: &str,
    param: &str,
    points: usize,
    seed: u64,
    split_fraction: f64,
    eval_on: &str,
) -> PyResult<PredictionSet> {
    let kind = parse_model(model)?;
    let args = SweepArgs::new(seed, split_fraction, eval_on)?;
    let pair = args.split(&data.inner)?;
    let space = space_for(kind, &pair.train).map_err(err)?;
    let configs = marginal_grid(&space, param, points).map_err(err)?;
    args.run(py, kind, &pair, configs)
}

/// Varies two parameters over a `points` × `points` grid.
#[pyfunction]
#[pyo3(signature = (data, model, h1, h2, points=5, seed=0, split_fraction=0.3, eval_on="holdout"))]
#[allow(clippy::too_many_arguments)]
fn joint_sweep(
    py: Python<'_>,
    data: &Dataset,
    model: &str,
    h1: &str,
    h2: &str,
    points: usize,
    seed: u64,
    split_fraction: f64,
    eval_on: &str,
) -> PyResult<PredictionSet> {
    let kind = parse_model(model)?;
    let args = SweepArgs::new(seed, split_fraction, eval_on)?;
    let pair = args.split(&data.inner)?;
    let space = space_for(kind, &pair.train).map_err(err)?;
    let configs = pairwise_grid(&space, h1, h2, points).map_err(err)?;
    args.run(py, kind, &pair, configs)
}

/// Reads an interchange file, validating values against the model's
/// space when the header records the training dimensions.
#[pyfunction]
fn import_predictions(path: std::path::PathBuf) -> PyResult<PredictionSet> {
    let (inner, dims) = interchange::import_with_dims(path, SpaceCheck::FromHeader).map_err(err)?;
    Ok(PredictionSet {
        inner,
        dims,
        non_converged: Vec::new(),
    })
}

/// Parses interchange text.
#[pyfunction]
fn parse_predictions(text: &str) -> PyResult<PredictionSet> {
    let (inner, dims) = interchange::from_str(text, SpaceCheck::FromHeader).map_err(err)?;
    Ok(PredictionSet {
        inner,
        dims,
        non_converged: Vec::new(),
    })
}

/// Builds the bivariate region panel of joint sweeps of one model,
/// binning each axis on the space of an `n_train` × `n_features` split.
#[pyfunction]
#[pyo3(signature = (sets, h1, h2, n_train, n_features, axis_bins=10))]
fn region_panel(
    py: Python<'_>,
    sets: Vec<PredictionSet>,
    h1: &str,
    h2: &str,
    n_train: usize,
    n_features: usize,
    axis_bins: usize,
) -> PyResult<Py<PyAny>> {
    let first = sets
        .first()
        .ok_or_else(|| err("region_panel needs at least one set"))?;
    let space = space_for_dims(first.inner.model(), n_train, n_features).map_err(err)?;
    let inner: Vec<core::PredictionSet> = sets.into_iter().map(|s| s.inner).collect();
    let panel = BivariatePanel::build(&inner, &space, h1, h2, axis_bins).map_err(err)?;
    to_py(py, &panel)
}

/// Count, mean, sample std, median, min and max of per-dataset values.
#[pyfunction]
fn aggregate(py: Python<'_>, values: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &core::aggregate(&values).map_err(err)?)
}

/// `"mean ± std"` with four decimals (`NA` for a single value).
#[pyfunction]
fn render(values: Vec<f64>) -> PyResult<String> {
    Ok(core::aggregate(&values).map_err(err)?.render())
}

/// Equal-range low/medium/high bins (0/1/2) and the two break points;
/// all-equal values give all zeros and no breaks.
#[pyfunction]
fn equal_range_bins(values: Vec<f64>) -> (Vec<u32>, Option<(f64, f64)>) {
    let (bins, breaks) = reports::equal_range_bins(&values);
    (ints(&bins), breaks.map(|[a, b]| (a, b)))
}

/// F1 of the positive class (label 1); 0 when undefined.
#[pyfunction]
fn f1(pred: Vec<u8>, truth: Vec<u8>) -> PyResult<f64> {
    core::f1(&pred, &truth, 1).map_err(err)
}

/// Hyperparameter names of a model family.
#[pyfunction]
fn param_names(model: &str) -> PyResult<Vec<&'static str>> {
    Ok(core_param_names(parse_model(model)?))
}

/// Parameter specs (bounds, scale, default) for a training split of
/// `n_train` rows and `n_features` columns.
#[pyfunction]
fn hyperparam_space(
    py: Python<'_>,
    model: &str,
    n_train: usize,
    n_features: usize,
) -> PyResult<Py<PyAny>> {
    let space = space_for_dims(parse_model(model)?, n_train, n_features).map_err(err)?;
    to_py(py, &space)
}

#[pymodule]
fn hypermult(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HypermultError", m.py().get_type::<HypermultError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_class::<PredictionSet>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(marginal_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(joint_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(import_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(parse_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(region_panel, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(equal_range_bins, m)?)?;
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(param_names, m)?)?;
    m.add_function(wrap_pyfunction!(hyperparam_space, m)?)?;
    Ok(())
}
