//! End-to-end orchestration: load datasets, sweep, score, write outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use hypermult_core::interchange::{self, Dims, SpaceCheck};
use hypermult_core::metrics::tunability_in;
use hypermult_core::reports::{
    self, BivariatePanel, Format, Meta, ResultRow, ScopedSection, Skipped,
};
use hypermult_core::seed::derive_seed;
use hypermult_core::{
    discrepancy, load_csv, marginal_grid, pairwise_grid, run_sweep, sample_full, space_for, split,
    Dataset, Error, EvalOn, Impute, LoadOptions, ModelKind, PredictionSet, Report, Scope,
    SplitPair, TargetColumn,
};
use log::{info, warn};

use crate::config::SweepConfig;
use crate::manifest::{sha256_file, DatasetRecord, FileRecord, Manifest, ModelRecord};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.3;

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_DIR: &str = "csv";
pub const PREDICTIONS_DIR: &str = "predictions";

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub split_fraction: f64,
    pub eval_on: EvalOn,
    pub impute: Impute,
    pub target: Option<String>,
    pub positive: Option<String>,
    pub axis_bins: usize,
    pub force: bool,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            seed: DEFAULT_SEED,
            split_fraction: DEFAULT_SPLIT_FRACTION,
            eval_on: EvalOn::Holdout,
            impute: Impute::Reject,
            target: None,
            positive: None,
            axis_bins: reports::DEFAULT_AXIS_BINS,
            force: false,
            jobs: 0,
        }
    }

    fn load_options(&self) -> LoadOptions {
        let mut o = LoadOptions::new(
            self.target
                .as_deref()
                .map_or(TargetColumn::Last, TargetColumn::parse),
        );
        o.positive = self.positive.clone();
        o.impute = self.impute;
        o
    }
}

/// What to sweep for one model family.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPlan {
    pub kind: ModelKind,
    /// Random full-space configurations besides the default; `None`
    /// skips the full-space sweep.
    pub count: Option<usize>,
    pub marginals: Vec<(String, usize)>,
    pub joints: Vec<(String, String, usize)>,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub command: String,
    pub datasets: Vec<PathBuf>,
    pub models: Vec<ModelPlan>,
    pub config_file: Option<PathBuf>,
}

impl Plan {
    pub fn from_config(config: &SweepConfig, config_file: Option<PathBuf>) -> anyhow::Result<Self> {
        let models = config
            .models
            .iter()
            .map(|m| {
                Ok(ModelPlan {
                    kind: m.kind()?,
                    count: (m.count > 0).then_some(m.count),
                    marginals: m.points.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                    joints: m
                        .joint
                        .iter()
                        .map(|j| (j.h1.clone(), j.h2.clone(), j.points))
                        .collect(),
                })
            })
            .collect::<anyhow::Result<_>>()?;
        Ok(Self {
            command: "sweep".into(),
            datasets: config.datasets.clone(),
            models,
            config_file,
        })
    }
}

/// Outputs of a finished run.
#[derive(Debug)]
pub struct RunResult {
    pub report: Report,
    pub manifest: Manifest,
    /// Some configurations failed or some (dataset, model) pairs had no
    /// result; the report is still complete for everything else.
    pub partial: bool,
}

fn check_outputs(out: &Path, force: bool) -> anyhow::Result<()> {
    for name in [REPORT_FILE, MANIFEST_FILE] {
        let p = out.join(name);
        if p.exists() && !force {
            return Err(Error::OutputExists(p).into());
        }
    }
    Ok(())
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

struct Loaded {
    split: SplitPair,
    record: DatasetRecord,
}

fn load_datasets(paths: &[PathBuf], opts: &RunOptions) -> anyhow::Result<Vec<Loaded>> {
    if paths.is_empty() {
        bail!("no datasets given; pass --data or list `datasets` in the sweep config");
    }
    let load = opts.load_options();
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for path in paths {
        let d: Dataset =
            load_csv(path, &load).with_context(|| format!("loading dataset {}", path.display()))?;
        d.check_min_rows()
            .with_context(|| format!("dataset {}", path.display()))?;
        if let Some(prev) = seen.insert(d.id().to_string(), path.clone()) {
            bail!(
                "datasets {} and {} share the id `{}`; rename one file",
                prev.display(),
                path.display(),
                d.id()
            );
        }
        let split_seed = derive_seed(opts.seed, &["split", d.id()]);
        let s = split(&d, opts.split_fraction, split_seed)
            .with_context(|| format!("splitting dataset `{}`", d.id()))?;
        info!(
            "dataset `{}`: {} rows, {} features, {} train / {} eval",
            d.id(),
            d.n_rows(),
            d.n_cols(),
            s.train.n_rows(),
            s.eval.n_rows()
        );
        out.push(Loaded {
            record: DatasetRecord {
                id: d.id().to_string(),
                path: path.clone(),
                sha256: sha256_file(path)?,
                n_rows: d.n_rows(),
                n_features: d.n_cols(),
                positive_label: d.positive_label(),
                split_seed,
                n_train: s.train.n_rows(),
                n_eval: s.eval.n_rows(),
            },
            split: s,
        });
    }
    Ok(out)
}

#[derive(Default)]
struct Collector {
    per_dataset: Vec<ResultRow>,
    marginal: Vec<ResultRow>,
    joint: Vec<ResultRow>,
    skipped: Vec<Skipped>,
    failed: usize,
    non_converged: usize,
    prediction_files: Vec<PathBuf>,
}

impl Collector {
    /// Scores one prediction set; a scope without comparable entries is
    /// recorded as skipped rather than aborting the run.
    fn score(&mut self, ps: &PredictionSet, scope: Scope) -> anyhow::Result<()> {
        let failed = ps.failed_count();
        let result =
            discrepancy(ps, scope.clone()).and_then(|d| Ok((d, tunability_in(ps, scope.clone())?)));
        match result {
            Ok((d, t)) => {
                let row = ResultRow::new(&d, &t, failed);
                match scope {
                    Scope::Model => self.per_dataset.push(row),
                    Scope::Marginal { .. } => self.marginal.push(row),
                    Scope::Joint { .. } => self.joint.push(row),
                }
            }
            Err(e @ Error::NoComparableEntry) => {
                warn!("{} on `{}` ({scope}): {e}", ps.model(), ps.dataset_id());
                self.skipped.push(Skipped {
                    dataset_id: ps.dataset_id().to_string(),
                    model: ps.model(),
                    scope: Some(scope),
                    reason: e.to_string(),
                });
            }
            Err(e) => {
                return Err(e).with_context(|| {
                    format!("scoring {} on `{}` ({scope})", ps.model(), ps.dataset_id())
                })
            }
        }
        Ok(())
    }
}

fn prediction_path(out: &Path, ps: &PredictionSet, tag: &str) -> PathBuf {
    out.join(PREDICTIONS_DIR)
        .join(format!("{}__{}__{tag}.tsv", ps.dataset_id(), ps.model()))
}

fn write_file(
    path: &Path,
    force: bool,
    write: impl FnOnce(&Path) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.to_path_buf()).into());
    }
    write(path)
}

/// Runs every sweep of `plan`, writes predictions, the report (JSON and
/// CSV) and the manifest under `opts.out`.
pub fn execute(plan: &Plan, opts: &RunOptions) -> anyhow::Result<RunResult> {
    let started = chrono::Utc::now();
    crate::config::check_fraction(opts.split_fraction)?;
    check_outputs(&opts.out, opts.force)?;
    let datasets = load_datasets(&plan.datasets, opts)?;
    fs::create_dir_all(opts.out.join(PREDICTIONS_DIR))?;
    let pool = pool(opts.jobs)?;

    let mut c = Collector::default();
    let mut models = Vec::new();
    let mut panels = Vec::new();
    for mp in &plan.models {
        let kind = mp.kind;
        let mut record = ModelRecord {
            model: kind,
            full_count: mp.count,
            marginals: mp.marginals.iter().cloned().collect(),
            joints: mp.joints.clone(),
            configs_trained: 0,
            failed: 0,
            non_converged: 0,
        };
        let mut joint_sets: Vec<Vec<PredictionSet>> = vec![Vec::new(); mp.joints.len()];
        let mut joint_space = None;
        for ds in &datasets {
            let id = ds.record.id.as_str();
            let space = space_for(kind, &ds.split.train)?;
            let mut tasks: Vec<(String, Scope, Vec<hypermult_core::Config>)> = Vec::new();
            if let Some(count) = mp.count {
                let sample_seed = derive_seed(opts.seed, &["sample", id, kind.name()]);
                tasks.push((
                    "full".into(),
                    Scope::Model,
                    sample_full(&space, count, sample_seed),
                ));
            }
            for (h, points) in &mp.marginals {
                tasks.push((
                    format!("marginal-{h}"),
                    Scope::marginal(h.as_str()),
                    marginal_grid(&space, h, *points)?,
                ));
            }
            for (h1, h2, points) in &mp.joints {
                tasks.push((
                    format!("joint-{h1}-{h2}"),
                    Scope::joint(h1.as_str(), h2.as_str()),
                    pairwise_grid(&space, h1, h2, *points)?,
                ));
            }
            let mut joint_idx = 0;
            for (tag, scope, configs) in tasks {
                info!(
                    "{kind} on `{id}`: {tag} sweep over {} configurations",
                    configs.len()
                );
                let outcome = pool
                    .install(|| run_sweep(kind, &configs, &ds.split, opts.eval_on, opts.seed))
                    .with_context(|| format!("{kind} on `{id}` ({tag})"))?;
                let ps = outcome.predictions;
                for e in ps.entries().iter().filter(|e| e.is_failed()) {
                    warn!(
                        "{kind} on `{id}`: config {} failed: {}",
                        e.config.id(),
                        e.failure.as_deref().unwrap_or_default()
                    );
                }
                record.configs_trained += configs.len();
                record.failed += ps.failed_count();
                record.non_converged += outcome.non_converged.len();
                c.failed += ps.failed_count();
                c.non_converged += outcome.non_converged.len();

                let path = prediction_path(&opts.out, &ps, &tag);
                let dims = Dims {
                    n_train: Some(ds.split.train.n_rows()),
                    n_features: Some(ds.split.train.n_cols()),
                };
                write_file(&path, opts.force, |p| {
                    Ok(interchange::export_predictions(p, &ps, dims)?)
                })?;
                c.prediction_files.push(path);
                c.score(&ps, scope.clone())?;
                if matches!(scope, Scope::Joint { .. }) {
                    joint_sets[joint_idx].push(ps);
                    joint_idx += 1;
                }
            }
            joint_space.get_or_insert(space);
        }
        // Panels pool every dataset; axes use the first dataset's bounds,
        // and configurations beyond them fall into the edge regions.
        if let Some(space) = &joint_space {
            for ((h1, h2, _), sets) in mp.joints.iter().zip(&joint_sets) {
                panels.push(
                    BivariatePanel::build(sets, space, h1, h2, opts.axis_bins)
                        .with_context(|| format!("{kind} panel ({h1}, {h2})"))?,
                );
            }
        }
        models.push(record);
    }

    let report = Report {
        meta: Meta {
            schema_version: reports::SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            command: plan.command.clone(),
            seed: opts.seed,
            split_fraction: opts.split_fraction,
            eval_on: eval_on_name(opts.eval_on).into(),
            failed_configs: c.failed,
            non_converged_configs: c.non_converged,
            skipped: c.skipped.clone(),
            created_at: Some(started.to_rfc3339()),
        },
        summary: if c.per_dataset.is_empty() {
            Vec::new()
        } else {
            reports::summary_table(&c.per_dataset)?
        },
        per_dataset: c.per_dataset,
        marginal: ScopedSection::from_results(c.marginal)?,
        joint: ScopedSection::from_results(c.joint)?,
        bivariate: panels,
    };
    let partial = report.meta.failed_configs > 0 || !report.meta.skipped.is_empty();
    let inputs = datasets.into_iter().map(|d| d.record).collect();
    let manifest = finish(
        plan,
        opts,
        &report,
        inputs,
        models,
        c.prediction_files,
        started,
    )?;
    Ok(RunResult {
        report,
        manifest,
        partial,
    })
}

fn eval_on_name(e: EvalOn) -> &'static str {
    match e {
        EvalOn::Holdout => "holdout",
        EvalOn::Train => "train",
    }
}

fn finish(
    plan: &Plan,
    opts: &RunOptions,
    report: &Report,
    datasets: Vec<DatasetRecord>,
    models: Vec<ModelRecord>,
    mut files: Vec<PathBuf>,
    started: chrono::DateTime<chrono::Utc>,
) -> anyhow::Result<Manifest> {
    files.extend(reports::emit(
        report,
        Format::Json,
        &opts.out.join(REPORT_FILE),
        opts.force,
    )?);
    files.extend(reports::emit(
        report,
        Format::Csv,
        &opts.out.join(CSV_DIR),
        opts.force,
    )?);
    let outputs = files
        .iter()
        .map(|p| {
            Ok(FileRecord {
                path: p.strip_prefix(&opts.out).unwrap_or(p).to_path_buf(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    let config_file = plan
        .config_file
        .as_ref()
        .map(|p| {
            Ok::<_, anyhow::Error>(FileRecord {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .transpose()?;
    let manifest = Manifest {
        tool_version: TOOL_VERSION.into(),
        command: plan.command.clone(),
        seed: opts.seed,
        split_fraction: opts.split_fraction,
        eval_on: eval_on_name(opts.eval_on).into(),
        impute: opts.impute,
        target: opts.target.clone(),
        positive: opts.positive.clone(),
        axis_bins: opts.axis_bins,
        config_file,
        datasets,
        models,
        outputs,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    manifest.write(&opts.out.join(MANIFEST_FILE))?;
    info!("wrote {}", opts.out.display());
    Ok(manifest)
}

/// Full sweep from a config file; `data` (when non-empty) replaces the
/// config's dataset list.
pub fn cmd_sweep(
    config_path: &Path,
    data: &[PathBuf],
    opts: &RunOptions,
) -> anyhow::Result<RunResult> {
    let config = SweepConfig::load(config_path)?;
    let mut plan = Plan::from_config(&config, Some(config_path.to_path_buf()))?;
    if !data.is_empty() {
        plan.datasets = data.to_vec();
    }
    execute(&plan, opts)
}

/// Marginal grid over one hyperparameter of one model.
pub fn cmd_marginal(
    model: &str,
    param: &str,
    points: usize,
    data: &[PathBuf],
    opts: &RunOptions,
) -> anyhow::Result<RunResult> {
    let kind = crate::config::builtin_model(model)?;
    crate::config::check_param(kind, param)?;
    let plan = Plan {
        command: "marginal".into(),
        datasets: data.to_vec(),
        models: vec![ModelPlan {
            kind,
            count: None,
            marginals: vec![(param.to_string(), points)],
            joints: Vec::new(),
        }],
        config_file: None,
    };
    execute(&plan, opts)
}

/// Pairwise grid over two hyperparameters, with the region panel.
pub fn cmd_joint(
    model: &str,
    h1: &str,
    h2: &str,
    points: usize,
    data: &[PathBuf],
    opts: &RunOptions,
) -> anyhow::Result<RunResult> {
    let kind = crate::config::builtin_model(model)?;
    crate::config::check_param(kind, h1)?;
    crate::config::check_param(kind, h2)?;
    if h1 == h2 {
        return Err(Error::SameParam(h1.to_string()).into());
    }
    let plan = Plan {
        command: "joint".into(),
        datasets: data.to_vec(),
        models: vec![ModelPlan {
            kind,
            count: None,
            marginals: Vec::new(),
            joints: vec![(h1.to_string(), h2.to_string(), points)],
        }],
        config_file: None,
    };
    execute(&plan, opts)
}

/// Entries that differ from the default in `h` at most. Grid axes hold
/// the default value, so a candidate may repeat the default config.
fn marginal_subset(ps: &PredictionSet, h: &str) -> PredictionSet {
    let default = ps.default_entry().config.clone();
    ps.filtered(|e| e.config.differing_params(&default).iter().all(|p| *p == h))
}

/// Scores externally produced prediction files: model scope over every
/// entry plus a marginal result for each hyperparameter that some entry
/// varies alone.
pub fn cmd_import(files: &[PathBuf], opts: &RunOptions) -> anyhow::Result<RunResult> {
    let started = chrono::Utc::now();
    if files.is_empty() {
        bail!("no prediction files given");
    }
    check_outputs(&opts.out, opts.force)?;
    fs::create_dir_all(&opts.out)?;
    let mut c = Collector::default();
    let mut inputs = Vec::new();
    let mut models: BTreeMap<ModelKind, ModelRecord> = BTreeMap::new();
    for path in files {
        let (ps, dims) = interchange::import_with_dims(path, SpaceCheck::FromHeader)
            .with_context(|| format!("importing {}", path.display()))?;
        info!(
            "imported {} on `{}`: {} configurations",
            ps.model(),
            ps.dataset_id(),
            ps.entries().len()
        );
        c.failed += ps.failed_count();
        c.score(&ps, Scope::Model)?;
        let mut params: Vec<String> = ps
            .entries()
            .iter()
            .flat_map(|e| e.config.values().keys().cloned())
            .collect();
        params.sort();
        params.dedup();
        for h in &params {
            let sub = marginal_subset(&ps, h);
            if sub.candidates().next().is_some() {
                c.score(&sub, Scope::marginal(h.as_str()))?;
            }
        }
        let rec = models.entry(ps.model()).or_insert_with(|| ModelRecord {
            model: ps.model(),
            full_count: None,
            marginals: BTreeMap::new(),
            joints: Vec::new(),
            configs_trained: 0,
            failed: 0,
            non_converged: 0,
        });
        rec.configs_trained += ps.entries().len();
        rec.failed += ps.failed_count();
        inputs.push(DatasetRecord {
            id: ps.dataset_id().to_string(),
            path: path.clone(),
            sha256: sha256_file(path)?,
            n_rows: dims.n_train.unwrap_or(0) + ps.eval_labels().len(),
            n_features: dims.n_features.unwrap_or(0),
            positive_label: ps.positive_label(),
            split_seed: 0,
            n_train: dims.n_train.unwrap_or(0),
            n_eval: ps.eval_labels().len(),
        });
    }
    let report = Report {
        meta: Meta {
            schema_version: reports::SCHEMA_VERSION,
            tool_version: TOOL_VERSION.into(),
            command: "import".into(),
            seed: opts.seed,
            split_fraction: opts.split_fraction,
            eval_on: eval_on_name(opts.eval_on).into(),
            failed_configs: c.failed,
            non_converged_configs: 0,
            skipped: c.skipped.clone(),
            created_at: Some(started.to_rfc3339()),
        },
        summary: if c.per_dataset.is_empty() {
            Vec::new()
        } else {
            reports::summary_table(&c.per_dataset)?
        },
        per_dataset: c.per_dataset,
        marginal: ScopedSection::from_results(c.marginal)?,
        joint: ScopedSection::default(),
        bivariate: Vec::new(),
    };
    let partial = report.meta.failed_configs > 0 || !report.meta.skipped.is_empty();
    let plan = Plan {
        command: "import".into(),
        datasets: files.to_vec(),
        models: Vec::new(),
        config_file: None,
    };
    let manifest = finish(
        &plan,
        opts,
        &report,
        inputs,
        models.into_values().collect(),
        Vec::new(),
        started,
    )?;
    Ok(RunResult {
        report,
        manifest,
        partial,
    })
}
