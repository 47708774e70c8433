//! Cross-dataset summaries, region panels and report files.
//!
//! Two discrepancy statistics appear in a report and are labelled
//! separately: per-dataset results use the maximum disagreement over a
//! configuration set, while bivariate panels use the mean disagreement of
//! the configurations falling into each region.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::ModelKind;
use crate::metrics::{
    aggregate, AggregateStat, Confusion, DiscrepancyResult, PredictionSet, Scope, TunabilityResult,
};
use crate::space::{Config, HyperparamSpace};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of regions per hyperparameter axis in a bivariate panel.
pub const DEFAULT_AXIS_BINS: usize = 10;

/// One (dataset, model, scope) result: max discrepancy and F1 gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset_id: String,
    pub model: ModelKind,
    pub scope: Scope,
    pub n_eval: usize,
    /// Non-default, non-failed configurations compared.
    pub compared: usize,
    pub failed: usize,
    pub discrepancy: f64,
    pub disagreements: usize,
    pub discrepancy_config: Config,
    pub default_f1: f64,
    pub best_f1: f64,
    pub tunability: f64,
    pub tunability_config: Config,
}

impl ResultRow {
    pub fn new(d: &DiscrepancyResult, t: &TunabilityResult, failed: usize) -> Self {
        Self {
            dataset_id: d.dataset_id.clone(),
            model: d.model,
            scope: d.scope.clone(),
            n_eval: d.n_eval,
            compared: d.compared,
            failed,
            discrepancy: d.value,
            disagreements: d.disagreements,
            discrepancy_config: d.argmax_config.clone(),
            default_f1: t.default_f1,
            best_f1: t.best_f1,
            tunability: t.value,
            tunability_config: t.best_config.clone(),
        }
    }
}

/// Discrepancy and tunability of one model (and scope) aggregated over
/// the same list of datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: ModelKind,
    pub scope: Scope,
    pub datasets: Vec<String>,
    pub discrepancy: AggregateStat,
    pub tunability: AggregateStat,
    /// `"mean ± std"` renderings of the two statistics.
    pub discrepancy_text: String,
    pub tunability_text: String,
}

/// Groups rows by (model, scope) and aggregates each group over its own
/// datasets. Rows come out ordered by model, then scope.
pub fn summary_table(results: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(Error::Empty);
    }
    let mut groups: BTreeMap<(ModelKind, Scope), Vec<&ResultRow>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.model, r.scope.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((model, scope), rows)| {
            let disc: Vec<f64> = rows.iter().map(|r| r.discrepancy).collect();
            let tune: Vec<f64> = rows.iter().map(|r| r.tunability).collect();
            let discrepancy = aggregate(&disc)?;
            let tunability = aggregate(&tune)?;
            Ok(SummaryRow {
                model,
                scope,
                datasets: rows.iter().map(|r| r.dataset_id.clone()).collect(),
                discrepancy_text: discrepancy.render(),
                tunability_text: tunability.render(),
                discrepancy,
                tunability,
            })
        })
        .collect()
}

/// A rectangle of the (h1, h2) plane with the mean F1 and mean
/// disagreement-with-default of the configurations inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub h1_bin: usize,
    pub h2_bin: usize,
    pub h1_range: [f64; 2],
    pub h2_range: [f64; 2],
    /// (dataset, configuration) pairs in the region.
    pub members: usize,
    /// Absent for an empty region.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_discrepancy: Option<f64>,
}

struct AxisBins {
    lo: f64,
    width: f64,
    bins: usize,
}

impl AxisBins {
    fn new<'a>(
        space: &'a HyperparamSpace,
        name: &str,
        bins: usize,
    ) -> Result<(Self, &'a crate::space::ParamSpec)> {
        let spec = space.param(name)?;
        let lo = spec.to_axis(spec.lower);
        let hi = spec.to_axis(spec.upper);
        Ok((
            Self {
                lo,
                width: (hi - lo) / bins as f64,
                bins,
            },
            spec,
        ))
    }

    /// Region index of an axis coordinate; values outside the sweep range
    /// (an out-of-range default) fall into the nearest end region.
    fn index(&self, a: f64) -> usize {
        if self.width <= 0.0 || a.is_nan() {
            return 0;
        }
        let i = ((a - self.lo) / self.width).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }
}

/// Partitions each hyperparameter axis into `axis_bins` equal ranges on
/// its own scale (exponents for log2 axes) and averages F1 and
/// disagreement-with-default over every non-failed entry of `sets` whose
/// configuration falls into each region. Every set must be a joint
/// (h1, h2) sweep of the same model.
pub fn region_cells(
    sets: &[PredictionSet],
    space: &HyperparamSpace,
    h1: &str,
    h2: &str,
    axis_bins: usize,
) -> Result<Vec<RegionCell>> {
    if axis_bins == 0 {
        return Err(Error::InvalidConfig("axis_bins must be positive".into()));
    }
    if h1 == h2 {
        return Err(Error::SameParam(h1.to_string()));
    }
    let (ax1, spec1) = AxisBins::new(space, h1, axis_bins)?;
    let (ax2, spec2) = AxisBins::new(space, h2, axis_bins)?;
    let scope = Scope::joint(h1, h2);
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); axis_bins * axis_bins];
    for ps in sets {
        scope.check(ps)?;
        let baseline = &ps.default_entry().labels;
        let n = baseline.len() as f64;
        for e in ps.entries().iter().filter(|e| !e.is_failed()) {
            let (Some(v1), Some(v2)) = (e.config.get(h1), e.config.get(h2)) else {
                return Err(Error::InvalidConfig(format!(
                    "config {} lacks `{h1}` or `{h2}`",
                    e.config.id()
                )));
            };
            let i = ax1.index(spec1.to_axis(v1));
            let j = ax2.index(spec2.to_axis(v2));
            let f1 = Confusion::from_labels(&e.labels, ps.eval_labels(), ps.positive_label())?.f1();
            let diff = e
                .labels
                .iter()
                .zip(baseline)
                .filter(|(a, b)| a != b)
                .count();
            let cell = &mut sums[i * axis_bins + j];
            cell.0 += 1;
            cell.1 += f1;
            cell.2 += diff as f64 / n;
        }
    }
    let range = |ax: &AxisBins, spec: &crate::space::ParamSpec, i: usize| {
        let lo = if i == 0 {
            spec.lower
        } else {
            spec.from_axis(ax.lo + ax.width * i as f64)
        };
        let hi = if i + 1 == ax.bins {
            spec.upper
        } else {
            spec.from_axis(ax.lo + ax.width * (i + 1) as f64)
        };
        [lo, hi]
    };
    Ok((0..axis_bins)
        .flat_map(|i| (0..axis_bins).map(move |j| (i, j)))
        .map(|(i, j)| {
            let (count, f1_sum, disc_sum) = sums[i * axis_bins + j];
            let mean = |s: f64| (count > 0).then(|| s / count as f64);
            RegionCell {
                h1_bin: i,
                h2_bin: j,
                h1_range: range(&ax1, spec1, i),
                h2_range: range(&ax2, spec2, j),
                members: count,
                mean_f1: mean(f1_sum),
                mean_discrepancy: mean(disc_sum),
            }
        })
        .collect())
}

/// Equal-range thirds of `values`: break points at one and two thirds of
/// `[min, max]`; a value at or above a break point takes the higher bin;
/// when every value is equal all fall into bin 0 and no breaks exist.
pub fn equal_range_bins(values: &[f64]) -> (Vec<u8>, Option<[f64; 2]>) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max <= min {
        return (vec![0; values.len()], None);
    }
    let width = (max - min) / 3.0;
    let breaks = [min + width, min + 2.0 * width];
    let bins = values
        .iter()
        .map(|&v| {
            if v >= breaks[1] || v == max {
                2
            } else if v >= breaks[0] {
                1
            } else {
                0
            }
        })
        .collect();
    (bins, Some(breaks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateCell {
    pub h1_range: [f64; 2],
    pub h2_range: [f64; 2],
    pub mean_f1: f64,
    pub mean_discrepancy: f64,
    pub f1_bin: u8,
    pub disc_bin: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateGrid {
    pub cells: Vec<BivariateCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_breaks: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_breaks: Option<[f64; 2]>,
}

/// Bins the non-empty cells of one panel into a 3×3 grid of
/// (F1 third, discrepancy third). Empty regions are skipped.
pub fn bivariate_grid(cells: &[RegionCell]) -> Result<BivariateGrid> {
    let mut kept = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        if let (Some(f), Some(d)) = (c.mean_f1, c.mean_discrepancy) {
            if !f.is_finite() || !d.is_finite() {
                return Err(Error::NonFinite(i));
            }
            kept.push((c, f, d));
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty);
    }
    let f1s: Vec<f64> = kept.iter().map(|k| k.1).collect();
    let discs: Vec<f64> = kept.iter().map(|k| k.2).collect();
    let (f1_bins, f1_breaks) = equal_range_bins(&f1s);
    let (disc_bins, disc_breaks) = equal_range_bins(&discs);
    let cells = kept
        .iter()
        .zip(f1_bins.iter().zip(&disc_bins))
        .map(|((c, f, d), (fb, db))| BivariateCell {
            h1_range: c.h1_range,
            h2_range: c.h2_range,
            mean_f1: *f,
            mean_discrepancy: *d,
            f1_bin: *fb,
            disc_bin: *db,
        })
        .collect();
    Ok(BivariateGrid {
        cells,
        f1_breaks,
        disc_breaks,
    })
}

/// Region means and their 3×3 classification for one (model, h1, h2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariatePanel {
    pub model: ModelKind,
    pub h1: String,
    pub h2: String,
    pub axis_bins: usize,
    /// Always `"mean"`: regions average disagreement, unlike the max used
    /// for per-dataset results.
    pub statistic: String,
    pub regions: Vec<RegionCell>,
    pub grid: BivariateGrid,
}

impl BivariatePanel {
    pub fn build(
        sets: &[PredictionSet],
        space: &HyperparamSpace,
        h1: &str,
        h2: &str,
        axis_bins: usize,
    ) -> Result<Self> {
        let regions = region_cells(sets, space, h1, h2, axis_bins)?;
        let grid = bivariate_grid(&regions)?;
        Ok(Self {
            model: space.model,
            h1: h1.to_string(),
            h2: h2.to_string(),
            axis_bins,
            statistic: "mean".into(),
            regions,
            grid,
        })
    }
}

/// Per-dataset results of one scope family plus their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopedSection {
    /// Always `"max"`.
    pub statistic: String,
    pub results: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
}

impl Default for ScopedSection {
    fn default() -> Self {
        Self {
            statistic: "max".into(),
            results: Vec::new(),
            summary: Vec::new(),
        }
    }
}

impl ScopedSection {
    pub fn from_results(results: Vec<ResultRow>) -> Result<Self> {
        let summary = if results.is_empty() {
            Vec::new()
        } else {
            summary_table(&results)?
        };
        Ok(Self {
            results,
            summary,
            ..Self::default()
        })
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}

/// A (dataset, model) pair that produced no result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub dataset_id: String,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<Scope>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub split_fraction: f64,
    pub eval_on: String,
    pub failed_configs: usize,
    pub non_converged_configs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
    /// Wall-clock creation time; the only field that varies between
    /// identical runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub summary: Vec<SummaryRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_dataset: Vec<ResultRow>,
    #[serde(default, skip_serializing_if = "ScopedSection::is_empty")]
    pub marginal: ScopedSection,
    #[serde(default, skip_serializing_if = "ScopedSection::is_empty")]
    pub joint: ScopedSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bivariate: Vec<BivariatePanel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.to_path_buf()));
    }
    Ok(())
}

/// Writes `report` as one JSON file at `path`, or as CSV files (one per
/// non-empty section) inside the directory `path`. Existing files are
/// only replaced with `force`.
pub fn emit(
    report: &Report,
    format: Format,
    path: &Path,
    force: bool,
) -> Result<Vec<std::path::PathBuf>> {
    match format {
        Format::Json => {
            guard(path, force)?;
            let mut text = serde_json::to_string_pretty(report)?;
            text.push('\n');
            fs::write(path, text)?;
            Ok(vec![path.to_path_buf()])
        }
        Format::Csv => {
            fs::create_dir_all(path)?;
            let files = csv_sections(report);
            for (name, _) in &files {
                guard(&path.join(name), force)?;
            }
            let mut written = Vec::new();
            for (name, text) in files {
                let p = path.join(name);
                fs::write(&p, text)?;
                written.push(p);
            }
            Ok(written)
        }
    }
}

pub fn to_json(report: &Report) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn from_json(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

fn config_json(c: &Config) -> String {
    serde_json::to_string(c.values()).expect("config values serialize")
}

fn result_rows(rows: &[ResultRow]) -> String {
    csv_text(
        &[
            "dataset_id",
            "model",
            "scope",
            "n_eval",
            "compared",
            "failed",
            "discrepancy",
            "disagreements",
            "discrepancy_config",
            "default_f1",
            "best_f1",
            "tunability",
            "tunability_config",
        ],
        rows.iter()
            .map(|r| {
                vec![
                    r.dataset_id.clone(),
                    r.model.to_string(),
                    r.scope.to_string(),
                    r.n_eval.to_string(),
                    r.compared.to_string(),
                    r.failed.to_string(),
                    r.discrepancy.to_string(),
                    r.disagreements.to_string(),
                    config_json(&r.discrepancy_config),
                    r.default_f1.to_string(),
                    r.best_f1.to_string(),
                    r.tunability.to_string(),
                    config_json(&r.tunability_config),
                ]
            })
            .collect(),
    )
}

fn summary_rows(rows: &[SummaryRow]) -> String {
    let stat = |s: &AggregateStat| {
        vec![
            s.mean.to_string(),
            opt(s.std),
            s.median.to_string(),
            s.min.to_string(),
            s.max.to_string(),
        ]
    };
    csv_text(
        &[
            "model",
            "scope",
            "datasets",
            "discrepancy",
            "tunability",
            "discrepancy_mean",
            "discrepancy_std",
            "discrepancy_median",
            "discrepancy_min",
            "discrepancy_max",
            "tunability_mean",
            "tunability_std",
            "tunability_median",
            "tunability_min",
            "tunability_max",
        ],
        rows.iter()
            .map(|r| {
                let mut v = vec![
                    r.model.to_string(),
                    r.scope.to_string(),
                    r.datasets.len().to_string(),
                    r.discrepancy_text.clone(),
                    r.tunability_text.clone(),
                ];
                v.extend(stat(&r.discrepancy));
                v.extend(stat(&r.tunability));
                v
            })
            .collect(),
    )
}

/// CSV file name and contents for every non-empty report section.
pub fn csv_sections(report: &Report) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if !report.summary.is_empty() {
        out.push(("summary.csv".into(), summary_rows(&report.summary)));
    }
    if !report.per_dataset.is_empty() {
        out.push(("per_dataset.csv".into(), result_rows(&report.per_dataset)));
    }
    for (name, section) in [("marginal", &report.marginal), ("joint", &report.joint)] {
        if !section.is_empty() {
            out.push((format!("{name}.csv"), result_rows(&section.results)));
            out.push((
                format!("{name}_summary.csv"),
                summary_rows(&section.summary),
            ));
        }
    }
    if !report.bivariate.is_empty() {
        let mut rows = Vec::new();
        for panel in &report.bivariate {
            for r in &panel.regions {
                let bins = panel
                    .grid
                    .cells
                    .iter()
                    .find(|c| c.h1_range == r.h1_range && c.h2_range == r.h2_range);
                rows.push(vec![
                    panel.model.to_string(),
                    panel.h1.clone(),
                    panel.h2.clone(),
                    r.h1_bin.to_string(),
                    r.h2_bin.to_string(),
                    r.h1_range[0].to_string(),
                    r.h1_range[1].to_string(),
                    r.h2_range[0].to_string(),
                    r.h2_range[1].to_string(),
                    r.members.to_string(),
                    opt(r.mean_f1),
                    opt(r.mean_discrepancy),
                    bins.map(|b| b.f1_bin.to_string()).unwrap_or_default(),
                    bins.map(|b| b.disc_bin.to_string()).unwrap_or_default(),
                ]);
            }
        }
        out.push((
            "bivariate.csv".into(),
            csv_text(
                &[
                    "model",
                    "h1",
                    "h2",
                    "h1_bin",
                    "h2_bin",
                    "h1_lower",
                    "h1_upper",
                    "h2_lower",
                    "h2_upper",
                    "members",
                    "mean_f1",
                    "mean_discrepancy",
                    "f1_bin",
                    "disc_bin",
                ],
                rows,
            ),
        ));
    }
    out
}
