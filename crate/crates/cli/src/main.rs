use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypermult_cli::run::{self, RunOptions, RunResult};
use hypermult_core::{EvalOn, Impute};
use log::error;

/// Measure how much hyperparameter choices change a classifier's
/// predictions relative to its default configuration.
///
/// Exit status: 0 on success, 1 on a fatal error, 2 when some
/// configurations failed but the report was still written.
#[derive(Parser)]
#[command(name = "hypermult", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweeps listed in a TOML config over one or more datasets.
    Sweep {
        /// Sweep config file.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Vary one hyperparameter over a grid, others at their defaults.
    Marginal {
        /// Model family, e.g. KNN, DecisionTree, ElasticNet.
        #[arg(long)]
        model: String,
        /// Hyperparameter name, e.g. `k` or `min.node.size`.
        #[arg(long)]
        param: String,
        /// Grid points along the axis (the default value is added).
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Vary two hyperparameters over a grid and build the region panel.
    Joint {
        #[arg(long)]
        model: String,
        #[arg(long)]
        h1: String,
        #[arg(long)]
        h2: String,
        /// Grid points per axis (the default value is added).
        #[arg(long, default_value_t = 5)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions produced elsewhere (interchange files).
    Import {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Input files: dataset CSVs, or interchange files for `import`.
    /// Repeatable; for `sweep` replaces the config's dataset list.
    #[arg(long, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation share of each class.
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Rows on which predictions are compared.
    #[arg(long, value_parser = parse_eval_on)]
    eval_on: Option<EvalOn>,
    /// Missing-value policy.
    #[arg(long, value_parser = parse_impute)]
    impute: Option<Impute>,
    /// Target column name or 0-based index (default: last column).
    #[arg(long)]
    target: Option<String>,
    /// Target value treated as the positive class (default: minority).
    #[arg(long)]
    positive: Option<String>,
    /// Regions per axis in bivariate panels.
    #[arg(long)]
    axis_bins: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn parse_eval_on(s: &str) -> Result<EvalOn, String> {
    s.parse()
}

fn parse_impute(s: &str) -> Result<Impute, String> {
    match s {
        "reject" => Ok(Impute::Reject),
        "mean" => Ok(Impute::Mean),
        _ => Err(format!("expected `reject` or `mean`, got `{s}`")),
    }
}

impl Common {
    /// Command-line values win over config-file values, which win over
    /// built-in defaults.
    fn options(&self, config: Option<&hypermult_cli::SweepConfig>) -> RunOptions {
        let mut o = RunOptions::new(&self.out);
        if let Some(c) = config {
            o.seed = c.seed.unwrap_or(o.seed);
            o.split_fraction = c.split_fraction.unwrap_or(o.split_fraction);
            o.eval_on = c.eval_on.unwrap_or(o.eval_on);
            o.impute = c.impute.unwrap_or(o.impute);
            o.target = c.target.clone();
            o.positive = c.positive.clone();
            o.axis_bins = c.axis_bins.unwrap_or(o.axis_bins);
        }
        o.seed = self.seed.unwrap_or(o.seed);
        o.split_fraction = self.split_fraction.unwrap_or(o.split_fraction);
        o.eval_on = self.eval_on.unwrap_or(o.eval_on);
        o.impute = self.impute.unwrap_or(o.impute);
        o.target = self.target.clone().or(o.target);
        o.positive = self.positive.clone().or(o.positive);
        o.axis_bins = self.axis_bins.unwrap_or(o.axis_bins);
        o.force = self.force;
        o.jobs = self.jobs;
        o
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<RunResult> {
    match cli.command {
        Command::Sweep { config, common } => {
            let parsed = hypermult_cli::SweepConfig::load(&config)?;
            run::cmd_sweep(&config, &common.data, &common.options(Some(&parsed)))
        }
        Command::Marginal {
            model,
            param,
            points,
            common,
        } => run::cmd_marginal(&model, &param, points, &common.data, &common.options(None)),
        Command::Joint {
            model,
            h1,
            h2,
            points,
            common,
        } => run::cmd_joint(
            &model,
            &h1,
            &h2,
            points,
            &common.data,
            &common.options(None),
        ),
        Command::Import { common } => run::cmd_import(&common.data, &common.options(None)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match dispatch(Cli::parse()) {
        Ok(r) if r.partial => {
            log::warn!(
                "partial run: {} failed configuration(s), {} skipped result(s)",
                r.report.meta.failed_configs,
                r.report.meta.skipped.len()
            );
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
