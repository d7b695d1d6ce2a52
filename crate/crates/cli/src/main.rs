//! `clf-lab`: train, sweep, compare, group-study, duration-study, and tune
//! commands over the deterministic composite-loss engine.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 divergence.
//! Given fixed inputs and seeds every command is byte-reproducible; the
//! optional `generated_at_unix` field is the one exception and
//! `--no-timestamp` suppresses it.

use clap::{Parser, Subcommand};
use clf_core::config::{load_pool, parse_seed_list, ExperimentConfig};
use clf_core::harness::{
    avg_var_reduction, duration_csv, duration_study, group_study, groups_csv, summarize, sweep,
    Reduction, VariabilitySummary, DEFAULT_STAT_SEED,
};
use clf_core::report::{to_json_string, unix_timestamp, write_text};
use clf_core::train::{train_with_options, FinalMetrics, RunRecord, Task};
use clf_core::tune::{history_csv, run_tuning, BestParams, MetricSource};
use clf_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "clf-lab", version, about = "Deterministic composite-loss experiment lab")]
struct Cli {
    /// Worker threads for multi-run commands. Output bytes never depend
    /// on this.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    jobs: u32,
    /// Omit the generated_at_unix field from JSON reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed and write its run log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory (falls back to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a per-batch loss log.
        #[arg(long)]
        batch_log: bool,
    },
    /// Train many seeds and summarize cross-seed variability.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Seed list, e.g. "1..20" or "1,2,5" (falls back to the config's
        /// sweep section).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exclude divergent runs from the summary instead of failing.
        #[arg(long)]
        skip_divergent: bool,
        /// Seed for the bootstrap error bounds.
        #[arg(long, default_value_t = DEFAULT_STAT_SEED)]
        stat_seed: u64,
    },
    /// Compare two sweep summaries and report the SD reduction.
    Compare {
        /// Directory holding the baseline summary.json.
        #[arg(long)]
        baseline: PathBuf,
        /// Directory holding the comparison summary.json.
        #[arg(long)]
        clf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subset-group stability analysis over two metric pools.
    Groups {
        #[arg(long)]
        pool_a: PathBuf,
        #[arg(long)]
        pool_b: PathBuf,
        /// Group sizes, e.g. "5,10,15".
        #[arg(long)]
        sizes: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep each activation window and tabulate metric distributions.
    Duration {
        #[arg(long)]
        config: PathBuf,
        /// Window list, e.g. "10,30,50,70,90".
        #[arg(long)]
        windows: String,
        /// Override the config's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random-search the composite-loss weights.
    Tune {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Seed for the parameter sampler.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One run's provenance and outcome, written next to its CSV log.
#[derive(Serialize)]
struct RunJson<'a> {
    seed: u64,
    task: Task,
    metric_name: &'static str,
    config_hash: &'a str,
    epochs_completed: usize,
    divergent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    diverged_at_epoch: Option<usize>,
    final_metrics: &'a FinalMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
}

/// `summary.json`: cross-seed statistics plus provenance.
#[derive(Serialize, Deserialize)]
struct SummaryJson {
    config_hash: String,
    seeds: Vec<u64>,
    stat_seed: u64,
    #[serde(flatten)]
    summary: VariabilitySummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
}

/// `reduction.json`: both bound reductions for metric and loss SDs.
#[derive(Serialize)]
struct ReductionJson {
    metric_name: String,
    baseline_config_hash: String,
    clf_config_hash: String,
    baseline_sd: f64,
    baseline_sd_err: f64,
    clf_sd: f64,
    clf_sd_err: f64,
    metric_reduction: Reduction,
    baseline_loss_sd: f64,
    baseline_loss_sd_err: f64,
    clf_loss_sd: f64,
    clf_loss_sd_err: f64,
    loss_reduction: Reduction,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
}

/// `duration.json`: provenance manifest next to duration.csv.
#[derive(Serialize)]
struct DurationJson<'a> {
    config_hash: &'a str,
    windows: &'a [usize],
    seeds: &'a [u64],
    epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
}

/// `best_params.json`: winning trial plus provenance.
#[derive(Serialize)]
struct BestParamsJson<'a> {
    config_hash: &'a str,
    tuner_seed: u64,
    #[serde(flatten)]
    best: BestParams,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_error = e.use_stderr();
            let _ = e.print();
            return if is_error {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs as usize)
        .build_global()
    {
        eprintln!("error: cannot size the worker pool: {e}");
        return ExitCode::from(1);
    }
    let timestamp = if cli.no_timestamp {
        None
    } else {
        Some(unix_timestamp())
    };
    match run(cli.command, timestamp) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, timestamp: Option<u64>) -> Result<u8> {
    match command {
        Command::Train {
            config,
            seed,
            out,
            batch_log,
        } => cmd_train(&config, seed, out, batch_log, timestamp),
        Command::Sweep {
            config,
            seeds,
            out,
            skip_divergent,
            stat_seed,
        } => cmd_sweep(&config, seeds.as_deref(), out, skip_divergent, stat_seed, timestamp),
        Command::Compare { baseline, clf, out } => cmd_compare(&baseline, &clf, &out, timestamp),
        Command::Groups {
            pool_a,
            pool_b,
            sizes,
            samples,
            seed,
            out,
        } => cmd_groups(&pool_a, &pool_b, &sizes, samples, seed, &out),
        Command::Duration {
            config,
            windows,
            epochs,
            seeds,
            out,
        } => cmd_duration(&config, &windows, epochs, seeds.as_deref(), out, timestamp),
        Command::Tune {
            config,
            trials,
            seed,
            out,
        } => cmd_tune(&config, trials, seed, out, timestamp),
    }
}

fn cmd_train(
    config_path: &Path,
    seed: u64,
    out: Option<PathBuf>,
    batch_log: bool,
    timestamp: Option<u64>,
) -> Result<u8> {
    let config = ExperimentConfig::load(config_path)?;
    let out = resolve_out(out, &config)?;
    let hash = config.content_hash()?;
    let data = config.prepare_data()?;
    let record = train_with_options(
        &config.resolved_train(),
        &config.model,
        &data,
        seed,
        batch_log,
    )?;
    write_run_artifacts(&out, &record, &hash, batch_log, timestamp)?;
    if record.divergent {
        eprintln!(
            "seed {seed} diverged at epoch {}",
            record.diverged_at_epoch.unwrap_or(0)
        );
        return Ok(2);
    }
    println!(
        "seed {seed}: final {} = {}",
        record.task.metric_name(),
        record.final_metrics.metric
    );
    Ok(0)
}

fn cmd_sweep(
    config_path: &Path,
    seeds_flag: Option<&str>,
    out: Option<PathBuf>,
    skip_divergent: bool,
    stat_seed: u64,
    timestamp: Option<u64>,
) -> Result<u8> {
    let config = ExperimentConfig::load(config_path)?;
    let out = resolve_out(out, &config)?;
    let hash = config.content_hash()?;
    let seeds = resolve_seeds(seeds_flag, &config)?;
    let data = config.prepare_data()?;
    let result = sweep(&config.resolved_train(), &config.model, &data, &seeds)?;
    for record in &result.runs {
        write_run_artifacts(&out, record, &hash, false, timestamp)?;
    }
    let n_divergent = result.n_divergent();
    if n_divergent > 0 && !skip_divergent {
        eprintln!(
            "{n_divergent} of {} runs diverged; summary skipped (pass --skip-divergent to exclude them)",
            result.runs.len()
        );
        return Ok(2);
    }
    let summary = summarize(&result, skip_divergent, stat_seed)?;
    let report = SummaryJson {
        config_hash: hash,
        seeds: result.runs.iter().map(|r| r.seed).collect(),
        stat_seed,
        summary,
        generated_at_unix: timestamp,
    };
    write_text(&out.join("summary.json"), &to_json_string(&report)?)?;
    println!(
        "{} runs: mean {} = {}, sd = {}",
        report.summary.n_seeds,
        report.summary.metric_name,
        report.summary.mean_metric,
        report.summary.sd_metric
    );
    Ok(0)
}

fn cmd_compare(baseline: &Path, clf: &Path, out: &Path, timestamp: Option<u64>) -> Result<u8> {
    let base = read_summary(baseline)?;
    let with_clf = read_summary(clf)?;
    if base.summary.metric_name != with_clf.summary.metric_name {
        return Err(Error::Config(format!(
            "summaries measure different metrics: {} vs {}",
            base.summary.metric_name, with_clf.summary.metric_name
        )));
    }
    let metric_reduction = avg_var_reduction(
        (base.summary.sd_metric, base.summary.sd_err),
        (with_clf.summary.sd_metric, with_clf.summary.sd_err),
    )?;
    let loss_reduction = avg_var_reduction(
        (base.summary.loss_sd, base.summary.loss_sd_err),
        (with_clf.summary.loss_sd, with_clf.summary.loss_sd_err),
    )?;
    let report = ReductionJson {
        metric_name: base.summary.metric_name.clone(),
        baseline_config_hash: base.config_hash,
        clf_config_hash: with_clf.config_hash,
        baseline_sd: base.summary.sd_metric,
        baseline_sd_err: base.summary.sd_err,
        clf_sd: with_clf.summary.sd_metric,
        clf_sd_err: with_clf.summary.sd_err,
        metric_reduction,
        baseline_loss_sd: base.summary.loss_sd,
        baseline_loss_sd_err: base.summary.loss_sd_err,
        clf_loss_sd: with_clf.summary.loss_sd,
        clf_loss_sd_err: with_clf.summary.loss_sd_err,
        loss_reduction,
        generated_at_unix: timestamp,
    };
    write_text(&out.join("reduction.json"), &to_json_string(&report)?)?;
    println!(
        "average {} SD reduction: {}%",
        report.metric_name, report.metric_reduction.average_pct
    );
    Ok(0)
}

fn cmd_groups(
    pool_a: &Path,
    pool_b: &Path,
    sizes: &str,
    samples: usize,
    seed: u64,
    out: &Path,
) -> Result<u8> {
    let a = load_pool(pool_a)?;
    let b = load_pool(pool_b)?;
    let sizes = parse_usize_list(sizes, "group size")?;
    let results = group_study(&a, &b, &sizes, samples, seed)?;
    write_text(&out.join("groups.csv"), &groups_csv(&results))?;
    for row in &results {
        println!(
            "size {}: pool A SD strictly lower in {} of subsets",
            row.group_size, row.fraction_a_lower_sd
        );
    }
    Ok(0)
}

fn cmd_duration(
    config_path: &Path,
    windows: &str,
    epochs: Option<usize>,
    seeds_flag: Option<&str>,
    out: Option<PathBuf>,
    timestamp: Option<u64>,
) -> Result<u8> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(epochs) = epochs {
        config.train.epochs = epochs;
        config.validate()?;
    }
    let out = resolve_out(out, &config)?;
    let windows = parse_usize_list(windows, "window")?;
    let seeds = resolve_seeds(seeds_flag, &config)?;
    let data = config.prepare_data()?;
    let study = duration_study(
        &config.resolved_train(),
        &config.model,
        &data,
        &windows,
        &seeds,
    )?;
    write_text(&out.join("duration.csv"), &duration_csv(&study.rows))?;
    let mut divergent = 0;
    for (window, sweep_result) in &study.sweeps {
        let mut window_config = config.clone();
        window_config.clf.activation_window = *window;
        let hash = window_config.content_hash()?;
        let window_dir = out.join(format!("window_{window}"));
        for record in &sweep_result.runs {
            write_run_artifacts(&window_dir, record, &hash, false, timestamp)?;
        }
        divergent += sweep_result.n_divergent();
    }
    let manifest = DurationJson {
        config_hash: &config.content_hash()?,
        windows: &windows,
        seeds: &seeds,
        epochs: config.train.epochs,
        generated_at_unix: timestamp,
    };
    write_text(&out.join("duration.json"), &to_json_string(&manifest)?)?;
    if divergent > 0 {
        eprintln!("{divergent} run(s) diverged; see per-window run logs");
        return Ok(2);
    }
    println!("{} windows, {} seeds each", windows.len(), seeds.len());
    Ok(0)
}

fn cmd_tune(
    config_path: &Path,
    trials: Option<usize>,
    tuner_seed: u64,
    out: Option<PathBuf>,
    timestamp: Option<u64>,
) -> Result<u8> {
    let config = ExperimentConfig::load(config_path)?;
    let out = resolve_out(out, &config)?;
    let hash = config.content_hash()?;
    let mut tuner = config
        .tune
        .clone()
        .ok_or_else(|| Error::Config("config has no tune section".into()))?;
    if let Some(trials) = trials {
        tuner.n_trials = trials;
    }
    let data = config.prepare_data()?;
    let outcome = run_tuning(
        &tuner,
        &config.resolved_train(),
        &config.model,
        &data,
        tuner_seed,
    )?;
    write_text(&out.join("tuning_history.csv"), &history_csv(&outcome.history))?;
    let report = BestParamsJson {
        config_hash: &hash,
        tuner_seed,
        best: BestParams::new(&outcome, timestamp),
    };
    write_text(&out.join("best_params.json"), &to_json_string(&report)?)?;
    let source = match outcome.metric_source {
        MetricSource::Validation => "validation",
        MetricSource::Test => "test",
    };
    println!(
        "best trial {} (scored on {source} accuracy): lambda_v = {}, lambda_s = {}, lambda_wd = {}",
        outcome.best.trial, outcome.best.lambda_v, outcome.best.lambda_s, outcome.best.lambda_wd
    );
    Ok(0)
}

fn write_run_artifacts(
    dir: &Path,
    record: &RunRecord,
    config_hash: &str,
    include_batches: bool,
    timestamp: Option<u64>,
) -> Result<()> {
    let seed = record.seed;
    write_text(
        &dir.join(format!("run_seed{seed}.csv")),
        &record.epochs_csv(),
    )?;
    let json = RunJson {
        seed,
        task: record.task,
        metric_name: record.task.metric_name(),
        config_hash,
        epochs_completed: record.epochs.len(),
        divergent: record.divergent,
        diverged_at_epoch: record.diverged_at_epoch,
        final_metrics: &record.final_metrics,
        generated_at_unix: timestamp,
    };
    write_text(
        &dir.join(format!("run_seed{seed}.json")),
        &to_json_string(&json)?,
    )?;
    if include_batches {
        write_text(
            &dir.join(format!("run_seed{seed}_batches.csv")),
            &record.batches_csv(),
        )?;
    }
    Ok(())
}

fn read_summary(dir: &Path) -> Result<SummaryJson> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

fn resolve_out(flag: Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf> {
    flag.or_else(|| config.output_dir.clone()).ok_or_else(|| {
        Error::Config("no output directory: pass --out or set output_dir in the config".into())
    })
}

fn resolve_seeds(flag: Option<&str>, config: &ExperimentConfig) -> Result<Vec<u64>> {
    match flag {
        Some(text) => parse_seed_list(text),
        None => config
            .sweep
            .as_ref()
            .map(|s| s.seeds.clone())
            .ok_or_else(|| {
                Error::Config("no seeds: pass --seeds or add a sweep section".into())
            }),
    }
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    let mut values = Vec::new();
    for token in text.split(',') {
        let token = token.trim();
        let value: usize = token
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("invalid {what} {token:?}")))?;
        if values.contains(&value) {
            return Err(Error::InvalidArgument(format!("duplicate {what} {value}")));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!("empty {what} list")));
    }
    Ok(values)
}
