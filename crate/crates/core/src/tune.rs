//! Random-search tuning of the composite-loss weights (λ_v, λ_s, λ_wd),
//! minimizing normalized cross-seed SD minus normalized mean accuracy.
//!
//! Trials run sequentially because the min-max normalization is recomputed
//! over the whole history as it grows; each trial's internal sweep may
//! still parallelize across seeds.

use crate::error::{Error, Result};
use crate::harness::{mean_and_sample_sd, sweep};
use crate::rng::SeededRng;
use crate::train::{ModelSpec, PreparedData, Task, TrainConfig};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

/// Search space and budget for one tuning session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunerConfig {
    pub lambda_v_range: (f64, f64),
    pub lambda_s_range: (f64, f64),
    pub lambda_wd_range: (f64, f64),
    pub n_trials: usize,
    pub seeds_per_trial: Vec<u64>,
    pub epochs: usize,
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lambda_v_range", self.lambda_v_range),
            ("lambda_s_range", self.lambda_s_range),
            ("lambda_wd_range", self.lambda_wd_range),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo >= hi {
                return Err(Error::Config(format!(
                    "{name} must satisfy 0 < low < high, got ({lo}, {hi})"
                )));
            }
        }
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("trial epochs must be at least 1".into()));
        }
        let distinct: HashSet<u64> = self.seeds_per_trial.iter().copied().collect();
        if distinct.len() < 2 || distinct.len() != self.seeds_per_trial.len() {
            return Err(Error::Config(
                "seeds_per_trial needs at least 2 distinct seeds".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluated parameter draw. `mean_acc`/`sd_acc` come from the
/// validation metric when a validation split exists, else the test metric;
/// divergent trials carry NaN statistics and an infinite score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub lambda_v: f64,
    pub lambda_s: f64,
    pub lambda_wd: f64,
    pub mean_acc: f64,
    pub sd_acc: f64,
    pub norm_acc: f64,
    pub norm_std: f64,
    pub score: f64,
    pub divergent: bool,
}

/// Which metric the tuner scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    Validation,
    Test,
}

impl fmt::Display for MetricSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSource::Validation => write!(f, "validation"),
            MetricSource::Test => write!(f, "test"),
        }
    }
}

/// Full tuning output: scored history plus the winning trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
    pub metric_source: MetricSource,
}

/// The winning parameters in report form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestParams {
    pub trial: usize,
    pub lambda_v: f64,
    pub lambda_s: f64,
    pub lambda_wd: f64,
    pub mean_acc: f64,
    pub sd_acc: f64,
    pub score: f64,
    pub metric_source: MetricSource,
    pub n_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

impl BestParams {
    pub fn new(outcome: &TuningOutcome, generated_at_unix: Option<u64>) -> Self {
        BestParams {
            trial: outcome.best.trial,
            lambda_v: outcome.best.lambda_v,
            lambda_s: outcome.best.lambda_s,
            lambda_wd: outcome.best.lambda_wd,
            mean_acc: outcome.best.mean_acc,
            sd_acc: outcome.best.sd_acc,
            score: outcome.best.score,
            metric_source: outcome.metric_source,
            n_trials: outcome.history.len(),
            generated_at_unix,
        }
    }
}

/// Draws one (λ_v, λ_s, λ_wd) triple, each log-uniform over its range, in
/// exactly that order. A degenerate range [a, a] yields a.
pub fn sample_params(rng: &mut SeededRng, config: &TunerConfig) -> Result<(f64, f64, f64)> {
    let v = log_uniform(rng, config.lambda_v_range)?;
    let s = log_uniform(rng, config.lambda_s_range)?;
    let wd = log_uniform(rng, config.lambda_wd_range)?;
    Ok((v, s, wd))
}

fn log_uniform(rng: &mut SeededRng, (lo, hi): (f64, f64)) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "log-uniform range must satisfy 0 < low <= high, got ({lo}, {hi})"
        )));
    }
    let draw = rng.uniform(lo.ln(), hi.ln());
    if lo == hi {
        return Ok(lo);
    }
    Ok(draw.exp())
}

/// Normalizes raw (mean_acc, sd_acc, divergent) trial stats and scores
/// them. Min-max runs over the completed (non-divergent) trials only; a
/// zero normalization range maps to 0.5 by convention; divergent trials
/// get NaN norms and an infinite score.
pub fn score_trials(raw: &[(f64, f64, bool)]) -> Vec<(f64, f64, f64)> {
    let completed: Vec<(f64, f64)> = raw
        .iter()
        .filter(|&&(_, _, divergent)| !divergent)
        .map(|&(mean, sd, _)| (mean, sd))
        .collect();
    let acc_lo = completed.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let acc_hi = completed
        .iter()
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let sd_lo = completed.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let sd_hi = completed
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&(mean, sd, divergent)| {
            if divergent {
                (f64::NAN, f64::NAN, f64::INFINITY)
            } else {
                let norm_acc = min_max(mean, acc_lo, acc_hi);
                let norm_std = min_max(sd, sd_lo, sd_hi);
                (norm_acc, norm_std, norm_std - norm_acc)
            }
        })
        .collect()
}

fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    if hi == lo {
        0.5
    } else {
        (v - lo) / (hi - lo)
    }
}

/// First index achieving the minimal score; None on an empty slice.
pub fn best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        let better = match best {
            None => true,
            Some(j) => s < scores[j],
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Runs the full tuning loop: per trial, sample λs, sweep the trial seeds,
/// record mean/SD of the chosen metric, then rescore the whole history
/// under the final normalization and return the first minimal-score trial.
pub fn run_tuning(
    tuner: &TunerConfig,
    train_config: &TrainConfig,
    model: &ModelSpec,
    data: &PreparedData,
    tuner_seed: u64,
) -> Result<TuningOutcome> {
    tuner.validate()?;
    train_config.validate()?;
    if train_config.task != Task::Classification {
        return Err(Error::Config(
            "tuning scores accuracy and needs a classification task".into(),
        ));
    }
    let window = train_config.clf.activation_window.min(tuner.epochs);
    if window == 0 {
        return Err(Error::Config(
            "tuning needs a nonzero activation window".into(),
        ));
    }
    let metric_source = match data {
        PreparedData::Classification(split) if split.val.is_some() => MetricSource::Validation,
        _ => MetricSource::Test,
    };
    let mut rng = SeededRng::new(tuner_seed);
    let mut params = Vec::with_capacity(tuner.n_trials);
    let mut raw = Vec::with_capacity(tuner.n_trials);
    for _ in 0..tuner.n_trials {
        let (lambda_v, lambda_s, lambda_wd) = sample_params(&mut rng, tuner)?;
        let mut trial_config = train_config.clone();
        trial_config.epochs = tuner.epochs;
        trial_config.clf.lambda_v = lambda_v;
        trial_config.clf.lambda_s = lambda_s;
        trial_config.clf.lambda_wd = lambda_wd;
        trial_config.clf.activation_window = window;
        let result = sweep(&trial_config, model, data, &tuner.seeds_per_trial)?;
        params.push((lambda_v, lambda_s, lambda_wd));
        if result.n_divergent() > 0 {
            raw.push((f64::NAN, f64::NAN, true));
            continue;
        }
        let metrics: Vec<f64> = result
            .runs
            .iter()
            .map(|r| match metric_source {
                MetricSource::Validation => {
                    r.final_metrics.val_metric.expect("validation split present")
                }
                MetricSource::Test => r.final_metrics.metric,
            })
            .collect();
        let (mean, sd) = mean_and_sample_sd(&metrics)?;
        raw.push((mean, sd, false));
    }
    let scored = score_trials(&raw);
    let history: Vec<TrialRecord> = raw
        .iter()
        .zip(&scored)
        .zip(&params)
        .enumerate()
        .map(
            |(i, (((mean, sd, divergent), (norm_acc, norm_std, score)), &(v, s, wd)))| {
                TrialRecord {
                    trial: i,
                    lambda_v: v,
                    lambda_s: s,
                    lambda_wd: wd,
                    mean_acc: *mean,
                    sd_acc: *sd,
                    norm_acc: *norm_acc,
                    norm_std: *norm_std,
                    score: *score,
                    divergent: *divergent,
                }
            },
        )
        .collect();
    let scores: Vec<f64> = history.iter().map(|t| t.score).collect();
    let best_idx = best_index(&scores).expect("n_trials >= 1");
    if history[best_idx].divergent {
        return Err(Error::InvalidArgument(
            "every trial diverged; no usable parameters".into(),
        ));
    }
    Ok(TuningOutcome {
        best: history[best_idx].clone(),
        history,
        metric_source,
    })
}

/// Renders trial history as the `tuning_history.csv` table.
pub fn history_csv(history: &[TrialRecord]) -> String {
    let mut out = String::from(
        "trial,lambda_v,lambda_s,lambda_wd,mean_acc,sd_acc,norm_acc,norm_std,score,divergent\n",
    );
    for t in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            t.trial,
            crate::report::fmt_f64(t.lambda_v),
            crate::report::fmt_f64(t.lambda_s),
            crate::report::fmt_f64(t.lambda_wd),
            crate::report::fmt_f64(t.mean_acc),
            crate::report::fmt_f64(t.sd_acc),
            crate::report::fmt_f64(t.norm_acc),
            crate::report::fmt_f64(t.norm_std),
            crate::report::fmt_f64(t.score),
            t.divergent,
        ));
    }
    out
}
