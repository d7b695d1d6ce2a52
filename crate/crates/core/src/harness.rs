//! Measurement apparatus around the trainer: multi-seed sweeps, cross-seed
//! statistics with error bounds, the average-variability-reduction formula,
//! subset-group stability analysis, and the activation-duration study.
//!
//! Sweeps may run seeds in parallel; every statistic is computed from a
//! seed-sorted run list afterwards, so the schedule cannot leak into any
//! output byte.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::train::{train, ModelSpec, PreparedData, RunRecord, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Default seed for the bootstrap resampler when none is configured.
pub const DEFAULT_STAT_SEED: u64 = 0x5EED;

/// Number of bootstrap resamples behind every bootstrap error bound.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// One multi-seed sweep: runs sorted by seed, all sharing one config.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: TrainConfig,
    pub metric_name: &'static str,
    pub runs: Vec<RunRecord>,
}

impl SweepResult {
    pub fn n_divergent(&self) -> usize {
        self.runs.iter().filter(|r| r.divergent).count()
    }
}

/// Cross-seed statistics of a sweep's final metrics. `sd_err` /
/// `loss_sd_err` carry the bootstrap bound; the analytic standard error of
/// the SD is reported alongside since the two can differ noticeably at
/// small n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySummary {
    pub metric_name: String,
    pub n_seeds: usize,
    pub n_divergent_excluded: usize,
    pub mean_metric: f64,
    pub sd_metric: f64,
    pub sd_err: f64,
    pub sd_err_analytic: f64,
    pub mean_loss: f64,
    pub loss_sd: f64,
    pub loss_sd_err: f64,
    pub loss_sd_err_analytic: f64,
}

/// The two SD-reduction bounds and their average. When exactly one bound
/// is non-positive it is dropped and the other reported alone; a
/// non-positive lower baseline bound leaves the lower reduction undefined
/// (None) and the upper bound is reported alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub upper_bound_reduction_pct: f64,
    pub lower_bound_reduction_pct: Option<f64>,
    pub average_pct: f64,
    pub dropped_bound: Option<String>,
}

/// Subset-resampling comparison of two run pools at one group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStudyResult {
    pub group_size: usize,
    pub n_samples: usize,
    pub mean_of_means_a: f64,
    pub mean_of_means_b: f64,
    pub mean_of_sds_a: f64,
    pub mean_of_sds_b: f64,
    /// Fraction of subsets where pool A's sample SD is strictly lower;
    /// ties count for neither pool.
    pub fraction_a_lower_sd: f64,
}

/// Five-number summary of final metrics for one activation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    pub window: usize,
    pub n_seeds: usize,
    pub n_divergent: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// All sweeps and distribution rows of an activation-duration study.
#[derive(Debug, Clone)]
pub struct DurationStudy {
    pub rows: Vec<DurationRow>,
    pub sweeps: Vec<(usize, SweepResult)>,
}

/// Trains one run per seed (possibly in parallel) and returns them sorted
/// by seed. Divergent runs are kept and flagged, never dropped here.
pub fn sweep(
    config: &TrainConfig,
    model: &ModelSpec,
    data: &PreparedData,
    seeds: &[u64],
) -> Result<SweepResult> {
    check_seeds(seeds)?;
    config.validate()?;
    let mut runs = seeds
        .par_iter()
        .map(|&seed| train(config, model, data, seed))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| r.seed);
    Ok(SweepResult {
        config: config.clone(),
        metric_name: config.task.metric_name(),
        runs,
    })
}

/// Mean and sample SD (divisor n-1) of the final metric and final loss,
/// each with bootstrap and analytic error bounds. Divergent runs make this
/// an error unless `exclude_divergent` drops them explicitly.
pub fn summarize(
    sweep: &SweepResult,
    exclude_divergent: bool,
    stat_seed: u64,
) -> Result<VariabilitySummary> {
    let n_divergent = sweep.n_divergent();
    if n_divergent > 0 && !exclude_divergent {
        return Err(Error::InvalidArgument(format!(
            "{n_divergent} divergent run(s) present; pass the exclusion flag to summarize without them"
        )));
    }
    let mut completed: Vec<&RunRecord> = sweep.runs.iter().filter(|r| !r.divergent).collect();
    completed.sort_by_key(|r| r.seed);
    if completed.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 completed runs, have {}",
            completed.len()
        )));
    }
    let metrics: Vec<f64> = completed.iter().map(|r| r.final_metrics.metric).collect();
    let losses: Vec<f64> = completed.iter().map(|r| r.final_metrics.loss).collect();
    let (mean_metric, sd_metric) = mean_and_sample_sd(&metrics)?;
    let (mean_loss, loss_sd) = mean_and_sample_sd(&losses)?;
    let mut rng = SeededRng::new(stat_seed);
    let sd_err = bootstrap_sd_halfwidth(&metrics, &mut rng)?;
    let loss_sd_err = bootstrap_sd_halfwidth(&losses, &mut rng)?;
    let n = completed.len();
    Ok(VariabilitySummary {
        metric_name: sweep.metric_name.to_string(),
        n_seeds: n,
        n_divergent_excluded: n_divergent,
        mean_metric,
        sd_metric,
        sd_err,
        sd_err_analytic: analytic_sd_err(sd_metric, n),
        mean_loss,
        loss_sd,
        loss_sd_err,
        loss_sd_err_analytic: analytic_sd_err(loss_sd, n),
    })
}

/// Mean and sample standard deviation (divisor n-1); needs n >= 2.
pub fn mean_and_sample_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample SD needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Large-sample standard error of a sample SD: `sd / sqrt(2 (n - 1))`.
pub fn analytic_sd_err(sd: f64, n: usize) -> f64 {
    sd / (2.0 * (n as f64 - 1.0)).sqrt()
}

/// Percentile-bootstrap half-width for the sample SD: 1000 resamples, half
/// the distance between the 2.5th and 97.5th percentiles.
pub fn bootstrap_sd_halfwidth(values: &[f64], rng: &mut SeededRng) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 values".into(),
        ));
    }
    let mut sds = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = vec![0.0; values.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = values[rng.index(values.len())];
        }
        let (_, sd) = mean_and_sample_sd(&resample)?;
        sds.push(sd);
    }
    sds.sort_by(|a, b| a.partial_cmp(b).expect("finite SDs"));
    let lo = percentile_sorted(&sds, 0.025);
    let hi = percentile_sorted(&sds, 0.975);
    Ok((hi - lo) / 2.0)
}

/// Linear-interpolation percentile (the common "type 7" rule) over an
/// already sorted slice; p in [0, 1].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Average variability reduction between a baseline (`without`) and a
/// comparison (`with_clf`) SD, each given as (sd, err). The reduction is
/// evaluated at both error bounds and averaged; a single non-positive
/// bound is dropped per the degenerate rule.
pub fn avg_var_reduction(without: (f64, f64), with_clf: (f64, f64)) -> Result<Reduction> {
    let (sd_wo, err_wo) = without;
    let (sd_w, err_w) = with_clf;
    for v in [sd_wo, err_wo, sd_w, err_w] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "SD inputs must be finite and non-negative, got {v}"
            )));
        }
    }
    let upper_base = sd_wo + err_wo;
    let lower_base = sd_wo - err_wo;
    if upper_base <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "baseline upper bound must be positive, got {upper_base}"
        )));
    }
    let upper = 100.0 * (1.0 - (sd_w + err_w) / upper_base);
    if lower_base <= 0.0 {
        return Ok(Reduction {
            upper_bound_reduction_pct: upper,
            lower_bound_reduction_pct: None,
            average_pct: upper,
            dropped_bound: Some("lower".to_string()),
        });
    }
    let lower = 100.0 * (1.0 - (sd_w - err_w) / lower_base);
    let (average, dropped) = if upper <= 0.0 && lower > 0.0 {
        (lower, Some("upper".to_string()))
    } else if lower <= 0.0 && upper > 0.0 {
        (upper, Some("lower".to_string()))
    } else {
        ((upper + lower) / 2.0, None)
    };
    Ok(Reduction {
        upper_bound_reduction_pct: upper,
        lower_bound_reduction_pct: Some(lower),
        average_pct: average,
        dropped_bound: dropped,
    })
}

/// For each group size, draws `n_samples` index subsets (without
/// replacement within a subset) and applies the same subsets to both
/// pools, reporting average subset means/SDs and how often pool A's SD is
/// strictly lower.
pub fn group_study(
    pool_a: &[f64],
    pool_b: &[f64],
    group_sizes: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<GroupStudyResult>> {
    if pool_a.len() != pool_b.len() {
        return Err(Error::InvalidArgument(format!(
            "pools must have equal length to share index subsets ({} vs {})",
            pool_a.len(),
            pool_b.len()
        )));
    }
    if pool_a.len() < 2 {
        return Err(Error::InvalidArgument("pools need at least 2 values".into()));
    }
    if group_sizes.is_empty() || n_samples == 0 {
        return Err(Error::InvalidArgument(
            "need at least one group size and one sample".into(),
        ));
    }
    for v in pool_a.iter().chain(pool_b) {
        if !v.is_finite() {
            return Err(Error::NonFinite("pool metric".into()));
        }
    }
    let mut rng = SeededRng::new(seed);
    let mut results = Vec::with_capacity(group_sizes.len());
    for &size in group_sizes {
        if size < 2 || size > pool_a.len() {
            return Err(Error::InvalidArgument(format!(
                "group size {size} outside 2..={}",
                pool_a.len()
            )));
        }
        let mut sum_mean_a = 0.0;
        let mut sum_mean_b = 0.0;
        let mut sum_sd_a = 0.0;
        let mut sum_sd_b = 0.0;
        let mut a_lower = 0usize;
        for _ in 0..n_samples {
            let mut idx = rng.subset(pool_a.len(), size)?;
            idx.sort_unstable();
            let group_a: Vec<f64> = idx.iter().map(|&i| pool_a[i]).collect();
            let group_b: Vec<f64> = idx.iter().map(|&i| pool_b[i]).collect();
            let (mean_a, sd_a) = mean_and_sample_sd(&group_a)?;
            let (mean_b, sd_b) = mean_and_sample_sd(&group_b)?;
            sum_mean_a += mean_a;
            sum_mean_b += mean_b;
            sum_sd_a += sd_a;
            sum_sd_b += sd_b;
            if sd_a < sd_b {
                a_lower += 1;
            }
        }
        let n = n_samples as f64;
        results.push(GroupStudyResult {
            group_size: size,
            n_samples,
            mean_of_means_a: sum_mean_a / n,
            mean_of_means_b: sum_mean_b / n,
            mean_of_sds_a: sum_sd_a / n,
            mean_of_sds_b: sum_sd_b / n,
            fraction_a_lower_sd: a_lower as f64 / n,
        });
    }
    Ok(results)
}

/// Runs one sweep per activation window (sharing the seed list) and
/// summarizes each window's final-metric distribution for box plots.
pub fn duration_study(
    config: &TrainConfig,
    model: &ModelSpec,
    data: &PreparedData,
    windows: &[usize],
    seeds: &[u64],
) -> Result<DurationStudy> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("need at least one window".into()));
    }
    let mut seen = HashSet::new();
    for &w in windows {
        if w > config.epochs {
            return Err(Error::InvalidArgument(format!(
                "window {w} exceeds {} epochs",
                config.epochs
            )));
        }
        if !seen.insert(w) {
            return Err(Error::InvalidArgument(format!("duplicate window {w}")));
        }
    }
    let mut rows = Vec::with_capacity(windows.len());
    let mut sweeps = Vec::with_capacity(windows.len());
    for &window in windows {
        let mut window_config = config.clone();
        window_config.clf.activation_window = window;
        let result = sweep(&window_config, model, data, seeds)?;
        let metrics: Vec<f64> = result
            .runs
            .iter()
            .filter(|r| !r.divergent)
            .map(|r| r.final_metrics.metric)
            .collect();
        if metrics.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "window {window}: every run diverged"
            )));
        }
        let mut sorted = metrics.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
        rows.push(DurationRow {
            window,
            n_seeds: seeds.len(),
            n_divergent: result.n_divergent(),
            min: sorted[0],
            q1: percentile_sorted(&sorted, 0.25),
            median: percentile_sorted(&sorted, 0.5),
            q3: percentile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        });
        sweeps.push((window, result));
    }
    Ok(DurationStudy { rows, sweeps })
}

/// Renders duration rows as the `duration.csv` table.
pub fn duration_csv(rows: &[DurationRow]) -> String {
    let mut out = String::from("window,n_seeds,n_divergent,min,q1,median,q3,max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.window,
            r.n_seeds,
            r.n_divergent,
            crate::report::fmt_f64(r.min),
            crate::report::fmt_f64(r.q1),
            crate::report::fmt_f64(r.median),
            crate::report::fmt_f64(r.q3),
            crate::report::fmt_f64(r.max),
        ));
    }
    out
}

/// Renders group-study rows as the `groups.csv` table.
pub fn groups_csv(rows: &[GroupStudyResult]) -> String {
    let mut out = String::from(
        "group_size,n_samples,mean_of_means_a,mean_of_means_b,mean_of_sds_a,mean_of_sds_b,fraction_a_lower_sd\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.group_size,
            r.n_samples,
            crate::report::fmt_f64(r.mean_of_means_a),
            crate::report::fmt_f64(r.mean_of_means_b),
            crate::report::fmt_f64(r.mean_of_sds_a),
            crate::report::fmt_f64(r.mean_of_sds_b),
            crate::report::fmt_f64(r.fraction_a_lower_sd),
        ));
    }
    out
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    let mut seen = HashSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(Error::InvalidArgument(format!("duplicate seed {s}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, split_classification};
    use crate::loss::CLFConfig;
    use crate::train::{FinalMetrics, Task};

    fn dummy_run(seed: u64, metric: f64, loss: f64) -> RunRecord {
        RunRecord {
            seed,
            task: Task::Classification,
            epochs: Vec::new(),
            batches: Vec::new(),
            final_metrics: FinalMetrics {
                metric,
                loss,
                train_base: loss,
                val_metric: None,
            },
            divergent: false,
            diverged_at_epoch: None,
            wall_time_s: 0.0,
        }
    }

    fn dummy_sweep(values: &[(u64, f64, f64)]) -> SweepResult {
        SweepResult {
            config: TrainConfig {
                epochs: 1,
                batch_size: 1,
                lr_peak: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
                clf: CLFConfig::disabled(),
                task: Task::Classification,
            },
            metric_name: "accuracy",
            runs: values
                .iter()
                .map(|&(s, m, l)| dummy_run(s, m, l))
                .collect(),
        }
    }

    fn prepared_blobs(seed: u64) -> PreparedData {
        let mut rng = SeededRng::new(seed);
        let ds = make_blobs(&mut rng, 20, 3, 2, 0.4).unwrap();
        PreparedData::Classification(split_classification(&ds, 0.6, 0.0).unwrap())
    }

    #[test]
    fn sample_sd_hand_case() {
        let (mean, sd) = mean_and_sample_sd(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mean, 2.0);
        assert_eq!(sd, 1.0);
        let (_, zero) = mean_and_sample_sd(&[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(zero, 0.0);
        assert!(mean_and_sample_sd(&[1.0]).is_err());
    }

    #[test]
    fn analytic_err_matches_formula() {
        let err = analytic_sd_err(0.14, 20);
        assert!((err - 0.14 / 38.0_f64.sqrt()).abs() < 1e-15);
        assert!((err - 0.0227).abs() < 5e-4);
    }

    #[test]
    fn percentile_interpolation_hand_cases() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&sorted, 0.5), 2.5);
        assert_eq!(percentile_sorted(&sorted, 0.0), 1.0);
        assert_eq!(percentile_sorted(&sorted, 1.0), 4.0);
        assert!((percentile_sorted(&sorted, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn summarize_hand_case_and_determinism() {
        let sweep = dummy_sweep(&[(1, 1.0, 0.5), (2, 2.0, 0.5), (3, 3.0, 0.5)]);
        let a = summarize(&sweep, false, DEFAULT_STAT_SEED).unwrap();
        assert_eq!(a.mean_metric, 2.0);
        assert_eq!(a.sd_metric, 1.0);
        assert_eq!(a.loss_sd, 0.0);
        assert_eq!(a.n_seeds, 3);
        let b = summarize(&sweep, false, DEFAULT_STAT_SEED).unwrap();
        assert_eq!(a, b);
        let c = summarize(&sweep, false, 999).unwrap();
        assert_eq!(a.sd_metric, c.sd_metric);
    }

    #[test]
    fn summarize_is_run_order_invariant() {
        let fwd = dummy_sweep(&[(1, 0.9, 0.3), (2, 0.8, 0.4), (3, 0.85, 0.35)]);
        let mut rev = fwd.clone();
        rev.runs.reverse();
        assert_eq!(
            summarize(&fwd, false, 7).unwrap(),
            summarize(&rev, false, 7).unwrap()
        );
    }

    #[test]
    fn summarize_divergence_needs_explicit_exclusion() {
        let mut sweep = dummy_sweep(&[(1, 0.9, 0.3), (2, 0.8, 0.4), (3, 0.7, 0.5)]);
        sweep.runs[1].divergent = true;
        assert!(summarize(&sweep, false, 1).is_err());
        let summary = summarize(&sweep, true, 1).unwrap();
        assert_eq!(summary.n_seeds, 2);
        assert_eq!(summary.n_divergent_excluded, 1);
    }

    #[test]
    fn reduction_reproduces_published_rows() {
        let cases = [
            ((0.14, 0.04), (0.08, 0.02), 42.2),
            ((0.20, 0.07), (0.13, 0.04), 33.9),
            ((0.16, 0.05), (0.10, 0.04), 39.4),
            ((0.30, 0.06), (0.07, 0.02), 77.1),
        ];
        for (without, with_clf, expected) in cases {
            let r = avg_var_reduction(without, with_clf).unwrap();
            assert!(
                (r.average_pct - expected).abs() <= 0.1,
                "{without:?} vs {with_clf:?}: {} != {expected}",
                r.average_pct
            );
            assert!(r.dropped_bound.is_none());
            let lower = r.lower_bound_reduction_pct.unwrap();
            let lo = r.upper_bound_reduction_pct.min(lower);
            let hi = r.upper_bound_reduction_pct.max(lower);
            assert!(lo <= r.average_pct && r.average_pct <= hi);
        }
    }

    #[test]
    fn reduction_identical_inputs_is_zero() {
        let r = avg_var_reduction((0.1, 0.02), (0.1, 0.02)).unwrap();
        assert_eq!(r.average_pct, 0.0);
    }

    #[test]
    fn reduction_drops_single_nonpositive_bound() {
        // Upper bound: 1 - 0.20/0.15 < 0; lower bound: 1 - 0.04/0.05 > 0.
        let r = avg_var_reduction((0.1, 0.05), (0.12, 0.08)).unwrap();
        assert!(r.upper_bound_reduction_pct <= 0.0);
        assert!(r.lower_bound_reduction_pct.unwrap() > 0.0);
        assert_eq!(r.dropped_bound.as_deref(), Some("upper"));
        assert_eq!(r.average_pct, r.lower_bound_reduction_pct.unwrap());
    }

    #[test]
    fn reduction_with_degenerate_baseline_lower_bound_reports_upper_alone() {
        let r = avg_var_reduction((0.04, 0.05), (0.02, 0.01)).unwrap();
        assert!(r.lower_bound_reduction_pct.is_none());
        assert_eq!(r.dropped_bound.as_deref(), Some("lower"));
        assert!((r.upper_bound_reduction_pct - 100.0 * (1.0 - 0.03 / 0.09)).abs() < 1e-12);
        assert_eq!(r.average_pct, r.upper_bound_reduction_pct);
    }

    #[test]
    fn reduction_rejects_zero_baseline() {
        assert!(avg_var_reduction((0.0, 0.0), (0.02, 0.01)).is_err());
    }

    #[test]
    fn group_study_exhaustive_oracle() {
        // All C(4,2) subsets of {1,2,3,4}: mean of the 6 sample SDs.
        let pool = [1.0, 2.0, 3.0, 4.0];
        let mut exhaustive = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                exhaustive += mean_and_sample_sd(&[pool[i], pool[j]]).unwrap().1;
            }
        }
        exhaustive /= 6.0;
        assert!((exhaustive - 1.1785).abs() < 1e-4);

        let results = group_study(&pool, &pool, &[2], 5000, 11).unwrap();
        assert!((results[0].mean_of_sds_a - exhaustive).abs() < 0.02);
        // Equal pools never differ strictly.
        assert_eq!(results[0].fraction_a_lower_sd, 0.0);
    }

    #[test]
    fn group_study_full_size_equals_pool_sd() {
        let a = [0.90, 0.92, 0.91, 0.95];
        let b = [0.80, 0.99, 0.70, 0.94];
        let (_, sd_a) = mean_and_sample_sd(&a).unwrap();
        let (_, sd_b) = mean_and_sample_sd(&b).unwrap();
        // A full-size subset is the pool itself, so one sample is exact.
        let single = group_study(&a, &b, &[4], 1, 3).unwrap();
        assert_eq!(single[0].mean_of_sds_a, sd_a);
        assert_eq!(single[0].mean_of_sds_b, sd_b);
        let many = group_study(&a, &b, &[4], 100, 3).unwrap();
        assert!((many[0].mean_of_sds_a - sd_a).abs() < 1e-15);
        let expected = if sd_a < sd_b { 1.0 } else { 0.0 };
        assert_eq!(many[0].fraction_a_lower_sd, expected);
    }

    #[test]
    fn group_study_is_deterministic() {
        let a = [0.1, 0.5, 0.2, 0.9, 0.3];
        let b = [0.2, 0.4, 0.3, 0.8, 0.1];
        let x = group_study(&a, &b, &[2, 3], 200, 42).unwrap();
        let y = group_study(&a, &b, &[2, 3], 200, 42).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn group_study_validates_inputs() {
        let a = [1.0, 2.0];
        assert!(group_study(&a, &[1.0], &[2], 10, 1).is_err());
        assert!(group_study(&a, &a, &[3], 10, 1).is_err());
        assert!(group_study(&a, &a, &[1], 10, 1).is_err());
        assert!(group_study(&a, &a, &[], 10, 1).is_err());
        assert!(group_study(&a, &a, &[2], 0, 1).is_err());
    }

    #[test]
    fn sweep_rejects_bad_seed_lists() {
        let data = prepared_blobs(1);
        let config = TrainConfig {
            epochs: 2,
            batch_size: 16,
            lr_peak: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            clf: CLFConfig::disabled(),
            task: Task::Classification,
        };
        assert!(sweep(&config, &ModelSpec::default(), &data, &[1, 1]).is_err());
        assert!(sweep(&config, &ModelSpec::default(), &data, &[1]).is_err());
    }

    #[test]
    fn sweep_runs_sorted_and_deterministic() {
        let data = prepared_blobs(2);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 16,
            lr_peak: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            clf: CLFConfig::disabled(),
            task: Task::Classification,
        };
        let a = sweep(&config, &ModelSpec::default(), &data, &[5, 1, 3]).unwrap();
        let seeds: Vec<u64> = a.runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![1, 3, 5]);
        let b = sweep(&config, &ModelSpec::default(), &data, &[3, 5, 1]).unwrap();
        assert_eq!(a.runs, b.runs);
    }

    #[test]
    fn duration_study_shape_and_prefix() {
        let data = prepared_blobs(3);
        let config = TrainConfig {
            epochs: 10,
            batch_size: 16,
            lr_peak: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            clf: CLFConfig {
                lambda_s: 0.2,
                lambda_v: 0.3,
                lambda_wd: 0.1,
                activation_window: 0,
            },
            task: Task::Classification,
        };
        let study =
            duration_study(&config, &ModelSpec::default(), &data, &[2, 6], &[1, 2]).unwrap();
        assert_eq!(study.rows.len(), 2);
        assert_eq!(study.sweeps.len(), 2);
        for row in &study.rows {
            assert!(row.min <= row.q1 && row.q1 <= row.median);
            assert!(row.median <= row.q3 && row.q3 <= row.max);
        }
        // Shared seeds give identical logs before the earliest activation.
        let short = &study.sweeps[0].1.runs[0];
        let long = &study.sweeps[1].1.runs[0];
        for e in 0..4 {
            assert_eq!(short.epochs[e], long.epochs[e], "epoch {e}");
        }
    }

    #[test]
    fn duration_study_rejects_oversized_window() {
        let data = prepared_blobs(4);
        let config = TrainConfig {
            epochs: 5,
            batch_size: 16,
            lr_peak: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            clf: CLFConfig::disabled(),
            task: Task::Classification,
        };
        assert!(duration_study(&config, &ModelSpec::default(), &data, &[6], &[1, 2]).is_err());
    }
}
