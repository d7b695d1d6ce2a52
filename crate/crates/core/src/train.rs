//! The deterministic training loop: SGD with momentum and weight decay, a
//! cosine learning-rate schedule, per-epoch shuffling, the composite-loss
//! activation window, previous-epoch loss bookkeeping, and lambda_v decay.
//!
//! One run consumes exactly one `SeededRng`: model initialization first,
//! then one permutation per epoch. Nothing else draws, so runs that share a
//! seed share every trajectory prefix regardless of when the composite
//! terms switch on.

use crate::data::{ClassificationDataset, ClassificationSplit, ForecastSplit};
use crate::error::{Error, Result};
use crate::loss::{cel, clf_total, clf_total_regression, mse, CLFConfig, EpochState};
use crate::model::{Mlp, NLinear};
use crate::report::fmt_f64;
use crate::rng::SeededRng;
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    /// Name of the headline test metric for this task.
    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Classification => "accuracy",
            Task::Regression => "mae",
        }
    }

    /// Name of the base loss for this task.
    pub fn base_name(self) -> &'static str {
        match self {
            Task::Classification => "cel",
            Task::Regression => "mse",
        }
    }
}

/// Optimizer, schedule, and composite-loss settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_peak: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub clf: CLFConfig,
    pub task: Task,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_peak > 0.0) || !self.lr_peak.is_finite() {
            return Err(Error::Config(format!(
                "lr_peak must be positive and finite, got {}",
                self.lr_peak
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        self.clf.validate()?;
        if self.clf.activation_window > self.epochs {
            return Err(Error::Config(format!(
                "activation_window {} exceeds epochs {}",
                self.clf.activation_window, self.epochs
            )));
        }
        Ok(())
    }
}

/// Model shape options; only the MLP hidden sizes are configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            hidden: default_hidden(),
        }
    }
}

/// Ready-to-train data for either task.
#[derive(Debug, Clone)]
pub enum PreparedData {
    Classification(ClassificationSplit),
    Forecast(ForecastSplit),
}

/// One training epoch's logged values. Loss columns are sample-weighted
/// means over the epoch's batches; metrics are evaluated on the test split
/// after the epoch's updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub lambda_v_eff: f64,
    pub base: f64,
    pub sl: f64,
    pub vpl: f64,
    pub total: f64,
    pub test_metric: f64,
    pub test_loss: f64,
}

/// One batch's logged loss components (verbose logging only).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub epoch: usize,
    pub batch: usize,
    pub base: f64,
    pub sl: f64,
    pub vpl: f64,
    pub lambda_v_eff: f64,
    pub total: f64,
}

/// End-of-run evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    /// Test accuracy (classification) or test MAE (regression).
    pub metric: f64,
    /// Test base loss: cross-entropy or MSE.
    pub loss: f64,
    /// Last epoch's mean training base loss.
    pub train_base: f64,
    /// Metric on the validation split, when one exists.
    pub val_metric: Option<f64>,
}

/// Everything one run produced. Equality ignores wall time, which is the
/// only non-deterministic field.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub task: Task,
    pub epochs: Vec<EpochRow>,
    pub batches: Vec<BatchRow>,
    pub final_metrics: FinalMetrics,
    pub divergent: bool,
    pub diverged_at_epoch: Option<usize>,
    pub wall_time_s: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.task == other.task
            && self.epochs == other.epochs
            && self.batches == other.batches
            && self.final_metrics == other.final_metrics
            && self.divergent == other.divergent
            && self.diverged_at_epoch == other.diverged_at_epoch
    }
}

impl RunRecord {
    /// Per-epoch log as CSV, with base/metric columns named for the task.
    pub fn epochs_csv(&self) -> String {
        let (base, metric, loss) = match self.task {
            Task::Classification => ("cel", "test_accuracy", "test_cel"),
            Task::Regression => ("mse", "test_mae", "test_mse"),
        };
        let mut out = format!("epoch,lr,lambda_v_eff,{base},sl,vpl,total,{metric},{loss}\n");
        for row in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.epoch,
                fmt_f64(row.lr),
                fmt_f64(row.lambda_v_eff),
                fmt_f64(row.base),
                fmt_f64(row.sl),
                fmt_f64(row.vpl),
                fmt_f64(row.total),
                fmt_f64(row.test_metric),
                fmt_f64(row.test_loss),
            ));
        }
        out
    }

    /// Per-batch log as CSV (empty unless batch recording was requested).
    pub fn batches_csv(&self) -> String {
        let base = self.task.base_name();
        let mut out = format!("epoch,batch,{base},sl,vpl,lambda_v_eff,total\n");
        for row in &self.batches {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.epoch,
                row.batch,
                fmt_f64(row.base),
                fmt_f64(row.sl),
                fmt_f64(row.vpl),
                fmt_f64(row.lambda_v_eff),
                fmt_f64(row.total),
            ));
        }
        out
    }
}

/// Learning rate at `epoch` of a cosine decay from `peak` to 0 across
/// `total` epochs. A single-epoch schedule stays at the peak.
pub fn cosine_lr(epoch: usize, total: usize, peak: f64) -> Result<f64> {
    if epoch >= total {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} outside schedule of {total}"
        )));
    }
    if total == 1 {
        return Ok(peak);
    }
    let phase = std::f64::consts::PI * epoch as f64 / (total - 1) as f64;
    Ok(0.5 * peak * (1.0 + phase.cos()))
}

/// True when the composite terms apply at `epoch`: the final `window`
/// epochs of the schedule.
pub fn clf_active(epoch: usize, total: usize, window: usize) -> bool {
    epoch >= total.saturating_sub(window)
}

/// lambda_v after `epochs_active` completed active epochs of exponential
/// decay at rate `lambda_wd`.
pub fn decay_lambda_v(lambda_v: f64, lambda_wd: f64, epochs_active: usize) -> f64 {
    lambda_v * (1.0 - lambda_wd).max(0.0).powi(epochs_active as i32)
}

/// One SGD-with-momentum update across all parameter tensors:
/// `buffer = momentum * buffer + grad + weight_decay * param`, then
/// `param -= lr * buffer`.
pub fn sgd_step(
    params: &mut [&mut [f64]],
    buffers: &mut [Vec<f64>],
    grads: &[&[f64]],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != buffers.len() || params.len() != grads.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} param tensors, {} buffers, {} grad tensors",
            params.len(),
            buffers.len(),
            grads.len()
        )));
    }
    for ((param, buffer), grad) in params.iter_mut().zip(buffers.iter_mut()).zip(grads) {
        if param.len() != buffer.len() || param.len() != grad.len() {
            return Err(Error::DimensionMismatch(
                "parameter/buffer/gradient tensor sizes differ".into(),
            ));
        }
        for ((p, b), g) in param.iter_mut().zip(buffer.iter_mut()).zip(grad.iter()) {
            *b = momentum * *b + g + weight_decay * *p;
            *p -= lr * *b;
        }
    }
    Ok(())
}

/// Trains one model from scratch and returns the full run log.
///
/// Divergence (any non-finite loss or metric) is not an error: the run
/// stops and the record comes back flagged, so sweeps can report honest
/// failures.
pub fn train(
    config: &TrainConfig,
    model: &ModelSpec,
    data: &PreparedData,
    seed: u64,
) -> Result<RunRecord> {
    train_with_options(config, model, data, seed, false)
}

/// [`train`] with optional per-batch loss recording.
pub fn train_with_options(
    config: &TrainConfig,
    model: &ModelSpec,
    data: &PreparedData,
    seed: u64,
    record_batches: bool,
) -> Result<RunRecord> {
    config.validate()?;
    match (config.task, data) {
        (Task::Classification, PreparedData::Classification(split)) => {
            train_classification(config, model, split, seed, record_batches)
        }
        (Task::Regression, PreparedData::Forecast(split)) => {
            train_forecast(config, split, seed, record_batches)
        }
        _ => Err(Error::Config(
            "task does not match the prepared dataset kind".into(),
        )),
    }
}

/// Fraction of rows whose highest logit (first index on ties) is the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut correct = 0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    correct as f64 / labels.len() as f64
}

/// Mean absolute error over all elements.
pub fn mae(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::DimensionMismatch(format!(
            "predictions {}x{} vs targets {}x{}",
            predictions.rows(),
            predictions.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    let count = (predictions.rows() * predictions.cols()) as f64;
    let sum: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / count)
}

/// Shared per-epoch bookkeeping across both task loops.
struct EpochAccumulator {
    base: f64,
    sl: f64,
    vpl: f64,
    total: f64,
    samples: usize,
}

impl EpochAccumulator {
    fn new() -> Self {
        EpochAccumulator {
            base: 0.0,
            sl: 0.0,
            vpl: 0.0,
            total: 0.0,
            samples: 0,
        }
    }

    fn add(&mut self, report: &crate::loss::LossReport, batch_len: usize) {
        let w = batch_len as f64;
        self.base += report.base * w;
        self.sl += report.sl * w;
        self.vpl += report.vpl * w;
        self.total += report.total * w;
        self.samples += batch_len;
    }

    fn means(&self) -> (f64, f64, f64, f64) {
        let n = self.samples as f64;
        (self.base / n, self.sl / n, self.vpl / n, self.total / n)
    }
}

fn train_classification(
    config: &TrainConfig,
    model_spec: &ModelSpec,
    split: &ClassificationSplit,
    seed: u64,
    record_batches: bool,
) -> Result<RunRecord> {
    let start = std::time::Instant::now();
    let train_set = &split.train;
    let mut sizes = vec![train_set.dim()];
    sizes.extend_from_slice(&model_spec.hidden);
    sizes.push(train_set.n_classes);

    let mut rng = SeededRng::new(seed);
    let mut model = Mlp::new(&sizes, &mut rng)?;
    let mut buffers: Vec<Vec<f64>> = model
        .param_slices_mut()
        .iter()
        .map(|s| vec![0.0; s.len()])
        .collect();

    let clf_on = config.clf.has_effect();
    let mut prev_epoch_base: Option<f64> = None;
    let mut epochs_active = 0usize;
    let mut rows = Vec::with_capacity(config.epochs);
    let mut batch_rows = Vec::new();
    let mut divergence: Option<usize> = None;

    'epochs: for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr_peak)?;
        let active = clf_on && clf_active(epoch, config.epochs, config.clf.activation_window);
        let state = if active {
            EpochState::active(decay_lambda_v(
                config.clf.lambda_v,
                config.clf.lambda_wd,
                epochs_active,
            ))
        } else {
            EpochState::inactive()
        };

        let perm = rng.permutation(train_set.len());
        let mut acc = EpochAccumulator::new();
        for (batch_idx, chunk) in perm.chunks(config.batch_size).enumerate() {
            let (inputs, labels) = gather_classification(train_set, chunk);
            let report = match model.forward_cached(&inputs).and_then(|(logits, cache)| {
                let report = clf_total(&logits, &labels, &config.clf, prev_epoch_base, &state)?;
                let grads = model.backward(&cache, &report.d_output)?;
                sgd_step(
                    &mut model.param_slices_mut(),
                    &mut buffers,
                    &grads.slices(),
                    lr,
                    config.momentum,
                    config.weight_decay,
                )?;
                Ok(report)
            }) {
                Ok(report) => report,
                Err(Error::NonFinite(_)) => {
                    divergence = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !report.total.is_finite() {
                divergence = Some(epoch);
                break 'epochs;
            }
            acc.add(&report, chunk.len());
            if record_batches {
                batch_rows.push(BatchRow {
                    epoch,
                    batch: batch_idx,
                    base: report.base,
                    sl: report.sl,
                    vpl: report.vpl,
                    lambda_v_eff: state.lambda_v_eff,
                    total: report.total,
                });
            }
        }

        let (base, sl, vpl, total) = acc.means();
        let (test_metric, test_loss) = match eval_classification(&model, &split.test) {
            Ok(pair) => pair,
            Err(Error::NonFinite(_)) => {
                divergence = Some(epoch);
                break 'epochs;
            }
            Err(e) => return Err(e),
        };
        if !test_metric.is_finite() || !test_loss.is_finite() {
            divergence = Some(epoch);
            break 'epochs;
        }
        rows.push(EpochRow {
            epoch,
            lr,
            lambda_v_eff: state.lambda_v_eff,
            base,
            sl,
            vpl,
            total,
            test_metric,
            test_loss,
        });
        if active {
            prev_epoch_base = Some(base);
            epochs_active += 1;
        }
    }

    let val_metric = match (&split.val, divergence) {
        (Some(val), None) => Some(eval_classification(&model, val)?.0),
        _ => None,
    };
    Ok(assemble_record(
        seed,
        Task::Classification,
        rows,
        batch_rows,
        val_metric,
        divergence,
        start.elapsed().as_secs_f64(),
    ))
}

fn train_forecast(
    config: &TrainConfig,
    split: &ForecastSplit,
    seed: u64,
    record_batches: bool,
) -> Result<RunRecord> {
    let start = std::time::Instant::now();
    let (train_x, train_y) = forecast_matrices(split, &split.train)?;
    let (test_x, test_y) = forecast_matrices(split, &split.test)?;
    let val_xy = if split.val.is_empty() {
        None
    } else {
        Some(forecast_matrices(split, &split.val)?)
    };

    let mut rng = SeededRng::new(seed);
    let mut model = NLinear::new(split.dataset.lookback, split.dataset.horizon, &mut rng)?;
    let mut buffers: Vec<Vec<f64>> = model
        .param_slices_mut()
        .iter()
        .map(|s| vec![0.0; s.len()])
        .collect();

    let clf_on = config.clf.has_effect();
    let mut prev_epoch_base: Option<f64> = None;
    let mut epochs_active = 0usize;
    let mut rows = Vec::with_capacity(config.epochs);
    let mut batch_rows = Vec::new();
    let mut divergence: Option<usize> = None;

    'epochs: for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr_peak)?;
        let active = clf_on && clf_active(epoch, config.epochs, config.clf.activation_window);
        let state = if active {
            EpochState::active(decay_lambda_v(
                config.clf.lambda_v,
                config.clf.lambda_wd,
                epochs_active,
            ))
        } else {
            EpochState::inactive()
        };

        let perm = rng.permutation(train_x.rows());
        let mut acc = EpochAccumulator::new();
        for (batch_idx, chunk) in perm.chunks(config.batch_size).enumerate() {
            let inputs = take_rows(&train_x, chunk);
            let targets = take_rows(&train_y, chunk);
            let report = match model.forward_cached(&inputs).and_then(|(pred, cache)| {
                let report =
                    clf_total_regression(&pred, &targets, &config.clf, prev_epoch_base, &state)?;
                let grads = model.backward(&cache, &report.d_output)?;
                sgd_step(
                    &mut model.param_slices_mut(),
                    &mut buffers,
                    &grads.slices(),
                    lr,
                    config.momentum,
                    config.weight_decay,
                )?;
                Ok(report)
            }) {
                Ok(report) => report,
                Err(Error::NonFinite(_)) => {
                    divergence = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !report.total.is_finite() {
                divergence = Some(epoch);
                break 'epochs;
            }
            acc.add(&report, chunk.len());
            if record_batches {
                batch_rows.push(BatchRow {
                    epoch,
                    batch: batch_idx,
                    base: report.base,
                    sl: report.sl,
                    vpl: report.vpl,
                    lambda_v_eff: state.lambda_v_eff,
                    total: report.total,
                });
            }
        }

        let (base, sl, vpl, total) = acc.means();
        let (test_metric, test_loss) = match eval_forecast(&model, &test_x, &test_y) {
            Ok(pair) => pair,
            Err(Error::NonFinite(_)) => {
                divergence = Some(epoch);
                break 'epochs;
            }
            Err(e) => return Err(e),
        };
        if !test_metric.is_finite() || !test_loss.is_finite() {
            divergence = Some(epoch);
            break 'epochs;
        }
        rows.push(EpochRow {
            epoch,
            lr,
            lambda_v_eff: state.lambda_v_eff,
            base,
            sl,
            vpl,
            total,
            test_metric,
            test_loss,
        });
        if active {
            prev_epoch_base = Some(base);
            epochs_active += 1;
        }
    }

    let val_metric = match (&val_xy, divergence) {
        (Some((vx, vy)), None) => Some(eval_forecast(&model, vx, vy)?.0),
        _ => None,
    };
    Ok(assemble_record(
        seed,
        Task::Regression,
        rows,
        batch_rows,
        val_metric,
        divergence,
        start.elapsed().as_secs_f64(),
    ))
}

fn assemble_record(
    seed: u64,
    task: Task,
    rows: Vec<EpochRow>,
    batches: Vec<BatchRow>,
    val_metric: Option<f64>,
    divergence: Option<usize>,
    wall_time_s: f64,
) -> RunRecord {
    let final_metrics = match rows.last() {
        Some(last) => FinalMetrics {
            metric: last.test_metric,
            loss: last.test_loss,
            train_base: last.base,
            val_metric,
        },
        None => FinalMetrics {
            metric: f64::NAN,
            loss: f64::NAN,
            train_base: f64::NAN,
            val_metric: None,
        },
    };
    RunRecord {
        seed,
        task,
        epochs: rows,
        batches,
        final_metrics,
        divergent: divergence.is_some(),
        diverged_at_epoch: divergence,
        wall_time_s,
    }
}

fn eval_classification(model: &Mlp, set: &ClassificationDataset) -> Result<(f64, f64)> {
    let logits = model.forward(&set.inputs)?;
    let (loss, _) = cel(&logits, &set.labels)?;
    Ok((accuracy(&logits, &set.labels), loss))
}

fn eval_forecast(model: &NLinear, x: &Matrix, y: &Matrix) -> Result<(f64, f64)> {
    let pred = model.forward(x)?;
    let (loss, _) = mse(&pred, y)?;
    Ok((mae(&pred, y)?, loss))
}

fn gather_classification(set: &ClassificationDataset, rows: &[usize]) -> (Matrix, Vec<usize>) {
    let mut data = Vec::with_capacity(rows.len() * set.dim());
    let mut labels = Vec::with_capacity(rows.len());
    for &r in rows {
        data.extend_from_slice(set.inputs.row(r));
        labels.push(set.labels[r]);
    }
    (
        Matrix::new(rows.len(), set.dim(), data).expect("batch gather"),
        labels,
    )
}

fn take_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    let mut data = Vec::with_capacity(rows.len() * m.cols());
    for &r in rows {
        data.extend_from_slice(m.row(r));
    }
    Matrix::new(rows.len(), m.cols(), data).expect("batch gather")
}

/// Stacks a split's windows into (inputs, targets) matrices.
fn forecast_matrices(split: &ForecastSplit, idx: &[usize]) -> Result<(Matrix, Matrix)> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument("empty window index set".into()));
    }
    let ds = &split.dataset;
    let mut x = Vec::with_capacity(idx.len() * ds.lookback);
    let mut y = Vec::with_capacity(idx.len() * ds.horizon);
    for &i in idx {
        x.extend_from_slice(ds.input_window(i));
        y.extend_from_slice(ds.target_window(i));
    }
    Ok((
        Matrix::new(idx.len(), ds.lookback, x)?,
        Matrix::new(idx.len(), ds.horizon, y)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, make_series_with, split_classification, split_forecast, window, SeriesSpec};

    fn blob_split(seed: u64, spread: f64) -> ClassificationSplit {
        let mut rng = SeededRng::new(seed);
        let ds = make_blobs(&mut rng, 40, 3, 2, spread).unwrap();
        split_classification(&ds, 0.6, 0.2).unwrap()
    }

    fn small_config(epochs: usize, clf: CLFConfig) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            lr_peak: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            clf,
            task: Task::Classification,
        }
    }

    #[test]
    fn cosine_schedule_endpoints_exact() {
        assert_eq!(cosine_lr(0, 100, 0.4).unwrap(), 0.4);
        assert_eq!(cosine_lr(99, 100, 0.4).unwrap(), 0.0);
        assert_eq!(cosine_lr(0, 1, 0.4).unwrap(), 0.4);
        assert!(cosine_lr(100, 100, 0.4).is_err());
    }

    #[test]
    fn cosine_schedule_midpoint_and_monotonicity() {
        let mid = cosine_lr(50, 101, 0.4).unwrap();
        assert!((mid - 0.2).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for e in 0..101 {
            let lr = cosine_lr(e, 101, 0.4).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn clf_active_window_boundaries() {
        assert!(!clf_active(49, 500, 450));
        assert!(clf_active(50, 500, 450));
        assert!(clf_active(0, 10, 10));
        assert!(!clf_active(9, 10, 0));
        assert!(clf_active(0, 10, 99));
    }

    #[test]
    fn lambda_v_decay_contract() {
        assert_eq!(decay_lambda_v(0.2, 0.0, 7), 0.2);
        assert!((decay_lambda_v(0.2, 0.5, 1) - 0.1).abs() < 1e-15);
        assert_eq!(decay_lambda_v(0.2, 0.5, 0), 0.2);
        assert_eq!(decay_lambda_v(0.2, 1.5, 1), 0.0);
    }

    #[test]
    fn sgd_step_hand_cases() {
        let mut p = vec![1.0, -2.0];
        let mut params: Vec<&mut [f64]> = vec![p.as_mut_slice()];
        let mut buffers = vec![vec![0.0, 0.0]];
        let grads: Vec<&[f64]> = vec![&[0.5, 1.0]];
        sgd_step(&mut params, &mut buffers, &grads, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p, vec![0.95, -2.1]);

        let mut q = vec![3.0];
        let mut params: Vec<&mut [f64]> = vec![q.as_mut_slice()];
        let mut buffers = vec![vec![0.0]];
        let grads: Vec<&[f64]> = vec![&[0.0]];
        sgd_step(&mut params, &mut buffers, &grads, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(q, vec![3.0]);
    }

    #[test]
    fn sgd_step_momentum_accumulates() {
        // Two steps with momentum 0.5: buffer 1.0 then 1.5.
        let mut p = vec![0.0];
        let mut buffers = vec![vec![0.0]];
        for expected in [1.0, 1.5] {
            let mut params: Vec<&mut [f64]> = vec![p.as_mut_slice()];
            let grads: Vec<&[f64]> = vec![&[1.0]];
            sgd_step(&mut params, &mut buffers, &grads, 1.0, 0.5, 0.0).unwrap();
            assert_eq!(buffers[0][0], expected);
        }
        assert_eq!(p, vec![-2.5]);
    }

    #[test]
    fn sgd_step_rejects_mismatched_shapes() {
        let mut p = vec![1.0];
        let mut params: Vec<&mut [f64]> = vec![p.as_mut_slice()];
        let mut buffers = vec![vec![0.0, 0.0]];
        let grads: Vec<&[f64]> = vec![&[0.5]];
        assert!(sgd_step(&mut params, &mut buffers, &grads, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn same_seed_same_record() {
        let split = blob_split(1, 0.4);
        let config = small_config(8, CLFConfig::disabled());
        let data = PreparedData::Classification(split);
        let a = train(&config, &ModelSpec::default(), &data, 7).unwrap();
        let b = train(&config, &ModelSpec::default(), &data, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs_csv(), b.epochs_csv());
        assert_eq!(a.epochs.len(), 8);
    }

    #[test]
    fn zero_weights_and_zero_window_are_identical() {
        let split = blob_split(2, 0.4);
        let data = PreparedData::Classification(split);
        let zero_weights = small_config(
            6,
            CLFConfig {
                lambda_s: 0.0,
                lambda_v: 0.0,
                lambda_wd: 0.0,
                activation_window: 6,
            },
        );
        let zero_window = small_config(6, CLFConfig::disabled());
        let a = train(&zero_weights, &ModelSpec::default(), &data, 3).unwrap();
        let b = train(&zero_window, &ModelSpec::default(), &data, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epochs_csv(), b.epochs_csv());
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let split = blob_split(3, 1e-3);
        let config = small_config(50, CLFConfig::disabled());
        let data = PreparedData::Classification(split);
        let record = train(&config, &ModelSpec::default(), &data, 1).unwrap();
        assert!(!record.divergent);
        assert_eq!(record.final_metrics.metric, 1.0);
    }

    #[test]
    fn huge_learning_rate_diverges_with_flag() {
        let split = blob_split(4, 0.4);
        let mut config = small_config(20, CLFConfig::disabled());
        config.lr_peak = 1e6;
        let data = PreparedData::Classification(split);
        let record = train(&config, &ModelSpec::default(), &data, 1).unwrap();
        assert!(record.divergent);
        assert!(record.diverged_at_epoch.is_some());
    }

    #[test]
    fn prefix_property_across_activation_windows() {
        let split = blob_split(5, 0.4);
        let data = PreparedData::Classification(split);
        let clf = |window| CLFConfig {
            lambda_s: 0.2,
            lambda_v: 0.3,
            lambda_wd: 0.1,
            activation_window: window,
        };
        let short = train(&small_config(10, clf(3)), &ModelSpec::default(), &data, 11).unwrap();
        let long = train(&small_config(10, clf(7)), &ModelSpec::default(), &data, 11).unwrap();
        // Epochs before the earlier activation point (10 - 7 = 3) coincide.
        for e in 0..3 {
            assert_eq!(short.epochs[e], long.epochs[e], "epoch {e}");
        }
        assert_ne!(short.epochs[5], long.epochs[5]);
    }

    #[test]
    fn single_batch_sl_matches_epoch_deltas() {
        let split = blob_split(6, 0.4);
        let n_train = split.train.len();
        let mut config = small_config(8, CLFConfig {
            lambda_s: 0.3,
            lambda_v: 0.0,
            lambda_wd: 0.0,
            activation_window: 8,
        });
        config.batch_size = n_train;
        let data = PreparedData::Classification(split);
        let record = train(&config, &ModelSpec::default(), &data, 2).unwrap();
        // With one batch per epoch, the logged SL is exactly the absolute
        // difference between consecutive epoch-mean base losses.
        assert_eq!(record.epochs[0].sl, 0.0);
        for e in 1..record.epochs.len() {
            let expected = (record.epochs[e].base - record.epochs[e - 1].base).abs();
            assert!(
                (record.epochs[e].sl - expected).abs() < 1e-12,
                "epoch {e}: {} vs {expected}",
                record.epochs[e].sl
            );
        }
    }

    #[test]
    fn lambda_v_eff_decays_only_while_active() {
        let split = blob_split(7, 0.4);
        let config = small_config(
            6,
            CLFConfig {
                lambda_s: 0.0,
                lambda_v: 0.4,
                lambda_wd: 0.5,
                activation_window: 3,
            },
        );
        let data = PreparedData::Classification(split);
        let record = train(&config, &ModelSpec::default(), &data, 9).unwrap();
        let effs: Vec<f64> = record.epochs.iter().map(|r| r.lambda_v_eff).collect();
        assert_eq!(effs[0..3], [0.0, 0.0, 0.0]);
        assert!((effs[3] - 0.4).abs() < 1e-15);
        assert!((effs[4] - 0.2).abs() < 1e-15);
        assert!((effs[5] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn composite_gradient_through_model_matches_finite_differences() {
        let mut rng = SeededRng::new(40);
        let mlp = Mlp::new(&[2, 4, 3], &mut rng).unwrap();
        let ds = make_blobs(&mut rng, 4, 3, 2, 0.5).unwrap();
        let config = CLFConfig {
            lambda_s: 0.3,
            lambda_v: 0.4,
            lambda_wd: 0.0,
            activation_window: 1,
        };
        let state = EpochState::active(0.4);
        let prev = Some(2.0);
        let loss_of = |m: &Mlp| {
            let logits = m.forward(&ds.inputs).unwrap();
            clf_total(&logits, &ds.labels, &config, prev, &state)
                .unwrap()
                .total
        };
        let (logits, cache) = mlp.forward_cached(&ds.inputs).unwrap();
        let report = clf_total(&logits, &ds.labels, &config, prev, &state).unwrap();
        let grads = mlp.backward(&cache, &report.d_output).unwrap();
        let h = 1e-5;
        for (layer, w) in grads.weights.iter().enumerate() {
            for idx in 0..w.data().len() {
                let numeric = {
                    let x = mlp.weights[layer].data()[idx];
                    let mut plus = mlp.clone();
                    plus.weights[layer].data_mut()[idx] = x + h;
                    let mut minus = mlp.clone();
                    minus.weights[layer].data_mut()[idx] = x - h;
                    (loss_of(&plus) - loss_of(&minus)) / (2.0 * h)
                };
                let analytic = w.data()[idx];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-4,
                    "layer {layer} idx {idx}: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn forecast_training_learns_the_series() {
        let mut rng = SeededRng::new(8);
        let spec = SeriesSpec {
            trend: 0.002,
            ..SeriesSpec::default()
        };
        let series = make_series_with(&mut rng, 400, 0.05, &spec).unwrap();
        let ds = window(series, 24, 4, 1).unwrap();
        let split = split_forecast(ds, 0.6, 0.2).unwrap();
        let config = TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr_peak: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            clf: CLFConfig::disabled(),
            task: Task::Regression,
        };
        let data = PreparedData::Forecast(split);
        let record = train(&config, &ModelSpec::default(), &data, 1).unwrap();
        assert!(!record.divergent);
        let first = record.epochs.first().unwrap().test_loss;
        let last = record.epochs.last().unwrap().test_loss;
        assert!(last < first, "test mse did not improve: {first} -> {last}");
        assert!(record.final_metrics.metric.is_finite());
    }

    #[test]
    fn forecast_determinism() {
        let mut rng = SeededRng::new(9);
        let series = make_series_with(&mut rng, 300, 0.1, &SeriesSpec::default()).unwrap();
        let ds = window(series, 16, 2, 1).unwrap();
        let split = split_forecast(ds, 0.6, 0.2).unwrap();
        let config = TrainConfig {
            epochs: 10,
            batch_size: 16,
            lr_peak: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            clf: CLFConfig {
                lambda_s: 0.1,
                lambda_v: 0.1,
                lambda_wd: 0.1,
                activation_window: 5,
            },
            task: Task::Regression,
        };
        let data = PreparedData::Forecast(split);
        let a = train(&config, &ModelSpec::default(), &data, 4).unwrap();
        let b = train(&config, &ModelSpec::default(), &data, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_recording_matches_loss_columns() {
        let split = blob_split(10, 0.4);
        let config = small_config(
            3,
            CLFConfig {
                lambda_s: 0.1,
                lambda_v: 0.2,
                lambda_wd: 0.0,
                activation_window: 3,
            },
        );
        let data = PreparedData::Classification(split);
        let record = train_with_options(&config, &ModelSpec::default(), &data, 5, true).unwrap();
        assert!(!record.batches.is_empty());
        let csv = record.batches_csv();
        assert!(csv.starts_with("epoch,batch,cel,sl,vpl,lambda_v_eff,total\n"));
        // Batch means aggregate to the epoch row, sample-weighted.
        let epoch0: Vec<&BatchRow> = record.batches.iter().filter(|b| b.epoch == 0).collect();
        let n: usize = 72; // 40 * 3 * 0.6 per class
        let weighted: f64 = epoch0
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let len = if i + 1 < epoch0.len() { 16 } else { n - 16 * (epoch0.len() - 1) };
                b.base * len as f64
            })
            .sum::<f64>()
            / n as f64;
        assert!((weighted - record.epochs[0].base).abs() < 1e-12);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = small_config(5, CLFConfig::disabled());
        assert!(config.validate().is_ok());
        config.momentum = 1.0;
        assert!(config.validate().is_err());
        config.momentum = 0.9;
        config.lr_peak = 0.0;
        assert!(config.validate().is_err());
        config.lr_peak = 0.1;
        config.clf.activation_window = 6;
        assert!(config.validate().is_err());
    }

    #[test]
    fn task_dataset_mismatch_is_a_config_error() {
        let split = blob_split(11, 0.4);
        let mut config = small_config(2, CLFConfig::disabled());
        config.task = Task::Regression;
        let data = PreparedData::Classification(split);
        assert!(train(&config, &ModelSpec::default(), &data, 1).is_err());
    }
}
