//! The composite training objective and its pieces: cross-entropy (CEL),
//! the stability term (SL), the variance penalty (VPL), and the MSE-based
//! regression variants.
//!
//! Composition is always `total = base + lambda_s * sl + lambda_v_eff * vpl`
//! and the output gradient is
//! `(1 + lambda_s * sign) * d_base + lambda_v_eff * d_vpl`. The stability
//! reference (previous epoch's mean base loss) is a constant: no gradient
//! flows into it.

use crate::error::{Error, Result};
use crate::tensor::{log_softmax, Matrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Weights and schedule knobs for the composite loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CLFConfig {
    pub lambda_s: f64,
    pub lambda_v: f64,
    /// Per-active-epoch decay rate applied to `lambda_v`.
    pub lambda_wd: f64,
    /// Number of final epochs during which SL and VPL are added to the
    /// base loss.
    pub activation_window: usize,
}

impl CLFConfig {
    /// A configuration with the composite terms fully disabled.
    pub fn disabled() -> Self {
        CLFConfig {
            lambda_s: 0.0,
            lambda_v: 0.0,
            lambda_wd: 0.0,
            activation_window: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_v", self.lambda_v),
            ("lambda_wd", self.lambda_wd),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// True when either composite term can contribute anything.
    pub fn has_effect(&self) -> bool {
        self.lambda_s > 0.0 || self.lambda_v > 0.0
    }
}

/// What the trainer decided about the current epoch: whether the composite
/// terms are applied and at which decayed variance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochState {
    pub active: bool,
    pub lambda_v_eff: f64,
}

impl EpochState {
    pub fn inactive() -> Self {
        EpochState {
            active: false,
            lambda_v_eff: 0.0,
        }
    }

    pub fn active(lambda_v_eff: f64) -> Self {
        EpochState {
            active: true,
            lambda_v_eff,
        }
    }
}

/// One batch's loss values and output gradient.
///
/// `base` is the cross-entropy for classification or the MSE for
/// regression. On inactive epochs `sl` is 0 and `vpl` is still computed for
/// reporting but excluded from `total`.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub base: f64,
    pub sl: f64,
    pub vpl: f64,
    pub total: f64,
    /// Sign of (base - previous reference): -1, 0, or +1.
    pub sign: f64,
    /// Gradient of `total` with respect to the logits (classification) or
    /// predictions (regression).
    pub d_output: Matrix,
    /// Classification only: variance of true-class logits per class
    /// present in the batch.
    pub per_class_variances: BTreeMap<usize, f64>,
}

/// Mean negative log-probability of the true classes, with its gradient
/// `(softmax - one_hot) / N` per row.
pub fn cel(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let n = logits.rows();
    let k = logits.cols();
    let mut value = 0.0;
    let mut grad = Matrix::zeros(n, k);
    for i in 0..n {
        let ls = log_softmax(logits.row(i))?;
        value -= ls[labels[i]];
        let grow = grad.row_mut(i);
        for (c, l) in ls.iter().enumerate() {
            grow[c] = l.exp() / n as f64;
        }
        grow[labels[i]] -= 1.0 / n as f64;
    }
    Ok((value / n as f64, grad))
}

/// Absolute change of the base loss against the previous epoch's value,
/// plus the sign routed into the gradient. No reference yet (or an exact
/// tie) contributes nothing.
pub fn stable_loss(current: f64, prev: Option<f64>) -> (f64, f64) {
    match prev {
        None => (0.0, 0.0),
        Some(p) => {
            let delta = current - p;
            let sign = if delta > 0.0 {
                1.0
            } else if delta < 0.0 {
                -1.0
            } else {
                0.0
            };
            (delta.abs(), sign)
        }
    }
}

/// Variance penalty: for each class present in the batch, the population
/// variance of that class's true-class logits, averaged over the present
/// classes. The gradient touches only true-class logit entries:
/// `2/(|C| * m_j) * (f - mean_j)`. Singleton classes contribute zero.
pub fn vpl(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix, BTreeMap<usize, f64>)> {
    check_labels(logits, labels)?;
    let groups = class_groups(logits, labels);
    let n_classes_present = groups.len() as f64;
    let mut value = 0.0;
    let mut variances = BTreeMap::new();
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (&class, members) in &groups {
        let m = members.len() as f64;
        let mean = members.iter().map(|&(_, f)| f).sum::<f64>() / m;
        let var = members.iter().map(|&(_, f)| (f - mean).powi(2)).sum::<f64>() / m;
        variances.insert(class, var);
        value += var;
        for &(row, f) in members {
            grad.set(row, class, 2.0 / (n_classes_present * m) * (f - mean));
        }
    }
    Ok((value / n_classes_present, grad, variances))
}

/// Variance-penalty gradient without the mean-term cancellation applied:
/// each entry keeps the `-(1/m_j) * sum(f - mean_j)` contribution that is
/// analytically zero. Used to verify that both routes agree numerically.
pub fn vpl_gradient_unsimplified(logits: &Matrix, labels: &[usize]) -> Result<Matrix> {
    check_labels(logits, labels)?;
    let groups = class_groups(logits, labels);
    let n_classes_present = groups.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (&class, members) in &groups {
        let m = members.len() as f64;
        let mean = members.iter().map(|&(_, f)| f).sum::<f64>() / m;
        let residual_sum: f64 = members.iter().map(|&(_, f)| f - mean).sum();
        for &(row, f) in members {
            let full = (f - mean) - residual_sum / m;
            grad.set(row, class, 2.0 / (n_classes_present * m) * full);
        }
    }
    Ok(grad)
}

/// The composite classification loss for one batch.
pub fn clf_total(
    logits: &Matrix,
    labels: &[usize],
    config: &CLFConfig,
    prev_epoch_cel: Option<f64>,
    state: &EpochState,
) -> Result<LossReport> {
    let (base, d_base) = cel(logits, labels)?;
    let (vpl_value, d_vpl, per_class_variances) = vpl(logits, labels)?;
    Ok(compose(
        base,
        d_base,
        vpl_value,
        d_vpl,
        per_class_variances,
        config,
        prev_epoch_cel,
        state,
    ))
}

/// Mean squared error over all elements, gradient `2 (pred - target) / count`.
pub fn mse(predictions: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    let (value, _, grad) = mse_per_sample(predictions, targets)?;
    Ok((value, grad))
}

/// MSE plus the per-sample (per-row) squared errors the regression
/// variance penalty is built from.
pub fn mse_per_sample(predictions: &Matrix, targets: &Matrix) -> Result<(f64, Vec<f64>, Matrix)> {
    check_same_shape(predictions, targets)?;
    let n = predictions.rows();
    let h = predictions.cols();
    let count = (n * h) as f64;
    let mut per_sample = Vec::with_capacity(n);
    let mut grad = Matrix::zeros(n, h);
    for i in 0..n {
        let mut row_loss = 0.0;
        for c in 0..h {
            let r = predictions.get(i, c) - targets.get(i, c);
            row_loss += r * r;
            grad.set(i, c, 2.0 * r / count);
        }
        per_sample.push(row_loss / h as f64);
    }
    let value = per_sample.iter().sum::<f64>() / n as f64;
    Ok((value, per_sample, grad))
}

/// Regression variance penalty: population variance of the per-sample
/// squared errors, with gradient
/// `(2/N) (l_i - mean) * 2 (pred - target) / H` per element.
pub fn regression_vpl(
    predictions: &Matrix,
    targets: &Matrix,
    per_sample: &[f64],
) -> Result<(f64, Matrix)> {
    check_same_shape(predictions, targets)?;
    if per_sample.len() != predictions.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} per-sample losses for {} rows",
            per_sample.len(),
            predictions.rows()
        )));
    }
    let n = predictions.rows() as f64;
    let h = predictions.cols() as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    let value = per_sample.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let mut grad = Matrix::zeros(predictions.rows(), predictions.cols());
    for i in 0..predictions.rows() {
        let coeff = 2.0 / n * (per_sample[i] - mean);
        for c in 0..predictions.cols() {
            let dl = 2.0 * (predictions.get(i, c) - targets.get(i, c)) / h;
            grad.set(i, c, coeff * dl);
        }
    }
    Ok((value, grad))
}

/// The composite regression loss for one batch.
pub fn clf_total_regression(
    predictions: &Matrix,
    targets: &Matrix,
    config: &CLFConfig,
    prev_epoch_mse: Option<f64>,
    state: &EpochState,
) -> Result<LossReport> {
    let (base, per_sample, d_base) = mse_per_sample(predictions, targets)?;
    let (vpl_value, d_vpl) = regression_vpl(predictions, targets, &per_sample)?;
    Ok(compose(
        base,
        d_base,
        vpl_value,
        d_vpl,
        BTreeMap::new(),
        config,
        prev_epoch_mse,
        state,
    ))
}

#[allow(clippy::too_many_arguments)]
fn compose(
    base: f64,
    d_base: Matrix,
    vpl_value: f64,
    d_vpl: Matrix,
    per_class_variances: BTreeMap<usize, f64>,
    config: &CLFConfig,
    prev: Option<f64>,
    state: &EpochState,
) -> LossReport {
    if !state.active {
        return LossReport {
            base,
            sl: 0.0,
            vpl: vpl_value,
            total: base,
            sign: 0.0,
            d_output: d_base,
            per_class_variances,
        };
    }
    let (sl, sign) = stable_loss(base, prev);
    let total = base + config.lambda_s * sl + state.lambda_v_eff * vpl_value;
    let scale = 1.0 + config.lambda_s * sign;
    let d_output = d_base
        .zip_with(&d_vpl, |b, v| scale * b + state.lambda_v_eff * v)
        .expect("component gradients share the batch shape");
    LossReport {
        base,
        sl,
        vpl: vpl_value,
        total,
        sign,
        d_output,
        per_class_variances,
    }
}

/// Rows grouped by class: for each class present, the (row, true-class
/// logit) pairs. BTreeMap keeps class iteration order deterministic.
fn class_groups(logits: &Matrix, labels: &[usize]) -> BTreeMap<usize, Vec<(usize, f64)>> {
    let mut groups: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (row, &label) in labels.iter().enumerate() {
        groups.entry(label).or_default().push((row, logits.get(row, label)));
    }
    groups
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "predictions {}x{} vs targets {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}
