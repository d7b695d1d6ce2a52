//! Models: a ReLU multi-layer perceptron for classification and a
//! last-value-normalized linear map for forecasting.
//!
//! Forward passes cache exactly what the analytic backward pass needs.
//! Weight initialization draws gaussians layer by layer in row-major order
//! from the run RNG, so a (config, seed) pair always yields the same model.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Matrix;
use serde::{Deserialize, Serialize};

/// Fully connected ReLU network. `weights[i]` maps layer i (rows = fan-in)
/// to layer i+1 (cols = fan-out); the last layer has no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-layer inputs and hidden pre-activations from one forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
}

/// Parameter gradients in the same shapes as [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Builds an MLP with the given layer sizes, e.g. `[4, 16, 3]` for
    /// 4 inputs, one hidden layer of 16, 3 outputs. He initialization:
    /// weights gaussian(0, sqrt(2/fan_in)), biases zero.
    pub fn new(layer_sizes: &[usize], rng: &mut SeededRng) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "mlp needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "mlp layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            weights.push(gaussian_matrix(rng, fan_in, fan_out, std)?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp { weights, biases })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.weights[0].rows()];
        sizes.extend(self.weights.iter().map(Matrix::cols));
        sizes
    }

    pub fn n_params(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols())
            .sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Logits for a batch (rows are samples).
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Logits plus the cache consumed by [`Mlp::backward`].
    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut inputs = vec![x.clone()];
        let mut preacts = Vec::new();
        let mut h = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = h.matmul(w)?.add_row_vector(b)?;
            if i + 1 < self.weights.len() {
                preacts.push(z.clone());
                h = z.map(|v| v.max(0.0));
                inputs.push(h.clone());
            } else {
                h = z;
            }
        }
        Ok((h, MlpCache { inputs, preacts }))
    }

    /// Backpropagates `dlogits` (dLoss/dlogits, same shape as the logits)
    /// through the cached forward pass. The ReLU subgradient at zero is 0.
    pub fn backward(&self, cache: &MlpCache, dlogits: &Matrix) -> Result<MlpGradients> {
        let n_layers = self.n_layers();
        let mut d = dlogits.clone();
        let mut weights = vec![Matrix::zeros(0, 0); n_layers];
        let mut biases = vec![Vec::new(); n_layers];
        for i in (0..n_layers).rev() {
            weights[i] = cache.inputs[i].transpose().matmul(&d)?;
            biases[i] = column_sums(&d);
            if i > 0 {
                d = d.matmul(&self.weights[i].transpose())?;
                d = d.zip_with(&cache.preacts[i - 1], |g, z| if z > 0.0 { g } else { 0.0 })?;
            }
        }
        Ok(MlpGradients { weights, biases })
    }

    /// Mutable views of every parameter tensor, weights first then biases,
    /// in layer order. Matches [`MlpGradients::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .map(Matrix::data_mut)
            .chain(self.biases.iter_mut().map(Vec::as_mut_slice))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: ModelKind::Mlp,
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::Mlp {
            return Err(Error::InvalidArgument(
                "checkpoint does not hold an mlp".into(),
            ));
        }
        let model = Mlp {
            weights: ckpt.weights.clone(),
            biases: ckpt.biases.clone(),
        };
        validate_stack(&model.weights, &model.biases)?;
        Ok(model)
    }
}

impl MlpGradients {
    /// Read views in the same order as [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .map(Matrix::data)
            .chain(self.biases.iter().map(Vec::as_slice))
            .collect()
    }
}

/// Linear forecaster with last-value normalization: the final lookback
/// value is subtracted from the input window and added back to the output.
#[derive(Debug, Clone, PartialEq)]
pub struct NLinear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Normalized inputs retained for the backward pass.
#[derive(Debug, Clone)]
pub struct NLinearCache {
    x_norm: Matrix,
}

#[derive(Debug, Clone)]
pub struct NLinearGradients {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl NLinear {
    /// Weight is lookback x horizon, gaussian(0, 1/sqrt(lookback)); bias zero.
    pub fn new(lookback: usize, horizon: usize, rng: &mut SeededRng) -> Result<Self> {
        if lookback == 0 || horizon == 0 {
            return Err(Error::InvalidArgument(
                "nlinear needs lookback >= 1 and horizon >= 1".into(),
            ));
        }
        let std = 1.0 / (lookback as f64).sqrt();
        Ok(NLinear {
            weight: gaussian_matrix(rng, lookback, horizon, std)?,
            bias: vec![0.0; horizon],
        })
    }

    pub fn lookback(&self) -> usize {
        self.weight.rows()
    }

    pub fn horizon(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, NLinearCache)> {
        if x.cols() != self.lookback() {
            return Err(Error::DimensionMismatch(format!(
                "nlinear expects {} inputs per row, got {}",
                self.lookback(),
                x.cols()
            )));
        }
        let mut x_norm = x.clone();
        let last_col = x.cols() - 1;
        for r in 0..x.rows() {
            let last = x.get(r, last_col);
            for v in x_norm.row_mut(r) {
                *v -= last;
            }
        }
        let mut y = x_norm.matmul(&self.weight)?.add_row_vector(&self.bias)?;
        for r in 0..x.rows() {
            let last = x.get(r, last_col);
            for v in y.row_mut(r) {
                *v += last;
            }
        }
        Ok((y, NLinearCache { x_norm }))
    }

    /// Gradients of the parameters given dLoss/dprediction. The additive
    /// last-value term does not depend on the parameters, so it drops out.
    pub fn backward(&self, cache: &NLinearCache, dpred: &Matrix) -> Result<NLinearGradients> {
        Ok(NLinearGradients {
            weight: cache.x_norm.transpose().matmul(dpred)?,
            bias: column_sums(dpred),
        })
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.data_mut(), self.bias.as_mut_slice()]
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: ModelKind::NLinear,
            weights: vec![self.weight.clone()],
            biases: vec![self.bias.clone()],
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::NLinear {
            return Err(Error::InvalidArgument(
                "checkpoint does not hold an nlinear".into(),
            ));
        }
        if ckpt.weights.len() != 1 || ckpt.biases.len() != 1 {
            return Err(Error::InvalidArgument(
                "nlinear checkpoint must hold exactly one layer".into(),
            ));
        }
        let model = NLinear {
            weight: ckpt.weights[0].clone(),
            bias: ckpt.biases[0].clone(),
        };
        validate_stack(std::slice::from_ref(&model.weight), std::slice::from_ref(&model.bias))?;
        Ok(model)
    }
}

impl NLinearGradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![self.weight.data(), self.bias.as_slice()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    NLinear,
}

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable snapshot of a model's parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        crate::report::to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        validate_stack(&ckpt.weights, &ckpt.biases)?;
        Ok(ckpt)
    }
}

fn gaussian_matrix(rng: &mut SeededRng, fan_in: usize, fan_out: usize, std: f64) -> Result<Matrix> {
    let mut data = Vec::with_capacity(fan_in * fan_out);
    for _ in 0..fan_in * fan_out {
        data.push(rng.gaussian(0.0, std)?);
    }
    Matrix::new(fan_in, fan_out, data)
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (s, v) in sums.iter_mut().zip(m.row(r)) {
            *s += v;
        }
    }
    sums
}

fn validate_stack(weights: &[Matrix], biases: &[Vec<f64>]) -> Result<()> {
    if weights.is_empty() || weights.len() != biases.len() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint has {} weight tensors and {} bias tensors",
            weights.len(),
            biases.len()
        )));
    }
    for (i, (w, b)) in weights.iter().zip(biases).enumerate() {
        if w.cols() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "layer {i}: weight is {}x{} but bias has {}",
                w.rows(),
                w.cols(),
                b.len()
            )));
        }
        if i > 0 && weights[i - 1].cols() != w.rows() {
            return Err(Error::DimensionMismatch(format!(
                "layer {i} fan-in {} does not match previous fan-out {}",
                w.rows(),
                weights[i - 1].cols()
            )));
        }
        if !w.is_finite() || !b.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("layer {i} parameters")));
        }
    }
    Ok(())
}
