//! Feed-forward mean/σ networks with hand-written reverse accumulation, the
//! training loop, and ensemble / MC-dropout / test-time-augmentation
//! predictors.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Prior, TrainConfig};
use crate::data::{column_stats, Dataset, Split};
use crate::error::{LikaError, Result};
use crate::losses::{Objective, TemperaturePair, SIGMA_FLOOR};
use crate::metrics::{default_ece_levels, ece, regression_metrics, uce, EvalBatch};
use crate::optim::{clip_grad_norm, cosine_lr, AdamState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// `output_dim` means followed by `output_dim` raw σ values.
    #[default]
    MeanSigma,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub head: Head,
}

impl ModelSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden_layers: Vec<usize>) -> Result<Self> {
        let spec = ModelSpec {
            input_dim,
            output_dim,
            hidden_layers,
            activation: Activation::Tanh,
            dropout_rate: 0.0,
            head: Head::MeanSigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Architecture for `config` on `dataset`'s dimensions.
    pub fn for_dataset(dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        let spec = ModelSpec {
            input_dim: dataset.input_dim(),
            output_dim: dataset.output_dim(),
            hidden_layers: config.hidden_layers.clone(),
            activation: config.activation,
            dropout_rate: config.effective_dropout(),
            head: Head::MeanSigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(LikaError::Usage("model dimensions must be >= 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(LikaError::Usage("hidden widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LikaError::Usage(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_layers);
        dims.push(2 * self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn head_len(&self) -> usize {
        2 * self.output_dim
    }
}

/// Affine maps between data units and the network's standardized units,
/// fitted on the train split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Standardizer {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Standardizer {
            input_mean: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            target_mean: vec![0.0; output_dim],
            target_scale: vec![1.0; output_dim],
        }
    }

    pub fn fit(inputs: &Array2<f64>, targets: &Array2<f64>) -> Self {
        let split = |stats: Vec<(f64, f64)>| -> (Vec<f64>, Vec<f64>) {
            stats
                .into_iter()
                .map(|(m, s)| (m, if s > 0.0 { s } else { 1.0 }))
                .unzip()
        };
        let (input_mean, input_scale) = split(column_stats(inputs));
        let (target_mean, target_scale) = split(column_stats(targets));
        Standardizer {
            input_mean,
            input_scale,
            target_mean,
            target_scale,
        }
    }

    pub fn transform_inputs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.input_mean[j], self.input_scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }
}

/// Flat parameter vector (per layer: row-major `fan_in × fan_out` weights,
/// then biases) plus the data standardizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub scaler: Standardizer,
}

/// Per-sample Gaussian prediction in target units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Bias of the σ head that makes the initial softplus output exactly 1.
fn unit_softplus_bias() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform `±1/√fan_in` weights, zero biases, σ-head bias giving σ̂ ≈ 1
/// (standardized units). Identity standardizer.
pub fn init_model(spec: &ModelSpec, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(spec.n_params());
    let shapes = spec.layer_shapes();
    let last = shapes.len() - 1;
    for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            weights.push(rng.random_range(-bound..bound));
        }
        for k in 0..fan_out {
            let sigma_head = l == last && k >= spec.output_dim;
            weights.push(if sigma_head { unit_softplus_bias() } else { 0.0 });
        }
    }
    ModelParams {
        weights,
        scaler: Standardizer::identity(spec.input_dim, spec.output_dim),
    }
}

fn layer_views<'a>(spec: &ModelSpec, w: &'a [f64]) -> Vec<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)> {
    let mut off = 0;
    spec.layer_shapes()
        .into_iter()
        .map(|(i, o)| {
            let wm = ArrayView2::from_shape((i, o), &w[off..off + i * o]).expect("layer shape");
            off += i * o;
            let b = ArrayView1::from(&w[off..off + o]);
            off += o;
            (wm, b)
        })
        .collect()
}

fn layer_views_mut<'a>(
    spec: &ModelSpec,
    mut w: &'a mut [f64],
) -> Vec<(ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>)> {
    let mut out = Vec::new();
    for (i, o) in spec.layer_shapes() {
        let (wm, rest) = w.split_at_mut(i * o);
        let (b, rest) = rest.split_at_mut(o);
        out.push((
            ArrayViewMut2::from_shape((i, o), wm).expect("layer shape"),
            ArrayViewMut1::from(b),
        ));
        w = rest;
    }
    out
}

struct ForwardCache {
    /// Matrix multiplied into each layer (after dropout for hidden layers).
    layer_inputs: Vec<Array2<f64>>,
    /// Hidden activations before dropout.
    activations: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers (0 or 1/(1−p)) per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
    out: Array2<f64>,
}

fn forward<R: Rng>(
    spec: &ModelSpec,
    weights: &[f64],
    x_std: ArrayView2<f64>,
    mut dropout_rng: Option<&mut R>,
) -> ForwardCache {
    let layers = layer_views(spec, weights);
    let n_layers = layers.len();
    let mut cache = ForwardCache {
        layer_inputs: Vec::with_capacity(n_layers),
        activations: Vec::with_capacity(n_layers - 1),
        masks: Vec::with_capacity(n_layers - 1),
        out: Array2::zeros((0, 0)),
    };
    let mut a = x_std.to_owned();
    for (l, (w, b)) in layers.iter().enumerate() {
        let mut z = a.dot(w);
        z += b;
        cache.layer_inputs.push(a);
        if l + 1 == n_layers {
            cache.out = z;
            break;
        }
        z.mapv_inplace(|v| spec.activation.apply(v));
        let p = spec.dropout_rate;
        let mask = match dropout_rng.as_deref_mut() {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                Some(Array2::from_shape_fn(z.dim(), |_| {
                    if rng.random::<f64>() < p {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
            _ => None,
        };
        a = match &mask {
            Some(m) => &z * m,
            None => z.clone(),
        };
        cache.activations.push(z);
        cache.masks.push(mask);
    }
    cache
}

fn backward(spec: &ModelSpec, weights: &[f64], cache: &ForwardCache, d_out: Array2<f64>) -> Vec<f64> {
    let layers = layer_views(spec, weights);
    let mut grads = vec![0.0; weights.len()];
    {
        let mut g_layers = layer_views_mut(spec, &mut grads);
        let mut delta = d_out;
        for l in (0..layers.len()).rev() {
            let (gw, gb) = &mut g_layers[l];
            gw.assign(&cache.layer_inputs[l].t().dot(&delta));
            gb.assign(&delta.sum_axis(Axis(0)));
            if l == 0 {
                break;
            }
            let mut d_in = delta.dot(&layers[l].0.t());
            if let Some(m) = &cache.masks[l - 1] {
                d_in *= m;
            }
            let act = &cache.activations[l - 1];
            ndarray::Zip::from(&mut d_in)
                .and(act)
                .for_each(|d, &h| *d *= spec.activation.grad_from_output(h));
            delta = d_in;
        }
    }
    grads
}

/// Means and σ̂ in target units from the raw head output.
fn decode_heads(spec: &ModelSpec, scaler: &Standardizer, out: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let n = spec.output_dim;
    let mut mean = out.slice(s![.., ..n]).to_owned();
    let mut sigma = out.slice(s![.., n..]).to_owned();
    for j in 0..n {
        let (m, sc) = (scaler.target_mean[j], scaler.target_scale[j]);
        mean.column_mut(j).mapv_inplace(|v| m + sc * v);
        sigma.column_mut(j).mapv_inplace(|r| sc * softplus(r) + SIGMA_FLOOR);
    }
    (mean, sigma)
}

fn check_input_width(spec: &ModelSpec, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != spec.input_dim {
        return Err(LikaError::Usage(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            spec.input_dim
        )));
    }
    Ok(())
}

fn check_params(spec: &ModelSpec, params: &ModelParams) -> Result<()> {
    if params.weights.len() != spec.n_params() {
        return Err(LikaError::Usage(format!(
            "parameter vector has {} entries, spec needs {}",
            params.weights.len(),
            spec.n_params()
        )));
    }
    Ok(())
}

fn rows_to_distributions(mean: &Array2<f64>, sigma: &Array2<f64>) -> Vec<PredictiveDistribution> {
    mean.rows()
        .into_iter()
        .zip(sigma.rows())
        .map(|(m, s)| PredictiveDistribution {
            mean: m.to_vec(),
            sigma: s.to_vec(),
        })
        .collect()
}

/// Deterministic prediction (dropout off) for every row of `x`: `(mean, σ̂)`.
pub fn predict_batch(
    params: &ModelParams,
    spec: &ModelSpec,
    x: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_params(spec, params)?;
    check_input_width(spec, &x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LikaError::numeric("non-finite model input"));
    }
    let xs = params.scaler.transform_inputs(x);
    let cache = forward::<ChaCha8Rng>(spec, &params.weights, xs.view(), None);
    Ok(decode_heads(spec, &params.scaler, &cache.out))
}

pub fn predict(params: &ModelParams, spec: &ModelSpec, x: &[f64]) -> Result<PredictiveDistribution> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let (m, s) = predict_batch(params, spec, xv)?;
    Ok(rows_to_distributions(&m, &s).remove(0))
}

/// Averaged means, σ̂² = average member variance.
pub fn ensemble_predict_batch(
    members: &[ModelParams],
    spec: &ModelSpec,
    x: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if members.is_empty() {
        return Err(LikaError::Usage("ensemble needs at least one member".into()));
    }
    let mut mean_acc = Array2::zeros((x.nrows(), spec.output_dim));
    let mut var_acc = Array2::zeros((x.nrows(), spec.output_dim));
    for p in members {
        let (m, s) = predict_batch(p, spec, x)?;
        mean_acc += &m;
        var_acc += &s.mapv(|v| v * v);
    }
    let k = members.len() as f64;
    Ok((mean_acc / k, (var_acc / k).mapv(f64::sqrt)))
}

pub fn ensemble_predict(
    members: &[ModelParams],
    spec: &ModelSpec,
    x: &[f64],
) -> Result<PredictiveDistribution> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let (m, s) = ensemble_predict_batch(members, spec, xv)?;
    Ok(rows_to_distributions(&m, &s).remove(0))
}

/// `n_passes` stochastic forward passes with dropout active; averaged means
/// and average σ̂².
pub fn mc_dropout_predict_batch(
    params: &ModelParams,
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    n_passes: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_params(spec, params)?;
    check_input_width(spec, &x)?;
    if n_passes == 0 {
        return Err(LikaError::Usage("mc dropout needs at least one pass".into()));
    }
    if spec.dropout_rate == 0.0 {
        return predict_batch(params, spec, x);
    }
    let xs = params.scaler.transform_inputs(x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean_acc = Array2::zeros((x.nrows(), spec.output_dim));
    let mut var_acc = Array2::zeros((x.nrows(), spec.output_dim));
    for _ in 0..n_passes {
        let cache = forward(spec, &params.weights, xs.view(), Some(&mut rng));
        let (m, s) = decode_heads(spec, &params.scaler, &cache.out);
        mean_acc += &m;
        var_acc += &s.mapv(|v| v * v);
    }
    let k = n_passes as f64;
    Ok((mean_acc / k, (var_acc / k).mapv(f64::sqrt)))
}

pub fn mc_dropout_predict(
    params: &ModelParams,
    spec: &ModelSpec,
    x: &[f64],
    n_passes: usize,
    seed: u64,
) -> Result<PredictiveDistribution> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let (m, s) = mc_dropout_predict_batch(params, spec, xv, n_passes, seed)?;
    Ok(rows_to_distributions(&m, &s).remove(0))
}

/// Prediction on `x` plus `n_aug` copies perturbed by `N(0, aug_sigma²)`
/// per feature (`aug_sigma` of length 1 broadcasts). σ̂² is the sample
/// variance of the copies' means, floored at the σ floor.
pub fn ttda_predict_batch(
    params: &ModelParams,
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    n_aug: usize,
    aug_sigma: &[f64],
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_input_width(spec, &x)?;
    let scale_of = |j: usize| -> Result<f64> {
        match aug_sigma.len() {
            1 => Ok(aug_sigma[0]),
            n if n == spec.input_dim => Ok(aug_sigma[j]),
            n => Err(LikaError::Usage(format!(
                "aug_sigma has {n} entries for {} features",
                spec.input_dim
            ))),
        }
    };
    let scales = (0..spec.input_dim).map(scale_of).collect::<Result<Vec<_>>>()?;
    if scales.iter().any(|s| s.is_nan() || *s < 0.0) {
        return Err(LikaError::Usage("aug_sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (base, _) = predict_batch(params, spec, x)?;
    let copies = n_aug + 1;
    let mut sum = base.clone();
    let mut sum_sq = base.mapv(|v| v * v);
    for _ in 0..n_aug {
        let mut xp = x.to_owned();
        for mut row in xp.rows_mut() {
            for (v, s) in row.iter_mut().zip(&scales) {
                *v += s * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let (m, _) = predict_batch(params, spec, xp.view())?;
        sum_sq += &m.mapv(|v| v * v);
        sum += &m;
    }
    let k = copies as f64;
    let mean = &sum / k;
    let sigma = if copies < 2 {
        Array2::from_elem(mean.dim(), SIGMA_FLOOR)
    } else {
        ndarray::Zip::from(&sum_sq)
            .and(&mean)
            .map_collect(|&sq, &m| ((sq - k * m * m) / (k - 1.0)).max(0.0).sqrt().max(SIGMA_FLOOR))
    };
    Ok((mean, sigma))
}

pub fn ttda_predict(
    params: &ModelParams,
    spec: &ModelSpec,
    x: &[f64],
    n_aug: usize,
    aug_sigma: &[f64],
    seed: u64,
) -> Result<PredictiveDistribution> {
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let (m, s) = ttda_predict_batch(params, spec, xv, n_aug, aug_sigma, seed)?;
    Ok(rows_to_distributions(&m, &s).remove(0))
}

/// Weight-prior penalty and its gradient added into `grads`.
fn apply_prior(weights: &[f64], grads: &mut [f64], prior: Prior, lambda: f64) -> f64 {
    match prior {
        Prior::Uniform => 0.0,
        Prior::Gaussian => {
            let mut pen = 0.0;
            for (g, &w) in grads.iter_mut().zip(weights) {
                pen += w * w;
                *g += 2.0 * lambda * w;
            }
            lambda * pen
        }
        Prior::Laplace => {
            let mut pen = 0.0;
            for (g, &w) in grads.iter_mut().zip(weights) {
                pen += w.abs();
                *g += lambda * if w > 0.0 { 1.0 } else if w < 0.0 { -1.0 } else { 0.0 };
            }
            lambda * pen
        }
    }
}

/// Loss terms of one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGrad {
    /// Mean per-coordinate objective.
    pub data_loss: f64,
    /// Weight-prior penalty.
    pub penalty: f64,
    pub grads: Vec<f64>,
}

impl BatchGrad {
    pub fn total(&self) -> f64 {
        self.data_loss + self.penalty
    }
}

#[allow(clippy::too_many_arguments)]
fn batch_grad_std<R: Rng>(
    spec: &ModelSpec,
    params: &ModelParams,
    x_std: ArrayView2<f64>,
    y: ArrayView2<f64>,
    objective: Objective,
    temps: TemperaturePair,
    prior: Prior,
    lambda: f64,
    dropout_rng: Option<&mut R>,
) -> Result<BatchGrad> {
    let cache = forward(spec, &params.weights, x_std, dropout_rng);
    let n = spec.output_dim;
    let count = (y.nrows() * n) as f64;
    let mut d_out = Array2::zeros(cache.out.dim());
    let mut total = 0.0;
    for i in 0..y.nrows() {
        for j in 0..n {
            let sc = params.scaler.target_scale[j];
            let y_hat = params.scaler.target_mean[j] + sc * cache.out[[i, j]];
            let raw = cache.out[[i, n + j]];
            let sigma = sc * softplus(raw) + SIGMA_FLOOR;
            let e = objective.eval(y_hat, y[[i, j]], sigma, temps)?;
            total += e.value;
            d_out[[i, j]] = e.d_mean * sc / count;
            d_out[[i, n + j]] = e.d_sigma * sc * sigmoid(raw) / count;
        }
    }
    let data_loss = total / count;
    if !data_loss.is_finite() {
        return Err(LikaError::numeric("non-finite batch loss"));
    }
    let mut grads = backward(spec, &params.weights, &cache, d_out);
    let penalty = apply_prior(&params.weights, &mut grads, prior, lambda);
    Ok(BatchGrad {
        data_loss,
        penalty,
        grads,
    })
}

/// Mean objective over the batch (plus prior penalty) and its exact
/// gradient with respect to every network parameter. Dropout is off.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss_and_grad(
    params: &ModelParams,
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    objective: Objective,
    temps: TemperaturePair,
    prior: Prior,
    lambda: f64,
) -> Result<BatchGrad> {
    check_params(spec, params)?;
    check_input_width(spec, &x)?;
    if y.nrows() != x.nrows() || y.ncols() != spec.output_dim {
        return Err(LikaError::Usage("target shape does not match inputs/model".into()));
    }
    let xs = params.scaler.transform_inputs(x);
    batch_grad_std::<ChaCha8Rng>(spec, params, xs.view(), y, objective, temps, prior, lambda, None)
}

/// Mean objective of deterministic predictions (no penalty).
fn mean_objective(
    objective: Objective,
    mean: &Array2<f64>,
    sigma: &Array2<f64>,
    y: &Array2<f64>,
    temps: TemperaturePair,
) -> Result<f64> {
    let mut total = 0.0;
    for ((m, s), t) in mean.iter().zip(sigma).zip(y) {
        total += objective.eval(*m, *t, *s, temps)?.value;
    }
    Ok(total / mean.len() as f64)
}

/// One per-epoch row of the training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub t2: f64,
    pub t3: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
    pub val_uce: f64,
    pub val_ece: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub const COLUMNS: [&'static str; 9] = [
        "epoch",
        "lr",
        "t2",
        "t3",
        "train_loss",
        "val_loss",
        "val_mae",
        "val_uce",
        "val_ece",
    ];

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn val_mae(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.val_mae).collect()
    }
}

/// Optimizer state and shuffled mini-batch loop for one network.
pub struct Trainer {
    spec: ModelSpec,
    objective: Objective,
    prior: Prior,
    prior_lambda: f64,
    batch_size: usize,
    grad_clip: Option<f64>,
    params: ModelParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    x_train: Array2<f64>,
    y_train: Array2<f64>,
    order: Vec<usize>,
}

impl Trainer {
    pub fn new(
        spec: &ModelSpec,
        train: &Dataset,
        config: &TrainConfig,
        scaler: Standardizer,
        seed: u64,
    ) -> Result<Self> {
        let mut params = init_model(spec, seed);
        params.scaler = scaler;
        let x_train = params.scaler.transform_inputs(train.inputs.view());
        let n = train.n_rows();
        Ok(Trainer {
            spec: spec.clone(),
            objective: config.method.objective(),
            prior: config.prior,
            prior_lambda: config.prior_lambda,
            batch_size: config.batch_size,
            grad_clip: config.grad_clip,
            adam: AdamState::new(params.weights.len()),
            params,
            // separate stream from initialization
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
            x_train,
            y_train: train.targets.clone(),
            order: (0..n).collect(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// One pass over the shuffled training rows; returns the mean batch
    /// objective (penalty excluded).
    pub fn run_epoch(&mut self, lr: f64, temps: TemperaturePair) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in self.order.chunks(self.batch_size) {
            let xb = self.x_train.select(Axis(0), chunk);
            let yb = self.y_train.select(Axis(0), chunk);
            let mut g = batch_grad_std(
                &self.spec,
                &self.params,
                xb.view(),
                yb.view(),
                self.objective,
                temps,
                self.prior,
                self.prior_lambda,
                Some(&mut self.rng),
            )?;
            if let Some(max_norm) = self.grad_clip {
                clip_grad_norm(&mut g.grads, max_norm);
            }
            self.adam.step(&mut self.params.weights, &g.grads, lr)?;
            total += g.data_loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    }
}

fn split_arrays(ds: &Dataset, split: Split) -> (Array2<f64>, Array2<f64>) {
    let idx = ds.indices(split);
    (ds.inputs.select(Axis(0), &idx), ds.targets.select(Axis(0), &idx))
}

/// Trains one network per seed in lock-step, all sharing the schedules and
/// the train-split standardizer. Validation columns of the trace describe
/// the members' combined (ensemble) prediction; losses are member means.
pub fn train_members(
    spec: &ModelSpec,
    dataset: &Dataset,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<(Vec<ModelParams>, TrainingTrace)> {
    config.validate()?;
    spec.validate()?;
    if seeds.is_empty() {
        return Err(LikaError::Usage("need at least one seed".into()));
    }
    if spec.input_dim != dataset.input_dim() || spec.output_dim != dataset.output_dim() {
        return Err(LikaError::Usage("model spec does not match dataset dimensions".into()));
    }
    let train = dataset.subset(Split::Train);
    let (x_val, y_val) = split_arrays(dataset, Split::Val);
    if train.n_rows() == 0 || x_val.nrows() == 0 {
        return Err(LikaError::Usage("training needs non-empty train and val splits".into()));
    }
    let scaler = Standardizer::fit(&train.inputs, &train.targets);
    let mut trainers = seeds
        .iter()
        .map(|&s| Trainer::new(spec, &train, config, scaler.clone(), s))
        .collect::<Result<Vec<_>>>()?;

    let objective = config.method.objective();
    let levels = default_ece_levels();
    let mut trace = TrainingTrace::default();
    let fail = |e: LikaError, trace: &TrainingTrace| match e {
        LikaError::Numeric { message, .. } => LikaError::Numeric {
            message,
            partial_trace: Some(Box::new(trace.clone())),
        },
        other => other,
    };

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr0, config.lr_min)?;
        let temps = config.temperatures_at(epoch)?;
        let mut train_loss = 0.0;
        let mut val_loss = 0.0;
        let k = trainers.len() as f64;
        let mut mean_acc = Array2::zeros(y_val.dim());
        let mut var_acc = Array2::zeros(y_val.dim());
        for t in trainers.iter_mut() {
            train_loss += t.run_epoch(lr, temps).map_err(|e| fail(e, &trace))?;
            let (m, s) = predict_batch(t.params(), spec, x_val.view()).map_err(|e| fail(e, &trace))?;
            val_loss += mean_objective(objective, &m, &s, &y_val, temps).map_err(|e| fail(e, &trace))?;
            mean_acc += &m;
            var_acc += &s.mapv(|v| v * v);
        }
        let batch = EvalBatch::new(mean_acc / k, (var_acc / k).mapv(f64::sqrt), y_val.clone())
            .map_err(|e| fail(e, &trace))?;
        let record = EpochRecord {
            epoch: epoch + 1,
            lr,
            t2: temps.t2,
            t3: temps.t3,
            train_loss: train_loss / k,
            val_loss: val_loss / k,
            val_mae: regression_metrics(&batch)?.mae,
            val_uce: uce(&batch, config.bins)?.0,
            val_ece: ece(&batch, &levels)?,
        };
        if !(record.train_loss.is_finite() && record.val_loss.is_finite()) {
            return Err(fail(LikaError::numeric(format!("loss diverged at epoch {}", epoch + 1)), &trace));
        }
        trace.records.push(record);
    }
    Ok((trainers.into_iter().map(Trainer::into_params).collect(), trace))
}

/// Trains a single network seeded with `config.seed`.
pub fn train(spec: &ModelSpec, dataset: &Dataset, config: &TrainConfig) -> Result<(ModelParams, TrainingTrace)> {
    let (mut members, trace) = train_members(spec, dataset, config, &[config.seed])?;
    Ok((members.remove(0), trace))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model: spec plus every member's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Checkpoint {
    pub version: u32,
    pub spec: ModelSpec,
    pub members: Vec<ModelParams>,
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, members: Vec<ModelParams>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            spec,
            members,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, json)
            .map_err(|e| LikaError::Data(format!("cannot write {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| LikaError::Data(format!("cannot read {}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| LikaError::Data(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(LikaError::Data(format!(
                "{}: checkpoint version {} not supported",
                path.display(),
                ck.version
            )));
        }
        for m in &ck.members {
            check_params(&ck.spec, m).map_err(|e| LikaError::Data(e.to_string()))?;
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::grad_check;
    use ndarray::array;

    fn tiny_spec() -> ModelSpec {
        ModelSpec::new(2, 1, vec![5, 4]).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let spec = tiny_spec();
        let a = init_model(&spec, 7);
        assert_eq!(a, init_model(&spec, 7));
        assert_ne!(a.weights, init_model(&spec, 8).weights);
        assert_eq!(a.weights.len(), spec.n_params());
        assert_eq!(spec.layer_shapes().last().unwrap().1, spec.head_len());
    }

    #[test]
    fn initial_sigma_near_one() {
        let spec = ModelSpec::new(1, 1, vec![8]).unwrap();
        let p = init_model(&spec, 1);
        let d = predict(&p, &spec, &[0.0]).unwrap();
        // zero input, zero biases: hidden = 0 so the σ head is exactly its bias
        assert!((d.sigma[0] - 1.0 - SIGMA_FLOOR).abs() < 1e-12);
    }

    #[test]
    fn predict_shapes_and_positivity() {
        let spec = tiny_spec();
        let mut p = init_model(&spec, 3);
        // push the σ head strongly negative
        let n = p.weights.len();
        p.weights[n - 1] = -800.0;
        let x = array![[0.1, 0.2], [100.0, -3.0], [0.0, 0.0]];
        let (m, s) = predict_batch(&p, &spec, x.view()).unwrap();
        assert_eq!(m.dim(), (3, 1));
        assert!(s.iter().all(|&v| v >= SIGMA_FLOOR && v.is_finite()));
        for i in 0..3 {
            let single = predict(&p, &spec, x.row(i).as_slice().unwrap()).unwrap();
            assert_eq!(single.mean[0], m[[i, 0]]);
        }
        assert!(predict(&p, &spec, &[1.0]).is_err());
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let spec = tiny_spec();
        let p = init_model(&spec, 11);
        let x = array![[0.3, -1.0], [1.2, 0.4], [-0.7, 0.9]];
        let y = array![[0.5], [-0.2], [1.1]];
        let temps = TemperaturePair::new(0.7, 1.3).unwrap();
        for obj in Objective::ALL {
            let g = batch_loss_and_grad(&p, &spec, x.view(), y.view(), obj, temps, Prior::Gaussian, 1e-3)
                .unwrap();
            let r = grad_check(
                |w| {
                    let q = ModelParams {
                        weights: w.to_vec(),
                        scaler: p.scaler.clone(),
                    };
                    batch_loss_and_grad(&q, &spec, x.view(), y.view(), obj, temps, Prior::Gaussian, 1e-3)
                        .unwrap()
                        .total()
                },
                &p.weights,
                &g.grads,
            );
            assert!(r.passes(1e-4), "{obj:?}: {r:?}");
        }
    }

    #[test]
    fn ensemble_of_identical_members() {
        let spec = tiny_spec();
        let p = init_model(&spec, 2);
        let single = predict(&p, &spec, &[0.4, -0.1]).unwrap();
        let ens = ensemble_predict(&[p.clone(), p.clone(), p.clone()], &spec, &[0.4, -0.1]).unwrap();
        assert!((ens.mean[0] - single.mean[0]).abs() < 1e-12);
        assert!((ens.sigma[0] - single.sigma[0]).abs() < 1e-12);
        assert!(ensemble_predict(&[], &spec, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn ensemble_averages_means() {
        let spec = ModelSpec::new(1, 1, vec![2]).unwrap();
        let mut a = init_model(&spec, 1);
        let mut b = a.clone();
        // output layer mean bias sits right before the σ bias
        let n = a.weights.len();
        a.weights[n - 2] = 1.0;
        b.weights[n - 2] = 3.0;
        let e = ensemble_predict(&[a, b], &spec, &[0.0]).unwrap();
        assert!((e.mean[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mc_dropout_behaviour() {
        let spec = tiny_spec();
        let p = init_model(&spec, 5);
        let det = predict(&p, &spec, &[0.5, 0.5]).unwrap();
        let mc = mc_dropout_predict(&p, &spec, &[0.5, 0.5], 10, 1).unwrap();
        assert_eq!(det, mc);
        let dspec = ModelSpec {
            dropout_rate: 0.3,
            ..tiny_spec()
        };
        let a = mc_dropout_predict(&p, &dspec, &[0.5, 0.5], 50, 9).unwrap();
        assert_eq!(a, mc_dropout_predict(&p, &dspec, &[0.5, 0.5], 50, 9).unwrap());
        assert!(a.sigma[0] >= SIGMA_FLOOR);
    }

    #[test]
    fn ttda_behaviour() {
        let spec = tiny_spec();
        let p = init_model(&spec, 5);
        let det = predict(&p, &spec, &[0.5, 0.5]).unwrap();
        let t = ttda_predict(&p, &spec, &[0.5, 0.5], 8, &[0.0], 3).unwrap();
        assert!((t.mean[0] - det.mean[0]).abs() < 1e-12);
        assert_eq!(t.sigma[0], SIGMA_FLOOR);
        let a = ttda_predict(&p, &spec, &[0.5, 0.5], 8, &[0.3, 0.1], 3).unwrap();
        assert_eq!(a, ttda_predict(&p, &spec, &[0.5, 0.5], 8, &[0.3, 0.1], 3).unwrap());
        assert!(a.sigma[0] > SIGMA_FLOOR);
    }

    #[test]
    fn checkpoint_roundtrip_is_lossless() {
        let spec = tiny_spec();
        let mut p = init_model(&spec, 4);
        p.weights[0] = 0.1 + 0.2;
        p.weights[1] = 1.0 / 3.0;
        let ck = Checkpoint::new(spec, vec![p]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), ck);
    }
}
