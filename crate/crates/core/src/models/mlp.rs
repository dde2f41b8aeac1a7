//! Fully connected rectifier network with identity output, trained with Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Sample;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Rows per block when evaluating large sets.
const EVAL_BLOCK: usize = 2048;

/// Weights are stored `out x in`, so layer `k` computes `W_k z + b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRepr {
    layer_sizes: Vec<usize>,
    /// Row-major `out x in` per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<MlpModel> for MlpRepr {
    fn from(m: MlpModel) -> Self {
        Self {
            weights: m.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            layer_sizes: m.layer_sizes,
        }
    }
}

impl TryFrom<MlpRepr> for MlpModel {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        check_sizes(&r.layer_sizes)?;
        let layers = r.layer_sizes.len() - 1;
        if r.weights.len() != layers || r.biases.len() != layers {
            return Err(Error::Contract(format!(
                "expected {layers} weight and bias blocks, found {} and {}",
                r.weights.len(),
                r.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (k, (w, b)) in r.weights.into_iter().zip(r.biases).enumerate() {
            let (rows, cols) = (r.layer_sizes[k + 1], r.layer_sizes[k]);
            let w = Array2::from_shape_vec((rows, cols), w)
                .map_err(|_| Error::Contract(format!("layer {k} weights are not {rows}x{cols}")))?;
            if b.len() != rows {
                return Err(Error::Contract(format!("layer {k} bias has length {}, expected {rows}", b.len())));
            }
            weights.push(w);
            biases.push(Array1::from(b));
        }
        let m = MlpModel {
            layer_sizes: r.layer_sizes,
            weights,
            biases,
        };
        m.validate()?;
        Ok(m)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Contract(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}

/// Gradient with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpModel {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// He-uniform weights, zero hidden biases, output bias set to
    /// `output_bias` when given.
    pub fn init<R: Rng>(layer_sizes: &[usize], rng: &mut R, output_bias: Option<&[f64]>) -> Result<Self> {
        let mut m = Self::zeros(layer_sizes)?;
        for w in &mut m.weights {
            let limit = (6.0 / w.ncols() as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
        }
        if let Some(b) = output_bias {
            let last = m.biases.last_mut().expect("at least one layer");
            if b.len() != last.len() {
                return Err(Error::Contract("output bias has wrong length".into()));
            }
            last.assign(&ArrayView1::from(b));
        }
        Ok(m)
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        let mut sizes = vec![weights.first().map_or(0, |w| w.ncols())];
        sizes.extend(weights.iter().map(|w| w.nrows()));
        let m = Self {
            layer_sizes: sizes,
            weights,
            biases,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        check_sizes(&self.layer_sizes)?;
        let layers = self.layer_sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Contract("layer count mismatch".into()));
        }
        for k in 0..layers {
            let (o, i) = (self.layer_sizes[k + 1], self.layer_sizes[k]);
            if self.weights[k].dim() != (o, i) || self.biases[k].len() != o {
                return Err(Error::Contract(format!("layer {k} shapes do not chain")));
            }
        }
        let finite = self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Contract("non-finite network parameter".into()));
        }
        Ok(())
    }

    /// Parameters flattened layer by layer, weights (row-major) then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut it = p.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut z = Array1::from(x.to_vec());
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            z = w.dot(&z) + b;
            if k < last {
                z.mapv_inplace(relu);
            }
        }
        Ok(z.to_vec())
    }

    /// Forward pass over a row-per-sample batch.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "batch width does not match network input");
        let last = self.weights.len() - 1;
        let mut z = x.to_owned();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            z = z.dot(&w.t()) + b;
            if k < last {
                z.mapv_inplace(relu);
            }
        }
        z
    }

    /// Mean squared error over every output of every row.
    pub fn mse(&self, data: &TrainData) -> f64 {
        let n = data.len();
        if n == 0 {
            return f64::NAN;
        }
        let mut sse = 0.0;
        let mut start = 0;
        while start < n {
            let end = (start + EVAL_BLOCK).min(n);
            let rows = ndarray::s![start..end, ..];
            let out = self.forward_batch(data.x.slice(rows));
            sse += Zip::from(&out)
                .and(&data.y.slice(rows))
                .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
            start = end;
        }
        sse / (n * self.output_dim()) as f64
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Inverted-dropout mask: each unit is kept with probability `1 - rate` and
/// scaled by `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng>(shape: (usize, usize), rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { scale } else { 0.0 })
}

/// Mean squared error of a batch and its gradient.
///
/// With `dropout = Some((rate, rng))` a fresh mask is drawn for every hidden
/// activation in the batch.
pub fn loss_and_gradient<R: Rng>(
    model: &MlpModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    mut dropout: Option<(f64, &mut R)>,
) -> (f64, MlpGrad) {
    let layers = model.weights.len();
    let batch = x.nrows();
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(layers);
    // Derivative of each hidden activation w.r.t. its pre-activation,
    // including the dropout scale.
    let mut gates: Vec<Array2<f64>> = Vec::with_capacity(layers - 1);
    acts.push(x.to_owned());
    for k in 0..layers - 1 {
        let pre = acts[k].dot(&model.weights[k].t()) + &model.biases[k];
        let mut gate = pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        if let Some((rate, rng)) = dropout.as_mut() {
            if *rate > 0.0 {
                gate *= &dropout_mask(pre.dim(), *rate, *rng);
            }
        }
        acts.push(pre * &gate);
        gates.push(gate);
    }
    let out = acts[layers - 1].dot(&model.weights[layers - 1].t()) + &model.biases[layers - 1];
    let mut delta = out - &y;
    let denom = (batch * model.output_dim()) as f64;
    let loss = delta.iter().map(|d| d * d).sum::<f64>() / denom;
    delta *= 2.0 / denom;

    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    for k in (0..layers).rev() {
        gw[k] = delta.t().dot(&acts[k]).as_standard_layout().into_owned();
        gb[k] = delta.sum_axis(Axis(0));
        if k > 0 {
            delta = delta.dot(&model.weights[k]) * &gates[k - 1];
        }
    }
    (
        loss,
        MlpGrad {
            weights: gw,
            biases: gb,
        },
    )
}

/// Inputs and 6-horizon targets, one row per sample.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl TrainData {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Contract(format!("{} inputs but {} targets", x.nrows(), y.nrows())));
        }
        Ok(Self { x, y })
    }

    pub fn from_samples(samples: &[Sample]) -> Self {
        let dim = samples.first().map_or(0, |s| s.x.len());
        let horizons = samples.first().map_or(0, |s| s.y.len());
        let x = Array2::from_shape_fn((samples.len(), dim), |(i, j)| samples[i].x[j]);
        let y = Array2::from_shape_fn((samples.len(), horizons), |(i, j)| samples[i].y[j]);
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    /// Plain gradient descent at the configured learning rate.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.16e-3,
            dropout: 0.14,
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            n_starts: 4,
            seed: 2018,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Parameter("batch size and max epochs must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Parameter(format!(
                "patience ({}) must be below max epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.n_starts == 0 {
            return Err(Error::Parameter("n_starts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub starts: Vec<StartTrace>,
    pub chosen_start: usize,
}

impl TrainTrace {
    pub fn best_val_mse(&self) -> f64 {
        let s = &self.starts[self.chosen_start];
        s.val_mse[s.best_epoch.expect("chosen start has a best epoch")]
    }
}

fn start_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    rng
}

struct Adam {
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

fn apply_update(model: &mut MlpModel, grad: &MlpGrad, lr: f64, opt: Option<&mut Adam>) {
    let mut blocks: Vec<(&mut [f64], &[f64])> = Vec::with_capacity(2 * model.weights.len());
    for ((w, b), (gw, gb)) in model
        .weights
        .iter_mut()
        .zip(model.biases.iter_mut())
        .zip(grad.weights.iter().zip(&grad.biases))
    {
        blocks.push((w.as_slice_mut().unwrap(), gw.as_slice().unwrap()));
        blocks.push((b.as_slice_mut().unwrap(), gb.as_slice().unwrap()));
    }
    match opt {
        Some(adam) => {
            adam.step += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(adam.step);
            let c2 = 1.0 - ADAM_BETA2.powi(adam.step);
            let mut offset = 0;
            for (p, g) in blocks {
                let n = p.len();
                let m = &mut adam.m[offset..offset + n];
                let v = &mut adam.v[offset..offset + n];
                for i in 0..n {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
                offset += n;
            }
        }
        None => {
            for (p, g) in blocks {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
        }
    }
}

fn train_one_start(
    train: &TrainData,
    val: &TrainData,
    arch: &[usize],
    cfg: &TrainConfig,
    start: usize,
) -> Result<(Option<MlpModel>, StartTrace)> {
    let mut rng = start_rng(cfg.seed, start);
    let n = train.len();
    let y_mean: Vec<f64> = train.y.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let mut model = MlpModel::init(arch, &mut rng, Some(&y_mean))?;
    let mut adam = Adam::new(model.n_params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = StartTrace {
        train_mse: Vec::new(),
        val_mse: Vec::new(),
        best_epoch: None,
        aborted: None,
    };
    let mut best: Option<(f64, MlpModel)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.x.select(Axis(0), chunk);
            let yb = train.y.select(Axis(0), chunk);
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
            let (loss, grad) = loss_and_gradient(&model, xb.view(), yb.view(), dropout);
            if !loss.is_finite() {
                trace.aborted = Some(format!("non-finite training loss at epoch {epoch}"));
                return Ok((None, trace));
            }
            sum_loss += loss * chunk.len() as f64;
            let opt = match cfg.optimizer {
                Optimizer::Adam => Some(&mut adam),
                Optimizer::Sgd => None,
            };
            apply_update(&mut model, &grad, cfg.learning_rate, opt);
        }
        let val_mse = model.mse(val);
        trace.train_mse.push(sum_loss / n as f64);
        trace.val_mse.push(val_mse);
        if !val_mse.is_finite() {
            trace.aborted = Some(format!("non-finite validation loss at epoch {epoch}"));
            return Ok((None, trace));
        }
        if best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            best = Some((val_mse, model.clone()));
            trace.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.map(|b| b.1), trace))
}

/// Multi-start training with early stopping.
///
/// Starts run in parallel, each with its own RNG stream derived from
/// `(cfg.seed, start index)`. The start with the lowest best validation MSE
/// wins (ties go to the lower index) and is returned at its best epoch.
pub fn mlp_train(train: &TrainData, val: &TrainData, arch: &[usize], cfg: &TrainConfig) -> Result<(MlpModel, TrainTrace)> {
    cfg.validate()?;
    check_sizes(arch)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Parameter("training and validation sets must be non-empty".into()));
    }
    if train.x.ncols() != arch[0] || val.x.ncols() != arch[0] {
        return Err(Error::Contract(format!(
            "feature width {} does not match input layer {}",
            train.x.ncols(),
            arch[0]
        )));
    }
    let out = *arch.last().unwrap();
    if train.y.ncols() != out || val.y.ncols() != out {
        return Err(Error::Contract(format!("target width does not match output layer {out}")));
    }
    let results: Vec<Result<(Option<MlpModel>, StartTrace)>> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|s| train_one_start(train, val, arch, cfg, s))
        .collect();
    let mut starts = Vec::with_capacity(cfg.n_starts);
    let mut chosen: Option<(usize, f64, MlpModel)> = None;
    for (s, r) in results.into_iter().enumerate() {
        let (model, trace) = r?;
        if let (Some(m), Some(e)) = (model, trace.best_epoch) {
            let v = trace.val_mse[e];
            if chosen.as_ref().is_none_or(|c| v < c.1) {
                chosen = Some((s, v, m));
            }
        }
        if let Some(reason) = &trace.aborted {
            log::warn!("start {s} aborted: {reason}");
        }
        starts.push(trace);
    }
    let (chosen_start, _, model) = chosen.ok_or_else(|| Error::Training("every start diverged".into()))?;
    Ok((model, TrainTrace { starts, chosen_start }))
}
