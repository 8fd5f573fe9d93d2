//! Small deterministic network: dense, ReLU, 1×1 convolution and global
//! average pooling with manual backprop, classic-momentum SGD, reduce-on-plateau
//! scheduling, and a Gaussian-blob dataset generator.
//!
//! Spatial inputs are stored one sample per row as `pixels × channels`,
//! channel-fastest, so a batch of feature maps is an `N × (H·W·C)` matrix.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{evaluate_logits, LossSpec};
use crate::matrix::Matrix;
use crate::metrics::{metric_report, MetricReport};
use crate::prob::{softmax_rows, PredictionMatrix, TargetMatrix};
use crate::rng::{seeded_rng, Rng as StdRng};

const CHECKPOINT_MAGIC: &str = "lossbench-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `x·W + b` with `W` of shape in×out.
    Dense { weights: Matrix, bias: Vec<f64> },
    Relu,
    /// Per-pixel `x_p·W + b` with `W` of shape c_in×c_out.
    Conv1x1 { weights: Matrix, bias: Vec<f64> },
    /// Mean over pixels of each of `channels` channels.
    GlobalAvgPool { channels: usize },
}

impl Layer {
    fn glorot(rng: &mut StdRng, fan_in: usize, fan_out: usize) -> Matrix {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        Matrix::from_vec(fan_in, fan_out, data).expect("sized")
    }

    pub fn dense(rng: &mut StdRng, inputs: usize, outputs: usize) -> Self {
        Layer::Dense {
            weights: Self::glorot(rng, inputs, outputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn conv1x1(rng: &mut StdRng, in_channels: usize, out_channels: usize) -> Self {
        Layer::Conv1x1 {
            weights: Self::glorot(rng, in_channels, out_channels),
            bias: vec![0.0; out_channels],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Conv1x1 { .. } => "conv1x1",
            Layer::GlobalAvgPool { .. } => "gap",
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense { weights, bias } => {
                if x.cols() != weights.rows() {
                    return Err(Error::Shape(format!(
                        "dense layer expects {} inputs, got {}",
                        weights.rows(),
                        x.cols()
                    )));
                }
                let mut out = x.matmul(weights)?;
                add_bias(&mut out, bias);
                Ok(out)
            }
            Layer::Relu => {
                let mut out = x.clone();
                out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
                Ok(out)
            }
            Layer::Conv1x1 { weights, bias } => {
                let cin = weights.rows();
                let pixels = pixel_count(x.cols(), cin, "conv1x1")?;
                let flat = Matrix::from_vec(x.rows() * pixels, cin, x.as_slice().to_vec())?;
                let mut out = flat.matmul(weights)?;
                add_bias(&mut out, bias);
                Matrix::from_vec(x.rows(), pixels * weights.cols(), out.into_vec())
            }
            Layer::GlobalAvgPool { channels } => {
                let pixels = pixel_count(x.cols(), *channels, "gap")?;
                let mut out = Matrix::zeros(x.rows(), *channels);
                for r in 0..x.rows() {
                    let o = out.row_mut(r);
                    for px in x.row(r).chunks(*channels) {
                        for (oc, v) in o.iter_mut().zip(px) {
                            *oc += v;
                        }
                    }
                    o.iter_mut().for_each(|v| *v /= pixels as f64);
                }
                Ok(out)
            }
        }
    }

    /// Returns the input gradient and appends parameter gradients to `grads`.
    fn backward(&self, input: &Matrix, grad_out: &Matrix, grads: &mut Vec<f64>) -> Result<Matrix> {
        match self {
            Layer::Dense { weights, .. } => {
                let dw = input.t_matmul(grad_out)?;
                grads.extend_from_slice(dw.as_slice());
                grads.extend(column_sums(grad_out));
                grad_out.matmul_t(weights)
            }
            Layer::Relu => {
                let mut g = grad_out.clone();
                for (gv, &xv) in g.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                Ok(g)
            }
            Layer::Conv1x1 { weights, .. } => {
                let (cin, cout) = weights.shape();
                let pixels = input.cols() / cin;
                let n = input.rows();
                let x = Matrix::from_vec(n * pixels, cin, input.as_slice().to_vec())?;
                let g = Matrix::from_vec(n * pixels, cout, grad_out.as_slice().to_vec())?;
                let dw = x.t_matmul(&g)?;
                grads.extend_from_slice(dw.as_slice());
                grads.extend(column_sums(&g));
                let dx = g.matmul_t(weights)?;
                Matrix::from_vec(n, pixels * cin, dx.into_vec())
            }
            Layer::GlobalAvgPool { channels } => {
                let pixels = input.cols() / channels;
                let mut dx = Matrix::zeros(input.rows(), input.cols());
                for r in 0..input.rows() {
                    let g = grad_out.row(r);
                    for px in dx.row_mut(r).chunks_mut(*channels) {
                        for (d, gv) in px.iter_mut().zip(g) {
                            *d = gv / pixels as f64;
                        }
                    }
                }
                Ok(dx)
            }
        }
    }
}

fn pixel_count(cols: usize, channels: usize, what: &str) -> Result<usize> {
    if channels == 0 || cols % channels != 0 || cols == 0 {
        return Err(Error::Shape(format!(
            "{what}: {cols} inputs are not a whole number of {channels}-channel pixels"
        )));
    }
    Ok(cols / channels)
}

fn add_bias(m: &mut Matrix, bias: &[f64]) {
    for r in 0..m.rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Ordered stack of layers ending in class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub seed: u64,
}

/// Logits plus the input seen by every layer.
pub struct ForwardPass {
    pub logits: Matrix,
    caches: Vec<Matrix>,
}

/// Parameter gradients flattened in [`Network::params`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Matrix,
}

impl Network {
    /// Dense layers of the given widths with ReLU in between, Glorot-uniform init.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid("dims", "need ≥ 2 positive layer widths"));
        }
        let mut rng = seeded_rng(seed);
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            layers.push(Layer::dense(&mut rng, w[0], w[1]));
        }
        Ok(Self { layers, seed })
    }

    /// 1×1 convolution to `reduced` channels, global average pool, dense to `classes`.
    pub fn fusion_head(in_channels: usize, reduced: usize, classes: usize, seed: u64) -> Result<Self> {
        if in_channels == 0 || reduced == 0 || classes < 2 {
            return Err(Error::invalid("fusion_head", "channel counts must be ≥ 1 and classes ≥ 2"));
        }
        let mut rng = seeded_rng(seed);
        Ok(Self {
            layers: vec![
                Layer::conv1x1(&mut rng, in_channels, reduced),
                Layer::GlobalAvgPool { channels: reduced },
                Layer::dense(&mut rng, reduced, classes),
            ],
            seed,
        })
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            caches.push(cur);
            cur = next;
        }
        Ok(ForwardPass { logits: cur, caches })
    }

    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Matrix) -> Result<Gradients> {
        if grad_logits.shape() != pass.logits.shape() {
            return Err(Error::Shape(format!(
                "grad {:?} vs logits {:?}",
                grad_logits.shape(),
                pass.logits.shape()
            )));
        }
        // collected back to front, then reordered to match params()
        let mut per_layer: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_logits.clone();
        for (layer, input) in self.layers.iter().zip(&pass.caches).rev() {
            let mut lg = Vec::new();
            g = layer.backward(input, &g, &mut lg)?;
            per_layer.push(lg);
        }
        per_layer.reverse();
        Ok(Gradients {
            params: per_layer.concat(),
            input: g,
        })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        softmax_rows(&self.forward(x)?.logits)
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Dense { weights, bias } | Layer::Conv1x1 { weights, bias } = layer {
                out.push(weights.as_slice());
                out.push(bias.as_slice());
            }
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Dense { weights, bias } | Layer::Conv1x1 { weights, bias } = layer {
                out.push(weights.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        out
    }

    /// All parameters flattened: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&values[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        for layer in &self.layers {
            match layer {
                Layer::Dense { weights, bias } | Layer::Conv1x1 { weights, bias } => {
                    writeln!(s, "{} {} {}", layer.name(), weights.rows(), weights.cols()).unwrap();
                    writeln!(s, "{}", join(weights.as_slice())).unwrap();
                    writeln!(s, "{}", join(bias)).unwrap();
                }
                Layer::Relu => writeln!(s, "relu").unwrap(),
                Layer::GlobalAvgPool { channels } => writeln!(s, "gap {channels}").unwrap(),
            }
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((_, Err(e))) => Err(Error::Io(e)),
                None => Err(Error::Parse(format!("checkpoint ended early, expected {what}"))),
            }
        };
        let bad = |line: usize, msg: String| Error::Parse(format!("checkpoint line {line}: {msg}"));
        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| bad(ln, "not a lossbench checkpoint".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(ln, format!("unsupported version {version}")));
        }
        let (ln, seed_line) = next("seed")?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(ln, "expected `seed <u64>`".into()))?;
        let (ln, count_line) = next("layer count")?;
        let count: usize = count_line
            .strip_prefix("layers ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(ln, "expected `layers <count>`".into()))?;
        let floats = |ln: usize, s: &str, expect: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(ln, format!("bad number `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != expect {
                return Err(bad(ln, format!("expected {expect} values, got {}", v.len())));
            }
            Ok(v)
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, spec) = next("layer")?;
            let parts: Vec<&str> = spec.split_whitespace().collect();
            let dims = |i: usize| -> Result<usize> {
                parts
                    .get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(ln, format!("bad layer header `{spec}`")))
            };
            let layer = match parts.first().copied() {
                Some(kind @ ("dense" | "conv1x1")) => {
                    let (r, c) = (dims(1)?, dims(2)?);
                    let (wl, w) = next("weights")?;
                    let weights = Matrix::from_vec(r, c, floats(wl, &w, r * c)?)?;
                    let (bl, b) = next("bias")?;
                    let bias = floats(bl, &b, c)?;
                    if kind == "dense" {
                        Layer::Dense { weights, bias }
                    } else {
                        Layer::Conv1x1 { weights, bias }
                    }
                }
                Some("relu") => Layer::Relu,
                Some("gap") => Layer::GlobalAvgPool { channels: dims(1)? },
                _ => return Err(bad(ln, format!("unknown layer `{spec}`"))),
            };
            layers.push(layer);
        }
        let net = Self { layers, seed };
        if !net.all_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(net)
    }
}

/// Classic momentum: `v ← μ·v + g`, `p ← p − lr·v`.
pub fn sgd_momentum_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "{} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    if !(lr > 0.0) {
        return Err(Error::invalid("lr", format!("{lr} must be > 0")));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} ({})", grads[i])));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Multiplies the learning rate by `factor` after `patience` epochs without a
/// new best validation loss, never going below `min_lr`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            min_lr,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's validation loss and returns the rate for the next epoch.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub lr: f64,
    pub momentum: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl TrainConfig {
    pub fn new(loss: LossSpec) -> Self {
        Self {
            loss,
            lr: 1e-3,
            momentum: 0.9,
            plateau_factor: 0.5,
            plateau_patience: 5,
            min_lr: 1e-6,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            validation_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must be in [0,1)"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::invalid("plateau_factor", "must be in (0,1]"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction", "must be in (0,1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be ≥ 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Features with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::invalid("classes", "need at least two"));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid("labels", format!("label {l} out of range")));
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("features".into()));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Gaussian blobs, one per class, centred at `separation · e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDatasetConfig {
    pub class_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub dim: usize,
    pub separation: f64,
    /// Per-class standard deviation.
    pub spreads: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticDatasetConfig {
    fn default() -> Self {
        Self {
            class_counts: vec![1349, 2538, 1345],
            test_counts: vec![234, 242, 148],
            dim: 16,
            separation: 3.0,
            spreads: vec![1.0; 3],
            seed: 0,
        }
    }
}

impl SyntheticDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let k = self.class_counts.len();
        if k < 2 {
            return Err(Error::invalid("class_counts", "need at least two classes"));
        }
        if self.test_counts.len() != k || self.spreads.len() != k {
            return Err(Error::invalid("test_counts", "test_counts and spreads need one entry per class"));
        }
        if self.class_counts.contains(&0) {
            return Err(Error::invalid("class_counts", "every class needs ≥ 1 sample"));
        }
        if self.dim < k {
            return Err(Error::invalid("dim", format!("must be ≥ number of classes ({k})")));
        }
        if self.spreads.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("spreads", "must be > 0"));
        }
        if !self.separation.is_finite() {
            return Err(Error::invalid("separation", "must be finite"));
        }
        Ok(())
    }
}

fn blobs(cfg: &SyntheticDatasetConfig, counts: &[usize], rng: &mut StdRng) -> Result<Dataset> {
    let k = counts.len();
    let n: usize = counts.iter().sum();
    let mut data = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for d in 0..cfg.dim {
                let mean = if d == class { cfg.separation } else { 0.0 };
                let z: f64 = rng.sample(StandardNormal);
                data.push(mean + cfg.spreads[class] * z);
            }
            labels.push(class);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let features = Matrix::from_vec(n, cfg.dim, data)?.select_rows(&order);
    let labels = order.iter().map(|&i| labels[i]).collect();
    Dataset::new(features, labels, k)
}

/// Deterministic (train, test) pair.
pub fn generate_dataset(cfg: &SyntheticDatasetConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let train = blobs(cfg, &cfg.class_counts, &mut rng)?;
    let test = if cfg.test_counts.iter().sum::<usize>() == 0 {
        Dataset {
            features: Matrix::zeros(0, cfg.dim),
            labels: Vec::new(),
            classes: cfg.class_counts.len(),
        }
    } else {
        blobs(cfg, &cfg.test_counts, &mut rng)?
    };
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr\n");
    for h in history {
        writeln!(s, "{},{:?},{:?},{:?}", h.epoch, h.train_loss, h.val_loss, h.lr).unwrap();
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation loss.
    pub model: Network,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub test_predictions: Option<PredictionMatrix>,
}

/// Loss value of `model` on a whole dataset.
pub fn dataset_loss(model: &Network, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    let pass = model.forward(&data.features)?;
    let targets = TargetMatrix::one_hot(&data.labels, data.classes)?;
    Ok(evaluate_logits(loss, &pass.logits, &targets)?.value)
}

pub fn predict(model: &Network, data: &Dataset) -> Result<PredictionMatrix> {
    let probs = model.predict_proba(&data.features)?;
    PredictionMatrix::with_default_ids(probs, Some(data.labels.clone()))
}

/// Mini-batch training with a seeded validation hold-out and plateau schedule.
pub fn train(mut model: Network, data: &Dataset, test: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::invalid("data", "need at least two training samples"));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * cfg.validation_fraction).ceil() as usize).clamp(1, data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val = data.subset(val_idx);
    let mut train_idx = train_idx.to_vec();

    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_lr);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 0..cfg.epochs {
        let lr = sched.lr();
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let x = data.features.select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let targets = TargetMatrix::one_hot(&labels, data.classes)?;
            let pass = model.forward(&x)?;
            let report = evaluate_logits(&cfg.loss, &pass.logits, &targets)?;
            let grads = model.backward(&pass, &report.grad_logits)?;
            sgd_momentum_step(&mut params, &grads.params, &mut velocity, lr, cfg.momentum)?;
            model.set_params(&params)?;
            total += report.value * batch.len() as f64;
        }
        let train_loss = total / train_idx.len() as f64;
        let val_loss = dataset_loss(&model, &val, &cfg.loss)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
        }
        sched.observe(val_loss);
    }

    let (_, best_epoch, model) = best.expect("at least one epoch");
    let test_predictions = match test {
        Some(t) if !t.is_empty() => Some(predict(&model, t)?),
        _ => None,
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
        test_predictions,
    })
}

/// One trained model per loss in a multi-loss experiment.
#[derive(Debug, Clone)]
pub struct LossRun {
    pub spec: LossSpec,
    pub outcome: TrainOutcome,
    pub predictions: PredictionMatrix,
    pub report: MetricReport,
}

/// Trains one model per loss with shared seed and architecture; results are
/// sorted by test MCC, best first (ties keep input order).
pub fn run_multiloss_experiment(
    train_data: &Dataset,
    test_data: &Dataset,
    specs: &[LossSpec],
    template: &TrainConfig,
    hidden: &[usize],
) -> Result<Vec<LossRun>> {
    if specs.is_empty() {
        return Err(Error::invalid("losses", "need at least one loss spec"));
    }
    if test_data.is_empty() {
        return Err(Error::invalid("test", "test split is empty"));
    }
    let mut dims = vec![train_data.features.cols()];
    dims.extend_from_slice(hidden);
    dims.push(train_data.classes);

    let mut runs = specs
        .par_iter()
        .map(|spec| -> Result<LossRun> {
            let cfg = TrainConfig {
                loss: *spec,
                ..template.clone()
            };
            let model = Network::mlp(&dims, template.seed)?;
            let outcome = train(model, train_data, Some(test_data), &cfg)?;
            let predictions = outcome.test_predictions.clone().expect("test split present");
            let report = metric_report(&predictions)?;
            Ok(LossRun {
                spec: *spec,
                outcome,
                predictions,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| b.report.mcc.total_cmp(&a.report.mcc));
    Ok(runs)
}
