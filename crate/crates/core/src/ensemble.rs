//! Prediction-level ensembles (vote, average, fitted weighted average,
//! stacking) and a model-level fusion head over concatenated feature maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{evaluate_logits, relative_error, LossFamily, LossSpec};
use crate::matrix::Matrix;
use crate::nn::{self, Dataset, Layer, Network, TrainConfig};
use crate::prob::{argmax, ClassDistribution, PredictionMatrix, TargetMatrix, PROB_FLOOR};
use crate::rng::seeded_rng;

const SIMPLEX_TOL: f64 = 1e-9;
const MAX_EG_ITERS: usize = 10_000;
const EG_STOP: f64 = 1e-12;

/// Checks that all matrices share N, K and sample ids; returns the shared labels.
fn aligned(models: &[PredictionMatrix]) -> Result<Option<Vec<usize>>> {
    let first = models.first().ok_or_else(|| Error::invalid("models", "need at least one model"))?;
    let mut labels: Option<&[usize]> = None;
    for (m, pm) in models.iter().enumerate() {
        if pm.n() != first.n() || pm.k() != first.k() {
            return Err(Error::Misaligned(format!(
                "model {m} is {}×{}, model 0 is {}×{}",
                pm.n(),
                pm.k(),
                first.n(),
                first.k()
            )));
        }
        if let Some(i) = (0..pm.n()).find(|&i| pm.sample_ids()[i] != first.sample_ids()[i]) {
            return Err(Error::Misaligned(format!(
                "row {i}: model {m} has sample `{}`, model 0 has `{}`",
                pm.sample_ids()[i],
                first.sample_ids()[i]
            )));
        }
        match (labels, pm.labels()) {
            (None, l) => labels = l,
            (Some(a), Some(b)) if a != b => {
                let i = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(0);
                return Err(Error::Misaligned(format!("model {m} disagrees on the label of row {i}")));
            }
            _ => {}
        }
    }
    Ok(labels.map(|l| l.to_vec()))
}

fn rebuild(template: &PredictionMatrix, probs: Matrix, labels: Option<Vec<usize>>) -> Result<PredictionMatrix> {
    PredictionMatrix::new(probs, labels, template.sample_ids().to_vec())
}

/// Modal argmax per sample as one-hot rows. Ties go to the class with the
/// highest mean probability, then the lowest index.
pub fn majority_vote(models: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    let labels = aligned(models)?;
    let (n, k) = (models[0].n(), models[0].k());
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let mut votes = vec![0usize; k];
        let mut mass = vec![0.0; k];
        for pm in models {
            let row = pm.row(i);
            votes[argmax(row)] += 1;
            for (s, p) in mass.iter_mut().zip(row) {
                *s += p;
            }
        }
        let top = *votes.iter().max().expect("k ≥ 2");
        let mut winner = None;
        for c in (0..k).filter(|&c| votes[c] == top) {
            match winner {
                Some(w) if mass[c] <= mass[w] => {}
                _ => winner = Some(c),
            }
        }
        out.set(i, winner.expect("some class has the top count"), 1.0);
    }
    rebuild(&models[0], out, labels)
}

/// Length-M point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    /// Accepts nonnegative weights summing to 1 within 1e-9 and renormalizes.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weights", "need at least one weight"));
        }
        if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid("weights", format!("{v} is not a nonnegative number")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid("weights", format!("sum to {s}, not 1")));
        }
        Ok(Self(normalize(w)))
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m.max(1)]).and_then(|w| {
            if m == 0 {
                Err(Error::invalid("weights", "need at least one model"))
            } else {
                Ok(w)
            }
        })
    }

    pub fn vertex(m: usize, j: usize) -> Result<Self> {
        if j >= m {
            return Err(Error::invalid("weights", format!("vertex {j} out of range for {m} models")));
        }
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `[w0, w1, …]` with shortest round-trip decimals.
    pub fn to_json(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:?}")).collect();
        format!("[{}]", parts.join(", "))
    }
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Per-cell convex combination `Σ_m w_m P_m`.
pub fn weighted_combine(models: &[PredictionMatrix], w: &EnsembleWeights) -> Result<PredictionMatrix> {
    let labels = aligned(models)?;
    if w.len() != models.len() {
        return Err(Error::invalid(
            "weights",
            format!("{} weights for {} models", w.len(), models.len()),
        ));
    }
    let (n, k) = (models[0].n(), models[0].k());
    let mut out = Matrix::zeros(n, k);
    for (pm, &wm) in models.iter().zip(w.as_slice()) {
        for (o, p) in out.as_mut_slice().iter_mut().zip(pm.probs().as_slice()) {
            *o += wm * p;
        }
    }
    rebuild(&models[0], out, labels)
}

pub fn simple_average(models: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    weighted_combine(models, &EnsembleWeights::uniform(models.len())?)
}

/// Fitted weights and the log loss they achieve on the fitting data.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: EnsembleWeights,
    pub log_loss: f64,
    pub iterations: usize,
}

/// Per-model probability of the true class, `q[i][m]`.
fn true_class_probs(models: &[PredictionMatrix], labels: &[usize]) -> Vec<Vec<f64>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| models.iter().map(|pm| pm.probs().get(i, y)).collect())
        .collect()
}

fn mixture_loss(q: &[Vec<f64>], w: &[f64]) -> f64 {
    let total: f64 = q
        .iter()
        .map(|row| -row.iter().zip(w).map(|(p, wm)| p * wm).sum::<f64>().max(PROB_FLOOR).ln())
        .sum();
    total / q.len() as f64
}

fn mixture_grad(q: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for row in q {
        let mix: f64 = row.iter().zip(w).map(|(p, wm)| p * wm).sum();
        if mix <= PROB_FLOOR {
            continue;
        }
        for (gm, p) in g.iter_mut().zip(row) {
            *gm -= p / mix;
        }
    }
    g.iter_mut().for_each(|v| *v /= q.len() as f64);
    g
}

/// Minimizes `−mean log Σ_m w_m p_m(true class)` over the simplex.
///
/// Exponentiated-gradient steps from the uniform point; a step that fails to
/// lower the loss is retried at half the rate, an accepted one lets the rate
/// grow by half. The result is then compared with every vertex and the uniform
/// point and the best of them is returned.
pub fn fit_weights(models: &[PredictionMatrix]) -> Result<WeightFit> {
    if models.len() < 2 {
        return Err(Error::invalid("models", "weight fitting needs at least two models"));
    }
    let labels = aligned(models)?.ok_or(Error::MissingLabels)?;
    let m = models.len();
    let uniform = EnsembleWeights::uniform(m)?;
    if models.iter().all(|pm| pm.probs() == models[0].probs()) {
        let q = true_class_probs(models, &labels);
        let log_loss = mixture_loss(&q, uniform.as_slice());
        return Ok(WeightFit {
            weights: uniform,
            log_loss,
            iterations: 0,
        });
    }
    let q = true_class_probs(models, &labels);

    let mut w = uniform.as_slice().to_vec();
    let mut loss = mixture_loss(&q, &w);
    let mut eta = 1.0;
    let mut iterations = 0;
    while iterations < MAX_EG_ITERS {
        iterations += 1;
        let g = mixture_grad(&q, &w);
        // shift by the minimum for a stable exponent; cancels on renormalization
        let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let cand = normalize(w.iter().zip(&g).map(|(wm, gm)| wm * (-eta * (gm - gmin)).exp()).collect());
        let cand_loss = mixture_loss(&q, &cand);
        if cand_loss < loss {
            let delta = loss - cand_loss;
            w = cand;
            loss = cand_loss;
            eta *= 1.5;
            if delta < EG_STOP {
                break;
            }
        } else {
            eta *= 0.5;
            if eta < 1e-30 {
                break;
            }
        }
    }

    let mut best = (loss, w);
    let candidates = (0..m)
        .map(|j| EnsembleWeights::vertex(m, j).map(|v| v.0))
        .chain(std::iter::once(Ok(uniform.0)));
    for c in candidates {
        let c = c?;
        let l = mixture_loss(&q, &c);
        if l < best.0 {
            best = (l, c);
        }
    }
    Ok(WeightFit {
        weights: EnsembleWeights(best.1),
        log_loss: best.0,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackerConfig {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl StackerConfig {
    /// Defaults for `models` base models: 3·M hidden units, 500 epochs, rate 1e-2.
    pub fn new(models: usize) -> Self {
        Self {
            hidden_units: 3 * models.max(1),
            epochs: 500,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// Meta-learner over concatenated base-model probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Stacker {
    pub network: Network,
    pub models: usize,
    pub classes: usize,
}

fn stack_features(models: &[PredictionMatrix]) -> Matrix {
    let (n, k) = (models[0].n(), models[0].k());
    let mut x = Matrix::zeros(n, models.len() * k);
    for i in 0..n {
        let row = x.row_mut(i);
        for (m, pm) in models.iter().enumerate() {
            row[m * k..(m + 1) * k].copy_from_slice(pm.row(i));
        }
    }
    x
}

/// Trains dense(M·K → hidden, ReLU) → dense(hidden → K) under CCE.
pub fn fit_stacker(models: &[PredictionMatrix], cfg: &StackerConfig) -> Result<Stacker> {
    let labels = aligned(models)?.ok_or(Error::MissingLabels)?;
    if cfg.hidden_units == 0 {
        return Err(Error::invalid("hidden_units", "must be ≥ 1"));
    }
    let k = models[0].k();
    let data = Dataset::new(stack_features(models), labels, k)?;
    let net = Network::mlp(&[models.len() * k, cfg.hidden_units, k], cfg.seed)?;
    let tc = TrainConfig {
        lr: cfg.learning_rate,
        epochs: cfg.epochs,
        seed: cfg.seed,
        ..TrainConfig::new(LossSpec::new(LossFamily::Cce))
    };
    let out = nn::train(net, &data, None, &tc)?;
    Ok(Stacker {
        network: out.model,
        models: models.len(),
        classes: k,
    })
}

pub fn apply_stacker(stacker: &Stacker, models: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    let labels = aligned(models)?;
    if models.len() != stacker.models || models[0].k() != stacker.classes {
        return Err(Error::Shape(format!(
            "stacker expects {} models with {} classes, got {} with {}",
            stacker.models,
            stacker.classes,
            models.len(),
            models[0].k()
        )));
    }
    let probs = stacker.network.predict_proba(&stack_features(models))?;
    rebuild(&models[0], probs, labels)
}

/// Batch of H×W×C feature maps, one sample per row, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Matrix,
}

impl FeatureBatch {
    pub fn new(height: usize, width: usize, channels: usize, data: Matrix) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("features", "dimensions must be ≥ 1"));
        }
        if data.cols() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values per sample for a {height}×{width}×{channels} map",
                data.cols()
            )));
        }
        if !data.all_finite() {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn samples(&self) -> usize {
        self.data.rows()
    }
}

/// Stacks channels of maps with equal sample count and spatial size.
pub fn concat_channels(features: &[FeatureBatch]) -> Result<FeatureBatch> {
    let first = features.first().ok_or_else(|| Error::invalid("features", "need at least one map"))?;
    for (m, f) in features.iter().enumerate() {
        if (f.height, f.width) != (first.height, first.width) {
            return Err(Error::Shape(format!(
                "map {m} is {}×{}, map 0 is {}×{}",
                f.height, f.width, first.height, first.width
            )));
        }
        if f.samples() != first.samples() {
            return Err(Error::Misaligned(format!(
                "map {m} has {} samples, map 0 has {}",
                f.samples(),
                first.samples()
            )));
        }
    }
    let pixels = first.height * first.width;
    let channels: usize = features.iter().map(|f| f.channels).sum();
    let mut data = Vec::with_capacity(first.samples() * pixels * channels);
    for i in 0..first.samples() {
        for px in 0..pixels {
            for f in features {
                data.extend_from_slice(&f.data.row(i)[px * f.channels..(px + 1) * f.channels]);
            }
        }
    }
    FeatureBatch::new(
        first.height,
        first.width,
        channels,
        Matrix::from_vec(first.samples(), pixels * channels, data)?,
    )
}

/// 1×1 convolution to `reduced` channels, global average pool, dense, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionHead {
    pub network: Network,
    pub in_channels: usize,
}

impl FusionHead {
    pub fn new(in_channels: usize, reduced: usize, classes: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            network: Network::fusion_head(in_channels, reduced, classes, seed)?,
            in_channels,
        })
    }

    fn check(&self, batch: &FeatureBatch) -> Result<()> {
        if batch.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "head expects {} channels, got {}",
                self.in_channels, batch.channels
            )));
        }
        Ok(())
    }

    /// Output of the pooling layer (before the dense layer).
    pub fn pooled(&self, batch: &FeatureBatch) -> Result<Matrix> {
        self.check(batch)?;
        let head = Network {
            layers: self.network.layers[..2].to_vec(),
            seed: self.network.seed,
        };
        Ok(head.forward(&batch.data)?.logits)
    }

    pub fn logits(&self, batch: &FeatureBatch) -> Result<Matrix> {
        self.check(batch)?;
        Ok(self.network.forward(&batch.data)?.logits)
    }

    /// Concatenates the maps and returns one distribution per sample.
    pub fn predict(&self, features: &[FeatureBatch]) -> Result<Vec<ClassDistribution>> {
        let batch = concat_channels(features)?;
        self.check(&batch)?;
        let probs = self.network.predict_proba(&batch.data)?;
        probs.iter_rows().map(|r| ClassDistribution::new(r.to_vec())).collect()
    }

    pub fn set_identity_reduction(&mut self) -> Result<()> {
        match &mut self.network.layers[0] {
            Layer::Conv1x1 { weights, bias } if weights.rows() == weights.cols() => {
                for r in 0..weights.rows() {
                    for c in 0..weights.cols() {
                        weights.set(r, c, if r == c { 1.0 } else { 0.0 });
                    }
                }
                bias.iter_mut().for_each(|b| *b = 0.0);
                Ok(())
            }
            _ => Err(Error::invalid("reduced", "identity map needs reduced == in_channels")),
        }
    }
}

/// Largest relative error between backprop and central differences of the
/// CCE loss w.r.t. all head parameters over `trials` random 4×4 batches.
pub fn fusion_head_gradient_check(
    in_channels: usize,
    reduced: usize,
    classes: usize,
    trials: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", format!("{step} must be > 0")));
    }
    let spec = LossSpec::new(LossFamily::Cce);
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let head = FusionHead::new(in_channels, reduced, classes, seed.wrapping_add(t as u64))?;
        let n = rng.gen_range(1..=16);
        let cols = 16 * in_channels;
        let x = Matrix::from_vec(n, cols, (0..n * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let targets = TargetMatrix::one_hot(&labels, classes)?;
        let net = &head.network;
        let pass = net.forward(&x)?;
        let rep = evaluate_logits(&spec, &pass.logits, &targets)?;
        let analytic = net.backward(&pass, &rep.grad_logits)?.params;

        let base = net.params();
        let mut probe = net.clone();
        let mut numeric = Vec::with_capacity(base.len());
        let mut p = base.clone();
        for i in 0..base.len() {
            p[i] = base[i] + step;
            probe.set_params(&p)?;
            let up = evaluate_logits(&spec, &probe.forward(&x)?.logits, &targets)?.value;
            p[i] = base[i] - step;
            probe.set_params(&p)?;
            let down = evaluate_logits(&spec, &probe.forward(&x)?.logits, &targets)?.value;
            p[i] = base[i];
            numeric.push((up - down) / (2.0 * step));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}
