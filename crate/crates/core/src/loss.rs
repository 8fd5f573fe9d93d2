//! The twelve classification losses with analytic gradients.
//!
//! Every loss is evaluated on softmax probabilities. Gradients are formed in
//! probability space first and then pulled back through the softmax Jacobian,
//! `∂L/∂z_j = p_j (∂L/∂p_j − Σ_k p_k ∂L/∂p_k)`, so each logit-gradient row
//! sums to zero.
//!
//! Per-sample terms are averaged over the batch. The calibration penalty
//! `λ·|mean_accuracy − mean_confidence|` is batch-level; its correctness
//! indicator is held constant when differentiating, so its gradient lands on
//! each row's max-probability entry only.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prob::{
    argmax, clamp_prob, smooth_labels, softmax_rows, BatchCalibrationStats, PredictionMatrix,
    TargetMatrix,
};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Cce,
    CceEntropyReg,
    CalibratedNegativeEntropy,
    KlDivergence,
    CalibratedKl,
    CategoricalFocal,
    CalibratedFocal,
    CategoricalHinge,
    CalibratedHinge,
    SmoothedCce,
    SmoothedFocal,
    CalibratedCce,
}

impl LossFamily {
    pub const ALL: [LossFamily; 12] = [
        LossFamily::Cce,
        LossFamily::CceEntropyReg,
        LossFamily::CalibratedNegativeEntropy,
        LossFamily::KlDivergence,
        LossFamily::CalibratedKl,
        LossFamily::CategoricalFocal,
        LossFamily::CalibratedFocal,
        LossFamily::CategoricalHinge,
        LossFamily::CalibratedHinge,
        LossFamily::SmoothedCce,
        LossFamily::SmoothedFocal,
        LossFamily::CalibratedCce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Cce => "cce",
            LossFamily::CceEntropyReg => "cce_entropy_reg",
            LossFamily::CalibratedNegativeEntropy => "calibrated_negative_entropy",
            LossFamily::KlDivergence => "kl_divergence",
            LossFamily::CalibratedKl => "calibrated_kl",
            LossFamily::CategoricalFocal => "categorical_focal",
            LossFamily::CalibratedFocal => "calibrated_focal",
            LossFamily::CategoricalHinge => "categorical_hinge",
            LossFamily::CalibratedHinge => "calibrated_hinge",
            LossFamily::SmoothedCce => "smoothed_cce",
            LossFamily::SmoothedFocal => "smoothed_focal",
            LossFamily::CalibratedCce => "calibrated_cce",
        }
    }

    /// Families that add the batch confidence/accuracy penalty.
    pub fn is_calibrated(self) -> bool {
        matches!(
            self,
            LossFamily::CalibratedNegativeEntropy
                | LossFamily::CalibratedKl
                | LossFamily::CalibratedFocal
                | LossFamily::CalibratedHinge
                | LossFamily::CalibratedCce
        )
    }

    /// The family obtained by dropping the calibration penalty.
    pub fn base(self) -> LossFamily {
        match self {
            LossFamily::CalibratedNegativeEntropy => LossFamily::CceEntropyReg,
            LossFamily::CalibratedKl => LossFamily::KlDivergence,
            LossFamily::CalibratedFocal => LossFamily::CategoricalFocal,
            LossFamily::CalibratedHinge => LossFamily::CategoricalHinge,
            LossFamily::CalibratedCce => LossFamily::Cce,
            other => other,
        }
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid("loss", format!("unknown loss family `{s}`")))
    }
}

/// Loss family plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    /// Entropy penalty weight.
    pub beta: f64,
    /// Calibration penalty weight.
    pub lambda: f64,
    /// Focal exponent.
    pub gamma: f64,
    /// Label-smoothing mass.
    pub sigma: f64,
}

impl LossSpec {
    /// Spec with the tuned defaults for `family`; unused parameters are zero.
    pub fn new(family: LossFamily) -> Self {
        let (beta, lambda, gamma, sigma) = match family {
            LossFamily::Cce | LossFamily::KlDivergence | LossFamily::CategoricalHinge => {
                (0.0, 0.0, 0.0, 0.0)
            }
            LossFamily::CceEntropyReg => (2.0, 0.0, 0.0, 0.0),
            LossFamily::CalibratedNegativeEntropy => (1e-3, 10.0, 0.0, 0.0),
            LossFamily::CalibratedKl => (0.0, 1.0, 0.0, 0.0),
            LossFamily::CategoricalFocal => (0.0, 0.0, 1.0, 0.0),
            LossFamily::CalibratedFocal => (0.0, 1.0, 1.0, 0.0),
            LossFamily::CalibratedHinge => (0.0, 10.0, 0.0, 0.0),
            LossFamily::SmoothedCce => (0.0, 0.0, 0.0, 0.2),
            LossFamily::SmoothedFocal => (0.0, 0.0, 1.0, 0.2),
            LossFamily::CalibratedCce => (0.0, 10.0, 0.0, 0.0),
        };
        Self {
            family,
            beta,
            lambda,
            gamma,
            sigma,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |arg: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(arg, format!("{v} must be finite and ≥ 0")))
            }
        };
        nonneg("beta", self.beta)?;
        nonneg("lambda", self.lambda)?;
        nonneg("gamma", self.gamma)?;
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::invalid("sigma", format!("{} outside [0,1)", self.sigma)));
        }
        Ok(())
    }
}

impl From<LossFamily> for LossSpec {
    fn from(family: LossFamily) -> Self {
        LossSpec::new(family)
    }
}

/// Batch loss value with gradients w.r.t. probabilities and logits.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub value: f64,
    pub grad_logits: Matrix,
    pub grad_probs: Matrix,
    /// Present for calibrated families.
    pub stats: Option<BatchCalibrationStats>,
}

/// Evaluates `spec` on raw logits (softmax applied internally).
pub fn evaluate_logits(spec: &LossSpec, logits: &Matrix, targets: &TargetMatrix) -> Result<LossReport> {
    let probs = softmax_rows(logits)?;
    evaluate_probs(spec, &probs, targets)
}

/// Evaluates `spec` on softmax outputs; `grad_logits` assumes `probs` came from a softmax.
pub fn evaluate_probs(spec: &LossSpec, probs: &Matrix, targets: &TargetMatrix) -> Result<LossReport> {
    spec.validate()?;
    if probs.shape() != targets.matrix().shape() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs targets {:?}",
            probs.shape(),
            targets.matrix().shape()
        )));
    }
    if probs.rows() == 0 {
        return Err(Error::invalid("probs", "empty batch"));
    }
    if !probs.all_finite() {
        return Err(Error::NonFinite("probabilities".into()));
    }

    let mut acc = Accum::new(probs.rows(), probs.cols());
    let t = targets.matrix();
    let mut stats = None;
    match spec.family {
        LossFamily::Cce => acc.nll(probs, t),
        LossFamily::CceEntropyReg => {
            acc.nll(probs, t);
            acc.neg_entropy(probs, spec.beta);
        }
        LossFamily::CalibratedNegativeEntropy => {
            acc.nll(probs, t);
            acc.neg_entropy(probs, spec.beta);
            stats = Some(acc.difference(probs, &targets.labels(), spec.lambda));
        }
        LossFamily::KlDivergence => acc.kl(probs, t),
        LossFamily::CalibratedKl => {
            acc.kl(probs, t);
            stats = Some(acc.difference(probs, &targets.labels(), spec.lambda));
        }
        LossFamily::CategoricalFocal => acc.focal(probs, t, spec.gamma),
        LossFamily::CalibratedFocal => {
            acc.focal(probs, t, spec.gamma);
            stats = Some(acc.difference(probs, &targets.labels(), spec.lambda));
        }
        LossFamily::CategoricalHinge => acc.hinge(probs, t),
        LossFamily::CalibratedHinge => {
            acc.hinge(probs, t);
            stats = Some(acc.difference(probs, &targets.labels(), spec.lambda));
        }
        LossFamily::SmoothedCce => {
            let smoothed = smooth_labels(targets, spec.sigma)?;
            acc.nll(probs, smoothed.matrix());
        }
        LossFamily::SmoothedFocal => {
            let smoothed = smooth_labels(targets, spec.sigma)?;
            acc.focal(probs, smoothed.matrix(), spec.gamma);
        }
        LossFamily::CalibratedCce => {
            acc.nll(probs, t);
            stats = Some(acc.difference(probs, &targets.labels(), spec.lambda));
        }
    }

    let grad_logits = softmax_pullback(probs, &acc.grad);
    if !acc.value.is_finite() {
        return Err(Error::NonFinite(format!("{} loss value", spec.family)));
    }
    Ok(LossReport {
        value: acc.value,
        grad_logits,
        grad_probs: acc.grad,
        stats,
    })
}

/// Evaluates `spec` against the one-hot labels carried by `preds`.
pub fn evaluate_predictions(spec: &LossSpec, preds: &PredictionMatrix) -> Result<LossReport> {
    let targets = TargetMatrix::one_hot(preds.require_labels()?, preds.k())?;
    evaluate_probs(spec, preds.probs(), &targets)
}

/// `J_softmaxᵀ · g` row by row.
pub fn softmax_pullback(probs: &Matrix, grad_probs: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g = grad_probs.row(i);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (o, (&pj, &gj)) in out.row_mut(i).iter_mut().zip(p.iter().zip(g)) {
            *o = pj * (gj - dot);
        }
    }
    out
}

struct Accum {
    value: f64,
    grad: Matrix,
    inv_n: f64,
}

impl Accum {
    fn new(n: usize, k: usize) -> Self {
        Self {
            value: 0.0,
            grad: Matrix::zeros(n, k),
            inv_n: 1.0 / n as f64,
        }
    }

    /// Mean of `−Σ_j t_j log p_j`.
    fn nll(&mut self, probs: &Matrix, targets: &Matrix) {
        let mut total = 0.0;
        for i in 0..probs.rows() {
            let (p, t) = (probs.row(i), targets.row(i));
            let g = self.grad.row_mut(i);
            for j in 0..p.len() {
                if t[j] == 0.0 {
                    continue;
                }
                let pc = clamp_prob(p[j]);
                total -= t[j] * pc.ln();
                g[j] -= t[j] / pc * self.inv_n;
            }
        }
        self.value += total * self.inv_n;
    }

    /// Mean of `Σ_j t_j log(t_j / p_j)`, with `0·log(0/q) = 0`.
    fn kl(&mut self, probs: &Matrix, targets: &Matrix) {
        let mut total = 0.0;
        for i in 0..probs.rows() {
            let (p, t) = (probs.row(i), targets.row(i));
            let g = self.grad.row_mut(i);
            for j in 0..p.len() {
                if t[j] <= 0.0 {
                    continue;
                }
                let pc = clamp_prob(p[j]);
                total += t[j] * (t[j] / pc).ln();
                g[j] -= t[j] / pc * self.inv_n;
            }
        }
        self.value += total * self.inv_n;
    }

    /// Adds `−β · mean H(p)`.
    fn neg_entropy(&mut self, probs: &Matrix, beta: f64) {
        if beta == 0.0 {
            return;
        }
        let mut total = 0.0;
        for i in 0..probs.rows() {
            let p = probs.row(i);
            let g = self.grad.row_mut(i);
            for j in 0..p.len() {
                if p[j] > 0.0 {
                    total += p[j] * p[j].ln();
                }
                // d/dp (p ln p) = ln p + 1
                g[j] += beta * (clamp_prob(p[j]).ln() + 1.0) * self.inv_n;
            }
        }
        self.value += beta * total * self.inv_n;
    }

    /// Mean of `−Σ_j t_j (1−p_j)^γ log p_j`.
    fn focal(&mut self, probs: &Matrix, targets: &Matrix, gamma: f64) {
        let mut total = 0.0;
        for i in 0..probs.rows() {
            let (p, t) = (probs.row(i), targets.row(i));
            let g = self.grad.row_mut(i);
            for j in 0..p.len() {
                if t[j] == 0.0 {
                    continue;
                }
                let pc = clamp_prob(p[j]);
                let q = 1.0 - pc;
                let lp = pc.ln();
                let w = q.powf(gamma);
                total -= t[j] * w * lp;
                let dw = if gamma == 0.0 || q == 0.0 {
                    0.0
                } else {
                    gamma * q.powf(gamma - 1.0) * lp
                };
                g[j] += t[j] * (dw - w / pc) * self.inv_n;
            }
        }
        self.value += total * self.inv_n;
    }

    /// Mean of `max(max_j (1−t_j) p_j − Σ_j t_j p_j + 1, 0)`.
    fn hinge(&mut self, probs: &Matrix, targets: &Matrix) {
        let mut total = 0.0;
        for i in 0..probs.rows() {
            let (p, t) = (probs.row(i), targets.row(i));
            let (neg_idx, neg) = hinge_negative(p, t);
            let pos: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
            let margin = neg - pos + 1.0;
            if margin > 0.0 {
                total += margin;
                let g = self.grad.row_mut(i);
                g[neg_idx] += (1.0 - t[neg_idx]) * self.inv_n;
                for j in 0..p.len() {
                    g[j] -= t[j] * self.inv_n;
                }
            }
        }
        self.value += total * self.inv_n;
    }

    /// Adds `λ·|mean_acc − mean_conf|` with the correctness indicator held fixed.
    fn difference(&mut self, probs: &Matrix, labels: &[usize], lambda: f64) -> BatchCalibrationStats {
        let stats = BatchCalibrationStats::compute(probs, labels);
        self.value += lambda * stats.difference;
        let gap = stats.mean_confidence - stats.mean_accuracy;
        if lambda != 0.0 && gap != 0.0 {
            let s = lambda * gap.signum() * self.inv_n;
            for i in 0..probs.rows() {
                let j = argmax(probs.row(i));
                self.grad.row_mut(i)[j] += s;
            }
        }
        stats
    }
}

fn hinge_negative(p: &[f64], t: &[f64]) -> (usize, f64) {
    let scores: Vec<f64> = p.iter().zip(t).map(|(a, b)| (1.0 - b) * a).collect();
    let j = argmax(&scores);
    (j, scores[j])
}

/// Outcome of a finite-difference gradient check for one loss spec.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub spec: LossSpec,
    pub trials: usize,
    /// Random batches discarded for sitting within the margin of a kink.
    pub rejected: usize,
    pub max_rel_error: f64,
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-300 {
        0.0
    } else {
        diff / denom
    }
}

/// True when every non-smooth switch in the losses is at least `margin` away.
///
/// Covers argmax ties (accuracy indicator and confidence), the calibration
/// absolute value, the hinge floor and the hinge's inner max.
pub fn far_from_kinks(probs: &Matrix, targets: &TargetMatrix, margin: f64) -> bool {
    let t = targets.matrix();
    for i in 0..probs.rows() {
        let p = probs.row(i);
        if top_two_gap(p) < margin {
            return false;
        }
        let scores: Vec<f64> = p.iter().zip(t.row(i)).map(|(a, b)| (1.0 - b) * a).collect();
        if top_two_gap(&scores) < margin {
            return false;
        }
        let (_, neg) = hinge_negative(p, t.row(i));
        let pos: f64 = p.iter().zip(t.row(i)).map(|(a, b)| a * b).sum();
        if (neg - pos + 1.0).abs() < margin {
            return false;
        }
    }
    let stats = BatchCalibrationStats::compute(probs, &targets.labels());
    stats.difference >= margin
}

fn top_two_gap(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[0] - sorted[1]
}

/// Compares `grad_logits` against central differences on random K=3 batches.
pub fn loss_gradient_check(spec: &LossSpec, trials: usize, step: f64, seed: u64) -> Result<GradCheckReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", format!("{step} must be > 0")));
    }
    spec.validate()?;
    const K: usize = 3;
    let mut rng = seeded_rng(seed);
    let margin = 10.0 * step;
    let mut done = 0;
    let mut rejected = 0;
    let mut worst = 0.0f64;
    while done < trials {
        let n = rng.gen_range(1..=16);
        let data: Vec<f64> = (0..n * K).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..K)).collect();
        let logits = Matrix::from_vec(n, K, data)?;
        let targets = TargetMatrix::one_hot(&labels, K)?;
        if !far_from_kinks(&softmax_rows(&logits)?, &targets, margin) {
            rejected += 1;
            if rejected > 1000 * (trials + 1) {
                return Err(Error::invalid("step", "too large to find kink-free batches"));
            }
            continue;
        }
        let analytic = evaluate_logits(spec, &logits, &targets)?.grad_logits;
        let numeric = numeric_logit_gradient(spec, &logits, &targets, step)?;
        worst = worst.max(relative_error(analytic.as_slice(), numeric.as_slice()));
        done += 1;
    }
    Ok(GradCheckReport {
        spec: *spec,
        trials,
        rejected,
        max_rel_error: worst,
    })
}

/// Central-difference gradient of the scalar loss w.r.t. logits.
pub fn numeric_logit_gradient(
    spec: &LossSpec,
    logits: &Matrix,
    targets: &TargetMatrix,
    step: f64,
) -> Result<Matrix> {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    let mut probe = logits.clone();
    for idx in 0..logits.as_slice().len() {
        let orig = probe.as_slice()[idx];
        probe.as_mut_slice()[idx] = orig + step;
        let up = evaluate_logits(spec, &probe, targets)?.value;
        probe.as_mut_slice()[idx] = orig - step;
        let down = evaluate_logits(spec, &probe, targets)?.value;
        probe.as_mut_slice()[idx] = orig;
        out.as_mut_slice()[idx] = (up - down) / (2.0 * step);
    }
    Ok(out)
}
