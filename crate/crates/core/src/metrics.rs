//! Classification metrics: confusion matrix, support-weighted precision /
//! recall / F1, multi-class MCC, binomial confidence intervals, one-vs-rest
//! ROC and precision-recall curves, and a two-model significance summary.

use serde::Serialize;
use serde_json::{json, Map, Value};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::prob::{argmax, PredictionMatrix};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let k = counts.len();
        if k < 2 {
            return Err(Error::invalid("counts", "need at least two classes"));
        }
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self {
            k,
            counts: counts.concat(),
        })
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], k: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::invalid("labels", "no samples"));
        }
        let mut counts = vec![0u64; k * k];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(Error::invalid("labels", format!("class index out of range for K={k}")));
            }
            counts[t * k + p] += 1;
        }
        Ok(Self { k, counts })
    }

    pub fn from_predictions(preds: &PredictionMatrix) -> Result<Self> {
        Self::from_labels(preds.require_labels()?, &preds.predicted(), preds.k())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Per-class supports (row sums).
    pub fn true_totals(&self) -> Vec<u64> {
        (0..self.k).map(|t| (0..self.k).map(|p| self.get(t, p)).sum()).collect()
    }

    /// Column sums.
    pub fn predicted_totals(&self) -> Vec<u64> {
        (0..self.k).map(|p| (0..self.k).map(|t| self.get(t, p)).sum()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    /// 0 for an empty matrix, like the other zero-denominator ratios.
    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.n())
    }

    pub fn precision(&self, c: usize) -> f64 {
        ratio(self.get(c, c), self.predicted_totals()[c])
    }

    pub fn recall(&self, c: usize) -> f64 {
        ratio(self.get(c, c), self.true_totals()[c])
    }

    pub fn f1(&self, c: usize) -> f64 {
        harmonic(self.precision(c), self.recall(c))
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Multi-category MCC from the full confusion matrix.
///
/// Numerator and denominator are formed in exact integer arithmetic; a zero
/// denominator yields 0.
pub fn multiclass_mcc(cm: &ConfusionMatrix) -> f64 {
    let s = cm.n() as i128;
    let c = cm.trace() as i128;
    let p = cm.predicted_totals();
    let t = cm.true_totals();
    let pt: i128 = p.iter().zip(&t).map(|(&a, &b)| a as i128 * b as i128).sum();
    let pp: i128 = p.iter().map(|&a| a as i128 * a as i128).sum();
    let tt: i128 = t.iter().map(|&a| a as i128 * a as i128).sum();
    let num = c * s - pt;
    let den = (s * s - pp) * (s * s - tt);
    if den == 0 {
        0.0
    } else {
        num as f64 / (den as f64).sqrt()
    }
}

fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", format!("{level} outside (0,1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// Normal-approximation interval `m ± z·sqrt(m(1−m)/n)`.
pub fn wald_ci(metric: f64, n: u64, level: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&metric) {
        return Err(Error::invalid("metric", format!("{metric} outside [0,1]")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be ≥ 1"));
    }
    let z = z_for_level(level)?;
    let se = (metric * (1.0 - metric) / n as f64).sqrt();
    Ok((metric - z * se, metric + z * se))
}

/// Smallest x in [0,1] with `I_x(a, b) ≥ target`, by bisection.
fn beta_quantile(a: f64, b: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact binomial (Clopper–Pearson) interval.
pub fn clopper_pearson_ci(successes: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("n", "must be ≥ 1"));
    }
    if successes > n {
        return Err(Error::invalid("successes", format!("{successes} > n = {n}")));
    }
    z_for_level(level)?;
    let alpha = 1.0 - level;
    let (s, nf) = (successes as f64, n as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        beta_quantile(s, nf - s + 1.0, alpha / 2.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        beta_quantile(s + 1.0, nf - s, 1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Ordered curve points plus the score threshold that produced each.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoints {
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

impl CurvePoints {
    pub fn to_csv(&self, x_name: &str, y_name: &str) -> String {
        let mut s = format!("{x_name},{y_name},threshold\n");
        for (&(x, y), t) in self.points.iter().zip(&self.thresholds) {
            s.push_str(&format!("{x:?},{y:?},{t:?}\n"));
        }
        s
    }
}

/// Positive/negative counts accumulated at each distinct score, descending.
fn ranked_counts(scores: &[f64], positives: &[bool]) -> Result<(Vec<(f64, u64, u64)>, u64, u64)> {
    if scores.len() != positives.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let (tp, fp) = (u64::from(positives[i]), u64::from(!positives[i]));
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += tp;
                g.2 += fp;
            }
            _ => groups.push((scores[i], tp, fp)),
        }
    }
    let pos = positives.iter().filter(|&&p| p).count() as u64;
    let neg = positives.len() as u64 - pos;
    Ok((groups, pos, neg))
}

/// ROC curve (FPR, TPR) from binary scores, starting at (0,0).
pub fn roc_from_scores(scores: &[f64], positives: &[bool]) -> Result<CurvePoints> {
    let (groups, pos, neg) = ranked_counts(scores, positives)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("labels", "ROC needs both positive and negative samples"));
    }
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0u64, 0u64);
    for (score, gtp, gfp) in groups {
        tp += gtp;
        fp += gfp;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(score);
    }
    Ok(CurvePoints { points, thresholds })
}

/// Precision-recall curve (recall, precision), one point per distinct score.
pub fn pr_from_scores(scores: &[f64], positives: &[bool]) -> Result<CurvePoints> {
    let (groups, pos, _) = ranked_counts(scores, positives)?;
    if pos == 0 {
        return Err(Error::invalid("labels", "precision-recall needs at least one positive"));
    }
    let mut points = Vec::with_capacity(groups.len());
    let mut thresholds = Vec::with_capacity(groups.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    for (score, gtp, gfp) in groups {
        tp += gtp;
        fp += gfp;
        points.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
        thresholds.push(score);
    }
    Ok(CurvePoints { points, thresholds })
}

fn one_vs_rest(preds: &PredictionMatrix, class: usize) -> Result<(Vec<f64>, Vec<bool>)> {
    let labels = preds.require_labels()?;
    if class >= preds.k() {
        return Err(Error::invalid("positive_class", format!("{class} out of range")));
    }
    let scores = (0..preds.n()).map(|i| preds.row(i)[class]).collect();
    let positives = labels.iter().map(|&l| l == class).collect();
    Ok((scores, positives))
}

pub fn roc_curve(preds: &PredictionMatrix, positive_class: usize) -> Result<CurvePoints> {
    let (s, p) = one_vs_rest(preds, positive_class)?;
    roc_from_scores(&s, &p)
}

pub fn pr_curve(preds: &PredictionMatrix, positive_class: usize) -> Result<CurvePoints> {
    let (s, p) = one_vs_rest(preds, positive_class)?;
    pr_from_scores(&s, &p)
}

/// Trapezoidal area under a curve.
pub fn auc(curve: &CurvePoints) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Step-interpolated average precision `Σ (R_i − R_{i−1})·P_i`.
pub fn average_precision(curve: &CurvePoints) -> f64 {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for &(r, p) in &curve.points {
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

/// Everything reported for a labeled prediction matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub n: u64,
    pub k: usize,
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub mcc: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<u64>,
    /// NaN when no class has both positives and negatives.
    pub auroc_macro: f64,
    pub auroc_micro: f64,
    pub auprc_macro: f64,
    pub auprc_micro: f64,
    /// `None` when MCC is negative.
    pub mcc_ci_wald: Option<(f64, f64)>,
    /// MCC treated as a proportion of `round(mcc·n)` successes out of `n`.
    pub mcc_ci_clopper_pearson: Option<(f64, f64)>,
    pub log_loss: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricReport {
    /// Flat key → value document; NaN becomes `null`.
    pub fn to_flat_json(&self) -> Value {
        let num = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
        let mut m = Map::new();
        m.insert("n".into(), json!(self.n));
        m.insert("k".into(), json!(self.k));
        for (key, v) in [
            ("accuracy", self.accuracy),
            ("precision_weighted", self.precision_weighted),
            ("recall_weighted", self.recall_weighted),
            ("f1_weighted", self.f1_weighted),
            ("mcc", self.mcc),
            ("auroc_macro", self.auroc_macro),
            ("auroc_micro", self.auroc_micro),
            ("auprc_macro", self.auprc_macro),
            ("auprc_micro", self.auprc_micro),
            ("log_loss", self.log_loss),
        ] {
            m.insert(key.into(), num(v));
        }
        let ci = |c: Option<(f64, f64)>, side: usize| match c {
            Some((lo, hi)) => num(if side == 0 { lo } else { hi }),
            None => Value::Null,
        };
        m.insert("mcc_ci_wald_lo".into(), ci(self.mcc_ci_wald, 0));
        m.insert("mcc_ci_wald_hi".into(), ci(self.mcc_ci_wald, 1));
        m.insert("mcc_ci_clopper_pearson_lo".into(), ci(self.mcc_ci_clopper_pearson, 0));
        m.insert("mcc_ci_clopper_pearson_hi".into(), ci(self.mcc_ci_clopper_pearson, 1));
        for c in 0..self.k {
            m.insert(format!("precision_class_{c}"), num(self.precision[c]));
            m.insert(format!("recall_class_{c}"), num(self.recall[c]));
            m.insert(format!("f1_class_{c}"), num(self.f1[c]));
            m.insert(format!("support_class_{c}"), json!(self.support[c]));
            for p in 0..self.k {
                m.insert(format!("confusion_{c}_{p}"), json!(self.confusion.get(c, p)));
            }
        }
        Value::Object(m)
    }
}

fn mean_defined(vals: &[f64]) -> f64 {
    let defined: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
    if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Full metric suite with support-weighted aggregates and one-vs-rest curves.
pub fn metric_report(preds: &PredictionMatrix) -> Result<MetricReport> {
    const LEVEL: f64 = 0.95;
    let labels = preds.require_labels()?;
    let cm = ConfusionMatrix::from_predictions(preds)?;
    let k = preds.k();
    let n = cm.n();
    let support = cm.true_totals();
    let precision: Vec<f64> = (0..k).map(|c| cm.precision(c)).collect();
    let recall: Vec<f64> = (0..k).map(|c| cm.recall(c)).collect();
    let f1: Vec<f64> = (0..k).map(|c| cm.f1(c)).collect();
    let weighted = |v: &[f64]| -> f64 {
        v.iter().zip(&support).map(|(x, &s)| x * s as f64).sum::<f64>() / n as f64
    };

    let mut aurocs = Vec::with_capacity(k);
    let mut auprcs = Vec::with_capacity(k);
    for c in 0..k {
        aurocs.push(roc_curve(preds, c).map(|cv| auc(&cv)).unwrap_or(f64::NAN));
        auprcs.push(pr_curve(preds, c).map(|cv| average_precision(&cv)).unwrap_or(f64::NAN));
    }
    let flat_scores: Vec<f64> = preds.probs().as_slice().to_vec();
    let flat_pos: Vec<bool> = labels.iter().flat_map(|&l| (0..k).map(move |c| c == l)).collect();
    let auroc_micro = roc_from_scores(&flat_scores, &flat_pos).map(|cv| auc(&cv))?;
    let auprc_micro = pr_from_scores(&flat_scores, &flat_pos).map(|cv| average_precision(&cv))?;

    let mcc = multiclass_mcc(&cm);
    let (mcc_ci_wald, mcc_ci_clopper_pearson) = if (0.0..=1.0).contains(&mcc) {
        let successes = (mcc * n as f64).round() as u64;
        (
            Some(wald_ci(mcc, n, LEVEL)?),
            Some(clopper_pearson_ci(successes, n, LEVEL)?),
        )
    } else {
        (None, None)
    };

    Ok(MetricReport {
        n,
        k,
        accuracy: cm.accuracy(),
        precision_weighted: weighted(&precision),
        recall_weighted: weighted(&recall),
        f1_weighted: weighted(&f1),
        mcc,
        auroc_macro: mean_defined(&aurocs),
        auroc_micro,
        auprc_macro: mean_defined(&auprcs),
        auprc_micro,
        precision,
        recall,
        f1,
        support,
        mcc_ci_wald,
        mcc_ci_clopper_pearson,
        log_loss: preds.log_loss()?,
        confusion: cm,
    })
}

pub fn ci_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Two-proportion z-test on accuracy plus Wald-interval overlap flags.
#[derive(Debug, Clone, Serialize)]
pub struct SignificanceReport {
    pub n: u64,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub z: f64,
    pub p_value: f64,
    pub accuracy_ci_a: (f64, f64),
    pub accuracy_ci_b: (f64, f64),
    pub accuracy_cis_overlap: bool,
    pub mcc_a: f64,
    pub mcc_b: f64,
    /// `None` when either MCC is negative.
    pub mcc_cis_overlap: Option<bool>,
}

pub fn significance_report(a: &PredictionMatrix, b: &PredictionMatrix) -> Result<SignificanceReport> {
    if a.sample_ids() != b.sample_ids() {
        let first = a
            .sample_ids()
            .iter()
            .zip(b.sample_ids())
            .position(|(x, y)| x != y)
            .unwrap_or(a.n().min(b.n()));
        return Err(Error::Misaligned(format!("sample sets differ at row {first}")));
    }
    if a.require_labels()? != b.require_labels()? {
        return Err(Error::Misaligned("true labels differ".into()));
    }
    let n = a.n() as u64;
    let (pa, pb) = (a.accuracy()?, b.accuracy()?);
    let pooled = (pa + pb) / 2.0;
    let se = (pooled * (1.0 - pooled) * 2.0 / n as f64).sqrt();
    let (z, p_value) = if se == 0.0 {
        (0.0, 1.0)
    } else {
        let z = (pa - pb) / se;
        (z, erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
    };
    let accuracy_ci_a = wald_ci(pa, n, 0.95)?;
    let accuracy_ci_b = wald_ci(pb, n, 0.95)?;
    let mcc_a = multiclass_mcc(&ConfusionMatrix::from_predictions(a)?);
    let mcc_b = multiclass_mcc(&ConfusionMatrix::from_predictions(b)?);
    let mcc_cis_overlap = match (wald_ci(mcc_a, n, 0.95), wald_ci(mcc_b, n, 0.95)) {
        (Ok(x), Ok(y)) => Some(ci_overlap(x, y)),
        _ => None,
    };
    Ok(SignificanceReport {
        n,
        accuracy_a: pa,
        accuracy_b: pb,
        z,
        p_value,
        accuracy_ci_a,
        accuracy_ci_b,
        accuracy_cis_overlap: ci_overlap(accuracy_ci_a, accuracy_ci_b),
        mcc_a,
        mcc_b,
        mcc_cis_overlap,
    })
}

/// Predicted class of each row, ties to the lowest index.
pub fn predicted_classes(preds: &PredictionMatrix) -> Vec<usize> {
    preds.probs().iter_rows().map(argmax).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn labeled(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> PredictionMatrix {
        PredictionMatrix::with_default_ids(Matrix::from_rows(&rows).unwrap(), Some(labels)).unwrap()
    }

    fn random_preds(rng: &mut impl Rng, n: usize, k: usize) -> PredictionMatrix {
        let rows = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        labeled(rows, (0..n).map(|_| rng.gen_range(0..k)).collect())
    }

    #[test]
    fn confusion_examples() {
        let p = labeled(vec![vec![0.9, 0.05, 0.05], vec![0.1, 0.8, 0.1]], vec![0, 1]);
        let cm = ConfusionMatrix::from_predictions(&p).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 0]]);

        let p = labeled(vec![vec![0.1, 0.7, 0.2]], vec![0]);
        assert_eq!(ConfusionMatrix::from_predictions(&p).unwrap().get(0, 1), 1);

        let mut rng = seeded_rng(1);
        let p = random_preds(&mut rng, 50, 3);
        let cm = ConfusionMatrix::from_predictions(&p).unwrap();
        assert_eq!(cm.n(), 50);
        let mut brute = [[0u64; 3]; 3];
        for (i, &l) in p.labels().unwrap().iter().enumerate() {
            brute[l][argmax(p.row(i))] += 1;
        }
        for t in 0..3 {
            for q in 0..3 {
                assert_eq!(cm.get(t, q), brute[t][q]);
            }
        }

        let unlabeled =
            PredictionMatrix::with_default_ids(Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap(), None)
                .unwrap();
        assert!(matches!(ConfusionMatrix::from_predictions(&unlabeled), Err(Error::MissingLabels)));
    }

    #[test]
    fn mcc_examples() {
        let diag = ConfusionMatrix::from_counts(&[vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 2]]).unwrap();
        assert_eq!(multiclass_mcc(&diag), 1.0);
        let bin = ConfusionMatrix::from_counts(&[vec![2, 1], vec![1, 2]]).unwrap();
        assert!((multiclass_mcc(&bin) - 1.0 / 3.0).abs() < 1e-15);
        let one_col = ConfusionMatrix::from_counts(&[vec![4, 0], vec![4, 0]]).unwrap();
        assert_eq!(multiclass_mcc(&one_col), 0.0);
        let empty = ConfusionMatrix::from_counts(&[vec![0, 0], vec![0, 0]]).unwrap();
        assert_eq!((multiclass_mcc(&empty), empty.accuracy()), (0.0, 0.0));
    }

    #[test]
    fn wald_examples() {
        let (lo, hi) = wald_ci(0.8899, 624, 0.95).unwrap();
        assert!((lo - 0.8653).abs() < 5e-4 && (hi - 0.9145).abs() < 5e-4);
        let (lo, hi) = wald_ci(0.8996, 624, 0.95).unwrap();
        assert!((lo - 0.8760).abs() < 5e-4 && (hi - 0.9232).abs() < 5e-4);
        let (lo, hi) = wald_ci(0.5, 4, 0.95).unwrap();
        assert!((lo - 0.01).abs() < 5e-3 && (hi - 0.99).abs() < 5e-3);
        assert!(wald_ci(1.2, 10, 0.95).is_err());
        assert!(wald_ci(0.5, 10, 1.0).is_err());
    }

    #[test]
    fn clopper_pearson_examples() {
        let (lo, hi) = clopper_pearson_ci(0, 10, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        assert!((hi - 0.30850).abs() < 1e-5);
        assert_eq!(clopper_pearson_ci(7, 7, 0.95).unwrap().1, 1.0);
        let (lo, hi) = clopper_pearson_ci(5, 10, 0.95).unwrap();
        assert!((lo + hi - 1.0).abs() < 1e-9);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(clopper_pearson_ci(11, 10, 0.95).is_err());
        assert!(clopper_pearson_ci(0, 0, 0.95).is_err());
    }

    #[test]
    fn clopper_pearson_matches_beta_quantiles() {
        use statrs::distribution::Beta;
        for (s, n) in [(3u64, 17u64), (12, 40), (1, 2), (29, 30)] {
            let (lo, hi) = clopper_pearson_ci(s, n, 0.95).unwrap();
            let lo_ref = Beta::new(s as f64, (n - s + 1) as f64).unwrap().inverse_cdf(0.025);
            let hi_ref = Beta::new((s + 1) as f64, (n - s) as f64).unwrap().inverse_cdf(0.975);
            assert!((lo - lo_ref).abs() < 1e-8, "{s}/{n}: {lo} vs {lo_ref}");
            assert!((hi - hi_ref).abs() < 1e-8, "{s}/{n}: {hi} vs {hi_ref}");
        }
    }

    #[test]
    fn roc_examples() {
        let sep = roc_from_scores(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc(&sep), 1.0);
        let tied = roc_from_scores(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(auc(&tied), 0.5);
        let mixed = roc_from_scores(&[0.9, 0.4, 0.7, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc(&mixed), 0.75);
        assert!(roc_from_scores(&[0.1, 0.2], &[true, true]).is_err());
        for w in mixed.points.windows(2) {
            assert!(w[1].0 >= w[0].0);
        }
    }

    #[test]
    fn average_precision_examples() {
        let perfect = pr_from_scores(&[0.9, 0.8, 0.2], &[true, true, false]).unwrap();
        assert_eq!(average_precision(&perfect), 1.0);
        let last = pr_from_scores(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap();
        assert_eq!(average_precision(&last), 0.25);
        let tied = pr_from_scores(&[0.3; 5], &[true, false, false, true, false]).unwrap();
        assert!((average_precision(&tied) - 0.4).abs() < 1e-15);
        assert!(pr_from_scores(&[0.3, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn report_examples() {
        let p = labeled(
            vec![vec![0.9, 0.05, 0.05], vec![0.1, 0.8, 0.1], vec![0.2, 0.2, 0.6]],
            vec![0, 1, 2],
        );
        let r = metric_report(&p).unwrap();
        for v in [r.accuracy, r.precision_weighted, r.recall_weighted, r.f1_weighted, r.mcc, r.auroc_macro, r.auprc_macro] {
            assert_eq!(v, 1.0);
        }

        let mut rng = seeded_rng(2);
        for _ in 0..20 {
            let p = random_preds(&mut rng, 100, 3);
            let r = metric_report(&p).unwrap();
            assert!((r.recall_weighted - r.accuracy).abs() < 1e-15);
            for c in 0..3 {
                let (pc, rc) = (r.precision[c], r.recall[c]);
                let hm = if pc + rc == 0.0 { 0.0 } else { 2.0 * pc * rc / (pc + rc) };
                assert!((r.f1[c] - hm).abs() < 1e-15);
            }
            assert!((-1.0..=1.0).contains(&r.mcc));
        }
    }

    #[test]
    fn flat_json_has_fixed_keys() {
        let mut rng = seeded_rng(9);
        let r = metric_report(&random_preds(&mut rng, 30, 3)).unwrap();
        let v = r.to_flat_json();
        let obj = v.as_object().unwrap();
        for key in ["accuracy", "auroc_macro", "mcc", "mcc_ci_wald_lo", "f1_class_2", "confusion_2_1"] {
            assert!(obj.contains_key(key), "{key}");
        }
        assert!(obj.values().all(|v| !v.is_object() && !v.is_array()));
    }

    #[test]
    fn significance_examples() {
        let mut rng = seeded_rng(3);
        let p = random_preds(&mut rng, 60, 3);
        let s = significance_report(&p, &p).unwrap();
        assert_eq!(s.p_value, 1.0);
        assert!(s.accuracy_cis_overlap);

        let n = 624;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let make = |correct: usize| {
            let rows = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let c = if i < correct { l } else { (l + 1) % 3 };
                    let mut r = vec![0.1; 3];
                    r[c] = 0.8;
                    r
                })
                .collect();
            labeled(rows, labels.clone())
        };
        let s = significance_report(&make(593), &make(312)).unwrap();
        assert!(s.p_value < 1e-6, "{}", s.p_value);

        assert!(ci_overlap((0.86, 0.91), (0.88, 0.93)));
        assert!(!ci_overlap((0.1, 0.2), (0.3, 0.4)));

        let other = random_preds(&mut rng, 59, 3);
        assert!(matches!(significance_report(&p, &other), Err(Error::Misaligned(_))));
    }
}
