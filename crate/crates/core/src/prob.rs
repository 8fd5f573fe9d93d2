//! Probability, label and batch primitives shared by every other module.
//!
//! Entropies are in nats. Argmax ties always resolve to the lowest class index
//! so that per-sample correctness indicators are reproducible.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Row-sum tolerance for anything that claims to be a probability vector.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Lower clamp applied to probabilities before any log or power.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_stochastic(row: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&p) {
            return Err(Error::invalid("probs", format!("{what}: entry {p} outside [0,1]")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid("probs", format!("{what}: row sums to {sum}")));
    }
    Ok(())
}

/// A single length-K probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid("probs", "need at least two classes"));
        }
        check_stochastic(&probs, "distribution")?;
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Max-subtracted softmax of one logit vector.
pub fn softmax(logits: &[f64]) -> Result<ClassDistribution> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    if logits.len() < 2 {
        return Err(Error::invalid("logits", "need at least two classes"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(ClassDistribution(out))
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax of an N×K logit matrix.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    if !logits.all_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// Shannon entropy in nats with `0·log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// N×K matrix of class probabilities, optionally labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    probs: Matrix,
    labels: Option<Vec<usize>>,
    sample_ids: Vec<String>,
}

impl PredictionMatrix {
    pub fn new(probs: Matrix, labels: Option<Vec<usize>>, sample_ids: Vec<String>) -> Result<Self> {
        let (n, k) = probs.shape();
        if n == 0 {
            return Err(Error::invalid("probs", "need at least one sample"));
        }
        if k < 2 {
            return Err(Error::invalid("probs", "need at least two classes"));
        }
        if sample_ids.len() != n {
            return Err(Error::Shape(format!("{} sample ids for {n} rows", sample_ids.len())));
        }
        for (i, row) in probs.iter_rows().enumerate() {
            check_stochastic(row, &format!("row {i}"))?;
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= k) {
                return Err(Error::invalid("labels", format!("label {bad} out of range for K={k}")));
            }
        }
        Ok(Self {
            probs,
            labels,
            sample_ids,
        })
    }

    /// Builds a matrix with ids `0..N`.
    pub fn with_default_ids(probs: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let ids = (0..probs.rows()).map(|i| i.to_string()).collect();
        Self::new(probs, labels, ids)
    }

    pub fn n(&self) -> usize {
        self.probs.rows()
    }

    pub fn k(&self) -> usize {
        self.probs.cols()
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.probs.row(i)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn predicted(&self) -> Vec<usize> {
        self.probs.iter_rows().map(argmax).collect()
    }

    /// Mean negative log-likelihood of the true class, clamped.
    pub fn log_loss(&self) -> Result<f64> {
        let labels = self.require_labels()?;
        let n = self.n() as f64;
        Ok(labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -clamp_prob(self.probs.get(i, l)).ln())
            .sum::<f64>()
            / n)
    }

    pub fn accuracy(&self) -> Result<f64> {
        let labels = self.require_labels()?;
        let hits = self
            .probs
            .iter_rows()
            .zip(labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
        Ok(hits as f64 / self.n() as f64)
    }

    /// Reads the `sample_id,true_label,p_0,...,p_{K-1}` CSV format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 4 || &headers[0] != "sample_id" || &headers[1] != "true_label" {
            return Err(Error::Parse(
                "header must be `sample_id,true_label,p_0,...,p_{K-1}`".into(),
            ));
        }
        for (j, h) in headers.iter().skip(2).enumerate() {
            if h != format!("p_{j}") {
                return Err(Error::Parse(format!("expected column `p_{j}`, found `{h}`")));
            }
        }
        let k = headers.len() - 2;
        let mut ids = Vec::new();
        let mut labels: Vec<Option<usize>> = Vec::new();
        let mut data = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != k + 2 {
                return Err(Error::Parse(format!("record {}: expected {} fields", line + 1, k + 2)));
            }
            ids.push(rec[0].to_string());
            let label = rec[1].trim();
            labels.push(if label.is_empty() {
                None
            } else {
                Some(label.parse::<usize>().map_err(|e| {
                    Error::Parse(format!("record {}: bad label `{label}`: {e}", line + 1))
                })?)
            });
            for field in rec.iter().skip(2) {
                data.push(field.trim().parse::<f64>().map_err(|e| {
                    Error::Parse(format!("record {}: bad probability `{field}`: {e}", line + 1))
                })?);
            }
        }
        let n = ids.len();
        let labels = if labels.iter().all(Option::is_some) {
            Some(labels.into_iter().flatten().collect())
        } else if labels.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::Parse("true_label must be present for all rows or none".into()));
        };
        Self::new(Matrix::from_vec(n, k, data)?, labels, ids)
    }

    /// Writes the CSV format with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "true_label".to_string()];
        header.extend((0..self.k()).map(|j| format!("p_{j}")));
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = Vec::with_capacity(self.k() + 2);
            rec.push(self.sample_ids[i].clone());
            rec.push(self.labels.as_ref().map_or(String::new(), |l| l[i].to_string()));
            rec.extend(self.probs.row(i).iter().map(|p| format!("{p:?}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// N×K matrix of target distributions (one-hot or smoothed).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix(Matrix);

impl TargetMatrix {
    pub fn new(rows: Matrix) -> Result<Self> {
        if rows.cols() < 2 {
            return Err(Error::invalid("targets", "need at least two classes"));
        }
        for (i, row) in rows.iter_rows().enumerate() {
            check_stochastic(row, &format!("target row {i}"))?;
        }
        Ok(Self(rows))
    }

    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("k", "need at least two classes"));
        }
        let mut m = Matrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::invalid("labels", format!("label {l} out of range for K={k}")));
            }
            m.set(i, l, 1.0);
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn k(&self) -> usize {
        self.0.cols()
    }

    /// Class index of each row's largest target mass.
    pub fn labels(&self) -> Vec<usize> {
        self.0.iter_rows().map(argmax).collect()
    }
}

/// Replaces each row with `(1−σ)·row + σ/K`.
pub fn smooth_labels(targets: &TargetMatrix, sigma: f64) -> Result<TargetMatrix> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::invalid("sigma", format!("{sigma} outside [0,1)")));
    }
    let k = targets.k() as f64;
    let mut m = targets.0.clone();
    for v in m.as_mut_slice() {
        *v = (1.0 - sigma) * *v + sigma / k;
    }
    Ok(TargetMatrix(m))
}

/// Batch-level confidence/accuracy statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchCalibrationStats {
    pub mean_accuracy: f64,
    pub mean_confidence: f64,
    pub difference: f64,
}

impl BatchCalibrationStats {
    pub(crate) fn compute(probs: &Matrix, labels: &[usize]) -> Self {
        let n = probs.rows() as f64;
        let mut hits = 0usize;
        let mut conf = 0.0;
        for (row, &l) in probs.iter_rows().zip(labels) {
            let j = argmax(row);
            conf += row[j];
            if j == l {
                hits += 1;
            }
        }
        let mean_accuracy = hits as f64 / n;
        let mean_confidence = conf / n;
        Self {
            mean_accuracy,
            mean_confidence,
            difference: (mean_accuracy - mean_confidence).abs(),
        }
    }
}

pub fn calibration_stats(preds: &PredictionMatrix) -> Result<BatchCalibrationStats> {
    let labels = preds.require_labels()?;
    Ok(BatchCalibrationStats::compute(preds.probs(), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn preds(rows: &[Vec<f64>], labels: &[usize]) -> PredictionMatrix {
        PredictionMatrix::with_default_ids(Matrix::from_rows(rows).unwrap(), Some(labels.to_vec()))
            .unwrap()
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for &p in u.probs() {
            assert!(close(p, 1.0 / 3.0, 1e-15));
        }
        let d = softmax(&[2f64.ln(), 0.0, 0.0]).unwrap();
        assert!(close(d.probs()[0], 0.5, 1e-15));
        assert!(close(d.probs()[1], 0.25, 1e-15));
        assert!(close(d.probs()[2], 0.25, 1e-15));
        assert!(softmax(&[1.0, f64::NAN]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert!(close(entropy(&[1.0 / 3.0; 3]), 3f64.ln(), 1e-12));
        assert!(close(entropy(&[0.5, 0.25, 0.25]), 1.039721, 1e-6));
    }

    #[test]
    fn smoothing_examples() {
        let t = TargetMatrix::one_hot(&[0, 2], 3).unwrap();
        assert_eq!(smooth_labels(&t, 0.0).unwrap(), t);
        let s = smooth_labels(&t, 0.2).unwrap();
        assert!(close(s.matrix().get(0, 0), 0.866667, 1e-6));
        assert!(close(s.matrix().get(0, 1), 0.066667, 1e-6));
        let uni = TargetMatrix::new(Matrix::from_rows(&[vec![1.0 / 3.0; 3]]).unwrap()).unwrap();
        let su = smooth_labels(&uni, 0.2).unwrap();
        assert!(su.matrix().max_abs_diff(uni.matrix()) < 1e-15);
        assert!(smooth_labels(&t, 1.0).is_err());
        assert!(smooth_labels(&t, -0.1).is_err());
    }

    #[test]
    fn calibration_examples() {
        let perfect = preds(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]], &[0, 2]);
        assert_eq!(calibration_stats(&perfect).unwrap().difference, 0.0);

        let two = preds(&[vec![0.9, 0.05, 0.05], vec![0.8, 0.1, 0.1]], &[0, 1]);
        let s = calibration_stats(&two).unwrap();
        assert!(close(s.mean_accuracy, 0.5, 1e-15));
        assert!(close(s.mean_confidence, 0.85, 1e-15));
        assert!(close(s.difference, 0.35, 1e-15));

        let one = preds(&[vec![0.6, 0.3, 0.1]], &[0]);
        assert!(close(calibration_stats(&one).unwrap().difference, 0.4, 1e-15));

        let unlabeled =
            PredictionMatrix::with_default_ids(Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap(), None)
                .unwrap();
        assert!(matches!(calibration_stats(&unlabeled), Err(Error::MissingLabels)));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn prediction_matrix_validation() {
        let bad = Matrix::from_rows(&[vec![0.6, 0.6]]).unwrap();
        assert!(PredictionMatrix::with_default_ids(bad, None).is_err());
        let ok = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(PredictionMatrix::with_default_ids(ok.clone(), Some(vec![2])).is_err());
        assert!(PredictionMatrix::with_default_ids(Matrix::zeros(0, 3), None).is_err());
    }

    #[test]
    fn csv_rejects_partial_labels() {
        let text = "sample_id,true_label,p_0,p_1\na,0,0.5,0.5\nb,,0.5,0.5\n";
        assert!(PredictionMatrix::read_csv(text.as_bytes()).is_err());
        let text = "id,true_label,p_0,p_1\na,0,0.5,0.5\n";
        assert!(PredictionMatrix::read_csv(text.as_bytes()).is_err());
    }

    fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
        (2usize..8).prop_flat_map(|k| prop::collection::vec(-30.0f64..30.0, k))
    }

    proptest! {
        #[test]
        fn softmax_is_stochastic_and_shift_invariant(logits in logits_strategy(), c in -50.0f64..50.0) {
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.probs().iter().zip(q.probs()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300) + 1e-15);
            }
            prop_assert_eq!(p.argmax(), argmax(&logits));
        }

        #[test]
        fn entropy_bounded_by_log_k(logits in logits_strategy()) {
            let p = softmax(&logits).unwrap();
            let h = entropy(p.probs());
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.probs().len() as f64).ln() + 1e-12);
        }

        #[test]
        fn smoothing_preserves_sums_and_argmax(
            labels in prop::collection::vec(0usize..4, 1..10),
            sigma in 0.0f64..0.74,
        ) {
            let t = TargetMatrix::one_hot(&labels, 4).unwrap();
            let s = smooth_labels(&t, sigma).unwrap();
            for row in s.matrix().iter_rows() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            prop_assert_eq!(s.labels(), labels);
        }

        #[test]
        fn difference_in_unit_interval(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..20),
            seed in 0usize..3,
        ) {
            let logits = Matrix::from_rows(&rows).unwrap();
            let probs = softmax_rows(&logits).unwrap();
            let labels: Vec<usize> = (0..rows.len()).map(|i| (i + seed) % 3).collect();
            let p = PredictionMatrix::with_default_ids(probs, Some(labels)).unwrap();
            let s = calibration_stats(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.difference));
            prop_assert_eq!(s.difference, (s.mean_accuracy - s.mean_confidence).abs());
        }

        #[test]
        fn csv_round_trip_is_lossless(
            rows in prop::collection::vec(prop::collection::vec(-8.0f64..8.0, 3), 1..12),
            labeled in any::<bool>(),
        ) {
            let probs = softmax_rows(&Matrix::from_rows(&rows).unwrap()).unwrap();
            let labels = labeled.then(|| (0..rows.len()).map(|i| i % 3).collect());
            let p = PredictionMatrix::with_default_ids(probs, labels).unwrap();
            let mut buf = Vec::new();
            p.write_csv(&mut buf).unwrap();
            let back = PredictionMatrix::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
