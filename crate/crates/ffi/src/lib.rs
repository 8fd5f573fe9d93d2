//! C ABI over the `lossbench` library.
//!
//! Every fallible function returns an [`LbStatus`]; on failure the message is
//! available from [`lb_last_error_message`] on the same thread. Prediction
//! matrices cross the boundary as opaque [`LbPredictions`] handles that the
//! caller releases with [`lb_predictions_free`]. Matrices are row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lossbench::ensemble::{self, EnsembleWeights};
use lossbench::loss::{evaluate_logits, LossFamily, LossSpec};
use lossbench::metrics::{self, metric_report};
use lossbench::seg::{self, BinaryMask, SegLossFamily, SegLossSpec};
use lossbench::{Error, Matrix, PredictionMatrix, TargetMatrix};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NonFinite = 4,
    MissingLabels = 5,
    Misaligned = 6,
    Parse = 7,
    Io = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn status_of(e: &Error) -> LbStatus {
    match e {
        Error::InvalidArgument { .. } => LbStatus::InvalidArgument,
        Error::Shape(_) => LbStatus::Shape,
        Error::MissingLabels => LbStatus::MissingLabels,
        Error::NonFinite(_) => LbStatus::NonFinite,
        Error::Misaligned(_) => LbStatus::Misaligned,
        Error::Parse(_) | Error::Pgm { .. } => LbStatus::Parse,
        Error::Io(_) => LbStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LbStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("`{what}` is NULL"));
            LbStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            LbStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn str_in<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::invalid("string", format!("`{what}` is not UTF-8"))))
}

fn cells(n: usize, k: usize) -> Result<usize, Failure> {
    n.checked_mul(k)
        .ok_or_else(|| Failure::Lib(Error::invalid("shape", "n·k overflows")))
}

fn with_path(e: std::io::Error, path: &str) -> Error {
    Error::from(std::io::Error::new(e.kind(), format!("{path}: {e}")))
}

/// Opaque N×K probability matrix with optional labels.
pub struct LbPredictions(PredictionMatrix);

unsafe fn handle<'a>(h: *const LbPredictions, what: &'static str) -> Result<&'a PredictionMatrix, Failure> {
    h.as_ref().map(|p| &p.0).ok_or(Failure::Null(what))
}

unsafe fn handles(hs: *const *const LbPredictions, m: usize) -> Result<Vec<PredictionMatrix>, Failure> {
    slice_in(hs, m, "models")?
        .iter()
        .map(|&h| handle(h, "models[i]").cloned())
        .collect()
}

fn emit(out: *mut *mut LbPredictions, pm: PredictionMatrix) {
    unsafe { *out = Box::into_raw(Box::new(LbPredictions(pm))) };
}

/// Builds a handle from `n·k` row-major probabilities and optional `n` labels
/// (pass NULL for unlabeled data). Rows must sum to 1.
#[no_mangle]
pub unsafe extern "C" fn lb_predictions_new(
    probs: *const f64,
    n: usize,
    k: usize,
    labels: *const u32,
    out: *mut *mut LbPredictions,
) -> LbStatus {
    guard(|| {
        out_ref(out, "out")?;
        let data = slice_in(probs, cells(n, k)?, "probs")?.to_vec();
        let labels = if labels.is_null() {
            None
        } else {
            Some(slice_in(labels, n, "labels")?.iter().map(|&l| l as usize).collect())
        };
        emit(out, PredictionMatrix::with_default_ids(Matrix::from_vec(n, k, data)?, labels)?);
        Ok(())
    })
}

/// Reads a `sample_id,true_label,p_0,…` CSV.
#[no_mangle]
pub unsafe extern "C" fn lb_predictions_read_csv(path: *const c_char, out: *mut *mut LbPredictions) -> LbStatus {
    guard(|| {
        out_ref(out, "out")?;
        let path = str_in(path, "path")?;
        let f = File::open(path).map_err(|e| with_path(e, path))?;
        emit(out, PredictionMatrix::read_csv(f)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn lb_predictions_write_csv(h: *const LbPredictions, path: *const c_char) -> LbStatus {
    guard(|| {
        let pm = handle(h, "handle")?;
        let path = str_in(path, "path")?;
        let f = File::create(path).map_err(|e| with_path(e, path))?;
        pm.write_csv(f)?;
        Ok(())
    })
}

/// Releases a handle; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn lb_predictions_free(h: *mut LbPredictions) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

#[no_mangle]
pub unsafe extern "C" fn lb_predictions_shape(h: *const LbPredictions, n: *mut usize, k: *mut usize) -> LbStatus {
    guard(|| {
        let pm = handle(h, "handle")?;
        *out_ref(n, "n")? = pm.n();
        *out_ref(k, "k")? = pm.k();
        Ok(())
    })
}

/// Copies the probabilities into `out` (`len` must equal n·k).
#[no_mangle]
pub unsafe extern "C" fn lb_predictions_probs(h: *const LbPredictions, out: *mut f64, len: usize) -> LbStatus {
    guard(|| {
        let pm = handle(h, "handle")?;
        let src = pm.probs().as_slice();
        if len != src.len() {
            return Err(Error::Shape(format!("buffer of {len} for {} values", src.len())).into());
        }
        slice_out(out, len, "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// Loss family and hyperparameters; `family` indexes the order of
/// `lb_loss_family_from_name` names.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LbLossSpec {
    pub family: u32,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub sigma: f64,
}

fn family_at(i: u32) -> Result<LossFamily, Failure> {
    LossFamily::ALL
        .get(i as usize)
        .copied()
        .ok_or_else(|| Failure::Lib(Error::invalid("family", format!("index {i} out of range"))))
}

impl LbLossSpec {
    fn to_spec(self) -> Result<LossSpec, Failure> {
        Ok(LossSpec {
            family: family_at(self.family)?,
            beta: self.beta,
            lambda: self.lambda,
            gamma: self.gamma,
            sigma: self.sigma,
        })
    }
}

/// Index of a loss family by its snake_case name (e.g. `calibrated_cce`).
#[no_mangle]
pub unsafe extern "C" fn lb_loss_family_from_name(name: *const c_char, family: *mut u32) -> LbStatus {
    guard(|| {
        let f: LossFamily = str_in(name, "name")?.parse()?;
        *out_ref(family, "family")? = LossFamily::ALL.iter().position(|&x| x == f).expect("listed") as u32;
        Ok(())
    })
}

/// Default hyperparameters for `family`.
#[no_mangle]
pub unsafe extern "C" fn lb_loss_spec_default(family: u32, out: *mut LbLossSpec) -> LbStatus {
    guard(|| {
        let s = LossSpec::new(family_at(family)?);
        *out_ref(out, "out")? = LbLossSpec {
            family,
            beta: s.beta,
            lambda: s.lambda,
            gamma: s.gamma,
            sigma: s.sigma,
        };
        Ok(())
    })
}

/// Loss of `n×k` logits against integer labels; `grad_logits` (n·k values)
/// receives the gradient unless NULL.
#[no_mangle]
pub unsafe extern "C" fn lb_loss_evaluate(
    spec: *const LbLossSpec,
    logits: *const f64,
    labels: *const u32,
    n: usize,
    k: usize,
    value: *mut f64,
    grad_logits: *mut f64,
) -> LbStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or(Failure::Null("spec"))?.to_spec()?;
        let x = Matrix::from_vec(n, k, slice_in(logits, cells(n, k)?, "logits")?.to_vec())?;
        let labels: Vec<usize> = slice_in(labels, n, "labels")?.iter().map(|&l| l as usize).collect();
        let report = evaluate_logits(&spec, &x, &TargetMatrix::one_hot(&labels, k)?)?;
        *out_ref(value, "value")? = report.value;
        if !grad_logits.is_null() {
            slice_out(grad_logits, n * k, "grad_logits")?.copy_from_slice(report.grad_logits.as_slice());
        }
        Ok(())
    })
}

/// Headline metrics of a labeled prediction matrix; undefined AUCs are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LbMetricSummary {
    pub n: u64,
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    pub f1_weighted: f64,
    pub mcc: f64,
    pub auroc_macro: f64,
    pub auprc_macro: f64,
    pub log_loss: f64,
}

#[no_mangle]
pub unsafe extern "C" fn lb_metric_summary(h: *const LbPredictions, out: *mut LbMetricSummary) -> LbStatus {
    guard(|| {
        let r = metric_report(handle(h, "handle")?)?;
        *out_ref(out, "out")? = LbMetricSummary {
            n: r.n,
            accuracy: r.accuracy,
            precision_weighted: r.precision_weighted,
            recall_weighted: r.recall_weighted,
            f1_weighted: r.f1_weighted,
            mcc: r.mcc,
            auroc_macro: r.auroc_macro,
            auprc_macro: r.auprc_macro,
            log_loss: r.log_loss,
        };
        Ok(())
    })
}

/// Normal-approximation interval for a proportion-like metric over `n` samples.
#[no_mangle]
pub unsafe extern "C" fn lb_wald_ci(metric: f64, n: u64, level: f64, lo: *mut f64, hi: *mut f64) -> LbStatus {
    guard(|| {
        let (a, b) = metrics::wald_ci(metric, n, level)?;
        *out_ref(lo, "lo")? = a;
        *out_ref(hi, "hi")? = b;
        Ok(())
    })
}

/// Exact binomial interval for `successes` out of `n`.
#[no_mangle]
pub unsafe extern "C" fn lb_clopper_pearson_ci(
    successes: u64,
    n: u64,
    level: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> LbStatus {
    guard(|| {
        let (a, b) = metrics::clopper_pearson_ci(successes, n, level)?;
        *out_ref(lo, "lo")? = a;
        *out_ref(hi, "hi")? = b;
        Ok(())
    })
}

/// Log-loss-minimizing simplex weights for `m` labeled, aligned models.
#[no_mangle]
pub unsafe extern "C" fn lb_fit_weights(
    models: *const *const LbPredictions,
    m: usize,
    weights: *mut f64,
    log_loss: *mut f64,
) -> LbStatus {
    guard(|| {
        let ms = handles(models, m)?;
        let fit = ensemble::fit_weights(&ms)?;
        slice_out(weights, m, "weights")?.copy_from_slice(fit.weights.as_slice());
        *out_ref(log_loss, "log_loss")? = fit.log_loss;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbCombineMethod {
    Vote = 0,
    Simple = 1,
    Weighted = 2,
}

/// Combines `m` aligned models; `weights` (m values) is read only for
/// `LB_COMBINE_METHOD_WEIGHTED`.
#[no_mangle]
pub unsafe extern "C" fn lb_combine(
    models: *const *const LbPredictions,
    m: usize,
    method: LbCombineMethod,
    weights: *const f64,
    out: *mut *mut LbPredictions,
) -> LbStatus {
    guard(|| {
        out_ref(out, "out")?;
        let ms = handles(models, m)?;
        let fused = match method {
            LbCombineMethod::Vote => ensemble::majority_vote(&ms)?,
            LbCombineMethod::Simple => ensemble::simple_average(&ms)?,
            LbCombineMethod::Weighted => {
                let w = EnsembleWeights::new(slice_in(weights, m, "weights")?.to_vec())?;
                ensemble::weighted_combine(&ms, &w)?
            }
        };
        emit(out, fused);
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LbMaskMetrics {
    pub iou: f64,
    pub dice: f64,
    pub accuracy: f64,
}

unsafe fn mask(p: *const f64, h: usize, w: usize, what: &'static str) -> Result<BinaryMask, Failure> {
    Ok(BinaryMask::new(h, w, slice_in(p, cells(h, w)?, what)?.to_vec())?)
}

/// IoU, Dice and pixel accuracy of two hard `h×w` masks.
#[no_mangle]
pub unsafe extern "C" fn lb_mask_metrics(
    pred: *const f64,
    truth: *const f64,
    h: usize,
    w: usize,
    out: *mut LbMaskMetrics,
) -> LbStatus {
    guard(|| {
        let m = seg::mask_metrics(&mask(pred, h, w, "pred")?, &mask(truth, h, w, "truth")?)?;
        *out_ref(out, "out")? = LbMaskMetrics {
            iou: m.iou,
            dice: m.dice,
            accuracy: m.accuracy,
        };
        Ok(())
    })
}

/// Pixelwise AND of `m` hard masks, each `h·w` values laid out back to back.
#[no_mangle]
pub unsafe extern "C" fn lb_mask_and(masks: *const f64, m: usize, h: usize, w: usize, out: *mut f64) -> LbStatus {
    guard(|| {
        let px = cells(h, w)?;
        let all = slice_in(masks, cells(m, px)?, "masks")?;
        let ms = all
            .chunks(px.max(1))
            .map(|c| BinaryMask::new(h, w, c.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let fused = seg::and_fuse(&ms)?;
        slice_out(out, px, "out")?.copy_from_slice(fused.data());
        Ok(())
    })
}

/// Segmentation loss parameters; `family` follows `lb_seg_loss_spec_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LbSegLossSpec {
    pub family: u32,
    pub bce_weight: f64,
    pub alpha_fp: f64,
    pub beta_fn: f64,
    pub gamma_ft: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub epsilon: f64,
}

/// Defaults for family 0 bce, 1 weighted_bce_dice, 2 focal, 3 tversky, 4 focal_tversky.
#[no_mangle]
pub unsafe extern "C" fn lb_seg_loss_spec_default(family: u32, out: *mut LbSegLossSpec) -> LbStatus {
    guard(|| {
        let f = seg_family_at(family)?;
        let s = SegLossSpec::new(f);
        *out_ref(out, "out")? = LbSegLossSpec {
            family,
            bce_weight: s.bce_weight,
            alpha_fp: s.alpha_fp,
            beta_fn: s.beta_fn,
            gamma_ft: s.gamma_ft,
            focal_alpha: s.focal_alpha,
            focal_gamma: s.focal_gamma,
            epsilon: s.epsilon,
        };
        Ok(())
    })
}

fn seg_family_at(i: u32) -> Result<SegLossFamily, Failure> {
    SegLossFamily::ALL
        .get(i as usize)
        .copied()
        .ok_or_else(|| Failure::Lib(Error::invalid("family", format!("index {i} out of range"))))
}

/// Loss of a soft `h×w` prediction against a hard truth mask.
#[no_mangle]
pub unsafe extern "C" fn lb_seg_loss(
    spec: *const LbSegLossSpec,
    pred: *const f64,
    truth: *const f64,
    h: usize,
    w: usize,
    value: *mut f64,
) -> LbStatus {
    guard(|| {
        let s = *spec.as_ref().ok_or(Failure::Null("spec"))?;
        let spec = SegLossSpec {
            family: seg_family_at(s.family)?,
            bce_weight: s.bce_weight,
            alpha_fp: s.alpha_fp,
            beta_fn: s.beta_fn,
            gamma_ft: s.gamma_ft,
            focal_alpha: s.focal_alpha,
            focal_gamma: s.focal_gamma,
            epsilon: s.epsilon,
        };
        *out_ref(value, "value")? = seg::seg_loss(&spec, &mask(pred, h, w, "pred")?, &mask(truth, h, w, "truth")?)?;
        Ok(())
    })
}
