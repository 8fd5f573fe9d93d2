use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use lossbench::loss::{evaluate_logits, LossFamily, LossSpec};
use lossbench::{Matrix, TargetMatrix};
use lossbench_ffi::*;

fn last_error() -> String {
    let p = lb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn preds(probs: &[f64], k: usize, labels: &[u32]) -> *mut LbPredictions {
    let mut h = ptr::null_mut();
    let st = unsafe { lb_predictions_new(probs.as_ptr(), labels.len(), k, labels.as_ptr(), &mut h) };
    assert_eq!(st, LbStatus::Ok, "{}", last_error());
    h
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(lb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn handle_round_trip_and_metrics() {
    let probs = [0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7];
    let h = preds(&probs, 2, &[0, 1, 1, 1]);
    let (mut n, mut k) = (0, 0);
    unsafe {
        assert_eq!(lb_predictions_shape(h, &mut n, &mut k), LbStatus::Ok);
        assert_eq!((n, k), (4, 2));

        let mut short = [0.0; 3];
        assert_eq!(lb_predictions_probs(h, short.as_mut_ptr(), 3), LbStatus::Shape);
        let mut buf = [0.0; 8];
        assert_eq!(lb_predictions_probs(h, buf.as_mut_ptr(), 8), LbStatus::Ok);
        assert_eq!(buf, probs);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.csv").to_str().unwrap()).unwrap();
        assert_eq!(lb_predictions_write_csv(h, path.as_ptr()), LbStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(lb_predictions_read_csv(path.as_ptr(), &mut back), LbStatus::Ok);

        let mut s = LbMetricSummary::default();
        assert_eq!(lb_metric_summary(back, &mut s), LbStatus::Ok);
        assert_eq!(s.n, 4);
        assert_eq!(s.accuracy, 0.75);
        let mcc = 2.0 / 3f64.sqrt() / 2.0; // tp=2 tn=1 fp=0 fn=1
        assert!((s.mcc - mcc).abs() < 1e-12, "{}", s.mcc);

        lb_predictions_free(back);
        lb_predictions_free(h);
        lb_predictions_free(ptr::null_mut());
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut h = ptr::null_mut();
    unsafe {
        let st = lb_predictions_new(ptr::null(), 2, 2, ptr::null(), &mut h);
        assert_eq!(st, LbStatus::NullPointer);
        assert!(last_error().contains("probs"));

        let bad = [0.5, 0.6];
        assert_ne!(lb_predictions_new(bad.as_ptr(), 1, 2, ptr::null(), &mut h), LbStatus::Ok);
        assert!(h.is_null());

        let missing = CString::new("/nonexistent/p.csv").unwrap();
        assert_eq!(lb_predictions_read_csv(missing.as_ptr(), &mut h), LbStatus::Io);
        assert!(last_error().contains("/nonexistent/p.csv"));

        let mut f = 0;
        let name = CString::new("no_such_loss").unwrap();
        assert_eq!(lb_loss_family_from_name(name.as_ptr(), &mut f), LbStatus::InvalidArgument);

        let unlabeled = preds(&[1.0, 0.0], 2, &[0]);
        let u = {
            let mut u = ptr::null_mut();
            assert_eq!(lb_predictions_new([0.3, 0.7].as_ptr(), 1, 2, ptr::null(), &mut u), LbStatus::Ok);
            u
        };
        let mut s = LbMetricSummary::default();
        assert_eq!(lb_metric_summary(u, &mut s), LbStatus::MissingLabels);
        lb_predictions_free(u);
        lb_predictions_free(unlabeled);
    }
}

#[test]
fn loss_matches_library() {
    let logits = [0.3, -1.2, 2.0, 0.5, 0.1, -0.4];
    let labels = [2u32, 0];
    for (i, family) in LossFamily::ALL.iter().enumerate() {
        let mut f = u32::MAX;
        let name = CString::new(family.name()).unwrap();
        let mut spec = LbLossSpec { family: 0, beta: 0.0, lambda: 0.0, gamma: 0.0, sigma: 0.0 };
        let mut value = 0.0;
        let mut grad = [0.0; 6];
        unsafe {
            assert_eq!(lb_loss_family_from_name(name.as_ptr(), &mut f), LbStatus::Ok);
            assert_eq!(f as usize, i);
            assert_eq!(lb_loss_spec_default(f, &mut spec), LbStatus::Ok);
            let st = lb_loss_evaluate(&spec, logits.as_ptr(), labels.as_ptr(), 2, 3, &mut value, grad.as_mut_ptr());
            assert_eq!(st, LbStatus::Ok, "{}", last_error());
        }
        let x = Matrix::from_vec(2, 3, logits.to_vec()).unwrap();
        let y = TargetMatrix::one_hot(&[2, 0], 3).unwrap();
        let r = evaluate_logits(&LossSpec::new(*family), &x, &y).unwrap();
        assert_eq!(value, r.value, "{}", family.name());
        assert_eq!(&grad[..], r.grad_logits.as_slice());
    }
    let mut spec = LbLossSpec { family: 99, beta: 0.0, lambda: 0.0, gamma: 0.0, sigma: 0.0 };
    let mut v = 0.0;
    let st = unsafe { lb_loss_evaluate(&spec, logits.as_ptr(), labels.as_ptr(), 2, 3, &mut v, ptr::null_mut()) };
    assert_eq!(st, LbStatus::InvalidArgument);
    spec.family = 0;
    let st = unsafe { lb_loss_evaluate(&spec, logits.as_ptr(), labels.as_ptr(), 2, 3, &mut v, ptr::null_mut()) };
    assert_eq!(st, LbStatus::Ok);
}

#[test]
fn intervals() {
    let (mut lo, mut hi) = (0.0, 0.0);
    unsafe {
        assert_eq!(lb_wald_ci(0.9, 100, 0.95, &mut lo, &mut hi), LbStatus::Ok);
        let half = 1.959963984540054 * (0.9f64 * 0.1 / 100.0).sqrt();
        assert!((lo - (0.9 - half)).abs() < 1e-9 && (hi - (0.9 + half)).abs() < 1e-9);

        assert_eq!(lb_clopper_pearson_ci(0, 10, 0.95, &mut lo, &mut hi), LbStatus::Ok);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);

        assert_eq!(lb_wald_ci(0.5, 10, 1.5, &mut lo, &mut hi), LbStatus::InvalidArgument);
        assert_eq!(lb_wald_ci(0.5, 10, 0.95, ptr::null_mut(), &mut hi), LbStatus::NullPointer);
    }
}

#[test]
fn ensemble_weights_and_combine() {
    let labels = [0u32, 1, 1, 0];
    let good = preds(&[0.9, 0.1, 0.2, 0.8, 0.3, 0.7, 0.8, 0.2], 2, &labels);
    let bad = preds(&[0.4, 0.6, 0.6, 0.4, 0.5, 0.5, 0.5, 0.5], 2, &labels);
    let models = [good as *const LbPredictions, bad as *const LbPredictions];
    unsafe {
        let mut w = [0.0; 2];
        let mut ll = 0.0;
        assert_eq!(lb_fit_weights(models.as_ptr(), 2, w.as_mut_ptr(), &mut ll), LbStatus::Ok);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-12);
        assert!(w[0] > 0.99, "{w:?}");

        let mut fused = ptr::null_mut();
        let half = [0.5, 0.5];
        assert_eq!(
            lb_combine(models.as_ptr(), 2, LbCombineMethod::Weighted, half.as_ptr(), &mut fused),
            LbStatus::Ok
        );
        let mut buf = [0.0; 8];
        lb_predictions_probs(fused, buf.as_mut_ptr(), 8);
        assert!((buf[0] - 0.65).abs() < 1e-12);
        lb_predictions_free(fused);

        assert_eq!(lb_combine(models.as_ptr(), 2, LbCombineMethod::Vote, ptr::null(), &mut fused), LbStatus::Ok);
        lb_predictions_free(fused);

        let short = preds(&[1.0, 0.0], 2, &[0]);
        let mixed = [good as *const LbPredictions, short as *const LbPredictions];
        let st = lb_combine(mixed.as_ptr(), 2, LbCombineMethod::Simple, ptr::null(), &mut fused);
        assert_ne!(st, LbStatus::Ok);
        lb_predictions_free(short);
        lb_predictions_free(good);
        lb_predictions_free(bad);
    }
}

#[test]
fn masks() {
    let pred = [1.0, 1.0, 0.0, 0.0];
    let truth = [1.0, 0.0, 0.0, 0.0];
    let mut m = LbMaskMetrics::default();
    unsafe {
        assert_eq!(lb_mask_metrics(pred.as_ptr(), truth.as_ptr(), 2, 2, &mut m), LbStatus::Ok);
        assert_eq!((m.iou, m.accuracy), (0.5, 0.75));
        assert!((m.dice - 2.0 / 3.0).abs() < 1e-12);

        let stack = [pred, truth].concat();
        let mut out = [9.0; 4];
        assert_eq!(lb_mask_and(stack.as_ptr(), 2, 2, 2, out.as_mut_ptr()), LbStatus::Ok);
        assert_eq!(out, truth);

        let soft = [0.9, 0.6, 0.1, 0.2];
        let mut tv = 0.0;
        let mut spec = std::mem::zeroed::<LbSegLossSpec>();
        assert_eq!(lb_seg_loss_spec_default(3, &mut spec), LbStatus::Ok);
        spec.alpha_fp = 0.5;
        spec.beta_fn = 0.5;
        assert_eq!(lb_seg_loss(&spec, soft.as_ptr(), truth.as_ptr(), 2, 2, &mut tv), LbStatus::Ok);
        // tp 0.9, fp 0.9, fn 0.1: Dice with ε=1
        let dice = 1.0 - (2.0 * 0.9 + 1.0) / (2.0 * 0.9 + 0.9 + 0.1 + 1.0);
        assert!((tv - dice).abs() < 1e-12, "{tv} vs {dice}");

        assert_eq!(lb_seg_loss_spec_default(5, &mut spec), LbStatus::InvalidArgument);
    }
}

#[test]
fn header_is_valid_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/lossbench.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["lb_predictions_new", "lb_loss_evaluate", "lb_fit_weights", "LB_STATUS_MISALIGNED"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
