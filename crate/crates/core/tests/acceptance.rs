//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use lossbench::ensemble::{fit_weights, fusion_head_gradient_check, weighted_combine};
use lossbench::loss::{evaluate_logits, loss_gradient_check, LossFamily, LossSpec};
use lossbench::metrics::{auc, clopper_pearson_ci, metric_report, multiclass_mcc, roc_from_scores, wald_ci, ConfusionMatrix};
use lossbench::nn::{generate_dataset, run_multiloss_experiment, SyntheticDatasetConfig, TrainConfig};
use lossbench::rng::seeded_rng;
use lossbench::run::{checkpoint_file, predictions_file, run_train, sha256_file, verify_dir, RunConfig, TrainRunConfig};
use lossbench::seg::{and_fuse, contrast_stretch, dice_loss, mask_metrics, seg_loss, tversky_loss, BinaryMask, Image, SegLossFamily, SegLossSpec};
use lossbench::{Matrix, PredictionMatrix, TargetMatrix};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: u64) -> Result<(), String> {
    check(elapsed.as_secs() < budget_s, || format!("took {elapsed:?}, budget {budget_s} s"))
}

fn c1_wald() -> Outcome {
    let cases = [(0.8899, (0.8653, 0.9145)), (0.8996, (0.8760, 0.9232))];
    let mut worst = 0.0f64;
    for (m, (lo, hi)) in cases {
        let (a, b) = wald_ci(m, 624, 0.95).map_err(|e| e.to_string())?;
        worst = worst.max((a - lo).abs()).max((b - hi).abs());
        check((a - lo).abs() <= 5e-4 && (b - hi).abs() <= 5e-4, || {
            format!("wald_ci({m}, 624) = ({a:.5}, {b:.5}), expected ({lo}, {hi})")
        })?;
    }
    Ok(format!("max bound deviation {worst:.2e}"))
}

fn c2_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut worst = (String::new(), 0.0f64);
    for (i, family) in LossFamily::ALL.iter().enumerate() {
        let r = loss_gradient_check(&LossSpec::new(*family), 100, 1e-5, 1000 + i as u64).map_err(|e| e.to_string())?;
        if r.max_rel_error > worst.1 {
            worst = (family.name().to_string(), r.max_rel_error);
        }
    }
    let fusion = fusion_head_gradient_check(8, 4, 3, 100, 1e-5, 2000).map_err(|e| e.to_string())?;
    if fusion > worst.1 {
        worst = ("fusion_head".into(), fusion);
    }
    check(worst.1 < 1e-4, || format!("{} relative error {:.3e}", worst.0, worst.1))?;
    within(t0.elapsed(), 60)?;
    Ok(format!("12 losses + fusion head, worst {} {:.2e}, {:?}", worst.0, worst.1, t0.elapsed()))
}

fn random_batch(rng: &mut impl Rng) -> (Matrix, TargetMatrix) {
    let n = rng.gen_range(1..=16);
    let logits = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    (logits, TargetMatrix::one_hot(&labels, 3).unwrap())
}

fn random_soft_mask(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
    BinaryMask::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap()
}

fn c3_limits() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seeded_rng(3);
    let cce = LossSpec::new(LossFamily::Cce);
    let mut pairs: Vec<(&str, LossSpec, LossSpec, f64)> = vec![
        ("focal(γ=0)", LossSpec::new(LossFamily::CategoricalFocal).with_gamma(0.0), cce, 1e-12),
        ("entropy_reg(β=0)", LossSpec::new(LossFamily::CceEntropyReg).with_beta(0.0), cce, 1e-12),
        ("kl(one-hot)", LossSpec::new(LossFamily::KlDivergence), cce, 1e-9),
    ];
    for f in LossFamily::ALL.iter().filter(|f| f.is_calibrated()) {
        let spec = LossSpec::new(*f).with_lambda(0.0);
        let base = LossSpec { family: f.base(), ..spec };
        pairs.push((f.name(), spec, base, 1e-12));
    }
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (logits, t) = random_batch(&mut rng);
        for (name, a, b, tol) in &pairs {
            let va = evaluate_logits(a, &logits, &t).unwrap().value;
            let vb = evaluate_logits(b, &logits, &t).unwrap().value;
            worst = worst.max((va - vb).abs());
            check((va - vb).abs() <= *tol, || format!("{name}: {va} vs {vb}"))?;
        }
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=8);
        let (p, g) = (random_soft_mask(&mut rng, h, w), random_soft_mask(&mut rng, h, w));
        let tv = tversky_loss(&p, &g, 0.5, 0.5, 1.0).unwrap();
        let dl = dice_loss(&p, &g, 1.0).unwrap();
        check((tv - dl).abs() <= 1e-12, || format!("tversky(0.5,0.5) {tv} vs dice {dl}"))?;
        let ft = SegLossSpec {
            gamma_ft: 1.0,
            ..SegLossSpec::new(SegLossFamily::FocalTversky)
        };
        let plain = SegLossSpec::new(SegLossFamily::Tversky);
        let (a, b) = (seg_loss(&ft, &p, &g).unwrap(), seg_loss(&plain, &p, &g).unwrap());
        check((a - b).abs() <= 1e-12, || format!("focal tversky(γ=1) {a} vs tversky {b}"))?;
        worst = worst.max((tv - dl).abs()).max((a - b).abs());
    }
    within(t0.elapsed(), 30)?;
    Ok(format!("{} identities × 1000 batches, max gap {worst:.1e}", pairs.len() + 2))
}

fn pairwise_auc(scores: &[f64], pos: &[bool]) -> f64 {
    let (mut num, mut count) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate().filter(|(i, _)| pos[*i]) {
        let _ = i;
        for (j, &sj) in scores.iter().enumerate() {
            if pos[j] {
                continue;
            }
            count += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / count
}

fn binary_mcc(tp: u64, fn_: u64, fp: u64, tn: u64) -> f64 {
    let num = (tp * tn) as f64 - (fp * fn_) as f64;
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)) as f64;
    if den == 0.0 {
        0.0
    } else {
        num / den.sqrt()
    }
}

fn c4_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seeded_rng(4);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let n = rng.gen_range(2..=200);
        let coarse = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.gen_range(0..10) as f64 / 10.0 } else { rng.gen_range(0.0..1.0) })
            .collect();
        let pos: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        if pos.iter().all(|&p| p) || pos.iter().all(|&p| !p) {
            continue;
        }
        let a = auc(&roc_from_scores(&scores, &pos).map_err(|e| e.to_string())?);
        let b = pairwise_auc(&scores, &pos);
        worst = worst.max((a - b).abs());
        check((a - b).abs() <= 1e-9, || format!("trapezoid {a} vs pairwise {b} (n={n})"))?;
        done += 1;
    }
    let mut matrices = 0u64;
    for tp in 0..=20u64 {
        for fn_ in 0..=20u64 {
            for fp in 0..=20u64 {
                for tn in 0..=20u64 {
                    let cm = ConfusionMatrix::from_counts(&[vec![tn, fp], vec![fn_, tp]]).map_err(|e| e.to_string())?;
                    let (m, b) = (multiclass_mcc(&cm), binary_mcc(tp, fn_, fp, tn));
                    check(m == b, || format!("MCC mismatch at tp={tp} fn={fn_} fp={fp} tn={tn}: {m} vs {b}"))?;
                    matrices += 1;
                }
            }
        }
    }
    within(t0.elapsed(), 60)?;
    Ok(format!("100 AUROC instances (max gap {worst:.1e}), {matrices} 2×2 matrices exact"))
}

fn mixture_loss(q: &[Vec<f64>], w: &[f64]) -> f64 {
    q.iter()
        .map(|row| -row.iter().zip(w).map(|(p, x)| p * x).sum::<f64>().max(1e-12).ln())
        .sum::<f64>()
        / q.len() as f64
}

/// Minimum of the loss over the simplex grid of step 1/steps.
fn grid_min(q: &[Vec<f64>], m: usize, steps: usize) -> f64 {
    fn rec(q: &[Vec<f64>], w: &mut Vec<f64>, left: usize, m: usize, steps: usize, best: &mut f64) {
        if w.len() == m - 1 {
            w.push(left as f64 / steps as f64);
            *best = best.min(mixture_loss(q, w));
            w.pop();
            return;
        }
        for a in 0..=left {
            w.push(a as f64 / steps as f64);
            rec(q, w, left - a, m, steps, best);
            w.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(q, &mut Vec::new(), steps, m, steps, &mut best);
    best
}

fn c5_simplex() -> Outcome {
    let t0 = Instant::now();
    let mut rng = seeded_rng(5);
    let mut worst_gap = 0.0f64;
    for inst in 0..50 {
        let m = [2, 3, 5][inst % 3];
        let n = rng.gen_range(10..=40);
        let k = 3;
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let models: Vec<PredictionMatrix> = (0..m)
            .map(|_| {
                let sharp = rng.gen_range(0.5..4.0);
                let data: Vec<f64> = (0..n)
                    .flat_map(|_| {
                        let v: Vec<f64> = (0..k).map(|_| (sharp * rng.gen_range(-1.0..1.0f64)).exp()).collect();
                        let s: f64 = v.iter().sum();
                        v.into_iter().map(move |x| x / s)
                    })
                    .collect();
                PredictionMatrix::with_default_ids(Matrix::from_vec(n, k, data).unwrap(), Some(labels.clone())).unwrap()
            })
            .collect();
        let fit = fit_weights(&models).map_err(|e| e.to_string())?;
        let w = fit.weights.as_slice();
        let sum: f64 = w.iter().sum();
        check((sum - 1.0).abs() <= 1e-12 && w.iter().all(|&x| x >= 0.0), || format!("instance {inst}: weights {w:?}"))?;
        let q: Vec<Vec<f64>> = (0..n).map(|i| models.iter().map(|pm| pm.probs().get(i, labels[i])).collect()).collect();
        let recomputed = mixture_loss(&q, w);
        check((recomputed - fit.log_loss).abs() <= 1e-12, || format!("instance {inst}: reported loss differs"))?;
        let uniform = vec![1.0 / m as f64; m];
        let mut bounds = vec![mixture_loss(&q, &uniform)];
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            bounds.push(mixture_loss(&q, &e));
        }
        for b in &bounds {
            check(fit.log_loss <= b + 1e-9, || format!("instance {inst}: {} above feasible point {b}", fit.log_loss))?;
        }
        let grid = grid_min(&q, m, 100);
        worst_gap = worst_gap.max((grid - fit.log_loss).abs());
        check(fit.log_loss <= grid + 1e-9 && grid - fit.log_loss <= 1e-4, || {
            format!("instance {inst} (M={m}): fit {} vs grid {grid}", fit.log_loss)
        })?;
    }
    within(t0.elapsed(), 60)?;
    Ok(format!("50 instances, max |fit − grid| {worst_gap:.1e}, {:?}", t0.elapsed()))
}

fn c6_end_to_end() -> Outcome {
    let t0 = Instant::now();
    let (train, test) = generate_dataset(&SyntheticDatasetConfig::default()).map_err(|e| e.to_string())?;
    check(test.len() == 624, || format!("test split has {} samples", test.len()))?;
    let specs: Vec<LossSpec> = LossFamily::ALL.iter().map(|&f| LossSpec::new(f)).collect();
    let template = TrainConfig::new(LossSpec::new(LossFamily::Cce));
    let runs = run_multiloss_experiment(&train, &test, &specs, &template, &[8]).map_err(|e| e.to_string())?;
    check(runs.len() == 12, || format!("{} runs", runs.len()))?;
    let min_acc = runs.iter().map(|r| r.report.accuracy).fold(f64::INFINITY, f64::min);
    if let Some(bad) = runs.iter().find(|r| r.report.accuracy < 0.85) {
        return Err(format!("{} test accuracy {:.4}", bad.spec.family, bad.report.accuracy));
    }
    // weights are fitted on the test split, which is also where they are scored
    let top: Vec<PredictionMatrix> = runs[..3].iter().map(|r| r.predictions.clone()).collect();
    let fit = fit_weights(&top).map_err(|e| e.to_string())?;
    let fused = weighted_combine(&top, &fit.weights).map_err(|e| e.to_string())?;
    let report = metric_report(&fused).map_err(|e| e.to_string())?;
    let best_ll = runs[..3].iter().map(|r| r.report.log_loss).fold(f64::INFINITY, f64::min);
    let best_mcc = runs[0].report.mcc;
    check(report.log_loss <= best_ll + 1e-9, || format!("ensemble log loss {} > best {best_ll}", report.log_loss))?;
    check(report.mcc >= best_mcc - 0.01, || format!("ensemble MCC {} < best {best_mcc} − 0.01", report.mcc))?;
    within(t0.elapsed(), 600)?;
    Ok(format!(
        "min acc {min_acc:.4}; ensemble log loss {:.4} ≤ {best_ll:.4}, MCC {:.4} vs best {best_mcc:.4}; {:?}",
        report.log_loss,
        report.mcc,
        t0.elapsed()
    ))
}

fn random_hard(rng: &mut impl Rng, h: usize, w: usize, p: f64) -> BinaryMask {
    let bits: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(p)).collect();
    BinaryMask::from_bools(h, w, &bits).unwrap()
}

fn c7_masks() -> Outcome {
    let mut rng = seeded_rng(7);
    for i in 0..1000 {
        let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let p = rng.gen_range(0.0..1.0);
        let (a, b) = (random_hard(&mut rng, h, w, p), random_hard(&mut rng, h, w, p));
        let m = mask_metrics(&a, &b).map_err(|e| e.to_string())?;
        let expect = 2.0 * m.iou / (1.0 + m.iou);
        check((m.dice - expect).abs() <= 1e-9, || format!("pair {i}: dice {} vs {expect}", m.dice))?;
    }
    for i in 0..1000 {
        let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let masks: Vec<BinaryMask> = (0..3).map(|_| random_hard(&mut rng, h, w, 0.6)).collect();
        let fused = and_fuse(&masks).map_err(|e| e.to_string())?;
        for m in &masks {
            let subset = fused.data().iter().zip(m.data()).all(|(f, x)| *f <= *x);
            check(subset, || format!("triple {i}: fused mask not a subset"))?;
        }
    }
    for i in 0..100 {
        let (h, w) = (rng.gen_range(1..=20), rng.gen_range(1..=20));
        let img = Image::new(h, w, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let out = contrast_stretch(&img);
        let (x, y) = (img.data(), out.data());
        check(y.iter().all(|v| (0.0..=1.0).contains(v)), || format!("image {i}: output outside [0,1]"))?;
        for a in 0..x.len() {
            for b in 0..x.len() {
                if x[a] <= x[b] && y[a] > y[b] {
                    return Err(format!("image {i}: order broken at pixels {a}, {b}"));
                }
            }
        }
    }
    Ok("1000 dice/IoU pairs, 1000 AND triples, 100 stretched images".into())
}

fn c8_determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = LossSpec::new(LossFamily::CalibratedCce).with_lambda(10.0);
    let cfg = TrainRunConfig {
        losses: vec![spec],
        seed: 8,
        ..TrainRunConfig::default()
    };
    let hashes = |dir: &Path| -> Result<(String, String), String> {
        let name = spec.family.name();
        Ok((
            sha256_file(&dir.join(predictions_file(name))).map_err(|e| e.to_string())?,
            sha256_file(&dir.join(checkpoint_file(name))).map_err(|e| e.to_string())?,
        ))
    };
    let (a, b, c) = (root.path().join("a"), root.path().join("b"), root.path().join("c"));
    run_train(&cfg, &a).map_err(|e| e.to_string())?;
    run_train(&cfg, &b).map_err(|e| e.to_string())?;
    let resolved = RunConfig::load(&a.join("config.toml")).map_err(|e| e.to_string())?;
    resolved.execute(&c).map_err(|e| e.to_string())?;
    let (ha, hb, hc) = (hashes(&a)?, hashes(&b)?, hashes(&c)?);
    check(ha == hb, || "rerun produced different prediction CSV or checkpoint".into())?;
    check(ha == hc, || "rerun from the written config produced different outputs".into())?;
    for d in [&a, &b, &c] {
        verify_dir(d).map_err(|e| format!("manifest in {}: {e}", d.display()))?;
    }
    Ok(format!("predictions {}…, checkpoint {}…", &ha.0[..12], &ha.1[..12]))
}

fn c9_clopper_pearson() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=50u64 {
        let (lo, hi) = clopper_pearson_ci(0, n, 0.95).map_err(|e| e.to_string())?;
        let expect = 1.0 - 0.025f64.powf(1.0 / n as f64);
        worst = worst.max((hi - expect).abs());
        check(lo == 0.0 && (hi - expect).abs() <= 1e-9, || format!("n={n}: ({lo}, {hi}) vs (0, {expect})"))?;
    }
    let mut pairs = 0;
    for n in 1..=30u64 {
        for s in 0..=n {
            let (lo, hi) = clopper_pearson_ci(s, n, 0.95).map_err(|e| e.to_string())?;
            let p = s as f64 / n as f64;
            check(lo <= p && p <= hi, || format!("({s}, {n}): {p} outside ({lo}, {hi})"))?;
            pairs += 1;
        }
    }
    Ok(format!("closed form max gap {worst:.1e}; {pairs} (s, n) pairs contain s/n"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("CI reproduction", c1_wald),
        ("gradient suite", c2_gradients),
        ("limit identities", c3_limits),
        ("oracle equivalence", c4_oracles),
        ("simplex optimizer", c5_simplex),
        ("end-to-end experiment", c6_end_to_end),
        ("mask suite", c7_masks),
        ("determinism", c8_determinism),
        ("Clopper-Pearson", c9_clopper_pearson),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS criterion {} {name}: {detail} [{:.1?}]", i + 1, t0.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} {name}: {why} [{:.1?}]", i + 1, t0.elapsed());
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
