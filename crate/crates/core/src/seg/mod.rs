//! Segmentation losses, mask metrics, AND-fusion and the crop/contrast
//! preprocessing used before classification.

mod pgm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::clamp_prob;

pub use pgm::{read_pgm, write_pgm};

/// H×W grid of reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image", "dimensions must be ≥ 1"));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }
}

/// Mask with values in `[0,1]`; hard masks hold only 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask(Image);

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let img = Image::new(height, width, data)?;
        Self::from_image(img)
    }

    pub fn from_image(img: Image) -> Result<Self> {
        if let Some(v) = img.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("mask", format!("value {v} outside [0,1]")));
        }
        Ok(Self(img))
    }

    pub fn from_bools(height: usize, width: usize, bits: &[bool]) -> Result<Self> {
        Self::new(height, width, bits.iter().map(|&b| f64::from(u8::from(b))).collect())
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn is_hard(&self) -> bool {
        self.0.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_ones(&self) -> usize {
        self.0.data.iter().filter(|&&v| v == 1.0).count()
    }

    fn require_hard(&self, what: &str) -> Result<()> {
        if self.is_hard() {
            Ok(())
        } else {
            Err(Error::invalid("mask", format!("{what} must be a hard 0/1 mask")))
        }
    }
}

fn same_shape(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegLossFamily {
    Bce,
    WeightedBceDice,
    Focal,
    Tversky,
    FocalTversky,
}

impl SegLossFamily {
    pub const ALL: [SegLossFamily; 5] = [
        SegLossFamily::Bce,
        SegLossFamily::WeightedBceDice,
        SegLossFamily::Focal,
        SegLossFamily::Tversky,
        SegLossFamily::FocalTversky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SegLossFamily::Bce => "bce",
            SegLossFamily::WeightedBceDice => "weighted_bce_dice",
            SegLossFamily::Focal => "focal",
            SegLossFamily::Tversky => "tversky",
            SegLossFamily::FocalTversky => "focal_tversky",
        }
    }
}

impl fmt::Display for SegLossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegLossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SegLossFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid("family", format!("unknown segmentation loss `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegLossSpec {
    pub family: SegLossFamily,
    /// Weight of the BCE part in weighted BCE-Dice.
    pub bce_weight: f64,
    /// Tversky false-positive weight.
    pub alpha_fp: f64,
    /// Tversky false-negative weight.
    pub beta_fn: f64,
    /// Focal Tversky exponent; the loss is `(1 − TI)^(1/γ)`.
    pub gamma_ft: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    /// Smoothing added to Dice/Tversky ratios.
    pub epsilon: f64,
}

impl SegLossSpec {
    pub fn new(family: SegLossFamily) -> Self {
        Self {
            family,
            bce_weight: 0.5,
            alpha_fp: 0.3,
            beta_fn: 0.7,
            gamma_ft: 4.0 / 3.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            epsilon: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bce_weight) {
            return Err(Error::invalid("bce_weight", "must be in [0,1]"));
        }
        for (arg, v) in [
            ("alpha_fp", self.alpha_fp),
            ("beta_fn", self.beta_fn),
            ("focal_alpha", self.focal_alpha),
            ("focal_gamma", self.focal_gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(arg, format!("{v} must be ≥ 0")));
            }
        }
        if !(self.gamma_ft.is_finite() && self.gamma_ft > 0.0) {
            return Err(Error::invalid("gamma_ft", "must be > 0"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be > 0"));
        }
        Ok(())
    }
}

struct Overlap {
    tp: f64,
    fp: f64,
    fn_: f64,
    sum_pred: f64,
    sum_truth: f64,
}

fn overlap(pred: &BinaryMask, truth: &BinaryMask) -> Overlap {
    let mut o = Overlap {
        tp: 0.0,
        fp: 0.0,
        fn_: 0.0,
        sum_pred: 0.0,
        sum_truth: 0.0,
    };
    for (&p, &g) in pred.data().iter().zip(truth.data()) {
        o.tp += p * g;
        o.fp += (1.0 - g) * p;
        o.fn_ += g * (1.0 - p);
        o.sum_pred += p;
        o.sum_truth += g;
    }
    o
}

/// Mean pixelwise binary cross-entropy.
pub fn bce(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    same_shape(pred, truth)?;
    let n = pred.data().len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &g)| -(g * clamp_prob(p).ln() + (1.0 - g) * clamp_prob(1.0 - p).ln()))
        .sum();
    Ok(total / n)
}

/// `1 − (2Σpg + ε)/(Σp + Σg + ε)`.
pub fn dice_loss(pred: &BinaryMask, truth: &BinaryMask, epsilon: f64) -> Result<f64> {
    same_shape(pred, truth)?;
    let o = overlap(pred, truth);
    Ok(1.0 - (2.0 * o.tp + epsilon) / (o.sum_pred + o.sum_truth + epsilon))
}

/// `1 − TI` with `TI = (2TP + ε)/(2TP + 2α·FP + 2β·FN + ε)`.
///
/// The doubled form makes α = β = ½ coincide with [`dice_loss`] at the same ε.
pub fn tversky_loss(pred: &BinaryMask, truth: &BinaryMask, alpha_fp: f64, beta_fn: f64, epsilon: f64) -> Result<f64> {
    same_shape(pred, truth)?;
    let o = overlap(pred, truth);
    let num = 2.0 * o.tp + epsilon;
    let den = 2.0 * o.tp + 2.0 * alpha_fp * o.fp + 2.0 * beta_fn * o.fn_ + epsilon;
    Ok(1.0 - num / den)
}

/// Mean of `−α_t (1−p_t)^γ log p_t`.
pub fn binary_focal(pred: &BinaryMask, truth: &BinaryMask, alpha: f64, gamma: f64) -> Result<f64> {
    same_shape(pred, truth)?;
    let n = pred.data().len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &g)| {
            // soft truth interpolates the two branches
            let pos = alpha * (1.0 - p).powf(gamma) * -clamp_prob(p).ln();
            let neg = (1.0 - alpha) * p.powf(gamma) * -clamp_prob(1.0 - p).ln();
            g * pos + (1.0 - g) * neg
        })
        .sum();
    Ok(total / n)
}

/// Dispatches on `spec.family`.
pub fn seg_loss(spec: &SegLossSpec, pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    spec.validate()?;
    same_shape(pred, truth)?;
    match spec.family {
        SegLossFamily::Bce => bce(pred, truth),
        SegLossFamily::WeightedBceDice => {
            let w = spec.bce_weight;
            let b = if w == 0.0 { 0.0 } else { bce(pred, truth)? };
            Ok(w * b + (1.0 - w) * dice_loss(pred, truth, spec.epsilon)?)
        }
        SegLossFamily::Focal => binary_focal(pred, truth, spec.focal_alpha, spec.focal_gamma),
        SegLossFamily::Tversky => tversky_loss(pred, truth, spec.alpha_fp, spec.beta_fn, spec.epsilon),
        SegLossFamily::FocalTversky => {
            let t = tversky_loss(pred, truth, spec.alpha_fp, spec.beta_fn, spec.epsilon)?;
            Ok(t.max(0.0).powf(1.0 / spec.gamma_ft))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaskMetrics {
    pub iou: f64,
    pub dice: f64,
    pub accuracy: f64,
}

/// IoU, Dice and pixel accuracy of two hard masks; two empty masks score 1.
pub fn mask_metrics(pred: &BinaryMask, truth: &BinaryMask) -> Result<MaskMetrics> {
    same_shape(pred, truth)?;
    pred.require_hard("prediction")?;
    truth.require_hard("ground truth")?;
    let (mut inter, mut a, mut b, mut agree) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(truth.data()) {
        let (p, g) = (p == 1.0, g == 1.0);
        inter += usize::from(p && g);
        a += usize::from(p);
        b += usize::from(g);
        agree += usize::from(p == g);
    }
    let union = a + b - inter;
    let (iou, dice) = if union == 0 {
        (1.0, 1.0)
    } else {
        (inter as f64 / union as f64, 2.0 * inter as f64 / (a + b) as f64)
    };
    Ok(MaskMetrics {
        iou,
        dice,
        accuracy: agree as f64 / pred.data().len() as f64,
    })
}

/// Pixel is 1 iff it is 1 in every input.
pub fn and_fuse(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = masks.first().ok_or_else(|| Error::invalid("masks", "need at least one mask"))?;
    for (i, m) in masks.iter().enumerate() {
        same_shape(first, m)?;
        if !m.is_hard() {
            return Err(Error::invalid("masks", format!("mask {i} is not a hard 0/1 mask")));
        }
    }
    let data = (0..first.data().len())
        .map(|i| f64::from(u8::from(masks.iter().all(|m| m.data()[i] == 1.0))))
        .collect();
    BinaryMask::new(first.height(), first.width(), data)
}

/// Pixel is 1 iff its value is ≥ `threshold`.
pub fn binarize(mask: &BinaryMask, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold", format!("{threshold} outside (0,1)")));
    }
    let data = mask
        .data()
        .iter()
        .map(|&v| f64::from(u8::from(v >= threshold)))
        .collect();
    BinaryMask::new(mask.height(), mask.width(), data)
}

/// Inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl BoundingBox {
    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }
}

/// Minimal box around the mask's 1-pixels.
pub fn bounding_box(mask: &BinaryMask) -> Result<BoundingBox> {
    let mut bb: Option<BoundingBox> = None;
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.image().get(r, c) != 1.0 {
                continue;
            }
            bb = Some(match bb {
                None => BoundingBox {
                    row_min: r,
                    row_max: r,
                    col_min: c,
                    col_max: c,
                },
                Some(b) => BoundingBox {
                    row_min: b.row_min.min(r),
                    row_max: b.row_max.max(r),
                    col_min: b.col_min.min(c),
                    col_max: b.col_max.max(c),
                },
            });
        }
    }
    bb.ok_or_else(|| Error::invalid("mask", "mask is empty; no foreground to crop"))
}

/// Crops `image` to the bounding box of `mask`.
pub fn bounding_box_crop(image: &Image, mask: &BinaryMask) -> Result<(Image, BoundingBox)> {
    if image.height() != mask.height() || image.width() != mask.width() {
        return Err(Error::Shape(format!(
            "image {}x{} vs mask {}x{}",
            image.height(),
            image.width(),
            mask.height(),
            mask.width()
        )));
    }
    mask.require_hard("crop mask")?;
    let bb = bounding_box(mask)?;
    let mut data = Vec::with_capacity(bb.height() * bb.width());
    for r in bb.row_min..=bb.row_max {
        data.extend_from_slice(&image.data[r * image.width + bb.col_min..=r * image.width + bb.col_max]);
    }
    Ok((Image::new(bb.height(), bb.width(), data)?, bb))
}

/// Nearest-rank percentile (`q` in (0,100]) of a sorted slice.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Saturates the bottom and top 1% and rescales linearly to `[0,1]`.
///
/// A constant image maps to all zeros.
pub fn contrast_stretch(image: &Image) -> Image {
    let mut sorted = image.data.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = nearest_rank(&sorted, 1.0);
    let hi = nearest_rank(&sorted, 99.0);
    let data = if hi <= lo {
        vec![0.0; image.data.len()]
    } else {
        image
            .data
            .iter()
            .map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    };
    Image {
        height: image.height,
        width: image.width,
        data,
    }
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(image: &Image, new_h: usize, new_w: usize) -> Result<Image> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::invalid("size", "target dimensions must be ≥ 1"));
    }
    if new_h == image.height && new_w == image.width {
        return Ok(image.clone());
    }
    let axis = |dst: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut data = Vec::with_capacity(new_h * new_w);
    for r in 0..new_h {
        let (r0, r1, fr) = axis(r, image.height, new_h);
        for c in 0..new_w {
            let (c0, c1, fc) = axis(c, image.width, new_w);
            let top = image.get(r0, c0) * (1.0 - fc) + image.get(r0, c1) * fc;
            let bottom = image.get(r1, c0) * (1.0 - fc) + image.get(r1, c1) * fc;
            data.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Image::new(new_h, new_w, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn mask(h: usize, w: usize, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(h, w, bits.iter().map(|&b| f64::from(b)).collect()).unwrap()
    }

    fn random_soft(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
        BinaryMask::new(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
    }

    fn random_hard(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
        BinaryMask::new(h, w, (0..h * w).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect())
            .unwrap()
    }

    #[test]
    fn dice_full_overlap_with_unit_epsilon() {
        let m = mask(2, 2, &[1, 1, 1, 1]);
        assert_eq!(dice_loss(&m, &m, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn tversky_and_focal_tversky_identities() {
        let mut rng = seeded_rng(3);
        for _ in 0..200 {
            let p = random_soft(&mut rng, 5, 7);
            let g = random_hard(&mut rng, 5, 7);
            let d = dice_loss(&p, &g, 1.0).unwrap();
            let t = tversky_loss(&p, &g, 0.5, 0.5, 1.0).unwrap();
            assert!((d - t).abs() < 1e-12);
            let mut spec = SegLossSpec::new(SegLossFamily::FocalTversky);
            spec.gamma_ft = 1.0;
            let ft = seg_loss(&spec, &p, &g).unwrap();
            let tv = seg_loss(&SegLossSpec { family: SegLossFamily::Tversky, ..spec }, &p, &g).unwrap();
            assert!((ft - tv).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_bce_dice_with_zero_weight_is_dice() {
        let mut rng = seeded_rng(4);
        let p = random_soft(&mut rng, 4, 4);
        let g = random_hard(&mut rng, 4, 4);
        let mut spec = SegLossSpec::new(SegLossFamily::WeightedBceDice);
        spec.bce_weight = 0.0;
        assert_eq!(seg_loss(&spec, &p, &g).unwrap(), dice_loss(&p, &g, 1.0).unwrap());
    }

    #[test]
    fn seg_losses_nonnegative() {
        let mut rng = seeded_rng(5);
        for _ in 0..50 {
            let p = random_soft(&mut rng, 3, 6);
            let g = random_hard(&mut rng, 3, 6);
            for f in SegLossFamily::ALL {
                assert!(seg_loss(&SegLossSpec::new(f), &p, &g).unwrap() >= 0.0, "{f}");
            }
        }
    }

    #[test]
    fn bce_perfect_and_shape_error() {
        let m = mask(1, 3, &[1, 0, 1]);
        assert!(bce(&m, &m).unwrap() < 1e-11);
        let other = mask(3, 1, &[1, 0, 1]);
        assert!(matches!(seg_loss(&SegLossSpec::new(SegLossFamily::Bce), &m, &other), Err(Error::Shape(_))));
    }

    #[test]
    fn metrics_examples() {
        let a = mask(2, 4, &[1, 1, 1, 1, 0, 0, 0, 0]);
        let m = mask_metrics(&a, &a).unwrap();
        assert_eq!((m.iou, m.dice, m.accuracy), (1.0, 1.0, 1.0));

        let b = mask(2, 4, &[0, 0, 0, 0, 1, 1, 1, 1]);
        let m = mask_metrics(&a, &b).unwrap();
        assert_eq!((m.iou, m.dice), (0.0, 0.0));

        let c = mask(2, 4, &[0, 0, 1, 1, 1, 1, 0, 0]);
        let m = mask_metrics(&a, &c).unwrap();
        assert_eq!(m.dice, 0.5);
        assert!((m.iou - 1.0 / 3.0).abs() < 1e-15);

        let empty = mask(1, 2, &[0, 0]);
        let m = mask_metrics(&empty, &empty).unwrap();
        assert_eq!((m.iou, m.dice, m.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn and_fuse_examples() {
        let a = mask(1, 3, &[1, 1, 0]);
        assert_eq!(and_fuse(std::slice::from_ref(&a)).unwrap(), a);
        let b = mask(1, 3, &[1, 0, 0]);
        assert_eq!(and_fuse(&[a.clone(), b.clone()]).unwrap(), b);
        assert!(and_fuse(&[]).is_err());
        assert!(and_fuse(&[a, mask(3, 1, &[1, 1, 1])]).is_err());
    }

    #[test]
    fn binarize_examples() {
        let m = BinaryMask::new(1, 3, vec![0.6, 0.5, 0.49]).unwrap();
        let b = binarize(&m, 0.5).unwrap();
        assert_eq!(b.data(), &[1.0, 1.0, 0.0]);
        assert!(binarize(&m, 1.0).is_err());
        let mut rng = seeded_rng(6);
        let s = random_soft(&mut rng, 6, 6);
        let b = binarize(&s, 0.3).unwrap();
        for (v, o) in s.data().iter().zip(b.data()) {
            assert_eq!(*o == 1.0, *v >= 0.3);
        }
    }

    #[test]
    fn crop_examples() {
        let img = Image::new(6, 8, (0..48).map(f64::from).collect()).unwrap();
        let full = BinaryMask::new(6, 8, vec![1.0; 48]).unwrap();
        let (c, _) = bounding_box_crop(&img, &full).unwrap();
        assert_eq!(c, img);

        let mut bits = vec![0.0; 48];
        bits[3 * 8 + 5] = 1.0;
        let (c, bb) = bounding_box_crop(&img, &BinaryMask::new(6, 8, bits).unwrap()).unwrap();
        assert_eq!((c.height(), c.width(), c.data()[0]), (1, 1, 29.0));
        assert_eq!((bb.row_min, bb.col_min), (3, 5));

        let mut bits = vec![0.0; 48];
        bits[8 + 2] = 1.0;
        bits[4 * 8 + 7] = 1.0;
        let (c, bb) = bounding_box_crop(&img, &BinaryMask::new(6, 8, bits).unwrap()).unwrap();
        assert_eq!(bb, BoundingBox { row_min: 1, row_max: 4, col_min: 2, col_max: 7 });
        assert_eq!((c.height(), c.width()), (4, 6));
        assert_eq!(c.get(0, 0), img.get(1, 2));
        assert_eq!(c.get(3, 5), img.get(4, 7));

        let empty = BinaryMask::new(6, 8, vec![0.0; 48]).unwrap();
        assert!(bounding_box_crop(&img, &empty).is_err());
    }

    #[test]
    fn stretch_examples() {
        let ramp = Image::new(10, 10, (0..100).map(f64::from).collect()).unwrap();
        let s = contrast_stretch(&ramp);
        assert_eq!(s.data()[0], 0.0);
        assert_eq!(s.data()[98], 1.0);
        assert_eq!(s.data()[99], 1.0);
        assert!((s.data()[49] - 49.0 / 98.0).abs() < 1e-15);

        let flat = Image::filled(3, 3, 7.0).unwrap();
        assert!(contrast_stretch(&flat).data().iter().all(|&v| v == 0.0));

        let two = Image::new(2, 2, vec![0.0, 10.0, 10.0, 0.0]).unwrap();
        assert_eq!(contrast_stretch(&two).data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn resize_examples() {
        let img = Image::new(2, 3, vec![0.1, 0.7, 0.3, 1.5, -2.0, 4.0]).unwrap();
        assert_eq!(resize_bilinear(&img, 2, 3).unwrap(), img);
        let flat = Image::filled(2, 2, 0.25).unwrap();
        let big = resize_bilinear(&flat, 5, 7).unwrap();
        assert!(big.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let cols = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = resize_bilinear(&cols, 2, 4).unwrap();
        assert_eq!(r.data(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);
        assert!(resize_bilinear(&cols, 0, 4).is_err());
    }
}
