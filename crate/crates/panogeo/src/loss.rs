//! Scale-and-shift-invariant depth losses with analytic gradients.
//!
//! Monocular depth predictions are only determined up to an affine map, so
//! the prediction is first aligned to the ground truth by the least-squares
//! scale and shift over the valid pixels ([`ssi_align`]). The loss on the
//! aligned map combines a masked mean absolute difference with a gradient
//! term that sharpens depth edges; the total is `l_pix + 0.5 * l_grad`.
//!
//! Validity is derived, never stored: a pixel participates exactly when its
//! ground-truth value is positive. Invalid pixels contribute nothing to
//! any sum, so editing a prediction under an invalid pixel cannot change a
//! single output bit.
//!
//! [`loss_gradient`] differentiates the total loss with respect to the
//! prediction, holding the fitted scale and shift constant (the usual
//! stop-gradient convention; the alignment minimizes a squared criterion
//! while the loss is L1, so differentiating through the fit is not well
//! posed). [`loss_with_params`] evaluates the loss at a caller-chosen
//! alignment, which is what a finite-difference check needs.

use crate::tensor::DepthMap;
use crate::{Error, Result};

/// Affine alignment `s * pred + t` fitted to the ground truth.
///
/// Both values are finite; `s` is positive for sane inputs but not
/// enforced, since a negatively correlated prediction legitimately fits
/// with `s < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    pub s: f64,
    pub t: f64,
}

impl AlignParams {
    /// # Errors
    /// Domain error on non-finite values.
    pub fn new(s: f64, t: f64) -> Result<Self> {
        if !s.is_finite() || !t.is_finite() {
            return Err(Error::Domain(format!(
                "alignment parameters must be finite, got s = {s}, t = {t}"
            )));
        }
        Ok(Self { s, t })
    }
}

/// Loss terms on an aligned prediction. `l_total` is
/// `l_pix + 0.5 * l_grad`; `valid_count` is the number of pixels with
/// positive ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_pix: f64,
    pub l_grad: f64,
    pub l_total: f64,
    pub valid_count: usize,
}

/// Weight of the gradient term in the total loss.
pub const GRAD_WEIGHT: f64 = 0.5;

fn check_shapes(pred: &DepthMap, gt: &DepthMap) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction is {}, ground truth is {}",
            pred.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

/// Least-squares scale and shift minimizing
/// `sum_valid (s * pred + t - gt)^2`, in the centered closed form of the
/// 2x2 normal equations.
///
/// # Errors
/// Shape error on mismatched maps; degenerate-input error with fewer than
/// two valid pixels or an (almost) constant prediction over the valid set,
/// where the normal equations lose rank.
pub fn ssi_align(pred: &DepthMap, gt: &DepthMap) -> Result<AlignParams> {
    check_shapes(pred, gt)?;
    let mut n = 0usize;
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if g > 0.0 {
            n += 1;
            sum_p += p;
            sum_g += g;
        }
    }
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "{n} valid pixels, alignment needs at least 2"
        )));
    }
    let mean_p = sum_p / n as f64;
    let mean_g = sum_g / n as f64;
    let mut var = 0.0;
    let mut cov = 0.0;
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        if g > 0.0 {
            var += (p - mean_p) * (p - mean_p);
            cov += (p - mean_p) * (g - mean_g);
        }
    }
    // Relative rank threshold: a centered sum of squares at rounding level
    // means the prediction is constant for all practical purposes.
    if var <= 1e-12 * n as f64 * mean_p.mul_add(mean_p, 1.0).max(1.0) {
        return Err(Error::Degenerate(
            "prediction is constant over the valid pixels".into(),
        ));
    }
    let s = cov / var;
    AlignParams::new(s, mean_g - s * mean_p)
}

/// Applies `s * pred + t` pixelwise.
///
/// # Errors
/// Domain error if the map overflows to a non-finite value.
pub fn apply_align(pred: &DepthMap, align: AlignParams) -> Result<DepthMap> {
    DepthMap::from_fn(pred.shape(), |r, c| align.s * pred.at(r, c) + align.t)
}

/// Masked mean absolute difference, averaged over the total pixel count.
///
/// Invalid pixels (ground truth not positive) contribute zero, but the
/// denominator stays H * W.
///
/// # Errors
/// Shape error on mismatched maps.
pub fn l_pix(pred_aligned: &DepthMap, gt: &DepthMap) -> Result<f64> {
    check_shapes(pred_aligned, gt)?;
    let mut sum = 0.0;
    for (&p, &g) in pred_aligned.values().iter().zip(gt.values()) {
        if g > 0.0 {
            sum += (p - g).abs();
        }
    }
    Ok(sum / pred_aligned.values().len() as f64)
}

/// Masked residual field: `pred - gt` where valid, zero elsewhere.
fn masked_residual(pred_aligned: &DepthMap, gt: &DepthMap) -> Vec<f64> {
    pred_aligned
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| if g > 0.0 { p - g } else { 0.0 })
        .collect()
}

/// Total variation of the masked residual: sum of absolute forward
/// differences, wrapping horizontally (the panorama is seamless in
/// longitude) and stopping one row short vertically (the poles are edges).
///
/// # Errors
/// Shape error on mismatched maps.
pub fn l_grad(pred_aligned: &DepthMap, gt: &DepthMap) -> Result<f64> {
    check_shapes(pred_aligned, gt)?;
    let (h, w) = (pred_aligned.shape().height(), pred_aligned.shape().width());
    let delta = masked_residual(pred_aligned, gt);
    let mut sum = 0.0;
    for r in 0..h {
        for c in 0..w {
            sum += (delta[r * w + (c + 1) % w] - delta[r * w + c]).abs();
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            sum += (delta[(r + 1) * w + c] - delta[r * w + c]).abs();
        }
    }
    Ok(sum)
}

/// Loss terms of `pred` under a fixed, caller-supplied alignment.
///
/// # Errors
/// Shape error on mismatched maps; domain error if the alignment
/// overflows.
pub fn loss_with_params(pred: &DepthMap, gt: &DepthMap, align: AlignParams) -> Result<LossReport> {
    check_shapes(pred, gt)?;
    let aligned = apply_align(pred, align)?;
    let pix = l_pix(&aligned, gt)?;
    let grad = l_grad(&aligned, gt)?;
    let valid_count = gt.values().iter().filter(|&&g| g > 0.0).count();
    Ok(LossReport {
        l_pix: pix,
        l_grad: grad,
        l_total: pix + GRAD_WEIGHT * grad,
        valid_count,
    })
}

/// Aligns the prediction and evaluates the total loss on it.
///
/// # Errors
/// Propagates [`ssi_align`] failures.
pub fn total_loss(pred: &DepthMap, gt: &DepthMap) -> Result<(LossReport, AlignParams)> {
    let align = ssi_align(pred, gt)?;
    Ok((loss_with_params(pred, gt, align)?, align))
}

/// Subgradient convention: zero at zero.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of the total loss with respect to each predicted value, with
/// the fitted scale and shift treated as constants.
///
/// The pixel term contributes `s * sign(residual) / n` on valid pixels;
/// each absolute forward difference contributes `±s * sign` to the two
/// pixels it touches, weighted by [`GRAD_WEIGHT`]. Invalid pixels get an
/// exactly zero gradient.
///
/// # Errors
/// Propagates [`ssi_align`] failures.
pub fn loss_gradient(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMap> {
    let align = ssi_align(pred, gt)?;
    let aligned = apply_align(pred, align)?;
    let (h, w) = (pred.shape().height(), pred.shape().width());
    let delta = masked_residual(&aligned, gt);
    let n = (h * w) as f64;
    let s = align.s;
    let mut grad = vec![0.0; h * w];
    for (i, (&g, d)) in gt.values().iter().zip(&delta).enumerate() {
        if g > 0.0 {
            grad[i] = sgn(*d) * s / n;
        }
    }
    let mask = |i: usize| -> f64 {
        if gt.values()[i] > 0.0 {
            1.0
        } else {
            0.0
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let j = r * w + (c + 1) % w;
            let sign = sgn(delta[j] - delta[i]);
            grad[j] += GRAD_WEIGHT * sign * mask(j) * s;
            grad[i] -= GRAD_WEIGHT * sign * mask(i) * s;
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            let i = r * w + c;
            let j = (r + 1) * w + c;
            let sign = sgn(delta[j] - delta[i]);
            grad[j] += GRAD_WEIGHT * sign * mask(j) * s;
            grad[i] -= GRAD_WEIGHT * sign * mask(i) * s;
        }
    }
    DepthMap::new(pred.shape(), grad)
}

/// Outcome of comparing the analytic gradient against central finite
/// differences of the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest relative disagreement across the checked components.
    pub max_rel_err: f64,
    /// Components compared.
    pub checked: usize,
    /// Components skipped because an absolute-value term they touch sits
    /// within ten step widths of its kink, where a central difference
    /// straddles the fold and measures nothing.
    pub skipped: usize,
}

/// Compares [`loss_gradient`] against central finite differences of the
/// total loss, component by component, with the fitted scale and shift
/// held fixed on both sides.
///
/// Each evaluation rebuilds the loss from scratch, so the check costs
/// O((H·W)^2); it is meant for small maps.
///
/// # Errors
/// Domain error on a non-positive step; propagates alignment failures.
pub fn gradient_check(pred: &DepthMap, gt: &DepthMap, step: f64) -> Result<GradCheck> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::Domain(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let align = ssi_align(pred, gt)?;
    let analytic = loss_gradient(pred, gt)?;
    let aligned = apply_align(pred, align)?;
    let delta = masked_residual(&aligned, gt);
    let (h, w) = (pred.shape().height(), pred.shape().width());
    let guard = 10.0 * step;
    let mut max_rel_err = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut near_kink = delta[i].abs() < guard;
            let neighbors = [
                r * w + (c + 1) % w,
                r * w + (c + w - 1) % w,
                if r + 1 < h { (r + 1) * w + c } else { i },
                if r > 0 { (r - 1) * w + c } else { i },
            ];
            for j in neighbors {
                if j != i && (delta[j] - delta[i]).abs() < guard {
                    near_kink = true;
                }
            }
            if near_kink {
                skipped += 1;
                continue;
            }
            let eval = |v: f64| -> Result<f64> {
                let bumped = DepthMap::from_fn(pred.shape(), |rr, cc| {
                    if rr == r && cc == c {
                        v
                    } else {
                        pred.at(rr, cc)
                    }
                })?;
                Ok(loss_with_params(&bumped, gt, align)?.l_total)
            };
            let p = pred.at(r, c);
            let fd = (eval(p + step)? - eval(p - step)?) / (2.0 * step);
            let a = analytic.at(r, c);
            let denom = a.abs().max(fd.abs()).max(1e-12);
            max_rel_err = max_rel_err.max(((a - fd) / denom).abs());
            checked += 1;
        }
    }
    Ok(GradCheck {
        max_rel_err,
        checked,
        skipped,
    })
}
