//! Standard depth evaluation metrics over the valid-pixel set.
//!
//! A pixel is valid when its ground-truth value is positive. Linear
//! metrics (absolute relative error, squared relative error, linear RMS,
//! mean absolute error) average over all valid pixels. Logarithmic RMS and
//! the threshold accuracies additionally need a positive prediction; valid
//! pixels with a nonpositive prediction are excluded from those terms and
//! counted in the report so the exclusion is visible. All reductions run
//! in a fixed order, so equal inputs produce bit-equal reports.

use crate::loss::{apply_align, ssi_align};
use crate::tensor::DepthMap;
use crate::{Error, Result};

/// Evaluation summary. `delta1..delta3` are the fractions of log-eligible
/// pixels whose prediction/truth ratio (either way up) stays below 1.25,
/// 1.25^2, 1.25^3; they are always nondecreasing. `valid_count` is the
/// number of valid pixels, `log_excluded` how many of them were left out
/// of `rms_log` and the deltas for a nonpositive prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rms_lin: f64,
    pub rms_log: f64,
    pub mae: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_count: usize,
    pub log_excluded: usize,
}

/// Computes every metric over the valid pixels, optionally fitting the
/// least-squares scale and shift first.
///
/// # Errors
/// Shape error on mismatched maps; degenerate-input error without a
/// single valid pixel, or propagated from the alignment when
/// `align_first` is set.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, align_first: bool) -> Result<MetricsReport> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "prediction is {}, ground truth is {}",
            pred.shape(),
            gt.shape()
        )));
    }
    let aligned;
    let p = if align_first {
        aligned = apply_align(pred, ssi_align(pred, gt)?)?;
        &aligned
    } else {
        pred
    };
    let mut valid_count = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_rel_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut abs_rel_sum = 0.0;
    let mut log_count = 0usize;
    let mut log_sq_sum = 0.0;
    let mut within = [0usize; 3];
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    for (&pv, &gv) in p.values().iter().zip(gt.values()) {
        if gv <= 0.0 {
            continue;
        }
        valid_count += 1;
        let diff = pv - gv;
        abs_sum += diff.abs();
        abs_rel_sum += diff.abs() / gv;
        sq_rel_sum += diff * diff / gv;
        sq_sum += diff * diff;
        if pv > 0.0 {
            log_count += 1;
            let log_diff = pv.ln() - gv.ln();
            log_sq_sum += log_diff * log_diff;
            let ratio = (pv / gv).max(gv / pv);
            for (slot, &thr) in within.iter_mut().zip(&thresholds) {
                if ratio < thr {
                    *slot += 1;
                }
            }
        }
    }
    if valid_count == 0 {
        return Err(Error::Degenerate(
            "no valid pixels (positive ground truth) to evaluate".into(),
        ));
    }
    let nv = valid_count as f64;
    let log_mean = |sum: f64| {
        if log_count == 0 {
            0.0
        } else {
            sum / log_count as f64
        }
    };
    Ok(MetricsReport {
        abs_rel: abs_rel_sum / nv,
        sq_rel: sq_rel_sum / nv,
        rms_lin: (sq_sum / nv).sqrt(),
        rms_log: log_mean(log_sq_sum).sqrt(),
        mae: abs_sum / nv,
        delta1: log_mean(within[0] as f64),
        delta2: log_mean(within[1] as f64),
        delta3: log_mean(within[2] as f64),
        valid_count,
        log_excluded: valid_count - log_count,
    })
}
