//! Direction and magnitude error metrics plus box-plot summaries.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angle between the vectors as a percentage of π; `None` if either is zero.
///
/// Uses `atan2(‖a×b‖, a·b)`, which equals the clamped arccos form but keeps
/// the antiparallel and parallel cases exact.
pub fn direction_error_pct(f_3d: &Vector3<f64>, f_p: &Vector3<f64>) -> Option<f64> {
    if f_3d.norm() == 0.0 || f_p.norm() == 0.0 {
        return None;
    }
    let angle = f_3d.cross(f_p).norm().atan2(f_3d.dot(f_p));
    Some(100.0 * (angle / std::f64::consts::PI))
}

/// Symmetric absolute percentage error of the magnitudes; `None` if both are zero.
pub fn magnitude_error_pct(f_3d: &Vector3<f64>, f_p: &Vector3<f64>) -> Option<f64> {
    let (a, b) = (f_3d.norm(), f_p.norm());
    if a + b == 0.0 {
        return None;
    }
    Some(100.0 * (a - b).abs() / (a + b))
}

pub fn magnitude_error_l1(f_3d: &Vector3<f64>, f_p: &Vector3<f64>) -> f64 {
    (f_3d.norm() - f_p.norm()).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub n_samples: usize,
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, quartiles and whiskers at the extreme inliers within 1.5·IQR.
pub fn summarize(values: &[f64]) -> Result<ErrorSummary> {
    if values.is_empty() {
        return Err(Error::DegenerateInput(
            "cannot summarize an empty list".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            context: "non-finite value in error summary".into(),
        });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let median = quantile(&v, 0.5);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    // With interpolated quartiles the extreme inlier can fall inside the
    // box; the whisker then stops at the quartile.
    let whisker_low = v
        .iter()
        .find(|&&x| x >= lo_fence)
        .map_or(q1, |&x| x.min(q1));
    let whisker_high = v
        .iter()
        .rev()
        .find(|&&x| x <= hi_fence)
        .map_or(q3, |&x| x.max(q3));
    Ok(ErrorSummary {
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        n_samples: v.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleErrors {
    pub direction_pct: Option<f64>,
    pub magnitude_pct: Option<f64>,
    pub magnitude_l1: f64,
}

pub fn sample_errors(f_3d: &Vector3<f64>, f_p: &Vector3<f64>) -> SampleErrors {
    SampleErrors {
        direction_pct: direction_error_pct(f_3d, f_p),
        magnitude_pct: magnitude_error_pct(f_3d, f_p),
        magnitude_l1: magnitude_error_l1(f_3d, f_p),
    }
}

/// Summaries of all three metrics. Excluded samples are counted, not scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub direction_pct: Option<ErrorSummary>,
    pub magnitude_pct: Option<ErrorSummary>,
    pub magnitude_l1: ErrorSummary,
    pub excluded_direction: usize,
    pub excluded_magnitude: usize,
}

pub fn summarize_errors(errors: &[SampleErrors]) -> Result<MetricSummary> {
    let dir: Vec<f64> = errors.iter().filter_map(|e| e.direction_pct).collect();
    let mag: Vec<f64> = errors.iter().filter_map(|e| e.magnitude_pct).collect();
    let l1: Vec<f64> = errors.iter().map(|e| e.magnitude_l1).collect();
    Ok(MetricSummary {
        direction_pct: if dir.is_empty() {
            None
        } else {
            Some(summarize(&dir)?)
        },
        magnitude_pct: if mag.is_empty() {
            None
        } else {
            Some(summarize(&mag)?)
        },
        magnitude_l1: summarize(&l1)?,
        excluded_direction: errors.len() - dir.len(),
        excluded_magnitude: errors.len() - mag.len(),
    })
}
