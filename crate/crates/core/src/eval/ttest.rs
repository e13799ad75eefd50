use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// One-sided p for H₁: mean(b − a) > 0.
    pub p: f64,
    pub n: usize,
    pub significant: bool,
}

/// Paired (dependent) one-sided t-test on `d = b − a`.
///
/// With zero spread the statistic is ±∞ or 0; p is then 0, 1, or 0.5.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("unpaired lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test input".into()));
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let (t, p) = if sd <= f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE) {
        if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        }
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| Error::invalid(format!("t distribution: {e}")))?;
        (t, dist.sf(t).clamp(0.0, 1.0))
    };
    Ok(TTestResult {
        t,
        p,
        n,
        significant: p < ALPHA,
    })
}
