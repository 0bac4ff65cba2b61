//! Finite-difference certificate of complete monotonicity.
//!
//! For samples of a completely monotone function on an equally spaced grid,
//! every alternating forward difference `(-1)^k Delta_h^k f(x_i)` is
//! nonnegative. The check below accepts violations up to a tolerance
//! relative to the magnitude of the terms entering each difference, since
//! high-order differences of smooth data cancel almost completely and an
//! absolute threshold would either mask real violations or flag rounding
//! noise.

use crate::error::{Error, Result};

pub const CM_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct CmViolation {
    pub order: usize,
    pub index: usize,
    /// The signed alternating difference that failed.
    pub value: f64,
    /// Magnitude scale of the terms entering it.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct CmReport {
    pub pass: bool,
    pub max_order: usize,
    /// First (lowest-order, then lowest-index) violation, when failing.
    pub violation: Option<CmViolation>,
    /// Smallest signed difference relative to `tol * scale`; >= -1 passes.
    pub worst_margin: f64,
}

/// Check the alternating-difference criterion up to `max_order` on positive
/// samples taken at equally spaced points.
pub fn finite_difference_check(values: &[f64], max_order: usize) -> Result<CmReport> {
    if values.len() < max_order + 1 {
        return Err(Error::TooFewSamples {
            needed: max_order + 1,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InvalidArgument(
            "cm check needs finite, strictly positive samples".into(),
        ));
    }
    // Pascal row per order; orders stay small so f64 binomials are exact.
    let mut binom = vec![1.0f64];
    let mut violation = None;
    let mut worst = f64::INFINITY;
    for order in 0..=max_order {
        if order > 0 {
            let mut next = vec![1.0; order + 1];
            for j in 1..order {
                next[j] = binom[j - 1] + binom[j];
            }
            binom = next;
        }
        for i in 0..values.len() - order {
            let mut signed = 0.0;
            let mut scale = 0.0;
            for (j, &c) in binom.iter().enumerate() {
                let term = c * values[i + j];
                scale += term;
                if j % 2 == 0 {
                    signed += term;
                } else {
                    signed -= term;
                }
            }
            // signed == (-1)^order * Delta^order f(x_i)
            let margin = signed / (CM_TOL * scale);
            if margin < worst {
                worst = margin;
            }
            if signed < -CM_TOL * scale && violation.is_none() {
                violation = Some(CmViolation {
                    order,
                    index: i,
                    value: signed,
                    scale,
                });
            }
        }
    }
    Ok(CmReport {
        pass: violation.is_none(),
        max_order,
        violation,
        worst_margin: worst,
    })
}

/// Convenience: sample `f` on `n` equally spaced points of `[lo, hi]` and check.
pub fn check_function(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
    max_order: usize,
) -> Result<CmReport> {
    if !(hi > lo) || n < 2 {
        return Err(Error::InvalidArgument(
            "need hi > lo and at least two points".into(),
        ));
    }
    let step = (hi - lo) / (n - 1) as f64;
    let values: Vec<f64> = (0..n).map(|i| f(lo + step * i as f64)).collect();
    finite_difference_check(&values, max_order)
}
