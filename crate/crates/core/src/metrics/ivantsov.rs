use std::f64::consts::PI;

use super::MetricsError;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `√(πPe)·e^{Pe}·erfc(√Pe)`, increasing from 0 to 1 on `(0, ∞)`.
pub fn ivantsov_lhs(pe: f64) -> f64 {
    let s = pe.sqrt();
    (PI * pe).sqrt() * pe.exp() * erfc(s)
}

/// Positive root of `√(πPe)e^{Pe}erfc(√Pe) + κ = 0` by bisection and a Newton polish.
pub fn ivantsov_peclet(kappa: f64) -> Result<f64, MetricsError> {
    if !(kappa > -1.0 && kappa < 0.0) {
        return Err(MetricsError::InvalidArgument(format!("kappa = {kappa} outside (-1, 0)")));
    }
    let target = -kappa;
    let f = |p: f64| ivantsov_lhs(p) - target;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(MetricsError::InvalidArgument(format!("no bracket for kappa = {kappa}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    let mut p = 0.5 * (lo + hi);
    for _ in 0..8 {
        let g = ivantsov_lhs(p);
        let dg = g * (1.0 / (2.0 * p) + 1.0) - 1.0;
        let step = (g - target) / dg;
        let next = p - step;
        if !(next > lo && next < hi) {
            break;
        }
        p = next;
        if step.abs() <= 1e-16 * p {
            break;
        }
    }
    Ok(p)
}
