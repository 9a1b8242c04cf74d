//! Sampled certificate for a lower curvature bound `R(t) >= delta`.

use crate::error::Result;
use crate::linalg;
use crate::system::JacobiSystem;

pub const RATE_TOL: f64 = 1e-9;

/// Whether `lambda_min(R(t)) >= delta - RATE_TOL` on `[lo, hi]`.
///
/// A coarse pass estimates the Lipschitz constant of `lambda_min` from
/// finite differences; the fine pass uses a step for which that constant
/// moves `lambda_min` by at most a quarter of the observed margin (and never
/// more than 0.01 in `t`).
pub fn rate_certificate(system: &JacobiSystem, delta: f64, lo: f64, hi: f64) -> Result<bool> {
    let lam = |t: f64| -> Result<f64> { Ok(linalg::min_eigenvalue(&system.curvature(t)?)) };
    let coarse_n = (((hi - lo) / 0.05).ceil() as usize).max(8);
    let mut prev = lam(lo)?;
    let mut lip: f64 = 0.0;
    let mut margin = prev - delta;
    for i in 1..=coarse_n {
        let t = lo + (hi - lo) * i as f64 / coarse_n as f64;
        let cur = lam(t)?;
        lip = lip.max((cur - prev).abs() * coarse_n as f64 / (hi - lo).max(f64::MIN_POSITIVE));
        margin = margin.min(cur - delta);
        prev = cur;
    }
    if margin < -RATE_TOL {
        return Ok(false);
    }
    let step = if lip > 0.0 {
        (0.25 * margin.max(1e-6) / lip).clamp(1e-4, 0.01)
    } else {
        0.01
    };
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        if lam(t)? < delta - RATE_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
