//! Interval indices: zeros with multiplicity of subspaces of Jacobi fields.

pub mod bounds;
pub mod interval;
pub mod zeros;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{vanishing_lagrangian_of, FieldSubspace};
use crate::system::JacobiSystem;

pub use bounds::{verify_inequality, verify_span_property, Inequality};
pub use interval::IntervalSpec;
pub use zeros::{default_scan_step, index_at_time, zero_times, ScanOptions, ZeroTime};

/// Zeros of a subspace on an interval and the resulting index.
///
/// `zeros` lists every zero on the closed range `[lo, hi]`; `total` honours
/// the endpoint flags. Sub-interval counts via [`IndexReport::count`] reuse the
/// same list, so additivity over a split is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub subspace: String,
    pub interval: IntervalSpec,
    pub zeros: Vec<ZeroTime>,
    pub total: usize,
    pub scan_step: f64,
    pub refine_tol: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl IndexReport {
    /// Index over a sub-interval of the scanned range.
    pub fn count(&self, sub: &IntervalSpec) -> Result<usize> {
        let eps = zeros::snap_tol(self.refine_tol);
        if sub.lo < self.interval.lo - eps || sub.hi > self.interval.hi + eps {
            return Err(Error::input(format!(
                "sub-interval {sub} not inside scanned range {}",
                self.interval
            )));
        }
        Ok(self
            .zeros
            .iter()
            .filter(|z| sub.contains_snapped(z.time, eps))
            .map(|z| z.multiplicity)
            .sum())
    }

    /// Multiplicity of the zero at `t` (0 if none).
    pub fn multiplicity_at(&self, t: f64) -> usize {
        let eps = zeros::snap_tol(self.refine_tol);
        self.zeros
            .iter()
            .filter(|z| (z.time - t).abs() <= eps)
            .map(|z| z.multiplicity)
            .sum()
    }
}

/// Extra halvings of the scan step tried by the stability check.
const MAX_HALVINGS: usize = 5;

/// `ind_W I` with a scan-step stability check.
pub fn index_on_interval(w: &FieldSubspace, interval: &IntervalSpec, opts: &ScanOptions) -> Result<IndexReport> {
    let step = match opts.scan_step {
        Some(h) => h,
        None => default_scan_step(w, interval.lo, interval.hi)?,
    };
    let run = |h: f64| -> Result<IndexReport> {
        let (zeros, warnings) = zeros::scan(w, interval.lo, interval.hi, h, opts.refine_tol)?;
        let mut rep = IndexReport {
            subspace: w.label().to_string(),
            interval: *interval,
            zeros,
            total: 0,
            scan_step: h,
            refine_tol: opts.refine_tol,
            warnings,
        };
        rep.total = rep.count(interval)?;
        Ok(rep)
    };
    let base = run(step)?;
    if !opts.stability_check {
        return Ok(base);
    }
    // Halve until two consecutive scans agree; a change means a zero pair was
    // closer than the coarser grid could separate.
    let mut prev = base;
    let mut h = step;
    for _ in 0..MAX_HALVINGS {
        h /= 2.0;
        let next = run(h)?;
        if next.total == prev.total && next.zeros.len() == prev.zeros.len() {
            if h < step / 2.0 {
                let mut rep = next;
                rep.warnings.push(format!(
                    "index stabilised only at scan step {:.3e} (requested {step:.3e})",
                    2.0 * h
                ));
                return Ok(rep);
            }
            return Ok(prev);
        }
        prev = next;
    }
    Err(Error::Consistency {
        check: format!("scan-step stability of index on {interval}"),
        residual: h,
        tol: 0.0,
    })
}

/// Least `t` in `(a, a + horizon]` where some field vanishing at `a` vanishes again.
pub fn first_conjugate_time(
    system: &Arc<JacobiSystem>,
    a: f64,
    horizon: f64,
    opts: &ScanOptions,
) -> Result<Option<f64>> {
    if !(horizon > 0.0) {
        return Err(Error::input("search horizon must be positive"));
    }
    let la = vanishing_lagrangian_of(system.clone(), a)?;
    let interval = IntervalSpec::open_closed(a, a + horizon)?;
    let zeros = zero_times(&la, &interval, opts)?;
    let eps = opts.snap_tol();
    Ok(zeros.into_iter().map(|z| z.time).find(|&t| t > a + eps))
}

/// Smallest first-conjugate distance over the given base points, or `None`
/// when no base point has a conjugate point within the horizon.
pub fn conjugate_radius(
    system: &Arc<JacobiSystem>,
    anchors: &[f64],
    horizon: f64,
    opts: &ScanOptions,
) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for &a in anchors {
        if let Some(t) = first_conjugate_time(system, a, horizon, opts)? {
            best = Some(best.map_or(t - a, |b: f64| b.min(t - a)));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::vanishing_lagrangian;
    use crate::ode::FundamentalSolution;
    use std::f64::consts::PI;

    fn l0(delta: f64, m: usize) -> FieldSubspace {
        let sys = Arc::new(JacobiSystem::constant(delta, m).unwrap());
        let flow = Arc::new(FundamentalSolution::new(sys, 0.0, (0.0, PI)).unwrap());
        vanishing_lagrangian(flow, 0.0).unwrap()
    }

    #[test]
    fn zeros_of_sine() {
        let l = l0(1.0, 2);
        let opts = ScanOptions::default();
        let z = zero_times(&l, &IntervalSpec::closed(0.0, PI).unwrap(), &opts).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!((z[0].time, z[0].multiplicity), (0.0, 2));
        assert_eq!((z[1].time, z[1].multiplicity), (PI, 2));
        let l4 = l0(4.0, 1);
        let z = zero_times(&l4, &IntervalSpec::closed(0.0, PI).unwrap(), &opts).unwrap();
        assert_eq!(z.len(), 3);
        assert!((z[1].time - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn endpoint_flags_and_additivity() {
        let l = l0(1.0, 2);
        let opts = ScanOptions::default();
        let tot = |i: IntervalSpec| index_on_interval(&l, &i, &opts).unwrap().total;
        assert_eq!(tot(IntervalSpec::closed(0.0, PI).unwrap()), 4);
        assert_eq!(tot(IntervalSpec::open(0.0, PI).unwrap()), 0);
        assert_eq!(tot(IntervalSpec::open_closed(0.0, PI).unwrap()), 2);
        assert_eq!(tot(IntervalSpec::closed(0.0, PI / 2.0).unwrap()), 2);
        let rep = index_on_interval(&l, &IntervalSpec::closed(0.0, 2.0 * PI).unwrap(), &opts).unwrap();
        let a = rep.count(&IntervalSpec::closed_open(0.0, PI).unwrap()).unwrap();
        let b = rep.count(&IntervalSpec::closed(PI, 2.0 * PI).unwrap()).unwrap();
        assert_eq!(a + b, rep.total);
        assert_eq!(rep.total, 6);
    }

    #[test]
    fn index_at_time_values() {
        let l = l0(1.0, 2);
        assert_eq!(index_at_time(&l, 0.0).unwrap(), 2);
        assert_eq!(index_at_time(&l, PI / 2.0).unwrap(), 0);
        assert_eq!(index_at_time(&l, PI).unwrap(), 2);
    }

    #[test]
    fn conjugate_times() {
        let opts = ScanOptions::default();
        let s1 = Arc::new(JacobiSystem::constant(1.0, 2).unwrap());
        let t = first_conjugate_time(&s1, 0.0, 4.0, &opts).unwrap().unwrap();
        assert!((t - PI).abs() < 1e-9);
        let s4 = Arc::new(JacobiSystem::constant(4.0, 1).unwrap());
        let t = first_conjugate_time(&s4, 0.3, 4.0, &opts).unwrap().unwrap();
        assert!((t - 0.3 - PI / 2.0).abs() < 1e-9);
        let s0 = Arc::new(JacobiSystem::constant(0.0, 2).unwrap());
        assert!(first_conjugate_time(&s0, 0.0, 10.0, &opts).unwrap().is_none());
    }
}
