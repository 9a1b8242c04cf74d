//! Verifiers for the index inequalities.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::certificate::rate_certificate;
use crate::error::{Error, Result};
use crate::field::{intersection_dimension, FieldSubspace};
use crate::index::interval::IntervalSpec;
use crate::index::zeros::{index_at_time, kernel_fields, ScanOptions};
use crate::index::{first_conjugate_time, index_on_interval};
use crate::linalg::{self, Svd};
use crate::verdict::VerdictRecord;

/// Arguments of the supported inequalities.
#[derive(Debug, Clone, Copy)]
pub enum Inequality<'a> {
    /// `|ind_{L1} I - ind_{L2} I| <= m - dim(L1 ∩ L2)`.
    Lytchak {
        l1: &'a FieldSubspace,
        l2: &'a FieldSubspace,
        interval: IntervalSpec,
    },
    /// `ind_L [a, a + r c] <= (r + 1) m`, provided no field vanishing at
    /// `a + i c` vanishes again in `(a + i c, a + (i + 1) c]`.
    ConjUpper {
        l: &'a FieldSubspace,
        a: f64,
        r: u32,
        c: f64,
    },
    /// `ind_L [a, a + r pi / sqrt(delta)] >= r m + ind_L(a)` when `R >= delta`.
    DeltaLower {
        l: &'a FieldSubspace,
        a: f64,
        r: u32,
        delta: f64,
    },
    /// `ind_L [a, a + r l] <= r (m + ind_L [a, a + l)) + m` for `l`-periodic `R`.
    PeriodicUpper {
        l: &'a FieldSubspace,
        a: f64,
        r: u32,
        period: f64,
    },
}

impl Inequality<'_> {
    pub fn id(&self) -> &'static str {
        match self {
            Inequality::Lytchak { .. } => "lytchak",
            Inequality::ConjUpper { .. } => "conj_upper",
            Inequality::DeltaLower { .. } => "delta_lower",
            Inequality::PeriodicUpper { .. } => "periodic_upper",
        }
    }
}

fn require_lagrangian(l: &FieldSubspace, what: &str) -> Result<()> {
    if !l.is_lagrangian() {
        return Err(Error::input(format!("{what} must be Lagrangian (kind {:?})", l.kind())));
    }
    Ok(())
}

/// Checks one inequality. A failed precondition is reported as
/// [`Error::HypothesisNotMet`], never as a failing verdict.
pub fn verify_inequality(ineq: Inequality<'_>, opts: &ScanOptions) -> Result<VerdictRecord> {
    match ineq {
        Inequality::Lytchak { l1, l2, interval } => {
            require_lagrangian(l1, "L1")?;
            require_lagrangian(l2, "L2")?;
            let i1 = index_on_interval(l1, &interval, opts)?.total as f64;
            let i2 = index_on_interval(l2, &interval, opts)?.total as f64;
            let cap = intersection_dimension(l1, l2)?;
            let m = l1.ambient_dim();
            Ok(VerdictRecord::upper("lytchak", (i1 - i2).abs(), (m - cap) as f64, 0.0)
                .with_note(format!("ind_L1 {interval} = {i1}, ind_L2 = {i2}, dim(L1 ∩ L2) = {cap}")))
        }
        Inequality::ConjUpper { l, a, r, c } => {
            require_lagrangian(l, "L")?;
            if !(c > 0.0) || r == 0 {
                return Err(Error::input("conj_upper needs c > 0 and r >= 1"));
            }
            for i in 0..r {
                let start = a + i as f64 * c;
                if let Some(t) = first_conjugate_time(l.system(), start, c, opts)? {
                    return Err(Error::HypothesisNotMet(format!(
                        "conjugate point at t = {t} within c = {c} of {start}"
                    )));
                }
            }
            let interval = IntervalSpec::closed(a, a + r as f64 * c)?;
            let lhs = index_on_interval(l, &interval, opts)?.total as f64;
            let m = l.ambient_dim() as f64;
            Ok(VerdictRecord::upper("conj_upper", lhs, (r as f64 + 1.0) * m, 0.0)
                .with_note(format!("ind_L {interval} with c = {c}")))
        }
        Inequality::DeltaLower { l, a, r, delta } => {
            require_lagrangian(l, "L")?;
            if !(delta > 0.0) || r == 0 {
                return Err(Error::input("delta_lower needs delta > 0 and r >= 1"));
            }
            let hi = a + r as f64 * PI / delta.sqrt();
            if !rate_certificate(l.system(), delta, a, hi)? {
                return Err(Error::HypothesisNotMet(format!("R(t) >= {delta} fails on [{a}, {hi}]")));
            }
            let interval = IntervalSpec::closed(a, hi)?;
            let lhs = index_on_interval(l, &interval, opts)?.total as f64;
            let at_a = index_at_time(l, a)?;
            let m = l.ambient_dim();
            Ok(VerdictRecord::lower("delta_lower", lhs, (r as usize * m + at_a) as f64, 0.0)
                .with_note(format!("ind_L {interval}; ind_L({a}) = {at_a}")))
        }
        Inequality::PeriodicUpper { l, a, r, period } => {
            require_lagrangian(l, "L")?;
            if !(period > 0.0) || r == 0 {
                return Err(Error::input("periodic_upper needs period > 0 and r >= 1"));
            }
            if !l.system().is_periodic_with(period) {
                return Err(Error::HypothesisNotMet(format!("curvature is not {period}-periodic")));
            }
            let interval = IntervalSpec::closed(a, a + r as f64 * period)?;
            let rep = index_on_interval(l, &interval, opts)?;
            let first = rep.count(&IntervalSpec::closed_open(a, a + period)?)?;
            let m = l.ambient_dim();
            let r = r as usize;
            Ok(
                VerdictRecord::upper("periodic_upper", rep.total as f64, (r * (m + first) + m) as f64, 0.0)
                    .with_note(format!("ind_L {interval}; ind_L [a, a + l) = {first}")),
            )
        }
    }
}

/// Checks that the fields of `l` vanishing somewhere in `(a, a + pi/sqrt(delta)]`
/// span `l`.
pub fn verify_span_property(l: &FieldSubspace, a: f64, delta: f64, opts: &ScanOptions) -> Result<VerdictRecord> {
    if !(delta > 0.0) {
        return Err(Error::input("span property needs delta > 0"));
    }
    let hi = a + PI / delta.sqrt();
    if !rate_certificate(l.system(), delta, a, hi)? {
        return Err(Error::HypothesisNotMet(format!("R(t) >= {delta} fails on [{a}, {hi}]")));
    }
    let interval = IntervalSpec::open_closed(a, hi)?;
    let rep = index_on_interval(l, &interval, opts)?;
    let eps = opts.snap_tol();
    let d = l.dim();
    let mut cols: Vec<DMatrix<f64>> = Vec::new();
    let mut times = Vec::new();
    for z in rep.zeros.iter().filter(|z| interval.contains_snapped(z.time, eps)) {
        cols.push(kernel_fields(l, z.time)?);
        times.push(z.time);
    }
    let total: usize = cols.iter().map(|c| c.ncols()).sum();
    let rank = if total == 0 {
        0
    } else {
        let mut stacked = DMatrix::zeros(d, total);
        let mut j = 0;
        for c in &cols {
            stacked.columns_mut(j, c.ncols()).copy_from(c);
            j += c.ncols();
        }
        let sv = Svd::new(&stacked);
        let sigma: Vec<f64> = sv.sigma.iter().copied().take(d.min(total)).collect();
        linalg::numerical_rank(&sigma, linalg::RANK_THRESHOLD, linalg::RANK_BAND_LO, "span of vanishing fields")?
    };
    Ok(VerdictRecord::lower("span_property", rank as f64, d as f64, 0.0)
        .with_note(format!("zeros in {interval} at {times:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{vanishing_lagrangian, FieldVector};
    use crate::ode::FundamentalSolution;
    use crate::system::JacobiSystem;
    use std::sync::Arc;

    fn flow(delta: f64, m: usize) -> Arc<FundamentalSolution> {
        let sys = Arc::new(JacobiSystem::constant(delta, m).unwrap());
        Arc::new(FundamentalSolution::new(sys, 0.0, (0.0, PI)).unwrap())
    }

    #[test]
    fn lytchak_tight_example() {
        let f = flow(1.0, 2);
        let l0 = vanishing_lagrangian(f.clone(), 0.0).unwrap();
        let mixed = FieldSubspace::new(
            f,
            &[
                FieldVector::from_slices(0.0, &[0.0, 0.0], &[1.0, 0.0]).unwrap(),
                FieldVector::from_slices(0.0, &[0.0, 1.0], &[0.0, 0.0]).unwrap(),
            ],
        )
        .unwrap();
        let v = verify_inequality(
            Inequality::Lytchak {
                l1: &l0,
                l2: &mixed,
                interval: IntervalSpec::closed(0.0, PI).unwrap(),
            },
            &ScanOptions::default(),
        )
        .unwrap();
        assert_eq!((v.lhs, v.rhs, v.slack), (1.0, 1.0, 0.0));
        assert!(v.pass);
    }

    #[test]
    fn delta_lower_and_periodic() {
        let f = flow(1.0, 2);
        let l0 = vanishing_lagrangian(f, 0.0).unwrap();
        let opts = ScanOptions::default();
        let v = verify_inequality(Inequality::DeltaLower { l: &l0, a: 0.0, r: 1, delta: 1.0 }, &opts).unwrap();
        assert_eq!((v.lhs, v.rhs), (4.0, 4.0));
        let v = verify_inequality(Inequality::PeriodicUpper { l: &l0, a: 0.0, r: 3, period: PI }, &opts).unwrap();
        assert_eq!((v.lhs, v.rhs), (8.0, 14.0));
        let err = verify_inequality(Inequality::DeltaLower { l: &l0, a: 0.0, r: 1, delta: 1.5 }, &opts).unwrap_err();
        assert!(matches!(err, Error::HypothesisNotMet(_)));
    }

    #[test]
    fn conj_upper_hypothesis() {
        let f = flow(1.0, 2);
        let l0 = vanishing_lagrangian(f, 0.0).unwrap();
        let opts = ScanOptions::default();
        let v = verify_inequality(Inequality::ConjUpper { l: &l0, a: 0.0, r: 2, c: 3.0 }, &opts).unwrap();
        assert!(v.pass);
        let err = verify_inequality(Inequality::ConjUpper { l: &l0, a: 0.0, r: 2, c: 3.2 }, &opts).unwrap_err();
        assert!(matches!(err, Error::HypothesisNotMet(_)));
    }

    #[test]
    fn span_property_for_l0() {
        let l0 = vanishing_lagrangian(flow(1.0, 2), 0.0).unwrap();
        let v = verify_span_property(&l0, 0.0, 1.0, &ScanOptions::default()).unwrap();
        assert!(v.pass && v.lhs == 2.0);
        let l4 = vanishing_lagrangian(flow(4.0, 1), 0.0).unwrap();
        assert!(verify_span_property(&l4, 0.0, 4.0, &ScanOptions::default()).unwrap().pass);
    }
}
