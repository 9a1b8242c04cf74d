use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real interval with explicit endpoint inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub lo: f64,
    pub hi: f64,
    pub include_lo: bool,
    pub include_hi: bool,
}

impl IntervalSpec {
    pub fn new(lo: f64, hi: f64, include_lo: bool, include_hi: bool) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::input(format!("invalid interval bounds {lo}, {hi}")));
        }
        Ok(IntervalSpec {
            lo,
            hi,
            include_lo,
            include_hi,
        })
    }

    /// `[lo, hi]`
    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    /// `(lo, hi)`
    pub fn open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, false, false)
    }

    /// `(lo, hi]`
    pub fn open_closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, false, true)
    }

    /// `[lo, hi)`
    pub fn closed_open(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, false)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership where points within `eps` of an endpoint count as that endpoint.
    pub fn contains_snapped(&self, t: f64, eps: f64) -> bool {
        let at_lo = (t - self.lo).abs() <= eps;
        let at_hi = (t - self.hi).abs() <= eps;
        if at_lo && at_hi {
            return self.include_lo && self.include_hi;
        }
        if at_lo || at_hi {
            return (at_lo && self.include_lo) || (at_hi && self.include_hi);
        }
        t > self.lo && t < self.hi
    }
}

impl fmt::Display for IntervalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.include_lo { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.include_hi { ']' } else { ')' }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_flags() {
        let i = IntervalSpec::open_closed(0.0, 1.0).unwrap();
        assert!(!i.contains_snapped(1e-12, 1e-9));
        assert!(i.contains_snapped(1.0 - 1e-12, 1e-9));
        assert!(i.contains_snapped(0.5, 1e-9));
        assert!(IntervalSpec::closed(1.0, 0.0).is_err());
        assert_eq!(i.to_string(), "(0, 1]");
    }

    #[test]
    fn degenerate_point_interval() {
        let p = IntervalSpec::closed(2.0, 2.0).unwrap();
        assert!(p.contains_snapped(2.0, 1e-9));
        let q = IntervalSpec::closed_open(2.0, 2.0).unwrap();
        assert!(!q.contains_snapped(2.0, 1e-9));
    }
}
