//! Curvature systems `J'' + R(t) J = 0` on a Euclidean space of dimension `m`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

pub type CurvatureFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureKind {
    ClosedForm,
    /// `R(t + period) = R(t)` for all `t`.
    Periodic { period: f64 },
    /// Entrywise natural cubic spline through samples.
    Sampled,
}

/// A smooth family of symmetric operators `R(t)` acting on `R^m`.
#[derive(Clone)]
pub struct JacobiSystem {
    dim: usize,
    curvature: Arc<CurvatureFn>,
    kind: CurvatureKind,
    symmetry_tol: f64,
    label: String,
    interpolation_error: f64,
}

impl fmt::Debug for JacobiSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JacobiSystem")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("kind", &self.kind)
            .field("symmetry_tol", &self.symmetry_tol)
            .finish()
    }
}

impl JacobiSystem {
    pub fn new<F>(dim: usize, kind: CurvatureKind, curvature: F) -> Result<Self>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::input("Jacobi system dimension must be at least 1"));
        }
        if let CurvatureKind::Periodic { period } = kind {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::input(format!("invalid period {period}")));
            }
        }
        let sys = JacobiSystem {
            dim,
            curvature: Arc::new(curvature),
            kind,
            symmetry_tol: DEFAULT_SYMMETRY_TOL,
            label: String::from("custom"),
            interpolation_error: 0.0,
        };
        // Probe once so shape errors surface at construction.
        let r0 = (sys.curvature)(0.0);
        if r0.shape() != (dim, dim) {
            return Err(Error::input(format!(
                "curvature has shape {:?}, expected ({dim}, {dim})",
                r0.shape()
            )));
        }
        Ok(sys)
    }

    /// `R(t) = delta * I`.
    pub fn constant(delta: f64, dim: usize) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::input("curvature constant must be finite"));
        }
        let id = DMatrix::<f64>::identity(dim, dim) * delta;
        // Any positive number is a period of a constant family.
        Ok(Self::new(dim, CurvatureKind::Periodic { period: 1.0 }, move |_| id.clone())?
            .with_label(format!("constant(delta={delta}, m={dim})")))
    }

    /// Natural cubic spline interpolation of symmetric samples `R(times[i]) = samples[i]`.
    /// Queries outside the sample range are clamped to the end samples' cubic pieces.
    pub fn sampled(times: Vec<f64>, samples: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.len() != samples.len() || times.len() < 3 {
            return Err(Error::input("sampled curvature needs >= 3 matching times and samples"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("sample times must be strictly increasing"));
        }
        let dim = samples[0].nrows();
        if samples.iter().any(|s| s.shape() != (dim, dim)) {
            return Err(Error::input("samples must all be square of the same size"));
        }
        let worst = samples.iter().map(linalg::asymmetry).fold(0.0, f64::max);
        if worst > DEFAULT_SYMMETRY_TOL {
            return Err(Error::input(format!("sample asymmetry {worst:.3e}")));
        }
        let spline = Arc::new(MatrixSpline::new(times, samples));
        let interp_err = spline.leave_one_out_error();
        let s = spline.clone();
        let mut sys = Self::new(dim, CurvatureKind::Sampled, move |t| s.eval(t))?;
        sys.interpolation_error = interp_err;
        sys.symmetry_tol = DEFAULT_SYMMETRY_TOL.max(interp_err);
        sys.label = String::from("sampled");
        Ok(sys)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_symmetry_tol(mut self, tol: f64) -> Self {
        self.symmetry_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CurvatureKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn symmetry_tol(&self) -> f64 {
        self.symmetry_tol
    }

    /// Leave-one-out interpolation error estimate for sampled systems (0 otherwise).
    pub fn interpolation_error(&self) -> f64 {
        self.interpolation_error
    }

    /// `R(t)`, symmetrised after checking it is symmetric within tolerance.
    pub fn curvature(&self, t: f64) -> Result<DMatrix<f64>> {
        let r = (self.curvature)(t);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                t,
                reason: "non-finite curvature".into(),
            });
        }
        let asym = linalg::asymmetry(&r);
        if asym > self.symmetry_tol * (1.0 + r.amax()) {
            return Err(Error::input(format!(
                "curvature at t = {t} is not symmetric (defect {asym:.3e})"
            )));
        }
        Ok(linalg::symmetrize(&r))
    }

    /// Largest eigenvalue of `R` sampled on `[lo, hi]` (at least 16 samples).
    pub fn max_eigenvalue_on(&self, lo: f64, hi: f64) -> Result<f64> {
        let n = (((hi - lo) / 0.05).ceil() as usize).max(16);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            best = best.max(linalg::max_eigenvalue(&self.curvature(t)?));
        }
        Ok(best)
    }

    /// Checks `||R(t + l) - R(t)|| <= symmetry_tol` on sampled `t`, for the
    /// declared period when `l` is `None`.
    pub fn check_periodicity(&self, l: Option<f64>) -> Result<bool> {
        let period = match (l, self.kind) {
            (Some(l), _) => l,
            (None, CurvatureKind::Periodic { period }) => period,
            (None, _) => return Ok(false),
        };
        for i in 0..64 {
            let t = -3.0 + 0.173 * i as f64;
            let d = (self.curvature(t + period)? - self.curvature(t)?).amax();
            if d > self.symmetry_tol * 10.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn is_periodic_with(&self, l: f64) -> bool {
        match self.kind {
            CurvatureKind::Periodic { period } => {
                let ratio = l / period;
                (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0
                    || self.check_periodicity(Some(l)).unwrap_or(false)
            }
            _ => false,
        }
    }
}

/// Entrywise natural cubic spline over matrix-valued samples.
struct MatrixSpline {
    times: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    second: Vec<DMatrix<f64>>,
}

impl MatrixSpline {
    fn new(times: Vec<f64>, values: Vec<DMatrix<f64>>) -> Self {
        let second = natural_second_derivatives(&times, &values);
        MatrixSpline {
            times,
            values,
            second,
        }
    }

    fn eval(&self, t: f64) -> DMatrix<f64> {
        let n = self.times.len();
        let k = match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        let c = (a * a * a - a) * h * h / 6.0;
        let d = (b * b * b - b) * h * h / 6.0;
        &self.values[k] * a + &self.values[k + 1] * b + &self.second[k] * c + &self.second[k + 1] * d
    }

    fn leave_one_out_error(&self) -> f64 {
        let n = self.times.len();
        if n < 4 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for skip in 1..n - 1 {
            let times: Vec<f64> = (0..n).filter(|&i| i != skip).map(|i| self.times[i]).collect();
            let values: Vec<DMatrix<f64>> =
                (0..n).filter(|&i| i != skip).map(|i| self.values[i].clone()).collect();
            let reduced = MatrixSpline::new(times, values);
            worst = worst.max((reduced.eval(self.times[skip]) - &self.values[skip]).amax());
        }
        worst
    }
}

fn natural_second_derivatives(times: &[f64], values: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let n = times.len();
    let shape = values[0].shape();
    let zero = DMatrix::zeros(shape.0, shape.1);
    let mut m2 = vec![zero.clone(); n];
    let mut u = vec![zero.clone(); n];
    let mut diag = vec![0.0; n];
    // Tridiagonal solve, Numerical-Recipes style, applied entrywise.
    for i in 1..n - 1 {
        let sig = (times[i] - times[i - 1]) / (times[i + 1] - times[i - 1]);
        let p = sig * diag[i - 1] + 2.0;
        diag[i] = (sig - 1.0) / p;
        let slope = (&values[i + 1] - &values[i]) / (times[i + 1] - times[i])
            - (&values[i] - &values[i - 1]) / (times[i] - times[i - 1]);
        u[i] = (slope * (6.0 / (times[i + 1] - times[i - 1])) - &u[i - 1] * sig) / p;
    }
    for k in (0..n - 1).rev() {
        m2[k] = &m2[k + 1] * diag[k] + &u[k];
    }
    m2[0] = zero.clone();
    m2[n - 1] = zero;
    m2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dimension() {
        assert!(JacobiSystem::constant(1.0, 0).is_err());
    }

    #[test]
    fn asymmetric_curvature_is_rejected_on_query() {
        let sys = JacobiSystem::new(2, CurvatureKind::ClosedForm, |t| {
            DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0])
        })
        .unwrap();
        assert!(sys.curvature(0.0).is_ok());
        assert!(sys.curvature(1.0).is_err());
    }

    #[test]
    fn spline_reproduces_smooth_curvature() {
        let times: Vec<f64> = (0..=80).map(|i| i as f64 * 0.1).collect();
        let samples = times
            .iter()
            .map(|&t| DMatrix::from_row_slice(2, 2, &[1.0 + t.sin(), 0.1 * t.cos(), 0.1 * t.cos(), 2.0]))
            .collect();
        let sys = JacobiSystem::sampled(times, samples).unwrap();
        let r = sys.curvature(3.05).unwrap();
        assert!((r[(0, 0)] - (1.0 + 3.05f64.sin())).abs() < 1e-4);
        let e = sys.interpolation_error();
        assert!(e > 0.0 && e < 1e-2, "{e}");
    }

    #[test]
    fn constant_system_is_periodic() {
        let sys = JacobiSystem::constant(4.0, 1).unwrap();
        assert!(sys.check_periodicity(Some(0.7)).unwrap());
        assert!(sys.is_periodic_with(std::f64::consts::PI));
    }
}
