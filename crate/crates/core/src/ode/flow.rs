use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::dop853::{DenseMode, MatrixRhs, Tolerances, Trajectory};
use crate::system::JacobiSystem;

/// `Y' = [[0, I], [-R(t), 0]] Y` on `2m x c` matrices.
pub(crate) struct JacobiRhs {
    pub(crate) system: Arc<JacobiSystem>,
}

impl MatrixRhs for JacobiRhs {
    fn eval(&self, t: f64, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = self.system.dim();
        let r = self.system.curvature(t)?;
        let mut out = DMatrix::zeros(2 * m, y.ncols());
        out.rows_mut(0, m).copy_from(&y.rows(m, m));
        let acc = -(r * y.rows(0, m));
        out.rows_mut(m, m).copy_from(&acc);
        Ok(out)
    }
}

/// Fundamental matrix `Phi(t)` of the Jacobi equation, normalised so that
/// `Phi(anchor) = I`. Columns of `Phi(t)` are the states `(J(t), J'(t))` of the
/// fields with unit initial data at the anchor.
///
/// The covered span grows on demand. Growth takes a write lock, so concurrent
/// readers of an already covered span never block each other for long.
pub struct FundamentalSolution {
    rhs: JacobiRhs,
    anchor: f64,
    tol: Tolerances,
    traj: RwLock<Trajectory>,
}

impl std::fmt::Debug for FundamentalSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FundamentalSolution")
            .field("system", &self.rhs.system.label())
            .field("anchor", &self.anchor)
            .field("span", &self.span())
            .finish()
    }
}

impl FundamentalSolution {
    pub fn new(system: Arc<JacobiSystem>, anchor: f64, span: (f64, f64)) -> Result<Self> {
        Self::with_tolerances(system, anchor, span, Tolerances::default())
    }

    pub fn with_tolerances(
        system: Arc<JacobiSystem>,
        anchor: f64,
        span: (f64, f64),
        tol: Tolerances,
    ) -> Result<Self> {
        Self::with_mode(system, anchor, span, tol, DenseMode::Restep)
    }

    /// `DenseMode::Interpolant` makes evaluation between steps cheap; use it
    /// when the curvature itself is expensive to evaluate.
    pub fn with_mode(
        system: Arc<JacobiSystem>,
        anchor: f64,
        span: (f64, f64),
        tol: Tolerances,
        mode: DenseMode,
    ) -> Result<Self> {
        if !(anchor.is_finite() && span.0.is_finite() && span.1.is_finite()) {
            return Err(Error::input("anchor and span must be finite"));
        }
        let (lo, hi) = (span.0.min(anchor), span.1.max(anchor));
        let m = system.dim();
        let rhs = JacobiRhs { system };
        let traj = Trajectory::integrate_with_mode(&rhs, anchor, DMatrix::identity(2 * m, 2 * m), lo, hi, tol, mode)?;
        Ok(FundamentalSolution {
            rhs,
            anchor,
            tol,
            traj: RwLock::new(traj),
        })
    }

    pub fn system(&self) -> &Arc<JacobiSystem> {
        &self.rhs.system
    }

    pub fn dim(&self) -> usize {
        self.rhs.system.dim()
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tol
    }

    pub fn span(&self) -> (f64, f64) {
        self.traj.read().expect("flow lock poisoned").span()
    }

    /// Makes sure `[lo, hi]` is covered.
    pub fn ensure_span(&self, lo: f64, hi: f64) -> Result<()> {
        let (cur_lo, cur_hi) = self.span();
        if lo >= cur_lo && hi <= cur_hi {
            return Ok(());
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::input("span must be finite"));
        }
        let mut traj = self.traj.write().expect("flow lock poisoned");
        traj.extend(&self.rhs, lo, hi)
    }

    /// `Phi(t)`; extends the span when `t` lies outside it.
    pub fn phi(&self, t: f64) -> Result<DMatrix<f64>> {
        if !t.is_finite() {
            return Err(Error::input("evaluation time must be finite"));
        }
        self.ensure_span(t, t)?;
        self.traj.read().expect("flow lock poisoned").eval(&self.rhs, t)
    }

    /// Propagator taking states at `from` to states at `to`.
    pub fn transfer(&self, from: f64, to: f64) -> Result<DMatrix<f64>> {
        let target = self.phi(to)?;
        if from == self.anchor {
            return Ok(target);
        }
        Ok(target * linalg::symplectic_inverse(&self.phi(from)?))
    }

    /// `||Phi^T Omega Phi - Omega||_max` at `t`.
    pub fn symplectic_defect(&self, t: f64) -> Result<f64> {
        let phi = self.phi(t)?;
        let om = linalg::omega_matrix(self.dim());
        Ok((phi.transpose() * &om * &phi - om).amax())
    }

    /// Largest symplectic defect over `samples + 1` evenly spaced times.
    pub fn max_symplectic_defect(&self, lo: f64, hi: f64, samples: usize) -> Result<f64> {
        let n = samples.max(1);
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            worst = worst.max(self.symplectic_defect(t)?);
        }
        Ok(worst)
    }

    /// Relative gap between a central difference of `Phi` and the generator
    /// `[[0, I], [-R, 0]] Phi` at `t`.
    pub fn derivative_check(&self, t: f64, h: f64) -> Result<f64> {
        let fd = (self.phi(t + h)? - self.phi(t - h)?) / (2.0 * h);
        let phi = self.phi(t)?;
        let exact = self.rhs.eval(t, &phi)?;
        Ok((fd - &exact).amax() / (1.0 + exact.amax()))
    }

    /// States `Phi(t) * data` for `2m x c` data given at the anchor.
    pub fn propagate(&self, data: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.phi(t)? * data)
    }
}
