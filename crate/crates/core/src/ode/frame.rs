//! Parallel orthonormal frames for smoothly varying subspaces of `R^m`.
//!
//! A subspace path is described by its orthogonal projector `Q(t)`. Sections
//! `X = Q X` are parallel when `Q X' = 0`, which for frames lying in the path
//! reduces to the linear transport `X' = Q'(t) X`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::dop853::{DenseMode, MatrixRhs, Tolerances, Trajectory};

/// A smooth family of subspaces given through projectors.
pub trait SubspacePath: Send + Sync {
    /// Ambient dimension.
    fn ambient_dim(&self) -> usize;

    /// Orthogonal projector onto the subspace at `t`.
    fn projector(&self, t: f64) -> Result<DMatrix<f64>>;

    /// Time derivative of the projector. Defaults to a fourth-order central
    /// difference.
    fn projector_derivative(&self, t: f64) -> Result<DMatrix<f64>> {
        let h = 1e-3;
        let p1 = self.projector(t + h)?;
        let m1 = self.projector(t - h)?;
        let p2 = self.projector(t + 2.0 * h)?;
        let m2 = self.projector(t - 2.0 * h)?;
        Ok(((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h))
    }
}

type SpanFn = dyn Fn(f64) -> DMatrix<f64> + Send + Sync;

/// Subspace path spanned by the columns of `B(t)`, optionally with `B'(t)`.
pub struct SpanPath {
    dim: usize,
    span: Box<SpanFn>,
    derivative: Option<Box<SpanFn>>,
}

impl SpanPath {
    pub fn new<F>(dim: usize, span: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        SpanPath {
            dim,
            span: Box::new(span),
            derivative: None,
        }
    }

    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.derivative = Some(Box::new(derivative));
        self
    }

    fn basis(&self, t: f64) -> Result<DMatrix<f64>> {
        let b = (self.span)(t);
        if b.nrows() != self.dim {
            return Err(Error::input(format!(
                "spanning matrix has {} rows, expected {}",
                b.nrows(),
                self.dim
            )));
        }
        Ok(b)
    }
}

/// Projector `B B^+` and, given `B'`, its derivative `N + N^T` with
/// `N = (I - P) B' B^+`.
pub(crate) fn span_projector(
    b: &DMatrix<f64>,
    db: Option<&DMatrix<f64>>,
    t: f64,
) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let m = b.nrows();
    if b.ncols() == 0 {
        let z = DMatrix::zeros(m, m);
        return Ok((z.clone(), db.map(|_| z)));
    }
    let svd = linalg::Svd::new(b);
    let ratio = svd.sigma_min() / svd.sigma_max().max(f64::MIN_POSITIVE);
    if ratio < linalg::BASIS_CONDITION {
        return Err(Error::DegenerateSubspace {
            t,
            detail: format!("spanning vectors nearly dependent (ratio {ratio:.3e})"),
        });
    }
    let r = b.ncols().min(m);
    let u = svd.u.columns(0, r).into_owned();
    let p = &u * u.transpose();
    let dp = match db {
        Some(db) => {
            let pinv = pseudo_inverse(&svd, r);
            let n = (DMatrix::identity(m, m) - &p) * db * pinv;
            Some(&n + n.transpose())
        }
        None => None,
    };
    Ok((p, dp))
}

/// `V diag(1/sigma) U^T` restricted to the leading `r` singular triples.
pub(crate) fn pseudo_inverse(svd: &linalg::Svd, r: usize) -> DMatrix<f64> {
    let cols = svd.v.nrows();
    let rows = svd.u.nrows();
    let mut out = DMatrix::zeros(cols, rows);
    for i in 0..r {
        let s = svd.sigma[i];
        out += svd.v.column(i) * svd.u.column(i).transpose() / s;
    }
    out
}

impl SubspacePath for SpanPath {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn projector(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(span_projector(&self.basis(t)?, None, t)?.0)
    }

    fn projector_derivative(&self, t: f64) -> Result<DMatrix<f64>> {
        match &self.derivative {
            Some(d) => {
                let b = self.basis(t)?;
                let db = d(t);
                Ok(span_projector(&b, Some(&db), t)?.1.expect("derivative requested"))
            }
            None => {
                let h = 1e-3;
                let f = |s: f64| self.projector(s);
                Ok(((f(t + h)? - f(t - h)?) * 8.0 - (f(t + 2.0 * h)? - f(t - 2.0 * h)?)) / (12.0 * h))
            }
        }
    }
}

/// Deterministic orthonormal basis for the range of a projector of rank `r`:
/// greedy Gram-Schmidt over its columns, largest residual first.
pub(crate) fn range_basis(q: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let m = q.nrows();
    let mut out = DMatrix::zeros(m, r);
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    for j in 0..r {
        let (best, _) = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });
        let mut v = cols[best].clone();
        for _pass in 0..2 {
            for k in 0..j {
                let p = out.column(k).dot(&v);
                v.axpy(-p, &out.column(k).into_owned(), 1.0);
            }
        }
        v.unscale_mut(v.norm());
        out.set_column(j, &v);
        for c in cols.iter_mut() {
            let p = v.dot(c);
            c.axpy(-p, &v, 1.0);
        }
    }
    out
}

struct TransportRhs {
    path: Arc<dyn SubspacePath>,
}

impl MatrixRhs for TransportRhs {
    fn eval(&self, t: f64, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.path.projector_derivative(t)? * y)
    }
}

/// Orthonormal frame of a subspace path, parallel for the projected derivative.
pub struct ParallelFrame {
    rank: usize,
    rhs: TransportRhs,
    traj: Trajectory,
}

impl std::fmt::Debug for ParallelFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParallelFrame")
            .field("rank", &self.rank)
            .field("span", &self.traj.span())
            .finish()
    }
}

const RANK_SAMPLES_PER_UNIT: f64 = 20.0;

/// Transport runs tighter than the Jacobi flow: orthonormality drift is
/// otherwise visible at the 1e-10 level over long spans.
const FRAME_TOL: Tolerances = Tolerances {
    rtol: 1e-12,
    atol: 1e-14,
};

/// Integrates the parallel transport of an orthonormal basis of the path over
/// `span`, starting from a deterministic basis at `span.0`.
pub fn parallel_frame(path: Arc<dyn SubspacePath>, span: (f64, f64)) -> Result<ParallelFrame> {
    let (lo, hi) = span;
    if !(lo <= hi) {
        return Err(Error::input(format!("invalid frame span [{lo}, {hi}]")));
    }
    let q0 = path.projector(lo)?;
    let rank = q0.trace().round() as usize;
    // Constant rank along the span; a projector's trace is its rank.
    let n = (((hi - lo) * RANK_SAMPLES_PER_UNIT).ceil() as usize).max(1);
    for i in 0..=n {
        let t = lo + (hi - lo) * i as f64 / n as f64;
        let tr = path.projector(t)?.trace();
        if (tr - rank as f64).abs() > 1e-6 {
            return Err(Error::RankJump {
                t,
                expected: rank,
                found: tr.round().max(0.0) as usize,
            });
        }
    }
    let f0 = range_basis(&q0, rank);
    let rhs = TransportRhs { path };
    let traj = Trajectory::integrate_with_mode(&rhs, lo, f0, lo, hi, FRAME_TOL, DenseMode::Interpolant)?;
    Ok(ParallelFrame { rank, rhs, traj })
}

impl ParallelFrame {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn span(&self) -> (f64, f64) {
        self.traj.span()
    }

    /// `m x rank` matrix whose columns are the frame at `t`.
    pub fn frame(&self, t: f64) -> Result<DMatrix<f64>> {
        self.traj.eval(&self.rhs, t)
    }

    /// `||F^T F - I||_max` at `t`.
    pub fn orthonormality_defect(&self, t: f64) -> Result<f64> {
        let f = self.frame(t)?;
        Ok((f.transpose() * &f - DMatrix::identity(self.rank, self.rank)).amax())
    }

    /// Norm of the projected derivative `Q(t) F'(t)`, with `F'` from a
    /// fourth-order central difference of the stored frame.
    pub fn parallelism_defect(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        let h = 1e-3f64.min((hi - lo) / 8.0).max(1e-6);
        // Shift the stencil inside the span near the ends.
        let c = t.clamp(lo + 2.0 * h, hi - 2.0 * h);
        let d = ((self.frame(c + h)? - self.frame(c - h)?) * 8.0
            - (self.frame(c + 2.0 * h)? - self.frame(c - 2.0 * h)?))
            / (12.0 * h);
        let q = self.rhs.path.projector(c)?;
        Ok((q * d).amax())
    }
}
