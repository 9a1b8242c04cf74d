//! Transverse reduction of the Jacobi equation by an isotropic subspace `W`.
//!
//! `Wbar(t)` is spanned by the values of `W` at `t` together with the
//! derivatives of the fields of `W` vanishing at `t`; it has constant
//! dimension `dim W`. Near a zero `t*` of `W` the vanishing fields `J` are
//! replaced by `J(t) / (t - t*)`, which extends smoothly through `t*` with
//! value `J'(t*)`. The span is cut into charts, one per zero, each integrated
//! from its own zero so the quotient keeps full relative accuracy.
//!
//! With `P` the projector onto `Wbar` and `A = (I - P) P' P`, the horizontal
//! part of `J'` for `J` in `W` is `A J`, a parallel frame `F` of
//! `H = Wbar^perp` solves `F' = -A^T F`, and the reduced curvature in that
//! frame is `F^T (R + 3 A A^T) F`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{intersection_dimension, FieldSubspace};
use crate::index::zeros::{zero_times, ScanOptions, ZeroTime};
use crate::index::IntervalSpec;
use crate::linalg::{self, Svd};
use crate::ode::frame::{parallel_frame, pseudo_inverse, ParallelFrame, SubspacePath};
use crate::ode::{DenseMode, FundamentalSolution, Tolerances};
use crate::system::{CurvatureKind, JacobiSystem};

/// Below this distance from a chart's zero the quotient `J(t) / (t - t*)` is
/// replaced by its limit.
const LIMIT_H: f64 = 1e-7;
/// Zeros of `W` this far outside the working span still get their own chart.
const ZERO_MARGIN: f64 = 0.25;
/// Sup-norm tolerance for projected fields against the reduced equation.
pub const PROJECTION_RESIDUAL_TOL: f64 = 1e-7;
const A_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug)]
struct Chart {
    anchor: f64,
    hi: f64,
    kernel: usize,
    flow: FundamentalSolution,
    /// `2m x d`: non-vanishing fields first, then the `kernel` fields vanishing
    /// at the anchor with their values set to exactly zero.
    data: DMatrix<f64>,
}

/// Projector onto `Wbar(t)` and `A(t) = (I - P) P' P`.
struct Geometry {
    wbar: DMatrix<f64>,
    p: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl Chart {
    fn build(w: &FieldSubspace, anchor: f64, kernel: usize, lo: f64, hi: f64) -> Result<Chart> {
        let m = w.ambient_dim();
        let d = w.dim();
        let s = w.states(anchor)?;
        let data = if kernel == 0 {
            s
        } else {
            let sv = Svd::new(&s.rows(0, m).into_owned());
            let mut data = &s * &sv.v.columns(0, d);
            data.view_mut((0, d - kernel), (m, kernel)).fill(0.0);
            data
        };
        let flow = FundamentalSolution::new(w.system().clone(), anchor, (lo.min(anchor), hi.max(anchor)))?;
        Ok(Chart {
            anchor,
            hi,
            kernel,
            flow,
            data,
        })
    }

    /// `(B, D)` with `span B = Wbar(t)` and `(I - P) B' = (I - P) D`.
    fn spanning(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = self.flow.dim();
        let d = self.data.ncols();
        let st = self.flow.propagate(&self.data, t)?;
        let mut b = st.rows(0, m).into_owned();
        let mut dd = st.rows(m, m).into_owned();
        if self.kernel > 0 {
            let n = d - self.kernel;
            let h = t - self.anchor;
            if h.abs() < LIMIT_H {
                let v = dd.columns(n, self.kernel).into_owned();
                b.columns_mut(n, self.kernel).copy_from(&v);
                dd.columns_mut(n, self.kernel).fill(0.0);
            } else {
                b.columns_mut(n, self.kernel).unscale_mut(h);
                dd.columns_mut(n, self.kernel).unscale_mut(h);
            }
        }
        Ok((b, dd))
    }

    fn geometry(&self, t: f64) -> Result<Geometry> {
        let m = self.flow.dim();
        let d = self.data.ncols();
        if d == 0 {
            return Ok(Geometry {
                wbar: DMatrix::zeros(m, 0),
                p: DMatrix::zeros(m, m),
                a: DMatrix::zeros(m, m),
            });
        }
        let (b, dd) = self.spanning(t)?;
        let sv = Svd::new(&b);
        let ratio = sv.sigma_min() / sv.sigma_max().max(f64::MIN_POSITIVE);
        if ratio < linalg::BASIS_CONDITION {
            return Err(Error::DegenerateSubspace {
                t,
                detail: format!("Wbar loses dimension (sigma ratio {ratio:.3e})"),
            });
        }
        let wbar = sv.u.columns(0, d).into_owned();
        let p = &wbar * wbar.transpose();
        let a = (DMatrix::identity(m, m) - &p) * dd * pseudo_inverse(&sv, d);
        Ok(Geometry { wbar, p, a })
    }
}

/// Charts covering a span, one per zero of `W`.
struct WbarPath {
    m: usize,
    charts: Vec<Chart>,
}

impl WbarPath {
    fn build(w: &FieldSubspace, lo: f64, hi: f64) -> Result<(WbarPath, Vec<ZeroTime>)> {
        let m = w.ambient_dim();
        let zeros = if w.dim() == 0 {
            Vec::new()
        } else {
            let ext = IntervalSpec::closed(lo - ZERO_MARGIN, hi + ZERO_MARGIN)?;
            zero_times(w, &ext, &ScanOptions::default())?
        };
        let mut charts = Vec::new();
        if zeros.is_empty() {
            charts.push(Chart::build(w, lo, 0, lo, hi)?);
        } else {
            let n = zeros.len();
            for (i, z) in zeros.iter().enumerate() {
                let seg_lo = if i == 0 { lo } else { 0.5 * (zeros[i - 1].time + z.time) };
                let seg_hi = if i + 1 == n { hi } else { 0.5 * (z.time + zeros[i + 1].time) };
                let (seg_lo, seg_hi) = (seg_lo.max(lo), seg_hi.min(hi));
                if seg_lo > seg_hi && !charts.is_empty() {
                    continue;
                }
                charts.push(Chart::build(w, z.time, z.multiplicity, seg_lo.min(seg_hi), seg_hi)?);
            }
        }
        Ok((WbarPath { m, charts }, zeros))
    }

    fn chart(&self, t: f64) -> &Chart {
        self.charts
            .iter()
            .find(|c| t <= c.hi)
            .unwrap_or_else(|| self.charts.last().expect("at least one chart"))
    }

    fn geometry(&self, t: f64) -> Result<Geometry> {
        self.chart(t).geometry(t)
    }
}

impl SubspacePath for WbarPath {
    fn ambient_dim(&self) -> usize {
        self.m
    }

    fn projector(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.m, self.m) - self.geometry(t)?.p)
    }

    fn projector_derivative(&self, t: f64) -> Result<DMatrix<f64>> {
        let a = self.geometry(t)?.a;
        Ok(-(&a + a.transpose()))
    }
}

/// A local path around `t`, anchored at the nearest zero of `W` if one is close.
fn local_path(w: &FieldSubspace, t: f64) -> Result<WbarPath> {
    let m = w.ambient_dim();
    let near = if w.dim() == 0 {
        None
    } else {
        let win = IntervalSpec::closed(t - 0.05, t + 0.05)?;
        let opts = ScanOptions {
            stability_check: false,
            ..ScanOptions::default()
        };
        zero_times(w, &win, &opts)?
            .into_iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    };
    let chart = match near {
        Some(z) => Chart::build(w, z.time, z.multiplicity, t, t)?,
        None => Chart::build(w, t, 0, t, t)?,
    };
    Ok(WbarPath {
        m,
        charts: vec![chart],
    })
}

fn require_isotropic(w: &FieldSubspace) -> Result<()> {
    if !w.is_isotropic().0 {
        return Err(Error::input("transverse reduction needs an isotropic subspace"));
    }
    Ok(())
}

/// Orthonormal basis (`m x dim W`) of `Wbar(t)`.
pub fn wbar_basis(w: &FieldSubspace, t: f64) -> Result<DMatrix<f64>> {
    require_isotropic(w)?;
    Ok(local_path(w, t)?.geometry(t)?.wbar)
}

/// Parallel orthonormal frame of `H(t) = Wbar(t)^perp` over `span`.
pub fn horizontal_frame(w: &FieldSubspace, span: (f64, f64)) -> Result<ParallelFrame> {
    require_isotropic(w)?;
    let (path, _) = WbarPath::build(w, span.0, span.1)?;
    parallel_frame(Arc::new(path), span)
}

/// The map `J(t) -> J'(t)^h` from `Wbar(t)` to `H(t)` in explicit bases.
#[derive(Debug, Clone)]
pub struct AOperator {
    /// Orthonormal basis of `Wbar(t)`, `m x d`.
    pub wbar: DMatrix<f64>,
    /// Orthonormal basis of `H(t)`, `m x (m - d)`.
    pub horizontal: DMatrix<f64>,
    /// `(m - d) x d` matrix of the map in these bases.
    pub matrix: DMatrix<f64>,
    /// Gap between the chart formula and `(I - P) P' P` with `P'` from finite
    /// differences.
    pub residual: f64,
}

impl AOperator {
    pub fn norm(&self) -> f64 {
        if self.matrix.is_empty() {
            0.0
        } else {
            Svd::new(&self.matrix).sigma_max()
        }
    }
}

pub fn a_operator(w: &FieldSubspace, t: f64) -> Result<AOperator> {
    require_isotropic(w)?;
    let path = local_path(w, t)?;
    let g = path.geometry(t)?;
    let m = w.ambient_dim();
    let h = 1e-3;
    let pp = |s: f64| -> Result<DMatrix<f64>> { Ok(path.geometry(s)?.p) };
    let dp = ((pp(t + h)? - pp(t - h)?) * 8.0 - (pp(t + 2.0 * h)? - pp(t - 2.0 * h)?)) / (12.0 * h);
    let fd = (DMatrix::identity(m, m) - &g.p) * dp * &g.p;
    let residual = (&fd - &g.a).amax();
    if residual > A_RESIDUAL_TOL {
        return Err(Error::Consistency {
            check: format!("well-definedness of A at t = {t}"),
            residual,
            tol: A_RESIDUAL_TOL,
        });
    }
    let horizontal = linalg::orthogonal_complement(&g.wbar);
    let matrix = horizontal.transpose() * &g.a * &g.wbar;
    Ok(AOperator {
        wbar: g.wbar,
        horizontal,
        matrix,
        residual,
    })
}

struct Inner {
    parent: Arc<JacobiSystem>,
    path: Arc<WbarPath>,
    frame: ParallelFrame,
}

impl Inner {
    fn reduced_curvature(&self, t: f64) -> Result<DMatrix<f64>> {
        let f = self.frame.frame(t)?;
        let a = self.path.geometry(t)?.a;
        let r = self.parent.curvature(t)? + (&a * a.transpose()) * 3.0;
        Ok(linalg::symmetrize(&(f.transpose() * r * &f)))
    }
}

/// The reduced system of an isotropic `W` on a working span.
pub struct TransverseSystem {
    w: FieldSubspace,
    span: (f64, f64),
    rank: usize,
    inner: Arc<Inner>,
    reduced: Arc<JacobiSystem>,
    w_zeros: Vec<ZeroTime>,
}

impl std::fmt::Debug for TransverseSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransverseSystem")
            .field("w", &self.w.label())
            .field("span", &self.span)
            .field("rank", &self.rank)
            .finish()
    }
}

impl TransverseSystem {
    pub fn new(w: &FieldSubspace, span: (f64, f64)) -> Result<Self> {
        require_isotropic(w)?;
        let (lo, hi) = span;
        if !(lo < hi) {
            return Err(Error::input(format!("invalid working span [{lo}, {hi}]")));
        }
        let (path, w_zeros) = WbarPath::build(w, lo, hi)?;
        let path = Arc::new(path);
        let frame = parallel_frame(path.clone(), span)?;
        let rank = frame.rank();
        let parent = w.system().clone();
        let inner = Arc::new(Inner { parent, path, frame });
        let cb = inner.clone();
        let reduced = JacobiSystem::new(rank.max(1), CurvatureKind::ClosedForm, move |t| {
            cb.reduced_curvature(t)
                .unwrap_or_else(|_| DMatrix::from_element(rank.max(1), rank.max(1), f64::NAN))
        })?
        .with_label(format!("transverse({}, W = {})", w.system().label(), w.label()));
        if rank == 0 {
            return Err(Error::input("W is Lagrangian; the reduced space is trivial"));
        }
        Ok(TransverseSystem {
            w: w.clone(),
            span,
            rank,
            inner,
            reduced: Arc::new(reduced),
            w_zeros,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }

    pub fn parent(&self) -> &Arc<JacobiSystem> {
        &self.inner.parent
    }

    /// Flow of the reduced system anchored at the start of the span.
    pub fn reduced_flow(&self) -> Result<FundamentalSolution> {
        FundamentalSolution::with_mode(
            self.reduced.clone(),
            self.span.0,
            self.span,
            Tolerances::default(),
            DenseMode::Interpolant,
        )
    }

    pub fn isotropic(&self) -> &FieldSubspace {
        &self.w
    }

    pub fn reduced(&self) -> &Arc<JacobiSystem> {
        &self.reduced
    }

    pub fn frame(&self) -> &ParallelFrame {
        &self.inner.frame
    }

    /// Zeros of `W` near the working span; each starts its own chart.
    pub fn w_zeros(&self) -> &[ZeroTime] {
        &self.w_zeros
    }

    /// `m x m` matrix of `A(t) = (I - P) P' P`.
    pub fn a_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.inner.path.geometry(t)?.a)
    }

    /// Operator norm of `A(t)`.
    pub fn a_norm(&self, t: f64) -> Result<f64> {
        Ok(Svd::new(&self.a_matrix(t)?).sigma_max())
    }

    pub fn wbar(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.inner.path.geometry(t)?.wbar)
    }

    /// Smallest eigenvalue of `F^T (R^W - R) F`; never negative in exact arithmetic.
    pub fn curvature_gap(&self, t: f64) -> Result<f64> {
        let f = self.inner.frame.frame(t)?;
        let red = self.reduced.curvature(t)?;
        let plain = f.transpose() * self.inner.parent.curvature(t)? * &f;
        Ok(linalg::min_eigenvalue(&(red - plain)))
    }

    /// Reduced data `(F^T J, F^T J' - F^T A J)` of the states `2m x c` at `t`.
    fn project_states(&self, states: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        let m = self.w.ambient_dim();
        let f = self.inner.frame.frame(t)?;
        let a = self.a_matrix(t)?;
        let u = states.rows(0, m);
        let v = states.rows(m, m);
        let x = f.transpose() * u;
        let dx = f.transpose() * (v - &a * u);
        let r = self.rank;
        let mut out = DMatrix::zeros(2 * r, states.ncols());
        out.rows_mut(0, r).copy_from(&x);
        out.rows_mut(r, r).copy_from(&dx);
        Ok(out)
    }

    /// Largest gap, relative to the field scale, between the projected fields
    /// of `fields` and the reduced solutions with the same data at the span start.
    pub fn projection_residual(&self, fields: &FieldSubspace, samples: usize) -> Result<f64> {
        let (lo, hi) = self.span;
        let data = self.project_states(&fields.states(lo)?, lo)?;
        let flow = self.reduced_flow()?;
        let mut worst: f64 = 0.0;
        let n = samples.max(2);
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let st = fields.states(t)?;
            let direct = self.project_states(&st, t)?;
            let evolved = flow.propagate(&data, t)?;
            let scale = 1.0 + st.amax();
            worst = worst.max((direct.rows(0, self.rank) - evolved.rows(0, self.rank)).amax() / scale);
        }
        Ok(worst)
    }

    /// Projection of a Lagrangian `L ⊇ W` to a Lagrangian of the reduced system.
    pub fn project_subspace(&self, l: &FieldSubspace) -> Result<FieldSubspace> {
        if !l.is_lagrangian() {
            return Err(Error::input("projected subspace must be Lagrangian"));
        }
        let cap = intersection_dimension(l, &self.w)?;
        if cap != self.w.dim() {
            return Err(Error::input(format!(
                "W is not contained in L (dim(L ∩ W) = {cap}, dim W = {})",
                self.w.dim()
            )));
        }
        let lo = self.span.0;
        let data = self.project_states(&l.states(lo)?, lo)?;
        let sv = Svd::new(&data);
        let sigma: Vec<f64> = sv.sigma.iter().copied().take(data.ncols().min(data.nrows())).collect();
        let rank = linalg::numerical_rank(&sigma, linalg::RANK_THRESHOLD, linalg::RANK_BAND_LO, "projected data")?;
        if rank != self.rank {
            return Err(Error::Consistency {
                check: "rank of projected Lagrangian".into(),
                residual: rank as f64,
                tol: self.rank as f64,
            });
        }
        let basis = sv.u.columns(0, self.rank).into_owned();
        let flow = Arc::new(self.reduced_flow()?);
        let projected = FieldSubspace::lagrangian(flow, lo, &basis)
            .map_err(|e| Error::Consistency {
                check: format!("projected subspace is Lagrangian ({e})"),
                residual: f64::NAN,
                tol: 0.0,
            })?
            .with_label(format!("{}/W", l.label()));
        let residual = self.projection_residual(l, 16)?;
        if !(residual <= PROJECTION_RESIDUAL_TOL) {
            return Err(Error::Consistency {
                check: "projected fields solve the reduced equation".into(),
                residual,
                tol: PROJECTION_RESIDUAL_TOL,
            });
        }
        Ok(projected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{vanishing_lagrangian, FieldVector};
    use crate::index::{index_on_interval, ScanOptions};
    use std::f64::consts::PI;

    fn flow(delta: f64, m: usize) -> Arc<FundamentalSolution> {
        let sys = Arc::new(JacobiSystem::constant(delta, m).unwrap());
        Arc::new(FundamentalSolution::new(sys, 0.0, (0.0, 0.0)).unwrap())
    }

    fn sin_e1(f: &Arc<FundamentalSolution>) -> FieldSubspace {
        FieldSubspace::new(f.clone(), &[FieldVector::from_slices(0.0, &[0.0, 0.0], &[1.0, 0.0]).unwrap()]).unwrap()
    }

    #[test]
    fn wbar_through_a_zero() {
        let f = flow(1.0, 2);
        let w = sin_e1(&f);
        for t in [PI, 0.0, 1.0, PI - 1e-9] {
            let b = wbar_basis(&w, t).unwrap();
            assert!((b[(0, 0)].abs() - 1.0).abs() < 1e-9, "t = {t}");
        }
        let a = a_operator(&w, PI).unwrap();
        assert!(a.norm() < 1e-9);
    }

    #[test]
    fn reduction_of_sine_line() {
        let f = flow(1.0, 2);
        let w = sin_e1(&f);
        let ts = TransverseSystem::new(&w, (0.0, 2.0 * PI)).unwrap();
        assert_eq!(ts.rank(), 1);
        for t in [0.0, 0.5, PI, 5.0] {
            assert!((ts.reduced().curvature(t).unwrap()[(0, 0)] - 1.0).abs() < 1e-9);
            assert!(ts.frame().parallelism_defect(t).unwrap() < 1e-8);
        }
        let l0 = vanishing_lagrangian(f, 0.0).unwrap();
        let p = ts.project_subspace(&l0).unwrap();
        let opts = ScanOptions::default();
        for iv in [
            IntervalSpec::closed(0.0, PI).unwrap(),
            IntervalSpec::open_closed(0.0, 2.0 * PI).unwrap(),
        ] {
            let il = index_on_interval(&l0, &iv, &opts).unwrap().total;
            let iw = index_on_interval(&w, &iv, &opts).unwrap().total;
            let ip = index_on_interval(&p, &iv, &opts).unwrap().total;
            assert_eq!(il, iw + ip, "{iv}");
        }
    }

    #[test]
    fn zero_dimensional_w_is_identity() {
        let f = flow(4.0, 2);
        let w = FieldSubspace::from_matrix(f.clone(), 0.0, &DMatrix::zeros(4, 0)).unwrap();
        let ts = TransverseSystem::new(&w, (0.0, 1.0)).unwrap();
        assert_eq!(ts.rank(), 2);
        assert!((ts.frame().frame(0.7).unwrap() - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((ts.reduced().curvature(0.3).unwrap() - DMatrix::identity(2, 2) * 4.0).amax() < 1e-12);
    }

    #[test]
    fn rejects_w_outside_l() {
        let f = flow(1.0, 2);
        let w = FieldSubspace::new(f.clone(), &[FieldVector::from_slices(0.0, &[1.0, 0.0], &[0.0, 0.0]).unwrap()])
            .unwrap();
        let ts = TransverseSystem::new(&w, (0.0, 1.0)).unwrap();
        let l0 = vanishing_lagrangian(f, 0.0).unwrap();
        assert!(matches!(ts.project_subspace(&l0), Err(Error::InputContract(_))));
    }
}
