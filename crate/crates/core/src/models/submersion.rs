//! Riemannian submersions seen along one horizontal geodesic.
//!
//! Everything is expressed in a parallel orthonormal frame of the normal
//! space `alpha'^perp` of the total space, of dimension `m = n + k - 1`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldSubspace, FieldVector};
use crate::linalg::Svd;
use crate::ode::{FundamentalSolution, Tolerances, Trajectory};
use crate::system::JacobiSystem;

type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Residual tolerance for model self-consistency checks.
pub const MODEL_TOL: f64 = 1e-7;

/// Closed-form constants attached to a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Conjugate radius of the base.
    pub conj_radius_base: Option<f64>,
    /// Length of the shortest closed geodesic of the base.
    pub shortest_closed_geodesic: Option<f64>,
    /// Focal radius of the fibers read as a metric foliation.
    pub foliation_focal_radius: Option<f64>,
    /// Conjugate points allowed on `[0, l0)` for the index chain through closed geodesics.
    pub conj_budget: Option<usize>,
    /// Upper curvature bound of the base.
    pub base_curvature_upper: Option<f64>,
}

/// A submersion `M -> B` with fibers of dimension `k` over a base of dimension `n`.
#[derive(Clone)]
pub struct SubmersionModel {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub constants: ModelConstants,
    total: Arc<JacobiSystem>,
    base: Arc<JacobiSystem>,
    /// `m x k`, orthonormal basis of the vertical space.
    vertical: MatrixFn,
    /// `m x (n - 1)`, orthonormal horizontal frame, parallel for the horizontal connection.
    horizontal: MatrixFn,
    horizontal_derivative: MatrixFn,
    /// `m x m`, the O'Neill map `A_{alpha'}`, horizontal to vertical.
    oneill: MatrixFn,
    /// `m x m`, the fiber shape operator `S_{alpha'}` on vertical vectors.
    shape: MatrixFn,
}

impl fmt::Debug for SubmersionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubmersionModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("k", &self.k)
            .field("constants", &self.constants)
            .finish()
    }
}

impl SubmersionModel {
    pub fn total_dim(&self) -> usize {
        self.n + self.k - 1
    }

    pub fn base_dim(&self) -> usize {
        self.n - 1
    }

    pub fn total_system(&self) -> &Arc<JacobiSystem> {
        &self.total
    }

    pub fn base_system(&self) -> &Arc<JacobiSystem> {
        &self.base
    }

    pub fn total_curvature(&self, t: f64) -> Result<DMatrix<f64>> {
        self.total.curvature(t)
    }

    pub fn base_curvature(&self, t: f64) -> Result<DMatrix<f64>> {
        self.base.curvature(t)
    }

    pub fn vertical(&self, t: f64) -> DMatrix<f64> {
        (self.vertical)(t)
    }

    pub fn horizontal(&self, t: f64) -> DMatrix<f64> {
        (self.horizontal)(t)
    }

    pub fn horizontal_derivative(&self, t: f64) -> DMatrix<f64> {
        (self.horizontal_derivative)(t)
    }

    pub fn oneill(&self, t: f64) -> DMatrix<f64> {
        (self.oneill)(t)
    }

    pub fn shape(&self, t: f64) -> DMatrix<f64> {
        (self.shape)(t)
    }

    /// Right-hand side of the holonomy equation `J' = -(A* + S) J`.
    fn holonomy_operator(&self, t: f64) -> DMatrix<f64> {
        -(self.oneill(t).transpose() + self.shape(t))
    }

    /// Largest gap in `<Rbar y, y> = <R Y, Y> + 3 |A Y|^2` over horizontal unit
    /// vectors `Y = H y`, sampled on `[0, 2 pi]`.
    pub fn oneill_residual(&self) -> Result<f64> {
        let d = self.base_dim();
        let mut worst: f64 = 0.0;
        for i in 0..24 {
            let t = 2.0 * PI * i as f64 / 24.0;
            let h = self.horizontal(t);
            let r = self.total_curvature(t)?;
            let rb = self.base_curvature(t)?;
            let a = self.oneill(t);
            for j in 0..d {
                for l in j..d {
                    let mut y = DVector::zeros(d);
                    y[j] = 1.0;
                    y[l] += 1.0;
                    y.normalize_mut();
                    let big = &h * &y;
                    let lhs = (rb.transpose() * &y).dot(&y);
                    let rhs = (&r * &big).dot(&big) + 3.0 * (&a * &big).norm_squared();
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Runs the structural checks of the model, failing with a model error.
    pub fn validate(&self) -> Result<()> {
        let res = self.oneill_residual()?;
        if res > MODEL_TOL {
            return Err(Error::ModelInconsistency(format!(
                "{}: O'Neill cross-check off by {res:.3e}",
                self.name
            )));
        }
        if !crate::certificate::rate_certificate(&self.total, 1.0, 0.0, 2.0 * PI)? {
            return Err(Error::ModelInconsistency(format!("{}: total curvature is not >= 1", self.name)));
        }
        Ok(())
    }

    fn total_flow(&self) -> Result<Arc<FundamentalSolution>> {
        Ok(Arc::new(FundamentalSolution::new(self.total.clone(), 0.0, (0.0, 0.0))?))
    }
}

/// Round Hopf fibrations `S^{2k+1} -> B^{k+1}(4)` for `k = 1, 3, 7`.
///
/// The normal space splits as `span{A_u} + span{B_u}`, `u = 1..k`; along the
/// horizontal geodesic the vertical vectors are `cos t A_u + sin t B_u` and
/// the horizontal normal ones `-sin t A_u + cos t B_u`.
pub fn hopf_model(which: &str) -> Result<SubmersionModel> {
    let (n, k) = match which {
        "s3_s2" => (2, 1),
        "s7_s4" => (4, 3),
        "s15_s8" => (8, 7),
        other => return Err(Error::input(format!("unknown Hopf model '{other}'"))),
    };
    let m = n + k - 1;
    let frames = move |t: f64| {
        let (s, c) = t.sin_cos();
        let mut v = DMatrix::zeros(m, k);
        let mut h = DMatrix::zeros(m, k);
        for u in 0..k {
            v[(u, u)] = c;
            v[(k + u, u)] = s;
            h[(u, u)] = -s;
            h[(k + u, u)] = c;
        }
        (v, h)
    };
    let vertical: MatrixFn = Arc::new(move |t| frames(t).0);
    let horizontal: MatrixFn = Arc::new(move |t| frames(t).1);
    let horizontal_derivative: MatrixFn = Arc::new(move |t| -frames(t).0);
    let oneill: MatrixFn = Arc::new(move |t| {
        let (v, h) = frames(t);
        -(v * h.transpose())
    });
    let shape: MatrixFn = Arc::new(move |_| DMatrix::zeros(m, m));
    let total = JacobiSystem::constant(1.0, m)?.with_label(format!("{which}: total"));
    let base = JacobiSystem::constant(4.0, n - 1)?.with_label(format!("{which}: base"));
    let model = SubmersionModel {
        name: which.to_string(),
        n,
        k,
        constants: ModelConstants {
            conj_radius_base: Some(PI / 2.0),
            shortest_closed_geodesic: Some(PI),
            foliation_focal_radius: Some(PI / 2.0),
            conj_budget: Some(n - 1),
            base_curvature_upper: Some(4.0),
        },
        total: Arc::new(total),
        base: Arc::new(base),
        vertical,
        horizontal,
        horizontal_derivative,
        oneill,
        shape,
    };
    model.validate()?;
    Ok(model)
}

/// The `k` holonomy fields started from the vertical basis at `t = 0`.
///
/// The first-order holonomy equation is integrated separately and compared
/// with the Jacobi fields through the same initial data on `[0, 2 pi]`.
pub fn holonomy_subspace(model: &SubmersionModel) -> Result<FieldSubspace> {
    let m = model.total_dim();
    let k = model.k;
    let v0 = model.vertical(0.0);
    let d0 = model.holonomy_operator(0.0) * &v0;
    let mut data = DMatrix::zeros(2 * m, k);
    data.rows_mut(0, m).copy_from(&v0);
    data.rows_mut(m, m).copy_from(&d0);
    let flow = model.total_flow()?;
    let w = FieldSubspace::isotropic(flow, 0.0, &data)
        .map_err(|e| Error::ModelInconsistency(format!("{}: holonomy fields not isotropic ({e})", model.name)))?
        .with_label(format!("{}: holonomy", model.name));

    let md = model.clone();
    let rhs = move |t: f64, y: &DMatrix<f64>| -> Result<DMatrix<f64>> { Ok(md.holonomy_operator(t) * y) };
    let span = 2.0 * PI;
    let traj = Trajectory::integrate(&rhs, 0.0, v0.clone(), 0.0, span, Tolerances::default())?;
    // Basis columns of `w` are an orthonormalised recombination of `data`.
    let coeffs = Svd::new(&data).solve(&w.basis_matrix().columns(0, k).into_owned(), 1e-14);
    let mut worst: f64 = 0.0;
    for i in 0..=32 {
        let t = span * i as f64 / 32.0;
        let direct = traj.eval(&rhs, t)? * &coeffs;
        let jac = w.evaluation_matrix(t)?;
        worst = worst.max((direct - jac).amax());
    }
    if worst > MODEL_TOL {
        return Err(Error::ModelInconsistency(format!(
            "{}: holonomy fields miss the Jacobi equation by {worst:.3e}",
            model.name
        )));
    }
    Ok(w)
}

/// Lifted Lagrangian: holonomy fields plus the fields with `J(0) = 0` and
/// horizontal `J'(0)`.
pub fn submersion_lagrangian(model: &SubmersionModel) -> Result<FieldSubspace> {
    let m = model.total_dim();
    let hol = holonomy_subspace(model)?;
    let d = model.base_dim();
    let mut data = DMatrix::zeros(2 * m, model.k + d);
    data.view_mut((0, 0), (2 * m, model.k)).copy_from(&hol.basis_matrix());
    data.view_mut((m, model.k), (m, d)).copy_from(&model.horizontal(0.0));
    let l = FieldSubspace::lagrangian(hol.flow().clone(), 0.0, &data)
        .map_err(|e| Error::ModelInconsistency(format!("{}: lifted subspace not Lagrangian ({e})", model.name)))?
        .with_label(format!("{}: lifted L", model.name));

    let tail = FieldSubspace::from_matrix(hol.flow().clone(), 0.0, &data.columns(model.k, d).into_owned())?;
    let mut worst: f64 = 0.0;
    for i in 0..=24 {
        let t = 2.0 * PI * i as f64 / 24.0;
        worst = worst.max(projectability_defect(model, &tail.states(t)?, t));
    }
    if worst > MODEL_TOL {
        return Err(Error::ModelInconsistency(format!(
            "{}: lifted generators are not projectable (defect {worst:.3e})",
            model.name
        )));
    }
    Ok(l)
}

/// `|V^T (Y' + S Y^v + A Y^h)|` for the states `2m x c` at `t`.
fn projectability_defect(model: &SubmersionModel, states: &DMatrix<f64>, t: f64) -> f64 {
    let m = model.total_dim();
    let v = model.vertical(t);
    let pv = &v * v.transpose();
    let ph = DMatrix::identity(m, m) - &pv;
    let y = states.rows(0, m);
    let dy = states.rows(m, m);
    let gap = v.transpose() * (dy + model.shape(t) * &pv * y + model.oneill(t) * &ph * y);
    gap.amax()
}

/// The projectable field over `base_field` with vertical part `v_vertical` at `t = 0`.
///
/// `base_field` is given in the horizontal frame; `v_vertical` is an ambient
/// vector that must be vertical at `t = 0`.
pub fn projectable_lift(model: &SubmersionModel, base_field: &FieldVector, v_vertical: &DVector<f64>) -> Result<FieldVector> {
    let m = model.total_dim();
    let d = model.base_dim();
    let k = model.k;
    if base_field.dim() != d || base_field.anchor != 0.0 {
        return Err(Error::input(format!("base field must have dimension {d} and anchor 0")));
    }
    if v_vertical.len() != m {
        return Err(Error::input(format!("vertical vector must have dimension {m}")));
    }
    let v = model.vertical(0.0);
    let h = model.horizontal(0.0);
    let dh = model.horizontal_derivative(0.0);
    if (v_vertical - &v * (v.transpose() * v_vertical)).amax() > 1e-12 * (1.0 + v_vertical.amax()) {
        return Err(Error::input("v_vertical is not vertical at t = 0"));
    }
    // Unknowns (Y(0), Y'(0)); rows: horizontal value, vertical value,
    // projectability, horizontal derivative.
    let pv = &v * v.transpose();
    let ph = DMatrix::identity(m, m) - &pv;
    let mut sys = DMatrix::zeros(2 * m, 2 * m);
    let mut rhs = DVector::zeros(2 * m);
    sys.view_mut((0, 0), (d, m)).copy_from(&h.transpose());
    rhs.rows_mut(0, d).copy_from(&base_field.value);
    sys.view_mut((d, 0), (k, m)).copy_from(&v.transpose());
    rhs.rows_mut(d, k).copy_from(&(v.transpose() * v_vertical));
    let proj = v.transpose() * (model.shape(0.0) * &pv + model.oneill(0.0) * &ph);
    sys.view_mut((d + k, 0), (k, m)).copy_from(&proj);
    sys.view_mut((d + k, m), (k, m)).copy_from(&v.transpose());
    sys.view_mut((d + 2 * k, 0), (d, m)).copy_from(&dh.transpose());
    sys.view_mut((d + 2 * k, m), (d, m)).copy_from(&h.transpose());
    rhs.rows_mut(d + 2 * k, d).copy_from(&base_field.derivative);

    let sv = Svd::new(&sys);
    let smin = sv.sigma_min();
    let smax = sv.sigma_max();
    if smin < 1e-10 * smax {
        return Err(Error::ModelInconsistency(format!(
            "{}: lift constraints are singular (sigma ratio {:.3e})",
            model.name,
            smin / smax
        )));
    }
    let x = sv.solve(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()), 0.0).column(0).into_owned();
    let lift = FieldVector::new(0.0, x.rows(0, m).into_owned(), x.rows(m, m).into_owned())?;

    // Horizontal part of the lift against the base field on [0, 2 pi].
    let total = FundamentalSolution::new(model.total.clone(), 0.0, (0.0, 2.0 * PI))?;
    let base = FundamentalSolution::new(model.base.clone(), 0.0, (0.0, 2.0 * PI))?;
    let ys = DMatrix::from_column_slice(2 * m, 1, lift.stacked().as_slice());
    let bs = DMatrix::from_column_slice(2 * d, 1, base_field.stacked().as_slice());
    let scale = 1.0 + ys.amax() + bs.amax();
    let mut worst: f64 = 0.0;
    for i in 0..=24 {
        let t = 2.0 * PI * i as f64 / 24.0;
        let yt = total.propagate(&ys, t)?;
        let bt = base.propagate(&bs, t)?;
        let horiz = model.horizontal(t).transpose() * yt.rows(0, m);
        worst = worst.max((horiz - bt.rows(0, d)).amax() / scale);
        worst = worst.max(projectability_defect(model, &yt, t) / scale);
    }
    if worst > MODEL_TOL {
        return Err(Error::ModelInconsistency(format!(
            "{}: lift does not project to the base field (gap {worst:.3e})",
            model.name
        )));
    }
    Ok(lift)
}
