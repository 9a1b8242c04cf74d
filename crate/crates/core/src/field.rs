//! Jacobi fields as initial data, and subspaces of the solution space.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::FundamentalSolution;
use crate::system::JacobiSystem;

/// Tolerance for the symplectic form to count as vanishing on an orthonormal basis.
pub const ISOTROPY_TOL: f64 = 1e-9;

/// A Jacobi field, identified by `(J(anchor), J'(anchor))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub anchor: f64,
    pub value: DVector<f64>,
    pub derivative: DVector<f64>,
}

impl FieldVector {
    pub fn new(anchor: f64, value: DVector<f64>, derivative: DVector<f64>) -> Result<Self> {
        if value.len() != derivative.len() || value.is_empty() {
            return Err(Error::input("value and derivative must have the same positive length"));
        }
        if !anchor.is_finite() || value.iter().chain(derivative.iter()).any(|v| !v.is_finite()) {
            return Err(Error::input("field data must be finite"));
        }
        Ok(FieldVector {
            anchor,
            value,
            derivative,
        })
    }

    pub fn from_slices(anchor: f64, value: &[f64], derivative: &[f64]) -> Result<Self> {
        Self::new(
            anchor,
            DVector::from_column_slice(value),
            DVector::from_column_slice(derivative),
        )
    }

    fn from_stacked(anchor: f64, x: &DVector<f64>) -> Self {
        let m = x.len() / 2;
        FieldVector {
            anchor,
            value: x.rows(0, m).into_owned(),
            derivative: x.rows(m, m).into_owned(),
        }
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// `value` stacked over `derivative`.
    pub fn stacked(&self) -> DVector<f64> {
        let m = self.dim();
        let mut x = DVector::zeros(2 * m);
        x.rows_mut(0, m).copy_from(&self.value);
        x.rows_mut(m, m).copy_from(&self.derivative);
        x
    }

    pub fn is_zero(&self) -> bool {
        self.value.iter().chain(self.derivative.iter()).all(|&v| v == 0.0)
    }
}

/// `omega(x, y) = <x, y'> - <x', y>` for fields sharing an anchor.
pub fn symplectic_form(x: &FieldVector, y: &FieldVector) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::input("fields belong to systems of different dimension"));
    }
    if x.anchor != y.anchor {
        return Err(Error::input(format!(
            "fields anchored at different times ({} and {})",
            x.anchor, y.anchor
        )));
    }
    Ok(x.value.dot(&y.derivative) - x.derivative.dot(&y.value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceKind {
    Generic,
    Isotropic,
    Lagrangian,
}

/// Largest `|omega(b_i, b_j)|` over basis pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropyWitness {
    pub i: usize,
    pub j: usize,
    pub omega: f64,
}

/// A subspace of the solution space with an orthonormal basis of initial data.
#[derive(Debug, Clone)]
pub struct FieldSubspace {
    flow: Arc<FundamentalSolution>,
    anchor: f64,
    /// `2m x d`, orthonormal, data at `anchor`.
    basis: DMatrix<f64>,
    /// The same fields as data at the flow's anchor.
    flow_data: DMatrix<f64>,
    kind: SubspaceKind,
    label: String,
}

impl FieldSubspace {
    /// Spans the columns of `data` (`2m x d`, value rows over derivative
    /// rows) anchored at `anchor`.
    pub fn from_matrix(flow: Arc<FundamentalSolution>, anchor: f64, data: &DMatrix<f64>) -> Result<Self> {
        let m = flow.dim();
        if data.nrows() != 2 * m {
            return Err(Error::input(format!(
                "initial data has {} rows, expected {}",
                data.nrows(),
                2 * m
            )));
        }
        if data.ncols() > 2 * m {
            return Err(Error::input("more spanning fields than the solution space dimension"));
        }
        let basis = linalg::orthonormalize_columns(data)?;
        let flow_data = if anchor == flow.anchor() {
            basis.clone()
        } else {
            flow.transfer(anchor, flow.anchor())? * &basis
        };
        let mut sub = FieldSubspace {
            flow,
            anchor,
            basis,
            flow_data,
            kind: SubspaceKind::Generic,
            label: String::from("subspace"),
        };
        let (iso, _) = sub.check_isotropy();
        sub.kind = match (iso, sub.dim() == m) {
            (true, true) => SubspaceKind::Lagrangian,
            (true, false) => SubspaceKind::Isotropic,
            _ => SubspaceKind::Generic,
        };
        Ok(sub)
    }

    pub fn new(flow: Arc<FundamentalSolution>, fields: &[FieldVector]) -> Result<Self> {
        let m = flow.dim();
        let anchor = match fields.first() {
            Some(f) => f.anchor,
            None => flow.anchor(),
        };
        let mut data = DMatrix::zeros(2 * m, fields.len());
        for (j, f) in fields.iter().enumerate() {
            if f.dim() != m {
                return Err(Error::input(format!("field {j} has dimension {}, expected {m}", f.dim())));
            }
            if f.anchor != anchor {
                return Err(Error::input("spanning fields must share an anchor"));
            }
            if f.is_zero() {
                return Err(Error::input(format!("field {j} is the zero field")));
            }
            data.set_column(j, &f.stacked());
        }
        Self::from_matrix(flow, anchor, &data)
    }

    /// Like [`FieldSubspace::from_matrix`] but fails unless the result is isotropic.
    pub fn isotropic(flow: Arc<FundamentalSolution>, anchor: f64, data: &DMatrix<f64>) -> Result<Self> {
        let sub = Self::from_matrix(flow, anchor, data)?;
        match sub.kind {
            SubspaceKind::Generic => Err(Error::input(format!(
                "subspace is not isotropic (max |omega| = {:.3e})",
                sub.check_isotropy().1.map(|w| w.omega.abs()).unwrap_or(0.0)
            ))),
            _ => Ok(sub),
        }
    }

    /// Like [`FieldSubspace::from_matrix`] but fails unless the result is Lagrangian.
    pub fn lagrangian(flow: Arc<FundamentalSolution>, anchor: f64, data: &DMatrix<f64>) -> Result<Self> {
        let sub = Self::from_matrix(flow, anchor, data)?;
        if sub.kind != SubspaceKind::Lagrangian {
            return Err(Error::input(format!(
                "subspace is not Lagrangian (dim {}, kind {:?})",
                sub.dim(),
                sub.kind
            )));
        }
        Ok(sub)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn flow(&self) -> &Arc<FundamentalSolution> {
        &self.flow
    }

    pub fn system(&self) -> &Arc<JacobiSystem> {
        self.flow.system()
    }

    /// Ambient `m`.
    pub fn ambient_dim(&self) -> usize {
        self.flow.dim()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    /// Orthonormal `2m x d` basis of initial data at the anchor.
    pub fn basis_matrix(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis(&self) -> Vec<FieldVector> {
        self.basis
            .column_iter()
            .map(|c| FieldVector::from_stacked(self.anchor, &c.into_owned()))
            .collect()
    }

    fn check_isotropy(&self) -> (bool, Option<IsotropyWitness>) {
        let m = self.ambient_dim();
        let om = linalg::omega_matrix(m);
        let gram = self.basis.transpose() * om * &self.basis;
        let mut witness: Option<IsotropyWitness> = None;
        for i in 0..gram.nrows() {
            for j in (i + 1)..gram.ncols() {
                let w = gram[(i, j)];
                if witness.is_none_or(|x| w.abs() > x.omega.abs()) {
                    witness = Some(IsotropyWitness { i, j, omega: w });
                }
            }
        }
        let ok = witness.is_none_or(|w| w.omega.abs() <= ISOTROPY_TOL);
        (ok, witness)
    }

    /// Whether `omega` vanishes on the subspace, with the worst basis pair.
    pub fn is_isotropic(&self) -> (bool, Option<IsotropyWitness>) {
        self.check_isotropy()
    }

    pub fn is_lagrangian(&self) -> bool {
        self.check_isotropy().0 && self.dim() == self.ambient_dim()
    }

    /// Stacked states `(J_i(t), J_i'(t))` of the basis fields, `2m x d`.
    pub fn states(&self, t: f64) -> Result<DMatrix<f64>> {
        if t == self.anchor {
            return Ok(self.basis.clone());
        }
        self.flow.propagate(&self.flow_data, t)
    }

    pub fn evaluate_fields(&self, t: f64) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        let s = self.states(t)?;
        let m = self.ambient_dim();
        Ok(s.column_iter()
            .map(|c| (c.rows(0, m).into_owned(), c.rows(m, m).into_owned()))
            .collect())
    }

    /// `m x d` matrix of values `J_i(t)`.
    pub fn evaluation_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let m = self.ambient_dim();
        Ok(self.states(t)?.rows(0, m).into_owned())
    }

    /// The same subspace with its basis re-expressed at a new anchor.
    pub fn reanchored(&self, anchor: f64) -> Result<Self> {
        let data = self.states(anchor)?;
        let mut sub = Self::from_matrix(self.flow.clone(), anchor, &data)?;
        sub.label = self.label.clone();
        Ok(sub)
    }

    /// Subspace spanned by the fields `sum_j coeffs[j, i] * basis_j`.
    pub fn subspace(&self, coeffs: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(self.flow.clone(), self.anchor, &(&self.basis * coeffs))
    }

    /// Initial data at `anchor` of the field with coefficients `c` in this basis.
    pub fn combination(&self, c: &DVector<f64>) -> FieldVector {
        FieldVector::from_stacked(self.anchor, &(&self.basis * c))
    }
}

/// `L_a`, the fields vanishing at `a`.
pub fn vanishing_lagrangian(flow: Arc<FundamentalSolution>, a: f64) -> Result<FieldSubspace> {
    let m = flow.dim();
    let mut data = DMatrix::zeros(2 * m, m);
    for i in 0..m {
        data[(m + i, i)] = 1.0;
    }
    Ok(FieldSubspace::lagrangian(flow, a, &data)?.with_label(format!("L_{a}")))
}

/// Builds a flow anchored at `a` and returns `L_a`.
pub fn vanishing_lagrangian_of(system: Arc<JacobiSystem>, a: f64) -> Result<FieldSubspace> {
    let flow = Arc::new(FundamentalSolution::new(system, a, (a, a))?);
    vanishing_lagrangian(flow, a)
}

fn same_system(a: &FieldSubspace, b: &FieldSubspace) -> Result<()> {
    let (sa, sb) = (a.system(), b.system());
    if Arc::ptr_eq(sa, sb) {
        return Ok(());
    }
    if sa.dim() != sb.dim() {
        return Err(Error::input("subspaces belong to systems of different dimension"));
    }
    for i in 0..8 {
        let t = a.anchor() + 0.37 * i as f64;
        if (sa.curvature(t)? - sb.curvature(t)?).amax() > 1e-12 {
            return Err(Error::input("subspaces belong to different Jacobi systems"));
        }
    }
    Ok(())
}

/// `dim(L1 ∩ L2)` inside the solution space, by the rank of the stacked bases
/// expressed at `L1`'s anchor.
pub fn intersection_dimension(l1: &FieldSubspace, l2: &FieldSubspace) -> Result<usize> {
    same_system(l1, l2)?;
    let t = l1.anchor();
    let b2 = if l2.anchor() == t {
        l2.basis_matrix().clone()
    } else {
        linalg::orthonormalize_columns(&l2.states(t)?)?
    };
    let (d1, d2) = (l1.dim(), l2.dim());
    if d1 == 0 || d2 == 0 {
        return Ok(0);
    }
    let mut stacked = DMatrix::zeros(b2.nrows(), d1 + d2);
    stacked.columns_mut(0, d1).copy_from(l1.basis_matrix());
    stacked.columns_mut(d1, d2).copy_from(&b2);
    let svd = linalg::Svd::new(&stacked);
    let sigma: Vec<f64> = svd.sigma.iter().copied().take(d1 + d2).collect();
    let rank = linalg::numerical_rank(&sigma, linalg::RANK_THRESHOLD, linalg::RANK_BAND_LO, "subspace intersection")?;
    Ok(d1 + d2 - rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flow(delta: f64, m: usize) -> Arc<FundamentalSolution> {
        let sys = Arc::new(JacobiSystem::constant(delta, m).unwrap());
        Arc::new(FundamentalSolution::new(sys, 0.0, (0.0, 0.0)).unwrap())
    }

    fn fv(value: &[f64], derivative: &[f64]) -> FieldVector {
        FieldVector::from_slices(0.0, value, derivative).unwrap()
    }

    #[test]
    fn form_on_unit_pairs() {
        assert_eq!(symplectic_form(&fv(&[1.0], &[0.0]), &fv(&[1.0], &[0.0])).unwrap(), 0.0);
        assert_eq!(symplectic_form(&fv(&[0.0], &[1.0]), &fv(&[1.0], &[0.0])).unwrap(), -1.0);
        let other = FieldVector::from_slices(1.0, &[1.0], &[0.0]).unwrap();
        assert!(symplectic_form(&fv(&[1.0], &[0.0]), &other).is_err());
    }

    #[test]
    fn form_is_time_invariant() {
        let f = flow(1.0, 1);
        // sin t and cos t.
        let sub = FieldSubspace::new(f.clone(), &[fv(&[0.0], &[1.0]), fv(&[1.0], &[0.0])]).unwrap();
        let moved = sub.reanchored(0.7).unwrap();
        let s = sub.states(0.7).unwrap();
        let x = FieldVector::from_slices(0.7, &[s[(0, 0)]], &[s[(1, 0)]]).unwrap();
        let y = FieldVector::from_slices(0.7, &[s[(0, 1)]], &[s[(1, 1)]]).unwrap();
        assert!((symplectic_form(&x, &y).unwrap() + 1.0).abs() < 1e-10);
        assert_eq!(moved.anchor(), 0.7);
    }

    #[test]
    fn zero_field_rejected() {
        let f = flow(1.0, 1);
        assert!(FieldSubspace::new(f, &[fv(&[0.0], &[0.0])]).is_err());
    }

    #[test]
    fn classification() {
        let f = flow(1.0, 2);
        let s = FieldSubspace::new(f.clone(), &[fv(&[0.0, 0.0], &[1.0, 0.0])]).unwrap();
        assert_eq!(s.kind(), SubspaceKind::Isotropic);
        let g = FieldSubspace::new(f.clone(), &[fv(&[1.0, 0.0], &[0.0, 0.0]), fv(&[0.0, 0.0], &[1.0, 0.0])]).unwrap();
        let (iso, w) = g.is_isotropic();
        assert!(!iso);
        assert!((w.unwrap().omega.abs() - 1.0).abs() < 1e-15);
        let c = FieldSubspace::new(f.clone(), &[fv(&[1.0, 0.0], &[0.0, 0.0]), fv(&[0.0, 1.0], &[0.0, 0.0])]).unwrap();
        assert!(c.is_lagrangian());
        // sin t e1, cos t e2.
        let mixed = FieldSubspace::new(f.clone(), &[fv(&[0.0, 0.0], &[1.0, 0.0]), fv(&[0.0, 1.0], &[0.0, 0.0])]).unwrap();
        assert!(mixed.is_lagrangian());
        let l0 = vanishing_lagrangian(f.clone(), 0.0).unwrap();
        assert!(l0.is_lagrangian());
        assert_eq!(intersection_dimension(&l0, &l0).unwrap(), 2);
        assert_eq!(intersection_dimension(&l0, &mixed).unwrap(), 1);
        assert_eq!(intersection_dimension(&mixed, &l0).unwrap(), 1);
        let lhalf = vanishing_lagrangian(f, PI / 2.0).unwrap();
        assert_eq!(intersection_dimension(&l0, &lhalf).unwrap(), 0);
    }

    #[test]
    fn evaluation_of_l0() {
        let f = flow(1.0, 2);
        let l0 = vanishing_lagrangian(f, 0.0).unwrap();
        let e = l0.evaluation_matrix(PI / 2.0).unwrap();
        assert!((e - DMatrix::identity(2, 2)).amax() < 1e-10);
        let fields = l0.evaluate_fields(PI).unwrap();
        for (i, (v, d)) in fields.iter().enumerate() {
            assert!(v.amax() < 1e-10);
            assert!((d[i] + 1.0).abs() < 1e-10);
        }
    }
}
