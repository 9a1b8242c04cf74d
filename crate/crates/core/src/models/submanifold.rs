//! Jacobi fields of a submanifold `N` through `alpha(0)`, normal to `alpha'`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::certificate::rate_certificate;
use crate::error::{Error, Result};
use crate::field::FieldSubspace;
use crate::index::{index_on_interval, IntervalSpec, ScanOptions};
use crate::linalg::{self, Svd};
use crate::ode::FundamentalSolution;
use crate::system::JacobiSystem;
use crate::verdict::VerdictRecord;

const DATA_TOL: f64 = 1e-10;

/// `L^N`: fields with `J(0)` tangent to `N` and `J'(0) + S J(0)` normal to `N`.
///
/// `projector` is the orthogonal projector onto `T N` inside the normal space
/// of `alpha'`, `shape` the shape operator `S_{alpha'(0)}` on `T N`.
pub fn submanifold_lagrangian(
    system: &Arc<JacobiSystem>,
    projector: &DMatrix<f64>,
    shape: &DMatrix<f64>,
) -> Result<FieldSubspace> {
    let m = system.dim();
    if projector.shape() != (m, m) || shape.shape() != (m, m) {
        return Err(Error::input(format!("submanifold data must be {m} x {m}")));
    }
    if linalg::asymmetry(projector) > DATA_TOL || (projector * projector - projector).amax() > DATA_TOL {
        return Err(Error::input("tangent projector must be a symmetric idempotent"));
    }
    let pst = projector * shape * projector;
    if linalg::asymmetry(&pst) > DATA_TOL {
        return Err(Error::input("shape operator must be symmetric on the tangent space"));
    }
    let sv = Svd::new(projector);
    let dim_n = sv.sigma.iter().filter(|&&s| s > 0.5).count();
    let tangent = sv.u.columns(0, dim_n).into_owned();
    let normal = linalg::orthogonal_complement(&tangent);
    let mut data = DMatrix::zeros(2 * m, m);
    data.view_mut((0, 0), (m, dim_n)).copy_from(&tangent);
    data.view_mut((m, 0), (m, dim_n)).copy_from(&(-(&pst * &tangent)));
    data.view_mut((m, dim_n), (m, m - dim_n)).copy_from(&normal);
    let flow = Arc::new(FundamentalSolution::new(system.clone(), 0.0, (0.0, 0.0))?);
    Ok(FieldSubspace::lagrangian(flow, 0.0, &data)?.with_label(format!("L^N (dim N = {dim_n})")))
}

/// At least `n - 1` focal points of `N` in `(0, pi]` when the ambient curvature
/// is at least 1; `n` is the dimension of the ambient manifold.
pub fn focal_count_check(l_n: &FieldSubspace, n: usize, opts: &ScanOptions) -> Result<VerdictRecord> {
    if n < 1 {
        return Err(Error::input("ambient dimension must be positive"));
    }
    if !rate_certificate(l_n.system(), 1.0, 0.0, PI)? {
        return Err(Error::HypothesisNotMet("ambient curvature is not >= 1 on [0, pi]".into()));
    }
    let interval = IntervalSpec::open_closed(l_n.anchor(), l_n.anchor() + PI)?;
    let rep = index_on_interval(l_n, &interval, opts)?;
    let times: Vec<f64> = rep.zeros.iter().map(|z| z.time).collect();
    Ok(VerdictRecord::lower("focal_count", rep.total as f64, (n - 1) as f64, 0.0)
        .with_note(format!("focal times on {interval}: {times:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::hopf_model;

    #[test]
    fn point_is_vanishing_lagrangian() {
        let sys = Arc::new(JacobiSystem::constant(1.0, 2).unwrap());
        let l = submanifold_lagrangian(&sys, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).unwrap();
        let v = focal_count_check(&l, 3, &ScanOptions::default()).unwrap();
        assert_eq!((v.lhs, v.rhs, v.pass), (2.0, 2.0, true));
    }

    #[test]
    fn hopf_fiber_focal_points() {
        let md = hopf_model("s3_s2").unwrap();
        let v0 = md.vertical(0.0);
        let l = submanifold_lagrangian(md.total_system(), &(&v0 * v0.transpose()), &md.shape(0.0)).unwrap();
        let v = focal_count_check(&l, 3, &ScanOptions::default()).unwrap();
        assert_eq!(v.lhs, 2.0);
        assert_eq!(v.slack, 0.0);
    }

    #[test]
    fn equator_in_round_sphere() {
        let sys = Arc::new(JacobiSystem::constant(1.0, 2).unwrap());
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = submanifold_lagrangian(&sys, &p, &DMatrix::zeros(2, 2)).unwrap();
        let rep = index_on_interval(&l, &IntervalSpec::open_closed(0.0, PI).unwrap(), &ScanOptions::default()).unwrap();
        assert_eq!(rep.total, 2);
        let z: Vec<_> = rep.zeros.iter().filter(|z| z.time > 0.0).collect();
        assert!((z[0].time - PI / 2.0).abs() < 1e-8 && z[0].multiplicity == 1);
    }

    #[test]
    fn bad_data_rejected() {
        let sys = Arc::new(JacobiSystem::constant(1.0, 2).unwrap());
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!(matches!(
            submanifold_lagrangian(&sys, &p, &DMatrix::zeros(2, 2)),
            Err(Error::InputContract(_))
        ));
        let p = DMatrix::identity(2, 2);
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(submanifold_lagrangian(&sys, &p, &s).is_err());
    }

    #[test]
    fn weak_curvature_is_a_hypothesis_failure() {
        let sys = Arc::new(JacobiSystem::constant(0.5, 2).unwrap());
        let l = submanifold_lagrangian(&sys, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            focal_count_check(&l, 3, &ScanOptions::default()),
            Err(Error::HypothesisNotMet(_))
        ));
    }
}
