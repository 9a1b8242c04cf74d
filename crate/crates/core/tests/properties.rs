use std::f64::consts::PI;
use std::sync::Arc;

use jacobi_index::models::{
    constant_curvature_system, holonomy_subspace, model_by_name, random_lagrangian_frame, seeded_system,
};
use jacobi_index::{
    index_at_time, index_on_interval, intersection_dimension, symplectic_form, vanishing_lagrangian,
    FieldSubspace, FieldVector, FundamentalSolution, IntervalSpec, JacobiSystem, ScanOptions, TransverseSystem,
    VerdictRecord,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn flow_of(system: JacobiSystem, anchor: f64) -> Arc<FundamentalSolution> {
    Arc::new(FundamentalSolution::new(Arc::new(system), anchor, (anchor, anchor + 1.0)).unwrap())
}

fn random_flow(seed: u64, m: usize) -> Arc<FundamentalSolution> {
    flow_of(seeded_system(seed, m).unwrap(), 0.0)
}

fn lagrangian(flow: &Arc<FundamentalSolution>, seed: u64) -> FieldSubspace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_lagrangian_frame(&mut rng, flow.dim());
    FieldSubspace::lagrangian(flow.clone(), 0.0, &data).unwrap()
}

fn omega(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows() / 2;
    x.rows(0, m).transpose() * y.rows(m, m) - x.rows(m, m).transpose() * y.rows(0, m)
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

fn field(anchor: f64, v: &[f64]) -> FieldVector {
    let m = v.len() / 2;
    FieldVector::from_slices(anchor, &v[..m], &v[m..]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symplectic_form_is_alternating((x, y) in (1usize..5).prop_flat_map(|m| (vec_strategy(2 * m), vec_strategy(2 * m)))) {
        let (fx, fy) = (field(0.0, &x), field(0.0, &y));
        let xy = symplectic_form(&fx, &fy).unwrap();
        let yx = symplectic_form(&fy, &fx).unwrap();
        prop_assert!((xy + yx).abs() <= 1e-12 * (1.0 + xy.abs()));
        prop_assert!(symplectic_form(&fx, &fx).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn symplectic_form_is_bilinear(x in vec_strategy(4), y in vec_strategy(4), z in vec_strategy(4), s in -3.0..3.0f64) {
        let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + s * b).collect();
        let lhs = symplectic_form(&field(1.0, &sum), &field(1.0, &y)).unwrap();
        let rhs = symplectic_form(&field(1.0, &x), &field(1.0, &y)).unwrap()
            + s * symplectic_form(&field(1.0, &z), &field(1.0, &y)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flow_is_identity_at_anchor_and_symplectic(seed in any::<u64>(), m in 1usize..4, t in -3.0..5.0f64) {
        let flow = random_flow(seed, m);
        prop_assert!((flow.phi(0.0).unwrap() - DMatrix::identity(2 * m, 2 * m)).amax() <= 1e-14);
        prop_assert!(flow.symplectic_defect(t).unwrap() <= 1e-8);
    }

    #[test]
    fn omega_of_solutions_is_constant(seed in any::<u64>(), m in 1usize..4, t in 0.0..6.0f64) {
        let flow = random_flow(seed, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let data = DMatrix::from_fn(2 * m, 3, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let at_t = flow.propagate(&data, t).unwrap();
        let gap = (omega(&at_t, &at_t) - omega(&data, &data)).amax();
        prop_assert!(gap <= 1e-8 * (1.0 + at_t.amax().powi(2)), "gap {gap}");
    }

    #[test]
    fn evaluation_is_linear(seed in any::<u64>(), m in 1usize..4, t in 0.0..4.0f64, c in vec_strategy(3)) {
        let flow = random_flow(seed, m);
        let l = lagrangian(&flow, seed);
        let coeffs = DVector::from_iterator(m, c.iter().copied().take(m).chain(std::iter::repeat(0.0)).take(m));
        let combined = l.combination(&coeffs);
        let direct = flow.propagate(&DMatrix::from_column_slice(2 * m, 1, combined.stacked().as_slice()), t).unwrap();
        let via_basis = l.states(t).unwrap() * &coeffs;
        prop_assert!((direct.column(0) - via_basis).amax() <= 1e-9 * (1.0 + direct.amax()));
    }

    #[test]
    fn reanchoring_keeps_the_fields(seed in any::<u64>(), m in 1usize..4, anchor in 0.0..3.0f64, t in 0.0..4.0f64) {
        let flow = random_flow(seed, m);
        let l = lagrangian(&flow, seed);
        let moved = l.reanchored(anchor).unwrap();
        prop_assert_eq!(moved.anchor(), anchor);
        prop_assert!(moved.is_lagrangian());
        // Same span: the projector onto the evaluated states agrees.
        let p = |s: &DMatrix<f64>| {
            let q = s.clone().qr().q();
            &q * q.transpose()
        };
        let gap = (p(&l.states(t).unwrap()) - p(&moved.states(t).unwrap())).amax();
        prop_assert!(gap <= 1e-8, "gap {gap}");
    }

    #[test]
    fn lagrangian_intersections(seed in any::<u64>(), m in 1usize..4, a in 0.0..2.0f64) {
        let flow = random_flow(seed, m);
        let l1 = lagrangian(&flow, seed);
        let l2 = lagrangian(&flow, seed.wrapping_add(1));
        let l0 = vanishing_lagrangian(flow.clone(), a).unwrap();
        prop_assert!(l0.is_lagrangian());
        prop_assert!(l1.is_lagrangian());
        let d12 = intersection_dimension(&l1, &l2).unwrap();
        prop_assert_eq!(d12, intersection_dimension(&l2, &l1).unwrap());
        prop_assert!(d12 <= m);
        prop_assert_eq!(intersection_dimension(&l1, &l1).unwrap(), m);
        prop_assert_eq!(intersection_dimension(&l0, &l0.reanchored(0.0).unwrap()).unwrap(), m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn index_is_additive_over_splits(seed in any::<u64>(), m in 1usize..3, b in 0.5..3.5f64) {
        let flow = random_flow(seed, m);
        let l = lagrangian(&flow, seed);
        let opts = ScanOptions::default();
        let whole = index_on_interval(&l, &IntervalSpec::closed(0.0, 4.0).unwrap(), &opts).unwrap();
        prop_assume!(whole.zeros.iter().all(|z| (z.time - b).abs() > 1e-6));
        let left = index_on_interval(&l, &IntervalSpec::closed_open(0.0, b).unwrap(), &opts).unwrap();
        let right = index_on_interval(&l, &IntervalSpec::closed(b, 4.0).unwrap(), &opts).unwrap();
        prop_assert_eq!(left.total + right.total, whole.total);
    }

    #[test]
    fn endpoint_convention(seed in any::<u64>(), m in 1usize..3, a in 0.0..1.0f64) {
        let flow = random_flow(seed, m);
        let l0 = vanishing_lagrangian(flow, a).unwrap();
        let opts = ScanOptions::default();
        let closed = index_on_interval(&l0, &IntervalSpec::closed(a, a + 3.0).unwrap(), &opts).unwrap();
        let half_open = index_on_interval(&l0, &IntervalSpec::open_closed(a, a + 3.0).unwrap(), &opts).unwrap();
        prop_assert_eq!(index_at_time(&l0, a).unwrap(), m);
        prop_assert_eq!(closed.total - half_open.total, m);
    }

    #[test]
    fn zeros_are_ordered_with_bounded_multiplicity(seed in any::<u64>(), m in 1usize..4) {
        let flow = random_flow(seed, m);
        let l = lagrangian(&flow, seed);
        let rep = index_on_interval(&l, &IntervalSpec::closed(0.0, 5.0).unwrap(), &ScanOptions::default()).unwrap();
        prop_assert!(rep.zeros.windows(2).all(|w| w[0].time < w[1].time));
        prop_assert!(rep.zeros.iter().all(|z| (1..=m).contains(&z.multiplicity)));
        prop_assert_eq!(rep.total, rep.zeros.iter().map(|z| z.multiplicity).sum::<usize>());
    }

    #[test]
    fn constant_curvature_counts(delta in 0.25..4.0f64, m in 1usize..4, hi in 0.5..9.0f64) {
        let step = PI / delta.sqrt();
        prop_assume!((hi / step - (hi / step).round()).abs() > 1e-4);
        let flow = flow_of(constant_curvature_system(delta, m).unwrap(), 0.0);
        let l0 = vanishing_lagrangian(flow, 0.0).unwrap();
        let rep = index_on_interval(&l0, &IntervalSpec::open_closed(0.0, hi).unwrap(), &ScanOptions::default()).unwrap();
        prop_assert_eq!(rep.total, m * (hi / step).floor() as usize);
    }

    #[test]
    fn verdict_pass_matches_slack(lhs in -5.0..5.0f64, rhs in -5.0..5.0f64, tol in 0.0..1e-3f64, ok in any::<bool>()) {
        for v in [
            VerdictRecord::upper("u", lhs, rhs, tol),
            VerdictRecord::lower("l", lhs, rhs, tol),
            VerdictRecord::equality("e", lhs, rhs, tol),
        ] {
            let v = v.with_hypothesis(ok);
            prop_assert!(v.slack <= 0.0 || v.statement != "e");
            prop_assert_eq!(v.pass, ok && v.slack >= -tol);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reduced_curvature_is_symmetric(seed in any::<u64>(), k in 1usize..3, t in 0.1..1.9f64) {
        let m = k + 1;
        let flow = random_flow(seed, m);
        let l = lagrangian(&flow, seed);
        let w = l.subspace(&DMatrix::identity(m, k)).unwrap();
        let red = TransverseSystem::new(&w, (0.0, 2.0)).unwrap();
        let r = red.reduced().curvature(t).unwrap();
        prop_assert!((&r - r.transpose()).amax() <= 1e-9 * (1.0 + r.amax()));
        prop_assert!(red.frame().orthonormality_defect(t).unwrap() <= 1e-8);
    }

    #[test]
    fn hopf_reduction_never_lowers_curvature(which in 0usize..2, t in 0.0..(2.0 * PI)) {
        let model = model_by_name(["s3_s2", "s7_s4"][which]).unwrap();
        let w = holonomy_subspace(&model).unwrap();
        let red = TransverseSystem::new(&w, (0.0, 2.0 * PI)).unwrap();
        prop_assert!(red.curvature_gap(t).unwrap() >= -1e-10);
    }

    #[test]
    fn holonomy_gram_is_constant(which in 0usize..2, t in 0.0..(2.0 * PI)) {
        let model = model_by_name(["s3_s2", "s7_s4"][which]).unwrap();
        let w = holonomy_subspace(&model).unwrap();
        let gram = |s: f64| {
            let u = w.evaluation_matrix(s).unwrap();
            u.transpose() * u
        };
        prop_assert!((gram(t) - gram(0.0)).amax() <= 1e-8);
    }
}
