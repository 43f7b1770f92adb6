use echo_cgc::geometry::{echo_check, in_ball, mp_project, DenseVector, GradientBasis};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, d)
}

/// A dimension, up to five columns and one extra vector.
fn basis_case() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=20).prop_flat_map(|d| {
        let k = 1usize..=5.min(d);
        (
            Just(d),
            k.prop_flat_map(move |k| prop::collection::vec(vector(d), k)),
            vector(d),
        )
    })
}

fn build(d: usize, cols: &[Vec<f64>]) -> GradientBasis {
    let mut b = GradientBasis::new(d);
    for (i, c) in cols.iter().enumerate() {
        if let Ok(v) = DenseVector::new(c.clone()) {
            b.insert(i, v).unwrap();
        }
    }
    b
}

fn dv(x: &[f64]) -> DenseVector {
    DenseVector::new(x.to_vec()).unwrap()
}

fn matrix(basis: &GradientBasis) -> DMatrix<f64> {
    DMatrix::from_fn(basis.dim(), basis.len(), |i, j| basis.columns()[j][i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pseudoinverse_recovers_unit_coordinates((d, cols, _) in basis_case()) {
        let basis = build(d, &cols);
        prop_assume!(!basis.is_empty());
        for (j, col) in basis.columns().iter().enumerate() {
            let x = basis.pseudoinverse_apply(col).unwrap();
            for (i, xi) in x.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((xi - want).abs() < 1e-8, "x[{i}] = {xi} for column {j}");
            }
        }
    }

    #[test]
    fn matches_svd_pseudoinverse((d, cols, g) in basis_case()) {
        let basis = build(d, &cols);
        prop_assume!(!basis.is_empty());
        let a = matrix(&basis);
        let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
        let oracle = &pinv * nalgebra::DVector::from_vec(g.clone());
        let proj = mp_project(&basis, &dv(&g)).unwrap();
        let scale = oracle.norm().max(1.0);
        for (x, y) in proj.coefficients.iter().zip(oracle.iter()) {
            prop_assert!((x - y).abs() <= 1e-7 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn projection_is_idempotent((d, cols, g) in basis_case()) {
        let basis = build(d, &cols);
        prop_assume!(!basis.is_empty());
        let once = mp_project(&basis, &dv(&g)).unwrap().echo_gradient;
        let twice = mp_project(&basis, &once).unwrap().echo_gradient;
        prop_assert!(once.distance(&twice) <= 1e-9 * once.norm().max(1e-300));
    }

    #[test]
    fn residual_is_orthogonal_to_span((d, cols, g) in basis_case()) {
        let basis = build(d, &cols);
        prop_assume!(!basis.is_empty());
        let g = dv(&g);
        let proj = mp_project(&basis, &g).unwrap();
        let residual = &g - &proj.echo_gradient;
        for col in basis.columns() {
            prop_assert!(residual.dot(col).abs() <= 1e-9 * g.norm() * col.norm() + 1e-12);
        }
        prop_assert!((residual.norm() - proj.residual_norm).abs() <= 1e-12 * g.norm().max(1.0));
    }

    #[test]
    fn projection_is_best_approximation(
        (d, cols, g) in basis_case(),
        coeffs in prop::collection::vec(-5.0..5.0f64, 5),
    ) {
        let basis = build(d, &cols);
        prop_assume!(!basis.is_empty());
        let g = dv(&g);
        let proj = mp_project(&basis, &g).unwrap();
        let v = basis.combine(&coeffs[..basis.len()]);
        prop_assert!(proj.residual_norm <= g.distance(&v) * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn ball_members_are_close(
        u in vector(8), du in vector(8), dvv in vector(8), r in 0.01..2.0f64,
    ) {
        let truth = dv(&u);
        prop_assume!(truth.norm() > 1e-3);
        let rad = r / (2.0 + r) * truth.norm();
        // pull the perturbations into the ball
        let shrink = |x: &[f64]| {
            let v = dv(x);
            let n = v.norm().max(1e-300);
            let mut out = truth.clone();
            out.axpy(0.999 * rad / n, &v);
            out
        };
        let (a, b) = (shrink(&du), shrink(&dvv));
        prop_assert!(in_ball(&a, &truth, r) && in_ball(&b, &truth, r));
        let gap = a.distance(&b);
        prop_assert!(gap <= r * a.norm() * (1.0 + 1e-12));
        prop_assert!(gap <= r * b.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn ball_member_in_basis_implies_echo(
        u in vector(10), a in vector(10), b in vector(10), other in vector(10), r in 0.01..1.0f64,
    ) {
        let truth = dv(&u);
        prop_assume!(truth.norm() > 1e-3);
        let rad = r / (2.0 + r) * truth.norm();
        let member = |x: &[f64]| {
            let v = dv(x);
            let n = v.norm().max(1e-300);
            let mut out = truth.clone();
            out.axpy(0.99 * rad / n, &v);
            out
        };
        let stored = member(&a);
        let g = member(&b);
        let mut basis = GradientBasis::new(10);
        basis.insert(0, stored).unwrap();
        basis.insert(1, dv(&other)).unwrap();
        let proj = mp_project(&basis, &g).unwrap();
        prop_assert!(echo_check(&proj, &g, r));
    }
}

#[test]
fn insertion_order_does_not_change_the_span() {
    let cols = [vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 1.0]];
    let g = dv(&[3.0, -1.0, 2.0]);
    let fwd = build(3, &cols);
    let rev = build(3, &[cols[1].clone(), cols[0].clone()]);
    let a = mp_project(&fwd, &g).unwrap().echo_gradient;
    let b = mp_project(&rev, &g).unwrap().echo_gradient;
    assert!(a.distance(&b) < 1e-12);
}
