use nalgebra::{DMatrix, DVector};
use pzflow::linalg::{reverse_cuthill_mckee, BandedLu, LinalgError, Triplets};
use proptest::prelude::*;

/// Random sparse system with a dominant diagonal and a few far off-diagonal entries.
fn system(n: usize, entries: &[(usize, usize, f64)]) -> (Triplets<f64>, DMatrix<f64>) {
    let mut t = Triplets::new(n);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        t.add(i, i, 4.0 + i as f64 * 0.01);
        d[(i, i)] += 4.0 + i as f64 * 0.01;
    }
    for &(i, j, v) in entries {
        let (i, j) = (i % n, j % n);
        t.add(i, j, v);
        d[(i, j)] += v;
    }
    (t, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn banded_lu_matches_dense_solve(
        n in 2usize..40,
        entries in prop::collection::vec((0usize..40, 0usize..40, -1.0f64..1.0), 0..120),
        rhs in prop::collection::vec(-10.0f64..10.0, 40),
    ) {
        let (t, d) = system(n, &entries);
        let a = t.to_csr();
        let b = &rhs[..n];
        let Some(dense) = d.clone().lu().solve(&DVector::from_column_slice(b)) else {
            return Ok(());
        };
        let lu = BandedLu::factor(&a).unwrap();
        let x = lu.solve_refined(&a, b, 2);
        let scale = dense.amax().max(1.0);
        for i in 0..n {
            prop_assert!((x[i] - dense[i]).abs() <= 1e-10 * scale, "{} vs {}", x[i], dense[i]);
        }
    }

    #[test]
    fn ordering_is_a_permutation(n in 1usize..60, entries in prop::collection::vec((0usize..60, 0usize..60, -1.0f64..1.0), 0..200)) {
        let (t, _) = system(n, &entries);
        let mut perm = reverse_cuthill_mckee(&t.to_csr());
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn duplicates_are_summed() {
    let mut t = Triplets::<f64>::new(2);
    t.add(0, 1, 1.5);
    t.add(0, 1, 2.0);
    t.add(1, 1, 1.0);
    let a = t.to_csr();
    assert_eq!(a.get(0, 1), 3.5);
    assert_eq!(a.matvec(&[1.0, 2.0]), vec![7.0, 2.0]);
}

#[test]
fn singular_matrix_is_reported() {
    let mut t = Triplets::<f64>::new(3);
    t.add(0, 0, 1.0);
    t.add(1, 1, 1.0);
    assert!(matches!(BandedLu::factor(&t.to_csr()), Err(LinalgError::Singular { .. })));
}

#[test]
fn pivoting_handles_zero_diagonal() {
    let mut t = Triplets::<f64>::new(2);
    t.add(0, 1, 2.0);
    t.add(1, 0, 3.0);
    let a = t.to_csr();
    let x = BandedLu::factor(&a).unwrap().solve(&[4.0, 9.0]);
    assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
}
