use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use supercurrents::positivity::{
    check_eq1, hessian_fk_poly, is_m_convex_tol, matrix_is_m_positive, sample_points, CoefficientMatrix, Status,
};
use supercurrents::{MollifierKernel, Poly, ScalarField};

#[test]
fn hessian_identity_holds_for_random_cubics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let u = Poly::random(3, 3, 6, &mut rng);
        for k in 1..=3 {
            assert!(check_eq1(&u, k).unwrap(), "fails for {u} at k={k}");
        }
        let lap = (0..3).fold(Poly::zero(3), |acc, i| acc.add(&u.partial(i).partial(i)));
        assert_eq!(hessian_fk_poly(&u, 1).unwrap(), lap);
    }
}

fn sym_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
        (0..n).map(|i| (0..n).map(|j| if i <= j { v[i * n + j] } else { v[j * n + i] }).collect()).collect()
    })
}

proptest! {
    #[test]
    fn m_positivity_is_monotone_in_m(a in (1usize..=4).prop_flat_map(sym_matrix)) {
        let cm = CoefficientMatrix::new(a.clone()).unwrap();
        let n = a.len();
        for m in 2..=n {
            if matrix_is_m_positive(&cm, m).unwrap() == Status::CertifiedTrue {
                prop_assert_eq!(matrix_is_m_positive(&cm, m - 1).unwrap(), Status::CertifiedTrue);
            }
        }
    }

    #[test]
    fn psd_iff_positive_for_every_m(a in (1usize..=4).prop_flat_map(sym_matrix)) {
        let n = a.len();
        let ev = supercurrents::quadrature::symmetric_eigenvalues(&a);
        let cm = CoefficientMatrix::new(a).unwrap();
        let all = (1..=n).all(|m| matrix_is_m_positive(&cm, m).unwrap() == Status::CertifiedTrue);
        // Strictly separated cases only; boundary matrices sit inside the tolerance.
        if ev[0] > 1e-6 {
            prop_assert!(all);
        }
        if ev[0] < -1e-6 {
            prop_assert!(!all);
        }
    }
}

#[test]
fn max_of_convex_functions_survives_mollification() {
    let n = 3;
    let u = ScalarField::max_affine(n, vec![(vec![1.0, 0.0, 0.0], 0.0), (vec![-1.0, 0.5, 0.0], 0.2)]).unwrap();
    let v = ScalarField::max_affine(n, vec![(vec![0.0, 1.0, 1.0], -0.1), (vec![0.0, -1.0, 0.0], 0.0)]).unwrap();
    let both = ScalarField::max_affine(
        n,
        vec![
            (vec![1.0, 0.0, 0.0], 0.0),
            (vec![-1.0, 0.5, 0.0], 0.2),
            (vec![0.0, 1.0, 1.0], -0.1),
            (vec![0.0, -1.0, 0.0], 0.0),
        ],
    )
    .unwrap();
    let pts = sample_points(&[-0.5; 3], &[0.5; 3], 15, 3, None);
    for f in [&u, &v, &both] {
        let eps = 0.1;
        let g = f.mollify_with(eps, MollifierKernel { panels: 12, order: 4, angular: 16 }).unwrap();
        for m in 1..=n {
            let verdict = is_m_convex_tol(&g, &pts, m, 0.1 * eps, 1e-6).unwrap();
            assert!(!verdict.is_false(), "{verdict:?}");
        }
    }
}
