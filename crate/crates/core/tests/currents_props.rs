use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supercurrents::calculus::{QuadratureSpec, Region};
use supercurrents::currents::{bump, superhessian_product, tropical_ddsharp, Current, SmoothCurrent};
use supercurrents::exterior::beta;
use supercurrents::{MaxAffine, ScalarField, Superform};

/// `chi * sum c_ij dx_i ^ dxi_j` with a random bump and a random symmetric matrix.
fn random_test_form(rng: &mut ChaCha8Rng) -> (Superform<ScalarField>, Region) {
    let n = 2;
    let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let radius = rng.gen_range(0.6..0.9);
    let chi = bump(n, &center, radius).unwrap();
    let mut c = [[0.0; 2]; 2];
    for i in 0..n {
        for j in i..n {
            c[i][j] = rng.gen_range(-1.0..1.0);
            c[j][i] = c[i][j];
        }
    }
    let rows: Vec<Vec<ScalarField>> = (0..n).map(|i| (0..n).map(|j| chi.scaled(c[i][j])).collect()).collect();
    let form = Superform::from_coeff_matrix(&rows);
    let lo = center.iter().map(|v| v - radius).collect();
    let hi = center.iter().map(|v| v + radius).collect();
    (form, Region::Box { lo, hi })
}

fn cross_validate(f: &MaxAffine, seed: u64) {
    let trop = Current::Tropical(tropical_ddsharp(f).unwrap());
    let field = ScalarField::MaxAffine(f.clone());
    let one = SmoothCurrent::new(Superform::one(2));
    let eps = [0.125, 0.0625, 0.03125];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10 {
        let (psi, region) = random_test_form(&mut rng);
        let exact = trop.pair(&psi, &region, &QuadratureSpec::tensor(256)).unwrap();
        let moll = superhessian_product(&one, 2, std::slice::from_ref(&field), &psi, &region, &QuadratureSpec::tensor(400), &eps, None)
            .unwrap();
        let diff = (exact.value - moll.extrapolated.value).abs();
        assert!(diff <= 1e-3, "{f:?}: tropical {exact:?} mollified {moll:?}");
    }
}

#[test]
fn hinge_matches_mollified_oracle() {
    cross_validate(&MaxAffine::new(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0)]).unwrap(), 1);
}

#[test]
fn absolute_value_matches_mollified_oracle() {
    cross_validate(&MaxAffine::new(2, vec![(vec![-1.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0)]).unwrap(), 2);
}

#[test]
fn three_rays_match_mollified_oracle() {
    cross_validate(
        &MaxAffine::new(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)]).unwrap(),
        3,
    );
}

#[test]
fn hinge_superhessian_matches_tropical_pairing() {
    let n = 2;
    let f = MaxAffine::new(n, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0)]).unwrap();
    let chi = bump(n, &[0.1, 0.2], 0.8).unwrap();
    let region = Region::Box { lo: vec![-0.7, -0.6], hi: vec![0.9, 1.0] };
    let t = SmoothCurrent::new(beta(n));
    let rep = superhessian_product(
        &t,
        2,
        &[ScalarField::MaxAffine(f.clone())],
        &Superform::scalar(n, chi.clone()),
        &region,
        &QuadratureSpec::tensor(400),
        &[0.125, 0.0625, 0.03125],
        None,
    )
    .unwrap();
    let trop = Current::Tropical(tropical_ddsharp(&f).unwrap())
        .pair(&beta::<ScalarField>(n).scale(&chi), &region, &QuadratureSpec::tensor(256))
        .unwrap();
    assert!(rep.cauchy_ok, "{rep:?}");
    assert!((rep.extrapolated.value - trop.value).abs() <= 1e-3, "{rep:?} vs {trop:?}");
}

#[test]
fn quadratic_superhessian_matches_exact_algebra() {
    // T = 1, u = |x|^2 / 2 twice, m = n = 2: dd#u = beta, so the pairing is
    // int chi * density(beta^2) = 2 int chi.
    let n = 2;
    let u = ScalarField::norm_sq(n, &[0.0, 0.0]).scaled(0.5);
    let chi = bump(n, &[0.0, 0.0], 1.0).unwrap();
    let region = Region::Box { lo: vec![-1.0; 2], hi: vec![1.0; 2] };
    let q = QuadratureSpec::tensor(128);
    let rep = superhessian_product(&SmoothCurrent::new(Superform::one(n)), 2, &[u.clone(), u], &Superform::scalar(n, chi.clone()), &region, &q, &[0.1], None)
        .unwrap();
    let direct = supercurrents::calculus::integrate_fn(&region, &q, |x| Ok(2.0 * chi.eval(x)?)).unwrap();
    assert!((rep.extrapolated.value - direct.value).abs() <= 1e-12);
}

#[test]
fn pairing_is_linear_in_the_test_form() {
    let f = MaxAffine::new(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)]).unwrap();
    let t = Current::Tropical(tropical_ddsharp(&f).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (a, _) = random_test_form(&mut rng);
    let (b, _) = random_test_form(&mut rng);
    let region = Region::Box { lo: vec![-1.5; 2], hi: vec![1.5; 2] };
    let q = QuadratureSpec::tensor(128);
    let pa = t.pair(&a, &region, &q).unwrap().value;
    let pb = t.pair(&b, &region, &q).unwrap().value;
    let combo = a.scale_int(3).add(&b.scale_int(-2)).unwrap();
    let pc = t.pair(&combo, &region, &q).unwrap().value;
    assert!((pc - (3.0 * pa - 2.0 * pb)).abs() <= 1e-12);
}

#[test]
fn positive_current_against_positive_tests() {
    let f = MaxAffine::new(2, vec![(vec![0.0, 0.0], 0.0), (vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)]).unwrap();
    let t = Current::Tropical(tropical_ddsharp(&f).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let region = Region::Box { lo: vec![-1.5; 2], hi: vec![1.5; 2] };
    for _ in 0..10 {
        let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let chi = bump(2, &[rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)], 0.7).unwrap();
        let rows: Vec<Vec<ScalarField>> = (0..2).map(|i| (0..2).map(|j| chi.scaled(v[i] * v[j])).collect()).collect();
        let e = t.pair(&Superform::from_coeff_matrix(&rows), &region, &QuadratureSpec::tensor(64)).unwrap();
        assert!(e.value >= -e.stderr, "{e:?}");
    }
}
