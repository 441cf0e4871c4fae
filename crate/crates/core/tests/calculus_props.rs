use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supercurrents::calculus::{alpha_form, d, ddsharp, dsharp, eval_form, integrate_fn, QuadratureSpec, Region};
use supercurrents::exterior::MultiIndex;
use supercurrents::{BasisElement, Poly, ScalarField, Superform};

fn random_subset<R: Rng>(n: usize, k: usize, rng: &mut R) -> MultiIndex {
    let mut idx: Vec<usize> = (1..=n).collect();
    for i in 0..n {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut pick = idx[..k].to_vec();
    pick.sort_unstable();
    MultiIndex::new(&pick).unwrap()
}

fn random_form(n: usize, p: usize, q: usize, seed: u64) -> Superform<Poly> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Superform::zero(n, p, q);
    for _ in 0..3 {
        let b = BasisElement::new(random_subset(n, p, &mut rng), random_subset(n, q, &mut rng));
        f.add_term(b, Poly::random(n, 3, 4, &mut rng));
    }
    f
}

fn bidegree_strategy() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=4).prop_flat_map(|n| (Just(n), 0..=n, 0..=n, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_squared_vanishes((n, p, q, seed) in bidegree_strategy()) {
        let a = random_form(n, p, q, seed);
        prop_assert!(d(&d(&a).unwrap()).unwrap().is_zero());
        prop_assert!(dsharp(&dsharp(&a).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn d_and_dsharp_anticommute((n, p, q, seed) in bidegree_strategy()) {
        let a = random_form(n, p, q, seed);
        let lhs = ddsharp(&a).unwrap();
        let rhs = dsharp(&d(&a).unwrap()).unwrap().neg();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn d_is_a_derivation((n, p, q, seed) in bidegree_strategy(), r in 0usize..=2, s in 0usize..=2) {
        let a = random_form(n, p, q, seed);
        let b = random_form(n, r.min(n), s.min(n), seed ^ 0x9e37);
        let sign = if (p + q) % 2 == 0 { 1 } else { -1 };
        let lhs = d(&a.wedge(&b).unwrap()).unwrap();
        let rhs = d(&a).unwrap().wedge(&b).unwrap().add(&a.wedge(&d(&b).unwrap()).unwrap().scale_int(sign)).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn dpsi_dsharp_gamma_antisymmetry(n in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = Superform::scalar(n, Poly::random(n, 3, 4, &mut rng));
        let raw = random_form(n, n - 1, n - 1, seed ^ 0x51);
        // Symmetrize with J so that gamma is symmetric.
        let gamma = raw.add(&raw.apply_j()).unwrap();
        prop_assert!(gamma.is_symmetric().unwrap());
        let lhs = d(&psi).unwrap().wedge(&dsharp(&gamma).unwrap()).unwrap();
        let rhs = dsharp(&psi).unwrap().wedge(&d(&gamma).unwrap()).unwrap().neg();
        prop_assert_eq!(lhs, rhs);
    }
}

fn direct_alpha(phi: &ScalarField) -> Superform<ScalarField> {
    ddsharp(&Superform::scalar(phi.n(), phi.clone().sqrt())).unwrap()
}

#[test]
fn alpha_expansion_matches_direct_second_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=3 {
        let q = Poly::random(n, 2, 3, &mut rng);
        let weights = [
            ScalarField::norm_sq(n, &vec![0.0; n]),
            ScalarField::sum(n, vec![ScalarField::norm_sq(n, &vec![0.0; n]), ScalarField::constant(n, 1.0)]),
            ScalarField::poly(q.mul(&q).add(&Poly::int(n, 1))),
        ];
        for phi in &weights {
            let a = alpha_form(phi).unwrap();
            let b = direct_alpha(phi);
            for _ in 0..100 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let ea = eval_form(&a, &x).unwrap();
                let eb = eval_form(&b, &x).unwrap();
                let scale = eb.max_abs().max(ea.max_abs()).max(1e-300);
                let diff = ea.sub(&eb).unwrap().max_abs();
                assert!(diff <= 1e-9 * scale || diff <= 1e-12, "n={n} x={x:?} diff={diff} scale={scale}");
            }
        }
    }
}

#[test]
fn alpha_top_power_vanishes_for_euclidean_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=4 {
        let a = alpha_form(&ScalarField::norm_sq(n, &vec![0.0; n])).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let an = eval_form(&a, &x).unwrap().pow(n).unwrap();
            let scale = eval_form(&a, &x).unwrap().max_abs().powi(n as i32);
            assert!(an.max_abs() <= 1e-12 * scale.max(1.0));
        }
    }
}

#[test]
fn phi_m_superhessian_closed_form() {
    // dd# phi_m = |x|^{-n/m} (beta - (n/m) |x|^{-2} gamma ^ gamma#)
    let (n, m) = (3usize, 2usize);
    let phi = ScalarField::phi_m(n, m).unwrap();
    let h = ddsharp(&Superform::scalar(n, phi)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let got = eval_form(&h, &x).unwrap().matrix_11().unwrap();
        let c = r2.powf(-(n as f64) / (2.0 * m as f64));
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { 1.0 } else { 0.0 };
                let expect = c * (delta - (n as f64 / m as f64) * x[i] * x[j] / r2);
                assert!((got[i][j] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
            }
        }
    }
}

#[test]
fn top_power_of_phi_m_superhessian_integrates_to_zero() {
    // (dd# phi_m)^m ^ beta^{n-m}, n = 3, m = 2, over the unit ball.
    let (n, m) = (3usize, 2usize);
    let h = ddsharp(&Superform::scalar(n, ScalarField::phi_m(n, m).unwrap())).unwrap();
    let beta = supercurrents::beta::<f64>(n);
    let ball = Region::ball(vec![0.0; n], 1.0).unwrap();
    let v = integrate_fn(&ball, &QuadratureSpec::polar(8, 8), |x| {
        eval_form(&h, x)?.pow(m)?.wedge(&beta)?.top_density()
    })
    .unwrap();
    assert!(v.value.abs() <= 1e-9, "{v:?}");
}

#[test]
fn integration_is_linear_and_additive() {
    let n = 2;
    let f = ScalarField::parse_poly(n, "x1^2 - 3*x1*x2 + 1").unwrap();
    let g = ScalarField::parse_poly(n, "x2^3 + x1").unwrap();
    let q = QuadratureSpec::tensor(16);
    let whole = Region::Box { lo: vec![0.0, 0.0], hi: vec![2.0, 1.0] };
    let left = Region::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
    let right = Region::Box { lo: vec![1.0, 0.0], hi: vec![2.0, 1.0] };
    let i = |r: &Region, h: &(dyn Fn(&[f64]) -> f64 + Sync)| integrate_fn(r, &q, |x| Ok(h(x))).unwrap().value;
    let fe = |x: &[f64]| f.eval(x).unwrap();
    let ge = |x: &[f64]| g.eval(x).unwrap();
    let lin = i(&whole, &|x| 2.0 * fe(x) - 5.0 * ge(x));
    assert!((lin - (2.0 * i(&whole, &fe) - 5.0 * i(&whole, &ge))).abs() < 1e-10);
    assert!((i(&whole, &fe) - i(&left, &fe) - i(&right, &fe)).abs() < 1e-10);
}
