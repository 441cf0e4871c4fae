use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use supercurrents::calculus::{ddsharp, QuadratureSpec};
use supercurrents::currents::{Current, SmoothCurrent};
use supercurrents::exterior::{beta, beta_power};
use supercurrents::lelong::{
    concave_lower_bound, default_grid, jensen_terms, lelong_at, lelong_number, m_lelong_number, t5_integrability_diagnostic,
    Declared, LelongOptions, Weight,
};
use supercurrents::quadrature::{factorial, unit_ball_volume};
use supercurrents::{Poly, ScalarField, Superform};

fn poly(n: usize, s: &str) -> ScalarField {
    ScalarField::parse_poly(n, s).unwrap()
}

/// `g = |Mx + b|^2 + c` with random `M`, `b` and `c >= 0`.
fn random_nonnegative_quadratic(n: usize, rng: &mut ChaCha8Rng) -> ScalarField {
    let mut terms = vec![format!("{}", rng.gen_range(0.1..1.0))];
    for _ in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{}*x{}", rng.gen_range(-1.0..1.0), j + 1)).collect();
        terms.push(format!("({} + {})^2", row.join(" + "), rng.gen_range(-0.5..0.5)));
    }
    poly(n, &terms.join(" + "))
}

#[test]
fn jensen_residual_at_a_million_samples() {
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_nonnegative_quadratic(n, &mut rng);
    let t = SmoothCurrent::new(beta(n).scale(&g));
    let w = Weight::euclidean(&[0.0; 3]).unwrap();
    let start = Instant::now();
    let j = jensen_terms(&t, &w, 0.25, 1.0, &QuadratureSpec::monte_carlo(1_000_000, 5)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(!j.closed);
    assert!(j.relative_residual <= 5e-3, "{j:?}");
    assert!(elapsed <= 60.0, "{elapsed} s");
}

#[test]
fn lagerberg_formula_in_the_closed_case() {
    let n = 3;
    let t = SmoothCurrent::new(beta(n).scale(&ScalarField::constant(n, 1.5)));
    let w = Weight::euclidean(&[0.0; 3]).unwrap();
    let j = jensen_terms(&t, &w, 0.25, 1.0, &QuadratureSpec::monte_carlo(200_000, 5)).unwrap();
    assert!(j.closed);
    assert_eq!((j.dd_inner.value, j.dd_outer.value), (0.0, 0.0));
    let lhs = j.outer_mass.value - j.inner_mass.value;
    assert!((lhs - j.shell.value).abs() <= 4.0 * (j.outer_mass.stderr + j.inner_mass.stderr + j.shell.stderr), "{j:?}");
}

#[test]
fn convex_multiple_of_a_closed_current() {
    let n = 2;
    let a = [0.3, -0.2];
    let f = poly(n, "1 + x1^2 + x2^2 + x1*x2");
    let fa = f.eval(&a).unwrap();
    let t = Current::Smooth(SmoothCurrent::new(Superform::scalar(n, f)));
    let w = Weight::euclidean(&a).unwrap();
    let grid: Vec<f64> = default_grid(0.25, 8).iter().map(|r| r * r).collect();
    let rep = lelong_number(&t, &w, &grid, &QuadratureSpec::polar(8, 16), &LelongOptions::declared(Declared::Convex)).unwrap();
    let nu0 = factorial(n) * unit_ball_volume(n);
    assert!(rep.monotone_ok);
    assert!((rep.limit_estimate - fa * nu0).abs() <= 0.02 * fa * nu0, "{rep:?}");
    let (lo, hi) = rep.limit_bracket.unwrap();
    assert!(lo <= fa * nu0 && fa * nu0 <= hi);
}

#[test]
fn m_lelong_counterexample_blows_up() {
    for (n, m) in [(3, 1), (5, 2)] {
        let phi = ScalarField::phi_m(n, m).unwrap();
        let dd = ddsharp(&Superform::scalar(n, phi.clone())).unwrap();
        let form = dd.pow(m - 1).unwrap().scale(&phi.scaled(-1.0));
        let t = Current::Smooth(SmoothCurrent::new(form));
        let p = t.bidimension().unwrap();
        assert_eq!(p, n - m + 1);
        let rep = m_lelong_number(&t, &[0.0; 5][..n], m, &default_grid(0.5, 8), &QuadratureSpec::polar(8, 8), &LelongOptions::default())
            .unwrap();
        let expect = 2.0 - n as f64 / m as f64;
        let k = rep.fitted_exponent.unwrap();
        assert!((k - expect).abs() <= 0.05, "n={n} m={m}: exponent {k} vs {expect}");
        assert_eq!(rep.limit_exists, Some(false));
    }
}

#[test]
fn m_lelong_number_of_closed_current_vanishes_below_n() {
    let (n, p, j) = (3, 2, 2);
    let t = Current::Smooth(SmoothCurrent::new(beta_power::<ScalarField>(n, n - p)));
    let rep = m_lelong_number(&t, &[0.0; 3], j, &default_grid(1.0, 8), &QuadratureSpec::polar(8, 8), &LelongOptions::default()).unwrap();
    let vals: Vec<f64> = rep.nu.iter().map(|v| v.value).collect();
    assert!(vals.windows(2).all(|v| v[1] < v[0]) && vals[7] < 0.02 * vals[0], "{vals:?}");
    assert!(m_lelong_number(&t, &[0.0; 3], 1, &default_grid(1.0, 4), &QuadratureSpec::polar(8, 8), &LelongOptions::default()).is_err());
}

#[test]
fn t5_flags_the_counterexample_as_divergent() {
    let (n, m) = (3, 1);
    let phi = ScalarField::phi_m(n, m).unwrap();
    let t = SmoothCurrent::new(Superform::scalar(n, phi.scaled(-1.0)));
    let w = Weight::euclidean(&[0.0; 3]).unwrap();
    let rep = t5_integrability_diagnostic(&t, &w, &default_grid(0.25, 6), &QuadratureSpec::polar(8, 8)).unwrap();
    assert!(!rep.integrable, "{rep:?}");
    assert!(rep.lambda.is_none());
    assert!((rep.integrand_exponent.unwrap() + 1.5).abs() < 0.05);
}

#[test]
fn concave_lower_bound_examples() {
    let n = 3;
    let a = [0.0; 3];
    let q = QuadratureSpec::polar(8, 12);
    let grid = default_grid(0.5, 6);
    let closed = SmoothCurrent::new(beta(n).scale(&ScalarField::constant(n, -1.0)));
    let rep = concave_lower_bound(&closed, &a, 0.5, &grid, &q, &LelongOptions::default()).unwrap();
    assert_eq!(rep.nu_dd_r0.value, 0.0);
    assert!(rep.holds, "{rep:?}");
    assert!(rep.margins[0] >= -1e-12);
    let convex = SmoothCurrent::new(beta(n).scale(&poly(n, "x1^2 + x2^2 + x3^2 - 2")));
    let rep = concave_lower_bound(&convex, &a, 0.5, &grid, &q, &LelongOptions::default()).unwrap();
    assert!(rep.nu_dd_r0.value > 0.0);
    assert!(rep.holds, "{rep:?}");
    assert!(rep.margins[0] >= -1e-12);
    assert!(concave_lower_bound(&convex, &a, 0.25, &grid, &q, &LelongOptions::default()).is_err());
    let positive = SmoothCurrent::new(beta(n));
    assert!(concave_lower_bound(&positive, &a, 0.5, &grid, &q, &LelongOptions::default()).is_err());
}

fn psd_form(n: usize, p: usize, seed: u64) -> Superform<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Superform::<ScalarField>::zero(n, n - p, n - p);
    for _ in 0..3 {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rows: Vec<Vec<ScalarField>> =
            (0..n).map(|i| (0..n).map(|j| ScalarField::constant(n, v[i] * v[j])).collect()).collect();
        let mut term = Superform::from_coeff_matrix(&rows);
        for _ in 1..(n - p) {
            term = term.wedge(&beta(n)).unwrap();
        }
        acc = acc.add(&term).unwrap();
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn classical_lelong_numbers_are_monotone_and_match_weighted_form(seed in 0u64..1000, shift in -0.3f64..0.3) {
        let n = 3;
        let form = psd_form(n, 2, seed).scale(&Poly::parse(n, "1 + x1^2 + x2^2").map(ScalarField::poly).unwrap());
        let t = Current::Smooth(SmoothCurrent::new(form));
        let a = [shift, 0.1, -shift];
        let grid = default_grid(0.6, 8);
        let q = QuadratureSpec::polar(8, 12);
        let classical = lelong_at(&t, &a, &grid, &q).unwrap();
        prop_assert!(classical.monotone_ok);
        let sq: Vec<f64> = grid.iter().map(|r| r * r).collect();
        let weighted = lelong_number(&t, &Weight::euclidean(&a).unwrap(), &sq, &q, &LelongOptions::default()).unwrap();
        for (u, v) in weighted.nu.iter().zip(&classical.nu) {
            prop_assert!((u.value - v.value).abs() <= 1e-9 * v.value.abs());
        }
    }

    #[test]
    fn jensen_identity_on_smooth_polynomial_currents(seed in 0u64..1000, r1 in 0.1f64..0.5) {
        let n = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_nonnegative_quadratic(n, &mut rng);
        let t = SmoothCurrent::new(beta(n).scale(&g));
        let w = Weight::euclidean(&[0.0; 2]).unwrap();
        let j = jensen_terms(&t, &w, r1, 1.0, &QuadratureSpec::polar(12, 16)).unwrap();
        prop_assert!(j.relative_residual <= 1e-9, "{:?}", j);
    }
}
