use loclab::measure::{isotropize, Body, Component1D, Density1D, Measure, MeasureSpec, TILT_PANELS};
use loclab::tilted::{tilt, TestFn, TiltOptions};
use proptest::prelude::*;

fn density(c: Component1D) -> Density1D {
    Density1D::new(c).unwrap()
}

fn log_concave_zoo() -> Vec<Density1D> {
    vec![
        density(Component1D::gaussian()),
        density(Component1D::shifted_exponential()),
        density(Component1D::isotropic_uniform()),
        density(Component1D::smooth_laplace(0.5)),
        density(Component1D::quartic(1.0, 0.25)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Standard Gaussian tilt: mean theta/(1+t), variance 1/(1+t),
    // log Z = theta^2/(2(1+t)) - log(1+t)/2.
    #[test]
    fn gaussian_tilt_quadrature_matches_closed_form(t in 0.0f64..20.0, theta in -6.0f64..6.0) {
        let m = density(Component1D::gaussian()).tilt_moments(t, theta, TILT_PANELS, true);
        let p = 1.0 + t;
        prop_assert!((m.mean - theta / p).abs() < 1e-9);
        prop_assert!((m.var - 1.0 / p).abs() < 1e-9);
        prop_assert!((m.log_z - (theta * theta / (2.0 * p) - 0.5 * p.ln())).abs() < 1e-9);
        prop_assert!(m.m3.abs() < 1e-9);
        prop_assert!((m.m4 - 3.0 / (p * p)).abs() < 1e-8);
    }

    // x = E - 1 with E ~ Exp(1): mean 1/(1-theta) - 1, variance 1/(1-theta)^2.
    #[test]
    fn exponential_untilted_moments_match_closed_form(theta in -3.0f64..0.5) {
        let m = density(Component1D::shifted_exponential()).tilt_moments(0.0, theta, TILT_PANELS, false);
        let r = 1.0 - theta;
        prop_assert!((m.mean - (1.0 / r - 1.0)).abs() < 1e-8, "mean {}", m.mean);
        prop_assert!((m.var - 1.0 / (r * r)).abs() < 1e-8, "var {}", m.var);
        prop_assert!((m.log_z - (-theta - r.ln())).abs() < 1e-8, "log_z {}", m.log_z);
        prop_assert!((m.m3 - 2.0 / r.powi(3)).abs() < 1e-7);
    }

    // A log-concave tilt with strength t has covariance at most 1/t.
    #[test]
    fn tilt_covariance_is_at_most_inverse_strength(t in 0.05f64..50.0, theta in -8.0f64..8.0) {
        for d in log_concave_zoo() {
            let m = d.tilt_moments(t, theta, TILT_PANELS, true);
            prop_assert!(m.var * t <= 1.0 + 1e-9, "{:?}: var {} t {}", d.component().kind, m.var, t);
            prop_assert!(m.var > 0.0);
        }
    }

    // log Z is convex in theta with second derivative equal to the variance.
    #[test]
    fn log_partition_is_convex_in_theta(t in 0.1f64..10.0, theta in -4.0f64..4.0) {
        let h = 1e-3;
        for d in log_concave_zoo() {
            let z = |th: f64| d.tilt_moments(t, th, TILT_PANELS, true).log_z;
            let second = (z(theta + h) - 2.0 * z(theta) + z(theta - h)) / (h * h);
            let var = d.tilt_moments(t, theta, TILT_PANELS, true).var;
            prop_assert!(second >= -1e-6);
            prop_assert!((second - var).abs() < 1e-3 * var.max(1.0), "second {} var {}", second, var);
        }
    }

    #[test]
    fn sampling_is_a_function_of_seed_and_stream(seed in any::<u64>(), stream in 0u64..1000) {
        let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 3)).unwrap();
        let a = m.sample(64, seed, stream).unwrap();
        let b = m.sample(64, seed, stream).unwrap();
        prop_assert_eq!(&a.points, &b.points);
        let c = m.sample(64, seed, stream + 1).unwrap();
        prop_assert_ne!(&a.points, &c.points);
    }

    // Product tilts factor: the covariance is diagonal with the 1-D variances.
    #[test]
    fn product_tilt_statistics_factor(t in 0.0f64..5.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let comps = [Component1D::shifted_exponential(), Component1D::isotropic_uniform()];
        let m = Measure::new(&MeasureSpec::product(comps.to_vec())).unwrap();
        let stats = tilt(&m, t, vec![a, b]).unwrap().stats(&TiltOptions::default()).unwrap();
        prop_assert!(stats.is_exact());
        for (i, (c, th)) in comps.iter().zip([a, b]).enumerate() {
            let one = density(c.clone()).tilt_moments(t, th, TILT_PANELS, false);
            prop_assert!((stats.a[i] - one.mean).abs() < 1e-12);
            prop_assert!((stats.cov[(i, i)] - one.var).abs() < 1e-12);
        }
        prop_assert!(stats.cov[(0, 1)].abs() < 1e-15);
    }
}

#[test]
fn isotropization_is_idempotent() {
    for body in [Body::Simplex, Body::Cube, Body::CrossPolytope] {
        for n in [2, 3] {
            let once = isotropize(&MeasureSpec::uniform_body(body, 1.0, n)).unwrap();
            let twice = isotropize(&once).unwrap();
            assert_eq!(once.digest(), twice.digest(), "{body:?} n = {n}");
            Measure::new(&once).unwrap().require_isotropic().unwrap();
        }
    }
}

#[test]
fn unfactorized_monte_carlo_agrees_with_product_quadrature() {
    let spec = MeasureSpec::iid(Component1D::shifted_exponential(), 2);
    let exact = Measure::new(&spec).unwrap();
    let mc = Measure::with_factorization(&spec, false).unwrap();
    let theta = vec![0.4, -0.7];
    let opts = TiltOptions::default();
    let e = tilt(&exact, 1.0, theta.clone()).unwrap();
    let f = tilt(&mc, 1.0, theta).unwrap();
    for phi in [TestFn::Coordinate(0), TestFn::Coordinate(1), TestFn::hermite2(0), TestFn::SquaredNorm] {
        let want = e.expect(&phi, &opts).unwrap();
        let got = f.expect(&phi, &opts).unwrap();
        assert_eq!(want.se, 0.0);
        assert!(got.se > 0.0);
        let z = (got.value - want.value) / got.se;
        assert!(z.abs() < 4.5, "{phi:?}: {} vs {} (z = {z})", got.value, want.value);
    }
}
