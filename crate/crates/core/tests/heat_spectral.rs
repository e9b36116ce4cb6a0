use std::f64::consts::FRAC_1_SQRT_2;

use loclab::checks::{brenier_derivative, brenier_map};
use loclab::heat::{q_norm_sq, q_norm_sq_coordinate, Phi};
use loclab::linalg::{sym_eigen, Matrix};
use loclab::measure::{Component1D, Density1D, Measure, MeasureSpec};
use loclab::spectral::checks::{
    centered_gradient_poincare, spectral_mass_bound_check, transfer_instance,
};
use loclab::spectral::{build_model, SpectralModel};
use loclab::stats::Budget;
use loclab::tilted::{TestFn, TiltOptions};
use proptest::prelude::*;

fn gaussian_model() -> SpectralModel {
    build_model(&Component1D::gaussian(), 2048).unwrap()
}

fn poly(model: &SpectralModel, c: &[f64]) -> Vec<f64> {
    model.tabulate(|x| c.iter().rev().fold(0.0, |acc, v| acc * x + v))
}

#[test]
fn gaussian_generator_has_integer_spectrum() {
    let m = gaussian_model();
    assert_eq!(m.eigenvalue(0), 0.0);
    for k in 1..=4 {
        let l = m.eigenvalue(k);
        assert!((l - k as f64).abs() < 2e-3 * k as f64, "lambda_{k} = {l}");
    }
}

#[test]
fn hermite_functions_have_point_spectral_measures() {
    let m = gaussian_model();
    for (coeffs, lambda) in [(vec![0.0, 1.0], 1.0), (vec![-1.0, 0.0, 1.0], 2.0)] {
        let f = m.normalize(&poly(&m, &coeffs));
        let nu = m.spectral_measure(&f).unwrap();
        let near: f64 = nu.atoms.iter().filter(|a| (a.0 - lambda).abs() < 0.05).map(|a| a.1).sum();
        assert!(near > 1.0 - 1e-6, "mass near {lambda}: {near}");
    }
}

#[test]
fn gaussian_spectral_mass_bound_at_unit_scale() {
    // f = x: nu_f([0, 1]) = 1, ||Q_1 f||^2 = 1/2, so the bound is 4 (1/sqrt 2 + 1).
    let m = gaussian_model();
    let r = spectral_mass_bound_check(&m, &m.tabulate(|x| x), 1.0, 1.0).unwrap();
    assert!((r.statistic - 1.0).abs() < 1e-6, "{}", r.statistic);
    assert!((r.bound - 4.0 * (FRAC_1_SQRT_2 + 1.0)).abs() < 1e-3, "{}", r.bound);
    assert!(r.passed());
}

#[test]
fn gaussian_coordinate_heat_norm_is_one_over_one_plus_s() {
    let g = Measure::new(&MeasureSpec::standard_gaussian(2)).unwrap();
    for s in [0.1, 0.5, 1.0, 3.0] {
        let (v, gap) = q_norm_sq_coordinate(&g, s, &TestFn::Coordinate(1)).unwrap().unwrap();
        assert!((v - 1.0 / (1.0 + s)).abs() < 1e-4 + gap, "s = {s}: {v}");
        assert!(v >= (-s).exp());
    }
}

#[test]
fn heat_norm_monte_carlo_agrees_with_coordinate_quadrature() {
    let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 2)).unwrap();
    let phi = TestFn::hermite2(1);
    let (exact, gap) = q_norm_sq_coordinate(&m, 1.0, &phi).unwrap().unwrap();
    let mc = q_norm_sq(&m, 1.0, &Phi::Scalar(phi), &Budget::new(4000, 17), &TiltOptions::default()).unwrap();
    assert!(mc.se > 0.0);
    assert!((mc.value - exact).abs() < 4.5 * mc.se + gap, "{} vs {exact} (se {})", mc.value, mc.se);
}

#[test]
fn exponential_heat_norm_decreases_in_time() {
    let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 1)).unwrap();
    let vals: Vec<f64> = [0.05, 0.2, 0.8, 3.2]
        .iter()
        .map(|&s| q_norm_sq_coordinate(&m, s, &TestFn::Coordinate(0)).unwrap().unwrap().0)
        .collect();
    assert!(vals[0] <= 1.0 + 1e-6);
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}

#[test]
fn centered_gradient_constant_is_one_half_for_the_gaussian() {
    let r = centered_gradient_poincare(&gaussian_model()).unwrap();
    assert!((r.best_constant - 0.5).abs() < 1e-3, "{}", r.best_constant);
}

#[test]
fn brenier_map_onto_a_narrow_gaussian_is_linear() {
    let d = Density1D::new(Component1D::gaussian().scaled(FRAC_1_SQRT_2, 0.0)).unwrap();
    for x in [-3.0, -1.0, -0.2, 0.0, 0.7, 2.5] {
        assert!((brenier_map(&d, x) - FRAC_1_SQRT_2 * x).abs() < 1e-8, "T({x})");
        assert!((brenier_derivative(&d, x) - FRAC_1_SQRT_2).abs() < 1e-8, "T'({x})");
    }
}

#[test]
fn two_dimensional_transfer_instances() {
    let values = [1.0, 0.0];
    let vectors = Matrix::identity(2, 2);
    let a: f64 = 0.6;
    let f = [a.cos(), a.sin()];
    // g is the top eigendirection: beta = cos^2 a, epsilon = 0.
    let top = transfer_instance(&values, &vectors, &f, &[true, false]).unwrap();
    assert!((top.beta - a.cos().powi(2)).abs() < 1e-15);
    assert_eq!(top.epsilon, 0.0);
    assert!((top.af_f - a.cos().powi(2)).abs() < 1e-15);
    // g in the kernel: epsilon = 1.
    let bottom = transfer_instance(&values, &vectors, &f, &[false, true]).unwrap();
    assert!((bottom.epsilon - 1.0).abs() < 1e-15);
    assert!(bottom.margin() > 0.0);
    assert!(transfer_instance(&values, &vectors, &[0.0, 1.0], &[true, false]).is_none());
}

fn model_zoo() -> Vec<SpectralModel> {
    [Component1D::gaussian(), Component1D::shifted_exponential(), Component1D::isotropic_uniform()]
        .iter()
        .map(|c| build_model(c, 512).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generator_is_self_adjoint_and_dissipative(
        u in prop::collection::vec(-1.0f64..1.0, 4),
        v in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        for m in model_zoo() {
            let (fu, fv) = (poly(&m, &u), poly(&m, &v));
            let (lu, lv) = (m.apply(&fu), m.apply(&fv));
            let scale = m.norm_sq(&fu).sqrt() * m.norm_sq(&lv).sqrt() + m.norm_sq(&fv).sqrt() * m.norm_sq(&lu).sqrt();
            prop_assert!((m.inner(&fu, &lv) - m.inner(&lu, &fv)).abs() <= 1e-10 * scale.max(1.0));
            prop_assert!(m.dirichlet(&fu, &fu) >= -1e-12);
        }
    }

    #[test]
    fn spectral_measures_satisfy_parseval(c in prop::collection::vec(-1.0f64..1.0, 5)) {
        for m in model_zoo() {
            let f = poly(&m, &c);
            let nu = m.spectral_measure(&f).unwrap();
            let mass: f64 = nu.atoms.iter().map(|a| a.1).sum();
            let norm = m.norm_sq(&f);
            prop_assert!((mass - norm).abs() <= 1e-9 * norm.max(1.0));
            prop_assert!(nu.parseval_defect <= 1e-9 * norm.max(1.0));
            prop_assert!(nu.atoms.iter().all(|a| a.1 >= 0.0 && a.0 >= 0.0));
        }
    }

    // For A PSD with ||A|| <= 1, g an upper spectral projection of a unit f:
    // <Af, f> >= beta/4 - epsilon.
    #[test]
    fn projection_transfer_holds_for_spectral_windows(
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        f in prop::collection::vec(-1.0f64..1.0, 4),
        cut in 0.0f64..1.0,
    ) {
        let b = Matrix::from_fn(4, 4, |i, j| entries[4 * i + j]);
        let (mut values, vectors) = sym_eigen(&(&b * b.transpose()));
        let top = values.iter().copied().fold(0.0, f64::max);
        prop_assume!(top > 1e-9);
        values.iter_mut().for_each(|v| *v = v.max(0.0) / top);
        let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(nf > 1e-6);
        let f: Vec<f64> = f.iter().map(|v| v / nf).collect();
        let keep: Vec<bool> = values.iter().map(|v| *v >= cut).collect();
        if let Some(inst) = transfer_instance(&values, &vectors, &f, &keep) {
            prop_assert!(inst.margin() >= -1e-12, "{:?}", inst);
        }
    }
}
