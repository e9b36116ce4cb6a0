use loclab::localization::{kim_milman_flow, simulate_ensemble, PathConfig, TimeGrid};
use loclab::measure::{Component1D, Measure, MeasureSpec};
use loclab::tilted::TiltOptions;
use proptest::prelude::*;

fn gaussian(n: usize) -> Measure {
    Measure::new(&MeasureSpec::standard_gaussian(n)).unwrap()
}

fn exponential(n: usize) -> Measure {
    Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), n)).unwrap()
}

#[test]
fn gaussian_paths_have_deterministic_covariance() {
    let grid = TimeGrid::geometric(1e-2, 4.0, 12, 4).unwrap();
    let ens = simulate_ensemble(&gaussian(3), &grid, &PathConfig::default(), 8, 5).unwrap();
    for p in ens.complete() {
        for r in &p.records {
            let want = 1.0 / (1.0 + r.t);
            for i in 0..3 {
                assert!((r.cov[(i, i)] - want).abs() < 1e-12, "t = {}", r.t);
            }
            assert!((r.tr_a2 - 3.0 * want * want).abs() < 1e-12);
        }
    }
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let grid = TimeGrid::geometric(1e-2, 2.0, 8, 4).unwrap();
    let base = exponential(2);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_ensemble(&base, &grid, &PathConfig::default(), 6, 99).unwrap())
    };
    let (one, four) = (run(1), run(4));
    for (a, b) in one.paths.iter().zip(&four.paths) {
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.theta, rb.theta);
            assert_eq!(ra.tr_a2.to_bits(), rb.tr_a2.to_bits());
        }
    }
}

#[test]
fn gaussian_kim_milman_flow_matches_closed_form() {
    // a = theta/(1+t) gives theta(t) proportional to sqrt(t (1 + t)).
    let base = gaussian(2);
    let start = [0.3, -1.1];
    let (t1, t2) = (0.5, 4.0);
    let flow = kim_milman_flow(&base, &start, t1, t2, &TiltOptions::default()).unwrap();
    let factor = (t2 * (1.0 + t2) / (t1 * (1.0 + t1))).sqrt();
    for (got, th) in flow.theta.iter().zip(start) {
        assert!((got - factor * th).abs() < 1e-6 * factor, "{got} vs {}", factor * th);
    }
    let same = kim_milman_flow(&base, &start, 1.0, 1.0, &TiltOptions::default()).unwrap();
    assert_eq!(same.theta, start.to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Log-concave tilts satisfy t ||A_t|| <= 1 along every path.
    #[test]
    fn paths_keep_covariance_below_inverse_time(seed in any::<u64>()) {
        let grid = TimeGrid::geometric(1e-2, 8.0, 10, 4).unwrap();
        let ens = simulate_ensemble(&exponential(2), &grid, &PathConfig::default(), 2, seed).unwrap();
        for p in ens.complete() {
            for r in &p.records {
                prop_assert!(r.t * r.op_norm <= 1.0 + 1e-9, "t {} op_norm {}", r.t, r.op_norm);
                prop_assert!(r.eigenvalues.iter().all(|&e| e > 0.0));
            }
        }
    }

    #[test]
    fn geometric_grids_start_at_zero_and_end_at_the_horizon(
        t_min in 1e-4f64..0.5,
        horizon in 0.5f64..20.0,
        points in 1usize..40,
        substeps in 1usize..8,
    ) {
        let g = TimeGrid::geometric(t_min, horizon, points, substeps).unwrap();
        prop_assert_eq!(g.recorded[0], 0.0);
        prop_assert_eq!(g.horizon(), horizon);
        prop_assert!(g.recorded.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(g.step_count(), (g.recorded.len() - 1) * substeps);
        prop_assert_eq!(g.refined().step_count(), 2 * g.step_count());
    }
}
