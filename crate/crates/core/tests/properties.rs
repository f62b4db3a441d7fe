use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robest::data::{copper, polonium, Dataset};
use robest::family::{Gamma, Model, NormalLocationScale, Poisson};
use robest::ic::{solve_ic, Neighborhood, SolverConfig};
use robest::mc::{mc_compare, Contaminant, ContaminationScenario, Estimator};
use robest::onestep::{one_step, roptest_pipeline, IcSpec, OneStepConfig};
use robest::rmx::RadiusInterval;
use robest::start::{cvm_fit, median_mad, OptimizerConfig, StartMethod};

fn normal() -> Model {
    Arc::new(NormalLocationScale)
}

fn sample(family: &Model, theta: &[f64], n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = (0..n).map(|_| family.sample(theta, &mut rng)).collect();
    Dataset::from_observations(obs, "sample").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn median_mad_is_affine_equivariant(
        obs in prop::collection::vec(-50.0..50.0f64, 5..40),
        shift in -10.0..10.0f64,
        scale in 0.1..10.0f64,
    ) {
        let d = Dataset::from_observations(obs.clone(), "x").unwrap();
        let moved = Dataset::from_observations(obs.iter().map(|x| shift + scale * x).collect(), "y").unwrap();
        if let (Ok((m, s)), Ok((m2, s2))) = (median_mad(&d), median_mad(&moved)) {
            prop_assert!((m2 - (shift + scale * m)).abs() <= 1e-9 * (1.0 + m2.abs()));
            prop_assert!((s2 - scale * s).abs() <= 1e-9 * (1.0 + s2));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn one_step_ignores_observation_order(seed in any::<u64>()) {
        let mut obs = copper().expand();
        obs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = Dataset::from_observations(obs, "shuffled").unwrap();
        let config = OneStepConfig::default();
        let a = roptest_pipeline(&normal(), &copper(), 0.05, 0.2, StartMethod::MedianMad, &config).unwrap();
        let b = roptest_pipeline(&normal(), &shuffled, 0.05, 0.2, StartMethod::MedianMad, &config).unwrap();
        prop_assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn one_step_shift_stays_within_the_clipping_bound(
        seed in any::<u64>(),
        n in 10usize..80,
        outliers in prop::collection::vec(-100.0..100.0f64, 0..5),
        nb in prop_oneof![Just(Neighborhood::Contamination), Just(Neighborhood::TotalVariation)],
    ) {
        let mut obs = sample(&normal(), &[1.0, 2.0], n, seed).expand();
        obs.extend(outliers);
        let data = Dataset::from_observations(obs, "x").unwrap();
        let config = OneStepConfig { neighborhood: nb, ..OneStepConfig::default() };
        let rep = roptest_pipeline(&normal(), &data, 0.02, 0.2, StartMethod::Cvm, &config).unwrap();
        prop_assert!(rep.shift_norm() <= rep.multipliers.b, "{} > {}", rep.shift_norm(), rep.multipliers.b);
    }

    #[test]
    fn poisson_shift_stays_within_the_clipping_bound(seed in any::<u64>(), lambda in 0.5..8.0f64, n in 20usize..200) {
        let model: Model = Arc::new(Poisson);
        let data = sample(&model, &[lambda], n, seed);
        for nb in [Neighborhood::Contamination, Neighborhood::TotalVariation] {
            let config = OneStepConfig { neighborhood: nb, ..OneStepConfig::default() };
            // samples of a single value have no CvM fit beyond the boundary
            if let Ok(rep) = roptest_pipeline(&model, &data, 0.01, 0.1, StartMethod::Mle, &config) {
                prop_assert!(rep.shift_norm() <= rep.multipliers.b);
            }
        }
    }

    #[test]
    fn cvm_improves_on_start_and_grid(seed in any::<u64>(), n in 10usize..60) {
        let gamma: Model = Arc::new(Gamma);
        for (family, theta) in [(normal(), vec![3.0, 0.5]), (gamma, vec![2.0, 1.5])] {
            let data = sample(&family, &theta, n, seed);
            let fit = cvm_fit(&*family, &data, &OptimizerConfig::default()).unwrap();
            prop_assert!(fit.objective <= fit.start_objective);
            if let Some(g) = fit.grid_minimum {
                prop_assert!(fit.objective <= g);
            }
        }
    }
}

#[test]
fn cvm_on_a_large_sample() {
    let data = sample(&normal(), &[-2.0, 3.0], 100_000, 5);
    let fit = cvm_fit(&NormalLocationScale, &data, &OptimizerConfig::default()).unwrap();
    // sampling sd of the estimates is about 0.01
    assert!((fit.theta[0] + 2.0).abs() < 0.05 && (fit.theta[1] - 3.0).abs() < 0.05, "{:?}", fit.theta);
}

#[test]
fn collapsed_interval_matches_fixed_radius() {
    let config = OneStepConfig::default();
    for (family, data, eps, start) in [
        (normal(), copper(), 0.1, vec![3.385, 0.52632]),
        (Arc::new(Poisson) as Model, polonium(), 0.03, vec![3.9]),
    ] {
        let iv = RadiusInterval::from_fractions(eps - 1e-9, eps, data.n()).unwrap();
        let a = one_step(&family, &start, "given", &data, IcSpec::Interval(iv), &config).unwrap();
        let b = one_step(&family, &start, "given", &data, IcSpec::Radius(iv.upper()), &config).unwrap();
        for (x, y) in a.estimate.iter().zip(&b.estimate) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn multipliers_move_continuously_with_the_radius() {
    let config = SolverConfig::default();
    let gamma: Model = Arc::new(Gamma);
    for (family, theta) in [(normal(), vec![0.0, 1.0]), (gamma, vec![5.0, 1.9]), (Arc::new(Poisson) as Model, vec![3.9])] {
        for r in [0.2, 0.7, 1.5] {
            let (a, ra) = solve_ic(&family, &theta, r, Neighborhood::Contamination, &config).unwrap();
            let (b, rb) = solve_ic(&family, &theta, r * (1.0 + 1e-4), Neighborhood::Contamination, &config).unwrap();
            assert_relative_eq!(a.b, b.b, max_relative = 1e-3);
            assert_relative_eq!(ra.tr_a.unwrap(), rb.tr_a.unwrap(), max_relative = 1e-3);
            assert!((&a.a_mat - &b.a_mat).amax() <= 1e-3 * a.a_mat.amax());
        }
    }
}

#[test]
fn uncontaminated_normal_estimators_are_near_efficient() {
    let sc = ContaminationScenario::new(normal(), vec![0.0, 1.0], 0.0, Contaminant::Dirac(0.0), 100, 0).unwrap();
    let est = [
        Estimator::mle(normal()),
        Estimator::rmx(normal(), 0.0, 0.02, Neighborhood::Contamination, StartMethod::Cvm),
    ];
    let t = mc_compare(&sc, &est, 400, 3).unwrap();
    // tr I⁻¹ = 1.5 at σ = 1
    for row in &t.rows {
        assert_eq!(row.failures, 0);
        assert!((row.n_mse - 1.5).abs() < 0.25 * 1.5 + 3.0 * row.std_error, "{row:?}");
    }
    assert_eq!(t.rows[1].shift_violations, 0);
}
