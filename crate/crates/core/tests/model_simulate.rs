mod common;

use common::{bounded_scalar, linear_flow, mean_field_mean, scalar_linear};
use mvharnack::model::{drift_eval, validate_assumptions, ProbeConfig};
use mvharnack::simulate::{
    estimate_semigroup, flow_moment_report, path_moment_report, simulate_decoupled, simulate_mckean_vlasov,
};
use mvharnack::stats::log_log_fit;
use mvharnack::{
    EmpiricalMeasure, Estimate, HamiltonianModel, InitialLaw, Mat, MeasureFlow, RngPolicy, SigmaSpec, SplitState,
    TimeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dirac(x: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::dirac(&SplitState::from_flat(1, x))
}

fn state(first: Vec<f64>, second: Vec<f64>) -> SplitState {
    SplitState::new(first, second).unwrap()
}

fn sample_var(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[test]
fn drift_eval_examples() {
    let zero = HamiltonianModel::scalar_zero_drift(1.0);
    let x = state(vec![3.0], vec![-2.0]);
    assert_eq!(drift_eval(&zero, 0.5, &x, &dirac(&[1.0, 1.0])).unwrap(), vec![0.0]);

    let damped = scalar_linear(0.0, -1.0, [0.0, 0.0], 1.0, 1.0);
    assert_eq!(drift_eval(&damped, 0.0, &x, &dirac(&[0.0, 0.0])).unwrap(), vec![2.0]);

    let mean_field = scalar_linear(0.0, 0.0, [1.0, 0.0], 1.0, 1.0);
    let origin = SplitState::zeros(1, 1);
    assert_eq!(
        drift_eval(&mean_field, 0.0, &origin, &dirac(&[2.0, 0.0])).unwrap(),
        vec![2.0]
    );

    assert!(drift_eval(&zero, 2.0, &x, &dirac(&[0.0, 0.0])).is_err());
    assert!(drift_eval(&zero, 0.0, &SplitState::zeros(2, 1), &dirac(&[0.0, 0.0])).is_err());
}

#[test]
fn assumption_reports() {
    let probe = ProbeConfig::default();
    let zero = validate_assumptions(&HamiltonianModel::scalar_zero_drift(1.0), &probe).unwrap();
    assert!(zero.passed(), "{:?}", zero.failures());
    assert_eq!(zero.gradient_sup, 0.0);
    assert_eq!(zero.measure_lipschitz_ratio, 0.0);

    let linear = validate_assumptions(&scalar_linear(-1.0, -0.5, [0.1, 0.05], 1.0, 1.0), &probe).unwrap();
    assert!(linear.passed(), "{:?}", linear.failures());

    let bounded = validate_assumptions(&bounded_scalar(1.0), &probe).unwrap();
    assert!(bounded.passed(), "{:?}", bounded.failures());

    let mut silent = HamiltonianModel::scalar_zero_drift(1.0);
    silent.sigma = SigmaSpec::Constant {
        matrix: Mat::zeros(1, 1),
    };
    let report = validate_assumptions(&silent, &probe).unwrap();
    assert!(!report.passed());
    assert_eq!(report.sigma_min_singular, 0.0);
    assert!(!report.check("sigma_invertible").unwrap().passed);
}

#[test]
fn linear_finite_difference_gradient_is_exact() {
    let model = scalar_linear(-1.3, 0.4, [0.2, -0.1], 1.0, 1.0);
    let summary = model.summarize(&dirac(&[0.7, -0.2]));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-5.0..5.0)).collect();
        for (k, exact) in [-1.3, 0.4].into_iter().enumerate() {
            let mut e = vec![0.0; 2];
            e[k] = 1.0;
            let mut out = vec![0.0];
            model.drift_directional_fd(&x, &summary, &e, &mut out);
            assert!((out[0] - exact).abs() <= 1e-6 * exact.abs(), "{} vs {exact}", out[0]);
        }
    }
    let jac = model.jacobian(&[0.0, 0.0], &summary);
    assert_eq!(jac.data(), &[-1.3, 0.4]);
}

#[test]
fn bounded_drift_respects_declared_bound() {
    let model = bounded_scalar(1.0);
    let bound = model.drift_bound().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut out = vec![0.0];
    for _ in 0..200 {
        let atoms: Vec<f64> = (0..10).map(|_| rng.random_range(-20.0..20.0)).collect();
        let cloud = EmpiricalMeasure::uniform(1, 1, atoms).unwrap();
        let summary = model.summarize(&cloud);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-50.0..50.0)).collect();
        model.drift_into(&x, &summary, &mut out);
        assert!(out[0].abs() <= bound, "{} > {bound}", out[0]);
    }
}

#[test]
fn zero_drift_particles_match_brownian_marginals() {
    let model = HamiltonianModel::scalar_zero_drift(1.0);
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let init = InitialLaw::Measure(dirac(&[0.0, 0.0]));
    let flow = simulate_mckean_vlasov(&model, &init, 6000, grid, &RngPolicy::new(11)).unwrap();
    let cloud = flow.terminal();
    let x1: Vec<f64> = cloud.atoms().map(|(a, _)| a[0]).collect();
    let x2: Vec<f64> = cloud.atoms().map(|(a, _)| a[1]).collect();
    let mean2 = Estimate::from_samples(&x2);
    assert!(mean2.value.abs() <= 3.0 * mean2.stderr);
    assert!((sample_var(&x2) - 1.0).abs() <= 0.05);
    assert!((sample_var(&x1) - 1.0 / 3.0).abs() <= 0.05 / 3.0);
}

#[test]
fn particle_mean_follows_the_mean_field_ode() {
    let (a1, a2, a3) = (-1.0, -0.5, [0.3, 0.2]);
    let model = scalar_linear(a1, a2, a3, 1.0, 1.0);
    let dt = 0.01;
    let grid = TimeGrid::new(1.0, dt).unwrap();
    let init = InitialLaw::Gaussian {
        mean: vec![1.0, 0.5],
        std: 0.3,
    };
    let flow = simulate_mckean_vlasov(&model, &init, 4000, grid, &RngPolicy::new(2)).unwrap();
    let z0 = flow.initial().mean();
    for j in [25, 50, 75, 100] {
        let t = grid.time(j);
        let oracle = mean_field_mean(a1, a2, a3, [z0[0], z0[1]], t);
        let cloud = flow.at_step(j);
        for k in 0..2 {
            let coords: Vec<f64> = cloud.atoms().map(|(a, _)| a[k]).collect();
            let est = Estimate::from_samples(&coords);
            assert!(
                (est.value - oracle[k]).abs() <= 3.0 * est.stderr + 5.0 * dt,
                "t={t} k={k}: {} vs {}",
                est.value,
                oracle[k]
            );
        }
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let model = bounded_scalar(0.5);
    let grid = TimeGrid::new(0.5, 0.01).unwrap();
    let init = InitialLaw::Gaussian {
        mean: vec![0.0, 0.0],
        std: 1.0,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let flow = simulate_mckean_vlasov(&model, &init, 300, grid, &RngPolicy::new(9)).unwrap();
            let bundle = simulate_decoupled(
                &model,
                &flow,
                &state(vec![0.1], vec![0.2]),
                50,
                grid,
                &RngPolicy::new(9),
            )
            .unwrap();
            let mut bytes = Vec::new();
            flow.write_csv(&mut bytes).unwrap();
            bundle.write_csv(&mut bytes).unwrap();
            bytes
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn decoupled_zero_drift_closed_forms() {
    let model = HamiltonianModel::scalar_zero_drift(1.0);
    let grid = TimeGrid::new(1.0, 1e-2).unwrap();
    let flow = MeasureFlow::constant(grid, dirac(&[0.0, 0.0]));
    let x = state(vec![0.5], vec![1.0]);
    let bundle = simulate_decoupled(&model, &flow, &x, 4000, grid, &RngPolicy::new(4)).unwrap();
    let x1: Vec<f64> = (0..bundle.n_paths).map(|p| bundle.terminal(p)[0]).collect();
    let x2: Vec<f64> = (0..bundle.n_paths).map(|p| bundle.terminal(p)[1] - 1.0).collect();
    let e1 = Estimate::from_samples(&x1);
    let e2 = Estimate::from_samples(&x2);
    assert!((e1.value - 1.5).abs() <= 3.0 * e1.stderr);
    assert!(e2.value.abs() <= 3.0 * e2.stderr);

    // x1 is a left-point integral of the stored x2 path, with no noise of its own
    for p in 0..20 {
        let mut pos = 0.5;
        for j in 0..grid.n_steps {
            assert_eq!(bundle.state(p, j)[0], pos);
            pos += bundle.state(p, j)[1] * grid.dt();
        }
        assert_eq!(bundle.terminal(p)[0], pos);
        for j in 0..grid.n_steps {
            let step = bundle.state(p, j + 1)[1] - bundle.state(p, j)[1];
            assert!((step - bundle.increment(p, j)[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn decoupled_linear_mean_matches_flow_oracle() {
    let (a1, a2) = (-2.0, -0.3);
    let model = scalar_linear(a1, a2, [0.0, 0.0], 0.5, 1.0);
    let dt = 0.005;
    let grid = TimeGrid::new(1.0, dt).unwrap();
    let flow = MeasureFlow::constant(grid, dirac(&[0.0, 0.0]));
    let x = state(vec![1.0], vec![-0.5]);
    let oracle = linear_flow(a1, a2, [1.0, -0.5], 1.0);
    for (k, target) in oracle.iter().enumerate() {
        let f = move |s: &SplitState| if k == 0 { s.first[0] } else { s.second[0] };
        let est = estimate_semigroup(&model, &flow, &x, &f, 4000, grid, &RngPolicy::new(8)).unwrap();
        assert!(
            (est.value - target).abs() <= 3.0 * est.stderr + 5.0 * dt,
            "{k}: {} vs {target}",
            est.value
        );
    }
}

#[test]
fn semigroup_examples() {
    let model = HamiltonianModel::scalar_zero_drift(1.0);
    let grid = TimeGrid::new(1.0, 1e-2).unwrap();
    let flow = MeasureFlow::constant(grid, dirac(&[0.0, 0.0]));
    let x = state(vec![-0.4], vec![0.7]);
    let rng = RngPolicy::new(21);
    let one = estimate_semigroup(&model, &flow, &x, &|_| 1.0, 500, grid, &rng).unwrap();
    assert_eq!(one, Estimate::exact(1.0));
    let second = estimate_semigroup(&model, &flow, &x, &|s| s.second[0], 5000, grid, &rng).unwrap();
    assert!((second.value - 0.7).abs() <= 3.0 * second.stderr);
    let first = estimate_semigroup(&model, &flow, &x, &|s| s.first[0], 5000, grid, &rng).unwrap();
    assert!((first.value - 0.3).abs() <= 3.0 * first.stderr);
    let bad = estimate_semigroup(&model, &flow, &x, &|_| f64::NAN, 5, grid, &rng);
    assert!(bad.is_err());
}

#[test]
fn weak_error_is_first_order() {
    // Nearly noiseless linear dynamics isolate the Euler bias.
    let (a1, a2) = (-1.5, -0.4);
    let model = scalar_linear(a1, a2, [0.0, 0.0], 1e-9, 1.0);
    let oracle = linear_flow(a1, a2, [1.0, 0.0], 1.0);
    let x = state(vec![1.0], vec![0.0]);
    let dts = [0.04, 0.02, 0.01];
    let errors: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let grid = TimeGrid::new(1.0, dt).unwrap();
            let flow = MeasureFlow::constant(grid, dirac(&[0.0, 0.0]));
            let est = estimate_semigroup(&model, &flow, &x, &|s| s.second[0], 4, grid, &RngPolicy::new(1)).unwrap();
            (est.value - oracle[1]).abs()
        })
        .collect();
    let fit = log_log_fit(&dts, &errors);
    assert!((fit.slope - 1.0).abs() < 0.15, "slope {}", fit.slope);
}

#[test]
fn small_time_moment_scaling() {
    let model = HamiltonianModel::scalar_zero_drift(1.0);
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let flow = MeasureFlow::constant(grid, dirac(&[0.0, 0.0]));
    let steps: Vec<usize> = (1..=10).map(|k| k * 100).collect();
    let x = state(vec![0.3], vec![-0.2]);
    let report = path_moment_report(&model, &flow, &x, 2.0, &steps, 8000, grid, &RngPolicy::new(17)).unwrap();
    assert!(
        (report.first_fit.slope - 3.0).abs() <= 0.15,
        "{}",
        report.first_fit.slope
    );
    let at_one = report.first_deviation.last().unwrap().value;
    assert!((at_one - 1.0 / 3.0).abs() <= 0.05 / 3.0, "{at_one}");
    assert!(
        (report.second_fit.slope - 1.0).abs() <= 0.15,
        "{}",
        report.second_fit.slope
    );
    for (t, e) in report.times.iter().zip(&report.second_sup) {
        assert!(e.value >= 0.95 * t && e.value <= 4.0 * t, "t={t}: {}", e.value);
    }
}

#[test]
fn bounded_flow_moments_are_finite() {
    let model = bounded_scalar(1.0);
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let init = InitialLaw::Measure(dirac(&[0.0, 0.0]));
    let flow = simulate_mckean_vlasov(&model, &init, 500, grid, &RngPolicy::new(3)).unwrap();
    let report = flow_moment_report(&flow, 2.0).unwrap();
    assert!(report.sup_moment.is_finite() && report.sup_moment > 0.0);
    assert_eq!(report.moments[0], 0.0);
    assert!(flow_moment_report(&flow, 0.5).is_err());
}

#[test]
fn grid_and_argument_errors() {
    assert!(TimeGrid::new(1.0, 0.3).is_err());
    assert!(TimeGrid::new(1.0, 0.03).is_err());
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    assert_eq!(grid.time(10), 1.0);
    let model = HamiltonianModel::scalar_zero_drift(1.0);
    let init = InitialLaw::Measure(dirac(&[0.0, 0.0]));
    assert!(simulate_mckean_vlasov(&model, &init, 1, grid, &RngPolicy::new(0)).is_err());
}
