mod common;

use std::time::Instant;

use common::{mean_field_mean, scalar_linear};
use mvharnack::model::StateModulation;
use mvharnack::simulate::FlowTag;
use mvharnack::wellposed::{
    conditional_moment_scan, moment_stability, picard_solve, uniqueness_proxy, weighted_flow_distance, GeneralModel,
    LambdaRule, PicardSettings,
};
use mvharnack::{EmpiricalMeasure, Estimate, MeasureFlow, RngPolicy, SplitState, TimeGrid};

fn settings(lambda: f64, dt: f64) -> PicardSettings {
    PicardSettings {
        k: 2.0,
        lambda: LambdaRule::Fixed { value: lambda },
        tol: 1e-10,
        max_iter: 80,
        n_particles: 256,
        dt,
    }
}

fn gaussian_cloud() -> EmpiricalMeasure {
    let init = mvharnack::InitialLaw::Gaussian {
        mean: vec![1.0, 0.5],
        std: 0.3,
    };
    let coords = init.sample(64, &RngPolicy::new(99)).unwrap();
    EmpiricalMeasure::uniform(1, 1, coords).unwrap()
}

fn point_flow(grid: TimeGrid, path: impl Fn(f64) -> [f64; 2]) -> MeasureFlow {
    let clouds = grid
        .times()
        .into_iter()
        .map(|t| EmpiricalMeasure::dirac(&SplitState::from_flat(1, &path(t))))
        .collect();
    MeasureFlow::new(grid, clouds, FlowTag::Frozen).unwrap()
}

#[test]
fn weighted_distance_examples() {
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let a = point_flow(grid, |t| [t, 0.0]);
    let b = point_flow(grid, |_| [0.0, 0.0]);
    assert_eq!(weighted_flow_distance(&a, &a, 2.0, 1.0).unwrap(), 0.0);
    // e^{−t}(|a − b| + (1 + |a|²) + (1 + |b|²)) decreases on (0, 1], so the sup sits at t = 0.1
    let hand = (-0.1f64).exp() * (0.1 + 1.0 + 0.01 + 1.0);
    let value = weighted_flow_distance(&a, &b, 2.0, 1.0).unwrap();
    assert!((value - hand).abs() < 1e-12, "{value} vs {hand}");
    assert!(weighted_flow_distance(&a, &b, 2.0, 400.0).unwrap() < 1e-15);
    let other = point_flow(TimeGrid::new(1.0, 0.05).unwrap(), |t| [t, 0.0]);
    assert!(weighted_flow_distance(&a, &other, 2.0, 1.0).is_err());
}

#[test]
fn measure_independent_drift_is_fixed_after_one_step() {
    let model: GeneralModel = scalar_linear(-1.0, -0.5, [0.0, 0.0], 1.0, 1.0).into();
    let mut s = settings(1.0, 0.05);
    s.max_iter = 3;
    let out = picard_solve(&model, &gaussian_cloud(), &s, &RngPolicy::new(1)).unwrap();
    let distances = out.diagnostics.distances();
    assert_eq!(out.diagnostics.iterations(), 2);
    assert!(distances[0] > 0.0);
    assert!(distances[1] <= 1e-10);
    assert!(out.diagnostics.converged);
}

#[test]
fn fixed_point_mean_matches_mean_field_ode() {
    let started = Instant::now();
    let (a1, a2, a3) = (-1.0, -0.5, [0.4, 0.3]);
    let model: GeneralModel = scalar_linear(a1, a2, a3, 1.0, 1.0).into();
    let dt = 0.02;
    let out = picard_solve(&model, &gaussian_cloud(), &settings(1.0, dt), &RngPolicy::new(7)).unwrap();
    assert!(out.diagnostics.converged);
    assert!(out.diagnostics.iterations() <= grid_steps(dt) + 2);
    let z0 = out.initial_cloud.mean();
    let oracle = mean_field_mean(a1, a2, a3, [z0[0], z0[1]], 1.0);
    let cloud = out.flow.terminal();
    for k in 0..2 {
        let coords: Vec<f64> = cloud.atoms().map(|(x, _)| x[k]).collect();
        let est = Estimate::from_samples(&coords);
        assert!(
            (est.value - oracle[k]).abs() <= 3.0 * est.stderr + 5.0 * dt,
            "{k}: {est:?} vs {}",
            oracle[k]
        );
    }

    let lambdas = [1.0, 2.0, 4.0];
    let ratios: Vec<f64> = lambdas.iter().map(|l| out.diagnostics.mean_ratio_at(*l)).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    assert!(ratios.iter().all(|r| *r < 1.0));
    let mut csv = Vec::new();
    out.diagnostics.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv)
        .unwrap()
        .starts_with("iterate,t,W_k,var_proxy,weighted\n"));
    eprintln!("picard run: {:?}", started.elapsed());
}

fn grid_steps(dt: f64) -> usize {
    (1.0 / dt).round() as usize
}

#[test]
fn adaptive_lambda_is_fitted_once() {
    let model: GeneralModel = scalar_linear(-1.0, -0.5, [0.4, 0.3], 1.0, 1.0).into();
    let mut s = settings(1.0, 0.05);
    s.lambda = LambdaRule::Adaptive { initial: 0.5 };
    let out = picard_solve(&model, &gaussian_cloud(), &s, &RngPolicy::new(2)).unwrap();
    let c3 = out.diagnostics.fitted_c3.unwrap();
    assert_eq!(out.diagnostics.lambda, (4.0 * c3).max(0.5));
    assert!(out.diagnostics.converged);
}

#[test]
fn two_starting_flows_reach_the_same_fixed_point() {
    let model: GeneralModel = scalar_linear(-1.0, -0.5, [0.4, 0.3], 1.0, 1.0).into();
    let report = uniqueness_proxy(&model, &gaussian_cloud(), &settings(1.0, 0.05), &RngPolicy::new(3)).unwrap();
    assert!(report.within_floor, "{report:?}");
}

#[test]
fn moment_growth_constant_is_stable_across_seeds() {
    let model = GeneralModel::new(
        scalar_linear(-1.0, -0.5, [0.4, 0.3], 1.0, 1.0),
        Some(StateModulation {
            epsilon: 0.3,
            direction: vec![0.5, 0.5],
        }),
    )
    .unwrap();
    let seeds: Vec<RngPolicy> = (0..3).map(|i| RngPolicy::new(100 + i)).collect();
    let report = moment_stability(&model, &gaussian_cloud(), &settings(1.0, 0.05), &seeds).unwrap();
    assert!(report.stable, "{report:?}");
}

#[test]
fn conditional_moments_grow_polynomially() {
    let model: GeneralModel = scalar_linear(-1.0, -0.5, [0.0, 0.0], 1.0, 1.0).into();
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let flow = MeasureFlow::constant(grid, gaussian_cloud());
    let dir = SplitState::new(vec![1.0], vec![1.0]).unwrap();
    let radii = [4.0, 8.0, 16.0, 32.0, 64.0];
    let scan = conditional_moment_scan(&model, &flow, &dir, &radii, 2.0, 500, grid, &RngPolicy::new(4)).unwrap();
    assert!((scan.fit.slope - 2.0).abs() <= 0.2, "{}", scan.fit.slope);
}

#[test]
fn rejects_bad_settings() {
    let model: GeneralModel = scalar_linear(-1.0, -0.5, [0.4, 0.3], 1.0, 1.0).into();
    let mut s = settings(1.0, 0.05);
    s.k = 0.5;
    assert!(picard_solve(&model, &gaussian_cloud(), &s, &RngPolicy::new(1)).is_err());
    let mut s = settings(0.0, 0.05);
    s.max_iter = 2;
    assert!(picard_solve(&model, &gaussian_cloud(), &s, &RngPolicy::new(1)).is_err());
    let bad = GeneralModel::new(
        scalar_linear(-1.0, -0.5, [0.4, 0.3], 1.0, 1.0),
        Some(StateModulation {
            epsilon: 2.0,
            direction: vec![1.0, 0.0],
        }),
    );
    assert!(bad.is_err());
}
