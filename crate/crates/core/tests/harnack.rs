mod common;

use common::{bounded_scalar, scalar_linear};
use mvharnack::harnack::{
    concave_modulus_check, exit_code, histogram_tv, holder_check, log_harnack_check, stability_study, tv_entropy_check,
    young_check, HarnackSettings, HarnackSetup, StabilitySettings, TestFunction,
};
use mvharnack::model::{DriftSpec, HamiltonianModel, SigmaSpec};
use mvharnack::{DiniModulus, EmpiricalMeasure, Mat, RngPolicy, SplitState};
use proptest::prelude::*;

fn dirac(x: &[f64]) -> EmpiricalMeasure {
    EmpiricalMeasure::dirac(&SplitState::from_flat(1, x))
}

fn zero_drift(horizon: f64) -> HamiltonianModel {
    HamiltonianModel::new(
        1,
        1,
        Mat::identity(1),
        SigmaSpec::Constant {
            matrix: Mat::identity(1),
        },
        DriftSpec::Zero,
        2.0,
        0.75,
        DiniModulus::power(0.5).unwrap(),
        horizon,
    )
    .unwrap()
}

fn bump() -> TestFunction {
    TestFunction::Bump { floor: 0.1, scale: 1.0 }
}

fn settings(n_paths: usize, dt: f64) -> HarnackSettings {
    HarnackSettings {
        t: 1.0,
        dt,
        n_particles: 200,
        n_paths,
        max_pairs: 8,
    }
}

#[test]
fn test_function_values() {
    let f = bump();
    assert_eq!(f.eval(1, &[3.0, 0.0]), 1.1);
    assert!((f.eval(1, &[0.0, 1.0]) - (0.1 + (-1.0f64).exp())).abs() < 1e-15);
    let g = TestFunction::Logistic {
        floor: 0.0,
        direction: vec![1.0, 0.0],
        offset: 0.0,
    };
    assert_eq!(g.eval(1, &[0.0, 5.0]), 0.5);
    assert_eq!(TestFunction::Constant { value: 2.0 }.lower_bound(), 2.0);
}

#[test]
fn young_and_holder_equality_cases() {
    let logs = vec![0.0; 50];
    let f = vec![3.0; 50];
    let y = young_check(&f, &logs);
    assert!(y.holds);
    assert!((y.lhs - y.rhs).abs() < 1e-15);
    for p in [1.5, 2.0, 4.0] {
        let h = holder_check(&f, &logs, p);
        assert!(h.holds);
        assert!((h.lhs - h.rhs).abs() < 1e-14);
    }
    let varied: Vec<f64> = (0..50).map(|i| 0.1 + i as f64 / 50.0).collect();
    let y = young_check(&varied, &logs);
    assert!(y.holds && y.lhs < y.rhs);
    assert!(holder_check(&[0.0; 10], &[0.0; 10], 2.0).holds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn young_and_holder_never_fail(
        f in proptest::collection::vec(1e-3f64..10.0, 2..40),
        spread in 0.0f64..30.0,
        seed in any::<u64>(),
        p in 1.05f64..6.0,
    ) {
        let mut s = seed;
        let logs: Vec<f64> = f.iter().map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            spread * ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        }).collect();
        prop_assert!(young_check(&f, &logs).holds);
        prop_assert!(holder_check(&f, &logs, p).holds);
    }

    #[test]
    fn concave_modulus_inequality(
        pairs in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..30),
        p in 1.0f64..5.0,
        family in 0usize..3,
    ) {
        let modulus = match family {
            0 => DiniModulus::power(0.5).unwrap(),
            1 => DiniModulus::identity(),
            _ => DiniModulus::log_power(2.0).unwrap(),
        };
        let (xi, eta): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let check = concave_modulus_check(&modulus, &xi, &eta, p).unwrap();
        prop_assert!(check.holds, "{:?}", check);
    }
}

#[test]
fn concave_modulus_errors_and_equality() {
    let id = DiniModulus::identity();
    let c = concave_modulus_check(&id, &[2.0, 2.0], &[1.0, 1.0], 2.0).unwrap();
    assert!((c.lhs - c.rhs).abs() < 1e-14);
    assert!(concave_modulus_check(&id, &[1.0], &[1.0, 2.0], 2.0).is_err());
    assert!(concave_modulus_check(&id, &[-1.0], &[1.0], 2.0).is_err());
    assert!(concave_modulus_check(&id, &[1.0], &[1.0], 0.5).is_err());
}

#[test]
fn identical_laws_slack_is_jensen_gap() {
    let model = bounded_scalar(1.0);
    let g = dirac(&[0.2, -0.1]);
    let rng = RngPolicy::new(3);
    let setup = HarnackSetup::new(&model, &g, &g, &settings(2000, 0.05), &rng).unwrap();
    let log = setup.log_harnack(&bump()).unwrap();
    assert!(log.pass && log.identity_holds);
    let pair = &log.pairs[0];
    assert!(log.slack > 0.0);
    assert!((log.slack - (pair.rhs.value - pair.lhs.value)).abs() < 1e-12);
    let constant = setup.log_harnack(&TestFunction::Constant { value: 2.0 }).unwrap();
    assert!((constant.slack).abs() < 1e-12);
    let power = setup
        .power_harnack(&TestFunction::Constant { value: 1.0 }, 2.0)
        .unwrap();
    assert_eq!(power.rhs_factor, Some(1.0));
    assert!((power.lhs.value - 1.0).abs() < 1e-12 && power.pass);
    let tv = setup.tv_entropy(8, 3).unwrap();
    assert_eq!(tv.tv, 0.0);
    assert_eq!(tv.entropy_upper.value, 0.0);
    assert!(tv.pass && tv.nested_monotone);
}

#[test]
fn constant_function_slack_is_the_cost() {
    let model = zero_drift(1.0);
    let rng = RngPolicy::new(5);
    let report = log_harnack_check(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[1.0, 0.0]),
        &TestFunction::Constant { value: 2.0 },
        &settings(500, 0.01),
        &rng,
    )
    .unwrap();
    assert!((report.lhs.value - 2f64.ln()).abs() < 1e-12);
    assert!((report.slack - 6.0).abs() < 1e-8, "{}", report.slack);
    assert!(report.pass && report.identity_holds);
    assert!((report.shape_constant.unwrap() - 6.0).abs() < 1e-8);
}

#[test]
fn bounded_model_log_harnack_instance() {
    let model = bounded_scalar(1.0);
    let rng = RngPolicy::new(11);
    let report = log_harnack_check(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[1.0, 0.0]),
        &bump(),
        &settings(100_000, 0.02),
        &rng,
    )
    .unwrap();
    assert!(report.identity_holds);
    assert!(report.pass, "{report:?}");
    let mild = log_harnack_check(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[0.3, 0.0]),
        &bump(),
        &settings(20_000, 0.02),
        &rng,
    )
    .unwrap();
    assert!(mild.identity_holds && mild.pass && !mild.degenerate, "{mild:?}");
}

#[test]
fn power_sweep_factor_decreases() {
    let model = bounded_scalar(1.0);
    let rng = RngPolicy::new(13);
    let setup = HarnackSetup::new(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[0.3, 0.0]),
        &settings(20_000, 0.02),
        &rng,
    )
    .unwrap();
    let mut last = f64::INFINITY;
    for p in [1.5, 2.0, 4.0] {
        let r = setup.power_harnack(&bump(), p).unwrap();
        assert!(r.pass && r.identity_holds, "p = {p}: {r:?}");
        let factor = r.rhs_factor.unwrap();
        assert!(factor > 1.0 && factor < last);
        last = factor;
    }
    assert!(setup.power_harnack(&bump(), 1.0).is_err());
}

#[test]
fn both_orientations_pass() {
    let model = bounded_scalar(1.0);
    let rng = RngPolicy::new(17);
    let a = EmpiricalMeasure::uniform(1, 1, vec![0.0, 0.0, 0.2, 0.1]).unwrap();
    let b = EmpiricalMeasure::uniform(1, 1, vec![0.3, 0.0, 0.1, -0.1]).unwrap();
    for (g, h) in [(&a, &b), (&b, &a)] {
        let setup = HarnackSetup::new(&model, g, h, &settings(5000, 0.02), &rng).unwrap();
        assert_eq!(setup.pairs.len(), 2);
        let log = setup.log_harnack(&bump()).unwrap();
        let power = setup.power_harnack(&bump(), 2.0).unwrap();
        assert!(log.pass && log.identity_holds, "{log:?}");
        assert!(power.pass && power.identity_holds, "{power:?}");
    }
}

#[test]
fn invalid_functions_rejected() {
    let model = zero_drift(1.0);
    let rng = RngPolicy::new(1);
    let g = dirac(&[0.0, 0.0]);
    let setup = HarnackSetup::new(&model, &g, &g, &settings(10, 0.1), &rng).unwrap();
    let f = TestFunction::Bump { floor: 0.0, scale: 1.0 };
    assert!(setup.log_harnack(&f).is_err());
    assert!(setup.power_harnack(&f, 2.0).is_ok());
    let bad = TestFunction::Logistic {
        floor: 0.1,
        direction: vec![1.0],
        offset: 0.0,
    };
    assert!(setup.log_harnack(&bad).is_err());
    let mut s = settings(10, 0.1);
    s.t = 2.0;
    assert!(HarnackSetup::new(&model, &g, &g, &s, &rng).is_err());
}

#[test]
fn zero_drift_tv_against_entropy() {
    let model = zero_drift(1.0);
    let rng = RngPolicy::new(19);
    let mut s = settings(10, 0.01);
    s.n_particles = 4000;
    let report = tv_entropy_check(&model, &dirac(&[0.0, 0.0]), &dirac(&[1.0, 0.0]), 6, &s, &rng).unwrap();
    assert_eq!(report.entropy_upper.value, 6.0);
    assert_eq!(report.entropy_upper.stderr, 0.0);
    assert!(report.pass && report.tv <= 2.0);
    assert!(report.nested_monotone, "{:?}", report.nested);
}

#[test]
fn histogram_refinement_is_monotone() {
    let a = EmpiricalMeasure::uniform(1, 1, (0..40).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let b = EmpiricalMeasure::uniform(1, 1, (0..40).map(|i| (i as f64 * 0.51).cos()).collect()).unwrap();
    let mut last = 0.0;
    for k in 0..5 {
        let (tv, cells) = histogram_tv(&a, &b, 2 << k);
        assert!(tv >= last - 1e-15 && tv <= 2.0 + 1e-15);
        assert!(cells <= 40);
        last = tv;
    }
    assert_eq!(histogram_tv(&a, &a, 16).0, 0.0);
}

fn study_settings(times: Vec<f64>) -> StabilitySettings {
    StabilitySettings {
        times,
        dt: 0.01,
        n_particles: 300,
        n_paths: 240,
        replicates: 2,
    }
}

#[test]
fn zero_drift_clouds_are_translates() {
    let model = zero_drift(1.0);
    let rng = RngPolicy::new(23);
    let table = stability_study(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[0.5, 0.5]),
        &study_settings(vec![0.25, 0.5, 1.0]),
        &rng,
    )
    .unwrap();
    for row in &table.rows {
        let shift = (0.5f64 + 0.5 * row.t).hypot(0.5);
        assert!((row.w2 - shift).abs() < 1e-9, "{row:?}");
        assert!(row.w2_ratio <= 1.0 + row.t + 1e-12);
    }
    let same = stability_study(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[0.0, 0.0]),
        &study_settings(vec![0.5]),
        &rng,
    )
    .unwrap();
    assert_eq!(same.rows[0].w2, 0.0);
    assert_eq!(same.rows[0].wba_reweighted.value, 0.0);
    assert_eq!(same.rows[0].w2_ratio, 0.0);
}

#[test]
fn bounded_stability_across_seeds() {
    let model = bounded_scalar(1.0);
    let sups: Vec<f64> = [1, 2, 3]
        .iter()
        .map(|&seed| {
            stability_study(
                &model,
                &dirac(&[0.0, 0.0]),
                &dirac(&[0.3, 0.0]),
                &study_settings(vec![0.1, 0.3, 0.6, 1.0]),
                &RngPolicy::new(seed),
            )
            .unwrap()
            .sup_w2_ratio
        })
        .collect();
    let mean = sups.iter().sum::<f64>() / 3.0;
    assert!(mean.is_finite() && mean > 0.0);
    for s in &sups {
        assert!((s / mean - 1.0).abs() <= 0.2, "{sups:?}");
    }
}

#[test]
fn study_rejects_bad_times() {
    let model = zero_drift(1.0);
    let rng = RngPolicy::new(1);
    let g = dirac(&[0.0, 0.0]);
    assert!(stability_study(&model, &g, &g, &study_settings(vec![]), &rng).is_err());
    assert!(stability_study(&model, &g, &g, &study_settings(vec![2.0]), &rng).is_err());
    assert!(stability_study(&model, &g, &g, &study_settings(vec![0.005]), &rng).is_err());
}

#[test]
fn exit_codes() {
    assert_eq!(exit_code(0, 0), 0);
    assert_eq!(exit_code(1, 0), 1);
    assert_eq!(exit_code(1, 3), 1);
    assert_eq!(exit_code(0, 2), 2);
}

#[test]
fn linear_model_log_harnack_passes() {
    let model = scalar_linear(-0.5, -0.5, [0.2, 0.0], 1.0, 1.0);
    let rng = RngPolicy::new(29);
    let r = log_harnack_check(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[0.2, 0.2]),
        &bump(),
        &settings(10_000, 0.02),
        &rng,
    )
    .unwrap();
    assert!(r.pass && r.identity_holds, "{r:?}");
}

#[test]
fn reweighted_stability_fits_shape() {
    let model = bounded_scalar(1.0);
    let s = StabilitySettings {
        times: vec![0.02, 0.04, 0.08, 0.16, 0.32, 0.64],
        dt: 0.002,
        n_particles: 256,
        n_paths: 400,
        replicates: 4,
    };
    let table = stability_study(
        &model,
        &dirac(&[0.0, 0.0]),
        &dirac(&[0.0, 1e-3]),
        &s,
        &RngPolicy::new(4),
    )
    .unwrap();
    assert!(table.fit.r_squared >= 0.8, "{:?}", table.fit);
    assert!(table.fit.slope > 0.0);
    let shapes: Vec<f64> = table.rows.iter().map(|r| r.shape).collect();
    assert!(shapes.windows(2).all(|w| w[1] < w[0]));
}
