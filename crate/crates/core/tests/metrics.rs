use mvharnack::metrics::*;
use mvharnack::DiniModulus;
use proptest::prelude::*;

fn pt(a: f64, b: f64) -> SplitState {
    SplitState::new(vec![a], vec![b]).unwrap()
}

fn measure(points: &[(f64, f64)], weights: &[f64]) -> EmpiricalMeasure {
    let coords = points.iter().flat_map(|(a, b)| [*a, *b]).collect();
    EmpiricalMeasure::new(1, 1, coords, weights.to_vec()).unwrap()
}

fn uniform(points: &[(f64, f64)]) -> EmpiricalMeasure {
    let coords = points.iter().flat_map(|(a, b)| [*a, *b]).collect();
    EmpiricalMeasure::uniform(1, 1, coords).unwrap()
}

fn rho_cost(beta: f64, modulus: DiniModulus) -> CostSpec {
    CostSpec::RhoBetaAlpha { beta, modulus }
}

#[test]
fn rho_examples() {
    let id = DiniModulus::identity();
    assert_eq!(rho_beta_alpha(&pt(0.0, 0.0), &pt(3.0, 4.0), 1.0, &id).unwrap(), 7.0);
    let sqrt = DiniModulus::power(0.5).unwrap();
    assert_eq!(rho_beta_alpha(&pt(0.0, 0.0), &pt(1.0, 1.0), 0.75, &sqrt).unwrap(), 2.0);
    assert_eq!(rho_beta_alpha(&pt(0.3, -2.0), &pt(0.3, -2.0), 0.5, &sqrt).unwrap(), 0.0);
    let bad = SplitState::new(vec![0.0, 1.0], vec![0.0]).unwrap();
    assert!(rho_beta_alpha(&pt(0.0, 0.0), &bad, 1.0, &id).is_err());
}

#[test]
fn wasserstein_examples() {
    let (x, y) = (pt(1.0, 2.0), pt(-2.0, 6.0));
    let w2 = wasserstein(
        &EmpiricalMeasure::dirac(&x),
        &EmpiricalMeasure::dirac(&y),
        &CostSpec::Wk { k: 2.0 },
    )
    .unwrap();
    assert!((w2.value - 5.0).abs() < 1e-12);

    let mu = uniform(&[(0.0, 0.0), (2.0, 0.0)]);
    let nu = uniform(&[(1.0, 0.0)]);
    let sol = wasserstein(&mu, &nu, &CostSpec::Wk { k: 2.0 }).unwrap();
    assert!((sol.value - 1.0).abs() < 1e-12);
    assert!(sol.plan.marginal_error(mu.weights(), nu.weights()) < 1e-12);

    let sqrt = DiniModulus::power(0.5).unwrap();
    let rho = rho_beta_alpha(&x, &y, 0.6, &sqrt).unwrap();
    let w = wasserstein(
        &EmpiricalMeasure::dirac(&x),
        &EmpiricalMeasure::dirac(&y),
        &rho_cost(0.6, sqrt),
    )
    .unwrap();
    assert!((w.value - rho).abs() < 1e-12);
}

#[test]
fn bruteforce_examples() {
    let mu = uniform(&[(0.0, 0.0), (2.0, 0.0)]);
    let nu = uniform(&[(1.0, 0.0), (3.0, 0.0)]);
    let w1 = CostSpec::Wk { k: 1.0 };
    // matched order: ½·1 + ½·1 = 1 per unit mass, total cost 2 over both atoms
    let brute = wasserstein_bruteforce(&mu, &nu, &w1).unwrap();
    assert!((brute - 1.0).abs() < 1e-12);
    assert!((brute * 2.0 - 2.0).abs() < 1e-12);
    assert!((wasserstein(&mu, &nu, &w1).unwrap().value - brute).abs() < 1e-12);

    let single = wasserstein_bruteforce(&uniform(&[(0.0, 1.0)]), &uniform(&[(0.0, 4.0)]), &w1).unwrap();
    assert!((single - 3.0).abs() < 1e-12);

    assert!(wasserstein_bruteforce(&measure(&[(0.0, 0.0), (1.0, 0.0)], &[0.3, 0.7]), &mu, &w1).is_err());
    let nine: Vec<(f64, f64)> = (0..9).map(|i| (i as f64, 0.0)).collect();
    assert!(wasserstein_bruteforce(&uniform(&nine), &uniform(&nine), &w1).is_err());
}

#[test]
fn size_cap_is_enforced() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.0)).collect();
    let mu = uniform(&pts);
    let err = wasserstein_with_cap(&mu, &mu, &CostSpec::Wk { k: 1.0 }, 12).unwrap_err();
    assert!(matches!(err, mvharnack::Error::SizeCap { atoms: 20, cap: 12 }));
}

#[test]
fn weighted_variation_examples() {
    let mu = measure(&[(1.0, 0.0)], &[1.0]);
    let nu = measure(&[(0.0, 1.0)], &[1.0]);
    assert_eq!(weighted_variation(&mu, &mu, 1.0).unwrap(), 0.0);
    assert!((weighted_variation(&mu, &nu, 1.0).unwrap() - 4.0).abs() < 1e-15);
    // (½,½) vs (¼,¾) on {0, z} with |z| = 1: ¼·(1+0) + ¼·(1+1)
    let a = measure(&[(0.0, 0.0), (1.0, 0.0)], &[0.5, 0.5]);
    let b = measure(&[(0.0, 0.0), (1.0, 0.0)], &[0.25, 0.75]);
    assert!((weighted_variation(&a, &b, 1.0).unwrap() - 0.75).abs() < 1e-15);
}

#[test]
fn total_variation_and_entropy_examples() {
    let a = measure(&[(0.0, 0.0), (1.0, 0.0)], &[0.5, 0.5]);
    let b = measure(&[(0.0, 0.0), (1.0, 0.0)], &[0.25, 0.75]);
    let c = measure(&[(5.0, 0.0)], &[1.0]);
    assert_eq!(total_variation(&a, &a).unwrap(), 0.0);
    assert!((total_variation(&a, &c).unwrap() - 2.0).abs() < 1e-15);
    assert!((total_variation(&a, &b).unwrap() - 0.5).abs() < 1e-15);

    assert_eq!(relative_entropy(&a, &a).unwrap(), 0.0);
    let oracle = 0.25 * 0.5f64.ln() + 0.75 * 1.5f64.ln();
    let ent = relative_entropy(&b, &a).unwrap();
    assert!((ent - oracle).abs() < 1e-15);
    assert!((ent - 0.13081).abs() < 1e-5);
    assert_eq!(relative_entropy(&c, &a).unwrap(), f64::INFINITY);

    let p = pinsker_check(&a, &a).unwrap();
    assert!(p.holds && p.tv == 0.0 && p.ent == 0.0);
    let p = pinsker_check(&a, &b).unwrap();
    assert!(p.holds);
    assert!((p.tv * p.tv - 0.25).abs() < 1e-15 && (2.0 * p.ent - 0.26162).abs() < 1e-4);
    let p = pinsker_check(&a, &c).unwrap();
    assert!(p.holds && p.ent.is_infinite());
}

#[test]
fn negative_zero_is_the_same_atom() {
    let a = measure(&[(0.0, 0.0)], &[1.0]);
    let b = measure(&[(-0.0, 0.0)], &[1.0]);
    assert_eq!(total_variation(&a, &b).unwrap(), 0.0);
}

#[test]
fn csv_round_trip() {
    let a = measure(&[(0.1, -2.5), (1e-7, 3.0)], &[0.25, 0.75]);
    let mut buf = Vec::new();
    a.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("weight,x1_1,x2_1\n"));
    let back = EmpiricalMeasure::read_csv(std::io::Cursor::new(buf)).unwrap();
    assert_eq!(a, back);
}

#[test]
fn measure_validation() {
    assert!(EmpiricalMeasure::new(1, 1, vec![0.0, 0.0], vec![0.9]).is_err());
    assert!(EmpiricalMeasure::new(1, 1, vec![0.0, 0.0, 1.0, 1.0], vec![1.5, -0.5]).is_err());
    assert!(EmpiricalMeasure::new(1, 1, vec![0.0, f64::NAN], vec![1.0]).is_err());
    assert!(EmpiricalMeasure::new(1, 1, vec![0.0], vec![1.0]).is_err());
}

#[test]
fn moderately_large_instance_is_certified() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let n = 300;
    let a: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() + 0.5).collect();
    let mu = EmpiricalMeasure::uniform(1, 1, a).unwrap();
    let nu = EmpiricalMeasure::uniform(1, 1, b).unwrap();
    for cost in [
        CostSpec::Wk { k: 2.0 },
        rho_cost(0.5, DiniModulus::log_power(1.0).unwrap()),
    ] {
        let sol = wasserstein(&mu, &nu, &cost).unwrap();
        assert!(sol.dual.gap <= 1e-8, "gap {}", sol.dual.gap);
        assert!(sol.dual.gap >= -1e-8);
        assert!(sol.plan.marginal_error(mu.weights(), nu.weights()) <= 1e-9);
    }
}

fn arb_uniform(n: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec(-3.0f64..3.0, 2 * n).prop_map(|c| EmpiricalMeasure::uniform(1, 1, c).unwrap())
}

fn arb_measure(max: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, 2 * n),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(|(c, w)| {
                let total: f64 = w.iter().sum();
                let mut w: Vec<f64> = w.iter().map(|x| x / total).collect();
                let head: f64 = w[1..].iter().sum();
                w[0] = 1.0 - head;
                EmpiricalMeasure::new(1, 1, c, w).unwrap()
            })
    })
}

fn arb_cost() -> impl Strategy<Value = CostSpec> {
    prop_oneof![
        (1.0f64..3.0).prop_map(|k| CostSpec::Wk { k }),
        (0.2f64..=1.0, 0.2f64..=1.0).prop_map(|(beta, kappa)| rho_cost(beta, DiniModulus::power(kappa).unwrap())),
        (0.2f64..=1.0, 0.6f64..2.0).prop_map(|(beta, p)| rho_cost(beta, DiniModulus::log_power(p).unwrap())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplex_matches_permutation_oracle(n in 1usize..=6, seed in 0u64..u64::MAX, cost in arb_cost()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..2 * n).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>();
        let mu = EmpiricalMeasure::uniform(1, 1, draw()).unwrap();
        let nu = EmpiricalMeasure::uniform(1, 1, draw()).unwrap();
        let lp = wasserstein(&mu, &nu, &cost).unwrap();
        let brute = wasserstein_bruteforce(&mu, &nu, &cost).unwrap();
        prop_assert!((lp.value - brute).abs() <= 1e-9 * brute.max(1.0), "{} vs {}", lp.value, brute);
    }

    #[test]
    fn duality_gap_and_marginals(mu in arb_measure(12), nu in arb_measure(12), cost in arb_cost()) {
        let sol = wasserstein(&mu, &nu, &cost).unwrap();
        prop_assert!(sol.dual.gap.abs() <= 1e-8, "gap {}", sol.dual.gap);
        prop_assert!(sol.plan.marginal_error(mu.weights(), nu.weights()) <= 1e-9);
        prop_assert!(sol.plan.mass.iter().all(|m| *m >= 0.0));
        let total: f64 = sol.plan.mass.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn metric_axioms(a in arb_measure(6), b in arb_measure(6), c in arb_measure(6), cost in arb_cost()) {
        let ab = wasserstein(&a, &b, &cost).unwrap().value;
        let ba = wasserstein(&b, &a, &cost).unwrap().value;
        let bc = wasserstein(&b, &c, &cost).unwrap().value;
        let ac = wasserstein(&a, &c, &cost).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn rho_triangle(p in prop::collection::vec(-5.0f64..5.0, 6), beta in 0.1f64..=1.0, kappa in 0.1f64..=1.0) {
        let m = DiniModulus::power(kappa).unwrap();
        let x = pt(p[0], p[1]);
        let y = pt(p[2], p[3]);
        let z = pt(p[4], p[5]);
        let xz = rho_beta_alpha(&x, &z, beta, &m).unwrap();
        let xy = rho_beta_alpha(&x, &y, beta, &m).unwrap();
        let yz = rho_beta_alpha(&y, &z, beta, &m).unwrap();
        prop_assert!(xz <= xy + yz + 1e-12);
        prop_assert_eq!(xy, rho_beta_alpha(&y, &x, beta, &m).unwrap());
    }

    #[test]
    fn transport_below_weighted_variation(mu in arb_measure(6), nu in arb_measure(6), beta in 0.2f64..=1.0, kappa in 0.2f64..=1.0) {
        let modulus = DiniModulus::power(kappa).unwrap();
        let a1 = modulus.at_one();
        let w = wasserstein(&mu, &nu, &rho_cost(beta, modulus)).unwrap().value;
        let wv = weighted_variation(&mu, &nu, 1.0).unwrap();
        prop_assert!(0.5 / (a1 + 1.0) * w <= wv + 1e-12);
    }

    #[test]
    fn variation_ordering_and_pinsker(mu in arb_measure(5), nu in arb_measure(5), k in 1.0f64..3.0) {
        let tv = total_variation(&mu, &nu).unwrap();
        prop_assert!(tv <= weighted_variation(&mu, &nu, k).unwrap() + 1e-15);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&tv));
        prop_assert!(pinsker_check(&mu, &nu).unwrap().holds);
    }

    #[test]
    fn shared_support_pinsker(w in prop::collection::vec(0.01f64..1.0, 8), v in prop::collection::vec(0.01f64..1.0, 8)) {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, 0.0)).collect();
        let norm = |x: &[f64]| {
            let t: f64 = x.iter().sum();
            let mut y: Vec<f64> = x.iter().map(|a| a / t).collect();
            let head: f64 = y[1..].iter().sum();
            y[0] = 1.0 - head;
            y
        };
        let mu = measure(&pts, &norm(&w));
        let nu = measure(&pts, &norm(&v));
        let r = pinsker_check(&mu, &nu).unwrap();
        prop_assert!(r.ent.is_finite());
        prop_assert!(r.holds);
    }

    #[test]
    fn uniform_instances_certify(mu in arb_uniform(7), nu in arb_uniform(7)) {
        let sol = wasserstein(&mu, &nu, &CostSpec::Wk { k: 1.0 }).unwrap();
        prop_assert!(sol.dual.gap.abs() <= 1e-8);
    }
}
