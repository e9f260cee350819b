use mvharnack::coupling::{bismut_gradient, fd_gradient};
use mvharnack::harnack::{
    stability_study, CheckKind, HarnackReport, HarnackSettings, HarnackSetup, StabilitySettings, StabilityTable,
    TestFunction,
};
use mvharnack::metrics::{pinsker_check, relative_entropy, total_variation, wasserstein, weighted_variation};
use mvharnack::model::{validate_assumptions, AssumptionReport, ProbeConfig};
use mvharnack::simulate::{flow_moment_report, path_moment_report, simulate_mckean_vlasov};
use mvharnack::wellposed::{picard_solve, GeneralModel, PicardSettings};
use mvharnack::{
    CostSpec, DriftSpec, Error, HamiltonianModel, InitialLaw, Mat, Result, RngPolicy, SplitState, TimeGrid,
};

use crate::config::{LoadedConfig, StudyCheck};
use crate::output::{num, vec_cell, Report};

fn missing(section: &str) -> Error {
    Error::Config(format!("the config has no [checks.{section}] section"))
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn validation(cfg: &LoadedConfig) -> Result<AssumptionReport> {
    let probe = cfg.config.checks.validate.unwrap_or(ProbeConfig {
        seed: cfg.config.simulation.seed,
        ..ProbeConfig::default()
    });
    validate_assumptions(&cfg.model, &probe)
}

pub fn validate(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let assumptions = validation(cfg)?;
    let rows: Vec<Vec<String>> = assumptions
        .checks
        .iter()
        .map(|c| vec![c.name.to_string(), num(c.value), num(c.threshold), c.passed.to_string()])
        .collect();
    report.table("validate_checks.csv", &["check", "value", "threshold", "passed"], &rows)?;
    for c in &assumptions.checks {
        report.check(
            format!("validate.{}", c.name),
            c.passed,
            format!("value {} vs threshold {}", c.value, c.threshold),
        );
    }
    report.record("assumptions", &assumptions);
    Ok(())
}

pub fn simulate(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let check = cfg.config.checks.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    let sim = &cfg.config.simulation;
    let model = &cfg.model;
    let rng = cfg.rng();
    let grid = TimeGrid::new(sim.horizon, sim.dt)?;
    let init = cfg.law(&check.initial, 0)?;
    let flow = simulate_mckean_vlasov(model, &InitialLaw::Measure(init), sim.n_particles, grid, &rng)?;
    report.file("simulate_flow.csv", &csv_bytes(|b| flow.write_csv(b))?)?;

    let moments = flow_moment_report(&flow, check.k)?;
    let rows: Vec<Vec<String>> = moments
        .times
        .iter()
        .zip(&moments.moments)
        .map(|(t, m)| vec![num(*t), num(*m)])
        .collect();
    report.table("simulate_flow_moments.csv", &["t", "moment"], &rows)?;
    report.check(
        "simulate.flow_moments",
        moments.growth_constant.is_finite(),
        format!(
            "sup moment {} with growth constant {}",
            moments.sup_moment, moments.growth_constant
        ),
    );

    let steps: Vec<usize> = check.report_times.iter().map(|t| grid.index_at(*t)).collect();
    let x = SplitState::from_flat(model.m, &check.x);
    let paths = path_moment_report(model, &flow, &x, check.p, &steps, sim.n_paths, grid, &rng)?;
    let rows: Vec<Vec<String>> = (0..paths.times.len())
        .map(|i| {
            vec![
                num(paths.times[i]),
                num(paths.first_deviation[i].value),
                num(paths.first_deviation[i].stderr),
                num(paths.second_sup[i].value),
                num(paths.second_sup[i].stderr),
            ]
        })
        .collect();
    report.table(
        "simulate_path_moments.csv",
        &["t", "first_deviation", "first_stderr", "second_sup", "second_stderr"],
        &rows,
    )?;
    let target = 1.5 * check.p;
    let slope = paths.first_fit.slope;
    report.check(
        "simulate.first_component_scaling",
        (slope - target).abs() <= 0.15 * target / 3.0,
        format!(
            "log-log slope {slope} (target {target}), R² {}",
            paths.first_fit.r_squared
        ),
    );
    let pts: Vec<(f64, f64)> = paths
        .times
        .iter()
        .zip(&paths.first_deviation)
        .map(|(t, e)| (t.ln(), e.value.ln()))
        .collect();
    report.series("first_deviation_loglog", "log_t", "log_moment", &pts)?;
    report.record("flow_moments", &moments);
    report.record("path_moments", &paths);
    Ok(())
}

pub fn picard(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let check = cfg.config.checks.picard.as_ref().ok_or_else(|| missing("picard"))?;
    let sim = &cfg.config.simulation;
    let state_noise = check
        .state_noise
        .clone()
        .or_else(|| cfg.config.model.state_noise.clone());
    let model = GeneralModel::new(cfg.model.clone(), state_noise)?;
    let gamma0 = cfg.law(&check.initial, 0)?;
    let settings = PicardSettings {
        k: check.k,
        lambda: check.lambda,
        tol: check.tol,
        max_iter: check.max_iter,
        n_particles: sim.n_particles,
        dt: sim.dt,
    };
    let outcome = match picard_solve(&model, &gamma0, &settings, &cfg.rng()) {
        Ok(outcome) => outcome,
        Err(e @ Error::NonContraction { .. }) => {
            report.check("picard.contraction", false, e.to_string());
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    let diag = &outcome.diagnostics;
    report.file("picard_diagnostics.csv", &csv_bytes(|b| diag.write_csv(b))?)?;
    report.file(
        "picard_terminal.csv",
        &csv_bytes(|b| outcome.flow.terminal().write_csv(b))?,
    )?;
    let distances = diag.distances();
    report.check(
        "picard.converged",
        diag.converged,
        format!(
            "{} iterates, last distance {}, lambda {}",
            diag.iterations(),
            distances.last().copied().unwrap_or(0.0),
            diag.lambda
        ),
    );
    let sweep: Vec<(f64, f64)> = check
        .lambda_sweep
        .iter()
        .map(|mult| (mult * diag.lambda, diag.mean_ratio_at(mult * diag.lambda)))
        .collect();
    let rows: Vec<Vec<String>> = sweep.iter().map(|(l, r)| vec![num(*l), num(*r)]).collect();
    report.table("picard_lambda_sweep.csv", &["lambda", "mean_ratio"], &rows)?;
    let informative = sweep.iter().all(|(_, r)| r.is_finite() && *r > 0.0);
    if informative {
        let decreasing = sweep.windows(2).all(|w| w[1].1 < w[0].1);
        report.check(
            "picard.ratio_vs_lambda",
            decreasing,
            format!(
                "mean contraction ratios {:?}",
                sweep.iter().map(|s| s.1).collect::<Vec<_>>()
            ),
        );
    } else {
        report.check(
            "picard.ratio_vs_lambda",
            true,
            "fixed point reached before ratios exist",
        );
    }
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .map(|(i, d)| ((i + 1) as f64, *d))
        .collect();
    report.series("picard_distances", "iterate", "weighted_distance", &pts)?;
    report.record("diagnostics", diag);
    report.record("terminal_mean", outcome.flow.terminal().mean());
    Ok(())
}

/// `exp(K t) h` with `K = [[0, M], [A1, A2]]`, the exact gradient of `E X_t` for affine drifts.
fn linear_gradient_oracle(model: &HamiltonianModel, h: &[f64], t: f64) -> Option<Vec<f64>> {
    let (m, d) = (model.m, model.d);
    let zero_a = (Mat::zeros(d, m), Mat::zeros(d, d));
    let (a1, a2) = match &model.drift {
        DriftSpec::Zero => (&zero_a.0, &zero_a.1),
        DriftSpec::LinearMeanField { a1, a2, .. } => (a1, a2),
        _ => return None,
    };
    let rhs = |z: &[f64]| -> Vec<f64> {
        let mut out = model.mmat.mul_vec(&z[m..]);
        let mut second = a1.mul_vec(&z[..m]);
        a2.mul_vec_add(&z[m..], &mut second);
        out.extend(second);
        out
    };
    let n = 2000;
    let dt = t / n as f64;
    let mut z = h.to_vec();
    let axpy = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
    for _ in 0..n {
        let k1 = rhs(&z);
        let k2 = rhs(&axpy(&z, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&z, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&z, &k3, dt));
        for i in 0..z.len() {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Some(z)
}

pub fn bismut(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let check = cfg.config.checks.bismut.as_ref().ok_or_else(|| missing("bismut"))?;
    let sim = &cfg.config.simulation;
    let model = &cfg.model;
    let rng = cfg.rng();
    let grid = TimeGrid::new(check.t, sim.dt)?;
    let init = cfg.law(&check.initial, 0)?;
    let flow = simulate_mckean_vlasov(model, &InitialLaw::Measure(init), sim.n_particles, grid, &rng)?;
    let x = SplitState::from_flat(model.m, &check.x);
    let mut rows = Vec::new();
    for (i, case) in check.cases.iter().enumerate() {
        case.f.check(model.dim())?;
        let h = SplitState::from_flat(model.m, &case.h);
        let f = case.f.on_states();
        let case_rng = rng.derive(i as u64);
        let b = bismut_gradient(model, &flow, &x, &f, &h, sim.n_paths, grid, &case_rng)?;
        let fd = fd_gradient(model, &flow, &x, &f, &h, check.fd_eps, sim.n_paths, grid, &case_rng)?;
        let oracle = match &case.f {
            TestFunction::Constant { .. } => Some(0.0),
            TestFunction::Coordinate { index } => linear_gradient_oracle(model, &case.h, check.t).map(|g| g[*index]),
            _ => None,
        };
        let slack = 5.0 * sim.dt;
        let fd_ok = (b.value - fd.value).abs() <= 3.0 * b.stderr.hypot(fd.stderr) + slack;
        let oracle_ok = oracle.is_none_or(|o| (b.value - o).abs() <= 3.0 * b.stderr + slack);
        let pass = fd_ok && oracle_ok;
        report.check(
            format!("bismut.{}.h=[{}]", case.f.describe(), vec_cell(&case.h)),
            pass,
            format!(
                "bismut {} ± {}, fd {} ± {}, oracle {}",
                b.value,
                b.stderr,
                fd.value,
                fd.stderr,
                oracle.map_or("n/a".to_string(), num)
            ),
        );
        rows.push(vec![
            case.f.describe(),
            vec_cell(&case.h),
            num(b.value),
            num(b.stderr),
            num(fd.value),
            num(fd.stderr),
            oracle.map_or(String::new(), num),
            pass.to_string(),
        ]);
    }
    report.table(
        "bismut_gradients.csv",
        &["f", "h", "bismut", "bismut_stderr", "fd", "fd_stderr", "oracle", "pass"],
        &rows,
    )?;
    Ok(())
}

fn harnack_rows(orientation: &str, r: &HarnackReport, rows: &mut Vec<Vec<String>>, pairs: &mut Vec<Vec<String>>) {
    let p = match r.kind {
        CheckKind::Power { p } => num(p),
        CheckKind::Log => String::new(),
    };
    rows.push(vec![
        orientation.to_string(),
        r.kind.label().to_string(),
        r.f.clone(),
        p.clone(),
        num(r.lhs.value),
        num(r.lhs.stderr),
        num(r.rhs.value),
        num(r.rhs.stderr),
        num(r.slack),
        r.pass.to_string(),
        r.identity_holds.to_string(),
        r.degenerate.to_string(),
        r.rhs_factor.map_or(String::new(), num),
        r.shape_constant.map_or(String::new(), num),
    ]);
    for (i, pair) in r.pairs.iter().enumerate() {
        pairs.push(vec![
            orientation.to_string(),
            r.kind.label().to_string(),
            r.f.clone(),
            p.clone(),
            i.to_string(),
            vec_cell(&pair.x),
            vec_cell(&pair.y),
            num(pair.mass),
            num(pair.lhs.value),
            num(pair.rhs.value),
            num(pair.slack),
            pair.pass.to_string(),
            pair.identity_holds.to_string(),
            num(pair.effective_sample_size),
        ]);
    }
}

fn judge(report: &mut Report, name: String, r: &HarnackReport) {
    let identity = if matches!(r.kind, CheckKind::Log) {
        "young"
    } else {
        "holder"
    };
    report.check(
        format!("{name}.{identity}"),
        r.identity_holds,
        "empirical identity on every pair".to_string(),
    );
    report.check(
        name.clone(),
        r.pass,
        format!(
            "lhs {} ± {}, rhs {} ± {}, slack {}",
            r.lhs.value, r.lhs.stderr, r.rhs.value, r.rhs.stderr, r.slack
        ),
    );
    if r.degenerate {
        report.warn(format!("{name}.weights"), "effective sample size below 10 on some pair");
    }
}

pub fn harnack(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let check = cfg.config.checks.harnack.as_ref().ok_or_else(|| missing("harnack"))?;
    let sim = &cfg.config.simulation;
    let model = &cfg.model;
    let gamma = cfg.law(&check.gamma, 0)?;
    let gamma_tilde = cfg.law(&check.gamma_tilde, 1)?;
    for f in &check.functions {
        f.check(model.dim())?;
        if f.lower_bound() < 0.0 {
            return Err(Error::Config(format!("{} takes negative values", f.describe())));
        }
    }
    let settings = HarnackSettings {
        t: check.t,
        dt: sim.dt,
        n_particles: sim.n_particles,
        n_paths: sim.n_paths,
        max_pairs: check.max_pairs,
    };
    let mut rows = Vec::new();
    let mut pair_rows = Vec::new();
    let mut tv_rows = Vec::new();
    let mut nested_rows = Vec::new();
    for (orientation, a, b) in [("forward", &gamma, &gamma_tilde), ("swapped", &gamma_tilde, &gamma)] {
        let setup = HarnackSetup::new(model, a, b, &settings, &cfg.rng())?;
        for (fi, f) in check.functions.iter().enumerate() {
            if f.lower_bound() > 0.0 {
                let r = setup.log_harnack(f)?;
                judge(report, format!("harnack.{orientation}.log.{}", f.describe()), &r);
                harnack_rows(orientation, &r, &mut rows, &mut pair_rows);
            }
            let mut factors = Vec::new();
            for &p in &check.powers {
                let r = setup.power_harnack(f, p)?;
                judge(
                    report,
                    format!("harnack.{orientation}.power.p={p}.{}", f.describe()),
                    &r,
                );
                factors.push((p, r.rhs_factor.unwrap_or(1.0)));
                harnack_rows(orientation, &r, &mut rows, &mut pair_rows);
            }
            if orientation == "forward" {
                report.series(&format!("power_factor_f{fi}"), "p", "rhs_factor", &factors)?;
            }
        }
        let tv = setup.tv_entropy(check.bins, 3)?;
        report.check(
            format!("harnack.{orientation}.tv_entropy"),
            tv.pass,
            format!(
                "tv² {} vs 2·entropy {} (σ {})",
                tv.tv * tv.tv,
                2.0 * tv.entropy_upper.value,
                tv.sigma
            ),
        );
        report.check(
            format!("harnack.{orientation}.tv_refinement"),
            tv.nested_monotone,
            format!("nested tv {:?}", tv.nested.iter().map(|n| n.1).collect::<Vec<_>>()),
        );
        if tv.degenerate {
            report.warn(
                format!("harnack.{orientation}.tv_entropy.weights"),
                "effective sample size below 10",
            );
        }
        tv_rows.push(vec![
            orientation.to_string(),
            tv.bins.to_string(),
            num(tv.tv),
            num(tv.entropy_upper.value),
            num(tv.entropy_upper.stderr),
            num(tv.sigma),
            num(tv.slack),
            tv.pass.to_string(),
            tv.shape_constant.map_or(String::new(), num),
        ]);
        for (bins, value) in &tv.nested {
            nested_rows.push(vec![orientation.to_string(), bins.to_string(), num(*value)]);
        }
    }
    report.table(
        "harnack_reports.csv",
        &[
            "orientation",
            "kind",
            "f",
            "p",
            "lhs",
            "lhs_stderr",
            "rhs",
            "rhs_stderr",
            "slack",
            "pass",
            "identity",
            "degenerate",
            "rhs_factor",
            "shape_constant",
        ],
        &rows,
    )?;
    report.table(
        "harnack_pairs.csv",
        &[
            "orientation",
            "kind",
            "f",
            "p",
            "pair",
            "x",
            "y",
            "mass",
            "lhs",
            "rhs",
            "slack",
            "pass",
            "identity",
            "ess",
        ],
        &pair_rows,
    )?;
    report.table(
        "harnack_tv.csv",
        &[
            "orientation",
            "bins",
            "tv",
            "entropy_upper",
            "entropy_stderr",
            "sigma",
            "slack",
            "pass",
            "shape_constant",
        ],
        &tv_rows,
    )?;
    report.table(
        "harnack_tv_nested.csv",
        &["orientation", "bins_per_dim", "tv"],
        &nested_rows,
    )?;
    Ok(())
}

pub fn metrics(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let check = cfg.config.checks.metrics.as_ref().ok_or_else(|| missing("metrics"))?;
    let model = &cfg.model;
    let mu = cfg.law(&check.mu, 0)?;
    let nu = cfg.law(&check.nu, 1)?;
    let costs = [
        ("W1", CostSpec::Wk { k: 1.0 }),
        ("W2", CostSpec::Wk { k: 2.0 }),
        (
            "W_beta_alpha",
            CostSpec::RhoBetaAlpha {
                beta: model.beta,
                modulus: model.modulus.clone(),
            },
        ),
    ];
    let mut rows = Vec::new();
    for (name, cost) in &costs {
        let sol = wasserstein(&mu, &nu, cost)?;
        report.check(
            format!("metrics.{name}.dual_gap"),
            sol.dual.gap.abs() <= 1e-8,
            format!("value {}, dual gap {:e}", sol.value, sol.dual.gap),
        );
        rows.push(vec![name.to_string(), num(sol.value), num(sol.dual.gap)]);
    }
    let tv = total_variation(&mu, &nu)?;
    let wv = weighted_variation(&mu, &nu, check.k)?;
    let ent = relative_entropy(&nu, &mu)?;
    let pinsker = pinsker_check(&mu, &nu)?;
    rows.push(vec!["total_variation".into(), num(tv), String::new()]);
    rows.push(vec![format!("weighted_variation_k{}", check.k), num(wv), String::new()]);
    rows.push(vec!["relative_entropy_nu_mu".into(), num(ent), String::new()]);
    report.check(
        "metrics.pinsker",
        pinsker.holds,
        format!("tv² {} vs 2·entropy {}", pinsker.tv * pinsker.tv, 2.0 * pinsker.ent),
    );
    report.table("metrics.csv", &["metric", "value", "dual_gap"], &rows)?;
    report.record("pinsker", pinsker);
    Ok(())
}

fn study_settings(cfg: &LoadedConfig, check: &StudyCheck) -> StabilitySettings {
    StabilitySettings {
        times: check.times.clone(),
        dt: check.dt.unwrap_or(cfg.config.simulation.dt),
        n_particles: check.n_particles.unwrap_or(cfg.config.simulation.n_particles),
        n_paths: check.n_paths.unwrap_or(cfg.config.simulation.n_paths),
        replicates: check.replicates,
    }
}

fn study_rows(seed: u64, table: &StabilityTable, rows: &mut Vec<Vec<String>>) {
    for r in &table.rows {
        rows.push(vec![
            seed.to_string(),
            num(r.t),
            num(r.w2),
            num(r.w2_ratio),
            num(r.wba_cloud),
            num(r.wba_cloud_ratio),
            num(r.wba_reweighted.value),
            num(r.wba_reweighted.stderr),
            num(r.wba_reweighted_ratio),
            num(r.shape),
        ]);
    }
}

pub fn study(cfg: &LoadedConfig, report: &mut Report) -> Result<()> {
    let check = cfg.config.checks.study.as_ref().ok_or_else(|| missing("study"))?;
    let settings = study_settings(cfg, check);
    let gamma = cfg.law(&check.gamma, 0)?;
    let gamma_tilde = cfg.law(&check.gamma_tilde, 1)?;
    let base = cfg.config.simulation.seed;
    let mut rows = Vec::new();
    let mut sups = Vec::new();
    let mut first: Option<StabilityTable> = None;
    for &offset in &check.seeds {
        let rng = RngPolicy::new(base.wrapping_add(offset));
        let table = stability_study(&cfg.model, &gamma, &gamma_tilde, &settings, &rng)?;
        study_rows(offset, &table, &mut rows);
        sups.push(table.sup_w2_ratio);
        first.get_or_insert(table);
    }
    report.table(
        "study_table.csv",
        &[
            "seed_offset",
            "t",
            "w2",
            "w2_ratio",
            "wba_cloud",
            "wba_cloud_ratio",
            "wba_reweighted",
            "wba_reweighted_stderr",
            "wba_reweighted_ratio",
            "shape",
        ],
        &rows,
    )?;
    let Some(table) = first else {
        return Err(Error::Config("study needs at least one seed".into()));
    };
    let mean = sups.iter().sum::<f64>() / sups.len() as f64;
    let spread = sups.iter().map(|s| (s / mean - 1.0).abs()).fold(0.0, f64::max);
    report.check(
        "study.w2_ratio_bounded",
        mean.is_finite() && (spread <= check.max_seed_spread || mean == 0.0),
        format!("sup W₂ ratio per seed {sups:?}, relative spread {spread}"),
    );
    report.check(
        "study.wba_shape_fit",
        table.fit.r_squared >= check.min_r_squared,
        format!(
            "ratio = {} + {}·shape, R² {}",
            table.fit.intercept, table.fit.slope, table.fit.r_squared
        ),
    );
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.shape, r.wba_reweighted_ratio)).collect();
    report.series("wba_ratio_vs_shape", "shape", "wba_ratio", &pts)?;
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.t, r.w2_ratio)).collect();
    report.series("w2_ratio_vs_t", "t", "w2_ratio", &pts)?;
    report.record("w2_initial", table.w2_initial);
    report.record("fit", table.fit);
    Ok(())
}
