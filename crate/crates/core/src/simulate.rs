//! Euler–Maruyama for the interacting particle system and the frozen-flow SDE.
//!
//! All schemes are left-point: drift, `σ` and the law are read at `t_j` and
//! applied over `[t_j, t_{j+1})`. The degenerate component takes no noise,
//! `x1 += M x2 dt` with the pre-step `x2`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::metrics::{EmpiricalMeasure, SplitState};
use crate::model::{HamiltonianModel, MeasureSummary, StateModulation};
use crate::rng::{Purpose, RngPolicy};
use crate::stats::{log_log_fit, norm, Estimate, LinearFit};

/// Uniform grid `t_j = T j / n` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// `dt` must divide `horizon` (within 1e-9) and be at most `horizon / 10`.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && dt > 0.0) {
            return Err(Error::Domain(format!("horizon {horizon} and dt {dt} must be positive")));
        }
        if dt > horizon / 10.0 + 1e-15 {
            return Err(Error::Domain(format!("dt = {dt} exceeds horizon / 10")));
        }
        let n = (horizon / dt).round();
        if (n * dt - horizon).abs() > 1e-9 {
            return Err(Error::Domain(format!("dt = {dt} does not divide horizon {horizon}")));
        }
        Ok(Self {
            horizon,
            n_steps: n as usize,
        })
    }

    pub fn with_steps(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || n_steps == 0 {
            return Err(Error::Domain(
                "grid needs a positive horizon and at least one step".into(),
            ));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.horizon
        } else {
            self.horizon * j as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.time(j)).collect()
    }

    /// Largest `j` with `t_j <= t`.
    pub fn index_at(&self, t: f64) -> usize {
        let j = (t / self.dt() + 1e-9).floor();
        (j.max(0.0) as usize).min(self.n_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowTag {
    PicardIterate(usize),
    SelfConsistent,
    Frozen,
}

/// `t ↦ μ_t` sampled on a grid; a single cloud means a time-constant flow.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureFlow {
    pub grid: TimeGrid,
    clouds: Vec<EmpiricalMeasure>,
    pub tag: FlowTag,
}

impl MeasureFlow {
    pub fn new(grid: TimeGrid, clouds: Vec<EmpiricalMeasure>, tag: FlowTag) -> Result<Self> {
        if clouds.len() != grid.n_steps + 1 {
            return Err(Error::Dimension {
                context: "flow clouds",
                expected: grid.n_steps + 1,
                found: clouds.len(),
            });
        }
        let n = clouds[0].len();
        if clouds
            .iter()
            .any(|c| c.len() != n || c.m() != clouds[0].m() || c.d() != clouds[0].d())
        {
            return Err(Error::InvalidMeasure(
                "flow clouds must share atom count and dimensions".into(),
            ));
        }
        Ok(Self { grid, clouds, tag })
    }

    pub fn constant(grid: TimeGrid, measure: EmpiricalMeasure) -> Self {
        Self {
            grid,
            clouds: vec![measure],
            tag: FlowTag::Frozen,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.clouds.len() == 1
    }

    pub fn at_step(&self, j: usize) -> &EmpiricalMeasure {
        if self.is_constant() {
            &self.clouds[0]
        } else {
            &self.clouds[j]
        }
    }

    /// Previous-point lookup.
    pub fn at_time(&self, t: f64) -> &EmpiricalMeasure {
        self.at_step(self.grid.index_at(t))
    }

    pub fn initial(&self) -> &EmpiricalMeasure {
        &self.clouds[0]
    }

    pub fn terminal(&self) -> &EmpiricalMeasure {
        self.clouds.last().expect("non-empty flow")
    }

    pub fn clouds(&self) -> &[EmpiricalMeasure] {
        &self.clouds
    }

    pub fn n_atoms(&self) -> usize {
        self.clouds[0].len()
    }

    /// Long format: `step,t,atom,weight,x1_*,x2_*`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let first = &self.clouds[0];
        let header = EmpiricalMeasure::csv_header(first.m(), first.d());
        writeln!(out, "step,t,atom,{header}")?;
        for j in 0..=self.grid.n_steps {
            if self.is_constant() && j > 0 {
                break;
            }
            let cloud = self.at_step(j);
            for (i, (x, w)) in cloud.atoms().enumerate() {
                write!(out, "{j},{:e},{i},{w:e}", self.grid.time(j))?;
                for v in x {
                    write!(out, ",{v:e}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Initial law of the particle system.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    /// Atoms are used in order when the count matches and weights are uniform;
    /// otherwise particles are drawn i.i.d. from the weights.
    Measure(EmpiricalMeasure),
    Gaussian {
        mean: Vec<f64>,
        std: f64,
    },
}

impl InitialLaw {
    pub fn sample(&self, n: usize, rng: &RngPolicy) -> Result<Vec<f64>> {
        match self {
            InitialLaw::Measure(mu) => {
                let uniform = 1.0 / mu.len() as f64;
                if mu.len() == n && mu.weights().iter().all(|w| (w - uniform).abs() <= 1e-15) {
                    return Ok(mu.coords().to_vec());
                }
                let mut cdf = Vec::with_capacity(mu.len());
                let mut acc = 0.0;
                for w in mu.weights() {
                    acc += w;
                    cdf.push(acc);
                }
                let mut coords = Vec::with_capacity(n * mu.dim());
                for i in 0..n {
                    let u: f64 = rng.stream(Purpose::Initial, i as u64).random::<f64>() * acc;
                    let k = cdf.partition_point(|c| *c <= u).min(mu.len() - 1);
                    coords.extend_from_slice(mu.atom(k));
                }
                Ok(coords)
            }
            InitialLaw::Gaussian { mean, std } => {
                if !(*std >= 0.0) {
                    return Err(Error::Domain(format!("initial std {std} is negative")));
                }
                let mut coords = Vec::with_capacity(n * mean.len());
                for i in 0..n {
                    let mut r = rng.stream(Purpose::Initial, i as u64);
                    for mu in mean {
                        coords.push(mu + std * r.sample::<f64, _>(StandardNormal));
                    }
                }
                Ok(coords)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Measure(mu) => mu.dim(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }
}

/// Per-step coefficients of a frozen-flow simulation.
pub(crate) struct Dynamics<'a> {
    pub model: &'a HamiltonianModel,
    pub grid: TimeGrid,
    summaries: Vec<MeasureSummary>,
    summary_index: Vec<usize>,
    sigmas: Vec<Mat>,
    sigma_invs: Option<Vec<Mat>>,
    modulation: Option<StateModulation>,
}

impl<'a> Dynamics<'a> {
    pub fn new(model: &'a HamiltonianModel, flow: &MeasureFlow, grid: TimeGrid) -> Result<Self> {
        let mut summaries = Vec::new();
        let mut summary_index = Vec::with_capacity(grid.n_steps);
        let mut last = usize::MAX;
        for j in 0..grid.n_steps {
            let k = if flow.is_constant() {
                0
            } else {
                flow.grid.index_at(grid.time(j))
            };
            if k != last {
                summaries.push(model.summarize(flow.at_step(k)));
                last = k;
            }
            summary_index.push(summaries.len() - 1);
        }
        let first = flow.initial();
        if first.m() != model.m || first.d() != model.d {
            return Err(Error::Dimension {
                context: "flow dimension",
                expected: model.dim(),
                found: first.dim(),
            });
        }
        Ok(Self {
            model,
            grid,
            summaries,
            summary_index,
            sigmas: sigma_table(model, &grid),
            sigma_invs: None,
            modulation: None,
        })
    }

    pub fn with_inverses(mut self) -> Result<Self> {
        let invs = self
            .sigmas
            .iter()
            .map(|s| s.inverse("sigma"))
            .collect::<Result<Vec<_>>>()?;
        self.sigma_invs = Some(invs);
        Ok(self)
    }

    pub fn with_modulation(mut self, modulation: Option<StateModulation>) -> Self {
        self.modulation = modulation;
        self
    }

    pub fn summary(&self, j: usize) -> &MeasureSummary {
        &self.summaries[self.summary_index[j]]
    }

    pub fn sigma(&self, j: usize) -> &Mat {
        if self.sigmas.len() == 1 {
            &self.sigmas[0]
        } else {
            &self.sigmas[j]
        }
    }

    pub fn sigma_inv(&self, j: usize) -> &Mat {
        let invs = self.sigma_invs.as_ref().expect("inverses requested");
        if invs.len() == 1 {
            &invs[0]
        } else {
            &invs[j]
        }
    }

    /// Runs one path from `x0`; `observe(j, x_j, dW_j)` sees the left-point state.
    pub fn run_path<F>(&self, x0: &[f64], rng: &mut ChaCha8Rng, mut observe: F) -> Result<Vec<f64>>
    where
        F: FnMut(usize, &[f64], &[f64]),
    {
        let d = self.model.d;
        let sqrt_dt = self.grid.dt().sqrt();
        let mut x = x0.to_vec();
        let mut dw = vec![0.0; d];
        let mut scratch = StepScratch::new(self.model);
        for j in 0..self.grid.n_steps {
            for w in dw.iter_mut() {
                *w = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            }
            observe(j, &x, &dw);
            step(
                self.model,
                self.summary(j),
                self.sigma(j),
                self.modulation.as_ref(),
                self.grid.dt(),
                &mut x,
                &dw,
                &mut scratch,
            );
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: j + 1,
                    time: self.grid.time(j + 1),
                });
            }
        }
        Ok(x)
    }
}

fn sigma_table(model: &HamiltonianModel, grid: &TimeGrid) -> Vec<Mat> {
    if model.sigma.is_constant() {
        vec![model.sigma_at(0.0)]
    } else {
        (0..grid.n_steps).map(|j| model.sigma_at(grid.time(j))).collect()
    }
}

pub(crate) struct StepScratch {
    drift: Vec<f64>,
    noise: Vec<f64>,
    velocity: Vec<f64>,
}

impl StepScratch {
    pub fn new(model: &HamiltonianModel) -> Self {
        Self {
            drift: vec![0.0; model.d],
            noise: vec![0.0; model.d],
            velocity: vec![0.0; model.m],
        }
    }
}

/// One Euler step in place.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn step(
    model: &HamiltonianModel,
    summary: &MeasureSummary,
    sigma: &Mat,
    modulation: Option<&StateModulation>,
    dt: f64,
    x: &mut [f64],
    dw: &[f64],
    s: &mut StepScratch,
) {
    let m = model.m;
    model.drift_into(x, summary, &mut s.drift);
    sigma.mul_vec_into(dw, &mut s.noise);
    if let Some(modu) = modulation {
        let f = modu.factor(x);
        s.noise.iter_mut().for_each(|v| *v *= f);
    }
    model.mmat.mul_vec_into(&x[m..], &mut s.velocity);
    for (xi, v) in x[..m].iter_mut().zip(&s.velocity) {
        *xi += v * dt;
    }
    for ((xi, b), n) in x[m..].iter_mut().zip(&s.drift).zip(&s.noise) {
        *xi += b * dt + n;
    }
}

/// Where the particle drift reads its law from at step `j`.
pub(crate) enum LawSource<'a> {
    /// The current particle cloud (the McKean–Vlasov system).
    Cloud,
    /// A previously computed flow (one Picard step).
    Flow(&'a MeasureFlow),
}

/// Propagates `n` particles from `init` with per-particle noise streams of `purpose`.
pub(crate) fn propagate_particles(
    model: &HamiltonianModel,
    modulation: Option<&StateModulation>,
    init: Vec<f64>,
    grid: TimeGrid,
    rng: &RngPolicy,
    purpose: Purpose,
    law: LawSource<'_>,
) -> Result<Vec<EmpiricalMeasure>> {
    let dim = model.dim();
    let n = init.len() / dim;
    if n < 2 {
        return Err(Error::Domain(format!("{n} particles; at least 2 are required")));
    }
    let weights = vec![1.0 / n as f64; n];
    let mut state = init;
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| rng.stream(purpose, i as u64)).collect();
    let sigmas = sigma_table(model, &grid);
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut clouds = Vec::with_capacity(grid.n_steps + 1);
    clouds.push(EmpiricalMeasure::new(model.m, model.d, state.clone(), weights.clone())?);
    let flow_summaries: Option<Vec<MeasureSummary>> = match &law {
        LawSource::Cloud => None,
        LawSource::Flow(flow) => Some(
            (0..grid.n_steps)
                .map(|j| model.summarize(flow.at_time(grid.time(j))))
                .collect(),
        ),
    };
    for j in 0..grid.n_steps {
        let summary = match &flow_summaries {
            None => model.summarize(clouds.last().expect("cloud")),
            Some(s) => s[j].clone(),
        };
        let sigma = if sigmas.len() == 1 { &sigmas[0] } else { &sigmas[j] };
        state.par_chunks_mut(dim).zip(rngs.par_iter_mut()).for_each_init(
            || (StepScratch::new(model), vec![0.0; model.d]),
            |(scratch, dw), (x, r)| {
                for w in dw.iter_mut() {
                    *w = sqrt_dt * r.sample::<f64, _>(StandardNormal);
                }
                step(model, &summary, sigma, modulation, dt, x, dw, scratch);
            },
        );
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: j + 1,
                time: grid.time(j + 1),
            });
        }
        clouds.push(EmpiricalMeasure::new(model.m, model.d, state.clone(), weights.clone())?);
    }
    Ok(clouds)
}

/// Interacting particle approximation of the distribution dependent system.
pub fn simulate_mckean_vlasov(
    model: &HamiltonianModel,
    init: &InitialLaw,
    n_particles: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<MeasureFlow> {
    if n_particles < 2 {
        return Err(Error::Domain("at least 2 particles are required".into()));
    }
    if init.dim() != model.dim() {
        return Err(Error::Dimension {
            context: "initial law",
            expected: model.dim(),
            found: init.dim(),
        });
    }
    let start = init.sample(n_particles, rng)?;
    let clouds = propagate_particles(model, None, start, grid, rng, Purpose::Particles, LawSource::Cloud)?;
    MeasureFlow::new(grid, clouds, FlowTag::SelfConsistent)
}

/// Trajectories of the frozen-flow SDE with their Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub m: usize,
    pub d: usize,
    pub n_paths: usize,
    states: Vec<f64>,
    increments: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl PathBundle {
    fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn state(&self, path: usize, j: usize) -> &[f64] {
        let dim = self.dim();
        let base = (path * (self.grid.n_steps + 1) + j) * dim;
        &self.states[base..base + dim]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.grid.n_steps)
    }

    pub fn increment(&self, path: usize, j: usize) -> &[f64] {
        let base = (path * self.grid.n_steps + j) * self.d;
        &self.increments[base..base + self.d]
    }

    pub fn terminal_measure(&self) -> Result<EmpiricalMeasure> {
        let coords = (0..self.n_paths).flat_map(|p| self.terminal(p).to_vec()).collect();
        EmpiricalMeasure::uniform(self.m, self.d, coords)
    }

    /// Long format: `path,step,t,x1_*,x2_*,dw_*` (increments of the step leaving `t`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut cols = vec!["path".to_string(), "step".into(), "t".into()];
        cols.extend((1..=self.m).map(|i| format!("x1_{i}")));
        cols.extend((1..=self.d).map(|i| format!("x2_{i}")));
        cols.extend((1..=self.d).map(|i| format!("dw_{i}")));
        writeln!(out, "{}", cols.join(","))?;
        for p in 0..self.n_paths {
            for j in 0..=self.grid.n_steps {
                write!(out, "{p},{j},{:e}", self.grid.time(j))?;
                for v in self.state(p, j) {
                    write!(out, ",{v:e}")?;
                }
                for k in 0..self.d {
                    if j < self.grid.n_steps {
                        write!(out, ",{:e}", self.increment(p, j)[k])?;
                    } else {
                        write!(out, ",")?;
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn check_start(model: &HamiltonianModel, x: &SplitState) -> Result<Vec<f64>> {
    x.check_dims(model.m, model.d, "start state")?;
    Ok(x.flat())
}

/// `n_paths` independent solutions from `x` driven by the law `flow`.
pub fn simulate_decoupled(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<PathBundle> {
    let x0 = check_start(model, x)?;
    let dynamics = Dynamics::new(model, flow, grid)?;
    let dim = model.dim();
    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.stream(Purpose::Paths, p as u64);
            let mut states = Vec::with_capacity((grid.n_steps + 1) * dim);
            let mut incs = Vec::with_capacity(grid.n_steps * model.d);
            let terminal = dynamics.run_path(&x0, &mut r, |_, xj, dw| {
                states.extend_from_slice(xj);
                incs.extend_from_slice(dw);
            })?;
            states.extend_from_slice(&terminal);
            Ok((states, incs))
        })
        .collect::<Result<_>>()?;
    let mut states = Vec::with_capacity(n_paths * (grid.n_steps + 1) * dim);
    let mut increments = Vec::with_capacity(n_paths * grid.n_steps * model.d);
    for (s, i) in paths {
        states.extend(s);
        increments.extend(i);
    }
    Ok(PathBundle {
        grid,
        m: model.m,
        d: model.d,
        n_paths,
        states,
        increments,
        log_weights: vec![0.0; n_paths],
    })
}

/// Test function on the state space.
pub type TestFn<'a> = dyn Fn(&SplitState) -> f64 + Sync + 'a;

/// `P_t f(x) = E f(X_t)`, streamed path by path.
pub fn estimate_semigroup(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    f: &TestFn<'_>,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<Estimate> {
    let x0 = check_start(model, x)?;
    let dynamics = Dynamics::new(model, flow, grid)?;
    let values = terminal_values(&dynamics, &x0, n_paths, rng, Purpose::Paths, f)?;
    Ok(Estimate::from_samples(&values))
}

pub(crate) fn terminal_values(
    dynamics: &Dynamics<'_>,
    x0: &[f64],
    n_paths: usize,
    rng: &RngPolicy,
    purpose: Purpose,
    f: &TestFn<'_>,
) -> Result<Vec<f64>> {
    let m = dynamics.model.m;
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.stream(purpose, p as u64);
            let xt = dynamics.run_path(x0, &mut r, |_, _, _| {})?;
            let v = f(&SplitState::from_flat(m, &xt));
            if !v.is_finite() {
                return Err(Error::InvalidFunction(format!("f returned {v} on path {p}")));
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowMomentReport {
    pub k: f64,
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    pub sup_moment: f64,
    /// `sup_t ‖μ_t‖_k^k / (1 + ‖μ_0‖_k^k)`.
    pub growth_constant: f64,
}

pub fn flow_moment_report(flow: &MeasureFlow, k: f64) -> Result<FlowMomentReport> {
    if !(k >= 1.0) {
        return Err(Error::Domain(format!("moment order {k} < 1")));
    }
    let times = flow.grid.times();
    let moments: Vec<f64> = (0..=flow.grid.n_steps).map(|j| flow.at_step(j).moment(k)).collect();
    let sup_moment = moments.iter().copied().fold(0.0, f64::max);
    Ok(FlowMomentReport {
        k,
        growth_constant: sup_moment / (1.0 + moments[0]),
        times,
        moments,
        sup_moment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathMomentReport {
    pub p: f64,
    pub times: Vec<f64>,
    /// `E |X1_t − x1 − t M x2|^p`.
    pub first_deviation: Vec<Estimate>,
    /// `E sup_{s<=t} |X2_s − x2|^p`.
    pub second_sup: Vec<Estimate>,
    /// Log-log fit in `t`; the expected exponents are `3p/2` and `p/2`.
    pub first_fit: LinearFit,
    pub second_fit: LinearFit,
}

/// Per-path deviations at `report_steps` (ascending).
fn path_deviations(
    model: &HamiltonianModel,
    grid: &TimeGrid,
    x0: &[f64],
    p: f64,
    report_steps: &[usize],
    mut trajectory: impl FnMut(&mut dyn FnMut(usize, &[f64])) -> Result<()>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = model.m;
    let v0 = model.mmat.mul_vec(&x0[m..]);
    let mut first = vec![0.0; report_steps.len()];
    let mut second = vec![0.0; report_steps.len()];
    let mut running_sup: f64 = 0.0;
    let mut next = 0;
    trajectory(&mut |j, x| {
        let dev2: Vec<f64> = x[m..].iter().zip(&x0[m..]).map(|(a, b)| a - b).collect();
        running_sup = running_sup.max(norm(&dev2));
        while next < report_steps.len() && report_steps[next] == j {
            let t = grid.time(j);
            let dev1: Vec<f64> = x[..m]
                .iter()
                .zip(&x0[..m])
                .zip(&v0)
                .map(|((a, b), v)| a - b - t * v)
                .collect();
            first[next] = norm(&dev1).powf(p);
            second[next] = running_sup.powf(p);
            next += 1;
        }
    })?;
    Ok((first, second))
}

fn finish_moment_report(p: f64, times: Vec<f64>, per_path: Vec<(Vec<f64>, Vec<f64>)>) -> PathMomentReport {
    let k = times.len();
    let mut first_deviation = Vec::with_capacity(k);
    let mut second_sup = Vec::with_capacity(k);
    for i in 0..k {
        let a: Vec<f64> = per_path.iter().map(|(f, _)| f[i]).collect();
        let b: Vec<f64> = per_path.iter().map(|(_, s)| s[i]).collect();
        first_deviation.push(Estimate::from_samples(&a));
        second_sup.push(Estimate::from_samples(&b));
    }
    let fv: Vec<f64> = first_deviation.iter().map(|e| e.value).collect();
    let sv: Vec<f64> = second_sup.iter().map(|e| e.value).collect();
    PathMomentReport {
        p,
        first_fit: log_log_fit(&times, &fv),
        second_fit: log_log_fit(&times, &sv),
        times,
        first_deviation,
        second_sup,
    }
}

fn check_report_steps(grid: &TimeGrid, report_steps: &[usize], p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("moment order {p} < 1")));
    }
    if report_steps.is_empty()
        || report_steps.windows(2).any(|w| w[1] <= w[0])
        || report_steps[0] == 0
        || *report_steps.last().expect("non-empty") > grid.n_steps
    {
        return Err(Error::Domain(
            "report steps must be increasing within (0, n_steps]".into(),
        ));
    }
    Ok(())
}

/// Streams `n_paths` frozen-flow paths from `x` and reports the small-time moments.
#[allow(clippy::too_many_arguments)]
pub fn path_moment_report(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    p: f64,
    report_steps: &[usize],
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<PathMomentReport> {
    check_report_steps(&grid, report_steps, p)?;
    let x0 = check_start(model, x)?;
    let dynamics = Dynamics::new(model, flow, grid)?;
    let per_path = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut r = rng.stream(Purpose::Paths, path as u64);
            path_deviations(model, &grid, &x0, p, report_steps, |visit| {
                let xt = dynamics.run_path(&x0, &mut r, |j, xj, _| visit(j, xj))?;
                visit(grid.n_steps, &xt);
                Ok(())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let times = report_steps.iter().map(|&j| grid.time(j)).collect();
    Ok(finish_moment_report(p, times, per_path))
}

/// The same report from a stored bundle started at `x`.
pub fn bundle_moment_report(
    model: &HamiltonianModel,
    bundle: &PathBundle,
    x: &SplitState,
    p: f64,
    report_steps: &[usize],
) -> Result<PathMomentReport> {
    check_report_steps(&bundle.grid, report_steps, p)?;
    let x0 = check_start(model, x)?;
    let per_path = (0..bundle.n_paths)
        .map(|path| {
            path_deviations(model, &bundle.grid, &x0, p, report_steps, |visit| {
                for j in 0..=bundle.grid.n_steps {
                    visit(j, bundle.state(path, j));
                }
                Ok(())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let times = report_steps.iter().map(|&j| bundle.grid.time(j)).collect();
    Ok(finish_moment_report(p, times, per_path))
}
