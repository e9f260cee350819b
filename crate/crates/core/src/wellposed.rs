//! Picard iteration for the law of the distribution dependent system.
//!
//! The map `μ ↦ Φ(μ)` freezes a measure flow `μ` in the drift, solves the
//! resulting classical SDE with a particle cloud and returns the flow of its
//! marginals. Every iterate is propagated from the same initial atoms with the
//! same Brownian increments, so successive flows differ only through the drift:
//! iterate `n + 1` agrees with iterate `n` bit for bit up to grid step `n`, and
//! the iteration is exact after `n_steps + 1` rounds.
//!
//! Contraction is measured in
//!
//! ```text
//! W̃_{k,λ}(μ, ν) = sup_t e^{−λt} (W_k(μ_t, ν_t) + ‖μ_t − ν_t‖_{k,var}),
//! ```
//!
//! with the variation part computed exactly on the union of atoms. Particles of
//! two iterates only coincide when their paths do, so that part behaves as an
//! indicator of where the flows have not yet merged. The proof-level bound
//! `exp{c ∫₀ᵗ (W_k + ‖·‖_{k,var})² ds} − 1` on the Girsanov distance is not
//! evaluated.
//!
//! The `N`-ball constraint on the iterates used in the existence proof is not
//! enforced.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{wasserstein_value, weighted_variation, CostSpec, EmpiricalMeasure, SplitState};
use crate::model::{HamiltonianModel, StateModulation};
use crate::rng::{Purpose, RngPolicy};
use crate::simulate::{
    check_start, flow_moment_report, propagate_particles, Dynamics, FlowTag, InitialLaw, LawSource, MeasureFlow,
    TimeGrid,
};
use crate::stats::{log_log_fit, norm, Estimate, LinearFit};

/// A model whose noise may depend on the state.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralModel {
    pub model: HamiltonianModel,
    pub state_noise: Option<StateModulation>,
}

impl From<HamiltonianModel> for GeneralModel {
    fn from(model: HamiltonianModel) -> Self {
        Self {
            model,
            state_noise: None,
        }
    }
}

impl GeneralModel {
    pub fn new(model: HamiltonianModel, state_noise: Option<StateModulation>) -> Result<Self> {
        if let Some(s) = &state_noise {
            if s.direction.len() != model.dim() {
                return Err(Error::Dimension {
                    context: "state noise direction",
                    expected: model.dim(),
                    found: s.direction.len(),
                });
            }
            if !(s.epsilon.abs() < 1.0) {
                return Err(Error::Domain(format!(
                    "state noise epsilon {} must satisfy |ε| < 1",
                    s.epsilon
                )));
            }
        }
        Ok(Self { model, state_noise })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed {
        value: f64,
    },
    /// Starts at `initial`, then becomes `max(initial, 4 Ĉ)` once two distances exist,
    /// where `Ĉ = λ · ratio` is the fitted contraction constant.
    Adaptive {
        initial: f64,
    },
}

impl LambdaRule {
    fn initial(&self) -> f64 {
        match *self {
            LambdaRule::Fixed { value } => value,
            LambdaRule::Adaptive { initial } => initial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardSettings {
    pub k: f64,
    pub lambda: LambdaRule,
    pub tol: f64,
    pub max_iter: usize,
    pub n_particles: usize,
    pub dt: f64,
}

impl PicardSettings {
    fn check(&self) -> Result<()> {
        if !(self.k >= 1.0) {
            return Err(Error::Domain(format!("k = {} < 1", self.k)));
        }
        if !(self.lambda.initial() > 0.0) {
            return Err(Error::Domain("lambda must be positive".into()));
        }
        if !(self.tol >= 0.0) || self.max_iter == 0 {
            return Err(Error::Domain("tol must be non-negative and max_iter positive".into()));
        }
        Ok(())
    }
}

/// Per-time components of the distance between two successive iterates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateDistance {
    /// Index `n` of the newer iterate; the distance is to iterate `n − 1`.
    pub iterate: usize,
    pub wk: Vec<f64>,
    pub var_proxy: Vec<f64>,
}

impl IterateDistance {
    pub fn weighted(&self, times: &[f64], lambda: f64) -> f64 {
        times
            .iter()
            .zip(self.wk.iter().zip(&self.var_proxy))
            .map(|(t, (w, v))| (-lambda * t).exp() * (w + v))
            .fold(0.0, f64::max)
    }
}

/// The flow after `iterate` applications of the Picard map, with its distance to the previous flow.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardState {
    pub iterate: usize,
    pub flow: MeasureFlow,
    pub distance: IterateDistance,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    pub k: f64,
    pub lambda: f64,
    /// `λ · ratio` at the adaptation point, when λ was adapted.
    pub fitted_c3: Option<f64>,
    pub times: Vec<f64>,
    pub components: Vec<IterateDistance>,
    pub converged: bool,
}

impl PicardDiagnostics {
    pub fn iterations(&self) -> usize {
        self.components.len()
    }

    /// `W̃_{k,λ}` between successive iterates, recomputed for any `λ`.
    pub fn distances_at(&self, lambda: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.weighted(&self.times, lambda))
            .collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.distances_at(self.lambda)
    }

    /// `D_n / D_{n−1}` while `D_{n−1} > 0`.
    pub fn ratios_at(&self, lambda: f64) -> Vec<f64> {
        self.distances_at(lambda)
            .windows(2)
            .take_while(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.ratios_at(self.lambda)
    }

    /// Geometric mean of the contraction ratios at `λ`, ignoring exact zeros.
    pub fn mean_ratio_at(&self, lambda: f64) -> f64 {
        let logs: Vec<f64> = self
            .ratios_at(lambda)
            .into_iter()
            .filter(|r| *r > 0.0)
            .map(f64::ln)
            .collect();
        if logs.is_empty() {
            return 0.0;
        }
        (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    }

    /// Rows `iterate,t,W_k,var_proxy,weighted`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iterate,t,W_k,var_proxy,weighted")?;
        for c in &self.components {
            for (j, t) in self.times.iter().enumerate() {
                let weighted = (-self.lambda * t).exp() * (c.wk[j] + c.var_proxy[j]);
                writeln!(
                    out,
                    "{},{t:e},{:e},{:e},{weighted:e}",
                    c.iterate, c.wk[j], c.var_proxy[j]
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub flow: MeasureFlow,
    pub diagnostics: PicardDiagnostics,
    pub initial_cloud: EmpiricalMeasure,
}

fn distance_components(a: &MeasureFlow, b: &MeasureFlow, k: f64, iterate: usize) -> Result<IterateDistance> {
    if a.grid != b.grid {
        return Err(Error::Domain("flows live on different time grids".into()));
    }
    let cost = CostSpec::Wk { k };
    let parts: Vec<(f64, f64)> = (0..=a.grid.n_steps)
        .into_par_iter()
        .map(|j| {
            let (x, y) = (a.at_step(j), b.at_step(j));
            if x == y {
                return Ok((0.0, 0.0));
            }
            Ok((wasserstein_value(x, y, &cost)?, weighted_variation(x, y, k)?))
        })
        .collect::<Result<_>>()?;
    let (wk, var_proxy) = parts.into_iter().unzip();
    Ok(IterateDistance { iterate, wk, var_proxy })
}

/// `sup_t e^{−λt}(W_k(A_t, B_t) + ‖A_t − B_t‖_{k,var})` over the common grid.
pub fn weighted_flow_distance(a: &MeasureFlow, b: &MeasureFlow, k: f64, lambda: f64) -> Result<f64> {
    if !(k >= 1.0) || !(lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "need k >= 1 and lambda >= 0 (got {k}, {lambda})"
        )));
    }
    let c = distance_components(a, b, k, 0)?;
    Ok(c.weighted(&a.grid.times(), lambda))
}

fn validate_general(model: &GeneralModel) -> Result<()> {
    GeneralModel::new(model.model.clone(), model.state_noise.clone()).map(|_| ())
}

/// Three trailing ratios `D_n / D_{n−1} >= 1` in a row.
fn non_contraction(distances: &[f64], lambda: f64) -> Option<Error> {
    let ratios: Vec<f64> = distances.windows(2).map(|w| w[1] / w[0]).collect();
    let consecutive = ratios.iter().rev().take_while(|r| **r >= 1.0).count();
    (consecutive >= 3).then(|| Error::NonContraction {
        consecutive,
        last_ratio: *ratios.last().expect("ratios"),
        lambda,
    })
}

/// Picard iteration from the constant flow at `gamma0`.
pub fn picard_solve(
    model: &GeneralModel,
    gamma0: &EmpiricalMeasure,
    settings: &PicardSettings,
    rng: &RngPolicy,
) -> Result<PicardOutcome> {
    let grid = TimeGrid::new(model.model.horizon, settings.dt)?;
    picard_solve_from(
        model,
        gamma0,
        MeasureFlow::constant(grid, gamma0.clone()),
        settings,
        rng,
    )
}

/// Picard iteration from an arbitrary initial flow; the particles still start from `gamma0`.
pub fn picard_solve_from(
    model: &GeneralModel,
    gamma0: &EmpiricalMeasure,
    start: MeasureFlow,
    settings: &PicardSettings,
    rng: &RngPolicy,
) -> Result<PicardOutcome> {
    settings.check()?;
    validate_general(model)?;
    let base = &model.model;
    if gamma0.m() != base.m || gamma0.d() != base.d {
        return Err(Error::Dimension {
            context: "initial law",
            expected: base.dim(),
            found: gamma0.dim(),
        });
    }
    let grid = TimeGrid::new(base.horizon, settings.dt)?;
    if start.grid != grid {
        return Err(Error::Domain("initial flow grid differs from the solver grid".into()));
    }
    let init = InitialLaw::Measure(gamma0.clone()).sample(settings.n_particles, rng)?;
    let initial_cloud = EmpiricalMeasure::uniform(base.m, base.d, init.clone())?;
    let times = grid.times();
    let mut lambda = settings.lambda.initial();
    let mut fitted_c3 = None;
    let mut previous = start;
    let mut components: Vec<IterateDistance> = Vec::new();
    let mut converged = false;
    for n in 1..=settings.max_iter {
        let clouds = propagate_particles(
            base,
            model.state_noise.as_ref(),
            init.clone(),
            grid,
            rng,
            Purpose::Particles,
            LawSource::Flow(&previous),
        )?;
        let next = MeasureFlow::new(grid, clouds, FlowTag::PicardIterate(n))?;
        components.push(distance_components(&next, &previous, settings.k, n)?);
        previous = next;

        if let (LambdaRule::Adaptive { initial }, None, 2) = (settings.lambda, fitted_c3, components.len()) {
            let d0 = components[0].weighted(&times, lambda);
            let d1 = components[1].weighted(&times, lambda);
            if d0 > 0.0 {
                let c3 = lambda * d1 / d0;
                fitted_c3 = Some(c3);
                lambda = initial.max(4.0 * c3);
            }
        }
        let distances: Vec<f64> = components.iter().map(|c| c.weighted(&times, lambda)).collect();
        let last = *distances.last().expect("one iterate");
        if last <= settings.tol {
            converged = true;
            break;
        }
        if let Some(err) = non_contraction(&distances, lambda) {
            return Err(err);
        }
    }
    let mut flow = previous;
    if converged {
        flow.tag = FlowTag::SelfConsistent;
    }
    Ok(PicardOutcome {
        flow,
        diagnostics: PicardDiagnostics {
            k: settings.k,
            lambda,
            fitted_c3,
            times,
            components,
            converged,
        },
        initial_cloud,
    })
}

/// The last state of a finished iteration.
pub fn final_state(outcome: &PicardOutcome) -> Option<PicardState> {
    let last = outcome.diagnostics.components.last()?;
    Some(PicardState {
        iterate: last.iterate,
        flow: outcome.flow.clone(),
        distance: last.clone(),
        lambda: outcome.diagnostics.lambda,
    })
}

/// Distance between fixed points reached from two initial flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub distance: f64,
    /// Last successive distance of either run.
    pub floor: f64,
    pub within_floor: bool,
}

/// Runs from the constant flow at `γ₀` and from the constant flow at `γ₀` shifted to mean zero.
pub fn uniqueness_proxy(
    model: &GeneralModel,
    gamma0: &EmpiricalMeasure,
    settings: &PicardSettings,
    rng: &RngPolicy,
) -> Result<UniquenessReport> {
    let grid = TimeGrid::new(model.model.horizon, settings.dt)?;
    let mean = gamma0.mean();
    let centred: Vec<f64> = gamma0
        .atoms()
        .flat_map(|(x, _)| x.iter().zip(&mean).map(|(a, b)| a - b).collect::<Vec<_>>())
        .collect();
    let centred = EmpiricalMeasure::new(gamma0.m(), gamma0.d(), centred, gamma0.weights().to_vec())?;
    let a = picard_solve(model, gamma0, settings, rng)?;
    let b = picard_solve_from(model, gamma0, MeasureFlow::constant(grid, centred), settings, rng)?;
    let lambda = a.diagnostics.lambda;
    let distance = weighted_flow_distance(&a.flow, &b.flow, settings.k, lambda)?;
    let last = |o: &PicardOutcome| o.diagnostics.distances_at(lambda).last().copied().unwrap_or(0.0);
    let floor = last(&a).max(last(&b));
    Ok(UniquenessReport {
        distance,
        floor,
        within_floor: distance <= 2.0 * floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentStability {
    pub k: f64,
    /// `sup_t ‖μ_t‖_k^k / (1 + ‖γ₀‖_k^k)` per seed.
    pub constants: Vec<f64>,
    /// `(max − min) / mean` of the constants.
    pub spread: f64,
    pub stable: bool,
}

/// Fitted moment-growth constant of the fixed point across independent seeds.
pub fn moment_stability(
    model: &GeneralModel,
    gamma0: &EmpiricalMeasure,
    settings: &PicardSettings,
    seeds: &[RngPolicy],
) -> Result<MomentStability> {
    let g0 = gamma0.moment(settings.k);
    let mut constants = Vec::with_capacity(seeds.len());
    for rng in seeds {
        let out = picard_solve(model, gamma0, settings, rng)?;
        let report = flow_moment_report(&out.flow, settings.k)?;
        constants.push(report.sup_moment / (1.0 + g0));
    }
    let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = constants.iter().copied().fold(0.0, f64::max);
    let mean = constants.iter().sum::<f64>() / constants.len().max(1) as f64;
    let spread = if mean > 0.0 { (hi - lo) / mean } else { 0.0 };
    Ok(MomentStability {
        k: settings.k,
        constants,
        spread,
        stable: spread <= 0.2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalMomentScan {
    pub n: f64,
    pub radii: Vec<f64>,
    /// `E sup_t |X_t|^n` from `x = r · direction`.
    pub moments: Vec<Estimate>,
    /// Log-log fit of the moments against the radii.
    pub fit: LinearFit,
}

/// `E(sup_t |X_t|^n | X_0 = r e)` for the frozen flow, over a grid of radii.
#[allow(clippy::too_many_arguments)]
pub fn conditional_moment_scan(
    model: &GeneralModel,
    flow: &MeasureFlow,
    direction: &SplitState,
    radii: &[f64],
    n: f64,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<ConditionalMomentScan> {
    let e = check_start(&model.model, direction)?;
    let len = norm(&e);
    if !(len > 0.0) || !(n >= 1.0) || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain(
            "need a non-zero direction, n >= 1 and positive radii".into(),
        ));
    }
    let dynamics = Dynamics::new(&model.model, flow, grid)?.with_modulation(model.state_noise.clone());
    let mut moments = Vec::with_capacity(radii.len());
    for &r in radii {
        let x0: Vec<f64> = e.iter().map(|v| r * v / len).collect();
        let sups: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut stream = rng.stream(Purpose::Paths, p as u64);
                let mut sup: f64 = 0.0;
                let xt = dynamics.run_path(&x0, &mut stream, |_, x, _| sup = sup.max(norm(x)))?;
                Ok(sup.max(norm(&xt)).powf(n))
            })
            .collect::<Result<_>>()?;
        moments.push(Estimate::from_samples(&sups));
    }
    let values: Vec<f64> = moments.iter().map(|m| m.value).collect();
    Ok(ConditionalMomentScan {
        n,
        radii: radii.to_vec(),
        fit: log_log_fit(radii, &values),
        moments,
    })
}
