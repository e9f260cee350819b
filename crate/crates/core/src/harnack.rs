//! Monte Carlo checks of the log-Harnack and power-Harnack inequalities and
//! their consequences for entropy, total variation and transport stability.
//!
//! None of the existential constants are assumed. Each inequality is checked
//! through the computable cost of the coupling by change of measure, or as a
//! scaling fit. Initial points are paired through the exact `W₂` plan of the
//! two initial laws.
//!
//! Besides the 3σ statistical checks, every run evaluates two finite
//! convex-duality facts about the empirical path measure, with zero tolerance:
//!
//! ```text
//! Σ q log f ≤ log mean f + Σ q log R̂                     (Young)
//! mean(R̂ f)^p ≤ mean(f^p) · mean(R̂^{p/(p−1)})^{p−1}      (Hölder)
//! ```
//!
//! where `R̂ = R N / Σ R` and `q = R̂ / N`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::{entropy_cost, harnack_coupling, CoupledBundle};
use crate::error::{Error, Result};
use crate::metrics::{wasserstein, wasserstein_value, CostSpec, EmpiricalMeasure, SplitState, DEFAULT_SOLVER_CAP};
use crate::model::HamiltonianModel;
use crate::moduli::DiniModulus;
use crate::rng::RngPolicy;
use crate::simulate::{simulate_mckean_vlasov, InitialLaw, MeasureFlow, TimeGrid};
use crate::stats::{linear_fit, norm, sum, CompensatedSum, Estimate, LinearFit};

/// Test functions on the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `x[index]` over the flattened state `(x1, x2)`; unbounded, so only usable for gradients.
    Coordinate {
        index: usize,
    },
    /// `floor + exp(−|x2|² / scale)`.
    Bump {
        floor: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `floor + 1 / (1 + exp(offset − ⟨w, x⟩))`.
    Logistic {
        floor: f64,
        direction: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl TestFunction {
    pub fn eval(&self, m: usize, x: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Coordinate { index } => x[*index],
            TestFunction::Bump { floor, scale } => {
                let r2: f64 = x[m..].iter().map(|v| v * v).sum();
                floor + (-r2 / scale).exp()
            }
            TestFunction::Logistic {
                floor,
                direction,
                offset,
            } => {
                let s: f64 = direction.iter().zip(x).map(|(a, b)| a * b).sum();
                floor + 1.0 / (1.0 + (offset - s).exp())
            }
        }
    }

    /// `inf f` over the state space.
    pub fn lower_bound(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Coordinate { .. } => f64::NEG_INFINITY,
            TestFunction::Bump { floor, .. } | TestFunction::Logistic { floor, .. } => *floor,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("constant({value})"),
            TestFunction::Coordinate { index } => format!("coordinate({index})"),
            TestFunction::Bump { floor, scale } => format!("bump(floor={floor};scale={scale})"),
            TestFunction::Logistic { floor, offset, .. } => format!("logistic(floor={floor};offset={offset})"),
        }
    }

    /// The function as a closure on split states.
    pub fn on_states(&self) -> impl Fn(&SplitState) -> f64 + Sync + '_ {
        move |x: &SplitState| self.eval(x.m(), &x.flat())
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        let ok = match self {
            TestFunction::Constant { value } => value.is_finite(),
            TestFunction::Coordinate { index } => *index < dim,
            TestFunction::Bump { floor, scale } => floor.is_finite() && *scale > 0.0,
            TestFunction::Logistic {
                floor,
                direction,
                offset,
            } => floor.is_finite() && offset.is_finite() && direction.len() == dim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidFunction(format!(
                "{} is malformed for dimension {dim}",
                self.describe()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackSettings {
    pub t: f64,
    pub dt: f64,
    pub n_particles: usize,
    pub n_paths: usize,
    /// Largest number of `(x, y)` pairs taken from the initial plan.
    pub max_pairs: usize,
}

/// A pair of initial points from the optimal plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mass: f64,
}

/// `(x, y)` pairs of the `W₂`-optimal plan, heaviest first, at most `max_pairs`, renormalized.
pub fn initial_pairs(
    gamma: &EmpiricalMeasure,
    gamma_tilde: &EmpiricalMeasure,
    max_pairs: usize,
) -> Result<(Vec<InitialPair>, f64)> {
    let sol = wasserstein(gamma, gamma_tilde, &CostSpec::Wk { k: 2.0 })?;
    let plan = &sol.plan;
    let mut entries: Vec<(usize, usize, f64)> = (0..plan.rows)
        .flat_map(|i| (0..plan.cols).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, plan.get(i, j)))
        .filter(|e| e.2 > 0.0)
        .collect();
    entries.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    entries.truncate(max_pairs.max(1));
    let total = sum(entries.iter().map(|e| e.2));
    let pairs = entries
        .into_iter()
        .map(|(i, j, w)| InitialPair {
            x: gamma.atom(i).to_vec(),
            y: gamma_tilde.atom(j).to_vec(),
            mass: w / total,
        })
        .collect();
    Ok((pairs, sol.value))
}

/// Flows from both initial laws driven by the same particle noise, and the initial pairs.
#[derive(Debug, Clone)]
pub struct HarnackSetup<'a> {
    pub model: &'a HamiltonianModel,
    pub grid: TimeGrid,
    pub flow_gamma: MeasureFlow,
    pub flow_gamma_tilde: MeasureFlow,
    pub pairs: Vec<InitialPair>,
    pub w2_initial: f64,
    pub n_paths: usize,
    pub rng: RngPolicy,
}

impl<'a> HarnackSetup<'a> {
    pub fn new(
        model: &'a HamiltonianModel,
        gamma0: &EmpiricalMeasure,
        gamma0_tilde: &EmpiricalMeasure,
        settings: &HarnackSettings,
        rng: &RngPolicy,
    ) -> Result<Self> {
        if !(settings.t > 0.0 && settings.t <= model.horizon * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "t = {} outside (0, {}]",
                settings.t, model.horizon
            )));
        }
        if settings.n_paths < 2 {
            return Err(Error::Domain("at least 2 paths are required".into()));
        }
        let grid = TimeGrid::new(settings.t, settings.dt)?;
        let flow_gamma = simulate_mckean_vlasov(
            model,
            &InitialLaw::Measure(gamma0.clone()),
            settings.n_particles,
            grid,
            rng,
        )?;
        let flow_gamma_tilde = simulate_mckean_vlasov(
            model,
            &InitialLaw::Measure(gamma0_tilde.clone()),
            settings.n_particles,
            grid,
            rng,
        )?;
        let (pairs, w2_initial) = initial_pairs(gamma0, gamma0_tilde, settings.max_pairs)?;
        Ok(Self {
            model,
            grid,
            flow_gamma,
            flow_gamma_tilde,
            pairs,
            w2_initial,
            n_paths: settings.n_paths,
            rng: *rng,
        })
    }

    pub fn couple(&self, index: usize) -> Result<CoupledBundle> {
        let pair = &self.pairs[index];
        let m = self.model.m;
        harnack_coupling(
            self.model,
            &self.flow_gamma,
            &self.flow_gamma_tilde,
            &SplitState::from_flat(m, &pair.x),
            &SplitState::from_flat(m, &pair.y),
            self.n_paths,
            self.grid,
            &self.rng.derive(index as u64),
            false,
        )
    }

    fn terminal_values(&self, bundle: &CoupledBundle, f: &TestFunction) -> Vec<f64> {
        (0..bundle.n_paths)
            .map(|p| f.eval(bundle.m, bundle.terminal_state(p)))
            .collect()
    }

    /// `P_t log f(γ̃) ≤ log P_t f(γ) + cost`, pointwise over pairs and integrated.
    pub fn log_harnack(&self, f: &TestFunction) -> Result<HarnackReport> {
        f.check(self.model.dim())?;
        if !(f.lower_bound() > 0.0) {
            return Err(Error::InvalidFunction(format!(
                "{} is not bounded below by a positive constant",
                f.describe()
            )));
        }
        let mut rows = Vec::with_capacity(self.pairs.len());
        let mut identities = true;
        let mut degenerate = false;
        let mut costs = Vec::with_capacity(self.pairs.len());
        let mut pfs = Vec::with_capacity(self.pairs.len());
        for (i, pair) in self.pairs.iter().enumerate() {
            let bundle = self.couple(i)?;
            let values = self.terminal_values(&bundle, f);
            let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
            let lhs = Estimate::weighted(&logs, &bundle.scaled_weights());
            let pf = Estimate::from_samples(&values);
            let cost = entropy_cost(&bundle);
            let c = cost.half_int_eta_sq_q;
            let rhs = Estimate {
                value: pf.value.ln() + c.value,
                stderr: (pf.stderr / pf.value).hypot(c.stderr),
            };
            let young = young_check(&values, &bundle.log_weights);
            identities &= young.holds;
            degenerate |= cost.degenerate;
            costs.push(c);
            pfs.push(pf);
            rows.push(PairOutcome::new(
                pair,
                lhs,
                rhs,
                young.holds,
                cost.effective_sample_size,
                cost.degenerate,
            ));
        }
        let lhs = mix(&self.pairs, rows.iter().map(|r| r.lhs));
        let pf = mix(&self.pairs, pfs.iter().copied());
        let cost = mix(&self.pairs, costs.iter().copied());
        let rhs = Estimate {
            value: pf.value.ln() + cost.value,
            stderr: (pf.stderr / pf.value).hypot(cost.stderr),
        };
        Ok(HarnackReport::new(
            CheckKind::Log,
            self,
            f,
            lhs,
            rhs,
            identities,
            degenerate,
            self.shape_constant(cost.value),
            rows,
        ))
    }

    /// `(P_t f(γ̃))^p ≤ P_t f^p(γ) · max exp{p/(2(p−1)) ∫|η|²}`.
    pub fn power_harnack(&self, f: &TestFunction, p: f64) -> Result<HarnackReport> {
        f.check(self.model.dim())?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Domain(format!("p = {p} must exceed 1")));
        }
        if !(f.lower_bound() >= 0.0) {
            return Err(Error::InvalidFunction(format!(
                "{} takes negative values",
                f.describe()
            )));
        }
        let exponent = p / (2.0 * (p - 1.0));
        let mut rows = Vec::with_capacity(self.pairs.len());
        let mut identities = true;
        let mut degenerate = false;
        let mut means = Vec::new();
        let mut powers = Vec::new();
        let mut worst: f64 = 0.0;
        for (i, pair) in self.pairs.iter().enumerate() {
            let bundle = self.couple(i)?;
            let values = self.terminal_values(&bundle, f);
            let a = Estimate::weighted(&values, &bundle.scaled_weights());
            let fp: Vec<f64> = values.iter().map(|v| v.powf(p)).collect();
            let b = Estimate::from_samples(&fp);
            let cost = entropy_cost(&bundle);
            let factor = (exponent * cost.sup_path_int_eta_sq).exp();
            worst = worst.max(cost.sup_path_int_eta_sq);
            let holder = holder_check(&values, &bundle.log_weights, p);
            identities &= holder.holds;
            degenerate |= cost.degenerate;
            means.push(a);
            powers.push(b);
            rows.push(PairOutcome::new(
                pair,
                power_of(a, p),
                b.scale(factor),
                holder.holds,
                cost.effective_sample_size,
                cost.degenerate,
            ));
        }
        let a = mix(&self.pairs, means.iter().copied());
        let b = mix(&self.pairs, powers.iter().copied());
        let factor = (exponent * worst).exp();
        let mut report = HarnackReport::new(
            CheckKind::Power { p },
            self,
            f,
            power_of(a, p),
            b.scale(factor),
            identities,
            degenerate,
            self.shape_constant(0.5 * worst),
            rows,
        );
        report.rhs_factor = Some(factor);
        Ok(report)
    }

    /// Histogram total variation of the terminal clouds against the coupling's entropy bound.
    pub fn tv_entropy(&self, bins: usize, levels: usize) -> Result<TvEntropyReport> {
        if bins == 0 {
            return Err(Error::Domain("bins must be positive".into()));
        }
        let a = self.flow_gamma.terminal();
        let b = self.flow_gamma_tilde.terminal();
        let nested: Vec<(usize, f64)> = (0..=levels)
            .map(|k| {
                let per_dim = bins << k;
                (per_dim, histogram_tv(a, b, per_dim).0)
            })
            .collect();
        let nested_monotone = nested.windows(2).all(|w| w[1].1 >= w[0].1);
        let (tv, occupied) = histogram_tv(a, b, bins);
        let mut costs = Vec::new();
        let mut degenerate = false;
        for i in 0..self.pairs.len() {
            let cost = entropy_cost(&self.couple(i)?);
            degenerate |= cost.degenerate;
            costs.push(cost.half_int_eta_sq_q);
        }
        let entropy_upper = mix(&self.pairs, costs.into_iter());
        let n = a.len().min(b.len()) as f64;
        let noise = (occupied as f64 / n).sqrt();
        let sigma = (2.0 * tv * noise).hypot(2.0 * entropy_upper.stderr);
        let lhs = tv * tv;
        let rhs = 2.0 * entropy_upper.value;
        Ok(TvEntropyReport {
            t: self.grid.horizon,
            bins,
            tv,
            entropy_upper,
            sigma,
            slack: rhs - lhs,
            pass: lhs <= rhs + 3.0 * sigma,
            nested,
            nested_monotone,
            degenerate,
            shape_constant: self.shape_constant(entropy_upper.value),
        })
    }

    /// `cost · t³ / W₂²`, the constant of the bounded-drift shape `c W₂² / t³`.
    fn shape_constant(&self, cost: f64) -> Option<f64> {
        (self.w2_initial > 0.0).then(|| cost * self.grid.horizon.powi(3) / self.w2_initial.powi(2))
    }
}

fn power_of(e: Estimate, p: f64) -> Estimate {
    Estimate {
        value: e.value.powf(p),
        stderr: p * e.value.abs().powf(p - 1.0) * e.stderr,
    }
}

/// `Σ π_i e_i` with independent errors.
fn mix(pairs: &[InitialPair], estimates: impl Iterator<Item = Estimate>) -> Estimate {
    let mut value = CompensatedSum::new();
    let mut var = CompensatedSum::new();
    for (pair, e) in pairs.iter().zip(estimates) {
        value.add(pair.mass * e.value);
        var.add((pair.mass * e.stderr).powi(2));
    }
    Estimate {
        value: value.value(),
        stderr: var.value().sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CheckKind {
    Log,
    Power { p: f64 },
}

impl CheckKind {
    pub fn label(&self) -> &'static str {
        match self {
            CheckKind::Log => "log_harnack",
            CheckKind::Power { .. } => "power_harnack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mass: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub slack: f64,
    pub pass: bool,
    pub identity_holds: bool,
    pub effective_sample_size: f64,
    pub degenerate: bool,
}

impl PairOutcome {
    fn new(pair: &InitialPair, lhs: Estimate, rhs: Estimate, identity_holds: bool, ess: f64, degenerate: bool) -> Self {
        let slack = rhs.value - lhs.value;
        Self {
            x: pair.x.clone(),
            y: pair.y.clone(),
            mass: pair.mass,
            lhs,
            rhs,
            slack,
            pass: passes(slack, lhs, rhs),
            identity_holds,
            effective_sample_size: ess,
            degenerate,
        }
    }
}

fn passes(slack: f64, lhs: Estimate, rhs: Estimate) -> bool {
    slack >= -3.0 * lhs.stderr.hypot(rhs.stderr) || rhs.value == f64::INFINITY
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnackReport {
    pub kind: CheckKind,
    pub t: f64,
    pub f: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub slack: f64,
    /// `slack >= −3σ`.
    pub pass: bool,
    /// The empirical Young (log) or Hölder (power) identity held on every pair.
    pub identity_holds: bool,
    /// Some pair had an effective sample size below 10.
    pub degenerate: bool,
    /// `exp{p/(2(p−1)) max ∫|η|²}` for power checks.
    pub rhs_factor: Option<f64>,
    pub w2_initial: f64,
    pub shape_constant: Option<f64>,
    pub pairs: Vec<PairOutcome>,
}

impl HarnackReport {
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: CheckKind,
        setup: &HarnackSetup<'_>,
        f: &TestFunction,
        lhs: Estimate,
        rhs: Estimate,
        identity_holds: bool,
        degenerate: bool,
        shape_constant: Option<f64>,
        pairs: Vec<PairOutcome>,
    ) -> Self {
        let slack = rhs.value - lhs.value;
        Self {
            kind,
            t: setup.grid.horizon,
            f: f.describe(),
            lhs,
            rhs,
            slack,
            pass: passes(slack, lhs, rhs) && pairs.iter().all(|p| p.pass),
            identity_holds,
            degenerate,
            rhs_factor: None,
            w2_initial: setup.w2_initial,
            shape_constant,
            pairs,
        }
    }
}

pub fn log_harnack_check(
    model: &HamiltonianModel,
    gamma0: &EmpiricalMeasure,
    gamma0_tilde: &EmpiricalMeasure,
    f: &TestFunction,
    settings: &HarnackSettings,
    rng: &RngPolicy,
) -> Result<HarnackReport> {
    HarnackSetup::new(model, gamma0, gamma0_tilde, settings, rng)?.log_harnack(f)
}

pub fn power_harnack_check(
    model: &HamiltonianModel,
    gamma0: &EmpiricalMeasure,
    gamma0_tilde: &EmpiricalMeasure,
    f: &TestFunction,
    p: f64,
    settings: &HarnackSettings,
    rng: &RngPolicy,
) -> Result<HarnackReport> {
    HarnackSetup::new(model, gamma0, gamma0_tilde, settings, rng)?.power_harnack(f, p)
}

pub fn tv_entropy_check(
    model: &HamiltonianModel,
    gamma0: &EmpiricalMeasure,
    gamma0_tilde: &EmpiricalMeasure,
    bins: usize,
    settings: &HarnackSettings,
    rng: &RngPolicy,
) -> Result<TvEntropyReport> {
    HarnackSetup::new(model, gamma0, gamma0_tilde, settings, rng)?.tv_entropy(bins, 3)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvEntropyReport {
    pub t: f64,
    pub bins: usize,
    /// Histogram total variation (L¹ norm of the binned difference).
    pub tv: f64,
    /// `Σ π ½ E^Q ∫|η|²`.
    pub entropy_upper: Estimate,
    /// Allowance on `tv²`: histogram noise `2 tv √(cells/N)` combined with `2 stderr(entropy)`.
    pub sigma: f64,
    /// `2 entropy − tv²`.
    pub slack: f64,
    pub pass: bool,
    /// `(bins per dimension, tv)` on nested refinements.
    pub nested: Vec<(usize, f64)>,
    pub nested_monotone: bool,
    pub degenerate: bool,
    pub shape_constant: Option<f64>,
}

/// Total variation after binning both clouds on `bins` cells per dimension of their joint box,
/// together with the number of occupied cells.
pub fn histogram_tv(a: &EmpiricalMeasure, b: &EmpiricalMeasure, bins: usize) -> (f64, usize) {
    let dim = a.dim();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for (x, _) in a.atoms().chain(b.atoms()) {
        for k in 0..dim {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    let cell = |x: &[f64]| -> Vec<usize> {
        (0..dim)
            .map(|k| {
                let width = hi[k] - lo[k];
                if width <= 0.0 {
                    return 0;
                }
                let u = ((x[k] - lo[k]) / width).clamp(0.0, 1.0);
                ((u * bins as f64).floor() as usize).min(bins - 1)
            })
            .collect()
    };
    let mut cells: BTreeMap<Vec<usize>, (CompensatedSum, CompensatedSum)> = BTreeMap::new();
    for (x, w) in a.atoms() {
        cells.entry(cell(x)).or_default().0.add(w);
    }
    for (x, w) in b.atoms() {
        cells.entry(cell(x)).or_default().1.add(w);
    }
    let occupied = cells.len();
    let tv = sum(cells.values().map(|(p, q)| (p.value() - q.value()).abs()));
    (tv, occupied)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `R̂ = R N / Σ R` from log-weights, without overflow.
pub fn normalized_weights(log_weights: &[f64]) -> Vec<f64> {
    let top = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_weights.iter().map(|l| (l - top).exp()).collect();
    let total = sum(scaled.iter().copied());
    let n = scaled.len() as f64;
    scaled.iter().map(|w| w * n / total).collect()
}

/// Empirical Young inequality for positive `f`, in the scaled form
/// `Σ q log(f/f_max) ≤ log mean(f/f_max) + Σ q log R̂`.
pub fn young_check(f: &[f64], log_weights: &[f64]) -> IdentityCheck {
    let r = normalized_weights(log_weights);
    let n = f.len() as f64;
    let top = f.iter().copied().fold(0.0, f64::max);
    let mut lhs = CompensatedSum::new();
    let mut entropy = CompensatedSum::new();
    for (fi, ri) in f.iter().zip(&r) {
        let q = ri / n;
        if q > 0.0 {
            lhs.add(q * (fi / top).ln());
            entropy.add(q * ri.ln());
        }
    }
    let mean = sum(f.iter().map(|v| v / top)) / n;
    let lhs = lhs.value();
    let rhs = mean.ln() + entropy.value();
    IdentityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    }
}

/// Empirical Hölder inequality for non-negative `f`, in the scaled form
/// `mean(R̂ f/f_max)^p ≤ mean((f/f_max)^p) · mean(R̂^{p/(p−1)})^{p−1}`.
pub fn holder_check(f: &[f64], log_weights: &[f64], p: f64) -> IdentityCheck {
    let top = f.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return IdentityCheck {
            lhs: 0.0,
            rhs: 0.0,
            holds: true,
        };
    }
    let r = normalized_weights(log_weights);
    let n = f.len() as f64;
    let q = p / (p - 1.0);
    let a = sum(f.iter().zip(&r).map(|(fi, ri)| ri * fi / top)) / n;
    let b = sum(f.iter().map(|fi| (fi / top).powf(p))) / n;
    let c = sum(r.iter().map(|ri| ri.powf(q))) / n;
    let lhs = a.powf(p);
    let rhs = b * c.powf(p - 1.0);
    IdentityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySettings {
    pub times: Vec<f64>,
    pub dt: f64,
    /// Particles per cloud; each cloud is subsampled to half the solver cap.
    pub n_particles: usize,
    /// Paths per reweighted measure.
    pub n_paths: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub t: f64,
    pub w2: f64,
    pub w2_ratio: f64,
    /// `W_{β,α}` between the two particle clouds.
    pub wba_cloud: f64,
    pub wba_cloud_ratio: f64,
    /// `W_{β,α}` between `P_t*γ` and its Girsanov reweighting towards `P_t*γ̃`.
    pub wba_reweighted: Estimate,
    pub wba_reweighted_ratio: f64,
    /// `α(√t)/√t + t^{3(β−1)/2}`.
    pub shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityTable {
    pub w2_initial: f64,
    pub rows: Vec<StabilityRow>,
    pub sup_w2_ratio: f64,
    /// `wba_reweighted_ratio = intercept + slope · shape`.
    pub fit: LinearFit,
}

pub fn stability_shape(t: f64, beta: f64, modulus: &DiniModulus) -> f64 {
    let r = t.sqrt();
    modulus.eval_unchecked(r) / r + t.powf(1.5 * (beta - 1.0))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

fn subsample(cloud: &EmpiricalMeasure, cap: usize) -> Result<EmpiricalMeasure> {
    if cloud.len() <= cap {
        return Ok(cloud.clone());
    }
    let coords: Vec<f64> = (0..cap).flat_map(|i| cloud.atom(i).to_vec()).collect();
    EmpiricalMeasure::uniform(cloud.m(), cloud.d(), coords)
}

/// Ratios of `W₂` and `W_{β,α}` at positive times to `W₂` at time zero.
pub fn stability_study(
    model: &HamiltonianModel,
    gamma0: &EmpiricalMeasure,
    gamma0_tilde: &EmpiricalMeasure,
    settings: &StabilitySettings,
    rng: &RngPolicy,
) -> Result<StabilityTable> {
    let t_max = settings.times.iter().copied().fold(0.0, f64::max);
    if settings.times.is_empty() || settings.times.iter().any(|t| !(*t > 0.0)) || t_max > model.horizon * (1.0 + 1e-12)
    {
        return Err(Error::Domain("study times must lie in (0, horizon]".into()));
    }
    if settings.replicates == 0 {
        return Err(Error::Domain("at least one replicate is required".into()));
    }
    let grid = TimeGrid::new(t_max, settings.dt)?;
    let flow_a = simulate_mckean_vlasov(
        model,
        &InitialLaw::Measure(gamma0.clone()),
        settings.n_particles,
        grid,
        rng,
    )?;
    let flow_b = simulate_mckean_vlasov(
        model,
        &InitialLaw::Measure(gamma0_tilde.clone()),
        settings.n_particles,
        grid,
        rng,
    )?;
    let cap = DEFAULT_SOLVER_CAP / 2;
    let (pairs, w2_initial) = initial_pairs(gamma0, gamma0_tilde, cap)?;
    let w2 = CostSpec::Wk { k: 2.0 };
    let wba = CostSpec::RhoBetaAlpha {
        beta: model.beta,
        modulus: model.modulus.clone(),
    };
    let per_pair = (settings.n_paths / pairs.len()).max(2);
    if per_pair * pairs.len() > cap {
        return Err(Error::SizeCap {
            atoms: 2 * per_pair * pairs.len(),
            cap: DEFAULT_SOLVER_CAP,
        });
    }
    let mut rows = Vec::with_capacity(settings.times.len());
    for &t in &settings.times {
        let j = grid.index_at(t);
        if (grid.time(j) - t).abs() > 1e-9 * t_max {
            return Err(Error::Domain(format!("study time {t} is not on the dt grid")));
        }
        let a = subsample(flow_a.at_step(j), cap)?;
        let b = subsample(flow_b.at_step(j), cap)?;
        let w2_t = wasserstein_value(&a, &b, &w2)?;
        let wba_t = wasserstein_value(&a, &b, &wba)?;
        let sub = TimeGrid::new(t, settings.dt)?;
        let mut reps = Vec::with_capacity(settings.replicates);
        for r in 0..settings.replicates {
            let base = rng.derive(0x57ab_0000 + r as u64);
            let (uniform, weighted) = reweighted_pair(model, &flow_a, &flow_b, &pairs, per_pair, sub, &base)?;
            reps.push(wasserstein_value(&uniform, &weighted, &wba)?);
        }
        let wba_rw = Estimate::from_samples(&reps);
        rows.push(StabilityRow {
            t,
            w2: w2_t,
            w2_ratio: ratio(w2_t, w2_initial),
            wba_cloud: wba_t,
            wba_cloud_ratio: ratio(wba_t, w2_initial),
            wba_reweighted_ratio: ratio(wba_rw.value, w2_initial),
            wba_reweighted: wba_rw,
            shape: stability_shape(t, model.beta, &model.modulus),
        });
    }
    let shapes: Vec<f64> = rows.iter().map(|r| r.shape).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.wba_reweighted_ratio).collect();
    Ok(StabilityTable {
        w2_initial,
        sup_w2_ratio: rows.iter().map(|r| r.w2_ratio).fold(0.0, f64::max),
        fit: linear_fit(&shapes, &ratios),
        rows,
    })
}

/// Base terminal atoms (uniform within each pair) and the same atoms weighted by `R̂`.
fn reweighted_pair(
    model: &HamiltonianModel,
    flow_a: &MeasureFlow,
    flow_b: &MeasureFlow,
    pairs: &[InitialPair],
    per_pair: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<(EmpiricalMeasure, EmpiricalMeasure)> {
    let m = model.m;
    let mut coords = Vec::new();
    let mut uniform = Vec::new();
    let mut weighted = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let bundle = harnack_coupling(
            model,
            flow_a,
            flow_b,
            &SplitState::from_flat(m, &pair.x),
            &SplitState::from_flat(m, &pair.y),
            per_pair,
            grid,
            &rng.derive(i as u64),
            false,
        )?;
        let r = bundle.normalized_weights();
        for (p, rp) in r.iter().enumerate() {
            coords.extend_from_slice(bundle.terminal_state(p));
            uniform.push(pair.mass / per_pair as f64);
            weighted.push(pair.mass * rp / per_pair as f64);
        }
    }
    let dim = model.dim();
    let (kept, kept_w): (Vec<usize>, Vec<f64>) = weighted
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| (i, *w))
        .unzip();
    let total = sum(kept_w.iter().copied());
    let kept_coords: Vec<f64> = kept
        .iter()
        .flat_map(|&i| coords[i * dim..(i + 1) * dim].to_vec())
        .collect();
    let base = EmpiricalMeasure::new(model.m, model.d, coords, normalize(uniform))?;
    let tilted = EmpiricalMeasure::new(
        model.m,
        model.d,
        kept_coords,
        kept_w.iter().map(|w| w / total).collect(),
    )?;
    Ok((base, tilted))
}

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let total = sum(w.iter().copied());
    w.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcaveModulusCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `E[α(ξ) η] ≤ ‖η‖_p α(‖ξ‖_{p/(p−1)})` on the empirical measure of the samples (`p = 1` uses the sup norm).
pub fn concave_modulus_check(modulus: &DiniModulus, xi: &[f64], eta: &[f64], p: f64) -> Result<ConcaveModulusCheck> {
    if xi.len() != eta.len() || xi.is_empty() {
        return Err(Error::Dimension {
            context: "modulus check samples",
            expected: xi.len(),
            found: eta.len(),
        });
    }
    if xi.iter().chain(eta).any(|v| !(*v >= 0.0) || !v.is_finite()) || !(p >= 1.0) {
        return Err(Error::Domain(
            "samples must be finite and non-negative, and p >= 1".into(),
        ));
    }
    let n = xi.len() as f64;
    let lhs = sum(xi.iter().zip(eta).map(|(x, e)| modulus.eval_unchecked(*x) * e)) / n;
    let eta_p = (sum(eta.iter().map(|e| e.powf(p))) / n).powf(p.recip());
    let xi_q = if p == 1.0 {
        xi.iter().copied().fold(0.0, f64::max)
    } else {
        let q = p / (p - 1.0);
        (sum(xi.iter().map(|x| x.powf(q))) / n).powf(q.recip())
    };
    let rhs = eta_p * modulus.eval_unchecked(xi_q);
    Ok(ConcaveModulusCheck {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// Summary exit code: 0 all pass, 1 any statistical failure, 2 degeneracy warnings only.
pub fn exit_code(failures: usize, warnings: usize) -> i32 {
    if failures > 0 {
        1
    } else if warnings > 0 {
        2
    } else {
        0
    }
}

/// `|x − y|` for two initial points.
pub fn displacement(pair: &InitialPair) -> f64 {
    let diff: Vec<f64> = pair.x.iter().zip(&pair.y).map(|(a, b)| a - b).collect();
    norm(&diff)
}
