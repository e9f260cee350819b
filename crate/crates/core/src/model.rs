//! The stochastic Hamiltonian system
//!
//! ```text
//! dX1 = M X2 dt,
//! dX2 = B_t(X, L_X) dt + σ_t dW,
//! ```
//!
//! with `X1 ∈ R^m` carrying no noise. Drift families are evaluated against a
//! per-step [`MeasureSummary`] of the current law, so each particle step costs
//! `O(features)` rather than `O(particles)`.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::metrics::{self, CostSpec, EmpiricalMeasure, SplitState};
use crate::moduli::DiniModulus;
use crate::rng::{Purpose, RngPolicy};
use crate::stats::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSpec {
    Constant {
        matrix: Mat,
    },
    /// `base · (1 + amplitude · sin(2π frequency t))`.
    Modulated {
        base: Mat,
        amplitude: f64,
        frequency: f64,
    },
    /// `matrices[i]` holds on `[times[i], times[i+1])`; `times[0] = 0`.
    Table {
        times: Vec<f64>,
        matrices: Vec<Mat>,
    },
}

impl SigmaSpec {
    pub fn at(&self, t: f64) -> Mat {
        match self {
            SigmaSpec::Constant { matrix } => matrix.clone(),
            SigmaSpec::Modulated {
                base,
                amplitude,
                frequency,
            } => base.scaled(1.0 + amplitude * (std::f64::consts::TAU * frequency * t).sin()),
            SigmaSpec::Table { times, matrices } => {
                let idx = times.partition_point(|s| *s <= t).saturating_sub(1);
                matrices[idx].clone()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SigmaSpec::Constant { .. })
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            SigmaSpec::Constant { matrix } => matrix.shape_is(d, d, "sigma"),
            SigmaSpec::Modulated {
                base,
                amplitude,
                frequency,
            } => {
                base.shape_is(d, d, "sigma base")?;
                if !(amplitude.abs() < 1.0) || !frequency.is_finite() {
                    return Err(Error::Domain(format!(
                        "sigma modulation needs |amplitude| < 1 (got {amplitude}) and a finite frequency"
                    )));
                }
                Ok(())
            }
            SigmaSpec::Table { times, matrices } => {
                if times.is_empty() || times.len() != matrices.len() || times[0] != 0.0 {
                    return Err(Error::Domain(
                        "sigma table needs matching times/matrices starting at t = 0".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Domain("sigma table times must increase".into()));
                }
                matrices.iter().try_for_each(|m| m.shape_is(d, d, "sigma table"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    /// Output direction in `R^d`.
    pub amplitude: Vec<f64>,
    /// Frequency in `R^{m+d}`.
    pub frequency: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeTerm {
    pub coefficient: Vec<f64>,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Zero,
    /// `A1 x1 + A2 x2 + A3 mean(γ)`.
    LinearMeanField {
        a1: Mat,
        a2: Mat,
        a3: Mat,
    },
    /// `Σ_k a_k E_γ sin⟨ω_k, x − Y⟩ + Σ_j c_j tanh⟨v_j, x⟩ + g E_γ min(1, ρ(Y, 0))`.
    BoundedInteraction {
        #[serde(default)]
        fourier: Vec<FourierTerm>,
        #[serde(default)]
        ridges: Vec<RidgeTerm>,
        #[serde(default)]
        holder: Option<Vec<f64>>,
    },
}

/// The statistics of a law that a drift family reads.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSummary {
    None,
    Mean(Vec<f64>),
    Features { cos: Vec<f64>, sin: Vec<f64>, holder: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianModel {
    pub m: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub mmat: Mat,
    pub sigma: SigmaSpec,
    pub drift: DriftSpec,
    pub k_b: f64,
    pub beta: f64,
    pub modulus: DiniModulus,
    pub horizon: f64,
}

impl HamiltonianModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        d: usize,
        mmat: Mat,
        sigma: SigmaSpec,
        drift: DriftSpec,
        k_b: f64,
        beta: f64,
        modulus: DiniModulus,
        horizon: f64,
    ) -> Result<Self> {
        let model = Self {
            m,
            d,
            mmat,
            sigma,
            drift,
            k_b,
            beta,
            modulus,
            horizon,
        };
        model.check()?;
        Ok(model)
    }

    /// `m = d = 1`, `M = σ = 1`, zero drift.
    pub fn scalar_zero_drift(horizon: f64) -> Self {
        Self::new(
            1,
            1,
            Mat::identity(1),
            SigmaSpec::Constant {
                matrix: Mat::identity(1),
            },
            DriftSpec::Zero,
            1.0,
            1.0,
            DiniModulus::identity(),
            horizon,
        )
        .expect("valid scalar model")
    }

    fn check(&self) -> Result<()> {
        let (m, d) = (self.m, self.d);
        if m == 0 || d == 0 {
            return Err(Error::Domain("m and d must be positive".into()));
        }
        self.mmat.shape_is(m, d, "M")?;
        self.sigma.check(d)?;
        if !(self.beta > 2.0 / 3.0 && self.beta <= 1.0) {
            return Err(Error::Domain(format!("beta = {} outside (2/3, 1]", self.beta)));
        }
        if !(self.k_b > 0.0 && self.k_b.is_finite()) {
            return Err(Error::Domain(format!("K_B = {} must be positive", self.k_b)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon {} must be positive", self.horizon)));
        }
        let n = m + d;
        match &self.drift {
            DriftSpec::Zero => {}
            DriftSpec::LinearMeanField { a1, a2, a3 } => {
                a1.shape_is(d, m, "A1")?;
                a2.shape_is(d, d, "A2")?;
                a3.shape_is(d, n, "A3")?;
            }
            DriftSpec::BoundedInteraction {
                fourier,
                ridges,
                holder,
            } => {
                let bad = |what: &str| Error::Domain(format!("{what} has a wrong length or a non-finite entry"));
                let ok = |v: &[f64], len: usize| v.len() == len && v.iter().all(|x| x.is_finite());
                for f in fourier {
                    if !ok(&f.amplitude, d) || !ok(&f.frequency, n) {
                        return Err(bad("fourier term"));
                    }
                }
                for r in ridges {
                    if !ok(&r.coefficient, d) || !ok(&r.direction, n) {
                        return Err(bad("ridge term"));
                    }
                }
                if let Some(g) = holder {
                    if !ok(g, d) {
                        return Err(bad("holder term"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn sigma_at(&self, t: f64) -> Mat {
        self.sigma.at(t)
    }

    pub fn is_measure_independent(&self) -> bool {
        match &self.drift {
            DriftSpec::Zero => true,
            DriftSpec::LinearMeanField { a3, .. } => a3.data().iter().all(|v| *v == 0.0),
            DriftSpec::BoundedInteraction { fourier, holder, .. } => fourier.is_empty() && holder.is_none(),
        }
    }

    /// `sup |B|` for the bounded family.
    pub fn drift_bound(&self) -> Option<f64> {
        match &self.drift {
            DriftSpec::Zero => Some(0.0),
            DriftSpec::LinearMeanField { .. } => None,
            DriftSpec::BoundedInteraction {
                fourier,
                ridges,
                holder,
            } => Some(
                fourier.iter().map(|f| norm(&f.amplitude)).sum::<f64>()
                    + ridges.iter().map(|r| norm(&r.coefficient)).sum::<f64>()
                    + holder.as_deref().map_or(0.0, norm),
            ),
        }
    }

    pub fn summarize(&self, cloud: &EmpiricalMeasure) -> MeasureSummary {
        match &self.drift {
            DriftSpec::Zero => MeasureSummary::None,
            DriftSpec::LinearMeanField { .. } => MeasureSummary::Mean(cloud.mean()),
            DriftSpec::BoundedInteraction { fourier, holder, .. } => {
                let mut cos = vec![0.0; fourier.len()];
                let mut sin = vec![0.0; fourier.len()];
                let mut h = 0.0;
                let origin = vec![0.0; self.dim()];
                for (y, w) in cloud.atoms() {
                    for (k, f) in fourier.iter().enumerate() {
                        let phase = dot(&f.frequency, y);
                        cos[k] += w * phase.cos();
                        sin[k] += w * phase.sin();
                    }
                    if holder.is_some() {
                        let r = metrics::rho_beta_alpha_flat(self.m, y, &origin, self.beta, &self.modulus);
                        h += w * r.min(1.0);
                    }
                }
                MeasureSummary::Features { cos, sin, holder: h }
            }
        }
    }

    /// `out = B(x, γ)` where `summary = summarize(γ)`.
    pub fn drift_into(&self, x: &[f64], summary: &MeasureSummary, out: &mut [f64]) {
        let m = self.m;
        match (&self.drift, summary) {
            (DriftSpec::Zero, _) => out.iter_mut().for_each(|o| *o = 0.0),
            (DriftSpec::LinearMeanField { a1, a2, a3 }, MeasureSummary::Mean(mean)) => {
                a1.mul_vec_into(&x[..m], out);
                a2.mul_vec_add(&x[m..], out);
                a3.mul_vec_add(mean, out);
            }
            (
                DriftSpec::BoundedInteraction {
                    fourier,
                    ridges,
                    holder,
                },
                MeasureSummary::Features { cos, sin, holder: h },
            ) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (k, f) in fourier.iter().enumerate() {
                    let phase = dot(&f.frequency, x);
                    // E sin⟨ω, x − Y⟩ = sin⟨ω,x⟩ E cos⟨ω,Y⟩ − cos⟨ω,x⟩ E sin⟨ω,Y⟩
                    let s = phase.sin() * cos[k] - phase.cos() * sin[k];
                    for (o, a) in out.iter_mut().zip(&f.amplitude) {
                        *o += a * s;
                    }
                }
                for r in ridges {
                    let th = dot(&r.direction, x).tanh();
                    for (o, c) in out.iter_mut().zip(&r.coefficient) {
                        *o += c * th;
                    }
                }
                if let Some(g) = holder {
                    for (o, gi) in out.iter_mut().zip(g) {
                        *o += gi * h;
                    }
                }
            }
            _ => panic!("measure summary does not match the drift family"),
        }
    }

    /// `out = ∇_x B(x, γ) · v`.
    pub fn drift_directional(&self, x: &[f64], summary: &MeasureSummary, v: &[f64], out: &mut [f64]) {
        let m = self.m;
        match (&self.drift, summary) {
            (DriftSpec::Zero, _) => out.iter_mut().for_each(|o| *o = 0.0),
            (DriftSpec::LinearMeanField { a1, a2, .. }, _) => {
                a1.mul_vec_into(&v[..m], out);
                a2.mul_vec_add(&v[m..], out);
            }
            (DriftSpec::BoundedInteraction { fourier, ridges, .. }, MeasureSummary::Features { cos, sin, .. }) => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (k, f) in fourier.iter().enumerate() {
                    let phase = dot(&f.frequency, x);
                    let ds = (phase.cos() * cos[k] + phase.sin() * sin[k]) * dot(&f.frequency, v);
                    for (o, a) in out.iter_mut().zip(&f.amplitude) {
                        *o += a * ds;
                    }
                }
                for r in ridges {
                    let th = dot(&r.direction, x).tanh();
                    let dth = (1.0 - th * th) * dot(&r.direction, v);
                    for (o, c) in out.iter_mut().zip(&r.coefficient) {
                        *o += c * dth;
                    }
                }
            }
            _ => panic!("measure summary does not match the drift family"),
        }
    }

    /// Central difference of `B` along `v` with step `1e-5 (1 + |x|)`.
    pub fn drift_directional_fd(&self, x: &[f64], summary: &MeasureSummary, v: &[f64], out: &mut [f64]) {
        let eps = 1e-5 * (1.0 + norm(x));
        self.drift_directional_fd_step(x, summary, v, eps, out);
    }

    fn drift_directional_fd_step(&self, x: &[f64], summary: &MeasureSummary, v: &[f64], eps: f64, out: &mut [f64]) {
        let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - eps * b).collect();
        let mut bp = vec![0.0; self.d];
        let mut bm = vec![0.0; self.d];
        self.drift_into(&plus, summary, &mut bp);
        self.drift_into(&minus, summary, &mut bm);
        for ((o, p), q) in out.iter_mut().zip(&bp).zip(&bm) {
            *o = (p - q) / (2.0 * eps);
        }
    }

    /// `∇_x B(x, γ)` as a `d × (m+d)` matrix.
    pub fn jacobian(&self, x: &[f64], summary: &MeasureSummary) -> Mat {
        let n = self.dim();
        let mut cols = Vec::with_capacity(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let mut col = vec![0.0; self.d];
            self.drift_directional(x, summary, &e, &mut col);
            cols.push(col);
        }
        let data = (0..self.d).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
        Mat::from_row_major(self.d, n, data).expect("finite jacobian")
    }

    pub fn with_drift(&self, drift: DriftSpec) -> Result<Self> {
        let mut m = self.clone();
        m.drift = drift;
        m.check()?;
        Ok(m)
    }
}

/// `B_t(x, γ)` for a state and an empirical law.
pub fn drift_eval(model: &HamiltonianModel, t: f64, x: &SplitState, gamma: &EmpiricalMeasure) -> Result<Vec<f64>> {
    if !(0.0..=model.horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {}]", model.horizon)));
    }
    x.check_dims(model.m, model.d, "drift state")?;
    if gamma.m() != model.m || gamma.d() != model.d {
        return Err(Error::Dimension {
            context: "drift measure",
            expected: model.dim(),
            found: gamma.dim(),
        });
    }
    let mut out = vec![0.0; model.d];
    model.drift_into(&x.flat(), &model.summarize(gamma), &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub n_t: usize,
    pub n_x: usize,
    pub n_meas: usize,
    pub fd_eps: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_t: 16,
            n_x: 32,
            n_meas: 16,
            fd_eps: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub sigma_min_singular: f64,
    pub sigma_sup_norms: f64,
    pub gradient_sup: f64,
    pub gradient_fd_mismatch: f64,
    pub measure_lipschitz_ratio: f64,
    pub mmt_min_singular: f64,
    /// Fitted `C1` in `|B(x, γ)| <= C1 (1 + |x| + ‖γ‖₂)` over the probes.
    pub growth_constant: f64,
    pub drift_sup: f64,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

fn random_cloud(model: &HamiltonianModel, rng: &mut impl Rng, atoms: usize, spread: f64) -> EmpiricalMeasure {
    let n = model.dim();
    let coords: Vec<f64> = (0..atoms * n)
        .map(|_| spread * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let raw: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[1..].iter().sum();
    weights[0] = 1.0 - head;
    EmpiricalMeasure::new(model.m, model.d, coords, weights).expect("valid probe cloud")
}

/// Samples the assumptions on `σ`, `∇B`, the measure dependence of `B` and `MMᵀ`.
///
/// Every check is a statistic over probes, not a proof; continuity of `∇B` is
/// not checkable and is not attempted.
pub fn validate_assumptions(model: &HamiltonianModel, probe: &ProbeConfig) -> Result<AssumptionReport> {
    if probe.n_t < 8 || probe.n_x < 8 || probe.n_meas < 8 {
        return Err(Error::Domain("probe sizes must be at least 8".into()));
    }
    if !(probe.fd_eps > 0.0) {
        return Err(Error::Domain("fd_eps must be positive".into()));
    }
    let policy = RngPolicy::new(probe.seed);
    let mut rng = policy.stream(Purpose::Probe, 0);
    let n = model.dim();
    let mut checks = Vec::new();

    let mut smin = f64::INFINITY;
    let mut sup_norms: f64 = 0.0;
    for i in 0..probe.n_t {
        let t = model.horizon * i as f64 / (probe.n_t - 1) as f64;
        let s = model.sigma_at(t);
        let low = s.min_singular_value();
        smin = smin.min(low);
        let inv = if low > 0.0 { 1.0 / low } else { f64::INFINITY };
        sup_norms = sup_norms.max(s.norm() + inv);
    }
    checks.push(AssumptionCheck {
        name: "sigma_invertible",
        value: smin,
        threshold: 0.0,
        passed: smin > 0.0 && sup_norms.is_finite(),
    });

    let mut grad_sup: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    let mut growth: f64 = 0.0;
    let mut drift_sup: f64 = 0.0;
    let mut b = vec![0.0; model.d];
    let mut col_fd = vec![0.0; model.d];
    let mut col = vec![0.0; model.d];
    for _ in 0..probe.n_x {
        let gamma = random_cloud(model, &mut rng, 16, 1.0);
        let summary = model.summarize(&gamma);
        let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut jac = Vec::with_capacity(model.d * n);
        let mut e = vec![0.0; n];
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            model.drift_directional_fd_step(&x, &summary, &e, probe.fd_eps, &mut col_fd);
            model.drift_directional(&x, &summary, &e, &mut col);
            for (a, c) in col.iter().zip(&col_fd) {
                mismatch = mismatch.max((a - c).abs() / (1.0 + a.abs()));
            }
            cols.push(col_fd.clone());
        }
        for i in 0..model.d {
            for c in &cols {
                jac.push(c[i]);
            }
        }
        let jac = Mat::from_row_major(model.d, n, jac)?;
        grad_sup = grad_sup.max(jac.norm());
        model.drift_into(&x, &summary, &mut b);
        let bn = norm(&b);
        drift_sup = drift_sup.max(bn);
        growth = growth.max(bn / (1.0 + norm(&x) + gamma.moment(2.0).sqrt()));
    }
    checks.push(AssumptionCheck {
        name: "gradient_bound",
        value: grad_sup,
        threshold: model.k_b,
        passed: grad_sup <= model.k_b * (1.0 + 1e-4),
    });
    checks.push(AssumptionCheck {
        name: "gradient_matches_fd",
        value: mismatch,
        threshold: 1e-4,
        passed: mismatch <= 1e-4,
    });

    let rho_cost = CostSpec::RhoBetaAlpha {
        beta: model.beta,
        modulus: model.modulus.clone(),
    };
    let w2 = CostSpec::Wk { k: 2.0 };
    let mut lip: f64 = 0.0;
    let mut b2 = vec![0.0; model.d];
    for _ in 0..probe.n_meas {
        let gamma = random_cloud(model, &mut rng, 12, 1.0);
        // small atom translations plus a reshuffle of the weights
        let mut coords = gamma.coords().to_vec();
        for c in coords.iter_mut() {
            *c += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        let mut weights = gamma.weights().to_vec();
        let shift = 1 + rng.random_range(0..weights.len() - 1);
        weights.rotate_left(shift);
        let gamma_bar = EmpiricalMeasure::new(model.m, model.d, coords, weights)?;
        let dist = metrics::wasserstein(&gamma, &gamma_bar, &w2)?.value
            + metrics::wasserstein(&gamma, &gamma_bar, &rho_cost)?.value;
        let (s1, s2) = (model.summarize(&gamma), model.summarize(&gamma_bar));
        let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        model.drift_into(&x, &s1, &mut b);
        model.drift_into(&x, &s2, &mut b2);
        let diff: Vec<f64> = b.iter().zip(&b2).map(|(p, q)| p - q).collect();
        if dist > 0.0 {
            lip = lip.max(norm(&diff) / dist);
        }
    }
    checks.push(AssumptionCheck {
        name: "measure_lipschitz",
        value: lip,
        threshold: model.k_b,
        passed: lip <= model.k_b * (1.0 + 1e-9),
    });

    let mmt = model.mmat.matmul(&model.mmat.transpose());
    let mmt_min = mmt.min_singular_value();
    checks.push(AssumptionCheck {
        name: "mmt_invertible",
        value: mmt_min,
        threshold: 0.0,
        passed: mmt_min > 1e-12,
    });
    checks.push(AssumptionCheck {
        name: "linear_growth",
        value: growth,
        threshold: f64::INFINITY,
        passed: growth.is_finite(),
    });
    if let Some(bound) = model.drift_bound() {
        checks.push(AssumptionCheck {
            name: "drift_bounded",
            value: drift_sup,
            threshold: bound,
            passed: drift_sup <= bound * (1.0 + 1e-12) + 1e-15,
        });
    }
    let modulus_ok = model.modulus.validate(64)?.usable;
    checks.push(AssumptionCheck {
        name: "modulus_usable",
        value: if modulus_ok { 1.0 } else { 0.0 },
        threshold: 1.0,
        passed: modulus_ok,
    });

    Ok(AssumptionReport {
        sigma_min_singular: smin,
        sigma_sup_norms: sup_norms,
        gradient_sup: grad_sup,
        gradient_fd_mismatch: mismatch,
        measure_lipschitz_ratio: lip,
        mmt_min_singular: mmt_min,
        growth_constant: growth,
        drift_sup,
        checks,
    })
}

/// Multiplicative state dependence of the noise, `σ_t(x) = σ_t (1 + ε tanh⟨w, x⟩)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModulation {
    pub epsilon: f64,
    pub direction: Vec<f64>,
}

impl StateModulation {
    pub fn factor(&self, x: &[f64]) -> f64 {
        1.0 + self.epsilon * dot(&self.direction, x).tanh()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModulusConfig {
    Power {
        kappa: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    LogPower {
        p: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Two-column `r α(r)` file, relative to the config's directory.
    Table {
        file: String,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ModulusConfig {
    pub fn build(&self, base_dir: &Path) -> Result<DiniModulus> {
        match self {
            ModulusConfig::Power { kappa, scale } => DiniModulus::power(*kappa)?.with_scale(*scale),
            ModulusConfig::LogPower { p, scale } => DiniModulus::log_power(*p)?.with_scale(*scale),
            ModulusConfig::Table { file, scale } => {
                let path = base_dir.join(file);
                if !path.exists() {
                    return Err(Error::Config(format!("modulus table {} not found", path.display())));
                }
                DiniModulus::from_table_file(path)?.with_scale(*scale)
            }
        }
    }
}

/// The `[model]` section of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub mmat: Mat,
    pub horizon: f64,
    pub k_b: f64,
    pub beta: f64,
    pub modulus: ModulusConfig,
    pub sigma: SigmaSpec,
    pub drift: DriftSpec,
    #[serde(default)]
    pub state_noise: Option<StateModulation>,
}

impl ModelConfig {
    pub fn build(&self, base_dir: &Path) -> Result<HamiltonianModel> {
        HamiltonianModel::new(
            self.m,
            self.d,
            self.mmat.clone(),
            self.sigma.clone(),
            self.drift.clone(),
            self.k_b,
            self.beta,
            self.modulus.build(base_dir)?,
            self.horizon,
        )
    }
}
