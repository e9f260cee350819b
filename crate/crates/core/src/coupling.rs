//! Coupling by change of measure.
//!
//! For a displacement `h = (h1, h2)` and horizon `t`, the control
//!
//! ```text
//! γ_s(h) = [(t−s)/t − 3s(t−s)/t² P M] h2 − 6s(t−s)/t³ P h1,   P = Mᵀ(MMᵀ)⁻¹,
//! ```
//!
//! steers the shifted path `X + (h1 + ∫₀ˢ Mγ, γ_s)` onto `X` at time `t`. With
//! `u = s/t` the first component of the shift has the closed form
//! `(1 − 3u² + 2u³) h1 + t u (1−u)² M h2`, which vanishes identically at `u = 1`;
//! the shifted and base terminal states therefore agree bit for bit.
//!
//! The Girsanov density of the shift gives the Bismut weight `N_t(h)` (its
//! derivative in the displacement) and the Harnack weight `R_t` (its value for
//! a finite displacement `y − x` and a change of law `γ → γ̃`).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::metrics::SplitState;
use crate::model::HamiltonianModel;
use crate::rng::{Purpose, RngPolicy};
use crate::simulate::{check_start, terminal_values, Dynamics, MeasureFlow, PathBundle, TestFn, TimeGrid};
use crate::stats::{dot, Estimate};

/// The control `s ↦ γ_s(h)` for a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlEval {
    pub t: f64,
    pub mmat: Mat,
    /// `Mᵀ(MMᵀ)⁻¹`, `d × m`.
    pub pseudo: Mat,
    /// `P M`, `d × d`.
    pub projector: Mat,
}

/// `γ_s(h)` and `d/ds γ_s(h)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlValue {
    pub gamma: Vec<f64>,
    pub gamma_prime: Vec<f64>,
}

impl ControlEval {
    pub fn new(mmat: &Mat, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("control horizon t = {t} must be positive")));
        }
        let mt = mmat.transpose();
        let mmt_inv = mmat.matmul(&mt).inverse("M Mᵀ")?;
        let pseudo = mt.matmul(&mmt_inv);
        let projector = pseudo.matmul(mmat);
        Ok(Self {
            t,
            mmat: mmat.clone(),
            pseudo,
            projector,
        })
    }

    pub fn m(&self) -> usize {
        self.mmat.rows()
    }

    pub fn d(&self) -> usize {
        self.mmat.cols()
    }

    /// Evaluation at `s = u t`; `u = 1` gives exactly zero.
    pub fn at_fraction(&self, u: f64, h: &[f64]) -> ControlValue {
        let mut gamma = vec![0.0; self.d()];
        let mut gamma_prime = vec![0.0; self.d()];
        self.at_fraction_into(u, h, &mut gamma, &mut gamma_prime);
        ControlValue { gamma, gamma_prime }
    }

    pub(crate) fn at_fraction_into(&self, u: f64, h: &[f64], gamma: &mut [f64], gamma_prime: &mut [f64]) {
        let m = self.m();
        let (h1, h2) = h.split_at(m);
        let t = self.t;
        let v = 1.0 - u;
        let a = v;
        let b = 3.0 * u * v;
        let c = 6.0 * u * v / t;
        let da = -1.0 / t;
        let db = 3.0 * (1.0 - 2.0 * u) / t;
        let dc = 6.0 * (1.0 - 2.0 * u) / (t * t);
        let ph2 = self.projector.mul_vec(h2);
        let ph1 = self.pseudo.mul_vec(h1);
        for i in 0..self.d() {
            gamma[i] = a * h2[i] - b * ph2[i] - c * ph1[i];
            gamma_prime[i] = da * h2[i] - db * ph2[i] - dc * ph1[i];
        }
    }

    /// `h1 + ∫₀ˢ M γ_r(h) dr` at `s = u t`.
    pub fn shift_first(&self, u: f64, h: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        self.shift_first_into(u, h, &mut out);
        out
    }

    pub(crate) fn shift_first_into(&self, u: f64, h: &[f64], out: &mut [f64]) {
        let m = self.m();
        let (h1, h2) = h.split_at(m);
        let v = 1.0 - u;
        let keep = 1.0 - u * u * (3.0 - 2.0 * u);
        let carry = self.t * u * v * v;
        let mh2 = self.mmat.mul_vec(h2);
        for i in 0..m {
            out[i] = keep * h1[i] + carry * mh2[i];
        }
        if u == 1.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    /// `∫₀ˢ M γ_r(h) dr`.
    pub fn integral_m_gamma(&self, s: f64, h: &[f64]) -> Vec<f64> {
        let u = s / self.t;
        self.shift_first(u, h)
            .iter()
            .zip(&h[..self.m()])
            .map(|(a, b)| a - b)
            .collect()
    }

    /// `sup_s |γ_s(h)|` on a fine grid.
    pub fn sup_norm(&self, h: &[f64], samples: usize) -> f64 {
        (0..=samples)
            .map(|k| crate::stats::norm(&self.at_fraction(k as f64 / samples as f64, h).gamma))
            .fold(0.0, f64::max)
    }
}

/// `(γ_s(h), γ'_s(h))` for `0 <= s <= t`.
pub fn control_gamma(mmat: &Mat, t: f64, s: f64, h: &SplitState) -> Result<ControlValue> {
    if !(0.0..=t).contains(&s) {
        return Err(Error::Domain(format!("s = {s} outside [0, {t}]")));
    }
    h.check_dims(mmat.rows(), mmat.cols(), "control displacement")?;
    let ctrl = ControlEval::new(mmat, t)?;
    let u = if s == t { 1.0 } else { s / t };
    Ok(ctrl.at_fraction(u, &h.flat()))
}

fn fraction(grid: &TimeGrid, j: usize) -> f64 {
    j as f64 / grid.n_steps as f64
}

/// Shift direction `(h1 + ∫Mγ, γ)` and `γ'` at every left grid point.
struct ControlTable {
    dim: usize,
    d: usize,
    direction: Vec<f64>,
    gamma_prime: Vec<f64>,
}

impl ControlTable {
    fn new(ctrl: &ControlEval, h: &[f64], grid: &TimeGrid) -> Self {
        let (m, d) = (ctrl.m(), ctrl.d());
        let dim = m + d;
        let mut direction = vec![0.0; grid.n_steps * dim];
        let mut gamma_prime = vec![0.0; grid.n_steps * d];
        for j in 0..grid.n_steps {
            let u = fraction(grid, j);
            let dir = &mut direction[j * dim..(j + 1) * dim];
            let (first, second) = dir.split_at_mut(m);
            ctrl.at_fraction_into(u, h, second, &mut gamma_prime[j * d..(j + 1) * d]);
            ctrl.shift_first_into(u, h, first);
        }
        Self {
            dim,
            d,
            direction,
            gamma_prime,
        }
    }

    fn direction(&self, j: usize) -> &[f64] {
        &self.direction[j * self.dim..(j + 1) * self.dim]
    }

    fn gamma_prime(&self, j: usize) -> &[f64] {
        &self.gamma_prime[j * self.d..(j + 1) * self.d]
    }
}

/// Per-step scratch for the weight integrands.
struct WeightScratch {
    grad: Vec<f64>,
    integrand: Vec<f64>,
}

impl WeightScratch {
    fn new(model: &HamiltonianModel) -> Self {
        Self {
            grad: vec![0.0; model.d],
            integrand: vec![0.0; model.d],
        }
    }

    /// `σ⁻¹[∇B(x)(h1 + ∫Mγ, γ) − γ']` at step `j`, left in `integrand`.
    fn bismut_integrand(&mut self, dynamics: &Dynamics<'_>, table: &ControlTable, j: usize, x: &[f64]) {
        dynamics
            .model
            .drift_directional(x, dynamics.summary(j), table.direction(j), &mut self.grad);
        for (g, gp) in self.grad.iter_mut().zip(table.gamma_prime(j)) {
            *g -= gp;
        }
        dynamics.sigma_inv(j).mul_vec_into(&self.grad, &mut self.integrand);
    }
}

fn bismut_setup<'a>(
    model: &'a HamiltonianModel,
    flow: &MeasureFlow,
    grid: TimeGrid,
    h: &SplitState,
) -> Result<(Dynamics<'a>, ControlTable)> {
    h.check_dims(model.m, model.d, "gradient direction")?;
    let dynamics = Dynamics::new(model, flow, grid)?.with_inverses()?;
    let ctrl = ControlEval::new(&model.mmat, grid.horizon)?;
    let table = ControlTable::new(&ctrl, &h.flat(), &grid);
    Ok((dynamics, table))
}

/// `N_t(h)` for every path of a stored bundle (left-point sums against its increments).
pub fn bismut_weight(
    bundle: &PathBundle,
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    h: &SplitState,
) -> Result<Vec<f64>> {
    if bundle.m != model.m || bundle.d != model.d {
        return Err(Error::Dimension {
            context: "bundle dimension",
            expected: model.dim(),
            found: bundle.m + bundle.d,
        });
    }
    let (dynamics, table) = bismut_setup(model, flow, bundle.grid, h)?;
    let weights = (0..bundle.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut scratch = WeightScratch::new(model);
            let mut acc = 0.0;
            for j in 0..bundle.grid.n_steps {
                scratch.bismut_integrand(&dynamics, &table, j, bundle.state(p, j));
                acc += dot(&scratch.integrand, bundle.increment(p, j));
            }
            acc
        })
        .collect();
    Ok(weights)
}

/// Terminal values `f(X_t)` and weights `N_t(h)` streamed path by path.
#[allow(clippy::too_many_arguments)]
pub fn bismut_samples(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    f: &TestFn<'_>,
    h: &SplitState,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let x0 = check_start(model, x)?;
    let (dynamics, table) = bismut_setup(model, flow, grid, h)?;
    let pairs: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.stream(Purpose::Paths, p as u64);
            let mut scratch = WeightScratch::new(model);
            let mut acc = 0.0;
            let xt = dynamics.run_path(&x0, &mut r, |j, xj, dw| {
                scratch.bismut_integrand(&dynamics, &table, j, xj);
                acc += dot(&scratch.integrand, dw);
            })?;
            let v = f(&SplitState::from_flat(model.m, &xt));
            if !v.is_finite() {
                return Err(Error::InvalidFunction(format!("f returned {v} on path {p}")));
            }
            Ok((v, acc))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// `∇_h P_t f(x) = E[f(X_t) N_t(h)]`, estimated as the sample covariance of `f(X_t)` and `N_t(h)`.
#[allow(clippy::too_many_arguments)]
pub fn bismut_gradient(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    f: &TestFn<'_>,
    h: &SplitState,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<Estimate> {
    let (values, weights) = bismut_samples(model, flow, x, f, h, n_paths, grid, rng)?;
    Ok(Estimate::covariance(&values, &weights))
}

/// Gradient in the degenerate component for `f` depending on `x2` only.
///
/// Uses the weight `∫⟨σ⁻¹ ∇_{(v,0)} B(X_s, μ_s), dW_s⟩`; no invertibility of `MMᵀ`
/// is needed.
#[allow(clippy::too_many_arguments)]
pub fn partial_bismut_gradient(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    f_second: &(dyn Fn(&[f64]) -> f64 + Sync),
    v: &[f64],
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<Estimate> {
    let x0 = check_start(model, x)?;
    if v.len() != model.m {
        return Err(Error::Dimension {
            context: "first-component direction",
            expected: model.m,
            found: v.len(),
        });
    }
    let dynamics = Dynamics::new(model, flow, grid)?.with_inverses()?;
    let mut direction = v.to_vec();
    direction.extend(std::iter::repeat_n(0.0, model.d));
    let pairs: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.stream(Purpose::Paths, p as u64);
            let mut grad = vec![0.0; model.d];
            let mut integrand = vec![0.0; model.d];
            let mut acc = 0.0;
            let xt = dynamics.run_path(&x0, &mut r, |j, xj, dw| {
                model.drift_directional(xj, dynamics.summary(j), &direction, &mut grad);
                dynamics.sigma_inv(j).mul_vec_into(&grad, &mut integrand);
                acc += dot(&integrand, dw);
            })?;
            let value = f_second(&xt[model.m..]);
            if !value.is_finite() {
                return Err(Error::InvalidFunction(format!("f returned {value} on path {p}")));
            }
            Ok((value, acc))
        })
        .collect::<Result<_>>()?;
    let (values, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(Estimate::covariance(&values, &weights))
}

/// `(P_t f(x + εh) − P_t f(x − εh)) / 2ε` with common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn fd_gradient(
    model: &HamiltonianModel,
    flow: &MeasureFlow,
    x: &SplitState,
    f: &TestFn<'_>,
    h: &SplitState,
    fd_eps: f64,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
) -> Result<Estimate> {
    if !(fd_eps > 0.0) {
        return Err(Error::Domain(format!("fd_eps = {fd_eps} must be positive")));
    }
    let x0 = check_start(model, x)?;
    h.check_dims(model.m, model.d, "gradient direction")?;
    let hv = h.flat();
    let plus: Vec<f64> = x0.iter().zip(&hv).map(|(a, b)| a + fd_eps * b).collect();
    let minus: Vec<f64> = x0.iter().zip(&hv).map(|(a, b)| a - fd_eps * b).collect();
    let dynamics = Dynamics::new(model, flow, grid)?;
    let up = terminal_values(&dynamics, &plus, n_paths, rng, Purpose::Paths, f)?;
    let down = terminal_values(&dynamics, &minus, n_paths, rng, Purpose::Paths, f)?;
    let diffs: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * fd_eps)).collect();
    Ok(Estimate::from_samples(&diffs))
}

/// Per-step record of a coupled path, kept only when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingDetail {
    /// `n_paths × (n_steps + 1) × (m + d)`.
    pub base: Vec<f64>,
    pub shifted: Vec<f64>,
    /// `n_paths × n_steps × d`, left-point values.
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledBundle {
    pub grid: TimeGrid,
    pub m: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n_paths: usize,
    /// Base terminal states, `n_paths × (m + d)`.
    pub terminal: Vec<f64>,
    /// Shifted terminal states, obtained by applying the shift at `s = t`.
    pub shifted_terminal: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// `∫₀ᵗ |η_s|² ds` per path.
    pub eta_sq: Vec<f64>,
    pub detail: Option<CouplingDetail>,
}

impl CoupledBundle {
    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn terminal_state(&self, p: usize) -> &[f64] {
        &self.terminal[p * self.dim()..(p + 1) * self.dim()]
    }

    /// Number of paths whose shifted and base terminal states differ in any bit.
    pub fn terminal_mismatches(&self) -> usize {
        self.terminal
            .chunks_exact(self.dim())
            .zip(self.shifted_terminal.chunks_exact(self.dim()))
            .filter(|(a, b)| {
                a.iter()
                    .zip(b.iter())
                    .any(|(p, q)| p.to_bits() != q.to_bits() && p != q)
            })
            .count()
    }

    /// `R_i / max_j R_j`, safe against overflow.
    pub fn scaled_weights(&self) -> Vec<f64> {
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter().map(|l| (l - top).exp()).collect()
    }

    /// `R̂_i = R_i N / Σ R`.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.scaled_weights();
        let total = crate::stats::sum(w.iter().copied());
        let n = w.len() as f64;
        w.iter().map(|v| v * n / total).collect()
    }

    /// `E R_t` under `P`.
    pub fn mean_weight(&self) -> Estimate {
        let r: Vec<f64> = self.log_weights.iter().map(|l| l.exp()).collect();
        Estimate::from_samples(&r)
    }

    pub fn effective_sample_size(&self) -> f64 {
        let w = self.scaled_weights();
        let s1 = crate::stats::sum(w.iter().copied());
        let s2 = crate::stats::sum(w.iter().map(|v| v * v));
        s1 * s1 / s2
    }
}

/// Couples `X^{x,γ}` under `P` with the shifted process, whose law under `R_t P`
/// is that of `X^{y,γ̃}`.
#[allow(clippy::too_many_arguments)]
pub fn harnack_coupling(
    model: &HamiltonianModel,
    flow_gamma: &MeasureFlow,
    flow_gamma_tilde: &MeasureFlow,
    x: &SplitState,
    y: &SplitState,
    n_paths: usize,
    grid: TimeGrid,
    rng: &RngPolicy,
    keep_detail: bool,
) -> Result<CoupledBundle> {
    let x0 = check_start(model, x)?;
    let y0 = check_start(model, y)?;
    if n_paths == 0 {
        return Err(Error::Domain("at least one path is required".into()));
    }
    let base = Dynamics::new(model, flow_gamma, grid)?.with_inverses()?;
    let tilde = Dynamics::new(model, flow_gamma_tilde, grid)?;
    let ctrl = ControlEval::new(&model.mmat, grid.horizon)?;
    let h: Vec<f64> = y0.iter().zip(&x0).map(|(a, b)| a - b).collect();
    let (m, d, dim) = (model.m, model.d, model.dim());
    let dt = grid.dt();

    struct PathOut {
        terminal: Vec<f64>,
        shifted_terminal: Vec<f64>,
        log_weight: f64,
        eta_sq: f64,
        detail: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    }

    let outs: Vec<PathOut> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng.stream(Purpose::Paths, p as u64);
            let mut gamma = vec![0.0; d];
            let mut gamma_prime = vec![0.0; d];
            let mut gamma_prime_next = vec![0.0; d];
            let mut unused = vec![0.0; d];
            let mut shifted = vec![0.0; dim];
            let mut b_base = vec![0.0; d];
            let mut b_tilde = vec![0.0; d];
            let mut left = vec![0.0; d];
            let mut right = vec![0.0; d];
            let mut eta_left = vec![0.0; d];
            let mut eta_right = vec![0.0; d];
            let mut stochastic = 0.0;
            let mut energy = crate::stats::CompensatedSum::new();
            let mut detail = keep_detail.then(|| {
                (
                    Vec::with_capacity((grid.n_steps + 1) * dim),
                    Vec::with_capacity((grid.n_steps + 1) * dim),
                    Vec::with_capacity(grid.n_steps * d),
                )
            });
            let xt = base.run_path(&x0, &mut r, |j, xj, dw| {
                let u = fraction(&grid, j);
                ctrl.at_fraction_into(u, &h, &mut gamma, &mut gamma_prime);
                ctrl.at_fraction_into(fraction(&grid, j + 1), &h, &mut unused, &mut gamma_prime_next);
                ctrl.shift_first_into(u, &h, &mut shifted[..m]);
                for i in 0..m {
                    shifted[i] += xj[i];
                }
                for i in 0..d {
                    shifted[m + i] = xj[m + i] + gamma[i];
                }
                model.drift_into(xj, base.summary(j), &mut b_base);
                model.drift_into(&shifted, tilde.summary(j), &mut b_tilde);
                for i in 0..d {
                    let mismatch = b_tilde[i] - b_base[i];
                    left[i] = mismatch - gamma_prime[i];
                    right[i] = mismatch - gamma_prime_next[i];
                }
                let sinv = base.sigma_inv(j);
                sinv.mul_vec_into(&left, &mut eta_left);
                sinv.mul_vec_into(&right, &mut eta_right);
                stochastic += dot(&eta_left, dw);
                // η is affine in s within the step: Simpson's rule is exact for |η|²
                let mut simpson = 0.0;
                for i in 0..d {
                    let mid = 0.5 * (eta_left[i] + eta_right[i]);
                    simpson += eta_left[i] * eta_left[i] + 4.0 * mid * mid + eta_right[i] * eta_right[i];
                }
                energy.add(simpson * dt / 6.0);
                if let Some((b, s, e)) = detail.as_mut() {
                    b.extend_from_slice(xj);
                    s.extend_from_slice(&shifted);
                    e.extend_from_slice(&eta_left);
                }
            })?;
            let mut shifted_terminal = xt.clone();
            ctrl.shift_first_into(1.0, &h, &mut shifted[..m]);
            ctrl.at_fraction_into(1.0, &h, &mut gamma, &mut gamma_prime);
            for i in 0..m {
                shifted_terminal[i] += shifted[i];
            }
            for i in 0..d {
                shifted_terminal[m + i] += gamma[i];
            }
            if let Some((b, s, _)) = detail.as_mut() {
                b.extend_from_slice(&xt);
                s.extend_from_slice(&shifted_terminal);
            }
            let eta_sq = energy.value();
            Ok(PathOut {
                terminal: xt,
                shifted_terminal,
                log_weight: stochastic - 0.5 * eta_sq,
                eta_sq,
                detail,
            })
        })
        .collect::<Result<_>>()?;

    let mut bundle = CoupledBundle {
        grid,
        m,
        d,
        x: x0,
        y: y0,
        n_paths,
        terminal: Vec::with_capacity(n_paths * dim),
        shifted_terminal: Vec::with_capacity(n_paths * dim),
        log_weights: Vec::with_capacity(n_paths),
        eta_sq: Vec::with_capacity(n_paths),
        detail: keep_detail.then(|| CouplingDetail {
            base: Vec::new(),
            shifted: Vec::new(),
            eta: Vec::new(),
        }),
    };
    for out in outs {
        bundle.terminal.extend(out.terminal);
        bundle.shifted_terminal.extend(out.shifted_terminal);
        bundle.log_weights.push(out.log_weight);
        bundle.eta_sq.push(out.eta_sq);
        if let (Some(dst), Some((b, s, e))) = (bundle.detail.as_mut(), out.detail) {
            dst.base.extend(b);
            dst.shifted.extend(s);
            dst.eta.extend(e);
        }
    }
    Ok(bundle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyCost {
    /// `½ E^Q ∫|η|²`, self-normalized over the bundle.
    pub half_int_eta_sq_q: Estimate,
    /// `max_i ∫|η|²_i`, standing in for the essential supremum.
    pub sup_path_int_eta_sq: f64,
    pub effective_sample_size: f64,
    /// Set when the effective sample size is below 10.
    pub degenerate: bool,
}

pub fn entropy_cost(bundle: &CoupledBundle) -> EntropyCost {
    let half: Vec<f64> = bundle.eta_sq.iter().map(|v| 0.5 * v).collect();
    let weights = bundle.scaled_weights();
    let ess = bundle.effective_sample_size();
    EntropyCost {
        half_int_eta_sq_q: Estimate::weighted(&half, &weights),
        sup_path_int_eta_sq: bundle.eta_sq.iter().copied().fold(0.0, f64::max),
        effective_sample_size: ess,
        degenerate: ess < 10.0,
    }
}
