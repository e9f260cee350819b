//! Transport distances, variation norms and entropy between empirical measures.

mod divergence;
mod measure;
mod transport;

pub use divergence::{pinsker_check, relative_entropy, total_variation, weighted_variation, PinskerReport};
pub use measure::{EmpiricalMeasure, SplitState};
pub use transport::{
    wasserstein, wasserstein_bruteforce, wasserstein_value, wasserstein_with_cap, CostSpec, DualCertificate,
    TransportPlan, TransportSolution, DEFAULT_SOLVER_CAP,
};

use crate::error::Result;
use crate::moduli::DiniModulus;

/// `|x1 - y1|^β + α(|x2 - y2|)`.
pub fn rho_beta_alpha(x: &SplitState, y: &SplitState, beta: f64, modulus: &DiniModulus) -> Result<f64> {
    y.check_dims(x.m(), x.d(), "rho_beta_alpha")?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(crate::Error::Domain(format!("beta = {beta} outside (0, 1]")));
    }
    Ok(rho_parts(&x.first, &y.first, &x.second, &y.second, beta, modulus))
}

pub(crate) fn rho_beta_alpha_flat(m: usize, x: &[f64], y: &[f64], beta: f64, modulus: &DiniModulus) -> f64 {
    rho_parts(&x[..m], &y[..m], &x[m..], &y[m..], beta, modulus)
}

fn rho_parts(x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64], beta: f64, modulus: &DiniModulus) -> f64 {
    let d1 = dist(x1, y1);
    let d2 = dist(x2, y2);
    let first = if beta == 1.0 || d1 == 0.0 { d1 } else { d1.powf(beta) };
    first + modulus.eval_unchecked(d2)
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
