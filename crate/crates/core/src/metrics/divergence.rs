use std::collections::BTreeMap;

use serde::Serialize;

use super::measure::EmpiricalMeasure;
use crate::error::Result;
use crate::stats::{norm, CompensatedSum};

fn key(x: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same atom
    x.iter().map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() }).collect()
}

/// Union support with `(μ({z}), ν({z}))`, keyed by exact coordinates.
fn union_support(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Vec<(Vec<f64>, f64, f64)>> {
    mu.check_same_space(nu)?;
    let mut map: BTreeMap<Vec<u64>, (Vec<f64>, CompensatedSum, CompensatedSum)> = BTreeMap::new();
    for (x, w) in mu.atoms() {
        map.entry(key(x))
            .or_insert_with(|| (x.to_vec(), CompensatedSum::new(), CompensatedSum::new()))
            .1
            .add(w);
    }
    for (x, w) in nu.atoms() {
        map.entry(key(x))
            .or_insert_with(|| (x.to_vec(), CompensatedSum::new(), CompensatedSum::new()))
            .2
            .add(w);
    }
    Ok(map.into_values().map(|(x, a, b)| (x, a.value(), b.value())).collect())
}

/// `‖μ - ν‖_var`, the L¹ distance of the weight vectors on the union support.
pub fn total_variation(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    let support = union_support(mu, nu)?;
    Ok(crate::stats::sum(support.iter().map(|(_, a, b)| (a - b).abs())))
}

/// `Σ_z |μ({z}) - ν({z})| (1 + |z|^k)`.
pub fn weighted_variation(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, k: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(crate::Error::Domain(format!("weighted variation order {k} < 1")));
    }
    let support = union_support(mu, nu)?;
    Ok(crate::stats::sum(
        support.iter().map(|(z, a, b)| (a - b).abs() * (1.0 + norm(z).powf(k))),
    ))
}

/// `Ent(ν | μ)`, `+∞` unless `ν ≪ μ`.
pub fn relative_entropy(nu: &EmpiricalMeasure, mu: &EmpiricalMeasure) -> Result<f64> {
    let support = union_support(nu, mu)?;
    let mut acc = CompensatedSum::new();
    for (_, n, m) in support {
        if n > 0.0 {
            if m <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc.add(n * (n / m).ln());
        }
    }
    Ok(acc.value().max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PinskerReport {
    pub tv: f64,
    pub ent: f64,
    pub holds: bool,
}

pub fn pinsker_check(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<PinskerReport> {
    let tv = total_variation(mu, nu)?;
    let ent = relative_entropy(nu, mu)?;
    Ok(PinskerReport {
        tv,
        ent,
        holds: tv * tv <= 2.0 * ent + 1e-12,
    })
}
