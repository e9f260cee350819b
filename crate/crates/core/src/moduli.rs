//! Dini-type moduli of continuity for the non-degenerate component.
//!
//! A usable modulus `α` is non-decreasing and concave with `α(0) = 0` and a
//! finite, positive `∫₀¹ α(r)²/r dr`. The crate ships three families; none of
//! them is singled out by the theory, they are convenient members of the class:
//!
//! * `Power(κ)`: `α(r) = r^κ`, `κ ∈ (0, 1]`;
//! * `LogPower(p)`: `α(r) = (log(e + 1/r))^{-p}`, square-Dini exactly when `p > 1/2`;
//! * `Table`: piecewise-linear interpolation of tabulated `(r, α(r))` knots,
//!   extended past the last knot with the last slope.
//!
//! Every family carries a positive `scale` multiplier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusFamily {
    Power { kappa: f64 },
    LogPower { p: f64 },
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiniModulus {
    pub family: ModulusFamily,
    pub scale: f64,
}

impl DiniModulus {
    pub fn power(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Domain(format!("power exponent {kappa} outside (0, 1]")));
        }
        Ok(Self {
            family: ModulusFamily::Power { kappa },
            scale: 1.0,
        })
    }

    pub fn identity() -> Self {
        Self {
            family: ModulusFamily::Power { kappa: 1.0 },
            scale: 1.0,
        }
    }

    pub fn log_power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("log-power exponent {p} must be positive")));
        }
        Ok(Self {
            family: ModulusFamily::LogPower { p },
            scale: 1.0,
        })
    }

    /// Knots must start at `(0, 0)` with strictly increasing abscissae.
    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        check_knots(&knots)?;
        Ok(Self {
            family: ModulusFamily::Table { knots },
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("modulus scale {scale} must be positive")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Reads a two-column `r value` table (whitespace or comma separated, `#` comments).
    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_table_str(&text)
    }

    pub fn from_table_str(text: &str) -> Result<Self> {
        let mut knots = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno + 1,
                    message: format!("{s:?}: {e}"),
                })
            };
            knots.push((parse(fields[0])?, parse(fields[1])?));
        }
        Self::table(knots)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("modulus evaluated at {r}")));
        }
        Ok(self.eval_unchecked(r))
    }

    /// `eval` for callers that already know `r >= 0` (distances).
    pub fn eval_unchecked(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let base = match &self.family {
            ModulusFamily::Power { kappa } => {
                if *kappa == 1.0 {
                    r
                } else {
                    r.powf(*kappa)
                }
            }
            ModulusFamily::LogPower { p } => (std::f64::consts::E + r.recip()).ln().powf(-p),
            ModulusFamily::Table { knots } => interpolate(knots, r),
        };
        self.scale * base
    }

    /// `∫_{eps0}^1 α(r)²/r dr`, integrated in `u = ln r`.
    pub fn dini_square_integral(&self, eps0: f64) -> Result<f64> {
        if !(eps0 > 0.0 && eps0 < 1.0) {
            return Err(Error::Domain(format!("eps0 = {eps0} outside (0, 1)")));
        }
        let lower = eps0.ln();
        let breaks: Vec<f64> = match &self.family {
            ModulusFamily::Table { knots } => knots.iter().filter(|(r, _)| *r > 0.0).map(|(r, _)| r.ln()).collect(),
            _ => Vec::new(),
        };
        quadrature::integrate(
            |u| {
                let a = self.eval_unchecked(u.exp());
                a * a
            },
            lower,
            0.0,
            &breaks,
            1e-15,
            1e-12,
            2000,
        )
    }

    pub fn at_one(&self) -> f64 {
        self.eval_unchecked(1.0)
    }

    fn knot_abscissae(&self) -> Vec<f64> {
        match &self.family {
            ModulusFamily::Table { knots } => knots.iter().map(|k| k.0).collect(),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self, grid_size: usize) -> Result<ValidationReport> {
        if grid_size < 16 {
            return Err(Error::Domain(format!("validation grid of {grid_size} < 16 points")));
        }
        let grid = validation_grid(grid_size, &self.knot_abscissae());
        let values: Vec<f64> = grid.iter().map(|&r| self.eval_unchecked(r)).collect();
        let tol = 1e-12 * self.at_one().max(1.0);
        let mut checks = Vec::new();

        let origin = self.eval_unchecked(0.0).abs();
        checks.push(CheckOutcome::new("zero_at_origin", origin, 0.0));

        let worst_neg = values.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        let finite = values.iter().all(|v| v.is_finite());
        checks.push(CheckOutcome::new(
            "non_negative_finite",
            if finite { worst_neg } else { f64::INFINITY },
            0.0,
        ));

        let worst_drop = values.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max);
        checks.push(CheckOutcome::new("non_decreasing", worst_drop, tol));

        let mut worst_concave: f64 = 0.0;
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                let mid = self.eval_unchecked(0.5 * (grid[i] + grid[j]));
                worst_concave = worst_concave.max(0.5 * (values[i] + values[j]) - mid);
            }
        }
        checks.push(CheckOutcome::new("midpoint_concave", worst_concave.max(0.0), tol));

        let dini = self.dini_tail_check();
        checks.push(dini.outcome.clone());

        let multipliers = [1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0];
        let mut worst_aa: f64 = 0.0;
        for &r in &multipliers {
            for (&t, &at) in grid.iter().zip(&values) {
                if t > 0.0 {
                    let excess = self.eval_unchecked(r * t) - r * at;
                    worst_aa = worst_aa.max(excess / (r * at).max(1.0));
                }
            }
        }
        checks.push(CheckOutcome::new("scaling_subadditive", worst_aa.max(0.0), 1e-12));

        let a1 = self.at_one();
        let worst_growth = grid
            .iter()
            .zip(&values)
            .map(|(r, v)| (v - a1 * (1.0 + r)).max(0.0))
            .fold(0.0, f64::max);
        checks.push(CheckOutcome::new("linear_growth", worst_growth, tol));

        let usable = checks.iter().all(|c| c.passed);
        Ok(ValidationReport {
            checks,
            dini_integral: dini.value,
            usable,
        })
    }

    /// Decade increments `Δ_k = ∫_{10^{-k-1}}^{10^{-k}} α²/r`. The integral over
    /// `(0, 1]` is finite when the increments decay faster than `k^{-1}`; the check
    /// fits the log-log slope of `Δ_k` against `k` over the deep decades.
    fn dini_tail_check(&self) -> DiniTail {
        const DECADES: usize = 18;
        let mut increments = Vec::with_capacity(DECADES);
        let mut total = 0.0;
        for k in 0..DECADES {
            let hi = 10f64.powi(-(k as i32));
            let lo = hi / 10.0;
            let piece = quadrature::integrate(
                |u| {
                    let a = self.eval_unchecked(u.exp());
                    a * a
                },
                lo.ln(),
                hi.ln(),
                &[],
                1e-300,
                1e-12,
                400,
            );
            match piece {
                Ok(v) => {
                    total += v;
                    increments.push(v);
                }
                Err(_) => {
                    return DiniTail {
                        value: f64::NAN,
                        outcome: CheckOutcome::new("dini_square_integrable", f64::INFINITY, 0.0),
                    }
                }
            }
        }
        let positive = total > 0.0;
        let deep: Vec<(f64, f64)> = increments
            .iter()
            .enumerate()
            .skip(4)
            .map(|(k, &v)| (k as f64, v))
            .collect();
        let (ks, vs): (Vec<f64>, Vec<f64>) = deep.iter().copied().unzip();
        let vanished = vs.iter().all(|v| *v < 1e-300) || vs.last().is_some_and(|v| *v <= 1e-200);
        let slope = if vanished {
            f64::NEG_INFINITY
        } else {
            crate::stats::log_log_fit(&ks, &vs).slope
        };
        // violation: how far the tail is from being summable (slope must be < -1)
        let violation = if !positive {
            f64::INFINITY
        } else {
            (slope + 1.0).max(0.0)
        };
        DiniTail {
            value: total,
            outcome: CheckOutcome {
                name: "dini_square_integrable",
                passed: positive && slope < -1.0,
                worst_violation: violation,
            },
        }
    }
}

struct DiniTail {
    value: f64,
    outcome: CheckOutcome,
}

fn check_knots(knots: &[(f64, f64)]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::Domain("a modulus table needs at least two knots".into()));
    }
    if knots[0] != (0.0, 0.0) {
        return Err(Error::Domain(format!(
            "modulus table must start at (0, 0), found {:?}",
            knots[0]
        )));
    }
    for (i, w) in knots.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Domain(format!(
                "modulus table abscissae not strictly increasing at row {}",
                i + 2
            )));
        }
    }
    if knots.iter().any(|(r, v)| !r.is_finite() || !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain(
            "modulus table values must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn interpolate(knots: &[(f64, f64)], r: f64) -> f64 {
    let idx = knots.partition_point(|(x, _)| *x <= r);
    let (i, j) = if idx >= knots.len() {
        (knots.len() - 2, knots.len() - 1)
    } else {
        (idx - 1, idx)
    };
    let (x0, y0) = knots[i];
    let (x1, y1) = knots[j];
    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
}

fn validation_grid(grid_size: usize, knots: &[f64]) -> Vec<f64> {
    let half = grid_size / 2;
    let mut grid = vec![0.0];
    // geometric part resolves the behavior near the origin
    for i in 0..half {
        let e = -8.0 + 8.0 * i as f64 / (half - 1) as f64;
        grid.push(10f64.powf(e));
    }
    for i in 1..=(grid_size - half) {
        grid.push(4.0 * i as f64 / (grid_size - half) as f64);
    }
    grid.extend_from_slice(knots);
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub worst_violation: f64,
}

impl CheckOutcome {
    fn new(name: &'static str, violation: f64, tol: f64) -> Self {
        Self {
            name,
            passed: violation <= tol,
            worst_violation: violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    /// `∫_{1e-18}^1 α²/r`, summed over decades.
    pub dini_integral: f64,
    /// False when any check fails; such a modulus must not be used in `ρ_{β,α}`.
    pub usable: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        assert_eq!(DiniModulus::identity().eval(0.7).unwrap(), 0.7);
        let sqrt = DiniModulus::power(0.5).unwrap();
        assert_eq!(sqrt.eval(4.0).unwrap(), 2.0);
        for m in [
            sqrt.clone(),
            DiniModulus::log_power(0.8).unwrap(),
            DiniModulus::table(vec![(0.0, 0.0), (0.5, 0.9), (1.0, 1.0)]).unwrap(),
        ] {
            assert_eq!(m.eval(0.0).unwrap(), 0.0);
        }
        assert!(matches!(sqrt.eval(-1e-3), Err(Error::Domain(_))));
        assert!(sqrt.eval(f64::NAN).is_err());
    }

    #[test]
    fn dini_integral_closed_forms() {
        let sqrt = DiniModulus::power(0.5).unwrap();
        // ∫ r^{2κ-1} = (1 - eps^{2κ}) / (2κ)
        assert!((sqrt.dini_square_integral(1e-12).unwrap() - 1.0).abs() < 1e-6);
        assert!((sqrt.dini_square_integral(0.25).unwrap() - 0.75).abs() < 1e-6);
        let id = DiniModulus::identity();
        assert!((id.dini_square_integral(1e-12).unwrap() - 0.5).abs() < 1e-6);
        assert!(sqrt.dini_square_integral(0.0).is_err());
        assert!(sqrt.dini_square_integral(1.0).is_err());
    }

    #[test]
    fn dini_integral_grows_as_eps_shrinks() {
        for m in [
            DiniModulus::power(0.3).unwrap(),
            DiniModulus::log_power(0.7).unwrap(),
            DiniModulus::table(vec![(0.0, 0.0), (0.1, 0.5), (1.0, 1.0)]).unwrap(),
        ] {
            let mut prev = 0.0;
            for k in 1..12 {
                let v = m.dini_square_integral(10f64.powi(-k)).unwrap();
                assert!(v >= prev * (1.0 - 1e-10), "{m:?}: {v} < {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn builtin_families_validate() {
        for m in [
            DiniModulus::power(0.5).unwrap(),
            DiniModulus::power(1.0).unwrap(),
            DiniModulus::log_power(1.0).unwrap(),
            DiniModulus::log_power(0.6).unwrap(),
        ] {
            let rep = m.validate(64).unwrap();
            assert!(rep.usable, "{m:?}: {rep:?}");
        }
    }

    #[test]
    fn log_power_below_half_is_not_square_dini() {
        let rep = DiniModulus::log_power(0.3).unwrap().validate(64).unwrap();
        assert!(!rep.check("dini_square_integrable").unwrap().passed);
        assert!(!rep.usable);
    }

    #[test]
    fn table_concavity() {
        let good = DiniModulus::table(vec![(0.0, 0.0), (0.5, 0.9), (1.0, 1.0)]).unwrap();
        assert!(good.validate(32).unwrap().check("midpoint_concave").unwrap().passed);
        let bad = DiniModulus::table(vec![(0.0, 0.0), (0.5, 0.1), (1.0, 1.0)]).unwrap();
        let rep = bad.validate(32).unwrap();
        let c = rep.check("midpoint_concave").unwrap();
        assert!(!c.passed);
        // α(0.5) = 0.1 against (α(0) + α(1)) / 2 = 0.5
        assert!(c.worst_violation >= 0.4 - 1e-12);
        assert!(!rep.usable);
    }

    #[test]
    fn table_parsing() {
        let m = DiniModulus::from_table_str("# r alpha\n0 0\n0.5, 0.9\n1 1\n").unwrap();
        assert!((m.eval(0.25).unwrap() - 0.45).abs() < 1e-15);
        assert!((m.eval(2.0).unwrap() - 1.2).abs() < 1e-15);
        assert!(matches!(
            DiniModulus::from_table_str("0 0\n1 2 3\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(DiniModulus::from_table_str("0.1 0\n1 1\n").is_err());
        assert!(DiniModulus::from_table_str("0 0\n1 1\n0.5 0.7\n").is_err());
    }

    #[test]
    fn validate_rejects_small_grid() {
        assert!(DiniModulus::identity().validate(8).is_err());
    }

    proptest! {
        #[test]
        fn power_scaling_inequality(kappa in 0.05f64..=1.0, r in 1.0f64..50.0, t in 1e-6f64..20.0) {
            let m = DiniModulus::power(kappa).unwrap();
            let lhs = m.eval(r * t).unwrap();
            let rhs = r * m.eval(t).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-14));
        }

        #[test]
        fn scale_multiplies(kappa in 0.05f64..=1.0, s in 0.01f64..100.0, r in 0.0f64..10.0) {
            let base = DiniModulus::power(kappa).unwrap();
            let scaled = base.clone().with_scale(s).unwrap();
            let a = scaled.eval(r).unwrap();
            let b = s * base.eval(r).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }

        #[test]
        fn integral_orders_with_modulus(k1 in 0.2f64..=1.0, dk in 0.0f64..0.5) {
            // r^{k1} >= r^{k1 + dk} on (0, 1]
            let big = DiniModulus::power(k1).unwrap();
            let small = DiniModulus::power((k1 + dk).min(1.0)).unwrap();
            let eps = 1e-6;
            prop_assert!(big.dini_square_integral(eps).unwrap() >= small.dini_square_integral(eps).unwrap() - 1e-12);
        }
    }
}
