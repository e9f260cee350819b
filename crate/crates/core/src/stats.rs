//! Small statistics kit shared by the estimators: compensated sums, Monte Carlo
//! estimates with standard errors, and least-squares fits.

use serde::Serialize;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// A Monte Carlo estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Sample mean and standard error of the mean.
    ///
    /// The mean is computed as `min + mean(x - min)`, so a constant sample
    /// returns its value bit-for-bit with a zero standard error.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                value: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let anchor = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let shifted = sum(samples.iter().map(|x| x - anchor)) / n as f64;
        let mean = anchor + shifted;
        if n == 1 {
            return Self {
                value: mean,
                stderr: 0.0,
            };
        }
        let ss = sum(samples.iter().map(|x| {
            let dev = (x - anchor) - shifted;
            dev * dev
        }));
        let var = ss / (n - 1) as f64;
        Self {
            value: mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    /// Self-normalized importance-sampling mean `sum(w g) / sum(w)`, with the
    /// delta-method standard error. Equal `g` values give that value exactly.
    pub fn weighted(values: &[f64], weights: &[f64]) -> Self {
        assert_eq!(values.len(), weights.len());
        let total = sum(weights.iter().copied());
        if values.is_empty() || total <= 0.0 {
            return Self {
                value: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let anchor = values.iter().copied().fold(f64::INFINITY, f64::min);
        let shifted = sum(values.iter().zip(weights).map(|(g, w)| w * (g - anchor))) / total;
        let mean = anchor + shifted;
        let var_num = sum(values.iter().zip(weights).map(|(g, w)| {
            let dev = (g - anchor) - shifted;
            w * w * dev * dev
        }));
        Self {
            value: mean,
            stderr: var_num.sqrt() / total,
        }
    }

    /// Sample covariance of `(a, b)` with the standard error of the product-of-deviations mean.
    pub fn covariance(a: &[f64], b: &[f64]) -> Self {
        assert_eq!(a.len(), b.len());
        let n = a.len();
        if n < 2 {
            return Self {
                value: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let ma = Self::from_samples(a).value;
        let mb = Self::from_samples(b).value;
        let products: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
        let e = Self::from_samples(&products);
        Self {
            value: e.value * n as f64 / (n - 1) as f64,
            stderr: e.stderr * n as f64 / (n - 1) as f64,
        }
    }

    pub fn scale(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            stderr: self.stderr * factor.abs(),
        }
    }

    /// `|self - other| <= sigmas * sqrt(se1^2 + se2^2) + slack`.
    pub fn agrees_with(&self, other: &Estimate, sigmas: f64, slack: f64) -> bool {
        let combined = self.stderr.hypot(other.stderr);
        (self.value - other.value).abs() <= sigmas * combined + slack
    }
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = sum(x.iter().copied()) / n;
    let my = sum(y.iter().copied()) / n;
    let sxx = sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = sum(y.iter().map(|b| (b - my) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = sum(x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)));
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit {
        intercept,
        slope,
        r_squared,
    }
}

/// Fit `y = C x^slope` by least squares on logs. Non-positive pairs are skipped.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
