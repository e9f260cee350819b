use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(x1, x2)` of `R^m × R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl SplitState {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Self> {
        if first.iter().chain(&second).any(|v| !v.is_finite()) {
            return Err(Error::Domain("state has a non-finite coordinate".into()));
        }
        Ok(Self { first, second })
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            first: vec![0.0; m],
            second: vec![0.0; d],
        }
    }

    pub fn from_flat(m: usize, flat: &[f64]) -> Self {
        Self {
            first: flat[..m].to_vec(),
            second: flat[m..].to_vec(),
        }
    }

    pub fn m(&self) -> usize {
        self.first.len()
    }

    pub fn d(&self) -> usize {
        self.second.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.first.clone();
        v.extend_from_slice(&self.second);
        v
    }

    pub fn check_dims(&self, m: usize, d: usize, context: &'static str) -> Result<()> {
        if self.m() != m {
            return Err(Error::Dimension {
                context,
                expected: m,
                found: self.m(),
            });
        }
        if self.d() != d {
            return Err(Error::Dimension {
                context,
                expected: d,
                found: self.d(),
            });
        }
        Ok(())
    }
}

/// Weighted atoms in `R^{m+d}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    m: usize,
    d: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(m: usize, d: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let dim = m + d;
        if dim == 0 {
            return Err(Error::InvalidMeasure("zero-dimensional state".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::Dimension {
                context: "measure coordinates",
                expected: dim * weights.len(),
                found: coords.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
        }
        let total = crate::stats::sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom".into()));
        }
        Ok(Self { m, d, coords, weights })
    }

    pub fn uniform(m: usize, d: usize, coords: Vec<f64>) -> Result<Self> {
        let dim = m + d;
        let n = coords.len().checked_div(dim).unwrap_or(0);
        let w = 1.0 / n.max(1) as f64;
        Self::new(m, d, coords, vec![w; n])
    }

    pub fn dirac(x: &SplitState) -> Self {
        Self {
            m: x.m(),
            d: x.d(),
            coords: x.flat(),
            weights: vec![1.0],
        }
    }

    pub fn from_states(states: &[SplitState], weights: Vec<f64>) -> Result<Self> {
        let first = states.first().ok_or_else(|| Error::InvalidMeasure("no atoms".into()))?;
        let (m, d) = (first.m(), first.d());
        let mut coords = Vec::with_capacity(states.len() * (m + d));
        for s in states {
            s.check_dims(m, d, "measure atom")?;
            coords.extend_from_slice(&s.first);
            coords.extend_from_slice(&s.second);
        }
        Self::new(m, d, coords, weights)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        let dim = self.dim();
        &self.coords[i * dim..(i + 1) * dim]
    }

    pub fn split_atom(&self, i: usize) -> (&[f64], &[f64]) {
        self.atom(i).split_at(self.m)
    }

    pub fn state(&self, i: usize) -> SplitState {
        SplitState::from_flat(self.m, self.atom(i))
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.coords.chunks_exact(self.dim()).zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for (x, w) in self.atoms() {
            for (acc, v) in mean.iter_mut().zip(x) {
                *acc += w * v;
            }
        }
        mean
    }

    /// `∫ |x|^k dμ`.
    pub fn moment(&self, k: f64) -> f64 {
        self.atoms().map(|(x, w)| w * crate::stats::norm(x).powf(k)).sum()
    }

    pub fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.m != other.m {
            return Err(Error::Dimension {
                context: "measure m",
                expected: self.m,
                found: other.m,
            });
        }
        if self.d != other.d {
            return Err(Error::Dimension {
                context: "measure d",
                expected: self.d,
                found: other.d,
            });
        }
        Ok(())
    }

    pub fn csv_header(m: usize, d: usize) -> String {
        let mut cols = vec!["weight".to_string()];
        cols.extend((1..=m).map(|i| format!("x1_{i}")));
        cols.extend((1..=d).map(|i| format!("x2_{i}")));
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::csv_header(self.m, self.d))?;
        for (x, w) in self.atoms() {
            write!(out, "{w:e}")?;
            for v in x {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let header = header?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"weight") {
            return Err(Error::Parse {
                line: 1,
                message: "first column must be `weight`".into(),
            });
        }
        let m = cols.iter().filter(|c| c.starts_with("x1_")).count();
        let d = cols.iter().filter(|c| c.starts_with("x2_")).count();
        if m + d + 1 != cols.len() {
            return Err(Error::Parse {
                line: 1,
                message: format!("unrecognized columns in {header:?}"),
            });
        }
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        message: format!("{s:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            weights.push(fields[0]);
            coords.extend_from_slice(&fields[1..]);
        }
        Self::new(m, d, coords, weights)
    }
}
