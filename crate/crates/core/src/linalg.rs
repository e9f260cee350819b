//! Row-major dense matrices for the small per-step products of the simulators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        m.data.chunks(m.cols.max(1)).map(|r| r.to_vec()).collect()
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix has a non-finite entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::Dimension {
                context: "matrix row",
                expected: c,
                found: bad.len(),
            });
        }
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn shape_is(&self, rows: usize, cols: usize, context: &'static str) -> Result<()> {
        if self.rows != rows {
            return Err(Error::Dimension {
                context,
                expected: rows,
                found: self.rows,
            });
        }
        if self.cols != cols {
            return Err(Error::Dimension {
                context,
                expected: cols,
                found: self.cols,
            });
        }
        Ok(())
    }

    /// `out = self · x`.
    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        if self.cols == 0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
    }

    /// `out += self · x`.
    #[inline]
    pub fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        if self.cols == 0 {
            return;
        }
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let a = self.to_nalgebra() * other.to_nalgebra();
        Self::from_nalgebra(&a)
    }

    pub fn transpose(&self) -> Mat {
        Self::from_nalgebra(&self.to_nalgebra().transpose())
    }

    pub fn scaled(&self, factor: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Mat {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Mat {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        if self.rows == 0 || self.cols == 0 {
            return Vec::new();
        }
        self.to_nalgebra().singular_values().iter().copied().collect()
    }

    pub fn min_singular_value(&self) -> f64 {
        self.singular_values().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.singular_values().into_iter().fold(0.0, f64::max)
    }

    pub fn inverse(&self, context: &str) -> Result<Mat> {
        if self.rows != self.cols {
            return Err(Error::Singular(format!("{context}: matrix is not square")));
        }
        let smin = self.min_singular_value();
        let smax = self.norm();
        if !(smin > 1e-12 * smax.max(1e-300)) || smin == 0.0 {
            return Err(Error::Singular(format!("{context}: smallest singular value {smin:e}")));
        }
        let inv = self
            .to_nalgebra()
            .try_inverse()
            .ok_or_else(|| Error::Singular(context.to_string()))?;
        Ok(Self::from_nalgebra(&inv))
    }
}
