// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major observation matrix with validated, finite entries.

use crate::error::{Error, Result};

/// An `n x l` multivariate signal: `n` time samples of an `l`-dimensional
/// observation. Entries are guaranteed finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    n: usize,
    l: usize,
    values: Vec<f64>,
}

impl ObservationMatrix {
    /// Builds a matrix from a flat row-major buffer.
    ///
    /// Rejects empty shapes, shape/buffer mismatches, and non-finite
    /// entries; the diagnostic names the offending row and column.
    pub fn from_flat(n: usize, l: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_input("n must be >= 1; got 0"));
        }
        if l == 0 {
            return Err(Error::invalid_input("dimension must be >= 1; got 0"));
        }
        if values.len() != n * l {
            return Err(Error::invalid_input(format!(
                "expected {} values for a {n} x {l} matrix; got {}",
                n * l,
                values.len()
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid_input(format!(
                    "non-finite value {v} at row {}, column {}",
                    idx / l,
                    idx % l
                )));
            }
        }
        Ok(ObservationMatrix { n, l, values })
    }

    /// Builds a matrix from per-sample rows, all of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid_input("n must be >= 1; got 0"));
        }
        let l = rows[0].len();
        for (t, row) in rows.iter().enumerate() {
            if row.len() != l {
                return Err(Error::invalid_input(format!(
                    "row {t} has {} values; expected {l}",
                    row.len()
                )));
            }
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(rows.len(), l, values)
    }

    /// Builds a univariate matrix from a slice of samples.
    pub fn from_column(samples: &[f64]) -> Result<Self> {
        Self::from_flat(samples.len(), 1, samples.to_vec())
    }

    /// Number of time samples.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of each observation.
    pub fn dim(&self) -> usize {
        self.l
    }

    /// The `t`-th observation as a row slice.
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.l..(t + 1) * self.l]
    }

    /// Entry at sample `t`, coordinate `j`.
    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.l + j]
    }

    /// Flat row-major view of all entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copies the half-open row range `[start, end)` into a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n {
            return Err(Error::invalid_input(format!(
                "row range [{start}, {end}) out of bounds for n = {}",
                self.n
            )));
        }
        Ok(ObservationMatrix {
            n: end - start,
            l: self.l,
            values: self.values[start * self.l..end * self.l].to_vec(),
        })
    }

    /// Applies `f` entry-wise, producing a new matrix. Fails if `f`
    /// produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mapped: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        Self::from_flat(self.n, self.l, mapped)
    }
}
