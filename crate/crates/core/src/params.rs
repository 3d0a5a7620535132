//! Flat parameter vectors.
//!
//! A [`ParamVector`] carries the meta parameter `U`, task parameters `W`,
//! injected noise and gradient / incoherence vectors. Its length is fixed at
//! construction and binary arithmetic between vectors of different lengths
//! panics, since every such mismatch is a programming error inside the
//! trainers. Public entry points that accept user data validate lengths and
//! return [`Error::DimensionMismatch`] instead.

use std::ops::{Add, AddAssign, Index, Mul, Sub, SubAssign};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps `values`, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "parameter entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.check_len(other);
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn sq_dist(&self, other: &Self) -> f64 {
        self.check_len(other);
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.check_len(other);
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| alpha * v).collect())
    }

    /// Concatenates blocks into one stacked vector.
    pub fn concat<'a>(blocks: impl IntoIterator<Item = &'a ParamVector>) -> Self {
        let mut out = Vec::new();
        for b in blocks {
            out.extend_from_slice(&b.0);
        }
        Self(out)
    }

    /// Splits into consecutive blocks of the given lengths.
    pub fn split(&self, lens: &[usize]) -> Result<Vec<ParamVector>> {
        let total: usize = lens.iter().sum();
        if total != self.len() {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: self.len(),
            });
        }
        let mut out = Vec::with_capacity(lens.len());
        let mut start = 0;
        for &l in lens {
            out.push(Self(self.0[start..start + l].to_vec()));
            start += l;
        }
        Ok(out)
    }

    fn check_len(&self, other: &Self) {
        assert_eq!(
            self.len(),
            other.len(),
            "parameter vectors of different lengths"
        );
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AddAssign<&ParamVector> for ParamVector {
    fn add_assign(&mut self, rhs: &ParamVector) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&ParamVector> for ParamVector {
    fn sub_assign(&mut self, rhs: &ParamVector) {
        self.axpy(-1.0, rhs);
    }
}

impl Add for &ParamVector {
    type Output = ParamVector;
    fn add(self, rhs: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ParamVector {
    type Output = ParamVector;
    fn sub(self, rhs: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Mul<f64> for &ParamVector {
    type Output = ParamVector;
    fn mul(self, rhs: f64) -> ParamVector {
        self.scaled(rhs)
    }
}
