//! Flat parameter vectors.
//!
//! Every optimizer in this crate updates a [`ParamVector`]: model parameters
//! flattened into one ordered sequence of `f64`. The vector itself tolerates
//! any contents (a diverging run may legitimately produce huge values); the
//! finiteness contract is enforced at operation entry points, where
//! [`ParamVector::validate`] turns NaN/Inf into an error instead of letting it
//! propagate silently.

use crate::error::{Error, Result};

/// Flat vector of real-valued model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Errors unless every entry is finite and the dimension is at least one.
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidArgument(
                "parameter vector must have dimension >= 1".into(),
            ));
        }
        for (i, v) in self.0.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "parameter coordinate {i} is {v}"
                )));
            }
        }
        Ok(())
    }

    /// Squared Euclidean norm.
    pub fn sq_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm.
    pub fn l2_norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self - scale * dir`, the gradient-descent update.
    pub fn sub_scaled(&self, dir: &ParamVector, scale: f64) -> ParamVector {
        debug_assert_eq!(self.dim(), dir.dim());
        ParamVector(
            self.0
                .iter()
                .zip(&dir.0)
                .map(|(a, b)| a - scale * b)
                .collect(),
        )
    }

    /// `self + scale * dir`.
    pub fn add_scaled(&self, dir: &ParamVector, scale: f64) -> ParamVector {
        self.sub_scaled(dir, -scale)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(values: &[f64]) -> Self {
        ParamVector(values.to_vec())
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}
