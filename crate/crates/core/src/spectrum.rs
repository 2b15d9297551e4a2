//! Finite spectral realization of the operator `A`.
//!
//! Only eigen-data matters for the abstract equation: a state is a vector of
//! coefficients in the eigenbasis and every norm is a weighted sum of squares.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{MgtError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpectrum {
    eigenvalues: Vec<f64>,
    lambda0: f64,
}

impl OperatorSpectrum {
    /// Eigenvalues are sorted ascending; all must be positive.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(MgtError::param("eigenvalues", "spectrum needs at least one mode"));
        }
        if let Some(bad) = eigenvalues.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(MgtError::param("eigenvalues", format!("must be finite and > 0, got {bad}")));
        }
        eigenvalues.sort_by(f64::total_cmp);
        let lambda0 = 1.0 / eigenvalues[0].sqrt();
        Ok(OperatorSpectrum { eigenvalues, lambda0 })
    }

    /// `−d²/dx²` on `(0, L)` with Dirichlet ends: `μₖ = (kπ/L)²`, `k = 1..=n`.
    pub fn dirichlet(length: f64, n_modes: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(MgtError::param("length", format!("must be > 0, got {length}")));
        }
        if n_modes == 0 {
            return Err(MgtError::param("modes", "must be >= 1"));
        }
        let base = std::f64::consts::PI / length;
        let eig = (1..=n_modes).map(|k| (k as f64 * base).powi(2)).collect();
        let mut sp = Self::new(eig)?;
        sp.lambda0 = length / std::f64::consts::PI;
        Ok(sp)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Poincaré constant: `‖u‖ ≤ λ₀ ‖A^{1/2}u‖`.
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mu_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn mu_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    fn check(&self, v: &ModalVector) -> Result<()> {
        if v.len() != self.len() {
            return Err(MgtError::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `‖A^{1/2}v‖² = Σ μᵢ vᵢ²`
    pub fn a_half_norm2(&self, v: &ModalVector) -> Result<f64> {
        self.check(v)?;
        Ok(self.eigenvalues.iter().zip(v.iter()).map(|(m, x)| m * x * x).sum())
    }

    /// `(A v₁, v₂) = Σ μᵢ v₁ᵢ v₂ᵢ`
    pub fn a_inner(&self, v1: &ModalVector, v2: &ModalVector) -> Result<f64> {
        self.check(v1)?;
        self.check(v2)?;
        Ok(self
            .eigenvalues
            .iter()
            .zip(v1.iter().zip(v2.iter()))
            .map(|(m, (a, b))| m * a * b)
            .sum())
    }
}

/// Coefficients of an element of `H` in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModalVector(pub Vec<f64>);

impl ModalVector {
    pub fn zeros(n: usize) -> Self {
        ModalVector(vec![0.0; n])
    }

    /// `‖v‖² = Σ vᵢ²`
    pub fn h_norm2(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        ModalVector(self.0.iter().map(|x| c * x).collect())
    }
}

impl From<Vec<f64>> for ModalVector {
    fn from(v: Vec<f64>) -> Self {
        ModalVector(v)
    }
}

impl Deref for ModalVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ModalVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn h_norm2(v: &ModalVector) -> f64 {
    v.h_norm2()
}

pub fn a_half_norm2(v: &ModalVector, spectrum: &OperatorSpectrum) -> Result<f64> {
    spectrum.a_half_norm2(v)
}

pub fn a_inner(v1: &ModalVector, v2: &ModalVector, spectrum: &OperatorSpectrum) -> Result<f64> {
    spectrum.a_inner(v1, v2)
}
