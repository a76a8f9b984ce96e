use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A finite-support law with a basis evaluated at each support point and a
/// weight function `w`, so that every integral is an exact finite sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDesign {
    basis: Vec<DVector<f64>>,
    mass: Vec<f64>,
    weight: Vec<f64>,
}

impl DiscreteDesign {
    pub fn new(basis: Vec<Vec<f64>>, mass: Vec<f64>, weight: Vec<f64>) -> Result<Self> {
        let n = basis.len();
        if n == 0 || mass.len() != n || weight.len() != n {
            return Err(Error::Argument(
                "support, mass and weight lengths must agree and be nonzero".into(),
            ));
        }
        let k = basis[0].len();
        if k == 0 || basis.iter().any(|b| b.len() != k) {
            return Err(Error::Argument(
                "basis rows have inconsistent dimension".into(),
            ));
        }
        if mass.iter().any(|&m| !(m >= 0.0 && m.is_finite()))
            || weight.iter().any(|&w| !(w > 0.0 && w.is_finite()))
        {
            return Err(Error::Argument(
                "masses must be nonnegative and weights positive".into(),
            ));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            basis: basis.into_iter().map(DVector::from_vec).collect(),
            mass,
            weight,
        })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn k(&self) -> usize {
        self.basis[0].len()
    }

    /// `Ω = ∫ b bᵀ w dF`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.gram_with(&self.weight)
    }

    /// Gram matrix under another weight function.
    pub fn gram_with(&self, weight: &[f64]) -> DMatrix<f64> {
        let k = self.k();
        let mut g = DMatrix::zeros(k, k);
        for ((b, &m), &w) in self.basis.iter().zip(&self.mass).zip(weight) {
            g += b * b.transpose() * (m * w);
        }
        g
    }

    /// `∫ g1 g2 w dF`.
    pub fn inner(&self, g1: &[f64], g2: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| self.mass[i] * self.weight[i] * g1[i] * g2[i])
            .sum()
    }

    pub fn norm(&self, g: &[f64]) -> f64 {
        self.inner(g, g).sqrt()
    }

    /// `x ↦ b(x)ᵀ A ∫ b g w dF`; with `A = Ω⁻¹` this is the weighted
    /// projection onto the span of the basis.
    pub fn project(&self, g: &[f64], a: &DMatrix<f64>) -> Vec<f64> {
        let mut moment = DVector::zeros(self.k());
        for (((b, m), w), gi) in self.basis.iter().zip(&self.mass).zip(&self.weight).zip(g) {
            moment += b * (m * w * gi);
        }
        let coef = a * moment;
        self.basis.iter().map(|b| b.dot(&coef)).collect()
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
}
