//! Second-order estimators for the case where the target observes every
//! covariate: basis construction, Gram matrices and the U-statistic
//! correction.

mod basis;
mod estimator;
mod gram;
mod projection;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use basis::{build_basis, build_basis_from_rows, Basis, BasisKind, BasisSpec};
pub use estimator::{
    qr_estimate, qr_terms, u_statistic_bruteforce, u_statistic_fast, QrEstimate, QrTerms,
};
pub use gram::{default_lambda, estimate_gram, GramMatrix};
pub use projection::{spectral_norm, DiscreteDesign};

/// Which data a basis or Gram matrix was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Fold(usize),
    /// An independent sample or a known law.
    External,
}

impl DataSource {
    pub fn overlaps(self, other: DataSource) -> bool {
        matches!((self, other), (DataSource::Fold(a), DataSource::Fold(b)) if a == b)
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Fold(i) => write!(f, "fold {i}"),
            DataSource::External => f.write_str("external data"),
        }
    }
}

/// `round(n^{2d/(d+2α+2β)})` when smoothness is known, else `round(√n)`.
pub fn default_k(n: usize, d: usize, smoothness: Option<(f64, f64)>) -> usize {
    let n = n as f64;
    let k = match smoothness {
        Some((alpha, beta)) => n.powf(2.0 * d as f64 / (d as f64 + 2.0 * alpha + 2.0 * beta)),
        None => n.sqrt(),
    };
    (k.round() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_defaults() {
        assert_eq!(default_k(10_000, 5, None), 100);
        assert_eq!(default_k(10_000, 1, Some((0.75, 0.75))), 100);
        assert!(DataSource::Fold(2).overlaps(DataSource::Fold(2)));
        assert!(!DataSource::External.overlaps(DataSource::External));
    }
}
