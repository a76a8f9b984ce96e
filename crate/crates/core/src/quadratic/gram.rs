use nalgebra::DMatrix;

use super::{Basis, DataSource};
use crate::error::{Error, Result};
use crate::model::{CombinedSample, Treatment};
use crate::nuisance::NuisanceFit;

/// Weighted Gram matrix `Ω̂` of a basis together with the inverse of
/// `Ω̂ + λI`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    omega: DMatrix<f64>,
    inverse: DMatrix<f64>,
    lambda: f64,
    source: DataSource,
}

impl GramMatrix {
    /// Wraps a known matrix. `lambda` is added to the diagonal before
    /// inversion.
    pub fn from_matrix(omega: DMatrix<f64>, lambda: f64, source: DataSource) -> Result<Self> {
        let k = omega.nrows();
        if k == 0 || omega.ncols() != k {
            return Err(Error::Argument(
                "Gram matrix must be square and nonempty".into(),
            ));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("Gram matrix has non-finite entries".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Argument(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        let scale = omega
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..k {
            for j in 0..i {
                if (omega[(i, j)] - omega[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Argument(format!(
                        "Gram matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let regularized = &omega + DMatrix::identity(k, k) * lambda;
        let chol = regularized.cholesky().ok_or_else(|| {
            Error::Numerical("regularized Gram matrix is not positive definite".into())
        })?;
        let mut inverse = chol.inverse();
        // Symmetrize to remove rounding asymmetry.
        for i in 0..k {
            for j in 0..i {
                let m = 0.5 * (inverse[(i, j)] + inverse[(j, i)]);
                inverse[(i, j)] = m;
                inverse[(j, i)] = m;
            }
        }
        if inverse.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(
                "inverse Gram matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            omega,
            inverse,
            lambda,
            source,
        })
    }

    pub fn k(&self) -> usize {
        self.omega.nrows()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// `(Ω̂ + λI)⁻¹`.
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn source(&self) -> DataSource {
        self.source
    }
}

/// Default ridge `1e-8 · trace(Ω̂) / k`.
pub fn default_lambda(omega: &DMatrix<f64>) -> f64 {
    1e-8 * omega.trace() / omega.nrows() as f64
}

/// `Ω̂ = (1/n) Σ b(x_i) b(x_i)ᵀ ρ̂(x_i) π̂_a(x_i)` over every record of
/// `train`. The same weight serves both estimands.
pub fn estimate_gram(
    basis: &Basis,
    fit: &NuisanceFit,
    train: &CombinedSample,
    a: Treatment,
    lambda: Option<f64>,
    source: DataSource,
) -> Result<GramMatrix> {
    fit.check_matches(train)?;
    if train.n() == 0 {
        return Err(Error::Data("Gram training sample is empty".into()));
    }
    if !fit.covers_target_x() {
        return Err(Error::Unsupported(
            "Gram estimation needs propensity predictions at every record (V = X)".into(),
        ));
    }
    let k = basis.k();
    let mut omega = DMatrix::<f64>::zeros(k, k);
    for i in 0..train.n() {
        let x = train
            .x_of(i)
            .ok_or_else(|| Error::Unsupported("record lacks full covariates".into()))?;
        let weight = fit.rho(i) * fit.pi(a, i);
        let b = basis.eval_sparse(x);
        for &(j, bj) in &b {
            for &(l, bl) in &b {
                omega[(j, l)] += bj * bl * weight;
            }
        }
    }
    omega /= train.n() as f64;
    let lambda = lambda.unwrap_or_else(|| default_lambda(&omega));
    GramMatrix::from_matrix(omega, lambda, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SourceRecord, TargetRecord};
    use crate::nuisance::{NuisanceParts, Provenance};
    use crate::quadratic::{build_basis_from_rows, BasisKind, BasisSpec};

    fn sample_with_constant_weight(
        xs: &[f64],
        c_rho: f64,
        c_pi: f64,
    ) -> (CombinedSample, NuisanceFit) {
        let source: Vec<SourceRecord> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| SourceRecord {
                x: vec![x],
                a: if i % 2 == 0 {
                    Treatment::Treated
                } else {
                    Treatment::Control
                },
                y: 0.0,
            })
            .collect();
        let target = vec![TargetRecord {
            v: vec![42.0],
            survey: None,
        }];
        let s = CombinedSample::new(source, target, vec![0]).unwrap();
        let n = s.n();
        let fit = NuisanceFit::new(
            &s,
            NuisanceParts {
                rho: vec![c_rho; n],
                pi1: vec![c_pi; n],
                mu: [vec![0.0; n], vec![0.0; n]],
                tau: [vec![0.0; n], vec![0.0; n]],
                arm_given_v: None,
                provenance: Provenance::External,
            },
            0.01,
        )
        .unwrap();
        (s, fit)
    }

    #[test]
    fn histogram_diagonal() {
        let xs: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let (s, fit) = sample_with_constant_weight(&xs, 1.0 - 0.01, 0.5);
        let rows: Vec<Vec<f64>> = (0..s.n()).map(|i| s.x_of(i).unwrap().to_vec()).collect();
        let b = build_basis_from_rows(
            BasisSpec {
                kind: BasisKind::Histogram,
                k: 2,
            },
            &rows,
            DataSource::Fold(1),
        )
        .unwrap();
        let g = estimate_gram(
            &b,
            &fit,
            &s,
            Treatment::Treated,
            Some(0.0),
            DataSource::Fold(1),
        )
        .unwrap();
        let w = 0.99 * 0.5;
        assert!((g.omega()[(0, 0)] - w * 0.5).abs() < 1e-15);
        assert!((g.omega()[(1, 1)] - w * 0.5).abs() < 1e-15);
        assert_eq!(g.omega()[(0, 1)], 0.0);
    }

    #[test]
    fn scalar_reduction() {
        let (s, fit) = sample_with_constant_weight(&[1.0, 2.0, 3.0], 0.4, 0.25);
        let rows: Vec<Vec<f64>> = (0..s.n()).map(|i| s.x_of(i).unwrap().to_vec()).collect();
        let b = build_basis_from_rows(
            BasisSpec {
                kind: BasisKind::Cosine,
                k: 1,
            },
            &rows,
            DataSource::External,
        )
        .unwrap();
        let g =
            estimate_gram(&b, &fit, &s, Treatment::Control, None, DataSource::External).unwrap();
        assert!((g.omega()[(0, 0)] - 0.4 * 0.75).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_basis_scaled_identity() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let (s, fit) = sample_with_constant_weight(&xs, 0.6, 0.5);
        let rows: Vec<Vec<f64>> = (0..s.n()).map(|i| s.x_of(i).unwrap().to_vec()).collect();
        let b = build_basis_from_rows(
            BasisSpec {
                kind: BasisKind::Cosine,
                k: 8,
            },
            &rows,
            DataSource::External,
        )
        .unwrap();
        let g =
            estimate_gram(&b, &fit, &s, Treatment::Treated, None, DataSource::External).unwrap();
        let want = DMatrix::<f64>::identity(8, 8) * 0.3;
        assert!((g.omega() - want).abs().max() < 1e-10);
        let prod = (g.omega() + DMatrix::<f64>::identity(8, 8) * g.lambda()) * g.inverse();
        assert!((prod - DMatrix::<f64>::identity(8, 8)).abs().max() < 1e-10);
    }

    #[test]
    fn rejects_bad_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GramMatrix::from_matrix(m, 0.0, DataSource::External),
            Err(Error::Argument(_))
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(
            GramMatrix::from_matrix(m, 0.0, DataSource::External),
            Err(Error::Data(_))
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GramMatrix::from_matrix(m, 0.0, DataSource::External),
            Err(Error::Numerical(_))
        ));
    }
}
