use nalgebra::DVector;
use serde::Serialize;

use super::{Basis, DataSource, GramMatrix};
use crate::dr::se_of_mean;
use crate::error::{Error, Result};
use crate::model::{CombinedSample, EffectEstimate, EstimandKind, EstimandSpec, Method, Treatment};
use crate::nuisance::NuisanceFit;

/// Per-record ingredients of the quadratic estimator.
///
/// The second-order kernel is `u_i · b(x_i)ᵀ M b(x_j) · w_j` with
/// `M = (Ω̂ + λI)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrTerms {
    pub phi1: Vec<f64>,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub kind: EstimandKind,
    pub arm: Treatment,
    /// `1` for generalization, `n2 / n` for transportation.
    pub normalization: f64,
}

/// Generalization:
/// `φ1 = I(S=1,A=a)(Y-μ̂)/(ρ̂π̂) + μ̂`, `u = -I(S=1,A=a)(Y-μ̂)`,
/// `w = (I(S=1,A=a) - ρ̂π̂)/(ρ̂π̂)`.
///
/// Transportation (for `η = P(S=0) θ`):
/// `φ1 = I(S=1,A=a)(1-ρ̂)(Y-μ̂)/(ρ̂π̂) + I(S=0)μ̂`, `u = I(S=1,A=a)(Y-μ̂)`,
/// `w = (I(S=0)ρ̂π̂ - (1-ρ̂)I(S=1,A=a))/(ρ̂π̂)`.
pub fn qr_terms(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    a: Treatment,
    kind: EstimandKind,
) -> Result<QrTerms> {
    fit.check_matches(sample)?;
    require_full_covariates(sample, fit)?;
    if kind == EstimandKind::Transportation && sample.n2() == 0 {
        return Err(Error::Data(
            "transportation needs at least one target record".into(),
        ));
    }
    let n = sample.n();
    let n1 = sample.n1();
    let mut phi1 = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let rho = fit.rho(i);
        let rp = rho * fit.pi(a, i);
        let mu = fit.mu(a, i);
        let (treated_source, resid) = if i < n1 {
            let r = &sample.source()[i];
            (r.a == a, if r.a == a { r.y - mu } else { 0.0 })
        } else {
            (false, 0.0)
        };
        let ind = if treated_source { 1.0 } else { 0.0 };
        let (p, ui, wi) = match kind {
            EstimandKind::Generalization => (ind * resid / rp + mu, -ind * resid, (ind - rp) / rp),
            EstimandKind::Transportation => {
                let target = if i >= n1 { 1.0 } else { 0.0 };
                (
                    ind * (1.0 - rho) * resid / rp + target * mu,
                    ind * resid,
                    (target * rp - (1.0 - rho) * ind) / rp,
                )
            }
        };
        if !(p.is_finite() && ui.is_finite() && wi.is_finite()) {
            return Err(Error::Numerical(format!(
                "quadratic terms for record {i} are not finite"
            )));
        }
        phi1.push(p);
        u.push(ui);
        w.push(wi);
    }
    let normalization = match kind {
        EstimandKind::Generalization => 1.0,
        EstimandKind::Transportation => sample.p_target(),
    };
    Ok(QrTerms {
        phi1,
        u,
        w,
        kind,
        arm: a,
        normalization,
    })
}

fn require_full_covariates(sample: &CombinedSample, fit: &NuisanceFit) -> Result<()> {
    if !sample.v_equals_x() {
        return Err(Error::Unsupported(
            "second-order estimation is available only when the target observes all covariates (V = X); \
             with fewer target covariates the required higher-order terms are not available"
                .into(),
        ));
    }
    if !fit.covers_target_x() {
        return Err(Error::Unsupported(
            "second-order estimation needs outcome and propensity predictions at every record"
                .into(),
        ));
    }
    Ok(())
}

/// `(1/(n(n-1))) Σ_{i≠j} g(i, j)` by a double loop.
pub fn u_statistic_bruteforce<F: Fn(usize, usize) -> f64>(n: usize, kernel: F) -> Result<f64> {
    if n < 2 {
        return Err(Error::Argument(format!(
            "a U-statistic needs at least 2 records, got {n}"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += kernel(i, j);
            }
        }
    }
    Ok(total / (n as f64 * (n - 1) as f64))
}

/// `U_n` of the kernel `u_i b_iᵀ M b_j w_j` computed from the sums
/// `Σ u_i b_i` and `Σ w_j b_j`, minus the diagonal.
pub fn u_statistic_fast(
    basis_rows: &[Vec<(usize, f64)>],
    u: &[f64],
    w: &[f64],
    gram: &GramMatrix,
) -> Result<f64> {
    let n = basis_rows.len();
    if n < 2 {
        return Err(Error::Argument(format!(
            "a U-statistic needs at least 2 records, got {n}"
        )));
    }
    let k = gram.k();
    let m = gram.inverse();
    let mut su = DVector::<f64>::zeros(k);
    let mut sw = DVector::<f64>::zeros(k);
    let mut diag = 0.0;
    for ((b, &ui), &wi) in basis_rows.iter().zip(u).zip(w) {
        for &(j, v) in b {
            su[j] += ui * v;
            sw[j] += wi * v;
        }
        if ui != 0.0 && wi != 0.0 {
            let mut quad = 0.0;
            for &(j, bj) in b {
                for &(l, bl) in b {
                    quad += bj * m[(j, l)] * bl;
                }
            }
            diag += ui * wi * quad;
        }
    }
    let cross = su.dot(&(m * &sw));
    Ok((cross - diag) / (n as f64 * (n - 1) as f64))
}

/// A quadratic estimate with its decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QrEstimate {
    pub estimate: EffectEstimate,
    /// Mean of the first-order values, before normalization.
    pub first_order: f64,
    /// Second-order U-statistic, before normalization.
    pub u_stat: f64,
}

/// First plus second-order estimate of one arm. `estimation` tags the data
/// the sample came from; basis and Gram matrix must come from other folds.
/// The reported standard error uses first-order influence values only.
pub fn qr_estimate(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    basis: &Basis,
    gram: &GramMatrix,
    a: Treatment,
    kind: EstimandKind,
    estimation: DataSource,
) -> Result<QrEstimate> {
    for (name, src) in [("basis", basis.source()), ("Gram matrix", gram.source())] {
        if src.overlaps(estimation) {
            return Err(Error::Protocol(format!(
                "{name} was trained on {src}, the same data used for estimation"
            )));
        }
    }
    if basis.k() != gram.k() {
        return Err(Error::Argument(format!(
            "basis has k = {} but the Gram matrix has k = {}",
            basis.k(),
            gram.k()
        )));
    }
    let n = sample.n();
    if n < 2 {
        return Err(Error::Argument(format!(
            "estimation sample needs at least 2 records, got {n}"
        )));
    }
    if (basis.k() as f64) >= n as f64 * (n - 1) as f64 {
        return Err(Error::Argument(format!(
            "basis dimension k = {} must be below n(n-1) = {}",
            basis.k(),
            n * (n - 1)
        )));
    }
    let terms = qr_terms(sample, fit, a, kind)?;
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| basis.eval_sparse(sample.x_of(i).expect("V = X checked")))
        .collect();
    let u_stat = u_statistic_fast(&rows, &terms.u, &terms.w, gram)?;
    let first_order = terms.phi1.iter().sum::<f64>() / n as f64;
    let point = (first_order + u_stat) / terms.normalization;
    let centered: Vec<f64> = match kind {
        EstimandKind::Generalization => terms.phi1.iter().map(|v| v - point).collect(),
        EstimandKind::Transportation => terms
            .phi1
            .iter()
            .enumerate()
            .map(|(i, v)| (v - if i >= sample.n1() { point } else { 0.0 }) / terms.normalization)
            .collect(),
    };
    let estimate = EffectEstimate::from_point_se(
        point,
        se_of_mean(&centered),
        n,
        EstimandSpec::new(kind, a.into()),
        Method::Qr,
    );
    if !estimate.point.is_finite() {
        return Err(Error::Numerical("quadratic estimate is not finite".into()));
    }
    Ok(QrEstimate {
        estimate,
        first_order,
        u_stat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SourceRecord, TargetRecord};
    use crate::nuisance::{NuisanceParts, Provenance};
    use nalgebra::DMatrix;

    #[test]
    fn bruteforce_examples() {
        let z = [1.0, 2.0, 3.0];
        let u = u_statistic_bruteforce(3, |i, j| z[i] * z[j]).unwrap();
        assert!((u - 22.0 / 6.0).abs() < 1e-15);
        assert_eq!(u_statistic_bruteforce(3, |_, _| 2.5).unwrap(), 2.5);
        assert_eq!(u_statistic_bruteforce(3, |i, j| z[i] - z[j]).unwrap(), 0.0);
        assert!(matches!(
            u_statistic_bruteforce(1, |_, _| 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn two_point_u_statistic() {
        // k = 1, M = 2: U = (u0 w1 + u1 w0) · 2 · b0 b1 / 2.
        let gram =
            GramMatrix::from_matrix(DMatrix::from_element(1, 1, 0.5), 0.0, DataSource::External)
                .unwrap();
        let rows = vec![vec![(0, 1.5)], vec![(0, -2.0)]];
        let (u, w) = ([0.3, -0.7], [1.1, 0.4]);
        let got = u_statistic_fast(&rows, &u, &w, &gram).unwrap();
        let want = (0.3 * 1.5 * 2.0 * -2.0 * 0.4 + -0.7 * -2.0 * 2.0 * 1.5 * 1.1) / 2.0;
        assert!((got - want).abs() < 1e-15);
    }

    fn tiny() -> (CombinedSample, NuisanceFit) {
        let source = vec![
            SourceRecord {
                x: vec![0.0],
                a: Treatment::Treated,
                y: 2.0,
            },
            SourceRecord {
                x: vec![1.0],
                a: Treatment::Control,
                y: 1.0,
            },
            SourceRecord {
                x: vec![1.0],
                a: Treatment::Treated,
                y: 0.5,
            },
        ];
        let target = vec![TargetRecord {
            v: vec![0.0],
            survey: None,
        }];
        let s = CombinedSample::new(source, target, vec![0]).unwrap();
        let fit = NuisanceFit::new(
            &s,
            NuisanceParts {
                rho: vec![0.5; 4],
                pi1: vec![0.5; 4],
                mu: [vec![0.0; 4], vec![1.0; 4]],
                tau: [vec![0.0; 4], vec![1.0; 4]],
                arm_given_v: None,
                provenance: Provenance::External,
            },
            0.01,
        )
        .unwrap();
        (s, fit)
    }

    #[test]
    fn hand_terms() {
        let (s, fit) = tiny();
        let t = qr_terms(&s, &fit, Treatment::Treated, EstimandKind::Generalization).unwrap();
        assert_eq!(t.phi1, vec![5.0, 1.0, -1.0, 1.0]);
        assert_eq!(t.u, vec![-1.0, 0.0, 0.5, 0.0]);
        assert_eq!(t.w, vec![3.0, -1.0, 3.0, -1.0]);
        let t = qr_terms(&s, &fit, Treatment::Treated, EstimandKind::Transportation).unwrap();
        assert_eq!(t.phi1, vec![2.0, 0.0, -1.0, 1.0]);
        assert_eq!(t.u, vec![1.0, 0.0, -0.5, 0.0]);
        assert_eq!(t.w, vec![-2.0, 0.0, -2.0, 1.0]);
        assert_eq!(t.normalization, 0.25);
    }

    #[test]
    fn protocol_violation() {
        let (s, fit) = tiny();
        let basis =
            Basis::point_indicators(vec![vec![0.0], vec![1.0]], DataSource::Fold(1)).unwrap();
        let gram =
            GramMatrix::from_matrix(DMatrix::identity(2, 2), 0.0, DataSource::Fold(2)).unwrap();
        let run = |src| {
            qr_estimate(
                &s,
                &fit,
                &basis,
                &gram,
                Treatment::Treated,
                EstimandKind::Generalization,
                src,
            )
        };
        assert!(matches!(run(DataSource::Fold(1)), Err(Error::Protocol(_))));
        assert!(matches!(run(DataSource::Fold(2)), Err(Error::Protocol(_))));
        assert!(run(DataSource::Fold(0)).is_ok());
    }

    #[test]
    fn rejects_partial_covariates() {
        let source = vec![
            SourceRecord {
                x: vec![0.0, 1.0],
                a: Treatment::Treated,
                y: 2.0,
            },
            SourceRecord {
                x: vec![1.0, 0.0],
                a: Treatment::Control,
                y: 1.0,
            },
        ];
        let target = vec![TargetRecord {
            v: vec![0.0],
            survey: None,
        }];
        let s = CombinedSample::new(source, target, vec![0]).unwrap();
        let fit = NuisanceFit::new(
            &s,
            NuisanceParts {
                rho: vec![0.5; 3],
                pi1: vec![0.5; 2],
                mu: [vec![0.0; 2], vec![1.0; 2]],
                tau: [vec![0.0; 3], vec![1.0; 3]],
                arm_given_v: None,
                provenance: Provenance::External,
            },
            0.01,
        )
        .unwrap();
        assert!(matches!(
            qr_terms(&s, &fit, Treatment::Treated, EstimandKind::Generalization),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn fast_matches_bruteforce_dense() {
        let (s, fit) = tiny();
        let t = qr_terms(&s, &fit, Treatment::Treated, EstimandKind::Transportation).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let gram = GramMatrix::from_matrix(m, 0.0, DataSource::External).unwrap();
        let b: Vec<Vec<f64>> = vec![
            vec![1.0, 0.5],
            vec![-0.2, 1.0],
            vec![0.7, 0.7],
            vec![0.0, 2.0],
        ];
        let rows: Vec<Vec<(usize, f64)>> = b
            .iter()
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        let fast = u_statistic_fast(&rows, &t.u, &t.w, &gram).unwrap();
        let inv = gram.inverse();
        let brute = u_statistic_bruteforce(4, |i, j| {
            let bi = DVector::from_column_slice(&b[i]);
            let bj = DVector::from_column_slice(&b[j]);
            t.u[i] * bi.dot(&(inv * bj)) * t.w[j]
        })
        .unwrap();
        assert!((fast - brute).abs() <= 1e-12 * brute.abs().max(1e-300));
    }
}
