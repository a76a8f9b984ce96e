//! Regression learners used for the nuisance functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-8
}

fn default_ridge_lambda() -> f64 {
    1e-6
}

fn default_k() -> usize {
    25
}

/// Learner family and hyperparameters.
///
/// In TOML a spec reads `{ family = "ridge", params = { lambda = 0.1 } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "family",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum LearnerSpec {
    /// Logistic regression by IRLS with an optional L2 penalty on the slopes.
    Logistic {
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        lambda: f64,
    },
    /// Linear least squares with an L2 penalty on the slopes.
    Ridge {
        #[serde(default = "default_ridge_lambda")]
        lambda: f64,
    },
    /// Mean response of the `k` nearest training rows (standardized
    /// Euclidean distance).
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    ConstantMean,
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        LearnerSpec::Logistic {
            max_iter: default_max_iter(),
            tol: default_tol(),
            lambda: 0.0,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        LearnerSpec::Ridge { lambda }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::Logistic {
                max_iter,
                tol,
                lambda,
            } => {
                if max_iter == 0 {
                    return Err(Error::Config("logistic max_iter must be at least 1".into()));
                }
                if !(tol > 0.0 && tol.is_finite()) {
                    return Err(Error::Config(format!(
                        "logistic tol must be positive, got {tol}"
                    )));
                }
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!(
                        "logistic lambda must be >= 0, got {lambda}"
                    )));
                }
            }
            LearnerSpec::Ridge { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!(
                        "ridge lambda must be >= 0, got {lambda}"
                    )));
                }
            }
            LearnerSpec::Knn { k } => {
                if k == 0 {
                    return Err(Error::Config("knn k must be at least 1".into()));
                }
            }
            LearnerSpec::ConstantMean => {}
        }
        Ok(())
    }
}

/// A trained model; immutable and cheap to share.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    /// Coefficients with the intercept first; predictions pass through expit.
    Logistic {
        beta: Vec<f64>,
    },
    /// Coefficients with the intercept first.
    Linear {
        beta: Vec<f64>,
    },
    Knn {
        rows: Vec<Vec<f64>>,
        responses: Vec<f64>,
        center: Vec<f64>,
        scale: Vec<f64>,
        k: usize,
    },
    Constant(f64),
}

impl FittedModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Logistic { beta } => expit(linear_predictor(beta, row)),
            FittedModel::Linear { beta } => linear_predictor(beta, row),
            FittedModel::Constant(c) => *c,
            FittedModel::Knn {
                rows,
                responses,
                center,
                scale,
                k,
            } => {
                let z: Vec<f64> = row
                    .iter()
                    .zip(center.iter().zip(scale))
                    .map(|(v, (c, s))| (v - c) / s)
                    .collect();
                let mut dist: Vec<(f64, usize)> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        (
                            r.iter()
                                .zip(&z)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>(),
                            i,
                        )
                    })
                    .collect();
                let k = (*k).min(dist.len());
                let by_dist =
                    |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < dist.len() {
                    dist.select_nth_unstable_by(k - 1, by_dist);
                }
                let mut nearest = dist[..k].to_vec();
                nearest.sort_by(by_dist);
                nearest.iter().map(|&(_, i)| responses[i]).sum::<f64>() / k as f64
            }
        }
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

fn linear_predictor(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
}

pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Trains `spec` on `features` (one row per observation) and `responses`.
///
/// `is_probability` marks a binary response; the logistic family requires it
/// and every response must then be 0 or 1.
pub fn fit_learner(
    spec: &LearnerSpec,
    features: &[Vec<f64>],
    responses: &[f64],
    is_probability: bool,
) -> Result<FittedModel> {
    spec.validate()?;
    if features.len() != responses.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} responses",
            features.len(),
            responses.len()
        )));
    }
    if responses.len() < 2 {
        return Err(Error::Data(format!(
            "learner needs at least 2 training rows, got {}",
            responses.len()
        )));
    }
    let p = features[0].len();
    if features.iter().any(|r| r.len() != p) {
        return Err(Error::Argument("feature rows have unequal lengths".into()));
    }
    if responses.iter().any(|v| !v.is_finite()) || features.iter().flatten().any(|v| !v.is_finite())
    {
        return Err(Error::Data(
            "learner inputs contain non-finite values".into(),
        ));
    }
    match *spec {
        LearnerSpec::Logistic {
            max_iter,
            tol,
            lambda,
        } => {
            if !is_probability {
                return Err(Error::Config(
                    "logistic learner needs a binary response".into(),
                ));
            }
            if responses.iter().any(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::Data("logistic responses must be 0 or 1".into()));
            }
            if responses.iter().all(|&y| y == responses[0]) {
                return Err(Error::Data(format!(
                    "logistic learner needs both labels in its training rows; all are {}",
                    responses[0]
                )));
            }
            irls(features, responses, max_iter, tol, lambda)
                .map(|beta| FittedModel::Logistic { beta })
        }
        LearnerSpec::Ridge { lambda } => {
            ridge(features, responses, lambda).map(|beta| FittedModel::Linear { beta })
        }
        LearnerSpec::Knn { k } => {
            let n = features.len() as f64;
            let mut center = vec![0.0; p];
            let mut scale = vec![0.0; p];
            for j in 0..p {
                center[j] = features.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = features
                    .iter()
                    .map(|r| (r[j] - center[j]).powi(2))
                    .sum::<f64>()
                    / n;
                scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
            let rows = features
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .map(|(j, v)| (v - center[j]) / scale[j])
                        .collect()
                })
                .collect();
            Ok(FittedModel::Knn {
                rows,
                responses: responses.to_vec(),
                center,
                scale,
                k: k.min(features.len()),
            })
        }
        LearnerSpec::ConstantMean => Ok(FittedModel::Constant(
            responses.iter().sum::<f64>() / responses.len() as f64,
        )),
    }
}

fn design(features: &[Vec<f64>]) -> DMatrix<f64> {
    let n = features.len();
    let p = features[0].len();
    DMatrix::from_fn(
        n,
        p + 1,
        |i, j| if j == 0 { 1.0 } else { features[i][j - 1] },
    )
}

/// Solves `(GᵀG + λD) β = Gᵀy` with `G = [1, X]` and `D = diag(0, 1, …, 1)`.
fn ridge(features: &[Vec<f64>], responses: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let g = design(features);
    let y = DVector::from_column_slice(responses);
    let mut lhs = g.transpose() * &g;
    for j in 1..lhs.ncols() {
        lhs[(j, j)] += lambda;
    }
    let rhs = g.transpose() * y;
    let singular = || {
        Error::Numerical(format!(
            "ridge normal equations are singular with lambda = {lambda}; use a positive ridge penalty"
        ))
    };
    let chol = lhs.clone().cholesky().ok_or_else(singular)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v * v), hi.max(v * v))
    });
    if lo.is_nan() || lo <= 1e-14 * hi {
        return Err(singular());
    }
    Ok(chol.solve(&rhs).iter().copied().collect())
}

fn log_likelihood(g: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, lambda: f64) -> f64 {
    let eta = g * beta;
    let n = y.len() as f64;
    let ll: f64 = eta
        .iter()
        .zip(y)
        .map(|(&t, &yi)| {
            let log1p_exp = if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            };
            yi * t - log1p_exp
        })
        .sum();
    let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    ll / n - 0.5 * lambda * pen
}

/// Newton-Raphson on the mean log-likelihood with step halving. Converged
/// when the sup-norm of the gradient is at most `tol`.
fn irls(
    features: &[Vec<f64>],
    y: &[f64],
    max_iter: usize,
    tol: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let g = design(features);
    let n = y.len() as f64;
    let k = g.ncols();
    let ybar = y.iter().sum::<f64>() / n;
    let mut beta = DVector::zeros(k);
    beta[0] = logit(ybar);
    let mut ll = log_likelihood(&g, y, &beta, lambda);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let eta = &g * &beta;
        let p: Vec<f64> = eta.iter().map(|&t| expit(t)).collect();
        let resid = DVector::from_iterator(y.len(), y.iter().zip(&p).map(|(yi, pi)| yi - pi));
        let mut grad = g.transpose() * resid / n;
        for j in 1..k {
            grad[j] -= lambda * beta[j];
        }
        grad_norm = grad.amax();
        if grad_norm <= tol {
            return Ok(beta.iter().copied().collect());
        }
        let w = DVector::from_iterator(y.len(), p.iter().map(|pi| (pi * (1.0 - pi)).max(1e-300)));
        let mut gw = g.clone();
        for (i, mut row) in gw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut h = g.transpose() * gw / n;
        for j in 1..k {
            h[(j, j)] += lambda;
        }
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => match h.lu().solve(&grad) {
                Some(s) => s,
                None => {
                    return Err(Error::Numerical(
                        "logistic Hessian is singular; add a positive lambda".into(),
                    ))
                }
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_ll = log_likelihood(&g, y, &cand, lambda);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let eta = &g * &beta;
    let resid = DVector::from_iterator(
        y.len(),
        y.iter().zip(eta.iter()).map(|(yi, &t)| yi - expit(t)),
    );
    let mut grad = g.transpose() * resid / n;
    for j in 1..k {
        grad[j] -= lambda * beta[j];
    }
    let final_norm = grad.amax();
    if final_norm <= tol {
        return Ok(beta.iter().copied().collect());
    }
    Err(Error::Convergence {
        iterations: max_iter,
        gradient_norm: final_norm.min(grad_norm),
        last_iterate: beta.iter().copied().collect(),
    })
}
