//! Finite-support laws with `V = X` shared by the integration tests.

#![allow(dead_code)]

use gentrans::nuisance::{NuisanceFit, NuisanceParts, Provenance};
use gentrans::{CombinedSample, SourceRecord, TargetRecord, Treatment};
use nalgebra::DMatrix;

/// One-dimensional covariate on `support` with `P(X = x_j) = mass[j]`,
/// `P(S = 1 | x_j) = rho[j]`, `P(A = 1 | x_j, S = 1) = pi1[j]` and outcome
/// `μ_a(x_j) ± 1` with equal probability.
#[derive(Debug, Clone)]
pub struct PointLaw {
    pub support: Vec<f64>,
    pub mass: Vec<f64>,
    pub rho: Vec<f64>,
    pub pi1: Vec<f64>,
    pub mu: [Vec<f64>; 2],
}

/// Per-support-point nuisance values.
#[derive(Debug, Clone)]
pub struct PointNuisances {
    pub rho: Vec<f64>,
    pub pi1: Vec<f64>,
    pub mu: [Vec<f64>; 2],
}

/// Every atom of the observed-data law as one record, with its probability.
pub struct Atoms {
    pub sample: CombinedSample,
    pub prob: Vec<f64>,
    pub point: Vec<usize>,
}

impl PointLaw {
    pub fn example() -> Self {
        Self {
            support: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            mass: vec![0.10, 0.20, 0.15, 0.25, 0.18, 0.12],
            rho: vec![0.30, 0.50, 0.70, 0.40, 0.60, 0.55],
            pi1: vec![0.40, 0.60, 0.50, 0.35, 0.65, 0.45],
            mu: [
                vec![0.0, 0.5, -0.3, 1.2, 0.8, -1.0],
                vec![1.0, 2.0, 0.5, 1.5, 3.0, -0.5],
            ],
        }
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    fn pi(&self, a: Treatment, j: usize) -> f64 {
        if a == Treatment::Treated {
            self.pi1[j]
        } else {
            1.0 - self.pi1[j]
        }
    }

    /// `ψ_a` and `η_a = P(S = 0) θ_a`.
    pub fn psi_eta(&self, a: Treatment) -> (f64, f64) {
        let psi = (0..self.k())
            .map(|j| self.mass[j] * self.mu[a.index()][j])
            .sum();
        let eta = (0..self.k())
            .map(|j| self.mass[j] * (1.0 - self.rho[j]) * self.mu[a.index()][j])
            .sum();
        (psi, eta)
    }

    /// `Ω = Σ_j P(x_j) ρ(x_j) π_a(x_j) e_j e_jᵀ` under the true weights.
    pub fn exact_gram(&self, a: Treatment) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.k(),
            (0..self.k()).map(|j| self.mass[j] * self.rho[j] * self.pi(a, j)),
        ))
    }

    pub fn atoms(&self) -> Atoms {
        let mut source = Vec::new();
        let mut source_prob = Vec::new();
        let mut source_point = Vec::new();
        let mut target = Vec::new();
        let mut target_prob = Vec::new();
        let mut target_point = Vec::new();
        for j in 0..self.k() {
            let x = self.support[j];
            for a in [Treatment::Control, Treatment::Treated] {
                for e in [-1.0, 1.0] {
                    source.push(SourceRecord {
                        x: vec![x],
                        a,
                        y: self.mu[a.index()][j] + e,
                    });
                    source_prob.push(self.mass[j] * self.rho[j] * self.pi(a, j) / 2.0);
                    source_point.push(j);
                }
            }
            target.push(TargetRecord {
                v: vec![x],
                survey: None,
            });
            target_prob.push(self.mass[j] * (1.0 - self.rho[j]));
            target_point.push(j);
        }
        source_prob.extend(target_prob);
        source_point.extend(target_point);
        Atoms {
            sample: CombinedSample::new(source, target, vec![0]).unwrap(),
            prob: source_prob,
            point: source_point,
        }
    }

    /// The true nuisances.
    pub fn truth(&self) -> PointNuisances {
        PointNuisances {
            rho: self.rho.clone(),
            pi1: self.pi1.clone(),
            mu: self.mu.clone(),
        }
    }
}

/// Fit on a sample whose records carry the support index `point`.
pub fn fit_at(sample: &CombinedSample, point: &[usize], nu: &PointNuisances) -> NuisanceFit {
    let pick = |v: &[f64]| point.iter().map(|&j| v[j]).collect::<Vec<f64>>();
    let mu = [pick(&nu.mu[0]), pick(&nu.mu[1])];
    NuisanceFit::new(
        sample,
        NuisanceParts {
            rho: pick(&nu.rho),
            pi1: pick(&nu.pi1),
            tau: mu.clone(),
            mu,
            arm_given_v: None,
            provenance: Provenance::External,
        },
        1e-3,
    )
    .unwrap()
}
