//! Nuisance functions: the source propensity `π_a(x)`, the participation
//! probability `ρ(v)`, the outcome regressions `μ_a(x)` and the nested
//! regressions `τ_a(v)`.

mod crossfit;
mod learner;
mod oracle;

pub use crossfit::{
    cross_fit_nuisances, pseudo_outcome, pseudo_outcome_tau, NuisanceSpecs, TauMode,
};
pub use learner::{expit, fit_learner, logit, FittedModel, LearnerSpec};
pub use oracle::{oracle_noisy_nuisances, oracle_nuisances, NoiseMode};

use crate::error::{Error, Result};
use crate::model::{clip_probability, validate_eps, CombinedSample, FoldAssignment, Treatment};

/// How the predictions in a [`NuisanceFit`] were produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Out-of-fold predictions; every record's values come from models
    /// trained without its fold.
    CrossFitted(FoldAssignment),
    /// Perturbed true nuisances, independent of the sample.
    Oracle,
    /// Supplied by the caller.
    External,
}

/// Raw nuisance values before validation and clipping.
///
/// Per-record vectors follow the combined order of [`CombinedSample`]:
/// `rho`, `tau` and `arm_given_v` have length `n`; `pi1` and `mu` have
/// length `n1` (source only) or `n` (all records, possible when `V = X`).
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceParts {
    pub rho: Vec<f64>,
    pub pi1: Vec<f64>,
    pub mu: [Vec<f64>; 2],
    pub tau: [Vec<f64>; 2],
    pub arm_given_v: Option<Vec<f64>>,
    pub provenance: Provenance,
}

/// Validated per-record nuisance evaluations with probabilities clipped to
/// `[eps, 1 - eps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    rho: Vec<f64>,
    pi1: Vec<f64>,
    mu: [Vec<f64>; 2],
    tau: [Vec<f64>; 2],
    arm_given_v: Option<Vec<f64>>,
    eps: f64,
    n1: usize,
    provenance: Provenance,
}

impl NuisanceFit {
    /// Checks lengths against `sample`, rejects non-finite values and clips
    /// every probability. `π̂_0` is defined as `1 - π̂_1` after clipping.
    pub fn new(sample: &CombinedSample, parts: NuisanceParts, eps: f64) -> Result<Self> {
        validate_eps(eps)?;
        let n = sample.n();
        let n1 = sample.n1();
        let check = |name: &str, v: &[f64], lens: &[usize]| -> Result<()> {
            if !lens.contains(&v.len()) {
                return Err(Error::Argument(format!(
                    "nuisance '{name}' has {} values, expected {}",
                    v.len(),
                    lens.iter()
                        .map(|l| l.to_string())
                        .collect::<Vec<_>>()
                        .join(" or ")
                )));
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "nuisance '{name}' is not finite at record {i}"
                )));
            }
            Ok(())
        };
        check("rho", &parts.rho, &[n])?;
        check("tau0", &parts.tau[0], &[n])?;
        check("tau1", &parts.tau[1], &[n])?;
        check("pi1", &parts.pi1, &[n1, n])?;
        check("mu0", &parts.mu[0], &[parts.pi1.len()])?;
        check("mu1", &parts.mu[1], &[parts.pi1.len()])?;
        if let Some(g) = &parts.arm_given_v {
            check("arm_given_v", g, &[n])?;
        }
        if let Provenance::CrossFitted(f) = &parts.provenance {
            if f.n() != n {
                return Err(Error::Argument(format!(
                    "fold assignment covers {} records, sample has {n}",
                    f.n()
                )));
            }
        }
        let clip = |v: Vec<f64>| {
            v.into_iter()
                .map(|p| clip_probability(p, eps))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            rho: clip(parts.rho),
            pi1: clip(parts.pi1),
            mu: parts.mu,
            tau: parts.tau,
            arm_given_v: parts.arm_given_v.map(clip),
            eps,
            n1,
            provenance: parts.provenance,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.rho.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn folds(&self) -> Option<&FoldAssignment> {
        match &self.provenance {
            Provenance::CrossFitted(f) => Some(f),
            _ => None,
        }
    }

    /// `ρ̂` for record `i` (combined order).
    pub fn rho(&self, i: usize) -> f64 {
        self.rho[i]
    }

    pub fn rho_all(&self) -> &[f64] {
        &self.rho
    }

    /// `τ̂_a` for record `i`.
    pub fn tau(&self, a: Treatment, i: usize) -> f64 {
        self.tau[a.index()][i]
    }

    pub fn tau_all(&self, a: Treatment) -> &[f64] {
        &self.tau[a.index()]
    }

    /// True when `π̂` and `μ̂` are available at target records too.
    pub fn covers_target_x(&self) -> bool {
        self.pi1.len() == self.rho.len()
    }

    /// `π̂_a` for record `i`; target records need [`covers_target_x`](Self::covers_target_x).
    pub fn pi(&self, a: Treatment, i: usize) -> f64 {
        match a {
            Treatment::Treated => self.pi1[i],
            Treatment::Control => 1.0 - self.pi1[i],
        }
    }

    /// `μ̂_a` for record `i`; target records need [`covers_target_x`](Self::covers_target_x).
    pub fn mu(&self, a: Treatment, i: usize) -> f64 {
        self.mu[a.index()][i]
    }

    pub fn mu_all(&self, a: Treatment) -> &[f64] {
        &self.mu[a.index()]
    }

    pub fn n_source(&self) -> usize {
        self.n1
    }

    /// `P̂(A = 1 | V, S = 1)` for record `i`, when fitted.
    pub fn arm_given_v(&self, i: usize) -> Option<f64> {
        self.arm_given_v.as_ref().map(|g| g[i])
    }

    pub fn has_arm_given_v(&self) -> bool {
        self.arm_given_v.is_some()
    }

    /// Confirms this fit was built for `sample`.
    pub fn check_matches(&self, sample: &CombinedSample) -> Result<()> {
        if self.rho.len() != sample.n() || self.n1 != sample.n1() {
            return Err(Error::Argument(format!(
                "nuisance fit is for n = {} (n1 = {}), sample has n = {} (n1 = {})",
                self.rho.len(),
                self.n1,
                sample.n(),
                sample.n1()
            )));
        }
        Ok(())
    }

    /// Returns a copy with `τ̂_a` replaced.
    pub fn with_tau(&self, a: Treatment, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != self.rho.len() || tau.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(
                "replacement tau has wrong length or non-finite values".into(),
            ));
        }
        let mut out = self.clone();
        out.tau[a.index()] = tau;
        Ok(out)
    }

    /// Restricts the fit to the listed records (combined order of `sample`),
    /// producing a fit for `sample.subset(indices)`. Indices must list the
    /// source records before the target records.
    pub fn subset(&self, sample: &CombinedSample, indices: &[usize]) -> Result<Self> {
        self.check_matches(sample)?;
        let n1 = sample.n1();
        if indices.windows(2).any(|w| w[0] >= n1 && w[1] < n1) {
            return Err(Error::Argument(
                "subset indices must list source records first".into(),
            ));
        }
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let covers = self.covers_target_x();
        let pick_x = |v: &[f64]| {
            indices
                .iter()
                .filter(|&&i| covers || i < n1)
                .map(|&i| v[i])
                .collect::<Vec<_>>()
        };
        Ok(Self {
            rho: pick(&self.rho),
            pi1: pick_x(&self.pi1),
            mu: [pick_x(&self.mu[0]), pick_x(&self.mu[1])],
            tau: [pick(&self.tau[0]), pick(&self.tau[1])],
            arm_given_v: self.arm_given_v.as_deref().map(pick),
            eps: self.eps,
            n1: indices.iter().filter(|&&i| i < n1).count(),
            provenance: Provenance::External,
        })
    }
}
