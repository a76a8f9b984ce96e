use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::learner::{expit, logit};
use super::{NuisanceFit, NuisanceParts, Provenance};
use crate::error::{Error, Result};
use crate::model::{CombinedSample, Treatment, DEFAULT_EPS};
use crate::simulation::DgpSpec;

/// How the perturbations `ε_1, …, ε_4 ~ N(n^-α, n^-2α)` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One draw per nuisance, shared by every record; each estimate is then
    /// a fixed function of the covariates.
    #[default]
    Shared,
    /// A fresh draw per nuisance and record.
    PerRecord,
}

/// The true nuisances of `dgp` evaluated at every record.
pub fn oracle_nuisances(sample: &CombinedSample, dgp: &DgpSpec) -> Result<NuisanceFit> {
    build(sample, dgp, None, NoiseMode::Shared, 0)
}

/// True nuisances perturbed at rate `n^-α`:
/// `μ̂_a = μ_a + ε_1`, `τ̂_a = τ_a + ε_2`, `ρ̂ = expit(logit ρ + ε_3)`,
/// `π̂_1 = expit(logit π_1 + ε_4)`, each `ε ~ N(n^-α, n^-2α)`.
pub fn oracle_noisy_nuisances(
    sample: &CombinedSample,
    dgp: &DgpSpec,
    alpha: f64,
    seed: u64,
    mode: NoiseMode,
) -> Result<NuisanceFit> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Argument(format!(
            "alpha must lie in (0, 0.5], got {alpha}"
        )));
    }
    build(sample, dgp, Some(alpha), mode, seed)
}

fn build(
    sample: &CombinedSample,
    dgp: &DgpSpec,
    alpha: Option<f64>,
    mode: NoiseMode,
    seed: u64,
) -> Result<NuisanceFit> {
    if sample.v_index_map() != dgp.v_indices() {
        return Err(Error::Argument(
            "sample V columns do not match the design".into(),
        ));
    }
    let n = sample.n();
    let n1 = sample.n1();
    let scale = alpha.map_or(0.0, |a| (n as f64).powf(-a));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = move || -> f64 {
        if scale == 0.0 {
            0.0
        } else {
            scale + scale * rng.sample::<f64, _>(StandardNormal)
        }
    };
    let shared = [draw(), draw(), draw(), draw()];
    let mut eps = |k: usize| match mode {
        NoiseMode::Shared => shared[k],
        NoiseMode::PerRecord => draw(),
    };

    let nx = if dgp.v_equals_x() { n } else { n1 };
    let mut pi1 = Vec::with_capacity(nx);
    let mut mu = [Vec::with_capacity(nx), Vec::with_capacity(nx)];
    let mut rho = Vec::with_capacity(n);
    let mut tau = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut arm = Vec::with_capacity(n);
    for i in 0..n {
        let v = sample.v_of(i);
        if i < nx {
            let x = sample.x_of(i).expect("x available");
            let e1 = eps(0);
            mu[0].push(dgp.mu_x(Treatment::Control, x) + e1);
            mu[1].push(dgp.mu_x(Treatment::Treated, x) + e1);
            pi1.push(expit(logit(dgp.pi1_x(x)) + eps(3)));
        }
        let e2 = eps(1);
        tau[0].push(dgp.tau_v(Treatment::Control, &v) + e2);
        tau[1].push(dgp.tau_v(Treatment::Treated, &v) + e2);
        rho.push(expit(logit(dgp.rho_v()) + eps(2)));
        arm.push(dgp.pi1_v(&v));
    }
    NuisanceFit::new(
        sample,
        NuisanceParts {
            rho,
            pi1,
            mu,
            tau,
            arm_given_v: Some(arm),
            provenance: Provenance::Oracle,
        },
        DEFAULT_EPS,
    )
}
