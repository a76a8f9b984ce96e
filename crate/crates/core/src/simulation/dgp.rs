//! The five-covariate Gaussian design used by the simulation study.
//!
//! `X ~ N(0, I_5)`, `P(S = 1 | V) = 0.5`, `π_1(x) = expit(0.3 x_1 - 0.3 x_3)`,
//! `μ_1(x) = 1.5 x_1 + x_4 + 1`, `μ_0(x) = x_1`, unit outcome noise. With the
//! default `V = (X_1, X_2, X_3)` the nested regressions are
//! `τ_1(v) = 1.5 v_1 + 1` and `τ_0(v) = v_1`, so `θ_1 = ψ_1 = 1` and the
//! effect is 1. Coordinates are 1-based in prose and 0-based in code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dr::PopulationModel;
use crate::error::{Error, Result};
use crate::model::{CombinedSample, SourceRecord, TargetRecord, Treatment};
use crate::nuisance::expit;

pub const DGP_DIM: usize = 5;

/// Which coordinates of `X` the target population observes. Must include
/// coordinates 0 and 2 so that `P(A = 1 | V, S = 1) = π_1(X)` stays closed
/// form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DgpSpec {
    v_indices: Vec<usize>,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            v_indices: vec![0, 1, 2],
        }
    }
}

/// True values of the four target parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub psi: [f64; 2],
    pub theta: [f64; 2],
}

impl Truth {
    pub fn psi_contrast(&self) -> f64 {
        self.psi[1] - self.psi[0]
    }

    pub fn theta_contrast(&self) -> f64 {
        self.theta[1] - self.theta[0]
    }
}

/// A simulated sample plus the design's true parameter values.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub sample: CombinedSample,
    pub truth: Truth,
}

impl DgpSpec {
    pub fn new(mut v_indices: Vec<usize>) -> Result<Self> {
        v_indices.sort_unstable();
        v_indices.dedup();
        if v_indices.iter().any(|&j| j >= DGP_DIM) {
            return Err(Error::Argument(
                "simulation V indices must lie in 0..5".into(),
            ));
        }
        if !(v_indices.contains(&0) && v_indices.contains(&2)) {
            return Err(Error::Argument(
                "simulation V must contain coordinates 0 and 2".into(),
            ));
        }
        Ok(Self { v_indices })
    }

    /// `V = X`.
    pub fn full_covariate() -> Self {
        Self {
            v_indices: (0..DGP_DIM).collect(),
        }
    }

    pub fn v_indices(&self) -> &[usize] {
        &self.v_indices
    }

    pub fn v_equals_x(&self) -> bool {
        self.v_indices.len() == DGP_DIM
    }

    fn v_pos(&self, j: usize) -> Option<usize> {
        self.v_indices.iter().position(|&k| k == j)
    }

    pub fn v_of_x(&self, x: &[f64]) -> Vec<f64> {
        self.v_indices.iter().map(|&j| x[j]).collect()
    }

    pub fn rho_v(&self) -> f64 {
        0.5
    }

    pub fn pi1_x(&self, x: &[f64]) -> f64 {
        expit(0.3 * x[0] - 0.3 * x[2])
    }

    pub fn pi1_v(&self, v: &[f64]) -> f64 {
        let p0 = self.v_pos(0).expect("coordinate 0 in V");
        let p2 = self.v_pos(2).expect("coordinate 2 in V");
        expit(0.3 * v[p0] - 0.3 * v[p2])
    }

    pub fn mu_x(&self, a: Treatment, x: &[f64]) -> f64 {
        match a {
            Treatment::Treated => 1.5 * x[0] + x[3] + 1.0,
            Treatment::Control => x[0],
        }
    }

    /// `E[μ_a(X) | V]`: unobserved coordinates are independent with mean 0.
    pub fn tau_v(&self, a: Treatment, v: &[f64]) -> f64 {
        let x0 = v[self.v_pos(0).expect("coordinate 0 in V")];
        match a {
            Treatment::Treated => 1.5 * x0 + self.v_pos(3).map_or(0.0, |p| v[p]) + 1.0,
            Treatment::Control => x0,
        }
    }

    pub fn var_mu_given_v(&self, a: Treatment) -> f64 {
        match a {
            Treatment::Treated if self.v_pos(3).is_none() => 1.0,
            _ => 0.0,
        }
    }

    pub fn truth(&self) -> Truth {
        Truth {
            psi: [0.0, 1.0],
            theta: [0.0, 1.0],
        }
    }

    /// Draws `n` records; each is a source record with probability 0.5.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<SimulatedData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.simulate_with(n, &mut rng)
    }

    pub fn simulate_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SimulatedData> {
        if n < 10 {
            return Err(Error::Argument(format!(
                "simulation needs n >= 10, got {n}"
            )));
        }
        let mut source = Vec::with_capacity(n / 2 + 16);
        let mut target = Vec::with_capacity(n / 2 + 16);
        for _ in 0..n {
            let x: Vec<f64> = (0..DGP_DIM).map(|_| rng.sample(StandardNormal)).collect();
            let s_u: f64 = rng.random();
            let a_u: f64 = rng.random();
            let noise: f64 = rng.sample(StandardNormal);
            if s_u < self.rho_v() {
                let a = if a_u < self.pi1_x(&x) {
                    Treatment::Treated
                } else {
                    Treatment::Control
                };
                let y = self.mu_x(a, &x) + noise;
                source.push(SourceRecord { x, a, y });
            } else {
                target.push(TargetRecord {
                    v: self.v_of_x(&x),
                    survey: None,
                });
            }
        }
        let sample =
            CombinedSample::with_dimension(source, target, self.v_indices.clone(), DGP_DIM)?;
        Ok(SimulatedData {
            sample,
            truth: self.truth(),
        })
    }
}

/// Simulates `n` records from the default design.
pub fn simulate_dgp(n: usize, seed: u64) -> Result<SimulatedData> {
    DgpSpec::default().simulate(n, seed)
}

impl PopulationModel for DgpSpec {
    fn d(&self) -> usize {
        DGP_DIM
    }

    fn v_indices(&self) -> &[usize] {
        &self.v_indices
    }

    fn sample_x(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..DGP_DIM).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn rho(&self, _v: &[f64]) -> f64 {
        self.rho_v()
    }

    fn pi1(&self, x: &[f64]) -> f64 {
        self.pi1_x(x)
    }

    fn mu(&self, a: Treatment, x: &[f64]) -> f64 {
        self.mu_x(a, x)
    }

    fn tau(&self, a: Treatment, v: &[f64]) -> f64 {
        self.tau_v(a, v)
    }

    fn outcome_var(&self, _a: Treatment, _x: &[f64]) -> f64 {
        1.0
    }

    fn var_mu_given_v(&self, a: Treatment, _v: &[f64]) -> f64 {
        DgpSpec::var_mu_given_v(self, a)
    }
}
