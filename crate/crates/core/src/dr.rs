//! Plug-in and doubly robust estimators, influence values, and a Monte Carlo
//! evaluation of the nonparametric efficiency bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    Arm, CombinedSample, EffectEstimate, EstimandKind, EstimandSpec, Method, Treatment,
};
use crate::nuisance::NuisanceFit;

/// Uncentered per-record influence values for one arm.
///
/// For generalization the estimator is the plain mean of `values`; for
/// transportation it is the mean divided by `normalization = n2 / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceValues {
    pub values: Vec<f64>,
    pub kind: EstimandKind,
    pub arm: Treatment,
    pub normalization: f64,
    is_target: Vec<bool>,
}

impl InfluenceValues {
    pub fn point(&self) -> f64 {
        mean(&self.values) / self.normalization
    }

    /// Centered influence values: `varphi_i - ψ̂` for generalization and
    /// `(varphi_i - I(S_i = 0) θ̂) / P̂(S = 0)` for transportation.
    pub fn centered(&self) -> Vec<f64> {
        let point = self.point();
        match self.kind {
            EstimandKind::Generalization => self.values.iter().map(|v| v - point).collect(),
            EstimandKind::Transportation => self
                .values
                .iter()
                .zip(&self.is_target)
                .map(|(v, &t)| (v - if t { point } else { 0.0 }) / self.normalization)
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation over `sqrt(len)`; zero for fewer than two values.
pub(crate) fn se_of_mean(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (n - 1) as f64 / n as f64).sqrt()
}

fn check_inputs(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    kind: EstimandKind,
    arm: Option<Treatment>,
) -> Result<()> {
    fit.check_matches(sample)?;
    if kind == EstimandKind::Transportation && sample.n2() == 0 {
        return Err(Error::Data(
            "transportation needs at least one target record".into(),
        ));
    }
    if let Some(a) = arm {
        if sample.n1() > 0 && !sample.source().iter().any(|r| r.a == a) {
            return Err(Error::Data(format!(
                "no source record received treatment {}; arm is degenerate",
                a.index()
            )));
        }
    }
    Ok(())
}

/// Per-record uncentered influence values.
///
/// Generalization:
/// `I(A=a,S=1)(Y-μ̂_a)/(ρ̂π̂_a) + I(S=1)(μ̂_a-τ̂_a)/ρ̂ + τ̂_a`.
/// Transportation:
/// `I(A=a,S=1)(1-ρ̂)(Y-μ̂_a)/(ρ̂π̂_a) + I(S=1)(1-ρ̂)(μ̂_a-τ̂_a)/ρ̂ + I(S=0)τ̂_a`.
pub fn influence_values(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    a: Treatment,
    kind: EstimandKind,
) -> Result<InfluenceValues> {
    check_inputs(sample, fit, kind, Some(a))?;
    let eps = fit.eps();
    let n1 = sample.n1();
    let mut values = Vec::with_capacity(sample.n());
    for i in 0..sample.n() {
        let rho = fit.rho(i);
        let tau = fit.tau(a, i);
        let v = if i < n1 {
            let r = &sample.source()[i];
            let pi = fit.pi(a, i);
            let mu = fit.mu(a, i);
            debug_assert!(rho >= eps * (1.0 - 1e-12) && pi >= eps * (1.0 - 1e-12));
            let resid = if r.a == a {
                (r.y - mu) / (rho * pi)
            } else {
                0.0
            };
            let bridge = (mu - tau) / rho;
            match kind {
                EstimandKind::Generalization => resid + bridge + tau,
                EstimandKind::Transportation => (1.0 - rho) * (resid + bridge),
            }
        } else {
            tau
        };
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "influence value for record {i} is not finite"
            )));
        }
        values.push(v);
    }
    let normalization = match kind {
        EstimandKind::Generalization => 1.0,
        EstimandKind::Transportation => sample.p_target(),
    };
    Ok(InfluenceValues {
        values,
        kind,
        arm: a,
        normalization,
        is_target: (0..sample.n()).map(|i| i >= n1).collect(),
    })
}

/// Averages `τ̂_a` over all records (generalization) or over target records
/// (transportation). The standard error is the naive spread of the averaged
/// values.
pub fn plugin_estimate(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    arm: Arm,
    kind: EstimandKind,
) -> Result<EffectEstimate> {
    check_inputs(sample, fit, kind, None)?;
    let range = match kind {
        EstimandKind::Generalization => 0..sample.n(),
        EstimandKind::Transportation => sample.n1()..sample.n(),
    };
    let vals: Vec<f64> = range
        .map(|i| match arm.treatment() {
            Some(a) => fit.tau(a, i),
            None => fit.tau(Treatment::Treated, i) - fit.tau(Treatment::Control, i),
        })
        .collect();
    Ok(EffectEstimate::from_point_se(
        mean(&vals),
        se_of_mean(&vals),
        vals.len(),
        EstimandSpec::new(kind, arm),
        Method::Plugin,
    ))
}

/// Doubly robust estimate of one arm with an influence-function standard
/// error.
pub fn dr_estimate(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    a: Treatment,
    kind: EstimandKind,
) -> Result<EffectEstimate> {
    let iv = influence_values(sample, fit, a, kind)?;
    Ok(EffectEstimate::from_point_se(
        iv.point(),
        se_of_mean(&iv.centered()),
        sample.n(),
        EstimandSpec::new(kind, a.into()),
        Method::Dr,
    ))
}

/// Treated-minus-control doubly robust contrast; the standard error uses the
/// per-record difference of centered influence values.
pub fn ate_contrast(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    kind: EstimandKind,
) -> Result<EffectEstimate> {
    let t = influence_values(sample, fit, Treatment::Treated, kind)?;
    let c = influence_values(sample, fit, Treatment::Control, kind)?;
    Ok(contrast_from(&t, &c, Method::Dr))
}

pub(crate) fn contrast_from(
    t: &InfluenceValues,
    c: &InfluenceValues,
    method: Method,
) -> EffectEstimate {
    let diff: Vec<f64> = t
        .centered()
        .iter()
        .zip(c.centered())
        .map(|(a, b)| a - b)
        .collect();
    EffectEstimate::from_point_se(
        t.point() - c.point(),
        se_of_mean(&diff),
        t.len(),
        EstimandSpec::new(t.kind, Arm::Contrast),
        method,
    )
}

/// Doubly robust estimate for any arm selector.
pub fn dr_estimate_arm(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    arm: Arm,
    kind: EstimandKind,
) -> Result<EffectEstimate> {
    match arm.treatment() {
        Some(a) => dr_estimate(sample, fit, a, kind),
        None => ate_contrast(sample, fit, kind),
    }
}

/// A population with known nuisances, used to evaluate efficiency bounds.
pub trait PopulationModel: Sync {
    fn d(&self) -> usize;
    fn v_indices(&self) -> &[usize];
    /// One draw of `X` from the whole (source and target) population.
    fn sample_x(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// `P(S = 1 | V = v)`.
    fn rho(&self, v: &[f64]) -> f64;
    /// `P(A = 1 | X = x, S = 1)`.
    fn pi1(&self, x: &[f64]) -> f64;
    fn mu(&self, a: Treatment, x: &[f64]) -> f64;
    fn tau(&self, a: Treatment, v: &[f64]) -> f64;
    /// `Var(Y | X = x, A = a, S = 1)`.
    fn outcome_var(&self, a: Treatment, x: &[f64]) -> f64;
    /// `Var(μ_a(X) | V = v, S = 1)`.
    fn var_mu_given_v(&self, a: Treatment, v: &[f64]) -> f64;
    /// `P(S = 1 | X = x)`; defaults to `ρ(V)`.
    fn p_source_given_x(&self, x: &[f64]) -> f64 {
        let v: Vec<f64> = self.v_indices().iter().map(|&j| x[j]).collect();
        self.rho(&v)
    }
}

/// Monte Carlo value of the efficiency bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyBound {
    pub sigma2: f64,
    pub n_mc: usize,
    /// Set when `n_mc < 1000`.
    pub low_precision: bool,
}

/// Evaluates `σ²_ge` or `σ²_tr` for arm `a` by averaging over `n_mc` draws of
/// `X`.
pub fn efficiency_bound_mc<M: PopulationModel + ?Sized>(
    model: &M,
    kind: EstimandKind,
    a: Treatment,
    n_mc: usize,
    seed: u64,
) -> Result<EfficiencyBound> {
    if n_mc < 2 {
        return Err(Error::Argument(format!(
            "n_mc must be at least 2, got {n_mc}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    let mut taus = Vec::with_capacity(n_mc);
    let mut target_w = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let x = model.sample_x(&mut rng);
        let v: Vec<f64> = model.v_indices().iter().map(|&j| x[j]).collect();
        let rho = model.rho(&v);
        let ps = model.p_source_given_x(&x);
        let pi1 = model.pi1(&x);
        let pi = if a == Treatment::Treated {
            pi1
        } else {
            1.0 - pi1
        };
        let s2 = model.outcome_var(a, &x);
        let vm = model.var_mu_given_v(a, &v);
        let odds = match kind {
            EstimandKind::Generalization => 1.0,
            EstimandKind::Transportation => (1.0 - rho) * (1.0 - rho),
        };
        t1 += ps * odds * s2 / (rho * rho * pi);
        t2 += odds * vm / rho;
        taus.push(model.tau(a, &v));
        target_w.push(1.0 - ps);
    }
    let m = n_mc as f64;
    let sigma2 = match kind {
        EstimandKind::Generalization => {
            let tbar = mean(&taus);
            let var = taus.iter().map(|t| (t - tbar).powi(2)).sum::<f64>() / m;
            t1 / m + t2 / m + var
        }
        EstimandKind::Transportation => {
            let wsum: f64 = target_w.iter().sum();
            if wsum <= 0.0 {
                return Err(Error::Argument("model has no target mass".into()));
            }
            let theta = taus.iter().zip(&target_w).map(|(t, w)| t * w).sum::<f64>() / wsum;
            let t3 = taus
                .iter()
                .zip(&target_w)
                .map(|(t, w)| w * (t - theta).powi(2))
                .sum::<f64>()
                / m;
            let p0 = wsum / m;
            (t1 / m + t2 / m + t3) / (p0 * p0)
        }
    };
    Ok(EfficiencyBound {
        sigma2,
        n_mc,
        low_precision: n_mc < 1000,
    })
}
