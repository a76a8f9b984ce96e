use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learner::{fit_learner, FittedModel, LearnerSpec};
use super::{NuisanceFit, NuisanceParts, Provenance};
use crate::error::{Error, Result};
use crate::model::{clip_probability, validate_eps, CombinedSample, FoldAssignment, Treatment};

/// How `τ_a` is estimated from the source records of each training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// Regress the fitted `μ̂_a(X)` on `V`.
    #[default]
    EstimatedOutcome,
    /// Regress `I(A=a)(Y - μ̂_a)/π̂_a + μ̂_a` on `V`.
    PseudoOutcome,
}

/// One learner per nuisance. `arm_given_v`, the source regression of `A` on
/// `V`, reuses the `pi` learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSpecs {
    pub pi: LearnerSpec,
    pub rho: LearnerSpec,
    pub mu0: LearnerSpec,
    pub mu1: LearnerSpec,
    pub tau0: LearnerSpec,
    pub tau1: LearnerSpec,
    pub tau_mode: TauMode,
}

impl Default for NuisanceSpecs {
    fn default() -> Self {
        Self {
            pi: LearnerSpec::logistic(),
            rho: LearnerSpec::logistic(),
            mu0: LearnerSpec::ridge(1e-6),
            mu1: LearnerSpec::ridge(1e-6),
            tau0: LearnerSpec::ridge(1e-6),
            tau1: LearnerSpec::ridge(1e-6),
            tau_mode: TauMode::EstimatedOutcome,
        }
    }
}

impl NuisanceSpecs {
    /// Every nuisance fitted by its training mean.
    pub fn constant() -> Self {
        Self {
            pi: LearnerSpec::ConstantMean,
            rho: LearnerSpec::ConstantMean,
            mu0: LearnerSpec::ConstantMean,
            mu1: LearnerSpec::ConstantMean,
            tau0: LearnerSpec::ConstantMean,
            tau1: LearnerSpec::ConstantMean,
            tau_mode: TauMode::EstimatedOutcome,
        }
    }

    fn mu(&self, a: Treatment) -> &LearnerSpec {
        match a {
            Treatment::Control => &self.mu0,
            Treatment::Treated => &self.mu1,
        }
    }

    fn tau(&self, a: Treatment) -> &LearnerSpec {
        match a {
            Treatment::Control => &self.tau0,
            Treatment::Treated => &self.tau1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [
            &self.pi, &self.rho, &self.mu0, &self.mu1, &self.tau0, &self.tau1,
        ] {
            s.validate()?;
        }
        Ok(())
    }
}

/// The sample-splitting ĝ for one source record.
pub fn pseudo_outcome(treated_with_a: bool, y: f64, mu_a: f64, pi_a: f64) -> f64 {
    if treated_with_a {
        (y - mu_a) / pi_a + mu_a
    } else {
        mu_a
    }
}

struct FoldOutput {
    members: Vec<usize>,
    rho: Vec<f64>,
    pi1: Vec<f64>,
    mu: [Vec<f64>; 2],
    tau: [Vec<f64>; 2],
    arm_given_v: Vec<f64>,
}

fn fold_err(fold: usize, what: &str, e: Error) -> Error {
    match e {
        Error::Data(msg) => Error::Data(format!("fold {fold}, {what}: {msg}")),
        Error::Numerical(msg) => Error::Numerical(format!("fold {fold}, {what}: {msg}")),
        Error::Convergence {
            iterations,
            gradient_norm,
            last_iterate,
        } => Error::Convergence {
            iterations,
            gradient_norm,
            last_iterate,
        },
        other => other,
    }
}

fn fit_fold(
    sample: &CombinedSample,
    specs: &NuisanceSpecs,
    folds: &FoldAssignment,
    fold: usize,
    eps: f64,
    v_rows: &[Vec<f64>],
) -> Result<FoldOutput> {
    let n1 = sample.n1();
    let n = sample.n();
    let src = sample.source();
    let covers_x = sample.v_equals_x();
    let train: Vec<usize> = (0..n).filter(|&i| folds.fold_of(i) != fold).collect();
    let members: Vec<usize> = (0..n).filter(|&i| folds.fold_of(i) == fold).collect();
    let train_src: Vec<usize> = train.iter().copied().filter(|&i| i < n1).collect();
    if train_src.is_empty() {
        return Err(Error::Data(format!(
            "fold {fold}: no source records outside the fold"
        )));
    }
    let x_of = |i: usize| -> Vec<f64> { sample.x_of(i).expect("x available").to_vec() };
    let eval_x: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| covers_x || i < n1)
        .collect();
    let eval_x_rows: Vec<Vec<f64>> = eval_x.iter().map(|&i| x_of(i)).collect();
    let member_v: Vec<Vec<f64>> = members.iter().map(|&i| v_rows[i].clone()).collect();

    // rho: S on V over all training records.
    let rho_model = fit_learner(
        &specs.rho,
        &train.iter().map(|&i| v_rows[i].clone()).collect::<Vec<_>>(),
        &train
            .iter()
            .map(|&i| if i < n1 { 1.0 } else { 0.0 })
            .collect::<Vec<_>>(),
        true,
    )
    .map_err(|e| fold_err(fold, "participation model", e))?;

    // pi: A on X over training source records.
    let tx: Vec<Vec<f64>> = train_src.iter().map(|&i| src[i].x.clone()).collect();
    let ta: Vec<f64> = train_src.iter().map(|&i| src[i].a.index() as f64).collect();
    let pi_model = fit_learner(&specs.pi, &tx, &ta, true)
        .map_err(|e| fold_err(fold, "propensity model", e))?;
    let tv: Vec<Vec<f64>> = train_src.iter().map(|&i| v_rows[i].clone()).collect();
    let arm_model = fit_learner(&specs.pi, &tv, &ta, true)
        .map_err(|e| fold_err(fold, "treatment-given-V model", e))?;

    let mut mu_models: Vec<FittedModel> = Vec::with_capacity(2);
    for a in Treatment::BOTH {
        let rows: Vec<usize> = train_src
            .iter()
            .copied()
            .filter(|&i| src[i].a == a)
            .collect();
        if rows.is_empty() {
            return Err(Error::Data(format!(
                "fold {fold}, arm {}: no training source records with this treatment",
                a.index()
            )));
        }
        let feats: Vec<Vec<f64>> = rows.iter().map(|&i| src[i].x.clone()).collect();
        let ys: Vec<f64> = rows.iter().map(|&i| src[i].y).collect();
        let model = fit_learner(specs.mu(a), &feats, &ys, false)
            .map_err(|e| fold_err(fold, &format!("outcome model arm {}", a.index()), e))?;
        mu_models.push(model);
    }

    let mut tau: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for a in Treatment::BOTH {
        let mu_train = mu_models[a.index()].predict_many(&tx);
        let responses: Vec<f64> = match specs.tau_mode {
            TauMode::EstimatedOutcome => mu_train,
            TauMode::PseudoOutcome => {
                let pi1 = pi_model.predict_many(&tx);
                train_src
                    .iter()
                    .zip(mu_train.iter().zip(pi1))
                    .map(|(&i, (&m, p1))| {
                        let p1 = clip_probability(p1, eps);
                        let pa = if a == Treatment::Treated {
                            p1
                        } else {
                            1.0 - p1
                        };
                        pseudo_outcome(src[i].a == a, src[i].y, m, pa)
                    })
                    .collect()
            }
        };
        let model = fit_learner(specs.tau(a), &tv, &responses, false)
            .map_err(|e| fold_err(fold, &format!("nested regression arm {}", a.index()), e))?;
        tau[a.index()] = model.predict_many(&member_v);
    }

    Ok(FoldOutput {
        rho: rho_model.predict_many(&member_v),
        pi1: pi_model.predict_many(&eval_x_rows),
        mu: [
            mu_models[0].predict_many(&eval_x_rows),
            mu_models[1].predict_many(&eval_x_rows),
        ],
        tau,
        arm_given_v: arm_model.predict_many(&member_v),
        members,
    })
}

/// Cross-fitted nuisance predictions: for each fold, models are trained on
/// the records outside the fold and evaluated on the records inside it.
///
/// When `V = X`, `π̂` and `μ̂` are evaluated at target records as well.
/// Folds are fitted in parallel; the result does not depend on scheduling.
pub fn cross_fit_nuisances(
    sample: &CombinedSample,
    specs: &NuisanceSpecs,
    folds: &FoldAssignment,
    eps: f64,
) -> Result<NuisanceFit> {
    validate_eps(eps)?;
    specs.validate()?;
    if folds.n() != sample.n() {
        return Err(Error::Argument(format!(
            "fold assignment covers {} records, sample has {}",
            folds.n(),
            sample.n()
        )));
    }
    if sample.n1() == 0 {
        return Err(Error::Data("cross-fitting needs source records".into()));
    }
    let v_rows = sample.v_rows();
    let outputs: Vec<Result<FoldOutput>> = (0..folds.k())
        .into_par_iter()
        .map(|f| fit_fold(sample, specs, folds, f, eps, &v_rows))
        .collect();
    let n = sample.n();
    let n1 = sample.n1();
    let nx = if sample.v_equals_x() { n } else { n1 };
    let mut rho = vec![0.0; n];
    let mut pi1 = vec![0.0; nx];
    let mut mu = [vec![0.0; nx], vec![0.0; nx]];
    let mut tau = [vec![0.0; n], vec![0.0; n]];
    let mut arm = vec![0.0; n];
    for out in outputs {
        let out = out?;
        let mut kx = 0;
        for (k, &i) in out.members.iter().enumerate() {
            rho[i] = out.rho[k];
            tau[0][i] = out.tau[0][k];
            tau[1][i] = out.tau[1][k];
            arm[i] = out.arm_given_v[k];
            if i < nx {
                pi1[i] = out.pi1[kx];
                mu[0][i] = out.mu[0][kx];
                mu[1][i] = out.mu[1][kx];
                kx += 1;
            }
        }
    }
    NuisanceFit::new(
        sample,
        NuisanceParts {
            rho,
            pi1,
            mu,
            tau,
            arm_given_v: Some(arm),
            provenance: Provenance::CrossFitted(folds.clone()),
        },
        eps,
    )
}

/// Out-of-fold `τ̂_a` from the pseudo-outcome `ĝ` built with the fit's own
/// `μ̂_a` and `π̂_a` values, regressed on `V` within the same folds.
pub fn pseudo_outcome_tau(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    spec: &LearnerSpec,
    folds: &FoldAssignment,
    a: Treatment,
) -> Result<Vec<f64>> {
    fit.check_matches(sample)?;
    if folds.n() != sample.n() {
        return Err(Error::Argument(
            "fold assignment does not match the sample".into(),
        ));
    }
    let n1 = sample.n1();
    let g: Vec<f64> = sample
        .source()
        .iter()
        .enumerate()
        .map(|(i, r)| pseudo_outcome(r.a == a, r.y, fit.mu(a, i), fit.pi(a, i)))
        .collect();
    let v_rows = sample.v_rows();
    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>)>> = (0..folds.k())
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n1).filter(|&i| folds.fold_of(i) != f).collect();
            if !train.iter().any(|&i| sample.source()[i].a == a) {
                return Err(Error::Data(format!(
                    "fold {f}, arm {}: no training source records with this treatment",
                    a.index()
                )));
            }
            let feats: Vec<Vec<f64>> = train.iter().map(|&i| v_rows[i].clone()).collect();
            let ys: Vec<f64> = train.iter().map(|&i| g[i]).collect();
            let model = fit_learner(spec, &feats, &ys, false)
                .map_err(|e| fold_err(f, "pseudo-outcome regression", e))?;
            let members = folds.members(f);
            let preds = members.iter().map(|&i| model.predict(&v_rows[i])).collect();
            Ok((members, preds))
        })
        .collect();
    let mut out = vec![0.0; sample.n()];
    for r in per_fold {
        let (members, preds) = r?;
        for (i, p) in members.into_iter().zip(preds) {
            out[i] = p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{split_folds, SourceRecord, TargetRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n1: usize, n2: usize, seed: u64, v_eq_x: bool) -> CombinedSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = (0..n1)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a = if rng.random::<f64>() < 0.5 {
                    Treatment::Treated
                } else {
                    Treatment::Control
                };
                let y = x[0] + a.index() as f64 + rng.random_range(-0.5..0.5);
                SourceRecord { x, a, y }
            })
            .collect();
        let dv = if v_eq_x { 2 } else { 1 };
        let target = (0..n2)
            .map(|_| TargetRecord {
                v: (0..dv).map(|_| rng.random_range(-1.0..1.0)).collect(),
                survey: None,
            })
            .collect();
        let map = if v_eq_x { vec![0, 1] } else { vec![0] };
        CombinedSample::new(source, target, map).unwrap()
    }

    #[test]
    fn constant_learners_give_out_of_fold_means() {
        let s = sample(30, 20, 1, false);
        let folds = split_folds(s.n(), 3, 9).unwrap();
        let fit = cross_fit_nuisances(&s, &NuisanceSpecs::constant(), &folds, 0.01).unwrap();
        for i in 0..s.n() {
            let f = folds.fold_of(i);
            let train: Vec<usize> = (0..s.n()).filter(|&j| folds.fold_of(j) != f).collect();
            let rho = train.iter().filter(|&&j| j < s.n1()).count() as f64 / train.len() as f64;
            assert!((fit.rho(i) - rho).abs() < 1e-12);
            let src: Vec<usize> = train.iter().copied().filter(|&j| j < s.n1()).collect();
            let treated: Vec<usize> = src
                .iter()
                .copied()
                .filter(|&j| s.source()[j].a == Treatment::Treated)
                .collect();
            let mean_y1 =
                treated.iter().map(|&j| s.source()[j].y).sum::<f64>() / treated.len() as f64;
            assert!((fit.tau(Treatment::Treated, i) - mean_y1).abs() < 1e-12);
            if i < s.n1() {
                let pi = treated.len() as f64 / src.len() as f64;
                assert!((fit.pi(Treatment::Treated, i) - pi).abs() < 1e-12);
                assert!((fit.mu(Treatment::Treated, i) - mean_y1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_mu_gives_same_tau_under_v_equals_x() {
        let s = sample(40, 10, 2, true);
        let folds = split_folds(s.n(), 4, 3).unwrap();
        let specs = NuisanceSpecs {
            mu0: LearnerSpec::ConstantMean,
            mu1: LearnerSpec::ConstantMean,
            ..NuisanceSpecs::default()
        };
        let fit = cross_fit_nuisances(&s, &specs, &folds, 0.01).unwrap();
        assert!(fit.covers_target_x());
        for i in 0..s.n() {
            for a in Treatment::BOTH {
                assert!((fit.tau(a, i) - fit.mu(a, i)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rerun_bit_identical() {
        let s = sample(50, 50, 3, false);
        let folds = split_folds(s.n(), 2, 17).unwrap();
        let a = cross_fit_nuisances(&s, &NuisanceSpecs::default(), &folds, 0.01).unwrap();
        let b = cross_fit_nuisances(&s, &NuisanceSpecs::default(), &folds, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_arm_in_training_split() {
        let mut src: Vec<SourceRecord> = (0..6)
            .map(|i| SourceRecord {
                x: vec![i as f64],
                a: Treatment::Control,
                y: 0.0,
            })
            .collect();
        src[0].a = Treatment::Treated;
        let s = CombinedSample::new(
            src,
            vec![
                TargetRecord {
                    v: vec![0.5],
                    survey: None
                };
                2
            ],
            vec![0],
        )
        .unwrap();
        let folds = FoldAssignment::from_ids(vec![0, 1, 1, 1, 1, 0, 1, 1], 2).unwrap();
        let err = cross_fit_nuisances(&s, &NuisanceSpecs::constant(), &folds, 0.01).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("fold 0") && msg.contains("arm 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pseudo_outcome_hand_values() {
        assert!((pseudo_outcome(true, 1.0, 0.5, 0.5) - 1.5).abs() < 1e-15);
        assert_eq!(pseudo_outcome(false, 9.0, 0.7, 0.2), 0.7);
    }

    #[test]
    fn out_of_fold_discipline() {
        let s = sample(60, 30, 4, false);
        let folds = split_folds(s.n(), 3, 5).unwrap();
        for mode in [TauMode::EstimatedOutcome, TauMode::PseudoOutcome] {
            let specs = NuisanceSpecs {
                tau_mode: mode,
                ..NuisanceSpecs::default()
            };
            let base = cross_fit_nuisances(&s, &specs, &folds, 0.01).unwrap();
            for f in 0..3 {
                let source: Vec<SourceRecord> = s
                    .source()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let mut r = r.clone();
                        if folds.fold_of(i) == f {
                            r.y += 10.0 + i as f64;
                        }
                        r
                    })
                    .collect();
                let t = CombinedSample::new(source, s.target().to_vec(), s.v_index_map().to_vec())
                    .unwrap();
                let pert = cross_fit_nuisances(&t, &specs, &folds, 0.01).unwrap();
                for i in folds.members(f) {
                    for a in Treatment::BOTH {
                        assert_eq!(base.tau(a, i), pert.tau(a, i));
                        if i < s.n1() {
                            assert_eq!(base.mu(a, i), pert.mu(a, i));
                            assert_eq!(base.pi(a, i), pert.pi(a, i));
                        }
                    }
                    assert_eq!(base.rho(i), pert.rho(i));
                }
            }
        }
    }

    #[test]
    fn standalone_pseudo_outcome_noise_free() {
        // Y equals a linear mu exactly, so the residual term vanishes and the
        // regression of g on V recovers the nested regression of mu.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let source: Vec<SourceRecord> = (0..80)
            .map(|i| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = if i % 2 == 0 {
                    Treatment::Treated
                } else {
                    Treatment::Control
                };
                let y = 2.0 * x[0] + 0.5;
                SourceRecord { x, a, y }
            })
            .collect();
        let s = CombinedSample::new(
            source,
            vec![
                TargetRecord {
                    v: vec![0.3],
                    survey: None
                };
                5
            ],
            vec![0],
        )
        .unwrap();
        let folds = split_folds(s.n(), 5, 1).unwrap();
        let specs = NuisanceSpecs {
            mu1: LearnerSpec::ridge(0.0),
            ..NuisanceSpecs::default()
        };
        let fit = cross_fit_nuisances(&s, &specs, &folds, 0.01).unwrap();
        let tau = pseudo_outcome_tau(
            &s,
            &fit,
            &LearnerSpec::ridge(0.0),
            &folds,
            Treatment::Treated,
        )
        .unwrap();
        for (i, t) in tau.iter().enumerate() {
            let v0 = s.v_of(i)[0];
            assert!(
                (t - (2.0 * v0 + 0.5)).abs() < 1e-8,
                "{t} vs {}",
                2.0 * v0 + 0.5
            );
        }
    }

    #[test]
    fn probabilities_within_clip_range() {
        let s = sample(40, 40, 6, true);
        let folds = split_folds(s.n(), 5, 2).unwrap();
        let eps = 0.05;
        let specs = NuisanceSpecs {
            pi: LearnerSpec::Knn { k: 1 },
            rho: LearnerSpec::Knn { k: 1 },
            ..NuisanceSpecs::default()
        };
        let fit = cross_fit_nuisances(&s, &specs, &folds, eps).unwrap();
        for i in 0..s.n() {
            for p in [
                fit.rho(i),
                fit.pi(Treatment::Treated, i),
                fit.pi(Treatment::Control, i),
                fit.arm_given_v(i).unwrap(),
            ] {
                assert!((eps..=1.0 - eps).contains(&p), "{p}");
            }
        }
    }
}
