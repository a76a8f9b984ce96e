use std::fmt::Write as _;

use serde::Serialize;

use super::config::{arm_label, kind_label, RunConfig};
use crate::dr::{dr_estimate_arm, plugin_estimate};
use crate::error::{Error, Result};
use crate::io::{load_combined_csv, CsvSchema};
use crate::model::{split_folds, Arm, CombinedSample, EffectEstimate, EstimandKind};
use crate::nuisance::{cross_fit_nuisances, NuisanceFit};
use crate::sensitivity::{bound_from_point, breakeven_deltas, Breakeven, BreakevenMode, HalfWidth};
use crate::simulation::{quadratic_compare, rmse_study, QrCompareConfig, StudyConfig};
use crate::survey::survey_transport_estimate;

/// A named output file and its contents.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, body: String) -> Self {
        Self {
            name: name.to_string(),
            bytes: body.into_bytes(),
        }
    }
}

fn load_and_fit(cfg: &RunConfig) -> Result<(CombinedSample, NuisanceFit)> {
    let schema = CsvSchema::from_toml_file(cfg.schema.as_deref().expect("resolved"))?;
    let sample = load_combined_csv(
        cfg.source.as_deref().expect("resolved"),
        cfg.target.as_deref().expect("resolved"),
        &schema,
    )?;
    let folds = split_folds(
        sample.n(),
        cfg.folds.expect("resolved"),
        cfg.seed.expect("resolved"),
    )?;
    let specs = cfg.learners.clone().unwrap_or_default();
    let fit = cross_fit_nuisances(&sample, &specs, &folds, cfg.eps.expect("resolved"))?;
    Ok((sample, fit))
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    seed: u64,
    config: &'a RunConfig,
    n_source: usize,
    n_target: usize,
    estimates: Vec<EffectEstimate>,
    survey_estimates: Vec<EffectEstimate>,
    warnings: Vec<String>,
}

const ARMS: [Arm; 3] = [Arm::Treated, Arm::Control, Arm::Contrast];

pub fn estimate(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (sample, fit) = load_and_fit(cfg)?;
    let kind = cfg.estimand().kind;
    let mut estimates = Vec::new();
    for arm in ARMS {
        estimates.push(plugin_estimate(&sample, &fit, arm, kind)?);
    }
    for arm in ARMS {
        estimates.push(dr_estimate_arm(&sample, &fit, arm, kind)?);
    }
    let mut survey_estimates = Vec::new();
    let mut warnings = Vec::new();
    if sample.has_survey_design() {
        if kind == EstimandKind::Transportation {
            for arm in ARMS {
                let s = survey_transport_estimate(&sample, &fit, arm)?;
                for w in s.warnings {
                    if !warnings.contains(&w) {
                        warnings.push(w);
                    }
                }
                survey_estimates.push(s.estimate);
            }
        } else {
            warnings.push(
                "survey design present but ignored: weighting applies to transportation only"
                    .into(),
            );
        }
    }
    let report = EstimateReport {
        seed: cfg.seed.expect("resolved"),
        config: cfg,
        n_source: sample.n1(),
        n_target: sample.n2(),
        estimates,
        survey_estimates,
        warnings,
    };
    let mut json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
    json.push('\n');
    Ok(vec![Artifact::text("estimates.json", json)])
}

pub fn sensitivity(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let (sample, fit) = load_and_fit(cfg)?;
    let spec = cfg.estimand();
    let hw = HalfWidth::estimate(&sample, &fit, spec)?;
    let center = dr_estimate_arm(&sample, &fit, spec.arm, spec.kind)?;
    let (d1, d2) = (cfg.delta1.expect("resolved"), cfg.delta2.expect("resolved"));
    let bound = bound_from_point(center.point, hw, d1, d2, spec)?;
    let Breakeven::Delta1(b1) = breakeven_deltas(center.point, hw, BreakevenMode::Delta1Only)?
    else {
        unreachable!()
    };
    let Breakeven::Delta2(b2) = breakeven_deltas(center.point, hw, BreakevenMode::Delta2Only)?
    else {
        unreachable!()
    };
    let points = cfg.curve_points.expect("resolved");
    let Breakeven::Curve(curve) =
        breakeven_deltas(center.point, hw, BreakevenMode::Curve { points })?
    else {
        unreachable!()
    };
    let mut interval = String::from(
        "kind,arm,point,se,delta1,delta2,lower,upper,c1,c2,breakeven_delta1,breakeven_delta2\n",
    );
    let _ = writeln!(
        interval,
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        kind_label(spec.kind),
        arm_label(spec.arm),
        center.point,
        center.se,
        bound.delta1,
        bound.delta2,
        bound.lower,
        bound.upper,
        hw.c1,
        hw.c2,
        b1,
        b2
    );
    let mut curve_csv = String::from("delta1,delta2,lower,upper\n");
    for p in &curve {
        let _ = writeln!(
            curve_csv,
            "{},{},{},{}",
            p.delta1, p.delta2, p.lower, p.upper
        );
    }
    Ok(vec![
        Artifact::text("sensitivity_interval.csv", interval),
        Artifact::text("breakeven_curve.csv", curve_csv),
    ])
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let study = StudyConfig {
        n_grid: cfg.n_grid.clone().expect("resolved"),
        alpha_grid: cfg.alpha_grid.clone().expect("resolved"),
        replications: cfg.reps.expect("resolved"),
        seed: cfg.seed.expect("resolved"),
        estimators: cfg.estimators.clone().expect("resolved"),
        noise: cfg.noise.expect("resolved"),
        k_basis: cfg.k_basis.as_ref().and_then(|k| k.first().copied()),
    };
    if cfg.k_basis.as_ref().is_some_and(|k| k.len() > 1) {
        return Err(Error::Config(
            "simulate takes a single k_basis value".into(),
        ));
    }
    let table = rmse_study(&study)?;
    Ok(vec![
        Artifact::text("rmse.csv", table.to_csv()),
        Artifact::text("rmse_plot.csv", table.plot_csv()),
    ])
}

pub fn quadratic(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let qc = QrCompareConfig {
        n_grid: cfg.n_grid.clone().expect("resolved"),
        k_grid: cfg.k_basis.clone().expect("resolved"),
        alpha_grid: cfg.alpha_grid.clone().expect("resolved"),
        replications: cfg.reps.expect("resolved"),
        seed: cfg.seed.expect("resolved"),
        kind: cfg.estimand().kind,
        noise: cfg.noise.expect("resolved"),
        gram_n: cfg.gram_n,
        fixed_nuisances: cfg.fixed_nuisances.expect("resolved"),
    };
    let table = quadratic_compare(&qc)?;
    Ok(vec![Artifact::text(
        "quadratic_compare.csv",
        table.to_csv(),
    )])
}
