//! Weighted means under stratified cluster sampling, and the transportation
//! estimator that combines a simple-random source sample with a survey-
//! weighted target sample.
//!
//! Variances use Taylor linearization of the ratio `Ŷ / N̂` with the
//! with-replacement between-cluster estimator inside each stratum.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dr::{influence_values, se_of_mean};
use crate::error::{Error, Result};
use crate::model::{
    Arm, CombinedSample, EffectEstimate, EstimandKind, EstimandSpec, Method, SurveyInfo, Treatment,
};
use crate::nuisance::NuisanceFit;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedMean {
    pub mean: f64,
    /// Linearized variance of the weighted mean.
    pub variance: f64,
    /// Strata with one sampled cluster; they add nothing to `variance`.
    pub single_cluster_strata: Vec<i64>,
}

impl WeightedMean {
    pub fn warnings(&self) -> Vec<String> {
        self.single_cluster_strata
            .iter()
            .map(|h| format!("stratum {h} has a single cluster; its variance contribution is unavailable and set to 0"))
            .collect()
    }
}

/// `ȳ_w = Σ w y / Σ w` and
/// `Var(ȳ_w) ≈ [Var(Ŷ) + ȳ² Var(N̂) - 2 ȳ Cov(Ŷ, N̂)] / N̂²`.
pub fn weighted_mean_variance(design: &[SurveyInfo], values: &[f64]) -> Result<WeightedMean> {
    if design.len() != values.len() {
        return Err(Error::Argument(format!(
            "{} design rows but {} values",
            design.len(),
            values.len()
        )));
    }
    if design.is_empty() {
        return Err(Error::Data("weighted mean of an empty sample".into()));
    }
    if let Some(i) = design
        .iter()
        .position(|d| !(d.weight > 0.0 && d.weight.is_finite()))
    {
        return Err(Error::Data(format!(
            "record {i} has non-positive weight {}",
            design[i].weight
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("value {i} is not finite")));
    }
    let y_hat: f64 = design.iter().zip(values).map(|(d, y)| d.weight * y).sum();
    let n_hat: f64 = design.iter().map(|d| d.weight).sum();
    let mean = y_hat / n_hat;

    // Cluster totals of (w y, w) per stratum, in sorted id order.
    let mut strata: BTreeMap<i64, BTreeMap<i64, (f64, f64)>> = BTreeMap::new();
    for (d, y) in design.iter().zip(values) {
        let t = strata
            .entry(d.stratum)
            .or_default()
            .entry(d.cluster)
            .or_insert((0.0, 0.0));
        t.0 += d.weight * y;
        t.1 += d.weight;
    }
    let (mut var_y, mut var_n, mut cov) = (0.0, 0.0, 0.0);
    let mut single = Vec::new();
    for (h, clusters) in &strata {
        let a = clusters.len();
        if a < 2 {
            single.push(*h);
            continue;
        }
        let af = a as f64;
        let ty = clusters.values().map(|t| t.0).sum::<f64>() / af;
        let tn = clusters.values().map(|t| t.1).sum::<f64>() / af;
        let f = af / (af - 1.0);
        let (mut sy, mut sn, mut sc) = (0.0, 0.0, 0.0);
        for &(y, n) in clusters.values() {
            sy += (y - ty) * (y - ty);
            sn += (n - tn) * (n - tn);
            sc += (y - ty) * (n - tn);
        }
        var_y += f * sy;
        var_n += f * sn;
        cov += f * sc;
    }
    let variance = ((var_y + mean * mean * var_n - 2.0 * mean * cov) / (n_hat * n_hat)).max(0.0);
    Ok(WeightedMean {
        mean,
        variance,
        single_cluster_strata: single,
    })
}

/// `θ̂ = (n1 θ̂_1 + n2 θ̂_2) / n` with
/// `Var = (n1² σ̂²_1 + n2² σ̂²_2) / n²`, where `θ̂_1` is the mean of
/// `source_values` and `σ̂²_1` its sample variance over `n1`.
pub fn combined_transport_estimate(
    source_values: &[f64],
    target: (f64, f64),
    n1: usize,
    n2: usize,
    arm: Arm,
) -> Result<EffectEstimate> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Data(format!(
            "combined estimate needs source and target records, got n1 = {n1}, n2 = {n2}"
        )));
    }
    if source_values.len() != n1 {
        return Err(Error::Argument(format!(
            "{} source values for n1 = {n1}",
            source_values.len()
        )));
    }
    let (theta2, var2) = target;
    let theta1 = source_values.iter().sum::<f64>() / n1 as f64;
    let se1 = se_of_mean(source_values);
    combine(theta1, se1 * se1, theta2, var2, n1, n2, arm)
}

/// The combination step on summary statistics.
pub fn combine(
    theta1: f64,
    var1: f64,
    theta2: f64,
    var2: f64,
    n1: usize,
    n2: usize,
    arm: Arm,
) -> Result<EffectEstimate> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Data(
            "combined estimate needs n1 >= 1 and n2 >= 1".into(),
        ));
    }
    if !(var1 >= 0.0 && var2 >= 0.0) {
        return Err(Error::Argument("variances must be nonnegative".into()));
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let n = f1 + f2;
    let point = (f1 * theta1 + f2 * theta2) / n;
    let var = (f1 * f1 * var1 + f2 * f2 * var2) / (n * n);
    Ok(EffectEstimate::from_point_se(
        point,
        var.sqrt(),
        n1 + n2,
        EstimandSpec::new(EstimandKind::Transportation, arm),
        Method::Dr,
    ))
}

/// Survey-weighted transportation estimate plus any design warnings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyEstimate {
    pub estimate: EffectEstimate,
    pub warnings: Vec<String>,
}

/// Transportation estimate for `arm` whose target half is weighted by the
/// survey design. Per-record values are the uncentered influence values
/// divided by `P̂(S = 0)`.
pub fn survey_transport_estimate(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    arm: Arm,
) -> Result<SurveyEstimate> {
    if !sample.has_survey_design() {
        return Err(Error::Data("target records carry no survey design".into()));
    }
    let values = |a: Treatment| -> Result<Vec<f64>> {
        let iv = influence_values(sample, fit, a, EstimandKind::Transportation)?;
        Ok(iv.values.iter().map(|v| v / iv.normalization).collect())
    };
    let per_record: Vec<f64> = match arm.treatment() {
        Some(a) => values(a)?,
        None => {
            let t = values(Treatment::Treated)?;
            let c = values(Treatment::Control)?;
            t.iter().zip(c).map(|(x, y)| x - y).collect()
        }
    };
    let n1 = sample.n1();
    let design: Vec<SurveyInfo> = sample
        .target()
        .iter()
        .map(|r| r.survey.expect("survey design"))
        .collect();
    let wm = weighted_mean_variance(&design, &per_record[n1..])?;
    let estimate = combined_transport_estimate(
        &per_record[..n1],
        (wm.mean, wm.variance),
        n1,
        sample.n2(),
        arm,
    )?;
    Ok(SurveyEstimate {
        estimate,
        warnings: wm.warnings(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn design(weights: &[f64], strata: &[i64], clusters: &[i64]) -> Vec<SurveyInfo> {
        weights
            .iter()
            .zip(strata.iter().zip(clusters))
            .map(|(&weight, (&stratum, &cluster))| SurveyInfo {
                stratum,
                cluster,
                weight,
            })
            .collect()
    }

    #[test]
    fn equal_weights_singletons() {
        let d = design(&[1.0; 3], &[1; 3], &[1, 2, 3]);
        let wm = weighted_mean_variance(&d, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(wm.mean, 2.0);
        // s² = 1, so s²/n = 1/3.
        assert!((wm.variance - 1.0 / 3.0).abs() < 1e-15);
        assert!(wm.single_cluster_strata.is_empty());
    }

    #[test]
    fn hand_weighted_mean() {
        let d = design(&[1.0, 3.0], &[1, 1], &[1, 2]);
        assert_eq!(weighted_mean_variance(&d, &[1.0, 3.0]).unwrap().mean, 2.5);
    }

    #[test]
    fn constant_values() {
        let d = design(&[1.0, 2.0, 5.0, 0.5], &[1, 1, 2, 2], &[1, 2, 3, 4]);
        let wm = weighted_mean_variance(&d, &[0.7; 4]).unwrap();
        assert!((wm.mean - 0.7).abs() < 1e-15);
        assert!(wm.variance.abs() < 1e-30);
    }

    #[test]
    fn single_cluster_stratum_flagged() {
        let d = design(&[1.0, 1.0, 1.0], &[1, 1, 2], &[1, 2, 3]);
        let wm = weighted_mean_variance(&d, &[1.0, 2.0, 9.0]).unwrap();
        assert_eq!(wm.single_cluster_strata, vec![2]);
        assert_eq!(wm.warnings().len(), 1);
        assert!((wm.mean - 4.0).abs() < 1e-15);
    }

    #[test]
    fn linearization_matches_direct_formula() {
        // Two strata with clustered records; compare against the residual
        // form of the linearized variance.
        let d = design(
            &[1.0, 2.0, 1.5, 3.0, 0.5, 2.5, 1.0],
            &[1, 1, 1, 1, 2, 2, 2],
            &[1, 1, 2, 3, 4, 5, 5],
        );
        let y = [0.3, 1.2, -0.4, 2.0, 0.9, 1.1, -1.0];
        let wm = weighted_mean_variance(&d, &y).unwrap();
        let n_hat: f64 = d.iter().map(|r| r.weight).sum();
        let mut strata: BTreeMap<i64, BTreeMap<i64, f64>> = BTreeMap::new();
        for (r, yi) in d.iter().zip(y) {
            *strata
                .entry(r.stratum)
                .or_default()
                .entry(r.cluster)
                .or_default() += r.weight * (yi - wm.mean);
        }
        let mut v = 0.0;
        for c in strata.values() {
            let a = c.len() as f64;
            let m = c.values().sum::<f64>() / a;
            v += a / (a - 1.0) * c.values().map(|t| (t - m).powi(2)).sum::<f64>();
        }
        v /= n_hat * n_hat;
        assert!((wm.variance - v).abs() < 1e-14 * v.max(1.0));
    }

    #[test]
    fn combined_hand_example() {
        let e = combine(0.2, 0.0, 0.4, 0.0, 100, 300, Arm::Treated).unwrap();
        assert_eq!(e.point, 0.35);
        let e = combine(0.3, 0.0, 0.3, 0.0, 50, 50, Arm::Treated).unwrap();
        assert!((e.point - 0.3).abs() < 1e-15);
        let e = combine(0.1, 0.04, 0.5, 0.0, 100, 300, Arm::Treated).unwrap();
        assert!((e.se * e.se - 100.0 * 100.0 * 0.04 / 400.0 / 400.0).abs() < 1e-15);
        assert!(combine(0.1, 0.0, 0.1, 0.0, 0, 3, Arm::Treated).is_err());
        assert!(combined_transport_estimate(&[], (0.1, 0.0), 0, 3, Arm::Treated).is_err());
    }

    proptest! {
        #[test]
        fn scale_equivariance(
            rows in proptest::collection::vec((0.1f64..5.0, -3.0f64..3.0, 0i64..3, 0i64..4), 2..40),
            power in -4i32..5,
            scale in 0.01f64..100.0,
        ) {
            let d: Vec<SurveyInfo> = rows.iter().map(|&(w, _, h, c)| SurveyInfo { stratum: h, cluster: c, weight: w }).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let base = weighted_mean_variance(&d, &y).unwrap();
            let k = 2f64.powi(power);
            let scaled: Vec<SurveyInfo> = d.iter().map(|r| SurveyInfo { weight: r.weight * k, ..*r }).collect();
            let s = weighted_mean_variance(&scaled, &y).unwrap();
            prop_assert_eq!(base.mean, s.mean);
            prop_assert_eq!(base.variance, s.variance);
            let scaled: Vec<SurveyInfo> = d.iter().map(|r| SurveyInfo { weight: r.weight * scale, ..*r }).collect();
            let s = weighted_mean_variance(&scaled, &y).unwrap();
            prop_assert!((base.mean - s.mean).abs() <= 1e-12 * base.mean.abs().max(1.0));
            prop_assert!((base.variance - s.variance).abs() <= 1e-9 * base.variance + 1e-15);
        }
    }
}
