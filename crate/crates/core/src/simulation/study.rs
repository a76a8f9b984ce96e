//! Monte Carlo comparisons of the estimators under noisy oracle nuisances.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::DgpSpec;
use super::seeds::cell_seed;
use crate::dr::{dr_estimate, plugin_estimate};
use crate::error::{Error, Result};
use crate::model::{Arm, EstimandKind, Treatment};
use crate::nuisance::{oracle_noisy_nuisances, NoiseMode};
use crate::quadratic::{
    build_basis, default_k, estimate_gram, qr_estimate, BasisKind, BasisSpec, DataSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Plugin,
    Dr,
    Qr,
}

impl EstimatorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Plugin => "plugin",
            EstimatorTag::Dr => "dr",
            EstimatorTag::Qr => "qr",
        }
    }
}

impl FromStr for EstimatorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(EstimatorTag::Plugin),
            "dr" => Ok(EstimatorTag::Dr),
            "qr" => Ok(EstimatorTag::Qr),
            other => Err(Error::Argument(format!(
                "unknown estimator '{other}'; expected one of plugin, dr, qr"
            ))),
        }
    }
}

pub fn parse_estimators<S: AsRef<str>>(tags: &[S]) -> Result<Vec<EstimatorTag>> {
    tags.iter().map(|t| t.as_ref().parse()).collect()
}

/// Settings of an RMSE study. The target is `θ_1 = E[Y^1 | S = 0] = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<String>,
    pub noise: NoiseMode,
    /// Basis size for `qr`; `round(√n)` when absent.
    pub k_basis: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 1000, 5000],
            alpha_grid: (0..9)
                .map(|i| 0.10 + 0.05 * i as f64)
                .map(|a| (a * 100.0).round() / 100.0)
                .collect(),
            replications: 1000,
            seed: 1,
            estimators: vec!["plugin".into(), "dr".into()],
            noise: NoiseMode::Shared,
            k_basis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub estimator: EstimatorTag,
    pub n: usize,
    pub alpha: f64,
    pub rmse: f64,
    pub bias: f64,
    pub mc_se: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

impl RmseTable {
    pub fn get(&self, estimator: EstimatorTag, n: usize, alpha: f64) -> Option<&RmseRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n && (r.alpha - alpha).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,n,alpha,rmse,bias,mc_se,reps\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.estimator.as_str(),
                r.n,
                r.alpha,
                r.rmse,
                r.bias,
                r.mc_se,
                r.reps
            );
        }
        out
    }

    /// One panel per `n` with RMSE against `α`, one series per estimator.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("panel,series,x,y\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "n={},{},{},{}",
                r.n,
                r.estimator.as_str(),
                r.alpha,
                r.rmse
            );
        }
        out
    }
}

/// Bias, RMSE, Monte Carlo SE of the mean, and variance of `estimates`.
pub(crate) fn summarize(estimates: &[f64], truth: f64) -> (f64, f64, f64, f64) {
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let bias = mean - truth;
    let mse = estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / r;
    let var = if estimates.len() > 1 {
        estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    (bias, mse.sqrt(), (var / r).sqrt(), var)
}

fn check_grids(n_grid: &[usize], alpha_grid: &[f64], replications: usize) -> Result<()> {
    if n_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::Argument("n and alpha grids must be nonempty".into()));
    }
    if replications == 0 {
        return Err(Error::Argument("replications must be at least 1".into()));
    }
    if let Some(&n) = n_grid.iter().find(|&&n| n < 10) {
        return Err(Error::Argument(format!(
            "every n must be at least 10, got {n}"
        )));
    }
    if let Some(a) = alpha_grid.iter().find(|&&a| !(a > 0.0 && a <= 0.5)) {
        return Err(Error::Argument(format!(
            "every alpha must lie in (0, 0.5], got {a}"
        )));
    }
    Ok(())
}

const QR_BASIS: BasisKind = BasisKind::Cosine;

fn one_replication(
    tags: &[EstimatorTag],
    n: usize,
    alpha: f64,
    noise: NoiseMode,
    k_basis: Option<usize>,
    sub_seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let data_seed: u64 = rng.random();
    let noise_seed: u64 = rng.random();
    let gram_seed: u64 = rng.random();
    let kind = EstimandKind::Transportation;
    let a = Treatment::Treated;
    let mut cache = None;
    let mut out = Vec::with_capacity(tags.len());
    for &tag in tags {
        let v = match tag {
            EstimatorTag::Plugin | EstimatorTag::Dr => {
                if cache.is_none() {
                    let dgp = DgpSpec::default();
                    let data = dgp.simulate(n, data_seed)?;
                    let fit = oracle_noisy_nuisances(&data.sample, &dgp, alpha, noise_seed, noise)?;
                    cache = Some((data, fit));
                }
                let (data, fit) = cache.as_ref().expect("filled above");
                if tag == EstimatorTag::Plugin {
                    plugin_estimate(&data.sample, fit, Arm::Treated, kind)?.point
                } else {
                    dr_estimate(&data.sample, fit, a, kind)?.point
                }
            }
            EstimatorTag::Qr => {
                let dgp = DgpSpec::full_covariate();
                let data = dgp.simulate(n, data_seed)?;
                let fit = oracle_noisy_nuisances(&data.sample, &dgp, alpha, noise_seed, noise)?;
                let k = k_basis.unwrap_or_else(|| default_k(n, dgp.v_indices().len(), None));
                let train = dgp.simulate(n, gram_seed)?;
                let train_fit =
                    oracle_noisy_nuisances(&train.sample, &dgp, alpha, noise_seed, noise)?;
                let basis = build_basis(
                    BasisSpec { kind: QR_BASIS, k },
                    &train.sample,
                    DataSource::External,
                )?;
                let gram = estimate_gram(
                    &basis,
                    &train_fit,
                    &train.sample,
                    a,
                    None,
                    DataSource::External,
                )?;
                qr_estimate(
                    &data.sample,
                    &fit,
                    &basis,
                    &gram,
                    a,
                    kind,
                    DataSource::Fold(0),
                )?
                .estimate
                .point
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// Replicates simulation, noisy-oracle nuisances and each estimator of
/// `θ_1` over the `(n, α)` grid. `qr` runs on the full-covariate variant of
/// the design, with basis and Gram matrix from an independent sample.
pub fn rmse_study(config: &StudyConfig) -> Result<RmseTable> {
    let tags = parse_estimators(&config.estimators)?;
    if tags.is_empty() {
        return Err(Error::Argument("no estimators requested".into()));
    }
    check_grids(&config.n_grid, &config.alpha_grid, config.replications)?;
    let truth = DgpSpec::default().truth().theta[1];
    let jobs: Vec<(usize, usize, usize)> = (0..config.n_grid.len())
        .flat_map(|ni| {
            (0..config.alpha_grid.len())
                .flat_map(move |ai| (0..config.replications).map(move |r| (ni, ai, r)))
        })
        .collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(ni, ai, r)| {
            one_replication(
                &tags,
                config.n_grid[ni],
                config.alpha_grid[ai],
                config.noise,
                config.k_basis,
                cell_seed(config.seed, ni, ai, r),
            )
        })
        .collect::<Result<_>>()?;
    let reps = config.replications;
    let mut rows = Vec::new();
    for (ni, &n) in config.n_grid.iter().enumerate() {
        for (ai, &alpha) in config.alpha_grid.iter().enumerate() {
            let base = (ni * config.alpha_grid.len() + ai) * reps;
            for (t, &tag) in tags.iter().enumerate() {
                let est: Vec<f64> = results[base..base + reps].iter().map(|v| v[t]).collect();
                let (bias, rmse, mc_se, _) = summarize(&est, truth);
                rows.push(RmseRow {
                    estimator: tag,
                    n,
                    alpha,
                    rmse,
                    bias,
                    mc_se,
                    reps,
                });
            }
        }
    }
    Ok(RmseTable { rows })
}

/// Settings of the second-order versus doubly robust comparison on the
/// full-covariate design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrCompareConfig {
    pub n_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub kind: EstimandKind,
    pub noise: NoiseMode,
    /// Size of the independent sample for basis and Gram matrix; defaults
    /// to `max(n, 20 k)`.
    pub gram_n: Option<usize>,
    /// Keep nuisances, basis and Gram matrix fixed across replications so
    /// only the estimation sample varies.
    pub fixed_nuisances: bool,
}

impl Default for QrCompareConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![500, 1000],
            k_grid: vec![10, 50, 200],
            alpha_grid: vec![0.25],
            replications: 200,
            seed: 1,
            kind: EstimandKind::Generalization,
            noise: NoiseMode::Shared,
            gram_n: None,
            fixed_nuisances: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QrCompareRow {
    pub method: EstimatorTag,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub bias: f64,
    pub rmse: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QrCompareTable {
    pub rows: Vec<QrCompareRow>,
}

impl QrCompareTable {
    pub fn get(
        &self,
        method: EstimatorTag,
        n: usize,
        k: usize,
        alpha: f64,
    ) -> Option<&QrCompareRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.n == n && r.k == k && (r.alpha - alpha).abs() < 1e-12)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,n,k,alpha,bias,rmse,var\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method.as_str(),
                r.n,
                r.k,
                r.alpha,
                r.bias,
                r.rmse,
                r.var
            );
        }
        out
    }
}

/// Doubly robust and quadratic estimates of arm 1 over `(n, k, α)`.
pub fn quadratic_compare(config: &QrCompareConfig) -> Result<QrCompareTable> {
    check_grids(&config.n_grid, &config.alpha_grid, config.replications)?;
    if config.k_grid.is_empty() || config.k_grid.contains(&0) {
        return Err(Error::Argument(
            "k grid must be nonempty with entries at least 1".into(),
        ));
    }
    let dgp = DgpSpec::full_covariate();
    let truth = match config.kind {
        EstimandKind::Generalization => dgp.truth().psi[1],
        EstimandKind::Transportation => dgp.truth().theta[1],
    };
    let a = Treatment::Treated;
    let (nn, nk, na) = (
        config.n_grid.len(),
        config.k_grid.len(),
        config.alpha_grid.len(),
    );
    let cells: Vec<(usize, usize, usize)> = (0..nn)
        .flat_map(|ni| (0..nk).flat_map(move |ki| (0..na).map(move |ai| (ni, ki, ai))))
        .collect();
    let mut rows = Vec::with_capacity(cells.len() * 2);
    for &(ni, ki, ai) in &cells {
        let (n, k, alpha) = (config.n_grid[ni], config.k_grid[ki], config.alpha_grid[ai]);
        let gram_n = config.gram_n.unwrap_or(n.max(20 * k));
        let cell_index = ki * na + ai;
        let fixed = if config.fixed_nuisances {
            let mut rng =
                ChaCha8Rng::seed_from_u64(cell_seed(config.seed, ni, cell_index, usize::MAX));
            let noise_seed: u64 = rng.random();
            let train = dgp.simulate(gram_n, rng.random())?;
            let train_fit =
                oracle_noisy_nuisances(&train.sample, &dgp, alpha, noise_seed, config.noise)?;
            let basis = build_basis(
                BasisSpec { kind: QR_BASIS, k },
                &train.sample,
                DataSource::External,
            )?;
            let gram = estimate_gram(
                &basis,
                &train_fit,
                &train.sample,
                a,
                None,
                DataSource::External,
            )?;
            Some((noise_seed, basis, gram))
        } else {
            None
        };
        let pairs: Vec<(f64, f64)> = (0..config.replications)
            .into_par_iter()
            .map(|r| -> Result<(f64, f64)> {
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(config.seed, ni, cell_index, r));
                let data_seed: u64 = rng.random();
                let data = dgp.simulate(n, data_seed)?;
                let owned;
                let (noise_seed, basis, gram) = match &fixed {
                    Some((s, b, g)) => (*s, b, g),
                    None => {
                        let noise_seed: u64 = rng.random();
                        let train = dgp.simulate(gram_n, rng.random())?;
                        let train_fit = oracle_noisy_nuisances(
                            &train.sample,
                            &dgp,
                            alpha,
                            noise_seed,
                            config.noise,
                        )?;
                        let basis = build_basis(
                            BasisSpec { kind: QR_BASIS, k },
                            &train.sample,
                            DataSource::External,
                        )?;
                        let gram = estimate_gram(
                            &basis,
                            &train_fit,
                            &train.sample,
                            a,
                            None,
                            DataSource::External,
                        )?;
                        owned = (basis, gram);
                        (noise_seed, &owned.0, &owned.1)
                    }
                };
                let fit =
                    oracle_noisy_nuisances(&data.sample, &dgp, alpha, noise_seed, config.noise)?;
                let dr = dr_estimate(&data.sample, &fit, a, config.kind)?.point;
                let qr = qr_estimate(
                    &data.sample,
                    &fit,
                    basis,
                    gram,
                    a,
                    config.kind,
                    DataSource::Fold(0),
                )?
                .estimate
                .point;
                Ok((dr, qr))
            })
            .collect::<Result<_>>()?;
        for (tag, pick) in [(EstimatorTag::Dr, 0usize), (EstimatorTag::Qr, 1)] {
            let est: Vec<f64> = pairs
                .iter()
                .map(|p| if pick == 0 { p.0 } else { p.1 })
                .collect();
            let (bias, rmse, _, var) = summarize(&est, truth);
            rows.push(QrCompareRow {
                method: tag,
                n,
                k,
                alpha,
                bias,
                rmse,
                var,
            });
        }
    }
    Ok(QrCompareTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(estimators: &[&str]) -> StudyConfig {
        StudyConfig {
            n_grid: vec![200],
            alpha_grid: vec![0.25, 0.5],
            replications: 5,
            seed: 3,
            estimators: estimators.iter().map(|s| s.to_string()).collect(),
            noise: NoiseMode::Shared,
            k_basis: Some(6),
        }
    }

    #[test]
    fn unknown_tag() {
        assert!(matches!(
            rmse_study(&small(&["dr", "tmle"])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn deterministic_table() {
        let a = rmse_study(&small(&["plugin", "dr", "qr"])).unwrap();
        let b = rmse_study(&small(&["plugin", "dr", "qr"])).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 6);
        for r in &a.rows {
            assert!(r.rmse * r.rmse >= r.bias * r.bias - 1e-12);
        }
    }

    #[test]
    fn estimator_subset_does_not_change_values() {
        let both = rmse_study(&small(&["plugin", "dr"])).unwrap();
        let dr = rmse_study(&small(&["dr"])).unwrap();
        assert_eq!(
            both.get(EstimatorTag::Dr, 200, 0.5),
            dr.get(EstimatorTag::Dr, 200, 0.5)
        );
    }

    #[test]
    fn summary_hand_values() {
        let (bias, rmse, mc_se, var) = summarize(&[0.0, 2.0], 1.5);
        assert_eq!(bias, -0.5);
        assert!((rmse - (2.5f64 / 2.0).sqrt()).abs() < 1e-15);
        assert_eq!(var, 2.0);
        assert_eq!(mc_se, 1.0);
    }

    #[test]
    fn compare_runs() {
        let cfg = QrCompareConfig {
            n_grid: vec![100],
            k_grid: vec![4],
            alpha_grid: vec![0.3],
            replications: 4,
            ..QrCompareConfig::default()
        };
        let t = quadratic_compare(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.to_csv(), quadratic_compare(&cfg).unwrap().to_csv());
    }
}
