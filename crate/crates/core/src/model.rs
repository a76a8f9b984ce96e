//! Domain types shared by every estimator: records, the combined
//! source/target sample, fold assignments, estimand selectors and the
//! reported effect estimate.
//!
//! Records are stored in one combined order: the `n1` source records first
//! (indices `0..n1`, `S = 1`), then the `n2` target records (indices
//! `n1..n`, `S = 0`). Every per-record vector in the crate follows this order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 97.5% standard normal quantile, used for every 95% interval.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Default positivity constant.
pub const DEFAULT_EPS: f64 = 0.01;

/// Default number of cross-fitting folds.
pub const DEFAULT_FOLDS: usize = 5;

/// Binary treatment level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Control,
    Treated,
}

impl Treatment {
    pub const BOTH: [Treatment; 2] = [Treatment::Control, Treatment::Treated];

    pub fn index(self) -> usize {
        match self {
            Treatment::Control => 0,
            Treatment::Treated => 1,
        }
    }

    pub fn from_index(a: usize) -> Option<Self> {
        match a {
            0 => Some(Treatment::Control),
            1 => Some(Treatment::Treated),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Treatment::Control => Treatment::Treated,
            Treatment::Treated => Treatment::Control,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecord {
    pub x: Vec<f64>,
    pub a: Treatment,
    pub y: f64,
}

/// Survey design fields of a target record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveyInfo {
    pub stratum: i64,
    pub cluster: i64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRecord {
    pub v: Vec<f64>,
    pub survey: Option<SurveyInfo>,
}

/// Source records `(X, A, Y, S = 1)` and target records `(V, S = 0)`, with
/// `V` selected from `X` by `v_index_map`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSample {
    source: Vec<SourceRecord>,
    target: Vec<TargetRecord>,
    v_index_map: Vec<usize>,
    d: usize,
}

impl CombinedSample {
    /// Validates dimensions, the injective `V ⊆ X` map and finiteness.
    ///
    /// `d` is taken from the source records; a sample with no source records
    /// must be built with [`CombinedSample::with_dimension`].
    pub fn new(
        source: Vec<SourceRecord>,
        target: Vec<TargetRecord>,
        v_index_map: Vec<usize>,
    ) -> Result<Self> {
        let d = match source.first() {
            Some(r) => r.x.len(),
            None => v_index_map.iter().map(|&j| j + 1).max().unwrap_or(0),
        };
        Self::with_dimension(source, target, v_index_map, d)
    }

    pub fn with_dimension(
        source: Vec<SourceRecord>,
        target: Vec<TargetRecord>,
        v_index_map: Vec<usize>,
        d: usize,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Data(
                "covariate dimension d must be at least 1".into(),
            ));
        }
        if v_index_map.is_empty() {
            return Err(Error::Schema(
                "V must contain at least one covariate".into(),
            ));
        }
        let mut seen = vec![false; d];
        for &j in &v_index_map {
            if j >= d {
                return Err(Error::Schema(format!(
                    "V index {j} is out of range for d = {d}"
                )));
            }
            if seen[j] {
                return Err(Error::Schema(format!("V index {j} appears twice")));
            }
            seen[j] = true;
        }
        if source.is_empty() && target.is_empty() {
            return Err(Error::Data("sample has no records".into()));
        }
        for (i, r) in source.iter().enumerate() {
            if r.x.len() != d {
                return Err(Error::Data(format!(
                    "source record {i} has {} covariates, expected {d}",
                    r.x.len()
                )));
            }
            if !r.y.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "source record {i} has a non-finite value"
                )));
            }
        }
        let dv = v_index_map.len();
        for (i, r) in target.iter().enumerate() {
            if r.v.len() != dv {
                return Err(Error::Data(format!(
                    "target record {i} has {} covariates, expected {dv}",
                    r.v.len()
                )));
            }
            if r.v.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "target record {i} has a non-finite value"
                )));
            }
            if let Some(s) = r.survey {
                if !(s.weight > 0.0 && s.weight.is_finite()) {
                    return Err(Error::Data(format!(
                        "target record {i} has non-positive survey weight {}",
                        s.weight
                    )));
                }
            }
        }
        Ok(Self {
            source,
            target,
            v_index_map,
            d,
        })
    }

    pub fn source(&self) -> &[SourceRecord] {
        &self.source
    }

    pub fn target(&self) -> &[TargetRecord] {
        &self.target
    }

    pub fn v_index_map(&self) -> &[usize] {
        &self.v_index_map
    }

    pub fn n(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn n1(&self) -> usize {
        self.source.len()
    }

    pub fn n2(&self) -> usize {
        self.target.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_v(&self) -> usize {
        self.v_index_map.len()
    }

    /// True when `V` is all of `X` in the original column order.
    pub fn v_equals_x(&self) -> bool {
        self.v_index_map.len() == self.d
            && self.v_index_map.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn is_source(&self, i: usize) -> bool {
        i < self.source.len()
    }

    /// `V` for record `i` in combined order.
    pub fn v_of(&self, i: usize) -> Vec<f64> {
        if i < self.source.len() {
            let x = &self.source[i].x;
            self.v_index_map.iter().map(|&j| x[j]).collect()
        } else {
            self.target[i - self.source.len()].v.clone()
        }
    }

    /// `X` for record `i`; target records only carry `X` when `V = X`.
    pub fn x_of(&self, i: usize) -> Option<&[f64]> {
        if i < self.source.len() {
            Some(&self.source[i].x)
        } else if self.v_equals_x() {
            Some(&self.target[i - self.source.len()].v)
        } else {
            None
        }
    }

    /// Every record's `V`, in combined order.
    pub fn v_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.v_of(i)).collect()
    }

    /// Fraction of target records, `n2 / n`.
    pub fn p_target(&self) -> f64 {
        self.n2() as f64 / self.n() as f64
    }

    pub fn has_survey_design(&self) -> bool {
        !self.target.is_empty() && self.target.iter().all(|r| r.survey.is_some())
    }

    /// Sub-sample made of the given combined indices (order preserved within
    /// source and target blocks).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut source = Vec::new();
        let mut target = Vec::new();
        for &i in indices {
            if i < self.source.len() {
                source.push(self.source[i].clone());
            } else {
                target.push(self.target[i - self.source.len()].clone());
            }
        }
        Self::with_dimension(source, target, self.v_index_map.clone(), self.d)
    }
}

/// Fold id per record (combined order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    /// Builds an assignment from explicit fold ids; every fold in `0..k` must
    /// be nonempty.
    pub fn from_ids(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Argument("number of folds must be positive".into()));
        }
        let mut counts = vec![0usize; k];
        for &f in &fold_of {
            if f >= k {
                return Err(Error::Argument(format!("fold id {f} out of range 0..{k}")));
            }
            counts[f] += 1;
        }
        if let Some(f) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Argument(format!("fold {f} is empty")));
        }
        Ok(Self { fold_of, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    pub fn ids(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Random balanced partition of `0..n` into `k_folds` folds.
pub fn split_folds(n: usize, k_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if k_folds < 2 {
        return Err(Error::Argument(format!(
            "k_folds must be at least 2, got {k_folds}"
        )));
    }
    if k_folds > n {
        return Err(Error::Argument(format!(
            "k_folds = {k_folds} exceeds the number of records n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k_folds;
    }
    Ok(FoldAssignment {
        fold_of,
        k: k_folds,
    })
}

/// `min(max(v, eps), 1 - eps)` for every entry.
pub fn clip_probabilities(values: &[f64], eps: f64) -> Result<Vec<f64>> {
    validate_eps(eps)?;
    values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                Ok(clip_probability(v, eps))
            } else {
                Err(Error::Argument(format!(
                    "cannot clip non-finite probability {v}"
                )))
            }
        })
        .collect()
}

pub(crate) fn validate_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 0.5 {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "positivity constant eps must lie in (0, 0.5), got {eps}"
        )))
    }
}

#[inline]
pub(crate) fn clip_probability(v: f64, eps: f64) -> f64 {
    v.max(eps).min(1.0 - eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandKind {
    /// `E[Y^a]` over the whole population.
    Generalization,
    /// `E[Y^a | S = 0]` over the target population.
    Transportation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treated,
    Control,
    /// Treated minus control.
    Contrast,
}

impl Arm {
    pub fn treatment(self) -> Option<Treatment> {
        match self {
            Arm::Treated => Some(Treatment::Treated),
            Arm::Control => Some(Treatment::Control),
            Arm::Contrast => None,
        }
    }
}

impl From<Treatment> for Arm {
    fn from(t: Treatment) -> Self {
        match t {
            Treatment::Treated => Arm::Treated,
            Treatment::Control => Arm::Control,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    pub arm: Arm,
}

impl EstimandSpec {
    pub fn new(kind: EstimandKind, arm: Arm) -> Self {
        Self { kind, arm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plugin,
    Dr,
    Qr,
}

/// Point estimate with a normal-approximation 95% interval.
///
/// Plug-in standard errors are naive (spread of the averaged values), and
/// quadratic-estimator standard errors omit the `k / n^2` second-order
/// variance component; see [`EffectEstimate::se_is_naive`] and
/// [`EffectEstimate::se_omits_second_order`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub point: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_used: usize,
    pub kind: EstimandKind,
    pub arm: Arm,
    pub method: Method,
}

impl EffectEstimate {
    pub fn from_point_se(
        point: f64,
        se: f64,
        n_used: usize,
        spec: EstimandSpec,
        method: Method,
    ) -> Self {
        let se = se.max(0.0);
        Self {
            point,
            se,
            ci_lower: point - Z_975 * se,
            ci_upper: point + Z_975 * se,
            n_used,
            kind: spec.kind,
            arm: spec.arm,
            method,
        }
    }

    pub fn spec(&self) -> EstimandSpec {
        EstimandSpec::new(self.kind, self.arm)
    }

    pub fn se_is_naive(&self) -> bool {
        self.method == Method::Plugin
    }

    pub fn se_omits_second_order(&self) -> bool {
        self.method == Method::Qr
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }
}
