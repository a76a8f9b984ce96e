//! Bounds under bounded violations of exchangeability (`δ1`) and
//! transportability (`δ2`), and break-even values of the sensitivity
//! parameters.

use serde::Serialize;

use crate::dr::dr_estimate_arm;
use crate::error::{Error, Result};
use crate::model::{Arm, CombinedSample, EstimandKind, EstimandSpec, Treatment};
use crate::nuisance::NuisanceFit;

/// Half-width of the bound is `c1·δ1 + c2·δ2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfWidth {
    pub c1: f64,
    pub c2: f64,
}

impl HalfWidth {
    /// Contrast coefficients: `(1, 2·P(S=0))` for generalization, `(1, 2)`
    /// for transportation.
    pub fn contrast(kind: EstimandKind, p_target: f64) -> Self {
        match kind {
            EstimandKind::Generalization => Self {
                c1: 1.0,
                c2: 2.0 * p_target,
            },
            EstimandKind::Transportation => Self { c1: 1.0, c2: 2.0 },
        }
    }

    /// Single-arm coefficients given the mean of `P(A = 1 - a | V, S = 1)`
    /// over the relevant population.
    pub fn arm(kind: EstimandKind, mean_other_arm: f64, p_target: f64) -> Self {
        match kind {
            EstimandKind::Generalization => Self {
                c1: mean_other_arm,
                c2: p_target,
            },
            EstimandKind::Transportation => Self {
                c1: mean_other_arm,
                c2: 1.0,
            },
        }
    }

    /// Coefficients estimated from a sample and fit.
    pub fn estimate(
        sample: &CombinedSample,
        fit: &NuisanceFit,
        spec: EstimandSpec,
    ) -> Result<Self> {
        fit.check_matches(sample)?;
        let p_target = sample.p_target();
        let Some(a) = spec.arm.treatment() else {
            return Ok(Self::contrast(spec.kind, p_target));
        };
        if !fit.has_arm_given_v() {
            return Err(Error::Argument(
                "single-arm bounds need the treatment-given-V regression in the nuisance fit"
                    .into(),
            ));
        }
        let range = match spec.kind {
            EstimandKind::Generalization => 0..sample.n(),
            EstimandKind::Transportation => sample.n1()..sample.n(),
        };
        if range.is_empty() {
            return Err(Error::Data(
                "no records to average the treatment probability over".into(),
            ));
        }
        let count = range.len() as f64;
        let other: f64 = range
            .map(|i| {
                let p1 = fit.arm_given_v(i).expect("checked above");
                if a == Treatment::Treated {
                    1.0 - p1
                } else {
                    p1
                }
            })
            .sum::<f64>()
            / count;
        Ok(Self::arm(spec.kind, other, p_target))
    }

    pub fn at(&self, delta1: f64, delta2: f64) -> f64 {
        self.c1 * delta1 + self.c2 * delta2
    }
}

/// `[lower, upper]` for one `(δ1, δ2)`. Endpoint standard errors are not
/// reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityBound {
    pub delta1: f64,
    pub delta2: f64,
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    pub kind: EstimandKind,
    pub arm: Arm,
}

impl SensitivityBound {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, other: &SensitivityBound) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

fn check_deltas(delta1: f64, delta2: f64) -> Result<()> {
    if !(delta1 >= 0.0 && delta1.is_finite() && delta2 >= 0.0 && delta2.is_finite()) {
        return Err(Error::Argument(format!(
            "sensitivity parameters must be finite and nonnegative, got delta1 = {delta1}, delta2 = {delta2}"
        )));
    }
    Ok(())
}

/// Bound around a known center.
pub fn bound_from_point(
    point: f64,
    hw: HalfWidth,
    delta1: f64,
    delta2: f64,
    spec: EstimandSpec,
) -> Result<SensitivityBound> {
    check_deltas(delta1, delta2)?;
    if !point.is_finite() {
        return Err(Error::Argument(format!(
            "point must be finite, got {point}"
        )));
    }
    let h = hw.at(delta1, delta2);
    Ok(SensitivityBound {
        delta1,
        delta2,
        lower: point - h,
        upper: point + h,
        point,
        kind: spec.kind,
        arm: spec.arm,
    })
}

/// Bound centered at the doubly robust estimate.
pub fn sensitivity_interval(
    sample: &CombinedSample,
    fit: &NuisanceFit,
    delta1: f64,
    delta2: f64,
    spec: EstimandSpec,
) -> Result<SensitivityBound> {
    check_deltas(delta1, delta2)?;
    let hw = HalfWidth::estimate(sample, fit, spec)?;
    let center = dr_estimate_arm(sample, fit, spec.arm, spec.kind)?;
    bound_from_point(center.point, hw, delta1, delta2, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakevenMode {
    Delta1Only,
    Delta2Only,
    /// The line `c1·δ1 + c2·δ2 = |point|` at `points` equally spaced `δ1`.
    Curve {
        points: usize,
    },
}

pub const DEFAULT_CURVE_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub delta1: f64,
    pub delta2: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Breakeven {
    Delta1(f64),
    Delta2(f64),
    Curve(Vec<CurvePoint>),
}

/// Smallest sensitivity values at which the bound reaches zero.
pub fn breakeven_deltas(point: f64, hw: HalfWidth, mode: BreakevenMode) -> Result<Breakeven> {
    if !point.is_finite() {
        return Err(Error::Argument(format!(
            "point must be finite, got {point}"
        )));
    }
    if !(hw.c1 > 0.0 && hw.c2 > 0.0) {
        return Err(Error::Argument(
            "half-width coefficients must be positive".into(),
        ));
    }
    let m = point.abs();
    Ok(match mode {
        BreakevenMode::Delta1Only => Breakeven::Delta1(m / hw.c1),
        BreakevenMode::Delta2Only => Breakeven::Delta2(m / hw.c2),
        BreakevenMode::Curve { points } => {
            if points < 2 {
                return Err(Error::Argument("curve needs at least 2 points".into()));
            }
            let d1_max = m / hw.c1;
            let last = (points - 1) as f64;
            Breakeven::Curve(
                (0..points)
                    .map(|k| {
                        let delta1 = if k == points - 1 {
                            d1_max
                        } else {
                            d1_max * k as f64 / last
                        };
                        let delta2 = ((m - hw.c1 * delta1) / hw.c2).max(0.0);
                        let h = hw.at(delta1, delta2);
                        CurvePoint {
                            delta1,
                            delta2,
                            lower: point - h,
                            upper: point + h,
                        }
                    })
                    .collect(),
            )
        }
    })
}
