//! Exact identification checks on finite-support laws.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EstimandKind, Treatment};

/// One support point of `(X, S)` with the potential-outcome laws there.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCell {
    pub x: Vec<f64>,
    pub source: bool,
    /// `P(X = x, S = s)`.
    pub mass: f64,
    /// `P(A = 1 | X = x, S = 1)`; ignored for target cells.
    pub pi1: f64,
    /// Laws of `Y^0` and `Y^1` given the cell, as `(value, probability)`.
    /// Treatment is assigned independently of them.
    pub outcomes: [Vec<(f64, f64)>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    pub v_indices: Vec<usize>,
    pub cells: Vec<DiscreteCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentificationCheck {
    /// Target parameter from the potential outcomes.
    pub lhs: f64,
    /// Nested observed-data regression.
    pub rhs: f64,
    pub gap: f64,
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| (x + 0.0).to_bits()).collect()
}

fn expectation(law: &[(f64, f64)]) -> f64 {
    law.iter().map(|(y, p)| y * p).sum()
}

impl DiscreteLaw {
    fn validate(&self) -> Result<()> {
        let Some(first) = self.cells.first() else {
            return Err(Error::Argument("discrete law has no cells".into()));
        };
        let d = first.x.len();
        if self.v_indices.is_empty() || self.v_indices.iter().any(|&j| j >= d) {
            return Err(Error::Argument(
                "V indices are empty or out of range".into(),
            ));
        }
        let mut total = 0.0;
        for (i, c) in self.cells.iter().enumerate() {
            if c.x.len() != d {
                return Err(Error::Argument(format!(
                    "cell {i} has dimension {}, expected {d}",
                    c.x.len()
                )));
            }
            if !(c.mass >= 0.0 && c.mass.is_finite()) || !(0.0..=1.0).contains(&c.pi1) {
                return Err(Error::Argument(format!(
                    "cell {i} has an invalid mass or treatment probability"
                )));
            }
            for (a, law) in c.outcomes.iter().enumerate() {
                let p: f64 = law.iter().map(|(_, p)| p).sum();
                if law.iter().any(|(y, p)| !y.is_finite() || *p < 0.0) || (p - 1.0).abs() > 1e-12 {
                    return Err(Error::Argument(format!(
                        "cell {i}: law of Y^{a} is not a probability law"
                    )));
                }
            }
            total += c.mass;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "cell masses sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    fn v_of(&self, x: &[f64]) -> Vec<f64> {
        self.v_indices.iter().map(|&j| x[j]).collect()
    }
}

/// Compares the potential-outcome mean with the nested regression
/// `E[E{E(Y | X, A=a, S=1) | V, S=1}]` (over everyone, or over `S = 0`)
/// by exact enumeration. Cells and covariate values violating positivity
/// are reported by name.
pub fn identification_oracle(
    law: &DiscreteLaw,
    a: Treatment,
    kind: EstimandKind,
) -> Result<IdentificationCheck> {
    law.validate()?;
    let in_target = |c: &DiscreteCell| match kind {
        EstimandKind::Generalization => true,
        EstimandKind::Transportation => !c.source,
    };
    let pop_mass: f64 = law
        .cells
        .iter()
        .filter(|c| in_target(c))
        .map(|c| c.mass)
        .sum();
    if pop_mass <= 0.0 {
        return Err(Error::Argument("target population has zero mass".into()));
    }
    let lhs = law
        .cells
        .iter()
        .filter(|c| in_target(c))
        .map(|c| c.mass * expectation(&c.outcomes[a.index()]))
        .sum::<f64>()
        / pop_mass;

    // Observed joint of (X, S=1, A=a, Y), then μ_a(x).
    let mut v_source: BTreeMap<Vec<u64>, (f64, f64)> = BTreeMap::new();
    for (i, c) in law.cells.iter().enumerate() {
        if !c.source || c.mass == 0.0 {
            continue;
        }
        let pa = if a == Treatment::Treated {
            c.pi1
        } else {
            1.0 - c.pi1
        };
        let arm_mass = c.mass * pa;
        if arm_mass <= 0.0 {
            return Err(Error::Argument(format!(
                "positivity fails at cell {i} (x = {:?}, S = 1): P(A = {} | X, S = 1) = 0",
                c.x,
                a.index()
            )));
        }
        let joint: Vec<(f64, f64)> = c.outcomes[a.index()]
            .iter()
            .map(|&(y, p)| (y, arm_mass * p))
            .collect();
        let mu = joint.iter().map(|(y, m)| y * m).sum::<f64>()
            / joint.iter().map(|(_, m)| m).sum::<f64>();
        let e = v_source.entry(key(&law.v_of(&c.x))).or_insert((0.0, 0.0));
        e.0 += c.mass * mu;
        e.1 += c.mass;
    }
    let mut rhs = 0.0;
    for (i, c) in law.cells.iter().enumerate() {
        if !in_target(c) || c.mass == 0.0 {
            continue;
        }
        let v = law.v_of(&c.x);
        let Some(&(num, den)) = v_source.get(&key(&v)) else {
            return Err(Error::Argument(format!(
                "positivity fails at cell {i}: no source mass at v = {v:?}"
            )));
        };
        rhs += c.mass * num / den;
    }
    rhs /= pop_mass;
    Ok(IdentificationCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}
