use serde::{Deserialize, Serialize};

use super::DataSource;
use crate::error::{Error, Result};
use crate::model::CombinedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Indicators of the cells of an equal-mass grid, `m` cells per axis.
    Histogram,
    /// Tensor products of `{1, √2 cos(π j u)}` on the empirical-CDF scale,
    /// first `k` terms in total-degree order.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    Histogram {
        cuts: Vec<Vec<f64>>,
        m: usize,
    },
    Cosine {
        sorted: Vec<Vec<f64>>,
        terms: Vec<Vec<usize>>,
    },
    Points {
        support: Vec<Vec<f64>>,
    },
}

/// A fitted basis `x ↦ b(x) ∈ R^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    inner: Inner,
    k: usize,
    d: usize,
    source: DataSource,
}

/// Integer `m` with `m^d = k`, if any.
fn integer_root(k: usize, d: usize) -> Option<usize> {
    let guess = (k as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&m| m >= 1 && m.checked_pow(d as u32) == Some(k))
}

/// Sample quantile averaging the two order statistics at a jump.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = p * n as f64;
    let j = h.floor() as usize;
    if (h - j as f64).abs() < 1e-12 && j >= 1 && j < n {
        0.5 * (sorted[j - 1] + sorted[j])
    } else {
        sorted[(h.ceil() as usize).clamp(1, n) - 1]
    }
}

/// Multi-indices of total degree ascending, lexicographic within a degree.
fn total_degree_terms(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(k);
    let mut degree = 0;
    while out.len() < k {
        let mut level = Vec::new();
        let mut cur = vec![0usize; d];
        compositions(d, degree, 0, &mut cur, &mut level);
        level.sort();
        level.reverse();
        for t in level {
            if out.len() == k {
                break;
            }
            out.push(t);
        }
        degree += 1;
    }
    out
}

fn compositions(
    d: usize,
    remaining: usize,
    pos: usize,
    cur: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if pos == d - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v;
        compositions(d, remaining - v, pos + 1, cur, out);
    }
}

impl Basis {
    /// Indicators of the listed support points of a discrete covariate; any
    /// other point maps to the zero vector.
    pub fn point_indicators(support: Vec<Vec<f64>>, source: DataSource) -> Result<Self> {
        let Some(first) = support.first() else {
            return Err(Error::Argument(
                "support must contain at least one point".into(),
            ));
        };
        let d = first.len();
        if d == 0 || support.iter().any(|p| p.len() != d) {
            return Err(Error::Argument(
                "support points have inconsistent dimension".into(),
            ));
        }
        for (i, p) in support.iter().enumerate() {
            if support[..i].contains(p) {
                return Err(Error::Argument(format!("support point {i} is repeated")));
            }
        }
        Ok(Self {
            k: support.len(),
            d,
            inner: Inner::Points { support },
            source,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn source(&self) -> DataSource {
        self.source
    }

    /// Nonzero entries of `b(x)` as `(index, value)` pairs.
    pub fn eval_sparse(&self, x: &[f64]) -> Vec<(usize, f64)> {
        match &self.inner {
            Inner::Histogram { cuts, m } => {
                let mut cell = 0;
                for (c, &xj) in cuts.iter().zip(x).rev() {
                    cell = cell * m + c.partition_point(|&t| t <= xj);
                }
                vec![(cell, 1.0)]
            }
            Inner::Points { support } => match support.iter().position(|p| p.as_slice() == x) {
                Some(j) => vec![(j, 1.0)],
                None => Vec::new(),
            },
            Inner::Cosine { sorted, terms } => {
                let u: Vec<f64> = sorted
                    .iter()
                    .enumerate()
                    .map(|(j, s)| ecdf_mid(s, x[j]))
                    .collect();
                terms
                    .iter()
                    .enumerate()
                    .map(|(t, term)| {
                        let v = term
                            .iter()
                            .zip(&u)
                            .map(|(&deg, &uj)| {
                                if deg == 0 {
                                    1.0
                                } else {
                                    std::f64::consts::SQRT_2
                                        * (std::f64::consts::PI * deg as f64 * uj).cos()
                                }
                            })
                            .product::<f64>();
                        (t, v)
                    })
                    .collect()
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (j, v) in self.eval_sparse(x) {
            out[j] = v;
        }
        out
    }
}

/// Mid-rank empirical CDF of `x` against sorted training values.
fn ecdf_mid(sorted: &[f64], x: f64) -> f64 {
    let below = sorted.partition_point(|&t| t < x);
    let upto = sorted.partition_point(|&t| t <= x);
    (below as f64 + 0.5 * (upto - below) as f64) / sorted.len() as f64
}

/// Fits a basis to covariate rows.
pub fn build_basis_from_rows(
    spec: BasisSpec,
    rows: &[Vec<f64>],
    source: DataSource,
) -> Result<Basis> {
    if spec.k == 0 {
        return Err(Error::Argument(
            "basis dimension k must be at least 1".into(),
        ));
    }
    if rows.is_empty() {
        return Err(Error::Data("basis training sample is empty".into()));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Data(
            "basis training rows have inconsistent dimension".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut c: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let inner = match spec.kind {
        BasisKind::Histogram => {
            let m = integer_root(spec.k, d).ok_or_else(|| {
                Error::Argument(format!(
                    "histogram basis needs k = m^d; k = {} is not a power {d}",
                    spec.k
                ))
            })?;
            if spec.k > rows.len() {
                return Err(Error::Argument(format!(
                    "histogram basis with k = {} cells exceeds the {} training rows",
                    spec.k,
                    rows.len()
                )));
            }
            let cuts = columns
                .iter()
                .map(|c| (1..m).map(|q| quantile(c, q as f64 / m as f64)).collect())
                .collect();
            Inner::Histogram { cuts, m }
        }
        BasisKind::Cosine => Inner::Cosine {
            sorted: columns,
            terms: total_degree_terms(d, spec.k),
        },
    };
    Ok(Basis {
        inner,
        k: spec.k,
        d,
        source,
    })
}

/// Fits a basis to the covariates of every record of a `V = X` sample.
pub fn build_basis(spec: BasisSpec, train: &CombinedSample, source: DataSource) -> Result<Basis> {
    if !train.v_equals_x() {
        return Err(Error::Unsupported(
            "second-order estimation is available only when the target observes all covariates (V = X); \
             with fewer target covariates the required higher-order terms are not available"
                .into(),
        ));
    }
    let rows: Vec<Vec<f64>> = (0..train.n())
        .map(|i| train.x_of(i).expect("V = X").to_vec())
        .collect();
    build_basis_from_rows(spec, &rows, source)
}
