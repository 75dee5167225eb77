//! Two-sample comparison of Likert-coded survey answers: the
//! Mann-Whitney-Wilcoxon test and Cliff's delta with Romano's magnitude
//! thresholds.
//!
//! ```
//! use funnelbot_stats::{analyze, LikertSample, Magnitude, Method};
//!
//! let g1 = LikertSample::new("G1", vec![1, 2, 3]).unwrap();
//! let g2 = LikertSample::new("G2", vec![4, 5, 5]).unwrap();
//! let r = analyze(&g1, &g2).unwrap();
//! assert_eq!(r.delta, -1.0);
//! assert_eq!(r.magnitude, Magnitude::Large);
//! assert_eq!(r.method, Method::Exact);
//! ```

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

/// Combined sample size up to which p-values are computed exactly.
pub const EXACT_MAX_N: usize = 12;

pub const NEGLIGIBLE_BELOW: f64 = 0.147;
pub const SMALL_BELOW: f64 = 0.33;
pub const MEDIUM_BELOW: f64 = 0.474;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample `{0}` is empty")]
    EmptySample(String),
    #[error("sample `{label}` has value {value} outside 1..=5")]
    OutOfScale { label: String, value: u8 },
    #[error("delta {0} is outside [-1, 1]")]
    DeltaOutOfRange(f64),
}

/// Answers of one group, coded 1 (strongly disagree) to 5 (strongly agree).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertSample {
    label: String,
    values: Vec<u8>,
}

impl LikertSample {
    /// Checks the scale; emptiness is only rejected when the sample is used.
    pub fn new(label: impl Into<String>, values: Vec<u8>) -> Result<Self, StatsError> {
        let label = label.into();
        if let Some(&value) = values
            .iter()
            .find(|v| !(LIKERT_MIN..=LIKERT_MAX).contains(*v))
        {
            return Err(StatsError::OutOfScale { label, value });
        }
        Ok(Self { label, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn non_empty(&self) -> Result<&[u8], StatsError> {
        if self.values.is_empty() {
            Err(StatsError::EmptySample(self.label.clone()))
        } else {
            Ok(&self.values)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApproximation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample; ties count one half.
    pub u_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub delta: f64,
    pub magnitude: Magnitude,
}

/// Pairs (x, y) in a × b with x > y and x < y.
fn dominance(a: &[u8], b: &[u8]) -> (u64, u64) {
    let (mut gt, mut lt) = (0, 0);
    for x in a {
        for y in b {
            match x.cmp(y) {
                Ordering::Greater => gt += 1,
                Ordering::Less => lt += 1,
                Ordering::Equal => {}
            }
        }
    }
    (gt, lt)
}

/// Twice U of `a`, so ties stay integral.
fn doubled_u(a: &[u8], b: &[u8]) -> u64 {
    let (gt, lt) = dominance(a, b);
    let pairs = (a.len() * b.len()) as u64;
    2 * gt + (pairs - gt - lt)
}

pub fn mann_whitney(a: &LikertSample, b: &LikertSample) -> Result<MannWhitney, StatsError> {
    let (xa, xb) = (a.non_empty()?, b.non_empty()?);
    Ok(mann_whitney_ordinal(xa, xb))
}

/// [`mann_whitney`] over any ordinal codes, without the Likert scale check.
///
/// # Panics
/// If either slice is empty.
pub fn mann_whitney_ordinal(xa: &[u8], xb: &[u8]) -> MannWhitney {
    assert!(
        !xa.is_empty() && !xb.is_empty(),
        "samples must be non-empty"
    );
    let u2 = doubled_u(xa, xb);
    let n = xa.len() + xb.len();
    let (p_value, method) = if n <= EXACT_MAX_N {
        (exact_p(xa, xb, u2), Method::Exact)
    } else {
        (normal_p(xa, xb, u2), Method::NormalApproximation)
    };
    MannWhitney {
        u_statistic: u2 as f64 / 2.0,
        p_value,
        method,
    }
}

/// Sizes of the tie groups of the pooled sample, ascending by value.
fn tie_counts(a: &[u8], b: &[u8]) -> Vec<usize> {
    let mut counts = [0usize; 256];
    for &v in a.iter().chain(b) {
        counts[v as usize] += 1;
    }
    counts.into_iter().filter(|&c| c > 0).collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k)
        .fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        .round()
}

/// Permutation distribution of 2U over every way of choosing which pooled
/// observations belong to `a`, with the tie structure held fixed.
fn exact_p(a: &[u8], b: &[u8], observed_u2: u64) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let max_u2 = 2 * na * nb;
    // dist[k][u2]: ways to place k observations of `a` in the groups seen so far
    let mut dist = vec![vec![0.0f64; max_u2 + 1]; na + 1];
    dist[0][0] = 1.0;
    let mut seen = 0;
    for t in tie_counts(a, b) {
        let mut next = vec![vec![0.0f64; max_u2 + 1]; na + 1];
        for (k, row) in dist.iter().enumerate().take(seen.min(na) + 1) {
            let b_below = seen - k;
            for (u2, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for j in 0..=t.min(na - k) {
                    if seen - k + (t - j) > nb {
                        continue;
                    }
                    let add = j * (2 * b_below + (t - j));
                    next[k + j][u2 + add] += w * binomial(t, j);
                }
            }
        }
        dist = next;
        seen += t;
    }

    // 2U is centred on na * nb
    let centre = (na * nb) as i64;
    let observed = (observed_u2 as i64 - centre).abs();
    let (mut extreme, mut total) = (0.0, 0.0);
    for (u2, &w) in dist[na].iter().enumerate() {
        total += w;
        if (u2 as i64 - centre).abs() >= observed {
            extreme += w;
        }
    }
    (extreme / total).min(1.0)
}

fn normal_p(a: &[u8], b: &[u8], u2: u64) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let ties: f64 = tie_counts(a, b)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if variance <= 0.0 {
        return 1.0;
    }
    let u = u2 as f64 / 2.0;
    let z = ((u - na * nb / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}

pub fn cliffs_delta(a: &LikertSample, b: &LikertSample) -> Result<f64, StatsError> {
    let (xa, xb) = (a.non_empty()?, b.non_empty()?);
    Ok(cliffs_delta_ordinal(xa, xb))
}

/// [`cliffs_delta`] over any ordinal codes.
///
/// # Panics
/// If either slice is empty.
pub fn cliffs_delta_ordinal(xa: &[u8], xb: &[u8]) -> f64 {
    assert!(
        !xa.is_empty() && !xb.is_empty(),
        "samples must be non-empty"
    );
    let (gt, lt) = dominance(xa, xb);
    (gt as f64 - lt as f64) / (xa.len() * xb.len()) as f64
}

pub fn magnitude_of(delta: f64) -> Result<Magnitude, StatsError> {
    if !(-1.0..=1.0).contains(&delta) {
        return Err(StatsError::DeltaOutOfRange(delta));
    }
    let d = delta.abs();
    Ok(if d < NEGLIGIBLE_BELOW {
        Magnitude::Negligible
    } else if d < SMALL_BELOW {
        Magnitude::Small
    } else if d < MEDIUM_BELOW {
        Magnitude::Medium
    } else {
        Magnitude::Large
    })
}

pub fn analyze(a: &LikertSample, b: &LikertSample) -> Result<StatResult, StatsError> {
    let mw = mann_whitney(a, b)?;
    let delta = cliffs_delta(a, b)?;
    Ok(StatResult {
        u_statistic: mw.u_statistic,
        p_value: mw.p_value,
        method: mw.method,
        delta,
        magnitude: magnitude_of(delta)?,
    })
}
