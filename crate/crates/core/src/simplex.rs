//! Points on the probability simplex and the information-theoretic helpers
//! every operator is built from.
//!
//! A [`ProbDist`] can only be obtained through validation or through
//! internal constructors that normalize non-negative weights, so downstream
//! code never re-checks the simplex invariants.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Accepted deviation of the raw mass from 1.
pub const SUM_TOL: f64 = 1e-9;
/// Entries down to `-NEG_TOL` are treated as float noise and clamped to zero.
pub const NEG_TOL: f64 = 1e-12;
/// Default tolerance for [`argmax_set`].
pub const TIE_TOL: f64 = 1e-12;
/// Smallest entry [`sample_interior`] will return.
pub const INTERIOR_FLOOR: f64 = 1e-9;

const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplexError {
    #[error("distribution needs at least 2 entries, got {0}")]
    TooShort(usize),
    #[error("entry {index} is negative ({value})")]
    NegativeMass { index: usize, value: f64 },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("entries sum to {0}, expected 1 within {SUM_TOL}")]
    BadSum(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("q has mass at index {0} where p is zero")]
    SupportMismatch(usize),
    #[error("Dirichlet concentration must be positive, got {0}")]
    BadConcentration(f64),
    #[error("could not draw an interior sample after {MAX_RESAMPLES} attempts")]
    SamplerExhausted,
}

/// A validated probability vector of length `V >= 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbDist {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ProbDist {
    type Error = SimplexError;

    fn try_from(raw: Vec<f64>) -> Result<Self, Self::Error> {
        ProbDist::validate(raw)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(p: ProbDist) -> Self {
        p.values
    }
}

impl ProbDist {
    /// Checks a raw vector and renormalizes it to unit mass.
    pub fn validate(mut raw: Vec<f64>) -> Result<Self, SimplexError> {
        if raw.len() < 2 {
            return Err(SimplexError::TooShort(raw.len()));
        }
        for (index, v) in raw.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(SimplexError::NonFinite { index });
            }
            if *v < -NEG_TOL {
                return Err(SimplexError::NegativeMass { index, value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = raw.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(SimplexError::BadSum(sum));
        }
        raw.iter_mut().for_each(|v| *v /= sum);
        Ok(Self { values: raw })
    }

    /// Normalizes non-negative finite weights with a positive total.
    ///
    /// Callers guarantee those preconditions; they are only debug-asserted.
    pub(crate) fn from_weights(mut w: Vec<f64>) -> Self {
        debug_assert!(w.len() >= 2);
        debug_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        let sum: f64 = w.iter().sum();
        debug_assert!(sum > 0.0);
        w.iter_mut().for_each(|v| *v /= sum);
        Self { values: w }
    }

    pub fn uniform(v: usize) -> Self {
        assert!(v >= 2, "uniform distribution needs V >= 2");
        Self {
            values: vec![1.0 / v as f64; v],
        }
    }

    /// Uniform mass over `indices`, zero elsewhere.
    pub fn uniform_over(v: usize, indices: &[usize]) -> Self {
        assert!(v >= 2 && !indices.is_empty());
        let mut values = vec![0.0; v];
        let share = 1.0 / indices.len() as f64;
        for &i in indices {
            values[i] = share;
        }
        Self { values }
    }

    pub fn one_hot(v: usize, index: usize) -> Self {
        Self::uniform_over(v, &[index])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; a `ProbDist` has at least two entries.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.0).count()
    }

    pub fn is_interior(&self) -> bool {
        self.values.iter().all(|v| *v > 0.0)
    }

    pub fn max_abs_diff(&self, other: &ProbDist) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }

    pub fn l1_distance(&self, other: &ProbDist) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Shannon entropy in nats.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntropyNats(pub f64);

impl EntropyNats {
    pub fn get(self) -> f64 {
        self.0
    }
}

/// `-Σ p_i ln p_i` with `0 ln 0 = 0`.
pub fn entropy(p: &ProbDist) -> EntropyNats {
    EntropyNats(entropy_of(p.values()))
}

pub(crate) fn entropy_of(values: &[f64]) -> f64 {
    let h: f64 = values
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| -v * v.ln())
        .sum();
    h.max(0.0)
}

/// `KL(q || p) = Σ q_i ln(q_i / p_i)`.
pub fn kl_div(q: &ProbDist, p: &ProbDist) -> Result<f64, SimplexError> {
    if q.len() != p.len() {
        return Err(SimplexError::DimMismatch {
            left: q.len(),
            right: p.len(),
        });
    }
    let mut acc = 0.0;
    for (i, (&qi, &pi)) in q.values().iter().zip(p.values()).enumerate() {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Err(SimplexError::SupportMismatch(i));
            }
            acc += qi * (qi / pi).ln();
        }
    }
    Ok(acc.max(0.0))
}

/// Indices within `tie_tol` of the maximum, ascending.
pub fn argmax_set(p: &ProbDist, tie_tol: f64) -> Vec<usize> {
    let max = p.max();
    p.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= max - tie_tol)
        .map(|(i, _)| i)
        .collect()
}

/// Stable `ln Σ exp(x_i)`. Entries equal to `-inf` contribute nothing.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// Draws a strictly positive point from a symmetric Dirichlet.
pub fn sample_interior(v: usize, concentration: f64, seed: u64) -> Result<ProbDist, SimplexError> {
    let mut rng = rng::rng_from(seed);
    sample_interior_with(&mut rng, v, concentration)
}

pub fn sample_interior_with<R: Rng + ?Sized>(
    rng: &mut R,
    v: usize,
    concentration: f64,
) -> Result<ProbDist, SimplexError> {
    if v < 2 {
        return Err(SimplexError::TooShort(v));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(SimplexError::BadConcentration(concentration));
    }
    let gamma = Gamma::new(concentration, 1.0).map_err(|_| SimplexError::BadConcentration(concentration))?;
    let mut draws = vec![0.0; v];
    for _ in 0..MAX_RESAMPLES {
        draws.iter_mut().for_each(|d| *d = gamma.sample(rng));
        let sum: f64 = draws.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            continue;
        }
        if draws.iter().all(|d| d / sum >= INTERIOR_FLOOR) {
            return Ok(ProbDist::from_weights(draws));
        }
    }
    Err(SimplexError::SamplerExhausted)
}
