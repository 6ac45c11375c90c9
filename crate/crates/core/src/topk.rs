//! Completion of top-k truncated teacher outputs.
//!
//! A [`TruncatedDist`] carries the `k` most probable `(token_id, prob)` pairs
//! of a distribution over `V` tokens. Completion turns it back into a full
//! [`ProbDist`] so that any softening operator can be applied unchanged.
//! Unseen mass goes to the smallest unused token ids, in rank order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplex::{ProbDist, SimplexError, SUM_TOL};
use crate::softening::{soften, OperatorSpec, SoftenError, Temperature};

/// Slack on the top-k feasibility test `1 − s ≤ (V − k)·p_(k)`.
const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopKError {
    #[error("top-k list is empty")]
    Empty,
    #[error("k = {k} must be smaller than V = {v}")]
    TooMany { k: usize, v: usize },
    #[error("token id {id} out of range for V = {v}")]
    IdOutOfRange { id: usize, v: usize },
    #[error("token id {0} appears more than once")]
    DuplicateId(usize),
    #[error("probability {prob} for token {id} must be positive and finite")]
    BadProb { id: usize, prob: f64 },
    #[error("observed mass {0} exceeds 1")]
    MassExceedsOne(f64),
    #[error("missing mass {missing} exceeds tail capacity {capacity}: entries cannot be the top-k of any distribution")]
    InfeasibleTopK { missing: f64, capacity: f64 },
    #[error("zipf fit needs at least 2 observed entries, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Soften(#[from] SoftenError),
}

/// The `k` most probable tokens of a distribution over `V` tokens, sorted by
/// descending probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTruncated", into = "RawTruncated")]
pub struct TruncatedDist {
    entries: Vec<(usize, f64)>,
    v: usize,
}

#[derive(Serialize, Deserialize)]
struct RawTruncated {
    #[serde(rename = "V")]
    v: usize,
    topk: Vec<(usize, f64)>,
}

impl TryFrom<RawTruncated> for TruncatedDist {
    type Error = TopKError;

    fn try_from(raw: RawTruncated) -> Result<Self, Self::Error> {
        TruncatedDist::new(raw.topk, raw.v)
    }
}

impl From<TruncatedDist> for RawTruncated {
    fn from(t: TruncatedDist) -> Self {
        RawTruncated {
            v: t.v,
            topk: t.entries,
        }
    }
}

impl TruncatedDist {
    /// Validates and sorts the entries (stable, descending by probability).
    pub fn new(mut entries: Vec<(usize, f64)>, v: usize) -> Result<Self, TopKError> {
        if entries.is_empty() {
            return Err(TopKError::Empty);
        }
        if entries.len() >= v {
            return Err(TopKError::TooMany { k: entries.len(), v });
        }
        let mut seen = vec![false; v];
        for &(id, prob) in &entries {
            if id >= v {
                return Err(TopKError::IdOutOfRange { id, v });
            }
            if seen[id] {
                return Err(TopKError::DuplicateId(id));
            }
            seen[id] = true;
            if !(prob > 0.0) || !prob.is_finite() {
                return Err(TopKError::BadProb { id, prob });
            }
        }
        let s: f64 = entries.iter().map(|e| e.1).sum();
        if s > 1.0 + SUM_TOL {
            return Err(TopKError::MassExceedsOne(s));
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Self { entries, v })
    }

    /// Keeps the `k` largest entries of a full distribution (ties by lower id).
    pub fn from_dist(p: &ProbDist, k: usize) -> Result<Self, TopKError> {
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&a, &b| p.values()[b].total_cmp(&p.values()[a]).then(a.cmp(&b)));
        let entries = idx.into_iter().take(k).map(|i| (i, p.values()[i])).collect();
        Self::new(entries, p.len())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn vocab(&self) -> usize {
        self.v
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn observed_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn missing_mass(&self) -> f64 {
        (1.0 - self.observed_mass()).max(0.0)
    }

    /// Smallest observed probability `p_(k)`.
    pub fn floor_prob(&self) -> f64 {
        self.entries[self.entries.len() - 1].1
    }

    /// Token ids not in the top-k, ascending.
    pub fn unseen_ids(&self) -> Vec<usize> {
        let mut seen = vec![false; self.v];
        for &(id, _) in &self.entries {
            seen[id] = true;
        }
        (0..self.v).filter(|&i| !seen[i]).collect()
    }

    fn check_feasible(&self) -> Result<(), TopKError> {
        let missing = self.missing_mass();
        let capacity = (self.v - self.k()) as f64 * self.floor_prob();
        if missing > capacity + FEASIBILITY_TOL {
            return Err(TopKError::InfeasibleTopK { missing, capacity });
        }
        Ok(())
    }

    fn observed_vec(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.v];
        for &(id, p) in &self.entries {
            w[id] = p;
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completion {
    Renormalize,
    MaxEnt,
    Zipf,
}

impl Completion {
    pub const ALL: [Completion; 3] = [Completion::Renormalize, Completion::MaxEnt, Completion::Zipf];

    pub fn name(self) -> &'static str {
        match self {
            Completion::Renormalize => "renormalize",
            Completion::MaxEnt => "maxent",
            Completion::Zipf => "zipf",
        }
    }
}

impl fmt::Display for Completion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Completion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "renormalize" | "renorm" => Ok(Completion::Renormalize),
            "maxent" => Ok(Completion::MaxEnt),
            "zipf" => Ok(Completion::Zipf),
            other => Err(format!("unknown completion '{other}' (expected renormalize, maxent or zipf)")),
        }
    }
}

/// Observed entries rescaled to total mass 1; unseen tokens get 0.
pub fn renormalize_complete(t: &TruncatedDist) -> ProbDist {
    ProbDist::from_weights(t.observed_vec())
}

/// Spreads the missing mass evenly over the unseen tokens.
pub fn maxent_complete(t: &TruncatedDist) -> Result<ProbDist, TopKError> {
    t.check_feasible()?;
    let mut w = t.observed_vec();
    let unseen = t.unseen_ids();
    let share = t.missing_mass() / unseen.len() as f64;
    for i in unseen {
        w[i] = share;
    }
    Ok(ProbDist::from_weights(w))
}

/// Negated OLS slope of `ln p` against `ln rank` over the observed entries.
pub fn zipf_fit(t: &TruncatedDist) -> Result<f64, TopKError> {
    let k = t.k();
    if k < 2 {
        return Err(TopKError::TooFewPoints(k));
    }
    let xs: Vec<f64> = (1..=k).map(|r| (r as f64).ln()).collect();
    let ys: Vec<f64> = t.entries.iter().map(|e| e.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(-sxy / sxx)
}

/// Allocates `mass` proportionally to descending `weights`, capping each
/// slot at `cap` and spreading the excess over the uncapped slots.
fn water_fill(weights: &[f64], mass: f64, cap: f64) -> Vec<f64> {
    let n = weights.len();
    let mut capped = 0;
    loop {
        let rest_mass = mass - capped as f64 * cap;
        let rest_weight: f64 = weights[capped..].iter().sum();
        let scale = if rest_weight > 0.0 { rest_mass / rest_weight } else { 0.0 };
        if capped == n || weights[capped] * scale <= cap {
            let mut out = vec![cap; capped];
            out.extend(weights[capped..].iter().map(|w| (w * scale).max(0.0)));
            return out;
        }
        capped += 1;
    }
}

/// Fills the tail with a Zipf law fitted to the observed ranks.
pub fn zipf_complete(t: &TruncatedDist) -> Result<ProbDist, TopKError> {
    let s = zipf_fit(t)?;
    t.check_feasible()?;
    let k = t.k();
    let weights: Vec<f64> = (k + 1..=t.v).map(|r| (r as f64).powf(-s)).collect();
    let tail = water_fill(&weights, t.missing_mass(), t.floor_prob());
    let mut w = t.observed_vec();
    for (id, m) in t.unseen_ids().into_iter().zip(tail) {
        w[id] = m;
    }
    Ok(ProbDist::from_weights(w))
}

pub fn complete(t: &TruncatedDist, strategy: Completion) -> Result<ProbDist, TopKError> {
    match strategy {
        Completion::Renormalize => Ok(renormalize_complete(t)),
        Completion::MaxEnt => maxent_complete(t),
        Completion::Zipf => zipf_complete(t),
    }
}

/// Completes `t`, then softens the full distribution.
pub fn soften_truncated(
    spec: &OperatorSpec,
    t: &TruncatedDist,
    strategy: Completion,
    temp: Temperature,
) -> Result<ProbDist, TopKError> {
    let full = complete(t, strategy)?;
    Ok(soften(spec, &full, temp)?)
}
