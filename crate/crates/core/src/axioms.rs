//! Property checks for the five softening axioms.
//!
//! | # | axiom             | statistic reported as `worst`                | pass when          |
//! |---|-------------------|----------------------------------------------|--------------------|
//! | 1 | ranking           | smallest output gap over ordered input pairs | `> 0`              |
//! | 2 | continuity        | ratio growth from largest to smallest step   | finite and `< 10`  |
//! | 3 | entropy monotone  | smallest `H(F_{T'}(p)) − H(F_T(p))`, `T < T'`| `≥ −1e−10`         |
//! | 4 | identity          | largest `‖F_1(p) − p‖∞`                      | `< 1e−12`          |
//! | 5 | boundary          | largest deviation from the limit at `T_lo`/`T_hi` | `≤ 0.01`      |
//!
//! Samples are Dirichlet draws with a per-sample seed derived from the run
//! seed, so sequential and parallel runs produce identical reports. Every
//! failure carries a [`Counterexample`] whose [`Counterexample::recheck`]
//! re-evaluates the violation from the stored inputs alone.

use std::fmt;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{map_indexed, ExecMode};
use crate::rng::{child_rng, derive_seed, Rng};
use crate::simplex::{argmax_set, entropy, sample_interior_with, ProbDist, TIE_TOL};
use crate::softening::{Softener, Temperature};

pub const RANK_INPUT_GAP: f64 = 1e-9;
pub const ENTROPY_SLACK: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-12;
pub const BOUNDARY_TOL: f64 = 0.01;
pub const CONTINUITY_GROWTH: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Ranking,
    Continuity,
    EntropyMonotone,
    Identity,
    Boundary,
}

impl Axiom {
    pub const ALL: [Axiom; 5] = [
        Axiom::Ranking,
        Axiom::Continuity,
        Axiom::EntropyMonotone,
        Axiom::Identity,
        Axiom::Boundary,
    ];

    pub fn number(self) -> u8 {
        match self {
            Axiom::Ranking => 1,
            Axiom::Continuity => 2,
            Axiom::EntropyMonotone => 3,
            Axiom::Identity => 4,
            Axiom::Boundary => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axiom::Ranking => "ranking",
            Axiom::Continuity => "continuity",
            Axiom::EntropyMonotone => "entropy_monotone",
            Axiom::Identity => "identity",
            Axiom::Boundary => "boundary",
        }
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "axiom {} ({})", self.number(), self.name())
    }
}

/// A point in `(p, T)` space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub p: Vec<f64>,
    pub t: f64,
}

/// What exactly was violated, with enough data to re-evaluate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// `p_i > p_j + gap` but `F(p)_i ≤ F(p)_j`.
    Order { i: usize, j: usize },
    /// `H(F_{T'}(p)) < H(F_T(p)) − slack`.
    EntropyDrop { t_prime: f64 },
    /// `‖F_1(p) − p‖∞ ≥ tol`.
    NotIdentity,
    /// `‖F_{T_hi}(p) − u‖∞ ≥ tol`.
    NotUniform,
    /// Argmax mass below `1 − tol` or uneven split across ties at `T_lo`.
    NotArgmaxVertex,
    /// `‖F(b) − F(a)‖₂ / ‖b − a‖` is at least `growth · baseline`, or not finite.
    Jump { a: Point, b: Point, baseline: f64 },
    /// The operator returned an error or a non-finite value.
    OperatorError { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub axiom: Axiom,
    pub p: Vec<f64>,
    pub t: f64,
    pub witness: Witness,
    /// The violating value that was observed.
    pub observed: f64,
}

impl Counterexample {
    /// Re-evaluates the violation against `op`; `true` if it reproduces.
    pub fn recheck(&self, op: &dyn Softener) -> bool {
        let Ok(p) = ProbDist::validate(self.p.clone()) else {
            return false;
        };
        let Ok(t) = Temperature::new(self.t) else {
            return false;
        };
        match &self.witness {
            Witness::Order { i, j } => {
                let (i, j) = (*i, *j);
                if i >= p.len() || j >= p.len() || p.values()[i] - p.values()[j] <= RANK_INPUT_GAP {
                    return false;
                }
                match op.apply(&p, t) {
                    Ok(q) => q.values()[i] - q.values()[j] <= 0.0,
                    Err(_) => true,
                }
            }
            Witness::EntropyDrop { t_prime } => {
                let Ok(t2) = Temperature::new(*t_prime) else {
                    return false;
                };
                match (op.apply(&p, t), op.apply(&p, t2)) {
                    (Ok(a), Ok(b)) => entropy(&b).get() < entropy(&a).get() - ENTROPY_SLACK,
                    _ => true,
                }
            }
            Witness::NotIdentity => match op.apply(&p, Temperature::ONE) {
                Ok(q) => !(q.max_abs_diff(&p) < IDENTITY_TOL),
                Err(_) => true,
            },
            Witness::NotUniform => match op.apply(&p, t) {
                Ok(q) => !(upper_deviation(&q) < BOUNDARY_TOL),
                Err(_) => true,
            },
            Witness::NotArgmaxVertex => match op.apply(&p, t) {
                Ok(q) => lower_deviation(&p, &q) > BOUNDARY_TOL,
                Err(_) => true,
            },
            Witness::Jump { a, b, baseline } => {
                let ratio = point_ratio(op, a, b);
                !ratio.is_finite() || ratio >= CONTINUITY_GROWTH * baseline
            }
            Witness::OperatorError { .. } => op.apply(&p, t).map(|q| !is_finite(&q)).unwrap_or(true),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomResult {
    pub axiom: Axiom,
    pub pass: bool,
    pub samples: usize,
    /// Samples skipped by the check's applicability filter.
    pub skipped: usize,
    /// See the table in the module docs.
    pub worst: f64,
    /// Largest `‖ΔF‖₂ / δ` seen (continuity only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modulus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub operator: String,
    pub seed: u64,
    pub samples: usize,
    pub pass: bool,
    pub results: Vec<AxiomResult>,
}

impl AxiomReport {
    pub fn result(&self, axiom: Axiom) -> Option<&AxiomResult> {
        self.results.iter().find(|r| r.axiom == axiom)
    }

    pub fn failed(&self) -> impl Iterator<Item = &AxiomResult> {
        self.results.iter().filter(|r| !r.pass)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("vocabulary range {0}..={1} invalid (need 2 ≤ min ≤ max)")]
    BadVocab(usize, usize),
    #[error("temperature grid must be non-empty, positive and strictly ascending")]
    BadGrid,
    #[error("boundary proxies need t_lo ≤ 1e-3 and t_hi ≥ 1e3, got {0} and {1}")]
    BadBoundary(f64, f64),
    #[error("continuity delta must lie in (0, 1e-3], got {0}")]
    BadDelta(f64),
    #[error("continuity temperature range [{0}, {1}] invalid")]
    BadContinuityRange(f64, f64),
    #[error("concentration must be positive, got {0}")]
    BadConcentration(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxiomConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub v_min: usize,
    pub v_max: usize,
    pub concentration: f64,
    /// Ascending grid used by the ranking and entropy checks.
    pub t_grid: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Smallest continuity step; the check also uses `10δ` and `100δ`.
    pub delta: f64,
    pub continuity_t_min: f64,
    pub continuity_t_max: f64,
    /// Largest perturbation radius before localization.
    pub continuity_radius: f64,
    /// Perturb `T` as well as `p` in the continuity check.
    pub perturb_t: bool,
    pub exec: ExecMode,
}

impl Default for AxiomConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 42,
            v_min: 2,
            v_max: 8,
            concentration: 1.0,
            t_grid: log_grid(0.1, 100.0, 19),
            t_lo: 1e-3,
            t_hi: 1e3,
            delta: 1e-6,
            continuity_t_min: 0.1,
            continuity_t_max: 10.0,
            continuity_radius: 0.05,
            perturb_t: true,
            exec: ExecMode::default(),
        }
    }
}

impl AxiomConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_samples == 0 {
            return Err(ConfigError::NoSamples);
        }
        if self.v_min < 2 || self.v_max < self.v_min {
            return Err(ConfigError::BadVocab(self.v_min, self.v_max));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(ConfigError::BadConcentration(self.concentration));
        }
        let grid_ok = !self.t_grid.is_empty()
            && self.t_grid.iter().all(|t| *t > 0.0 && t.is_finite())
            && self.t_grid.windows(2).all(|w| w[0] < w[1]);
        if !grid_ok {
            return Err(ConfigError::BadGrid);
        }
        if !(self.t_lo > 0.0 && self.t_lo <= 1e-3 && self.t_hi >= 1e3 && self.t_hi.is_finite()) {
            return Err(ConfigError::BadBoundary(self.t_lo, self.t_hi));
        }
        if !(self.delta > 0.0 && self.delta <= 1e-3) {
            return Err(ConfigError::BadDelta(self.delta));
        }
        let (lo, hi) = (self.continuity_t_min, self.continuity_t_max);
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(ConfigError::BadContinuityRange(lo, hi));
        }
        Ok(())
    }

    fn steps(&self) -> [f64; 3] {
        [100.0 * self.delta, 10.0 * self.delta, self.delta]
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn is_finite(q: &ProbDist) -> bool {
    q.values().iter().all(|v| v.is_finite())
}

fn apply_checked(op: &dyn Softener, p: &ProbDist, t: Temperature) -> Result<ProbDist, String> {
    match op.apply(p, t) {
        Ok(q) if is_finite(&q) => Ok(q),
        Ok(_) => Err("non-finite output".to_string()),
        Err(e) => Err(e.to_string()),
    }
}

fn upper_deviation(q: &ProbDist) -> f64 {
    let u = 1.0 / q.len() as f64;
    q.values().iter().map(|v| (v - u).abs()).fold(0.0, f64::max)
}

/// `max(1 − mass on argmax(p), max_i∈ties |q_i − mass/|ties||)`.
fn lower_deviation(p: &ProbDist, q: &ProbDist) -> f64 {
    let ties = argmax_set(p, TIE_TOL);
    let mass: f64 = ties.iter().map(|&i| q.values()[i]).sum();
    let share = mass / ties.len() as f64;
    let split = ties.iter().map(|&i| (q.values()[i] - share).abs()).fold(0.0, f64::max);
    (1.0 - mass).max(split)
}

/// Per-sample outcome before merging.
struct Outcome {
    worst: f64,
    skipped: bool,
    violation: Option<Counterexample>,
}

fn op_error(axiom: Axiom, p: &ProbDist, t: f64, message: String) -> Outcome {
    Outcome {
        worst: f64::NAN,
        skipped: false,
        violation: Some(Counterexample {
            axiom,
            p: p.values().to_vec(),
            t,
            witness: Witness::OperatorError { message },
            observed: f64::NAN,
        }),
    }
}

/// Reduces outcomes: `worst` via `pick`, first counterexample by sample index.
fn merge(axiom: Axiom, outcomes: Vec<Outcome>, pick: fn(f64, f64) -> f64, init: f64) -> AxiomResult {
    let samples = outcomes.len();
    let skipped = outcomes.iter().filter(|o| o.skipped).count();
    let worst = outcomes
        .iter()
        .filter(|o| !o.skipped && !o.worst.is_nan())
        .fold(init, |acc, o| pick(acc, o.worst));
    let counterexample = outcomes.into_iter().find_map(|o| o.violation);
    AxiomResult {
        axiom,
        pass: counterexample.is_none(),
        samples,
        skipped,
        worst,
        modulus: None,
        counterexample,
    }
}

fn sample_rng(cfg: &AxiomConfig, axiom: Axiom, i: usize) -> Rng {
    child_rng(derive_seed(cfg.seed, axiom.number() as u64), i as u64)
}

fn draw_p(rng: &mut Rng, cfg: &AxiomConfig) -> ProbDist {
    let v = rng.random_range(cfg.v_min..=cfg.v_max);
    sample_interior_with(rng, v, cfg.concentration).expect("validated sampler parameters")
}

fn temperature(t: f64) -> Temperature {
    Temperature::new(t).expect("validated temperature")
}

pub fn check_ranking(op: &dyn Softener, cfg: &AxiomConfig) -> AxiomResult {
    let outcomes = map_indexed(cfg.exec, cfg.n_samples, |i| {
        let mut rng = sample_rng(cfg, Axiom::Ranking, i);
        let p = draw_p(&mut rng, cfg);
        ranking_outcome(op, &p, &cfg.t_grid)
    });
    merge(Axiom::Ranking, outcomes, f64::min, f64::INFINITY)
}

fn ranking_outcome(op: &dyn Softener, p: &ProbDist, grid: &[f64]) -> Outcome {
    let pv = p.values();
    let mut worst = f64::INFINITY;
    for &t in grid {
        let q = match apply_checked(op, p, temperature(t)) {
            Ok(q) => q,
            Err(m) => return op_error(Axiom::Ranking, p, t, m),
        };
        let qv = q.values();
        for i in 0..pv.len() {
            for j in 0..pv.len() {
                if pv[i] - pv[j] > RANK_INPUT_GAP {
                    let gap = qv[i] - qv[j];
                    worst = worst.min(gap);
                    if gap <= 0.0 {
                        return Outcome {
                            worst,
                            skipped: false,
                            violation: Some(Counterexample {
                                axiom: Axiom::Ranking,
                                p: pv.to_vec(),
                                t,
                                witness: Witness::Order { i, j },
                                observed: gap,
                            }),
                        };
                    }
                }
            }
        }
    }
    Outcome {
        worst,
        skipped: false,
        violation: None,
    }
}

pub fn check_entropy_monotone(op: &dyn Softener, cfg: &AxiomConfig) -> AxiomResult {
    let outcomes = map_indexed(cfg.exec, cfg.n_samples, |i| {
        let mut rng = sample_rng(cfg, Axiom::EntropyMonotone, i);
        let p = draw_p(&mut rng, cfg);
        let mut hs = Vec::with_capacity(cfg.t_grid.len());
        for &t in &cfg.t_grid {
            match apply_checked(op, &p, temperature(t)) {
                Ok(q) => hs.push(entropy(&q).get()),
                Err(m) => return op_error(Axiom::EntropyMonotone, &p, t, m),
            }
        }
        let mut worst = f64::INFINITY;
        for k in 1..hs.len() {
            let diff = hs[k] - hs[k - 1];
            worst = worst.min(diff);
            if diff < -ENTROPY_SLACK {
                return Outcome {
                    worst,
                    skipped: false,
                    violation: Some(Counterexample {
                        axiom: Axiom::EntropyMonotone,
                        p: p.values().to_vec(),
                        t: cfg.t_grid[k - 1],
                        witness: Witness::EntropyDrop { t_prime: cfg.t_grid[k] },
                        observed: diff,
                    }),
                };
            }
        }
        Outcome {
            worst,
            skipped: false,
            violation: None,
        }
    });
    merge(Axiom::EntropyMonotone, outcomes, f64::min, f64::INFINITY)
}

pub fn check_identity(op: &dyn Softener, cfg: &AxiomConfig) -> AxiomResult {
    let outcomes = map_indexed(cfg.exec, cfg.n_samples, |i| {
        let mut rng = sample_rng(cfg, Axiom::Identity, i);
        let p = draw_p(&mut rng, cfg);
        let q = match apply_checked(op, &p, Temperature::ONE) {
            Ok(q) => q,
            Err(m) => return op_error(Axiom::Identity, &p, 1.0, m),
        };
        let dist = q.max_abs_diff(&p);
        let violation = (!(dist < IDENTITY_TOL)).then(|| Counterexample {
            axiom: Axiom::Identity,
            p: p.values().to_vec(),
            t: 1.0,
            witness: Witness::NotIdentity,
            observed: dist,
        });
        Outcome {
            worst: dist,
            skipped: false,
            violation,
        }
    });
    merge(Axiom::Identity, outcomes, f64::max, 0.0)
}

/// Whether the finite proxy `T_lo` can separate the top two entries:
/// requires `ln(p_(1) / p_(2)) ≥ 10·T_lo` unless they tie exactly.
pub fn boundary_resolvable(p: &ProbDist, t_lo: f64) -> bool {
    let ties = argmax_set(p, TIE_TOL);
    let top = p.max();
    let runner_up = p
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| !ties.contains(i))
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    runner_up == 0.0 || (top / runner_up).ln() >= 10.0 * t_lo
}

/// Both boundary proxies on one explicit input.
pub fn check_boundary_on(op: &dyn Softener, p: &ProbDist, t_lo: f64, t_hi: f64) -> AxiomResult {
    let o = boundary_outcome(op, p, t_lo, t_hi);
    merge(Axiom::Boundary, vec![o], f64::max, 0.0)
}

fn boundary_outcome(op: &dyn Softener, p: &ProbDist, t_lo: f64, t_hi: f64) -> Outcome {
    let hi = match apply_checked(op, p, temperature(t_hi)) {
        Ok(q) => upper_deviation(&q),
        Err(m) => return op_error(Axiom::Boundary, p, t_hi, m),
    };
    let lo = match apply_checked(op, p, temperature(t_lo)) {
        Ok(q) => lower_deviation(p, &q),
        Err(m) => return op_error(Axiom::Boundary, p, t_lo, m),
    };
    let violation = if !(hi < BOUNDARY_TOL) {
        Some((t_hi, Witness::NotUniform, hi))
    } else if lo > BOUNDARY_TOL {
        Some((t_lo, Witness::NotArgmaxVertex, lo))
    } else {
        None
    };
    Outcome {
        worst: hi.max(lo),
        skipped: false,
        violation: violation.map(|(t, witness, observed)| Counterexample {
            axiom: Axiom::Boundary,
            p: p.values().to_vec(),
            t,
            witness,
            observed,
        }),
    }
}

/// Samples are redrawn until [`boundary_resolvable`] holds at `T_lo`.
pub fn check_boundary(op: &dyn Softener, cfg: &AxiomConfig) -> AxiomResult {
    let outcomes = map_indexed(cfg.exec, cfg.n_samples, |i| {
        let mut rng = sample_rng(cfg, Axiom::Boundary, i);
        let mut p = draw_p(&mut rng, cfg);
        while !boundary_resolvable(&p, cfg.t_lo) {
            p = draw_p(&mut rng, cfg);
        }
        boundary_outcome(op, &p, cfg.t_lo, cfg.t_hi)
    });
    merge(Axiom::Boundary, outcomes, f64::max, 0.0)
}

fn point_dist(a: &Point, b: &Point) -> f64 {
    let dp: f64 = a.p.iter().zip(&b.p).map(|(x, y)| (x - y) * (x - y)).sum();
    (dp + (a.t - b.t) * (a.t - b.t)).sqrt()
}

fn eval_point(op: &dyn Softener, x: &Point) -> Option<ProbDist> {
    let p = ProbDist::validate(x.p.clone()).ok()?;
    let t = Temperature::new(x.t).ok()?;
    apply_checked(op, &p, t).ok()
}

fn l2(a: &ProbDist, b: &ProbDist) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn point_ratio(op: &dyn Softener, a: &Point, b: &Point) -> f64 {
    match (eval_point(op, a), eval_point(op, b)) {
        (Some(fa), Some(fb)) => l2(&fa, &fb) / point_dist(a, b),
        _ => f64::INFINITY,
    }
}

/// A segment `x0 + s·d`, `s ∈ [0, r]`, in `(p, T)` space.
struct Segment {
    p0: Vec<f64>,
    t0: f64,
    dp: Vec<f64>,
    dt: f64,
    r: f64,
}

impl Segment {
    fn at(&self, s: f64) -> Point {
        let p: Vec<f64> = self.p0.iter().zip(&self.dp).map(|(p, d)| p + s * d).collect();
        let sum: f64 = p.iter().sum();
        Point {
            p: p.into_iter().map(|v| v / sum).collect(),
            t: self.t0 + s * self.dt,
        }
    }
}

/// Random unit direction with a simplex-tangent `p` part, clipped so that
/// entries stay above half their value, `T` above half its value and the
/// argmax unique within half the crossing distance.
fn random_segment(rng: &mut Rng, p: &ProbDist, t: f64, cfg: &AxiomConfig) -> Segment {
    let v = p.len();
    let mut dp: Vec<f64> = (0..v).map(|_| StandardNormal.sample(rng)).collect();
    let mean = dp.iter().sum::<f64>() / v as f64;
    dp.iter_mut().for_each(|d| *d -= mean);
    let mut dt: f64 = if cfg.perturb_t { StandardNormal.sample(rng) } else { 0.0 };
    let norm = (dp.iter().map(|d| d * d).sum::<f64>() + dt * dt).sqrt();
    dp.iter_mut().for_each(|d| *d /= norm);
    dt /= norm;

    let pv = p.values();
    let mut r = cfg.continuity_radius;
    for (pi, di) in pv.iter().zip(&dp) {
        if *di < 0.0 {
            r = r.min(pi / (2.0 * -di));
        }
    }
    if dt < 0.0 {
        r = r.min(t / (2.0 * -dt));
    }
    let top = argmax_set(p, 0.0)[0];
    for j in 0..v {
        let closing = dp[j] - dp[top];
        if j != top && closing > 0.0 {
            r = r.min(0.5 * (pv[top] - pv[j]) / closing);
        }
    }
    Segment {
        p0: pv.to_vec(),
        t0: t,
        dp,
        dt,
        r,
    }
}

/// Ratios at the configured steps along a bisection that keeps the half
/// with the larger output change.
fn localize(op: &dyn Softener, seg: &Segment, steps: &[f64; 3]) -> Option<[(f64, Point, Point); 3]> {
    let (mut lo, mut hi) = (0.0, seg.r);
    let mut f_lo = eval_point(op, &seg.at(lo))?;
    let mut f_hi = eval_point(op, &seg.at(hi))?;
    let mut found: Vec<(f64, Point, Point)> = Vec::with_capacity(3);
    for &step in steps {
        while hi - lo > step {
            let mid = 0.5 * (lo + hi);
            let f_mid = eval_point(op, &seg.at(mid))?;
            if l2(&f_lo, &f_mid) >= l2(&f_mid, &f_hi) {
                hi = mid;
                f_hi = f_mid;
            } else {
                lo = mid;
                f_lo = f_mid;
            }
        }
        let centre = 0.5 * (lo + hi);
        let start = (centre - 0.5 * step).clamp(0.0, seg.r - step);
        let (a, b) = (seg.at(start), seg.at(start + step));
        let ratio = point_ratio(op, &a, &b);
        found.push((ratio, a, b));
    }
    found.try_into().ok()
}

/// Localized finite-difference ratios at `100δ`, `10δ` and `δ`.
///
/// Samples whose clipped radius is below `2·100δ` are skipped. The check
/// fails when any ratio is non-finite or when the largest ratio at `δ`
/// exceeds the largest at `100δ` by a factor of 10 or more.
pub fn check_continuity(op: &dyn Softener, cfg: &AxiomConfig) -> AxiomResult {
    let steps = cfg.steps();
    let runs = map_indexed(cfg.exec, cfg.n_samples, |i| {
        let mut rng = sample_rng(cfg, Axiom::Continuity, i);
        let p = draw_p(&mut rng, cfg);
        let u: f64 = rng.random();
        let t = (cfg.continuity_t_min.ln() + u * (cfg.continuity_t_max / cfg.continuity_t_min).ln()).exp();
        let seg = random_segment(&mut rng, &p, t, cfg);
        if seg.r < 2.0 * steps[0] {
            return (p, t, None, true);
        }
        (p, t, Some(localize(op, &seg, &steps)), false)
    });

    let samples = runs.len();
    let skipped = runs.iter().filter(|r| r.3).count();
    let mut max_ratio = [0.0f64; 3];
    let mut argmax_sample = [usize::MAX; 3];
    let mut counterexample = None;
    for (idx, (p, t, res, _)) in runs.iter().enumerate() {
        match res {
            None => {}
            Some(None) => {
                counterexample.get_or_insert_with(|| Counterexample {
                    axiom: Axiom::Continuity,
                    p: p.values().to_vec(),
                    t: *t,
                    witness: Witness::OperatorError {
                        message: "operator failed along the perturbation path".to_string(),
                    },
                    observed: f64::NAN,
                });
            }
            Some(Some(found)) => {
                for k in 0..3 {
                    let ratio = found[k].0;
                    if !ratio.is_finite() || ratio > max_ratio[k] {
                        max_ratio[k] = if ratio.is_finite() { ratio } else { f64::INFINITY };
                        argmax_sample[k] = idx;
                    }
                }
            }
        }
    }
    let growth = if max_ratio[0] > 0.0 {
        max_ratio[2] / max_ratio[0]
    } else if max_ratio[2] > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let finite = max_ratio.iter().all(|r| r.is_finite());
    if counterexample.is_none() && (!finite || !(growth < CONTINUITY_GROWTH)) {
        let idx = argmax_sample[2];
        if let (p, t, Some(Some(found)), _) = &runs[idx] {
            let (ratio, a, b) = &found[2];
            counterexample = Some(Counterexample {
                axiom: Axiom::Continuity,
                p: p.values().to_vec(),
                t: *t,
                witness: Witness::Jump {
                    a: a.clone(),
                    b: b.clone(),
                    baseline: max_ratio[0],
                },
                observed: *ratio,
            });
        }
    }
    AxiomResult {
        axiom: Axiom::Continuity,
        pass: counterexample.is_none(),
        samples,
        skipped,
        worst: growth,
        modulus: Some(max_ratio.iter().copied().fold(0.0, f64::max)),
        counterexample,
    }
}

pub fn verify_all(op: &dyn Softener, cfg: &AxiomConfig) -> Result<AxiomReport, ConfigError> {
    cfg.validate()?;
    let results = vec![
        check_ranking(op, cfg),
        check_continuity(op, cfg),
        check_entropy_monotone(op, cfg),
        check_identity(op, cfg),
        check_boundary(op, cfg),
    ];
    Ok(AxiomReport {
        operator: op.label(),
        seed: cfg.seed,
        samples: cfg.n_samples,
        pass: results.iter().all(|r| r.pass),
        results,
    })
}

/// Non-conforming operators used to exercise the checks.
pub mod fixtures {
    use super::*;
    use crate::softening::{power_soften, SoftenError};

    /// Power softening followed by swapping coordinates 0 and 1.
    pub struct CoordinateSwap;

    impl Softener for CoordinateSwap {
        fn apply(&self, p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError> {
            let mut v = power_soften(p, t)?.into_vec();
            v.swap(0, 1);
            Ok(ProbDist::from_weights(v))
        }

        fn label(&self) -> String {
            "coordinate_swap".to_string()
        }
    }

    /// Power softening while `max p < 0.5`, the one-hot argmax vertex above.
    pub struct HardThreshold;

    impl Softener for HardThreshold {
        fn apply(&self, p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError> {
            if p.max() >= 0.5 {
                Ok(ProbDist::one_hot(p.len(), argmax_set(p, 0.0)[0]))
            } else {
                power_soften(p, t)
            }
        }

        fn label(&self) -> String {
            "hard_threshold".to_string()
        }
    }
}
