//! Softening operator families and the logit-domain reference.
//!
//! Three conforming families are provided:
//!
//! - **power**: `q_i ∝ p_i^{1/T}`, evaluated in the log domain;
//! - **mixing**: `α(T) p + (1 − α(T)) u` with `α(T) = 1/T` for `T ≥ 1`, and
//!   `T p + (1 − T) m` for `T < 1`, where `m` is uniform on the argmax set;
//! - **entropy projection**: the minimum-`KL(q‖p)` distribution at a
//!   temperature-scheduled entropy level, found by bisection on the exponent
//!   of `normalize(p^β)`.
//!
//! `BrokenSharpener` (`normalize(p^T)`) is an adversarial fixture that the
//! axiom checks must reject.
//!
//! Distributions with zeros are handled on their support: zeros stay zero
//! under the power and projection families, and the projection's entropy
//! schedule tops out at `ln |supp(p)|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplex::{self, argmax_set, entropy, EntropyNats, ProbDist, SimplexError, TIE_TOL};

pub const T_MIN: f64 = 1e-6;
pub const T_MAX: f64 = 1e6;

/// Entries are clamped to this before taking logarithms.
const LOG_FLOOR: f64 = 1e-300;
const BETA_MIN: f64 = 1e-8;
const BETA_MAX: f64 = 1e8;
const SOLVER_MAX_ITERS: usize = 200;
/// Required entropy accuracy of [`solve_exponent`].
pub const SOLVER_TOL: f64 = 1e-10;
/// Exponent of `1/T` in the `T ≥ 1` branch of [`entropy_schedule`].
pub const SCHEDULE_EXPONENT: i32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SoftenError {
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("logit {0} is not finite")]
    NonFiniteLogit(usize),
    #[error("log-sum-exp overflowed")]
    Overflow,
    #[error("target entropy {target} outside achievable range [{lo}, {hi}]")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },
    #[error("exponent bisection stalled: target {target}, reached {reached}")]
    NoConvergence { target: f64, reached: f64 },
    #[error(transparent)]
    Simplex(#[from] SimplexError),
}

/// Softening temperature, clamped to `[T_MIN, T_MAX]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self, SoftenError> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(SoftenError::BadTemperature(t));
        }
        Ok(Self(t.clamp(T_MIN, T_MAX)))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Temperature {
    type Error = SoftenError;

    fn try_from(t: f64) -> Result<Self, Self::Error> {
        Temperature::new(t)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> Self {
        t.0
    }
}

/// Finite, unnormalized log-odds.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVec(Vec<f64>);

impl LogitVec {
    pub fn new(z: Vec<f64>) -> Result<Self, SoftenError> {
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(SoftenError::NonFiniteLogit(i));
        }
        if z.len() < 2 {
            return Err(SimplexError::TooShort(z.len()).into());
        }
        Ok(Self(z))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Adds `c` to every logit.
    pub fn shifted(&self, c: f64) -> LogitVec {
        LogitVec(self.0.iter().map(|z| z + c).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Power,
    Mixing,
    EntropyProjection,
    /// `normalize(p^T)`: sharpens as T grows. Never conforming.
    BrokenSharpener,
}

impl Family {
    pub const CONFORMING: [Family; 3] = [Family::Power, Family::Mixing, Family::EntropyProjection];
    pub const ALL: [Family; 4] = [
        Family::Power,
        Family::Mixing,
        Family::EntropyProjection,
        Family::BrokenSharpener,
    ];

    pub fn is_conforming(self) -> bool {
        self != Family::BrokenSharpener
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Power => "power",
            Family::Mixing => "mixing",
            Family::EntropyProjection => "entropy_projection",
            Family::BrokenSharpener => "broken_sharpener",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown operator family '{0}' (expected power, mixing, entropy_projection or broken_sharpener)")]
pub struct UnknownFamily(pub String);

impl FromStr for Family {
    type Err = UnknownFamily;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| UnknownFamily(s.to_string()))
    }
}

/// Identifies an operator family. Serialized as `{"family": "power"}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub family: Family,
}

impl OperatorSpec {
    pub const fn new(family: Family) -> Self {
        Self { family }
    }

    pub fn is_conforming(&self) -> bool {
        self.family.is_conforming()
    }
}

impl From<Family> for OperatorSpec {
    fn from(family: Family) -> Self {
        Self { family }
    }
}

/// Anything that maps `(p, T)` to a point on the simplex.
///
/// The axiom checks are written against this trait so that test fixtures
/// (coordinate swaps, hard thresholds) can be certified the same way as the
/// real families.
pub trait Softener: Sync {
    fn apply(&self, p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError>;

    fn label(&self) -> String;
}

impl Softener for OperatorSpec {
    fn apply(&self, p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError> {
        soften(self, p, t)
    }

    fn label(&self) -> String {
        self.family.name().to_string()
    }
}

pub fn soften(spec: &OperatorSpec, p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError> {
    match spec.family {
        Family::Power => power_soften(p, t),
        Family::Mixing => Ok(mix_soften(p, t)),
        Family::EntropyProjection => entropy_project(p, t),
        Family::BrokenSharpener => power_with_exponent(p, t.get()),
    }
}

/// `q_i = p_i^{1/T} / Σ_j p_j^{1/T}`.
pub fn power_soften(p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError> {
    if t.get() == 1.0 {
        return Ok(p.clone());
    }
    power_with_exponent(p, 1.0 / t.get())
}

/// `normalize(p^β)` evaluated as `exp(β ln p_i − logsumexp)`; zeros stay zero.
pub fn power_with_exponent(p: &ProbDist, beta: f64) -> Result<ProbDist, SoftenError> {
    let scaled: Vec<f64> = p
        .values()
        .iter()
        .map(|&v| {
            if v > 0.0 {
                beta * v.max(LOG_FLOOR).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lse = simplex::log_sum_exp(&scaled);
    if !lse.is_finite() {
        return Err(SoftenError::Overflow);
    }
    let w: Vec<f64> = scaled.iter().map(|s| (s - lse).exp()).collect();
    Ok(ProbDist::from_weights(w))
}

/// Convex mixing toward uniform for `T ≥ 1`; toward the argmax vertex for `T < 1`.
pub fn mix_soften(p: &ProbDist, t: Temperature) -> ProbDist {
    let t = t.get();
    let v = p.len();
    if t >= 1.0 {
        let alpha = 1.0 / t;
        let u = 1.0 / v as f64;
        let w = p.values().iter().map(|pi| alpha * pi + (1.0 - alpha) * u).collect();
        ProbDist::from_weights(w)
    } else {
        let ties = argmax_set(p, TIE_TOL);
        let share = 1.0 / ties.len() as f64;
        let mut w: Vec<f64> = p.values().iter().map(|pi| t * pi).collect();
        for i in ties {
            w[i] += (1.0 - t) * share;
        }
        ProbDist::from_weights(w)
    }
}

/// `ln|supp| − (ln|supp| − H) / T^k`, the `T ≥ 1` branch of the schedule.
pub fn scheduled_entropy(ln_support: f64, h_p: f64, t: f64, exponent: i32) -> f64 {
    ln_support - (ln_support - h_p) / t.powi(exponent)
}

/// Target entropy of the projection family at temperature `T`.
///
/// For `T ≥ 1` the gap to the maximum entropy shrinks like `1/T²`; for
/// `T < 1` the target is the entropy of `normalize(p^{1/T})`, which reaches
/// `ln #ties` only in the limit. The result always lies in
/// `[ln #argmax, ln |supp(p)|]` and equals `H(p)` at `T = 1`.
pub fn entropy_schedule(p: &ProbDist, t: Temperature) -> EntropyNats {
    let h_p = entropy(p).get();
    let ln_support = (p.support_size() as f64).ln();
    let lower = (argmax_set(p, TIE_TOL).len() as f64).ln();
    let h = if t.get() >= 1.0 {
        scheduled_entropy(ln_support, h_p, t.get(), SCHEDULE_EXPONENT)
    } else {
        match power_soften(p, t) {
            Ok(q) => entropy(&q).get(),
            Err(_) => lower,
        }
    };
    EntropyNats(h.clamp(lower, ln_support))
}

/// Log-probabilities on the support, used for allocation-free entropy evaluation.
struct SupportLogs(Vec<f64>);

impl SupportLogs {
    fn new(p: &ProbDist) -> Self {
        Self(
            p.values()
                .iter()
                .filter(|v| **v > 0.0)
                .map(|v| v.max(LOG_FLOOR).ln())
                .collect(),
        )
    }

    /// `H(normalize(p^β)) = lse(βl) − β Σ q_i l_i`.
    fn entropy_at(&self, beta: f64) -> f64 {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        let mut weighted = 0.0;
        for &l in &self.0 {
            let e = (beta * (l - max)).exp();
            z += e;
            weighted += e * beta * (l - max);
        }
        (z.ln() - weighted / z).max(0.0)
    }
}

/// Finds `β` with `H(normalize(p^β)) = h_target` by bisection on `ln β`.
pub fn solve_exponent(p: &ProbDist, h_target: EntropyNats) -> Result<f64, SoftenError> {
    let target = h_target.get();
    let lo_bound = (argmax_set(p, TIE_TOL).len() as f64).ln();
    let hi_bound = (p.support_size() as f64).ln();
    let out_of_range = || SoftenError::TargetOutOfRange {
        target,
        lo: lo_bound,
        hi: hi_bound,
    };
    if !target.is_finite() || target < lo_bound - 1e-12 || target > hi_bound + 1e-12 {
        return Err(out_of_range());
    }
    if (target - entropy(p).get()).abs() <= 1e-14 {
        return Ok(1.0);
    }

    let logs = SupportLogs::new(p);
    // H is decreasing in β: h(lo) is the largest reachable entropy.
    let mut lo = BETA_MIN.ln();
    let mut hi = BETA_MAX.ln();
    let h_lo = logs.entropy_at(lo.exp());
    let h_hi = logs.entropy_at(hi.exp());
    if target > h_lo + SOLVER_TOL || target < h_hi - SOLVER_TOL {
        return Err(out_of_range());
    }
    if target >= h_lo {
        return Ok(BETA_MIN);
    }
    if target <= h_hi {
        return Ok(BETA_MAX);
    }

    let mut mid = 0.5 * (lo + hi);
    for _ in 0..SOLVER_MAX_ITERS {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if logs.entropy_at(mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = mid.exp();
    let reached = logs.entropy_at(beta);
    if (reached - target).abs() > SOLVER_TOL {
        return Err(SoftenError::NoConvergence { target, reached });
    }
    Ok(beta)
}

/// The projection family: `normalize(p^β)` at the scheduled entropy.
pub fn entropy_project(p: &ProbDist, t: Temperature) -> Result<ProbDist, SoftenError> {
    if t.get() == 1.0 {
        return Ok(p.clone());
    }
    // Below T = 1 the scheduled entropy is that of p^{1/T}, so β = 1/T solves
    // it exactly. Going through the entropy would lose the tail once H drops
    // under the vertex tolerance.
    if t.get() < 1.0 {
        if let Ok(q) = power_soften(p, t) {
            return Ok(q);
        }
    }
    let h = entropy_schedule(p, t).get();
    let ties = argmax_set(p, TIE_TOL);
    let lower = (ties.len() as f64).ln();
    let upper = (p.support_size() as f64).ln();
    if h <= lower + 1e-15 {
        return Ok(ProbDist::uniform_over(p.len(), &ties));
    }
    if h >= upper - 1e-15 {
        let support: Vec<usize> = (0..p.len()).filter(|&i| p.values()[i] > 0.0).collect();
        return Ok(ProbDist::uniform_over(p.len(), &support));
    }
    let beta = solve_exponent(p, EntropyNats(h))?;
    power_with_exponent(p, beta)
}

/// `softmax(z)` with max subtraction.
pub fn softmax(z: &[f64]) -> ProbDist {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    ProbDist::from_weights(w)
}

/// `softmax(z / T)`, the logit-domain temperature scaling.
pub fn logit_reference(z: &LogitVec, t: Temperature) -> ProbDist {
    let inv = 1.0 / t.get();
    let scaled: Vec<f64> = z.values().iter().map(|v| v * inv).collect();
    softmax(&scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{kl_div, sample_interior};
    use proptest::prelude::*;

    fn pd(v: &[f64]) -> ProbDist {
        ProbDist::validate(v.to_vec()).unwrap()
    }

    fn temp(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        simplex::max_abs_diff(a, b) < tol
    }

    #[test]
    fn temperature_validation() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert_eq!(Temperature::new(1e9).unwrap().get(), T_MAX);
        assert_eq!(Temperature::new(1e-9).unwrap().get(), T_MIN);
    }

    #[test]
    fn power_examples() {
        let q = power_soften(&pd(&[0.8, 0.2]), temp(2.0)).unwrap();
        assert!(close(q.values(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));

        let p = pd(&[0.1, 0.6, 0.3]);
        assert_eq!(power_soften(&p, Temperature::ONE).unwrap(), p);

        let q = power_soften(&pd(&[0.5, 0.5]), temp(7.3)).unwrap();
        assert!(close(q.values(), &[0.5, 0.5], 1e-15));

        let q = power_soften(&pd(&[0.9, 0.1]), temp(1000.0)).unwrap();
        assert!(q.values().iter().all(|v| (v - 0.5).abs() < 1e-3));
    }

    #[test]
    fn power_keeps_zeros() {
        let q = power_soften(&pd(&[0.7, 0.0, 0.3]), temp(5.0)).unwrap();
        assert_eq!(q.values()[1], 0.0);
        let q = power_soften(&pd(&[0.7, 0.0, 0.3]), temp(0.2)).unwrap();
        assert_eq!(q.values()[1], 0.0);
    }

    #[test]
    fn mixing_examples() {
        let q = mix_soften(&pd(&[0.8, 0.2]), temp(2.0));
        assert!(close(q.values(), &[0.65, 0.35], 1e-15));
        let p = pd(&[0.25, 0.15, 0.6]);
        assert_eq!(mix_soften(&p, Temperature::ONE), p);
        let q = mix_soften(&pd(&[0.8, 0.2]), temp(0.5));
        assert!(close(q.values(), &[0.9, 0.1], 1e-15));
    }

    #[test]
    fn mixing_splits_ties_when_sharpening() {
        let q = mix_soften(&pd(&[0.45, 0.45, 0.1]), temp(0.001));
        assert!((q.values()[0] - q.values()[1]).abs() < 1e-15);
        assert!(q.values()[0] + q.values()[1] > 0.99);
    }

    #[test]
    fn schedule_anchors() {
        let p = pd(&[0.8, 0.2]);
        let h = entropy(&p).get();
        assert!((entropy_schedule(&p, Temperature::ONE).get() - h).abs() < 1e-15);
        let big = entropy_schedule(&p, temp(1e6)).get();
        assert!((big - 2f64.ln()).abs() < 1e-5);
        // T ≥ 1 branch: ln 2 − (ln 2 − H)/4
        let at2 = entropy_schedule(&p, temp(2.0)).get();
        assert!((at2 - 0.644961).abs() < 1e-6, "{at2}");
        // T < 1 branch tracks the sharpened power entropy.
        let at_half = entropy_schedule(&p, temp(0.5)).get();
        let sharpened = entropy(&power_soften(&p, temp(0.5)).unwrap()).get();
        assert!((at_half - sharpened).abs() < 1e-15);
        let tiny = entropy_schedule(&p, temp(1e-6)).get();
        assert!(tiny < 1e-12);
    }

    #[test]
    fn reciprocal_schedule_value() {
        // ln 2 − (ln 2 − H([0.8, 0.2]))/2
        let h = entropy(&pd(&[0.8, 0.2])).get();
        let v = scheduled_entropy(2f64.ln(), h, 2.0, 1);
        assert!((v - 0.596775).abs() < 1e-6);
    }

    #[test]
    fn schedule_is_monotone_in_t() {
        let p = pd(&[0.5, 0.3, 0.15, 0.05]);
        let mut prev = 0.0;
        for k in -40..=40 {
            let t = 10f64.powf(k as f64 / 10.0);
            let h = entropy_schedule(&p, temp(t)).get();
            assert!(h >= prev - 1e-15, "T={t}");
            prev = h;
        }
    }

    #[test]
    fn solver_examples() {
        let p = pd(&[0.8, 0.2]);
        let beta = solve_exponent(&p, entropy(&p)).unwrap();
        assert!((beta - 1.0).abs() < 1e-10);

        // H([2/3, 1/3]) = 0.636514
        let beta = solve_exponent(&p, EntropyNats(0.636514)).unwrap();
        assert!((beta - 0.5).abs() < 1e-6, "{beta}");

        assert!(matches!(
            solve_exponent(&p, EntropyNats(2f64.ln() + 0.01)),
            Err(SoftenError::TargetOutOfRange { .. })
        ));
        assert!(matches!(
            solve_exponent(&p, EntropyNats(-0.1)),
            Err(SoftenError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let p = pd(&[0.3, 0.5, 0.2]);
        assert!(close(entropy_project(&p, Temperature::ONE).unwrap().values(), p.values(), 1e-10));

        let p = pd(&[0.8, 0.2]);
        let q = entropy_project(&p, temp(2.0)).unwrap();
        let target = entropy_schedule(&p, temp(2.0)).get();
        assert!((entropy(&q).get() - target).abs() < 1e-8);
        let pow = power_soften(&p, temp(2.0)).unwrap();
        assert!(q.l1_distance(&pow) > 1e-3);
        assert!(q.values()[0] > q.values()[1]);

        let u = ProbDist::uniform(5);
        for t in [0.1, 0.5, 3.0, 100.0] {
            assert!(close(entropy_project(&u, temp(t)).unwrap().values(), u.values(), 1e-15));
        }
    }

    #[test]
    fn projection_with_zeros_stays_on_support() {
        let p = pd(&[0.6, 0.4, 0.0, 0.0]);
        let q = entropy_project(&p, temp(1e5)).unwrap();
        assert_eq!(&q.values()[2..], &[0.0, 0.0]);
        assert!((q.values()[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn projection_limits() {
        let p = pd(&[0.45, 0.45, 0.1]);
        let q = entropy_project(&p, temp(1e-4)).unwrap();
        assert!((q.values()[0] - 0.5).abs() < 1e-9 && (q.values()[1] - 0.5).abs() < 1e-9);
        let q = entropy_project(&pd(&[0.9, 0.1]), temp(1e3)).unwrap();
        assert!(q.values().iter().all(|v| (v - 0.5).abs() < 0.01));
    }

    #[test]
    fn sharpened_tail_keeps_its_order() {
        // H of the target is about 3e-16 here, below any vertex tolerance.
        let p = pd(&[0.971305567303753, 0.018561462088318922, 0.007516834932092607, 0.002616135675835536]);
        let q = entropy_project(&p, temp(0.1)).unwrap();
        assert!(q.values().windows(2).all(|w| w[0] > w[1]), "{:?}", q.values());
    }

    #[test]
    fn dispatch_examples() {
        let p = pd(&[0.8, 0.2]);
        let t = temp(2.0);
        let pw = soften(&Family::Power.into(), &p, t).unwrap();
        assert!(close(pw.values(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let mx = soften(&Family::Mixing.into(), &p, t).unwrap();
        assert!(close(mx.values(), &[0.65, 0.35], 1e-15));
        let br = soften(&Family::BrokenSharpener.into(), &p, t).unwrap();
        // [0.64, 0.04] / 0.68
        assert!(close(br.values(), &[0.64 / 0.68, 0.04 / 0.68], 1e-15));
        assert!(entropy(&br).get() < entropy(&p).get());
        assert!((br.values()[0] - 0.941).abs() < 1e-3);
    }

    #[test]
    fn non_uniqueness_at_reference_point() {
        let p = pd(&[0.8, 0.2]);
        let outs: Vec<ProbDist> = Family::CONFORMING
            .iter()
            .map(|f| soften(&(*f).into(), &p, temp(2.0)).unwrap())
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(outs[i].l1_distance(&outs[j]) > 1e-3, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn logit_reference_examples() {
        let z = LogitVec::new(vec![0.0, 0.0, 0.0]).unwrap();
        let q = logit_reference(&z, temp(3.7));
        assert!(close(q.values(), &[1.0 / 3.0; 3], 1e-15));

        let z = LogitVec::new(vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(logit_reference(&z, Temperature::ONE), softmax(z.values()));

        let z = LogitVec::new(vec![4f64.ln(), 0.0]).unwrap();
        let q = logit_reference(&z, temp(2.0));
        assert!(close(q.values(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let base = softmax(z.values());
        assert!(close(base.values(), &[0.8, 0.2], 1e-15));
        let viap = power_soften(&base, temp(2.0)).unwrap();
        assert!(close(viap.values(), q.values(), 1e-15));

        assert!(LogitVec::new(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            let json = serde_json::to_string(&OperatorSpec::new(f)).unwrap();
            assert_eq!(json, format!("{{\"family\":\"{}\"}}", f.name()));
            let back: OperatorSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back.family, f);
        }
        assert!("sharpen".parse::<Family>().is_err());
    }

    fn logits() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-20.0f64..20.0, 2..=64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn power_matches_logit_reference(z in logits(), lt in (0.1f64).ln()..(100.0f64).ln()) {
            let t = temp(lt.exp());
            let z = LogitVec::new(z).unwrap();
            let via_probs = power_soften(&logit_reference(&z, Temperature::ONE), t).unwrap();
            let direct = logit_reference(&z, t);
            prop_assert!(via_probs.max_abs_diff(&direct) < 1e-12);
        }

        #[test]
        fn shift_invariance(z in logits(), c in -50.0f64..50.0, lt in (0.1f64).ln()..(100.0f64).ln()) {
            let t = temp(lt.exp());
            let z = LogitVec::new(z).unwrap();
            for f in Family::CONFORMING {
                let spec = OperatorSpec::new(f);
                let a = soften(&spec, &softmax(z.values()), t).unwrap();
                let b = soften(&spec, &softmax(z.shifted(c).values()), t).unwrap();
                prop_assert!(a.max_abs_diff(&b) < 1e-12, "{f}");
            }
        }

        #[test]
        fn conforming_families_keep_argmax_and_identity(seed in any::<u64>(), v in 2usize..12, lt in -3.0f64..3.0) {
            let p = sample_interior(v, 1.0, seed).unwrap();
            let top = argmax_set(&p, 0.0)[0];
            for f in Family::CONFORMING {
                let spec = OperatorSpec::new(f);
                let q = soften(&spec, &p, temp(lt.exp())).unwrap();
                prop_assert!(argmax_set(&q, TIE_TOL).contains(&top));
                prop_assert!((q.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let id = soften(&spec, &p, Temperature::ONE).unwrap();
                prop_assert!(id.max_abs_diff(&p) <= 1e-12);
            }
        }

        #[test]
        fn projection_hits_scheduled_entropy(seed in any::<u64>(), v in 2usize..16, lt in -2.5f64..2.5) {
            let p = sample_interior(v, 1.0, seed).unwrap();
            let t = temp(lt.exp());
            let q = entropy_project(&p, t).unwrap();
            let h = entropy_schedule(&p, t).get();
            prop_assert!((entropy(&q).get() - h).abs() < 1e-8);
            prop_assert!(kl_div(&q, &p).is_ok());
        }
    }
}
