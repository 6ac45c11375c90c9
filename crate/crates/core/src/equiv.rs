//! KD-equivalence of two softening operators over a student class.
//!
//! Two operators are equivalent on a teacher set when, for every teacher,
//! the student minimizing `KL(s ‖ F_T(p))` is the same for both. The
//! unrestricted class contains every distribution, so its minimizer is the
//! target itself. A simplex grid contains the distributions whose entries are
//! multiples of `1/G`; its minimizer is found by exhaustive enumeration, with
//! ties going to the lexicographically smallest grid point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simplex::{max_abs_diff, ProbDist};
use crate::softening::{SoftenError, Softener, Temperature};

/// Unrestricted minimizers count as equal within this max-norm distance.
pub const UNRESTRICTED_TOL: f64 = 1e-12;
/// Largest grid that will be enumerated.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudentClass {
    Unrestricted { v: usize },
    SimplexGrid { v: usize, g: usize },
}

impl StudentClass {
    pub fn vocab(&self) -> usize {
        match *self {
            StudentClass::Unrestricted { v } | StudentClass::SimplexGrid { v, .. } => v,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquivError {
    #[error("grid resolution must be at least 2, got {0}")]
    BadResolution(usize),
    #[error("grid has {points} points, more than the limit of {MAX_GRID_POINTS}")]
    GridTooLarge { points: u128 },
    #[error("teacher {index} has {got} entries, class expects {expected}")]
    DimMismatch { index: usize, got: usize, expected: usize },
    #[error("teacher {0} is not interior")]
    NotInterior(usize),
    #[error("no teachers given")]
    NoTeachers,
    #[error("no grid point has finite divergence to the target of teacher {0}")]
    NoFiniteArgmin(usize),
    #[error(transparent)]
    Soften(#[from] SoftenError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivWitness {
    pub teacher: Vec<f64>,
    pub argmin_a: Vec<f64>,
    pub argmin_b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivVerdict {
    pub equivalent: bool,
    /// First teacher (in input order) where the minimizers differ.
    pub witness: Option<EquivWitness>,
    pub argmins_a: Vec<Vec<f64>>,
    pub argmins_b: Vec<Vec<f64>>,
}

/// `C(G + V − 1, V − 1)`, saturating.
pub fn grid_size(v: usize, g: usize) -> u128 {
    let (n, k) = ((g + v - 1) as u128, (v - 1) as u128);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
        if acc > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    acc
}

/// `KL(s ‖ q)` with `0·log 0 = 0`; infinite when `s` leaves the support of `q`.
fn kl_student_first(s: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (si, qi) in s.iter().zip(q) {
        if *si > 0.0 {
            if *qi <= 0.0 {
                return f64::INFINITY;
            }
            acc += si * (si / qi).ln();
        }
    }
    acc
}

/// Integer compositions of `g` into `v` parts, in lexicographic order.
struct Compositions {
    cur: Vec<usize>,
    g: usize,
    done: bool,
}

impl Compositions {
    fn new(v: usize, g: usize) -> Self {
        let mut cur = vec![0; v];
        cur[v - 1] = g;
        Self { cur, g, done: false }
    }

    fn advance(&mut self) {
        // Find the rightmost position (before the last) that can be incremented.
        let v = self.cur.len();
        let mut prefix: usize = self.cur[..v - 1].iter().sum();
        let mut i = v - 1;
        loop {
            if i == 0 {
                self.done = true;
                return;
            }
            i -= 1;
            if prefix < self.g {
                self.cur[i] += 1;
                for c in &mut self.cur[i + 1..v - 1] {
                    *c = 0;
                }
                let used: usize = self.cur[..v - 1].iter().sum();
                self.cur[v - 1] = self.g - used;
                return;
            }
            prefix -= self.cur[i];
        }
    }
}

/// Grid point minimizing `KL(s ‖ target)`; the first strict minimum wins.
pub fn grid_argmin(target: &[f64], g: usize) -> Option<Vec<f64>> {
    let v = target.len();
    let gf = g as f64;
    let mut it = Compositions::new(v, g);
    let mut s = vec![0.0; v];
    let mut best: Option<(f64, Vec<usize>)> = None;
    while !it.done {
        for (x, c) in s.iter_mut().zip(&it.cur) {
            *x = *c as f64 / gf;
        }
        let d = kl_student_first(&s, target);
        if d.is_finite() && best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, it.cur.clone()));
        }
        it.advance();
    }
    best.map(|(_, c)| c.iter().map(|x| *x as f64 / gf).collect())
}

fn argmin(class: &StudentClass, target: &ProbDist, index: usize) -> Result<Vec<f64>, EquivError> {
    match *class {
        StudentClass::Unrestricted { .. } => Ok(target.values().to_vec()),
        StudentClass::SimplexGrid { g, .. } => grid_argmin(target.values(), g).ok_or(EquivError::NoFiniteArgmin(index)),
    }
}

fn same_argmin(class: &StudentClass, a: &[f64], b: &[f64]) -> bool {
    match class {
        StudentClass::Unrestricted { .. } => max_abs_diff(a, b) <= UNRESTRICTED_TOL,
        // Grid coordinates are k/G computed identically on both sides.
        StudentClass::SimplexGrid { .. } => a == b,
    }
}

pub fn kd_equiv_check(
    a: &dyn Softener,
    b: &dyn Softener,
    class: StudentClass,
    teachers: &[ProbDist],
    t: Temperature,
) -> Result<EquivVerdict, EquivError> {
    if teachers.is_empty() {
        return Err(EquivError::NoTeachers);
    }
    let v = class.vocab();
    if let StudentClass::SimplexGrid { g, .. } = class {
        if g < 2 {
            return Err(EquivError::BadResolution(g));
        }
        let points = grid_size(v, g);
        if points > MAX_GRID_POINTS {
            return Err(EquivError::GridTooLarge { points });
        }
    }
    for (index, p) in teachers.iter().enumerate() {
        if p.len() != v {
            return Err(EquivError::DimMismatch {
                index,
                got: p.len(),
                expected: v,
            });
        }
        if !p.is_interior() {
            return Err(EquivError::NotInterior(index));
        }
    }

    let mut argmins_a = Vec::with_capacity(teachers.len());
    let mut argmins_b = Vec::with_capacity(teachers.len());
    let mut witness = None;
    for (index, p) in teachers.iter().enumerate() {
        let sa = argmin(&class, &a.apply(p, t)?, index)?;
        let sb = argmin(&class, &b.apply(p, t)?, index)?;
        if witness.is_none() && !same_argmin(&class, &sa, &sb) {
            witness = Some(EquivWitness {
                teacher: p.values().to_vec(),
                argmin_a: sa.clone(),
                argmin_b: sb.clone(),
            });
        }
        argmins_a.push(sa);
        argmins_b.push(sb);
    }
    Ok(EquivVerdict {
        equivalent: witness.is_none(),
        witness,
        argmins_a,
        argmins_b,
    })
}
