//! Independent reference implementations shared by the integration tests and
//! the acceptance runner. Nothing here calls into the library's numerics.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use softkd_core::sim::net::{Grads, TinyNet, Workspace};

/// Plain `exp(z_i − max) / Σ`.
pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn naive_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// `Σ q ln(q/p)` with `0 ln 0 = 0`; infinite when `q > 0 = p`.
pub fn naive_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&a, &b)| match (a > 0.0, b > 0.0) {
            (false, _) => 0.0,
            (true, false) => f64::INFINITY,
            (true, true) => a * (a / b).ln(),
        })
        .sum()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn dirichlet<R: Rng>(rng: &mut R, v: usize, alpha: f64) -> Vec<f64> {
    let g = Gamma::new(alpha, 1.0).unwrap();
    loop {
        let w: Vec<f64> = (0..v).map(|_| g.sample(rng)).collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 && w.iter().all(|x| x / s > 1e-9) {
            return w.iter().map(|x| x / s).collect();
        }
    }
}

pub fn normals<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// `normalize(p^b)` computed directly.
pub fn tilt(p: &[f64], b: f64) -> Vec<f64> {
    let w: Vec<f64> = p.iter().map(|v| v.powf(b)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Distribution with entropy `h` on the curve `normalize(q^b)` through `q`,
/// found by plain bisection on `b`. `None` when `h` is out of reach.
pub fn match_entropy(q: &[f64], h: f64) -> Option<Vec<f64>> {
    let (mut lo, mut hi) = (1e-3f64, 1e3f64);
    let f = |b: f64| naive_entropy(&tilt(q, b)) - h;
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(tilt(q, (lo * hi).sqrt()))
}

/// Indices sorted by descending value, ties by index.
pub fn ranking(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx
}

/// Exhaustive `argmin KL(s ‖ target)` over `{c/g : c = 0..=g}` for V = 2.
/// First strict minimum in ascending `c` wins.
pub fn brute_grid_argmin_v2(target: &[f64], g: usize) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for c in 0..=g {
        let s0 = c as f64 / g as f64;
        let kl = naive_kl(&[s0, 1.0 - s0], target);
        if kl < best.0 {
            best = (kl, s0);
        }
    }
    best.1
}

/// Zipf law over `v` ranks: `p_i ∝ (i + 1)^{-s}`.
pub fn zipf_law(v: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=v).map(|r| (r as f64).powf(-s)).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// A random feasible tail: `missing` spread over `n` slots with every slot at
/// most `cap`. Mixes a Dirichlet draw with the uniform fill just enough to
/// respect the cap.
pub fn random_tail<R: Rng>(rng: &mut R, n: usize, missing: f64, cap: f64) -> Vec<f64> {
    let u = missing / n as f64;
    let r: Vec<f64> = dirichlet(rng, n, 0.5).into_iter().map(|x| x * missing).collect();
    let mx = r.iter().cloned().fold(0.0, f64::max);
    let lam = if mx > cap && mx > u { (mx - cap) / (mx - u) } else { 0.0 };
    r.iter().map(|x| lam * u + (1.0 - lam) * x).collect()
}

/// Central-difference gradient of the distillation loss over all
/// parameters, in `params()` order.
pub fn fd_gradient(net: &TinyNet, x: &[f64], target: &[f64], step: f64) -> Vec<f64> {
    let theta = net.params();
    let mut moved = net.clone();
    let mut ws = Workspace::new(net);
    let mut g = Vec::with_capacity(theta.len());
    let mut th = theta.clone();
    for k in 0..theta.len() {
        th[k] = theta[k] + step;
        moved.set_params(&th);
        let up = moved.loss(x, target, &mut ws);
        th[k] = theta[k] - step;
        moved.set_params(&th);
        let down = moved.loss(x, target, &mut ws);
        th[k] = theta[k];
        g.push((up - down) / (2.0 * step));
    }
    g
}

pub fn analytic_gradient(net: &TinyNet, x: &[f64], target: &[f64]) -> Vec<f64> {
    let mut ws = Workspace::new(net);
    let mut grads = Grads::zeros_like(net);
    net.loss_and_grad(x, target, &mut ws, &mut grads);
    grads.flatten()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e−12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    n(&d) / n(a).max(n(b)).max(1e-12)
}
