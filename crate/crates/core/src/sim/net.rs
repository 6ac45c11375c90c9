//! A small fully connected tanh network with a softmax head.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng::Rng;
use crate::simplex::ProbDist;

/// Dense layer with row-major weights (`n_out × n_in`) and a weight mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// `false` marks a pruned weight, which is held at exactly 0.
    pub mask: Vec<bool>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
            mask: vec![true; n_in * n_out],
        }
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.w[o * self.n_in..(o + 1) * self.n_in]
    }
}

/// `tanh` through one `exp`; absolute error below 1e-15.
#[inline]
fn fast_tanh(z: f64) -> f64 {
    if z.abs() > 20.0 {
        return z.signum();
    }
    1.0 - 2.0 / ((2.0 * z).exp() + 1.0)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TinyNet {
    layers: Vec<Layer>,
}

/// Parameter gradients with the same layout as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &TinyNet) -> Self {
        Self {
            w: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|v| v.fill(0.0));
    }

    /// Flattened in [`TinyNet::params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.w
            .iter()
            .chain(&self.b)
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-layer activations kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    /// `acts[0]` is the input, `acts[l]` the tanh output feeding layer `l`.
    acts: Vec<Vec<f64>>,
    logits: Vec<f64>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    pub fn new(net: &TinyNet) -> Self {
        let mut acts = vec![vec![0.0; net.input_dim()]];
        for l in &net.layers[..net.layers.len() - 1] {
            acts.push(vec![0.0; l.n_out]);
        }
        Self {
            acts,
            logits: vec![0.0; net.output_dim()],
            delta: Vec::new(),
            next: Vec::new(),
        }
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }
}

fn softmax_in_place(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

impl TinyNet {
    /// All-zero network; its output is uniform.
    pub fn zeros(sizes: &[usize]) -> Result<Self, SimError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() < 2 {
            return Err(SimError::BadParams(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Result<Self, SimError> {
        let mut net = Self::zeros(sizes)?;
        for l in &mut net.layers {
            let a = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            l.w.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn n_weights(&self) -> usize {
        self.layers.iter().map(|l| l.w.len()).sum()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn n_masked(&self) -> usize {
        self.layers.iter().map(|l| l.mask.iter().filter(|m| !**m).count()).sum()
    }

    /// Fraction of weights (biases excluded) that are masked.
    pub fn sparsity(&self) -> f64 {
        self.n_masked() as f64 / self.n_weights() as f64
    }

    /// `true` when every masked weight is exactly zero.
    pub fn masks_hold(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().zip(&l.mask).all(|(w, m)| *m || *w == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Overwrites parameters from [`TinyNet::params`] order; masks untouched.
    pub fn set_params(&mut self, theta: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&theta[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&theta[k..k + nb]);
            k += nb;
        }
    }

    /// `‖θ_self − θ_other‖₂` over all weights and biases.
    pub fn param_distance(&self, other: &TinyNet) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.w.iter().zip(&b.w).chain(a.b.iter().zip(&b.b)))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    fn run(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(li + 1);
            let input = &before[li];
            let out: &mut Vec<f64> = if li == last { &mut ws.logits } else { &mut after[0] };
            for o in 0..l.n_out {
                let z = dot(l.row(o), input) + l.b[o];
                out[o] = if li == last { z } else { fast_tanh(z) };
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(self);
        self.run(x, &mut ws);
        ws.logits
    }

    /// Output probabilities, written into `out`.
    pub fn forward_into(&self, x: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        self.run(x, ws);
        softmax_in_place(&ws.logits, out);
    }

    pub fn forward(&self, x: &[f64]) -> ProbDist {
        let mut ws = Workspace::new(self);
        let mut p = vec![0.0; self.output_dim()];
        self.forward_into(x, &mut ws, &mut p);
        ProbDist::from_weights(p)
    }

    /// Backpropagates `ws.delta = ∂L/∂logits` through the activations left by
    /// the last forward pass, accumulating into `grads`. Masked entries receive gradient as well;
    /// callers decide whether to apply them.
    fn backprop(&self, ws: &mut Workspace, grads: &mut Grads) {
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &ws.acts[li];
            let gw = &mut grads.w[li];
            let gb = &mut grads.b[li];
            for o in 0..l.n_out {
                let d = ws.delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * l.n_in..(o + 1) * l.n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if li > 0 {
                ws.next.clear();
                ws.next.resize(l.n_in, 0.0);
                for o in 0..l.n_out {
                    let d = ws.delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (n, w) in ws.next.iter_mut().zip(l.row(o)) {
                        *n += d * w;
                    }
                }
                for (n, a) in ws.next.iter_mut().zip(input) {
                    *n *= 1.0 - a * a;
                }
                std::mem::swap(&mut ws.delta, &mut ws.next);
            }
        }
    }

    /// Cross-entropy `−Σ t_i ln p_i` for a target summing to 1; its gradient
    /// is added to `grads`.
    pub fn loss_and_grad(&self, x: &[f64], target: &[f64], ws: &mut Workspace, grads: &mut Grads) -> f64 {
        self.run(x, ws);
        let loss = cross_entropy_logits(target, &ws.logits);
        ws.delta.resize(ws.logits.len(), 0.0);
        softmax_in_place(&ws.logits, &mut ws.delta);
        for (d, t) in ws.delta.iter_mut().zip(target) {
            *d -= t;
        }
        self.backprop(ws, grads);
        loss
    }

    pub fn loss(&self, x: &[f64], target: &[f64], ws: &mut Workspace) -> f64 {
        self.run(x, ws);
        cross_entropy_logits(target, &ws.logits)
    }

    /// `∇_θ p_c(x)` over every weight and bias, masked or not.
    pub fn prob_grad(&self, x: &[f64], c: usize, ws: &mut Workspace, grads: &mut Grads) {
        self.run(x, ws);
        ws.delta.resize(ws.logits.len(), 0.0);
        softmax_in_place(&ws.logits, &mut ws.delta);
        let pc = ws.delta[c];
        for (j, d) in ws.delta.iter_mut().enumerate() {
            *d = pc * (if j == c { 1.0 } else { 0.0 } - *d);
        }
        grads.clear();
        self.backprop(ws, grads);
    }

    /// `θ ← θ − lr·g` on unmasked weights and all biases.
    pub fn sgd_step(&mut self, grads: &Grads, lr: f64) {
        for (li, l) in self.layers.iter_mut().enumerate() {
            for ((w, m), g) in l.w.iter_mut().zip(&l.mask).zip(&grads.w[li]) {
                if *m {
                    *w -= lr * g;
                }
            }
            for (b, g) in l.b.iter_mut().zip(&grads.b[li]) {
                *b -= lr * g;
            }
        }
    }
}

/// `−Σ t_i (z_i − lse(z))`, skipping zero targets.
pub fn cross_entropy_logits(target: &[f64], z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    target
        .iter()
        .zip(z)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| -t * (v - lse))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn net(seed: u64) -> TinyNet {
        TinyNet::init(&[3, 5, 4, 3], &mut rng_from(seed)).unwrap()
    }

    #[test]
    fn zero_net_is_uniform() {
        let n = TinyNet::zeros(&[4, 6, 5]).unwrap();
        let p = n.forward(&[1.0, -2.0, 0.5, 3.0]);
        assert!(p.values().iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn shared_bias_shift_leaves_output() {
        let mut n = net(3);
        let x = [0.3, -0.7, 1.1];
        let before = n.forward(&x);
        let last = n.layers_mut().last_mut().unwrap();
        last.b.iter_mut().for_each(|b| *b += 2.5);
        assert!(n.forward(&x).max_abs_diff(&before) < 1e-15);
    }

    #[test]
    fn forward_is_a_distribution() {
        let n = net(9);
        let p = n.forward(&[10.0, -30.0, 4.0]);
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_tanh_matches_std() {
        for k in -4000..=4000 {
            let z = k as f64 * 0.01;
            assert!((fast_tanh(z) - z.tanh()).abs() < 1e-15, "{z}");
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn params_round_trip() {
        let a = net(1);
        let mut b = net(2);
        b.set_params(&a.params());
        assert_eq!(a, b);
        assert_eq!(a.param_distance(&b), 0.0);
        assert_eq!(a.params().len(), a.n_params());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let n = net(5);
        let x = [0.4, -1.2, 0.9];
        let t = [0.2, 0.5, 0.3];
        let mut ws = Workspace::new(&n);
        let mut g = Grads::zeros_like(&n);
        n.loss_and_grad(&x, &t, &mut ws, &mut g);
        let analytic = g.flatten();
        let theta = n.params();
        let h = 1e-5;
        let mut probe = n.clone();
        for k in 0..theta.len() {
            let mut th = theta.clone();
            th[k] += h;
            probe.set_params(&th);
            let up = probe.loss(&x, &t, &mut ws);
            th[k] -= 2.0 * h;
            probe.set_params(&th);
            let down = probe.loss(&x, &t, &mut ws);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - analytic[k]).abs() < 1e-7, "param {k}: {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn sgd_respects_masks() {
        let mut n = net(4);
        n.layers_mut()[0].mask[2] = false;
        n.layers_mut()[0].w[2] = 0.0;
        let mut ws = Workspace::new(&n);
        let mut g = Grads::zeros_like(&n);
        n.loss_and_grad(&[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0], &mut ws, &mut g);
        n.sgd_step(&g, 0.5);
        assert!(n.masks_hold());
        assert_eq!(n.layers()[0].w[2], 0.0);
    }
}
