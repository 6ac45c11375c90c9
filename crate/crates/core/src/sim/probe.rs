//! Output and gradient deviations between two networks on a probe set.

use rand_distr::{Distribution, StandardNormal};

use super::net::{Grads, TinyNet, Workspace};
use super::task::Dataset;
use super::SimError;
use crate::rng::rng_from;

/// Central-difference step for input gradients.
pub const INPUT_FD_STEP: f64 = 1e-4;
/// Interpolation points between two parameter vectors for [`path_lipschitz`].
pub const PATH_POINTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// The first `p` test inputs.
pub fn probe_set(data: &Dataset, p: usize) -> Vec<Vec<f64>> {
    data.test.iter().take(p).map(|&i| data.x(i).to_vec()).collect()
}

fn top_class(net: &TinyNet, x: &[f64]) -> usize {
    let z = net.logits(x);
    (0..z.len()).max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a))).unwrap()
}

/// `∂p_c/∂x` by central differences.
pub fn input_gradient(net: &TinyNet, x: &[f64], c: usize) -> Vec<f64> {
    let mut ws = Workspace::new(net);
    let mut p = vec![0.0; net.output_dim()];
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|k| {
            xp[k] = x[k] + INPUT_FD_STEP;
            net.forward_into(&xp, &mut ws, &mut p);
            let up = p[c];
            xp[k] = x[k] - INPUT_FD_STEP;
            net.forward_into(&xp, &mut ws, &mut p);
            let down = p[c];
            xp[k] = x[k];
            (up - down) / (2.0 * INPUT_FD_STEP)
        })
        .collect()
}

fn check_shapes(a: &TinyNet, b: &TinyNet, probe: &[Vec<f64>]) -> Result<(), SimError> {
    if a.sizes() != b.sizes() || probe.is_empty() || probe.iter().any(|x| x.len() != a.input_dim()) {
        return Err(SimError::ShapeMismatch);
    }
    Ok(())
}

/// `sup_out = max_x ‖a(x) − b(x)‖∞` and `sup_grad = max_x ‖∇_x a_c(x) − ∇_x b_c(x)‖∞`
/// where `c` is the top class of `a` at `x`.
pub fn probe_deviation(a: &TinyNet, b: &TinyNet, probe: &[Vec<f64>]) -> Result<(f64, f64), SimError> {
    check_shapes(a, b, probe)?;
    let (mut sup_out, mut sup_grad) = (0.0f64, 0.0f64);
    for x in probe {
        let pa = a.forward(x);
        let pb = b.forward(x);
        sup_out = sup_out.max(pa.max_abs_diff(&pb));
        let c = top_class(a, x);
        let ga = input_gradient(a, x, c);
        let gb = input_gradient(b, x, c);
        let d = ga.iter().zip(&gb).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        sup_grad = sup_grad.max(d);
    }
    Ok((sup_out, sup_grad))
}

/// Output-only part of [`probe_deviation`].
pub fn sup_output_deviation(a: &TinyNet, b: &TinyNet, probe: &[Vec<f64>]) -> f64 {
    probe
        .iter()
        .map(|x| a.forward(x).max_abs_diff(&b.forward(x)))
        .fold(0.0, f64::max)
}

/// Largest `‖∇_θ p_c(x)‖₂` over probe inputs, classes and parameters
/// interpolated between `a` and `b` at [`PATH_POINTS`]. Every weight is
/// differentiated, masked or not, because the segment from `θ_a` to `θ_b`
/// moves pruned weights to zero.
pub fn path_lipschitz(a: &TinyNet, b: &TinyNet, probe: &[Vec<f64>]) -> Result<f64, SimError> {
    check_shapes(a, b, probe)?;
    let ta = a.params();
    let tb = b.params();
    let mut net = TinyNet::zeros(&a.sizes())?;
    let mut ws = Workspace::new(&net);
    let mut grads = Grads::zeros_like(&net);
    let mut best = 0.0f64;
    let mut theta = vec![0.0; ta.len()];
    for &s in &PATH_POINTS {
        for ((t, x), y) in theta.iter_mut().zip(&ta).zip(&tb) {
            *t = (1.0 - s) * x + s * y;
        }
        net.set_params(&theta);
        for x in probe {
            for c in 0..net.output_dim() {
                net.prob_grad(x, c, &mut ws, &mut grads);
                best = best.max(grads.norm());
            }
        }
    }
    Ok(best)
}

/// `max_u sup_out(θ, θ + δu) / δ` over `n` random unit directions `u`.
pub fn random_lipschitz(net: &TinyNet, probe: &[Vec<f64>], n: usize, delta: f64, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let theta = net.params();
    let mut moved = net.clone();
    let mut best = 0.0f64;
    for _ in 0..n {
        let mut u: Vec<f64> = (0..theta.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let shifted: Vec<f64> = theta.iter().zip(&u).map(|(t, d)| t + delta * d).collect();
        moved.set_params(&shifted);
        best = best.max(sup_output_deviation(net, &moved, probe) / delta);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn setup() -> (TinyNet, Vec<Vec<f64>>) {
        let mut rng = rng_from(17);
        let net = TinyNet::init(&[4, 10, 3], &mut rng).unwrap();
        let probe: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        (net, probe)
    }

    #[test]
    fn identical_nets_have_zero_deviation() {
        let (net, probe) = setup();
        assert_eq!(probe_deviation(&net, &net, &probe).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn probe_order_does_not_matter() {
        let (net, probe) = setup();
        let mut other = net.clone();
        other.layers_mut()[0].w[3] += 0.2;
        let fwd = probe_deviation(&net, &other, &probe).unwrap();
        let mut rev = probe.clone();
        rev.reverse();
        assert_eq!(probe_deviation(&net, &other, &rev).unwrap(), fwd);
    }

    #[test]
    fn single_weight_perturbation_within_path_bound() {
        let (net, probe) = setup();
        let mut other = net.clone();
        other.layers_mut()[1].w[4] += 1e-6;
        let (sup_out, _) = probe_deviation(&net, &other, &probe).unwrap();
        let l_hat = path_lipschitz(&net, &other, &probe).unwrap();
        assert!(sup_out <= l_hat * 1e-6, "{sup_out} vs {}", l_hat * 1e-6);
    }

    #[test]
    fn random_directions_do_not_exceed_gradient_norm() {
        let (net, probe) = setup();
        let l_path = path_lipschitz(&net, &net, &probe).unwrap();
        let l_rand = random_lipschitz(&net, &probe, 100, 1e-6, 3);
        assert!(l_rand > 0.0 && l_rand <= l_path * (1.0 + 1e-3));
    }

    #[test]
    fn input_gradient_matches_analytic_direction() {
        let (net, probe) = setup();
        let x = &probe[0];
        let g = input_gradient(&net, x, 1);
        let eps = 1e-6;
        let dir: Vec<f64> = g.iter().map(|v| v / g.iter().map(|w| w * w).sum::<f64>().sqrt()).collect();
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + eps * d).collect();
        let slope = (net.forward(&xp).values()[1] - net.forward(x).values()[1]) / eps;
        let norm = g.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!((slope - norm).abs() < 1e-5 * norm.max(1.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (net, probe) = setup();
        let other = TinyNet::zeros(&[4, 5, 3]).unwrap();
        assert_eq!(probe_deviation(&net, &other, &probe), Err(SimError::ShapeMismatch));
    }
}
