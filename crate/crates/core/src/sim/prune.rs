//! Global magnitude pruning and staged sparsity schedules.

use serde::{Deserialize, Serialize};

use super::net::TinyNet;
use super::SimError;

/// Staged pruning plan: `n_stages` equal sparsity steps up to `rho_target`,
/// each followed by `epochs` of fine-tuning. `warmup_epochs` of dense
/// distillation come first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    pub n_stages: usize,
    pub rho_target: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    #[serde(default)]
    pub warmup_epochs: usize,
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_stages == 0 {
            return Err(SimError::BadParams("n_stages must be at least 1".into()));
        }
        if !(self.rho_target > 0.0 && self.rho_target < 1.0) {
            return Err(SimError::BadParams(format!(
                "rho_target must lie in (0, 1), got {}",
                self.rho_target
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch == 0 {
            return Err(SimError::BadParams("learning rate and batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.rho_target / self.n_stages as f64
    }

    /// Cumulative sparsity after each stage.
    pub fn sparsities(&self) -> Vec<f64> {
        (1..=self.n_stages)
            .map(|k| if k == self.n_stages { self.rho_target } else { k as f64 * self.step() })
            .collect()
    }
}

/// Masks the smallest-magnitude unmasked weights until `round(rho·N)` of the
/// `N` weights are masked. Ties go to the lower `(layer, index)`.
pub fn prune(net: &TinyNet, rho: f64) -> Result<TinyNet, SimError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SimError::BadRho(rho));
    }
    let total = net.n_weights();
    let already = net.n_masked();
    let target = (rho * total as f64).round() as usize;
    if target < already {
        if rho + 1.0 / (total as f64) < net.sparsity() {
            return Err(SimError::BadRho(rho));
        }
        return Ok(net.clone());
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(total - already);
    for (li, l) in net.layers().iter().enumerate() {
        for (k, (w, m)) in l.w.iter().zip(&l.mask).enumerate() {
            if *m {
                candidates.push((w.abs(), li, k));
            }
        }
    }
    let extra = target - already;
    if extra < candidates.len() {
        candidates.select_nth_unstable_by(extra, |a, b| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        });
    }
    let mut out = net.clone();
    for &(_, li, k) in &candidates[..extra] {
        let l = &mut out.layers_mut()[li];
        l.mask[k] = false;
        l.w[k] = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn four_weights() -> TinyNet {
        let mut n = TinyNet::zeros(&[2, 2]).unwrap();
        n.layers_mut()[0].w.copy_from_slice(&[0.1, -0.5, 0.3, 0.2]);
        n
    }

    #[test]
    fn masks_smallest_magnitudes() {
        let p = prune(&four_weights(), 0.5).unwrap();
        assert_eq!(p.layers()[0].mask, vec![false, true, true, false]);
        assert_eq!(p.layers()[0].w, vec![0.0, -0.5, 0.3, 0.0]);
        assert!(p.masks_hold());
    }

    #[test]
    fn no_ops() {
        let n = four_weights();
        assert_eq!(prune(&n, 0.0).unwrap(), n);
        let p = prune(&n, 0.5).unwrap();
        assert_eq!(prune(&p, 0.5).unwrap(), p);
    }

    #[test]
    fn ties_break_by_index() {
        let mut n = TinyNet::zeros(&[2, 2]).unwrap();
        n.layers_mut()[0].w.copy_from_slice(&[0.2, -0.2, 0.2, 0.9]);
        let p = prune(&n, 0.5).unwrap();
        assert_eq!(p.layers()[0].mask, vec![false, false, true, true]);
    }

    #[test]
    fn rejects_bad_rho() {
        let n = four_weights();
        assert!(matches!(prune(&n, 1.0), Err(SimError::BadRho(_))));
        assert!(matches!(prune(&n, -0.1), Err(SimError::BadRho(_))));
        let p = prune(&n, 0.5).unwrap();
        assert!(matches!(prune(&p, 0.0), Err(SimError::BadRho(_))));
    }

    #[test]
    fn reaches_target_density() {
        let n = TinyNet::init(&[8, 64, 64, 5], &mut rng_from(3)).unwrap();
        for rho in [0.1, 0.35, 0.8] {
            let p = prune(&n, rho).unwrap();
            assert!((p.sparsity() - rho).abs() <= 1.0 / n.n_weights() as f64);
        }
    }

    #[test]
    fn schedule_arithmetic() {
        let s = PruneSchedule {
            n_stages: 4,
            rho_target: 0.8,
            epochs: 1,
            lr: 0.05,
            batch: 32,
            warmup_epochs: 0,
        };
        let got = s.sparsities();
        for (g, e) in got.iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!(PruneSchedule { n_stages: 0, ..s.clone() }.validate().is_err());
        assert!(PruneSchedule { rho_target: 1.0, ..s }.validate().is_err());
    }
}
