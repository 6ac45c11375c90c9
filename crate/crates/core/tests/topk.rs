mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use softkd_core::rng::rng_from;
use softkd_core::simplex::entropy;
use softkd_core::softening::power_soften;
use softkd_core::topk::{maxent_complete, renormalize_complete, zipf_complete, zipf_fit};
use softkd_core::{ProbDist, Temperature, TopKError, TruncatedDist};

fn truncate(p: &[f64], k: usize) -> TruncatedDist {
    TruncatedDist::from_dist(&ProbDist::validate(p.to_vec()).unwrap(), k).unwrap()
}

#[test]
fn zipf_tails_are_reconstructed() {
    for s in [0.5, 1.0, 2.0] {
        for v in [8, 16, 33, 64] {
            for k in [2, 4, 8] {
                if k >= v {
                    continue;
                }
                let law = zipf_law(v, s);
                let t = truncate(&law, k);
                assert!((zipf_fit(&t).unwrap() - s).abs() < 1e-9, "s={s} v={v} k={k}");
                let full = zipf_complete(&t).unwrap();
                assert!(max_diff(full.values(), &law) < 1e-9, "s={s} v={v} k={k}");
            }
        }
    }
}

#[test]
fn maxent_dominates_random_completions() {
    let mut rng = rng_from(5);
    for case in 0..50 {
        let v = rng.random_range(4..=40);
        let k = rng.random_range(1..v);
        let p = dirichlet(&mut rng, v, 0.7);
        let t = truncate(&p, k);
        let best = entropy(&maxent_complete(&t).unwrap()).get();
        let unseen = t.unseen_ids();
        for _ in 0..100 {
            let tail = random_tail(&mut rng, unseen.len(), t.missing_mass(), t.floor_prob());
            let mut q = vec![0.0; v];
            for &(id, pr) in t.entries() {
                q[id] = pr;
            }
            for (&id, &m) in unseen.iter().zip(&tail) {
                q[id] = m;
            }
            assert!(naive_entropy(&q) <= best + 1e-12, "case {case}");
        }
    }
}

#[test]
fn infeasibility_matches_capacity_rule() {
    // k = 2 entries 0.3, 0.2 leave 0.5 for V − 2 slots capped at 0.2.
    let ok = TruncatedDist::new(vec![(0, 0.3), (1, 0.2)], 5).unwrap();
    assert!(maxent_complete(&ok).is_ok()); // 0.5 ≤ 3 · 0.2
    let tight = TruncatedDist::new(vec![(0, 0.3), (1, 0.2)], 4).unwrap();
    assert!(matches!(
        maxent_complete(&tight),
        Err(TopKError::InfeasibleTopK { .. })
    )); // 0.5 > 2 · 0.2
    let edge = TruncatedDist::new(vec![(0, 0.4), (1, 0.2)], 4).unwrap();
    assert!(maxent_complete(&edge).is_ok()); // 0.4 = 2 · 0.2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn infeasible_iff_missing_exceeds_capacity(seed in any::<u64>(), v in 3usize..30) {
        let mut rng = rng_from(seed);
        let k = rng.random_range(1..v);
        let mut top: Vec<f64> = (0..k).map(|_| rng.random_range(0.001..1.0)).collect();
        top.sort_by(|a, b| b.total_cmp(a));
        let scale: f64 = rng.random_range(0.05..1.0) / top.iter().sum::<f64>();
        let entries: Vec<(usize, f64)> = top.iter().enumerate().map(|(i, &x)| (i, x * scale)).collect();
        let t = TruncatedDist::new(entries, v).unwrap();
        let infeasible = t.missing_mass() > (v - k) as f64 * t.floor_prob() + 1e-12;
        let got = matches!(maxent_complete(&t), Err(TopKError::InfeasibleTopK { .. }));
        prop_assert_eq!(got, infeasible);
    }

    #[test]
    fn completions_keep_observed_entries(seed in any::<u64>(), v in 3usize..40) {
        let mut rng = rng_from(seed);
        let p = dirichlet(&mut rng, v, 1.0);
        // The Zipf fit needs two points.
        let k = rng.random_range(2..v);
        let t = truncate(&p, k);
        for q in [maxent_complete(&t).unwrap(), zipf_complete(&t).unwrap()] {
            for &(id, pr) in t.entries() {
                prop_assert!((q.values()[id] - pr).abs() < 1e-12);
            }
            for &id in &t.unseen_ids() {
                prop_assert!(q.values()[id] <= t.floor_prob() + 1e-12);
            }
        }
    }

    #[test]
    fn renormalize_commutes_with_power(seed in any::<u64>(), v in 3usize..40, temp in 0.2f64..20.0) {
        let mut rng = rng_from(seed);
        let p = dirichlet(&mut rng, v, 1.0);
        let k = rng.random_range(1..v);
        let t = truncate(&p, k);
        let temp = Temperature::new(temp).unwrap();
        let a = power_soften(&renormalize_complete(&t), temp).unwrap();
        // Power-soften the observed entries alone, then renormalize.
        let w: Vec<f64> = t.entries().iter().map(|&(_, x)| x.powf(1.0 / temp.get())).collect();
        let z: f64 = w.iter().sum();
        let mut b = vec![0.0; v];
        for (&(id, _), x) in t.entries().iter().zip(&w) {
            b[id] = x / z;
        }
        prop_assert!(max_diff(a.values(), &b) < 1e-12);
    }
}
