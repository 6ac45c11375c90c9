//! Synthetic Gaussian-cluster classification tasks.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng::rng_from;

/// Distance of every cluster centre from the origin.
pub const CENTRE_RADIUS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub d: usize,
    pub c: usize,
    pub n: usize,
    pub noise: f64,
    /// Fraction of samples used for training; the rest form the test split.
    pub train_frac: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            d: 8,
            c: 5,
            n: 4000,
            noise: 0.0,
            train_frac: 0.5,
        }
    }
}

impl TaskParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadParams(m));
        if self.d < 2 {
            return bad(format!("D must be at least 2, got {}", self.d));
        }
        if self.c < 2 {
            return bad(format!("C must be at least 2, got {}", self.c));
        }
        if self.n < 10 * self.c {
            return bad(format!("n = {} is below 10·C = {}", self.n, 10 * self.c));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 0.5), got {}", self.noise));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad(format!("train_frac must lie in (0, 1), got {}", self.train_frac));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub d: usize,
    pub c: usize,
    /// Row-major `n × d`.
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub centres: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.c];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// `C` centres on the radius-3 sphere, unit-covariance samples, balanced
/// labels, then each label flipped to a uniformly chosen other class with
/// probability `noise`.
pub fn gen_task(params: &TaskParams, seed: u64) -> Result<Dataset, SimError> {
    params.validate()?;
    let TaskParams { d, c, n, noise, .. } = *params;
    let mut rng = rng_from(seed);

    let centres: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| CENTRE_RADIUS * x / norm).collect()
        })
        .collect();

    let mut true_labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    true_labels.shuffle(&mut rng);

    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for &y in &true_labels {
        for k in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            inputs.push(centres[y][k] + e);
        }
        let flip = rng.random::<f64>() < noise;
        labels.push(if flip {
            let other = rng.random_range(0..c - 1);
            if other >= y { other + 1 } else { other }
        } else {
            y
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * params.train_frac).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();

    Ok(Dataset {
        d,
        c,
        inputs,
        labels,
        train,
        test,
        centres,
        seed,
    })
}

/// Test accuracy of classifying by the closest class mean of the training split.
pub fn nearest_centroid_accuracy(data: &Dataset) -> f64 {
    let mut means = vec![vec![0.0; data.d]; data.c];
    let mut counts = vec![0usize; data.c];
    for &i in &data.train {
        let y = data.labels[i];
        counts[y] += 1;
        for (m, x) in means[y].iter_mut().zip(data.x(i)) {
            *m += x;
        }
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    let correct = data
        .test
        .iter()
        .filter(|&&i| {
            let x = data.x(i);
            let best = (0..data.c)
                .min_by(|&a, &b| sq_dist(x, &means[a]).total_cmp(&sq_dist(x, &means[b])))
                .unwrap();
            best == data.labels[i]
        })
        .count();
    correct as f64 / data.test.len() as f64
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_task_is_separable() {
        let data = gen_task(&TaskParams::default(), 1).unwrap();
        assert!(nearest_centroid_accuracy(&data) > 0.8);
        assert_eq!(data.train.len() + data.test.len(), data.len());
        let counts = data.class_counts();
        let balanced = data.len() as f64 / data.c as f64;
        assert!(counts.iter().all(|&k| k as f64 <= 2.0 * balanced && k as f64 >= balanced / 2.0));
    }

    #[test]
    fn splits_are_disjoint() {
        let data = gen_task(&TaskParams::default(), 7).unwrap();
        let mut seen = vec![false; data.len()];
        for &i in data.train.iter().chain(&data.test) {
            assert!(!seen[i]);
            seen[i] = true;
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = TaskParams { noise: 0.5, ..TaskParams::default() };
        assert!(matches!(gen_task(&p, 1), Err(SimError::BadParams(_))));
        let p = TaskParams { n: 30, ..TaskParams::default() };
        assert!(gen_task(&p, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let p = TaskParams::default();
        assert_eq!(gen_task(&p, 11).unwrap(), gen_task(&p, 11).unwrap());
        assert_ne!(gen_task(&p, 11).unwrap().inputs, gen_task(&p, 12).unwrap().inputs);
    }

    #[test]
    fn noise_flips_to_other_classes() {
        let p = TaskParams { noise: 0.3, ..TaskParams::default() };
        let data = gen_task(&p, 2).unwrap();
        assert!(data.labels.iter().all(|&l| l < data.c));
        assert!(nearest_centroid_accuracy(&data) < 0.8);
    }
}
