//! Residual versus number of pruning stages under a fixed epoch budget.

use serde::{Deserialize, Serialize};

use super::pipeline::{run_with_targets, Setup};
use super::prune::PruneSchedule;
use super::SimError;
use crate::par::{try_map_indexed, ExecMode};
use crate::rng::derive_seed;
use crate::softening::{OperatorSpec, Temperature};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub n_list: Vec<usize>,
    pub rho_target: f64,
    /// Fine-tuning epochs shared by all stages of one run.
    pub total_epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Dense distillation before the first pruning stage, outside the budget.
    #[serde(default)]
    pub warmup_epochs: usize,
}

impl SweepParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let sorted = self.n_list.windows(2).all(|w| w[0] < w[1]);
        if self.n_list.first() != Some(&1) || !sorted {
            return Err(SimError::BadParams("n_list must be strictly ascending and start at 1".into()));
        }
        let max_n = *self.n_list.last().unwrap();
        if self.total_epochs < max_n {
            return Err(SimError::BadParams(format!(
                "total_epochs {} cannot be split over {max_n} stages",
                self.total_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub n_stages: usize,
    pub epochs_per_stage: usize,
    pub final_loss: f64,
    /// Mean entropy of the soft targets, the loss floor.
    pub target_entropy: f64,
    /// `final_loss − target_entropy`.
    pub residual: f64,
    pub mean_eps_tune: f64,
    /// Residual of the one-shot run on the same seed.
    pub one_shot_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub operator: String,
    pub rows: Vec<SweepRow>,
    /// `(n, median residual over seeds)`.
    pub medians: Vec<(usize, f64)>,
    pub best_n: usize,
    /// Medians do not increase from `n = 1` up to `best_n`.
    pub non_increasing_to_best: bool,
    /// Least-squares fit `residual ≈ a/n + b·n` on the medians.
    pub fit_a: f64,
    pub fit_b: f64,
}

/// Minimizes `Σ (r_n − a/n − b·n)²`.
pub fn fit_inverse_linear(points: &[(usize, f64)]) -> (f64, f64) {
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, r) in points {
        let (u, v) = (1.0 / n as f64, n as f64);
        s11 += u * u;
        s12 += u * v;
        s22 += v * v;
        r1 += u * r;
        r2 += v * r;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-300 {
        // A single n: the two basis functions are collinear.
        return (r1 / s11, 0.0);
    }
    ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// One setup per seed; for each `n`, stages get `total_epochs / n` epochs.
pub fn convergence_sweep(
    setups: &[Setup],
    spec: &OperatorSpec,
    t: Temperature,
    params: &SweepParams,
    exec: ExecMode,
) -> Result<ConvergenceReport, SimError> {
    params.validate()?;
    if setups.is_empty() {
        return Err(SimError::BadParams("convergence sweep needs at least one seed".into()));
    }
    let targets: Vec<_> = setups.iter().map(|s| s.targets(spec, t)).collect::<Result<_, _>>()?;
    let n_count = params.n_list.len();
    let runs = try_map_indexed(exec, setups.len() * n_count, |job| {
        let (si, ni) = (job / n_count, job % n_count);
        let n = params.n_list[ni];
        let schedule = PruneSchedule {
            n_stages: n,
            rho_target: params.rho_target,
            epochs: params.total_epochs / n,
            lr: params.lr,
            batch: params.batch,
            warmup_epochs: params.warmup_epochs,
        };
        let seed = derive_seed(setups[si].seed, 100 + n as u64);
        let run = run_with_targets(&setups[si], &targets[si], &schedule, seed, false)?;
        let final_loss = run.final_test_loss();
        Ok::<_, SimError>(SweepRow {
            seed: setups[si].seed,
            n_stages: n,
            epochs_per_stage: schedule.epochs,
            final_loss,
            target_entropy: run.target_entropy,
            residual: run.residual(),
            mean_eps_tune: run.stages.iter().map(|s| s.eps_tune).sum::<f64>() / n as f64,
            one_shot_residual: f64::NAN,
        })
    })?;

    let mut rows = runs;
    for chunk in rows.chunks_mut(n_count) {
        let one_shot = chunk[0].residual;
        chunk.iter_mut().for_each(|r| r.one_shot_residual = one_shot);
    }
    let medians: Vec<(usize, f64)> = params
        .n_list
        .iter()
        .enumerate()
        .map(|(ni, &n)| (n, median(rows.iter().skip(ni).step_by(n_count).map(|r| r.residual).collect())))
        .collect();
    let best = medians
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();
    let non_increasing_to_best = medians[..=best].windows(2).all(|w| w[1].1 <= w[0].1);
    let (fit_a, fit_b) = fit_inverse_linear(&medians);
    Ok(ConvergenceReport {
        operator: spec.family.name().to_string(),
        rows,
        best_n: medians[best].0,
        medians,
        non_increasing_to_best,
        fit_a,
        fit_b,
    })
}
