//! JSON experiment configuration.
//!
//! Every field has a default; the shipped `configs/default.json` spells out
//! the same values. Unknown fields are rejected so typos do not silently fall
//! back to defaults.

use serde::{Deserialize, Serialize};

use super::prune::PruneSchedule;
use super::sweep::SweepParams;
use super::task::TaskParams;
use super::train::TrainParams;
use super::SimError;
use crate::par::ExecMode;
use crate::softening::{Family, OperatorSpec, Temperature};

/// Environment variable that replaces the config seed.
pub const SEED_ENV: &str = "SOFTKD_SEED";

/// Staged run compared against a one-shot run with the same target
/// sparsity, per-stage epochs and warm-up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopyConfig {
    pub seeds: usize,
    pub schedule: PruneSchedule,
    /// Fraction of seeds on which the staged run must beat one-shot.
    pub min_win_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasVarConfig {
    pub seeds: usize,
    pub m: usize,
    pub sparsity: Vec<f64>,
    pub train: TrainParams,
    /// Fraction of seeds for the variance-reduction and dense-bias claims.
    pub min_seed_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub seeds: usize,
    #[serde(flatten)]
    pub sweep: SweepParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: TaskParams,
    pub arch: Vec<usize>,
    pub teacher: TrainParams,
    pub operators: Vec<OperatorSpec>,
    pub temperature: Temperature,
    pub probe_size: usize,
    pub homotopy: Option<HomotopyConfig>,
    pub biasvar: Option<BiasVarConfig>,
    pub convergence: Option<ConvergenceConfig>,
    pub exec: ExecMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            task: TaskParams::default(),
            arch: vec![8, 64, 64, 5],
            teacher: TrainParams {
                epochs: 60,
                lr: 0.05,
                batch: 32,
            },
            operators: Family::CONFORMING.iter().map(|&f| OperatorSpec::new(f)).collect(),
            temperature: Temperature::new(2.0).expect("valid temperature"),
            probe_size: 512,
            homotopy: Some(HomotopyConfig {
                seeds: 10,
                schedule: PruneSchedule {
                    n_stages: 8,
                    rho_target: 0.8,
                    epochs: 10,
                    lr: 0.05,
                    batch: 32,
                    warmup_epochs: 10,
                },
                min_win_frac: 0.9,
            }),
            biasvar: Some(BiasVarConfig {
                seeds: 10,
                m: 10,
                sparsity: vec![0.0, 0.8],
                train: TrainParams {
                    epochs: 20,
                    lr: 0.05,
                    batch: 32,
                },
                min_seed_frac: 0.8,
            }),
            convergence: Some(ConvergenceConfig {
                seeds: 5,
                sweep: SweepParams {
                    n_list: vec![1, 2, 4, 8],
                    rho_target: 0.8,
                    total_epochs: 40,
                    lr: 0.05,
                    batch: 32,
                    warmup_epochs: 10,
                },
            }),
            exec: ExecMode::default(),
        }
    }
}

fn check_frac(name: &str, f: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(SimError::BadParams(format!("{name} must lie in [0, 1], got {f}")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::BadParams(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.task.validate()?;
        if self.arch.len() < 2 || self.arch.contains(&0) {
            return Err(SimError::BadParams(format!("bad architecture {:?}", self.arch)));
        }
        if self.arch[0] != self.task.d || self.arch[self.arch.len() - 1] != self.task.c {
            return Err(SimError::BadParams(format!(
                "architecture {:?} does not match D = {}, C = {}",
                self.arch, self.task.d, self.task.c
            )));
        }
        self.teacher.validate()?;
        if self.operators.is_empty() {
            return Err(SimError::BadParams("at least one operator is required".into()));
        }
        if self.probe_size == 0 {
            return Err(SimError::BadParams("probe_size must be at least 1".into()));
        }
        if let Some(h) = &self.homotopy {
            h.schedule.validate()?;
            check_frac("min_win_frac", h.min_win_frac)?;
            if h.seeds == 0 {
                return Err(SimError::BadParams("homotopy needs at least one seed".into()));
            }
        }
        if let Some(b) = &self.biasvar {
            b.train.validate()?;
            check_frac("min_seed_frac", b.min_seed_frac)?;
            if b.seeds == 0 || b.m < 2 {
                return Err(SimError::BadParams("biasvar needs seeds ≥ 1 and m ≥ 2".into()));
            }
            let ok = b.sparsity.len() >= 2
                && b.sparsity[0] == 0.0
                && b.sparsity.windows(2).all(|w| w[0] < w[1])
                && b.sparsity.iter().all(|r| (0.0..1.0).contains(r));
            if !ok {
                return Err(SimError::BadParams(
                    "biasvar sparsity must start at 0, ascend strictly and stay below 1".into(),
                ));
            }
        }
        if let Some(c) = &self.convergence {
            c.sweep.validate()?;
            if !(c.sweep.rho_target > 0.0 && c.sweep.rho_target < 1.0) {
                return Err(SimError::BadParams(format!(
                    "rho_target must lie in (0, 1), got {}",
                    c.sweep.rho_target
                )));
            }
            if c.seeds == 0 {
                return Err(SimError::BadParams("convergence needs at least one seed".into()));
            }
        }
        Ok(())
    }

    /// Replaces `seed` with the parsed value of `value`, if any.
    pub fn override_seed(&mut self, value: Option<&str>) -> Result<(), SimError> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| SimError::BadParams(format!("{SEED_ENV} is not an unsigned integer: {v:?}")))?;
        }
        Ok(())
    }

    /// Number of task/teacher setups the enabled experiments need.
    pub fn n_setups(&self) -> usize {
        [
            self.homotopy.as_ref().map_or(0, |h| h.seeds),
            self.biasvar.as_ref().map_or(0, |b| b.seeds),
            self.convergence.as_ref().map_or(0, |c| c.seeds),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}
