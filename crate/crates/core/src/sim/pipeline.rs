//! Staged prune-and-distill runs starting from the teacher.

use serde::{Deserialize, Serialize};

use super::net::TinyNet;
use super::probe::{path_lipschitz, probe_deviation, probe_set, sup_output_deviation};
use super::prune::{prune, PruneSchedule};
use super::task::{gen_task, Dataset, TaskParams};
use super::train::{accuracy, distill_on, mean_loss, train_teacher, TeacherReport, Targets, TrainParams};
use super::SimError;
use crate::rng::derive_seed;
use crate::softening::{OperatorSpec, Temperature};

/// A task, its trained teacher and the probe inputs.
#[derive(Clone, Debug)]
pub struct Setup {
    pub data: Dataset,
    pub teacher: TinyNet,
    pub teacher_report: TeacherReport,
    pub probe: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Setup {
    pub fn build(
        task: &TaskParams,
        arch: &[usize],
        teacher: &TrainParams,
        probe_size: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        if probe_size == 0 {
            return Err(SimError::BadParams("probe size must be at least 1".into()));
        }
        let data = gen_task(task, derive_seed(seed, 0))?;
        let (net, report) = train_teacher(&data, arch, teacher, derive_seed(seed, 1))?;
        let probe = probe_set(&data, probe_size);
        Ok(Self {
            data,
            teacher: net,
            teacher_report: report,
            probe,
            seed,
        })
    }

    pub fn targets(&self, spec: &OperatorSpec, t: Temperature) -> Result<Targets, SimError> {
        Targets::softened(&self.teacher, spec, t, &self.data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    /// 0 for the dense warm-up, then 1..=n for the pruning stages.
    pub stage: usize,
    pub sparsity: f64,
    /// `max_x ‖f_k(x) − f_{k−1}(x)‖∞` over the probe set.
    pub sup_out: f64,
    /// Input-gradient counterpart of `sup_out`.
    pub sup_grad: f64,
    /// `max_x ‖f_k(x) − teacher(x)‖∞`.
    pub sup_out_teacher: f64,
    /// `‖θ_k − θ_{k−1}‖₂`.
    pub param_step: f64,
    /// Largest parameter-gradient norm along the stage's parameter segment.
    pub lipschitz: Option<f64>,
    /// `sup_out ≤ lipschitz · param_step`.
    pub bound_holds: Option<bool>,
    /// Final-epoch mean training loss of the stage.
    pub eps_tune: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    /// Dense warm-up (stage 0) when the schedule has warm-up epochs.
    pub warmup: Option<StageMetrics>,
    /// Pruning stages only.
    pub stages: Vec<StageMetrics>,
    /// `Σ_k sup_out` over the pruning stages.
    pub path_deviation: f64,
    /// Mean entropy of the soft targets on the test split: the loss of a
    /// student that reproduces them exactly.
    pub target_entropy: f64,
    pub student: TinyNet,
}

impl PipelineRun {
    pub fn max_stage_deviation(&self) -> f64 {
        self.stages.iter().map(|s| s.sup_out).fold(0.0, f64::max)
    }

    pub fn final_test_loss(&self) -> f64 {
        self.stages.last().map(|s| s.test_loss).unwrap_or(f64::NAN)
    }

    /// `final_test_loss − target_entropy`, the mean KL from targets to student.
    pub fn residual(&self) -> f64 {
        self.final_test_loss() - self.target_entropy
    }
}

/// Mean `H(targets(i))` over `idx`.
pub fn mean_target_entropy(targets: &Targets, idx: &[usize]) -> f64 {
    let total: f64 = idx
        .iter()
        .map(|&i| targets.row(i).iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum::<f64>())
        .sum();
    total / idx.len() as f64
}

struct StageRunner<'a> {
    setup: &'a Setup,
    targets: &'a Targets,
    params: TrainParams,
    lipschitz: bool,
}

impl StageRunner<'_> {
    fn run(&self, stage: usize, before: &TinyNet, rho: f64, seed: u64) -> Result<(TinyNet, StageMetrics), SimError> {
        let (setup, data) = (self.setup, &self.setup.data);
        let pruned = prune(before, rho)?;
        let (tuned, eps_tune) = distill_on(&pruned, data, self.targets, &self.params, seed)?;
        assert!(tuned.masks_hold(), "masked weight became nonzero");
        let (sup_out, sup_grad) = probe_deviation(before, &tuned, &setup.probe)?;
        let param_step = before.param_distance(&tuned);
        let lipschitz = if self.lipschitz {
            Some(path_lipschitz(before, &tuned, &setup.probe)?)
        } else {
            None
        };
        let metrics = StageMetrics {
            stage,
            sparsity: tuned.sparsity(),
            sup_out,
            sup_grad,
            sup_out_teacher: sup_output_deviation(&tuned, &setup.teacher, &setup.probe),
            param_step,
            lipschitz,
            bound_holds: lipschitz.map(|l| sup_out <= l * param_step),
            eps_tune,
            train_loss: mean_loss(&tuned, data, &data.train, self.targets),
            test_loss: mean_loss(&tuned, data, &data.test, self.targets),
            test_accuracy: accuracy(&tuned, data, &data.test),
        };
        Ok((tuned, metrics))
    }
}

/// Student starts as a copy of the teacher and is distilled densely for
/// `schedule.warmup_epochs`; each stage then prunes to the next sparsity
/// level and fine-tunes for `schedule.epochs` epochs. The warm-up depends
/// only on the setup, so schedules on the same setup share it.
pub fn run_with_targets(
    setup: &Setup,
    targets: &Targets,
    schedule: &PruneSchedule,
    seed: u64,
    lipschitz: bool,
) -> Result<PipelineRun, SimError> {
    schedule.validate()?;
    let runner = StageRunner {
        setup,
        targets,
        params: TrainParams {
            epochs: schedule.epochs,
            lr: schedule.lr,
            batch: schedule.batch,
        },
        lipschitz,
    };
    let mut student = setup.teacher.clone();
    let mut warmup = None;
    if schedule.warmup_epochs > 0 {
        let warm = StageRunner {
            params: TrainParams {
                epochs: schedule.warmup_epochs,
                ..runner.params.clone()
            },
            ..runner
        };
        let (net, m) = warm.run(0, &student, 0.0, derive_seed(setup.seed, 2))?;
        student = net;
        warmup = Some(m);
    }
    let mut stages = Vec::with_capacity(schedule.n_stages);
    for (k, rho) in schedule.sparsities().into_iter().enumerate() {
        let (net, m) = runner.run(k + 1, &student, rho, derive_seed(seed, k as u64))?;
        student = net;
        stages.push(m);
    }
    Ok(PipelineRun {
        warmup,
        path_deviation: stages.iter().map(|s| s.sup_out).sum(),
        target_entropy: mean_target_entropy(targets, &setup.data.test),
        stages,
        student,
    })
}

pub fn run_pipeline(
    setup: &Setup,
    spec: &OperatorSpec,
    t: Temperature,
    schedule: &PruneSchedule,
    seed: u64,
) -> Result<PipelineRun, SimError> {
    let targets = setup.targets(spec, t)?;
    run_with_targets(setup, &targets, schedule, seed, true)
}
