//! Runs the configured experiments and evaluates their assertions.
//!
//! All setups (task + teacher) are built once and shared by every phase and
//! operator. Setup `k` uses seed `derive_seed(config.seed, k)`. Row order in
//! every table is fixed by (operator, seed, ...) so reruns are byte-identical
//! in both execution modes.

use serde::{Deserialize, Serialize};

use super::biasvar::{bias_variance, BiasVarParams, BiasVarReport};
use super::config::ExperimentConfig;
use super::pipeline::{run_with_targets, PipelineRun, Setup, StageMetrics};
use super::prune::PruneSchedule;
use super::sweep::{convergence_sweep, ConvergenceReport};
use super::SimError;
use crate::par::try_map_indexed;
use crate::rng::derive_seed;

/// Largest relative error allowed in `total = Bias² + Var`.
pub const IDENTITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub operator: String,
    pub seed: u64,
    /// `staged` or `one_shot`.
    pub schedule: String,
    pub n_stages: usize,
    pub stage: usize,
    pub sparsity: f64,
    pub sup_out: f64,
    pub sup_grad: f64,
    pub sup_out_teacher: f64,
    pub param_step: f64,
    pub lipschitz: Option<f64>,
    pub bound_holds: Option<bool>,
    pub eps_tune: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

impl StageRow {
    fn new(operator: &str, seed: u64, schedule: &str, n_stages: usize, m: &StageMetrics) -> Self {
        Self {
            operator: operator.to_string(),
            seed,
            schedule: schedule.to_string(),
            n_stages,
            stage: m.stage,
            sparsity: m.sparsity,
            sup_out: m.sup_out,
            sup_grad: m.sup_grad,
            sup_out_teacher: m.sup_out_teacher,
            param_step: m.param_step,
            lipschitz: m.lipschitz,
            bound_holds: m.bound_holds,
            eps_tune: m.eps_tune,
            train_loss: m.train_loss,
            test_loss: m.test_loss,
            test_accuracy: m.test_accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVarRow {
    pub seed: u64,
    pub operator: String,
    pub temperature: f64,
    pub sparsity: f64,
    pub m: usize,
    pub bias2: f64,
    pub variance: f64,
    pub total: f64,
    pub sigma2: f64,
    pub identity_error: f64,
    pub variance_gain_exceeds_bias_cost: Option<bool>,
}

impl BiasVarRow {
    fn new(seed: u64, r: &BiasVarReport) -> Self {
        Self {
            seed,
            operator: r.operator.clone(),
            temperature: r.temperature,
            sparsity: r.sparsity,
            m: r.m,
            bias2: r.bias2,
            variance: r.variance,
            total: r.total,
            sigma2: r.sigma2,
            identity_error: r.identity_error,
            variance_gain_exceeds_bias_cost: r.variance_gain_exceeds_bias_cost,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub operator: String,
    pub seed: u64,
    pub n_stages: usize,
    pub epochs_per_stage: usize,
    pub final_loss: f64,
    pub target_entropy: f64,
    pub residual: f64,
    pub one_shot_residual: f64,
    pub mean_eps_tune: f64,
}

/// One experiment-level claim, evaluated for one operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub operator: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyOutcome {
    pub operator: String,
    pub seeds: usize,
    /// Seeds where the largest staged `sup_out` is below the one-shot one.
    pub staged_wins: usize,
    pub required: usize,
    pub bound_violations: usize,
    pub mask_violations: usize,
    /// `(max staged sup_out, one-shot sup_out)` per seed.
    pub per_seed: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasVarOutcome {
    pub operator: String,
    pub seeds: usize,
    pub required: usize,
    /// Seeds where Var at the highest sparsity is below Var at ρ = 0.
    pub variance_reduced: usize,
    /// Seeds where dense Bias² is below every pruned level's.
    pub dense_bias_lowest: usize,
    pub max_identity_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub pass: bool,
    pub assertions: Vec<Assertion>,
    pub teachers: Vec<TeacherRow>,
    pub homotopy: Vec<HomotopyOutcome>,
    pub biasvar: Vec<BiasVarOutcome>,
    pub convergence: Vec<ConvergenceReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherRow {
    pub seed: u64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub stages: Vec<StageRow>,
    pub biasvar: Vec<BiasVarRow>,
    pub convergence: Vec<ConvergenceRow>,
    pub summary: Summary,
}

/// `⌈frac · n⌉`, computed without float round-up surprises like `0.9 · 10`.
pub fn required_count(frac: f64, n: usize) -> usize {
    let x = frac * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub fn build_setups(cfg: &ExperimentConfig, n: usize) -> Result<Vec<Setup>, SimError> {
    try_map_indexed(cfg.exec, n, |k| {
        Setup::build(&cfg.task, &cfg.arch, &cfg.teacher, cfg.probe_size, derive_seed(cfg.seed, k as u64))
    })
}

fn push(assertions: &mut Vec<Assertion>, name: &str, operator: &str, pass: bool, detail: String) {
    assertions.push(Assertion {
        name: name.to_string(),
        operator: operator.to_string(),
        pass,
        detail,
    });
}

fn all_metrics(run: &PipelineRun) -> impl Iterator<Item = &StageMetrics> {
    run.warmup.iter().chain(&run.stages)
}

/// Staged versus one-shot pruning for every operator and seed.
pub fn run_homotopy(
    cfg: &ExperimentConfig,
    setups: &[Setup],
    assertions: &mut Vec<Assertion>,
) -> Result<(Vec<StageRow>, Vec<HomotopyOutcome>), SimError> {
    let Some(h) = &cfg.homotopy else {
        return Ok((Vec::new(), Vec::new()));
    };
    let seeds = h.seeds.min(setups.len());
    let staged = h.schedule.clone();
    let one_shot = PruneSchedule {
        n_stages: 1,
        ..staged.clone()
    };
    let ops = &cfg.operators;
    let runs = try_map_indexed(cfg.exec, ops.len() * seeds, |job| {
        let (oi, si) = (job / seeds, job % seeds);
        let setup = &setups[si];
        let targets = setup.targets(&ops[oi], cfg.temperature)?;
        let a = run_with_targets(setup, &targets, &staged, derive_seed(setup.seed, 10), true)?;
        let b = run_with_targets(setup, &targets, &one_shot, derive_seed(setup.seed, 11), true)?;
        Ok::<_, SimError>((a, b))
    })?;

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (oi, chunk) in runs.chunks(seeds).enumerate() {
        let name = ops[oi].family.name();
        let mut per_seed = Vec::with_capacity(seeds);
        let (mut bound_violations, mut mask_violations) = (0, 0);
        for (si, (a, b)) in chunk.iter().enumerate() {
            let seed = setups[si].seed;
            for (label, run) in [("staged", a), ("one_shot", b)] {
                let n = run.stages.len();
                rows.extend(all_metrics(run).map(|m| StageRow::new(name, seed, label, n, m)));
                bound_violations += all_metrics(run).filter(|m| m.bound_holds == Some(false)).count();
                mask_violations += usize::from(!run.student.masks_hold());
            }
            per_seed.push((a.max_stage_deviation(), b.max_stage_deviation()));
        }
        let staged_wins = per_seed.iter().filter(|(a, b)| a < b).count();
        let required = required_count(h.min_win_frac, seeds);
        push(
            assertions,
            "homotopy_vs_one_shot",
            name,
            staged_wins >= required,
            format!("staged max sup_out below one-shot on {staged_wins}/{seeds} seeds (need {required})"),
        );
        push(
            assertions,
            "lipschitz_bound",
            name,
            bound_violations == 0,
            format!("{bound_violations} stages violate sup_out <= L·|Δθ|"),
        );
        push(
            assertions,
            "mask_invariance",
            name,
            mask_violations == 0,
            format!("{mask_violations} final students with nonzero masked weights"),
        );
        outcomes.push(HomotopyOutcome {
            operator: name.to_string(),
            seeds,
            staged_wins,
            required,
            bound_violations,
            mask_violations,
            per_seed,
        });
    }
    Ok((rows, outcomes))
}

/// Bias-variance split for every operator and seed.
pub fn run_biasvar(
    cfg: &ExperimentConfig,
    setups: &[Setup],
    assertions: &mut Vec<Assertion>,
) -> Result<(Vec<BiasVarRow>, Vec<BiasVarOutcome>), SimError> {
    let Some(b) = &cfg.biasvar else {
        return Ok((Vec::new(), Vec::new()));
    };
    let seeds = b.seeds.min(setups.len());
    let params = BiasVarParams {
        m: b.m,
        sparsity: b.sparsity.clone(),
        train: b.train.clone(),
    };
    let ops = &cfg.operators;
    let reports = try_map_indexed(cfg.exec, ops.len() * seeds, |job| {
        let (oi, si) = (job / seeds, job % seeds);
        let setup = &setups[si];
        bias_variance(setup, &ops[oi], cfg.temperature, &params, derive_seed(setup.seed, 20), cfg.exec)
    })?;

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (oi, chunk) in reports.chunks(seeds).enumerate() {
        let name = ops[oi].family.name();
        let (mut variance_reduced, mut dense_bias_lowest) = (0, 0);
        let mut max_identity_error = 0.0f64;
        for (si, levels) in chunk.iter().enumerate() {
            rows.extend(levels.iter().map(|r| BiasVarRow::new(setups[si].seed, r)));
            let (dense, last) = (&levels[0], &levels[levels.len() - 1]);
            variance_reduced += usize::from(last.variance < dense.variance);
            dense_bias_lowest += usize::from(levels[1..].iter().all(|r| dense.bias2 < r.bias2));
            max_identity_error = levels.iter().map(|r| r.identity_error).fold(max_identity_error, f64::max);
        }
        let required = required_count(b.min_seed_frac, seeds);
        let top = b.sparsity[b.sparsity.len() - 1];
        push(
            assertions,
            "decomposition_identity",
            name,
            max_identity_error < IDENTITY_TOL,
            format!("max relative error {max_identity_error:.3e}"),
        );
        push(
            assertions,
            "variance_reduction",
            name,
            variance_reduced >= required,
            format!("Var(rho={top}) < Var(rho=0) on {variance_reduced}/{seeds} seeds (need {required})"),
        );
        push(
            assertions,
            "dense_bias_lowest",
            name,
            dense_bias_lowest >= required,
            format!("dense Bias² below every pruned level on {dense_bias_lowest}/{seeds} seeds (need {required})"),
        );
        outcomes.push(BiasVarOutcome {
            operator: name.to_string(),
            seeds,
            required,
            variance_reduced,
            dense_bias_lowest,
            max_identity_error,
        });
    }
    Ok((rows, outcomes))
}

/// Residual versus stage count for every operator.
pub fn run_convergence(
    cfg: &ExperimentConfig,
    setups: &[Setup],
    assertions: &mut Vec<Assertion>,
) -> Result<(Vec<ConvergenceRow>, Vec<ConvergenceReport>), SimError> {
    let Some(c) = &cfg.convergence else {
        return Ok((Vec::new(), Vec::new()));
    };
    let seeds = c.seeds.min(setups.len());
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for spec in &cfg.operators {
        let report = convergence_sweep(&setups[..seeds], spec, cfg.temperature, &c.sweep, cfg.exec)?;
        let name = spec.family.name();
        rows.extend(report.rows.iter().map(|r| ConvergenceRow {
            operator: name.to_string(),
            seed: r.seed,
            n_stages: r.n_stages,
            epochs_per_stage: r.epochs_per_stage,
            final_loss: r.final_loss,
            target_entropy: r.target_entropy,
            residual: r.residual,
            one_shot_residual: r.one_shot_residual,
            mean_eps_tune: r.mean_eps_tune,
        }));
        push(
            assertions,
            "convergence_trend",
            name,
            report.non_increasing_to_best && report.fit_a > 0.0,
            format!(
                "best n = {}, non-increasing to best: {}, a = {:.4e}, b = {:.4e}",
                report.best_n, report.non_increasing_to_best, report.fit_a, report.fit_b
            ),
        );
        let first = report.medians[0].1;
        let (n_max, last) = report.medians[report.medians.len() - 1];
        push(
            assertions,
            "staged_residual_not_worse",
            name,
            last <= first,
            format!("median residual n={n_max}: {last:.4e}, n=1: {first:.4e}"),
        );
        reports.push(report);
    }
    Ok((rows, reports))
}

/// Runs every enabled phase. The config must already be validated.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, SimError> {
    cfg.validate()?;
    let setups = build_setups(cfg, cfg.n_setups())?;
    let mut assertions = Vec::new();
    let (stages, homotopy) = run_homotopy(cfg, &setups, &mut assertions)?;
    let (biasvar, bv_outcomes) = run_biasvar(cfg, &setups, &mut assertions)?;
    let (convergence, conv_reports) = run_convergence(cfg, &setups, &mut assertions)?;
    let summary = Summary {
        seed: cfg.seed,
        pass: assertions.iter().all(|a| a.pass),
        assertions,
        teachers: setups
            .iter()
            .map(|s| TeacherRow {
                seed: s.seed,
                test_loss: s.teacher_report.test_loss,
                test_accuracy: s.teacher_report.test_accuracy,
            })
            .collect(),
        homotopy,
        biasvar: bv_outcomes,
        convergence: conv_reports,
    };
    Ok(ExperimentOutput {
        stages,
        biasvar,
        convergence,
        summary,
    })
}
