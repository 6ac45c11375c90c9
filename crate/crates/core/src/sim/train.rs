//! Mini-batch gradient descent for teachers and distilled students.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{Grads, TinyNet, Workspace};
use super::task::Dataset;
use super::SimError;
use crate::rng::rng_from;
use crate::softening::{soften, OperatorSpec, Temperature};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl TrainParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch == 0 {
            return Err(SimError::BadParams("learning rate and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// One target distribution per dataset row, row-major `n × C`.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub c: usize,
    pub values: Vec<f64>,
}

impl Targets {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.c..(i + 1) * self.c]
    }

    pub fn one_hot(data: &Dataset) -> Self {
        let mut values = vec![0.0; data.len() * data.c];
        for (i, &y) in data.labels.iter().enumerate() {
            values[i * data.c + y] = 1.0;
        }
        Self { c: data.c, values }
    }

    /// `soften(spec, teacher(x), T)` for every row. Only the teacher's
    /// output probabilities are used.
    pub fn softened(teacher: &TinyNet, spec: &OperatorSpec, t: Temperature, data: &Dataset) -> Result<Self, SimError> {
        let mut values = Vec::with_capacity(data.len() * data.c);
        for i in 0..data.len() {
            let p = teacher.forward(data.x(i));
            values.extend_from_slice(soften(spec, &p, t)?.values());
        }
        Ok(Self { c: data.c, values })
    }
}

/// Runs `params.epochs` epochs over `idx` with a per-epoch shuffle and
/// returns the mean loss of the final epoch. With zero epochs the network is
/// untouched and the current mean loss is returned.
pub fn fit(
    net: &mut TinyNet,
    data: &Dataset,
    idx: &[usize],
    targets: &Targets,
    params: &TrainParams,
    seed: u64,
) -> Result<f64, SimError> {
    params.validate()?;
    if params.epochs == 0 {
        return Ok(mean_loss(net, data, idx, targets));
    }
    let mut rng = rng_from(seed);
    let mut order = idx.to_vec();
    let mut ws = Workspace::new(net);
    let mut grads = Grads::zeros_like(net);
    let mut last = f64::NAN;
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(params.batch) {
            grads.clear();
            for &i in batch {
                total += net.loss_and_grad(data.x(i), targets.row(i), &mut ws, &mut grads);
            }
            net.sgd_step(&grads, params.lr / batch.len() as f64);
        }
        last = total / order.len() as f64;
        if !last.is_finite() || !net.is_finite() {
            return Err(SimError::Diverged { epoch });
        }
    }
    Ok(last)
}

pub fn mean_loss(net: &TinyNet, data: &Dataset, idx: &[usize], targets: &Targets) -> f64 {
    let mut ws = Workspace::new(net);
    let total: f64 = idx.iter().map(|&i| net.loss(data.x(i), targets.row(i), &mut ws)).sum();
    total / idx.len() as f64
}

pub fn accuracy(net: &TinyNet, data: &Dataset, idx: &[usize]) -> f64 {
    let correct = idx
        .iter()
        .filter(|&&i| {
            let z = net.logits(data.x(i));
            let pred = (0..z.len()).max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a))).unwrap();
            pred == data.labels[i]
        })
        .count();
    correct as f64 / idx.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Dense network trained on the hard labels of the training split.
pub fn train_teacher(
    data: &Dataset,
    arch: &[usize],
    params: &TrainParams,
    seed: u64,
) -> Result<(TinyNet, TeacherReport), SimError> {
    if arch.first() != Some(&data.d) || arch.last() != Some(&data.c) {
        return Err(SimError::BadParams(format!(
            "architecture {arch:?} does not match D = {}, C = {}",
            data.d, data.c
        )));
    }
    let mut net = TinyNet::init(arch, &mut rng_from(seed))?;
    let targets = Targets::one_hot(data);
    let train_loss = fit(&mut net, data, &data.train, &targets, params, seed ^ 0x5eed)?;
    let report = TeacherReport {
        train_loss,
        test_loss: mean_loss(&net, data, &data.test, &targets),
        test_accuracy: accuracy(&net, data, &data.test),
    };
    Ok((net, report))
}

/// Fine-tunes `student` against precomputed soft targets; returns the
/// updated network and the final-epoch mean training loss.
pub fn distill_on(
    student: &TinyNet,
    data: &Dataset,
    targets: &Targets,
    params: &TrainParams,
    seed: u64,
) -> Result<(TinyNet, f64), SimError> {
    let mut net = student.clone();
    let eps = fit(&mut net, data, &data.train, targets, params, seed)?;
    debug_assert!(net.masks_hold());
    Ok((net, eps))
}

pub fn distill_stage(
    student: &TinyNet,
    teacher: &TinyNet,
    spec: &OperatorSpec,
    t: Temperature,
    data: &Dataset,
    params: &TrainParams,
    seed: u64,
) -> Result<(TinyNet, f64), SimError> {
    if student.sizes() != teacher.sizes() {
        return Err(SimError::ShapeMismatch);
    }
    let targets = Targets::softened(teacher, spec, t, data)?;
    distill_on(student, data, &targets, params, seed)
}
