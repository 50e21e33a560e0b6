//! Toy-scale training: optimizers, finite-difference gradient checks, planted
//! teacher-student recovery, and `(a, b)` sweeps.

use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdaptedLinear, Adapter, AdapterGrad, CosaAdapter, LoraAdapter};
use crate::budget::{layer_params, LayerShape, MethodSpec};
use crate::error::{CosaError, Result};
use crate::numerics::{frobenius_norm, Matrix};
use crate::projection::ProjectionPair;
use crate::randgen::{derive_seed, gaussian_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Adamw,
}

impl FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::Adamw),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }

    /// beta1 = 0.9, beta2 = 0.999, eps = 1e-8, no decay.
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adamw,
            weight_decay,
            ..Self::adam(lr)
        }
    }
}

/// Per-tensor optimizer state; moments are shaped like the parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, rows: usize, cols: usize) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: vec![0.0; rows * cols],
            second: vec![0.0; rows * cols],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// One update of `param` in place. Sgd and Adam fold weight decay into the
    /// gradient; AdamW applies it directly to the parameter.
    pub fn step(&mut self, param: &mut Matrix, grad: &Matrix) -> Result<()> {
        if param.shape() != grad.shape() || param.data().len() != self.first.len() {
            return Err(CosaError::shape("optimizer_step", param.shape(), grad.shape()));
        }
        if !grad.all_finite() {
            return Err(CosaError::Numerical(format!(
                "non-finite gradient at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let c = self.config;
        let p = param.data_mut();
        let g = grad.data();
        match c.kind {
            OptimizerKind::Sgd => {
                for (w, &gi) in p.iter_mut().zip(g) {
                    *w -= c.lr * (gi + c.weight_decay * *w);
                }
            }
            OptimizerKind::Adam | OptimizerKind::Adamw => {
                let t = self.step as i32;
                let bias1 = 1.0 - c.beta1.powi(t);
                let bias2 = 1.0 - c.beta2.powi(t);
                let decoupled = c.kind == OptimizerKind::Adamw;
                for k in 0..p.len() {
                    let gk = if decoupled { g[k] } else { g[k] + c.weight_decay * p[k] };
                    self.first[k] = c.beta1 * self.first[k] + (1.0 - c.beta1) * gk;
                    self.second[k] = c.beta2 * self.second[k] + (1.0 - c.beta2) * gk * gk;
                    let m_hat = self.first[k] / bias1;
                    let v_hat = self.second[k] / bias2;
                    if decoupled {
                        p[k] -= c.lr * c.weight_decay * p[k];
                    }
                    p[k] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                }
            }
        }
        Ok(())
    }
}

/// `0.5 * ||Z - T||^2`.
pub fn half_squared_error(z: &Matrix, target: &Matrix) -> Result<f64> {
    Ok(0.5 * frobenius_norm(&z.sub(target)?).powi(2))
}

/// Absolute floor in the denominator of gradient-check relative errors.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;
pub const GRAD_CHECK_MAX_PARAMS: usize = 256;

/// Largest entrywise relative error between analytic adapter gradients of
/// `0.5 ||forward(X) - target||^2` and central differences with step `h`.
/// Covers `Y` for CoSA layers and both factors for LoRA layers.
pub fn grad_check(layer: &AdaptedLinear, x: &Matrix, target: &Matrix, h: f64) -> Result<f64> {
    let z = layer.forward(x)?;
    let g = z.sub(target)?;
    let analytic = layer.backward(x, &g)?.adapter;
    let slots: Vec<(usize, f64)> = match &analytic {
        AdapterGrad::Cosa { core } => core.data().iter().copied().enumerate().collect(),
        AdapterGrad::Lora { down, up } => down
            .data()
            .iter()
            .chain(up.data())
            .copied()
            .enumerate()
            .collect(),
    };
    if slots.len() > GRAD_CHECK_MAX_PARAMS {
        return Err(CosaError::arg(format!(
            "gradient check over {} parameters exceeds the {GRAD_CHECK_MAX_PARAMS} limit",
            slots.len()
        )));
    }
    let mut worst = 0.0_f64;
    for (idx, ana) in slots {
        let mut plus = layer.clone();
        let mut minus = layer.clone();
        nudge(&mut plus, idx, h);
        nudge(&mut minus, idx, -h);
        let zp = plus.forward(x)?;
        let zm = minus.forward(x)?;
        // L(+h) - L(-h) = 0.5 * sum (zp - zm)(zp + zm - 2t), without cancelling two large losses.
        let mut diff = 0.0;
        for ((&p, &m), &t) in zp.data().iter().zip(zm.data()).zip(target.data()) {
            diff += 0.5 * (p - m) * (p + m - 2.0 * t);
        }
        let numeric = diff / (2.0 * h);
        let denom = ana.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((ana - numeric).abs() / denom);
    }
    Ok(worst)
}

fn nudge(layer: &mut AdaptedLinear, idx: usize, h: f64) {
    match layer.adapter_mut() {
        Adapter::Cosa(c) => c.core_mut().data_mut()[idx] += h,
        Adapter::Lora(l) => {
            let (down, up) = l.factors_mut();
            let n_down = down.data().len();
            if idx < n_down {
                down.data_mut()[idx] += h;
            } else {
                up.data_mut()[idx - n_down] += h;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyTaskKind {
    /// Teacher update `scale * L Y* R` planted in the student's own dictionary span.
    InspanRecovery,
    /// Teacher update is a dense Gaussian matrix, generally outside the span.
    OffspanRegression,
}

impl FromStr for ToyTaskKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "inspan" | "inspan_recovery" => Ok(ToyTaskKind::InspanRecovery),
            "offspan" | "offspan_regression" => Ok(ToyTaskKind::OffspanRegression),
            other => Err(format!("unknown toy task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum ToyMethod {
    Cosa,
    Lora { rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTaskSpec {
    pub kind: ToyTaskKind,
    pub method: ToyMethod,
    pub m: usize,
    pub n: usize,
    pub a: usize,
    pub b: usize,
    /// Core dims the inspan teacher is planted with; `None` means `(a, b)`.
    pub teacher_core: Option<(usize, usize)>,
    pub data_seed: u64,
    pub batch: usize,
    pub steps: usize,
    pub optimizer: OptimizerConfig,
    pub alpha_scale: f64,
    /// Use an orthonormalized projection pair for the student (and inspan teacher).
    pub orthonormalize: bool,
    pub eval_batch: usize,
}

impl ToyTaskSpec {
    /// In-span recovery at (64, 48, 16, 8), Adam lr 1e-2, 5000 steps, batch 32.
    pub fn default_inspan() -> Self {
        ToyTaskSpec {
            kind: ToyTaskKind::InspanRecovery,
            method: ToyMethod::Cosa,
            m: 64,
            n: 48,
            a: 16,
            b: 8,
            teacher_core: None,
            data_seed: 0,
            batch: 32,
            steps: 5000,
            optimizer: OptimizerConfig::adam(1e-2),
            alpha_scale: 1.0,
            orthonormalize: false,
            eval_batch: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.eval_batch == 0 {
            return Err(CosaError::arg("batch sizes must be positive"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(CosaError::arg("learning rate must be positive"));
        }
        let (ta, tb) = self.teacher_core.unwrap_or((self.a, self.b));
        if self.a == 0 || self.b == 0 || ta == 0 || tb == 0 || self.a > self.m || self.b > self.n || ta > self.m || tb > self.n {
            return Err(CosaError::arg(format!(
                "core dims ({}, {}) / teacher ({ta}, {tb}) invalid for layer ({}, {})",
                self.a, self.b, self.m, self.n
            )));
        }
        if let ToyMethod::Lora { rank } = self.method {
            if rank == 0 {
                return Err(CosaError::arg("lora rank must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Training-batch loss before each update, `0.5 ||Z - T||^2 / batch`.
    pub losses: Vec<f64>,
    /// Loss on the fixed evaluation batch before training.
    pub initial_loss: f64,
    /// Loss on the fixed evaluation batch after training.
    pub final_loss: f64,
    /// `||Y - Y*|| / ||Y*||` when student and teacher share the core shape.
    pub core_rel_error: Option<f64>,
    /// `||dW - dW*|| / ||dW*||`.
    pub delta_rel_error: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl TrainTrace {
    /// Core error when defined, otherwise the update error.
    pub fn final_rel_error(&self) -> f64 {
        self.core_rel_error.unwrap_or(self.delta_rel_error)
    }
}

/// Mean loss over consecutive windows of `window` steps (a trailing partial window is dropped).
pub fn window_means(losses: &[f64], window: usize) -> Vec<f64> {
    losses
        .chunks_exact(window.max(1))
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .collect()
}

/// Divergence guard relative to the initial training loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

struct Teacher {
    delta: Matrix,
    core: Option<Matrix>,
}

struct ToySetup {
    layer: AdaptedLinear,
    teacher: Teacher,
    eval_x: Matrix,
}

fn setup(task: &ToyTaskSpec) -> Result<ToySetup> {
    task.validate()?;
    let pair_seed = derive_seed(task.data_seed, 0);
    let base = gaussian_matrix(derive_seed(task.data_seed, 1), task.m, task.n).scale(1.0 / (task.n as f64).sqrt());
    let teacher = match task.kind {
        ToyTaskKind::InspanRecovery => {
            let (ta, tb) = task.teacher_core.unwrap_or((task.a, task.b));
            let pair = ProjectionPair::new(pair_seed, task.m, task.n, ta, tb, task.orthonormalize)?;
            let core = gaussian_matrix(derive_seed(task.data_seed, 2), ta, tb);
            let delta = pair.synthesize(&core)?.scale(task.alpha_scale);
            let shared = (ta, tb) == (task.a, task.b) && task.method == ToyMethod::Cosa;
            Teacher {
                delta,
                core: shared.then_some(core),
            }
        }
        ToyTaskKind::OffspanRegression => Teacher {
            delta: gaussian_matrix(derive_seed(task.data_seed, 3), task.m, task.n),
            core: None,
        },
    };
    let adapter = match task.method {
        ToyMethod::Cosa => {
            let pair = ProjectionPair::new(pair_seed, task.m, task.n, task.a, task.b, task.orthonormalize)?;
            Adapter::Cosa(CosaAdapter::with_pair(pair, task.alpha_scale)?)
        }
        ToyMethod::Lora { rank } => Adapter::Lora(LoraAdapter::new(pair_seed, task.m, task.n, rank, task.alpha_scale)?),
    };
    let layer = AdaptedLinear::new(base, adapter)?;
    let eval_x = gaussian_matrix(derive_seed(task.data_seed, 4), task.n, task.eval_batch);
    Ok(ToySetup { layer, teacher, eval_x })
}

fn batch_loss(layer: &AdaptedLinear, teacher_w: &Matrix, x: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    let z = layer.forward(x)?;
    let t = teacher_w.matmul(x)?;
    let residual = z.sub(&t)?;
    let loss = 0.5 * frobenius_norm(&residual).powi(2) / x.cols() as f64;
    Ok((loss, residual, z))
}

fn adapter_delta(layer: &AdaptedLinear) -> Result<Matrix> {
    match layer.adapter() {
        Adapter::Cosa(c) => c.delta_weight(),
        Adapter::Lora(l) => Ok(l.up().matmul(l.down())?.scale(l.alpha_scale())),
    }
}

/// Train a fresh student on `task`; returns the trace and the trained layer.
pub fn run_toy_with_layer(task: &ToyTaskSpec) -> Result<(TrainTrace, AdaptedLinear)> {
    let started = Instant::now();
    let ToySetup {
        mut layer,
        teacher,
        eval_x,
    } = setup(task)?;
    let teacher_w = layer.base().add(&teacher.delta)?;
    let (initial_loss, _, _) = batch_loss(&layer, &teacher_w, &eval_x)?;

    let mut opt_states: Vec<OptimizerState> = match layer.adapter() {
        Adapter::Cosa(_) => vec![OptimizerState::new(task.optimizer, task.a, task.b)],
        Adapter::Lora(l) => vec![
            OptimizerState::new(task.optimizer, l.down().rows(), l.down().cols()),
            OptimizerState::new(task.optimizer, l.up().rows(), l.up().cols()),
        ],
    };

    let batch_base = derive_seed(task.data_seed, 5);
    let mut losses = Vec::with_capacity(task.steps);
    let mut limit = f64::INFINITY;
    for step in 0..task.steps {
        let x = gaussian_matrix(derive_seed(batch_base, step as u64), task.n, task.batch);
        let (loss, residual, _) = batch_loss(&layer, &teacher_w, &x)?;
        if step == 0 {
            limit = DIVERGENCE_FACTOR * loss.max(f64::MIN_POSITIVE);
        }
        if !loss.is_finite() || loss > limit {
            losses.push(loss);
            return Err(CosaError::Diverged {
                step,
                loss,
                limit,
                trace: losses,
            });
        }
        losses.push(loss);
        let g = residual.scale(1.0 / task.batch as f64);
        let grads = layer.backward(&x, &g)?.adapter;
        match (layer.adapter_mut(), grads) {
            (Adapter::Cosa(c), AdapterGrad::Cosa { core }) => opt_states[0].step(c.core_mut(), &core)?,
            (Adapter::Lora(l), AdapterGrad::Lora { down, up }) => {
                let (a, b) = l.factors_mut();
                opt_states[0].step(a, &down)?;
                opt_states[1].step(b, &up)?;
            }
            _ => unreachable!("gradient kind follows the adapter kind"),
        }
    }

    let (final_loss, _, _) = batch_loss(&layer, &teacher_w, &eval_x)?;
    let delta = adapter_delta(&layer)?;
    let teacher_norm = frobenius_norm(&teacher.delta);
    let delta_rel_error = frobenius_norm(&delta.sub(&teacher.delta)?) / teacher_norm;
    let core_rel_error = match (&teacher.core, layer.adapter()) {
        (Some(star), Adapter::Cosa(c)) => Some(frobenius_norm(&c.core().sub(star)?) / frobenius_norm(star)),
        _ => None,
    };
    Ok((
        TrainTrace {
            losses,
            initial_loss,
            final_loss,
            core_rel_error,
            delta_rel_error,
            wall_time: started.elapsed(),
        },
        layer,
    ))
}

pub fn run_toy(task: &ToyTaskSpec) -> Result<TrainTrace> {
    Ok(run_toy_with_layer(task)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: usize,
    pub b: usize,
    pub params: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_rel_error: f64,
}

/// Train the base task at every `(a, b)` in the grid (row-major over `a_list` then `b_list`).
///
/// Inspan teachers are planted at the largest grid core so every student shares one
/// target; with prefix-stable projections a larger core contains every smaller one.
pub fn sweep_ab(base: &ToyTaskSpec, a_list: &[usize], b_list: &[usize]) -> Result<Vec<SweepRow>> {
    if a_list.is_empty() || b_list.is_empty() {
        return Err(CosaError::arg("sweep needs non-empty a and b lists"));
    }
    let teacher = (
        *a_list.iter().max().unwrap(),
        *b_list.iter().max().unwrap(),
    );
    let grid: Vec<(usize, usize)> = a_list.iter().flat_map(|&a| b_list.iter().map(move |&b| (a, b))).collect();
    grid.par_iter()
        .map(|&(a, b)| {
            let task = ToyTaskSpec {
                a,
                b,
                method: ToyMethod::Cosa,
                teacher_core: (base.kind == ToyTaskKind::InspanRecovery).then_some(teacher),
                ..base.clone()
            };
            let trace = run_toy(&task)?;
            let shape = LayerShape {
                name: "toy".into(),
                m: base.m as u64,
                n: base.n as u64,
                count: 1,
            };
            Ok(SweepRow {
                a,
                b,
                params: layer_params(&MethodSpec::cosa(a as u64, b as u64), &shape)?,
                initial_loss: trace.initial_loss,
                final_loss: trace.final_loss,
                final_rel_error: trace.final_rel_error(),
            })
        })
        .collect()
}
