use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_for, LossConfig};
use super::model::{EncoderModel, Gradients};
use crate::error::{Error, Result};
use crate::sampler::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub warmup_steps: usize,
    /// Rate after warm-up is `lr / sqrt(1 + decay_factor * (step - warmup))`.
    #[serde(default = "default_decay")]
    pub decay_factor: f64,
    #[serde(default = "default_min_lr")]
    pub min_learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    /// Dev-loss evaluation interval in steps (0 disables).
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_lr() -> f64 {
    1e-2
}
fn default_decay() -> f64 {
    5e-5
}
fn default_min_lr() -> f64 {
    1e-8
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_eval_every() -> usize {
    50
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            warmup_steps: 0,
            decay_factor: default_decay(),
            min_learning_rate: default_min_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
            eval_every: default_eval_every(),
        }
    }
}

impl TrainConfig {
    /// Linear warm-up to `learning_rate`, then inverse-square-root decay,
    /// floored at `min_learning_rate`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let lr = if step < self.warmup_steps {
            self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64
        } else {
            let t = (step - self.warmup_steps) as f64;
            self.learning_rate / (1.0 + self.decay_factor * t).sqrt()
        };
        lr.max(self.min_learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.min_learning_rate > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.decay_factor < 0.0 {
            return Err(Error::invalid("decay_factor must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Optimizer state: step counter, first/second moments and the batch-order
/// RNG seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub seed: u64,
    m_embedding: Vec<f64>,
    v_embedding: Vec<f64>,
    m_projection: Vec<f64>,
    v_projection: Vec<f64>,
    m_bias: Vec<f64>,
    v_bias: Vec<f64>,
}

impl TrainState {
    pub fn new(model: &EncoderModel, seed: u64) -> Self {
        let d = model.dim();
        TrainState {
            step: 0,
            seed,
            m_embedding: vec![0.0; model.hash_dim() * d],
            v_embedding: vec![0.0; model.hash_dim() * d],
            m_projection: vec![0.0; d * d],
            v_projection: vec![0.0; d * d],
            m_bias: vec![0.0; d],
            v_bias: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub steps: Vec<(usize, f64)>,
}

impl LossTrace {
    /// Two-column `step<TAB>loss` text.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, l) in &self.steps {
            writeln!(out, "{s}\t{l:.10}")?;
        }
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|x| x.1).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EncoderModel,
    pub trace: LossTrace,
    /// Step of the returned checkpoint when a dev set drove selection.
    pub best_step: Option<usize>,
    pub dev_losses: Vec<(usize, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn adam(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    cfg: &TrainConfig,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        params[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
    }
}

fn apply(model: &mut EncoderModel, grads: &Gradients, state: &mut TrainState, cfg: &TrainConfig) {
    let lr = cfg.learning_rate_at(state.step);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let d = model.dim();
    // Embedding rows without gradient keep their moments (lazy update).
    for (&bucket, g) in &grads.embedding {
        let r = bucket as usize * d..(bucket as usize + 1) * d;
        adam(
            &mut model.embedding[r.clone()],
            g,
            &mut state.m_embedding[r.clone()],
            &mut state.v_embedding[r],
            lr,
            cfg,
            bc1,
            bc2,
        );
    }
    adam(
        &mut model.projection,
        &grads.projection,
        &mut state.m_projection,
        &mut state.v_projection,
        lr,
        cfg,
        bc1,
        bc2,
    );
    adam(&mut model.bias, &grads.bias, &mut state.m_bias, &mut state.v_bias, lr, cfg, bc1, bc2);
}

fn mean_loss(model: &EncoderModel, batches: &[Batch], loss: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for b in batches {
        total += loss_for(model, b, loss)?.0;
    }
    Ok(total / batches.len() as f64)
}

/// Runs `steps` optimizer updates, visiting the batches in a seeded shuffled
/// order per pass. With `dev` batches, the checkpoint with the lowest dev
/// loss (checked every `eval_every` steps and at the end) is returned;
/// otherwise the final one.
pub fn train(
    mut model: EncoderModel,
    batches: &[Batch],
    loss: &LossConfig,
    config: &TrainConfig,
    state: &mut TrainState,
    steps: usize,
    dev: Option<&[Batch]>,
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.validate()?;
    if batches.is_empty() {
        return Err(Error::invalid("training needs at least one batch"));
    }
    let dev = dev.filter(|d| !d.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(state.seed ^ state.step as u64);
    let mut order: Vec<usize> = Vec::new();
    let mut trace = LossTrace::default();
    let mut dev_losses = Vec::new();
    let mut best: Option<(f64, usize, EncoderModel)> = None;

    let mut check_dev = |model: &EncoderModel, step: usize, best: &mut Option<(f64, usize, EncoderModel)>| -> Result<()> {
        if let Some(dev) = dev {
            let l = mean_loss(model, dev, loss)?;
            dev_losses.push((step, l));
            if best.as_ref().is_none_or(|b| l < b.0) {
                *best = Some((l, step, model.clone()));
            }
        }
        Ok(())
    };

    for local in 0..steps {
        if order.is_empty() {
            order = (0..batches.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let b = order.pop().expect("refilled above");
        let step = state.step;
        let (l, grads) = loss_for(&model, &batches[b], loss).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged { step },
            other => other,
        })?;
        if !l.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.steps.push((step, l));
        apply(&mut model, &grads, state, config);
        if config.eval_every > 0 && (local + 1) % config.eval_every == 0 && local + 1 < steps {
            check_dev(&model, state.step, &mut best)?;
        }
    }
    if steps > 0 {
        check_dev(&model, state.step, &mut best)?;
    }
    Ok(match best {
        Some((_, step, m)) => TrainOutcome {
            model: m,
            trace,
            best_step: Some(step),
            dev_losses,
        },
        None => TrainOutcome {
            model,
            trace,
            best_step: None,
            dev_losses,
        },
    })
}
