use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::{clip_global_norm, learning_rate, Adam};
use crate::error::{Error, Result};
use crate::graph::{expand_entities, RelationInstance};
use crate::model::{argmax, loss_and_grads, Example, Model, ModelConfig, Vocab};
use crate::numerics::rng::{derive_seed, derived, streams};
use crate::numerics::ops;

fn default_lr() -> f64 {
    5e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_warmup() -> f64 {
    0.05
}
fn default_clip() -> Option<f64> {
    Some(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Fraction of all steps spent in linear warmup.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_clip")]
    pub max_grad_norm: Option<f64>,
    /// Held-out instances; `None` means min(200, 10% of the pool).
    #[serde(default)]
    pub validation_size: Option<usize>,
    /// Stop after the first epoch whose train accuracy reaches this value.
    #[serde(default)]
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 10,
            batch_size: 16,
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            warmup_fraction: default_warmup(),
            max_grad_norm: default_clip(),
            validation_size: None,
            target_train_accuracy: None,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("Adam betas must be in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must be in [0, 1]");
        }
        if self.max_grad_norm.is_some_and(|m| !(m > 0.0)) {
            return fail("max_grad_norm must be positive");
        }
        Ok(())
    }

    /// Validation size for a pool of `n` instances.
    pub fn resolved_validation_size(&self, n: usize) -> Result<usize> {
        let v = self.validation_size.unwrap_or_else(|| 200.min(n / 10));
        if v >= n {
            return Err(Error::Config(format!(
                "validation_size {v} leaves no training data out of {n} instances"
            )));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode (dropout on) batch loss.
    pub train_loss: f64,
    /// Evaluation-mode loss over the training examples after the epoch.
    pub eval_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: Vec<EpochRecord>,
    pub reached_target: bool,
}

pub const CURVE_HEADER: &str = "epoch,train_loss,eval_loss,train_accuracy,validation_accuracy";

/// Loss curve as CSV; floats use the shortest round-trip representation.
pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for r in curve {
        let val = r.validation_accuracy.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.eval_loss, r.train_accuracy, val
        );
    }
    out
}

/// Evaluation-mode mean loss and accuracy.
pub fn score_examples(model: &Model, examples: &[Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for ex in examples {
        let logits = model.logits(ex)?;
        loss += ops::cross_entropy(&logits, &[ex.label])?;
        if argmax(logits.data()) == ex.label {
            correct += 1;
        }
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Splits off the validation set (before entity expansion, so expansions
/// of one instance stay together) and expands both sides.
pub fn split_validation(
    dataset: &[RelationInstance],
    spec: &TrainSpec,
) -> Result<(Vec<RelationInstance>, Vec<RelationInstance>)> {
    let v = spec.resolved_validation_size(dataset.len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut derived(spec.seed, &[streams::VALIDATION]));
    let expand = |idx: &[usize]| -> Vec<RelationInstance> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        sorted.iter().flat_map(|&i| expand_entities(&dataset[i])).collect()
    };
    Ok((expand(&order[v..]), expand(&order[..v])))
}

/// Trains a fresh model. Deterministic for a fixed spec and dataset.
///
/// Returns [`Error::Diverged`] with the last finite model if a loss or
/// parameter becomes non-finite.
pub fn train(dataset: &[RelationInstance], spec: &TrainSpec, config: &ModelConfig) -> Result<TrainOutcome> {
    spec.validate()?;
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let (train_set, validation_set) = split_validation(dataset, spec)?;
    let vocab = Vocab::build(&train_set);
    let mut model = Model::new(config.clone(), vocab, spec.seed)?;
    let train_examples = train_set.iter().map(|i| model.prepare(i)).collect::<Result<Vec<_>>>()?;
    let validation_examples = validation_set.iter().map(|i| model.prepare(i)).collect::<Result<Vec<_>>>()?;

    let batches_per_epoch = train_examples.len().div_ceil(spec.batch_size);
    let total_steps = batches_per_epoch * spec.epochs;
    let warmup_steps = (spec.warmup_fraction * total_steps as f64).ceil() as usize;
    let mut adam = Adam::new(&model.params, spec.beta1, spec.beta2, spec.epsilon);
    let mut curve = Vec::new();
    let mut last_good = model.clone();
    let mut step = 0;
    let mut reached_target = false;

    for epoch in 1..=spec.epochs {
        let mut order: Vec<usize> = (0..train_examples.len()).collect();
        order.shuffle(&mut derived(spec.seed, &[streams::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(spec.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_examples[i]).collect();
            let dropout_seed = derive_seed(spec.seed, &[streams::DROPOUT, epoch as u64, b as u64]);
            let (loss, mut grads) = loss_and_grads(&model.params, &model.config, &batch, Some(dropout_seed))?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss,
                    last_good: Box::new(last_good),
                });
            }
            if let Some(max) = spec.max_grad_norm {
                clip_global_norm(&mut grads, max);
            }
            adam.update(&mut model.params, &grads, learning_rate(spec.learning_rate, step, warmup_steps));
            step += 1;
            loss_sum += loss * batch.len() as f64;
            if !model.params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                    last_good: Box::new(last_good),
                });
            }
        }
        let train_loss = loss_sum / train_examples.len() as f64;
        let (eval_loss, train_accuracy) = score_examples(&model, &train_examples)?;
        let validation_accuracy = if validation_examples.is_empty() {
            None
        } else {
            Some(score_examples(&model, &validation_examples)?.1)
        };
        curve.push(EpochRecord {
            epoch,
            train_loss,
            eval_loss,
            train_accuracy,
            validation_accuracy,
        });
        last_good = model.clone();
        if spec.target_train_accuracy.is_some_and(|t| train_accuracy >= t) {
            reached_target = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        curve,
        reached_target,
    })
}
