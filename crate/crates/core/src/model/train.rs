use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{argmax, flatten_grads, objective_node, Objective};
use super::TaskModel;
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::rng::stream;

/// SGD schedule: momentum, weight decay and a single step decay of the
/// learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate from `decay_epoch` on.
    pub lr_decay: f64,
    pub decay_epoch: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            lr_decay: 0.1,
            decay_epoch: 24,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::config(format!("train.{field}"), reason));
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        // zero is accepted as a degenerate "frozen" schedule
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be finite and non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", "must be in (0, 1]");
        }
        if self.decay_epoch > self.epochs {
            return bad("decay_epoch", "must not exceed epochs");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be finite and non-negative");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch && self.decay_epoch > 0 {
            self.learning_rate * self.lr_decay
        } else {
            self.learning_rate
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TaskModel,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mutable SGD state; lets callers interleave epochs with measurements.
pub struct Trainer<'a> {
    config: &'a TrainConfig,
    x: &'a [f64],
    labels: &'a [usize],
    velocity: Vec<Vec<f64>>,
    order: Vec<usize>,
    rng: rand_chacha::ChaCha8Rng,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &TaskModel, x: &'a [f64], labels: &'a [usize], config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        if labels.is_empty() {
            return Err(Error::Empty("labeled pool"));
        }
        if x.len() != labels.len() * model.input_len() {
            return Err(Error::Dimension {
                expected: labels.len() * model.input_len(),
                got: x.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= model.classes()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: model.classes(),
            });
        }
        Ok(Self {
            config,
            x,
            labels,
            velocity: model.params().iter().map(|p| vec![0.0; p.numel()]).collect(),
            order: (0..labels.len()).collect(),
            rng: stream(config.seed, "shuffle", 0),
            epoch: 0,
        })
    }

    /// Runs one epoch in place; returns the mean minibatch loss.
    pub fn epoch(&mut self, model: &mut TaskModel) -> Result<f64> {
        let lr = self.config.lr_at(self.epoch);
        self.order.shuffle(&mut self.rng);
        let len = model.input_len();
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut xb = Vec::new();
        let mut yb = Vec::new();
        let order = std::mem::take(&mut self.order);
        for chunk in order.chunks(self.config.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(&self.x[i * len..(i + 1) * len]);
                yb.push(self.labels[i]);
            }
            let mut tape = Tape::new();
            let params = model.bind(&mut tape);
            let logits = model.forward(&mut tape, &params, &xb, chunk.len())?;
            let loss = objective_node(&mut tape, logits, Objective::CrossEntropy(&yb))?;
            tape.backward(loss)?;
            total += tape.value(loss).item();
            batches += 1;
            let grads = flatten_grads(&tape, &params)?;
            self.step(model, &grads, lr);
        }
        self.order = order;
        self.epoch += 1;
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        Ok(mean)
    }

    fn step(&mut self, model: &mut TaskModel, grads: &[f64], lr: f64) {
        let (mu, wd) = (self.config.momentum, self.config.weight_decay);
        let mut offset = 0;
        for (p, v) in model.params_mut().iter_mut().zip(&mut self.velocity) {
            let n = p.numel();
            let g = &grads[offset..offset + n];
            for ((w, vel), &gi) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                let d = gi + wd * *w;
                *vel = mu * *vel + d;
                *w -= lr * *vel;
            }
            offset += n;
        }
    }
}

/// Minibatch SGD on mean cross-entropy over `(x, labels)`.
///
/// Shuffling comes from the `shuffle` stream of `config.seed`, and batch
/// gradients are reduced in a fixed order, so a rerun is bit-identical.
pub fn train(mut model: TaskModel, x: &[f64], labels: &[usize], config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(&model, x, labels, config)?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        epoch_losses.push(trainer.epoch(&mut model)?);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub predictions: Vec<usize>,
}

const EVAL_CHUNK: usize = 256;

/// Argmax accuracy (ties to the lowest class) and mean cross-entropy.
pub fn evaluate(model: &TaskModel, x: &[f64], labels: &[usize]) -> Result<Evaluation> {
    if labels.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let len = model.input_len();
    if x.len() != labels.len() * len {
        return Err(Error::Dimension {
            expected: labels.len() * len,
            got: x.len(),
        });
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(labels.len());
    for (xc, yc) in x.chunks(EVAL_CHUNK * len).zip(labels.chunks(EVAL_CHUNK)) {
        let logits = model.logits(xc, yc.len())?;
        for (row, &y) in logits.rows().zip(yc) {
            if y >= row.len() {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: row.len(),
                });
            }
            let pred = argmax(row);
            predictions.push(pred);
            correct += usize::from(pred == y);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[y];
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        mean_loss: loss / labels.len() as f64,
        predictions,
    })
}

/// Accuracy per true class; `None` for classes absent from `labels`.
pub fn per_class_accuracy(predictions: &[usize], labels: &[usize], classes: usize) -> Vec<Option<f64>> {
    let mut hit = vec![0usize; classes];
    let mut count = vec![0usize; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        count[y] += 1;
        hit[y] += usize::from(p == y);
    }
    hit.iter()
        .zip(&count)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect()
}

/// Full-batch gradient of the mean cross-entropy over `(x, labels)`.
pub fn full_batch_gradient(model: &TaskModel, x: &[f64], labels: &[usize]) -> Result<Vec<f64>> {
    let len = model.input_len();
    let n = labels.len();
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    let mut total = vec![0.0; model.param_count()];
    for (xc, yc) in x.chunks(EVAL_CHUNK * len).zip(labels.chunks(EVAL_CHUNK)) {
        let (_, g) = super::loss_and_grad(model, xc, yc.len(), Objective::CrossEntropy(yc))?;
        let w = yc.len() as f64 / n as f64;
        total.iter_mut().zip(&g).for_each(|(t, gi)| *t += w * gi);
    }
    Ok(total)
}
