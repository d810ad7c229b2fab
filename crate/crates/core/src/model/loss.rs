use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

use super::TaskModel;

/// Loss used when differentiating a model on a batch.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// Mean cross-entropy against the given labels.
    CrossEntropy(&'a [usize]),
    /// Mean cross-entropy with every row assumed to have this label.
    Candidate(usize),
    /// Posterior-weighted sum of per-candidate cross-entropies, weights
    /// held constant.
    Expected,
    /// Shannon entropy of the softmax output.
    Entropy,
}

/// Which parameters a scoring gradient is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradScope {
    #[default]
    All,
    /// Final dense layer only; cheaper, not the reference behavior.
    LastLayer,
}

fn bind_scoped(model: &TaskModel, tape: &mut Tape, scope: GradScope) -> (Vec<Var>, std::ops::Range<usize>) {
    match scope {
        GradScope::All => (model.bind(tape), 0..model.params().len()),
        GradScope::LastLayer => {
            let n = model.params().len();
            (model.bind_last_layer(tape), n - 2..n)
        }
    }
}

/// Softmax class probabilities for a single sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior(Vec<f64>);

impl Posterior {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidTensor(format!("not a distribution: {probs:?}")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Builds the scalar loss node for `objective` on top of `logits`.
pub fn objective_node(tape: &mut Tape, logits: Var, objective: Objective<'_>) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    let [batch, classes] = shape[..] else {
        return Err(Error::Shape {
            op: "objective",
            shapes: vec![shape],
        });
    };
    match objective {
        Objective::CrossEntropy(labels) => {
            if labels.len() != batch {
                return Err(Error::Shape {
                    op: "cross_entropy",
                    shapes: vec![shape, vec![labels.len()]],
                });
            }
            let logp = tape.log_softmax(logits)?;
            let picked = tape.pick(logp, labels)?;
            let mean = tape.mean(picked);
            Ok(tape.scale(mean, -1.0))
        }
        Objective::Candidate(label) => {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            let logp = tape.log_softmax(logits)?;
            let picked = tape.pick(logp, &vec![label; batch])?;
            let mean = tape.mean(picked);
            Ok(tape.scale(mean, -1.0))
        }
        Objective::Expected => {
            let logp = tape.log_softmax(logits)?;
            let weights: Vec<f64> = tape.value(logp).data().iter().map(|z| z.exp()).collect();
            let w = tape.constant(Tensor::from_parts(vec![batch, classes], weights));
            let prod = tape.mul(w, logp)?;
            let total = tape.sum(prod);
            Ok(tape.scale(total, -1.0 / batch as f64))
        }
        Objective::Entropy => {
            let logp = tape.log_softmax(logits)?;
            let p = tape.softmax(logits)?;
            let prod = tape.mul(p, logp)?;
            let total = tape.sum(prod);
            Ok(tape.scale(total, -1.0 / batch as f64))
        }
    }
}

/// Softmax of the model logits for one sample.
pub fn predict_posterior(model: &TaskModel, x: &[f64]) -> Result<Posterior> {
    let logits = model.logits(x, 1)?;
    let mut probs = logits.into_data();
    crate::autodiff::softmax_in_place(&mut probs);
    Ok(Posterior(probs))
}

/// Posteriors for `batch` samples.
pub fn predict_posteriors(model: &TaskModel, x: &[f64], batch: usize) -> Result<Vec<Posterior>> {
    let logits = model.logits(x, batch)?;
    Ok(logits
        .rows()
        .map(|row| {
            let mut p = row.to_vec();
            crate::autodiff::softmax_in_place(&mut p);
            Posterior(p)
        })
        .collect())
}

fn loss_value(model: &TaskModel, x: &[f64], objective: Objective<'_>) -> Result<f64> {
    let mut tape = Tape::new();
    let params = model.bind_frozen(&mut tape);
    let logits = model.forward(&mut tape, &params, x, 1)?;
    let out = objective_node(&mut tape, logits, objective)?;
    Ok(tape.value(out).item())
}

/// `-log P(label | x)`.
pub fn cross_entropy(model: &TaskModel, x: &[f64], label: usize) -> Result<f64> {
    if label >= model.classes() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.classes(),
        });
    }
    loss_value(model, x, Objective::CrossEntropy(&[label]))
}

/// `sum_i P(y_i|x) * L_i` with `L_i` the cross-entropy under candidate `i`.
pub fn expected_loss(model: &TaskModel, x: &[f64]) -> Result<f64> {
    loss_value(model, x, Objective::Expected)
}

/// `-sum_i P(y_i|x) log P(y_i|x)`.
pub fn entropy_loss(model: &TaskModel, x: &[f64]) -> Result<f64> {
    loss_value(model, x, Objective::Entropy)
}

/// Loss value and flat parameter gradient of `objective` over a batch.
pub fn loss_and_grad(
    model: &TaskModel,
    x: &[f64],
    batch: usize,
    objective: Objective<'_>,
) -> Result<(f64, Vec<f64>)> {
    scoped_loss_and_grad(model, x, batch, objective, GradScope::All)
}

/// As [`loss_and_grad`], with the gradient restricted to `scope`.
pub fn scoped_loss_and_grad(
    model: &TaskModel,
    x: &[f64],
    batch: usize,
    objective: Objective<'_>,
    scope: GradScope,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let (params, live) = bind_scoped(model, &mut tape, scope);
    let logits = model.forward(&mut tape, &params, x, batch)?;
    let out = objective_node(&mut tape, logits, objective)?;
    tape.backward(out)?;
    Ok((tape.value(out).item(), flatten_grads(&tape, &params[live])?))
}

pub(crate) fn flatten_grads(tape: &Tape, params: &[Var]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, &p) in params.iter().enumerate() {
        out.extend_from_slice(tape.grad(p).ok_or(Error::MissingGrad(i))?);
    }
    Ok(out)
}

/// Per-candidate cross-entropy gradients of one sample, sharing a single
/// forward pass. Returns the posterior alongside.
pub fn candidate_gradients(model: &TaskModel, x: &[f64]) -> Result<(Posterior, Vec<Vec<f64>>)> {
    scoped_candidate_gradients(model, x, GradScope::All)
}

pub fn scoped_candidate_gradients(
    model: &TaskModel,
    x: &[f64],
    scope: GradScope,
) -> Result<(Posterior, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let (params, live) = bind_scoped(model, &mut tape, scope);
    let logits = model.forward(&mut tape, &params, x, 1)?;
    let logp = tape.log_softmax(logits)?;
    let probs: Vec<f64> = tape.value(logp).data().iter().map(|z| z.exp()).collect();
    let mut grads = Vec::with_capacity(model.classes());
    for label in 0..model.classes() {
        let picked = tape.pick(logp, &[label])?;
        let loss = tape.scale(picked, -1.0);
        let loss = tape.sum(loss);
        tape.backward(loss)?;
        grads.push(flatten_grads(&tape, &params[live.clone()])?);
        tape.reset_grads();
    }
    Ok((Posterior(probs), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    /// Logistic model on a 1-d input of 0.0 whose logits equal the bias.
    fn bias_model(bias: &[f64]) -> TaskModel {
        let n = bias.len();
        let mut flat = vec![0.0; n];
        flat.extend_from_slice(bias);
        TaskModel::from_flat(Architecture::logistic(1, n), &flat).unwrap()
    }

    #[test]
    fn posterior_closed_forms() {
        let p = predict_posterior(&bias_model(&[0.0; 4]), &[0.0]).unwrap();
        for &v in p.probs() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let p = predict_posterior(&bias_model(&[3f64.ln(), 0.0]), &[0.0]).unwrap();
        assert!((p.probs()[0] - 0.75).abs() < 1e-15);
        assert!((p.probs()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn posterior_rejects_non_distribution() {
        assert!(Posterior::new(vec![0.5, 0.6]).is_err());
        assert!(Posterior::new(vec![-0.1, 1.1]).is_err());
        assert!(Posterior::new(vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let uniform = bias_model(&[0.0; 10]);
        assert!((cross_entropy(&uniform, &[0.0], 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        let half = bias_model(&[0.0, 0.0]);
        assert!((cross_entropy(&half, &[0.0], 1).unwrap() - 2f64.ln()).abs() < 1e-12);
        let certain = bias_model(&[800.0, 0.0]);
        assert_eq!(cross_entropy(&certain, &[0.0], 0).unwrap(), 0.0);
        assert!(matches!(
            cross_entropy(&half, &[0.0], 2),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn expected_and_entropy_closed_forms() {
        let one_hot = bias_model(&[900.0, 0.0, 0.0]);
        assert_eq!(expected_loss(&one_hot, &[0.0]).unwrap(), 0.0);
        assert_eq!(entropy_loss(&one_hot, &[0.0]).unwrap(), 0.0);

        let uniform = bias_model(&[0.0; 19]);
        assert!((entropy_loss(&uniform, &[0.0]).unwrap() - 19f64.ln()).abs() < 1e-12);
        assert!((expected_loss(&uniform, &[0.0]).unwrap() - 19f64.ln()).abs() < 1e-12);

        let skewed = bias_model(&[9f64.ln(), 0.0]);
        let want = 0.9 * -(0.9f64.ln()) + 0.1 * -(0.1f64.ln());
        assert!((want - 0.325083).abs() < 1e-6);
        assert!((expected_loss(&skewed, &[0.0]).unwrap() - want).abs() < 1e-12);
        assert!((entropy_loss(&bias_model(&[0.0, 0.0]), &[0.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn last_layer_scope_is_a_slice_of_the_full_gradient() {
        let model = TaskModel::new(Architecture::mlp(3, &[5], 3), 4).unwrap();
        let x = [0.1, 0.7, -0.4];
        let (_, full) = loss_and_grad(&model, &x, 1, Objective::Entropy).unwrap();
        let (_, last) = scoped_loss_and_grad(&model, &x, 1, Objective::Entropy, GradScope::LastLayer).unwrap();
        assert_eq!(&full[model.last_layer_range()], &last[..]);
    }

    #[test]
    fn candidate_gradients_match_individual_backward() {
        let model = TaskModel::new(Architecture::mlp(3, &[4], 3), 11).unwrap();
        let x = [0.3, -1.2, 0.8];
        let (post, grads) = candidate_gradients(&model, &x).unwrap();
        assert_eq!(post.classes(), 3);
        for (label, g) in grads.iter().enumerate() {
            let (_, direct) = loss_and_grad(&model, &x, 1, Objective::Candidate(label)).unwrap();
            assert_eq!(g, &direct);
        }
    }
}
