//! Influence of training samples on held-out loss, computed exactly for
//! small models through a damped, finite-differenced Hessian.
//!
//! With `a = (H + λI)^{-1} Σ_j ∇L(x_j)` over a test set and `n` labeled
//! samples, the total influence of `x` is `(1/n) ∇L(x)·a`. The bound terms
//! relax it step by step: its absolute value, then Cauchy-Schwarz
//! `(1/n) ||∇L(x)|| ||a||`, then the same with the gradient taken at the
//! previous model.

mod hessian;
mod loo;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use hessian::{build_hessian, hessian_from_gradient, HessianContext, DEFAULT_CAP, DEFAULT_DAMPING, FD_STEP};
pub use loo::{fit_regularized, loo_retrain_oracle, LooConfig};

use crate::error::{Error, Result};
use crate::model::{loss_and_grad, Objective, TaskModel};
use crate::selection::norm;

/// Per-sample loss whose gradients enter the influence expressions.
#[derive(Clone, Copy, Debug)]
pub enum InfluenceLoss<'a> {
    /// Cross-entropy against one label per row.
    Labeled(&'a [usize]),
    Entropy,
}

/// One parameter gradient per row of `xs`.
pub fn per_sample_gradients(model: &TaskModel, xs: &[f64], loss: InfluenceLoss<'_>) -> Result<Vec<Vec<f64>>> {
    let len = model.input_len();
    let rows = xs.len() / len;
    if let InfluenceLoss::Labeled(labels) = loss {
        if labels.len() != rows {
            return Err(Error::Dimension {
                expected: rows,
                got: labels.len(),
            });
        }
    }
    xs.par_chunks(len)
        .enumerate()
        .map(|(i, x)| {
            let (_, g) = match loss {
                InfluenceLoss::Labeled(labels) => loss_and_grad(model, x, 1, Objective::CrossEntropy(&labels[i..i + 1]))?,
                InfluenceLoss::Entropy => loss_and_grad(model, x, 1, Objective::Entropy)?,
            };
            Ok(g)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1/n) g_testᵀ (H + λI)^{-1} g_x`.
pub fn influence_from_gradients(ctx: &HessianContext, g_x: &[f64], g_test: &[f64]) -> Result<f64> {
    ctx.check_dim(g_test)?;
    Ok(dot(g_test, &ctx.solve(g_x)?) / ctx.n() as f64)
}

/// Influence of labeled training sample `(x, y)` on the cross-entropy of
/// test sample `(x_test, y_test)`.
pub fn influence_loss(
    ctx: &HessianContext,
    model: &TaskModel,
    x: &[f64],
    y: usize,
    x_test: &[f64],
    y_test: usize,
) -> Result<f64> {
    let (_, g_x) = loss_and_grad(model, x, 1, Objective::CrossEntropy(&[y]))?;
    let (_, g_t) = loss_and_grad(model, x_test, 1, Objective::CrossEntropy(&[y_test]))?;
    influence_from_gradients(ctx, &g_x, &g_t)
}

/// `(H + λI)^{-1} Σ_j ∇L(x_j)` over a test set.
#[derive(Clone, Debug)]
pub struct TestAggregate {
    pub vector: Vec<f64>,
    pub norm: f64,
    pub count: usize,
}

pub fn aggregate_from_gradients(ctx: &HessianContext, grads: &[Vec<f64>]) -> Result<TestAggregate> {
    let mut sum = vec![0.0; ctx.dim()];
    for g in grads {
        ctx.check_dim(g)?;
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    let vector = ctx.solve(&sum)?;
    Ok(TestAggregate {
        norm: norm(&vector),
        vector,
        count: grads.len(),
    })
}

pub fn test_aggregate(
    ctx: &HessianContext,
    model: &TaskModel,
    test_x: &[f64],
    loss: InfluenceLoss<'_>,
) -> Result<TestAggregate> {
    aggregate_from_gradients(ctx, &per_sample_gradients(model, test_x, loss)?)
}

/// Sum of the influence of `x` over the test set, through the aggregate.
pub fn total_influence(ctx: &HessianContext, agg: &TestAggregate, g_x: &[f64]) -> Result<f64> {
    ctx.check_dim(g_x)?;
    Ok(dot(g_x, &agg.vector) / ctx.n() as f64)
}

/// Same quantity by explicit per-test-sample summation.
pub fn total_influence_explicit(ctx: &HessianContext, g_x: &[f64], test_grads: &[Vec<f64>]) -> Result<f64> {
    test_grads
        .iter()
        .map(|g| {
            let h_inv_g = ctx.solve(g)?;
            Ok(dot(g_x, &h_inv_g) / ctx.n() as f64)
        })
        .sum()
}

/// One sample's bound-chain terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub sample_id: usize,
    pub target: f64,
    pub approx1: f64,
    pub approx2: f64,
    pub approx3: f64,
}

/// `g_next` is the sample's loss gradient at the newer model; `prev_norm`
/// is its gradient-norm score at the older one.
pub fn bound_terms(
    ctx: &HessianContext,
    agg: &TestAggregate,
    sample_id: usize,
    g_next: &[f64],
    prev_norm: f64,
) -> Result<BoundRow> {
    let target = total_influence(ctx, agg, g_next)?;
    let n = ctx.n() as f64;
    Ok(BoundRow {
        sample_id,
        target,
        approx1: target.abs(),
        approx2: norm(g_next) * agg.norm / n,
        approx3: prev_norm * agg.norm / n,
    })
}

/// Total influence split into the gradient magnitude `||g_x||` and the
/// alignment `(1/n) Σ_j ⟨H^{-1} g_j, g_x / ||g_x||⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub magnitude: f64,
    pub direction: f64,
}

impl Decomposition {
    pub fn product(&self) -> f64 {
        self.magnitude * self.direction
    }
}

pub fn decompose(ctx: &HessianContext, agg: &TestAggregate, g_x: &[f64]) -> Result<Decomposition> {
    ctx.check_dim(g_x)?;
    let magnitude = norm(g_x);
    let direction = if magnitude == 0.0 {
        0.0
    } else {
        dot(g_x, &agg.vector) / (magnitude * ctx.n() as f64)
    };
    Ok(Decomposition { magnitude, direction })
}

/// Mean and sample standard deviation of pairwise cosine similarities;
/// zero vectors are skipped.
pub fn pairwise_cosine_spread(grads: &[Vec<f64>]) -> (f64, f64) {
    let units: Vec<Vec<f64>> = grads
        .iter()
        .filter_map(|g| {
            let n = norm(g);
            (n > 0.0).then(|| g.iter().map(|v| v / n).collect())
        })
        .collect();
    let mut cos = Vec::new();
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            cos.push(dot(&units[i], &units[j]));
        }
    }
    (crate::stats::mean(&cos), crate::stats::std_dev(&cos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::rng::stream;
    use rand::Rng;

    fn setup() -> (TaskModel, HessianContext, Vec<f64>, Vec<usize>) {
        let mut rng = stream(4, "t", 0);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let model = TaskModel::new(Architecture::logistic(2, 3), 3).unwrap();
        let ctx = build_hessian(&model, &x, Objective::CrossEntropy(&y), 0.01, DEFAULT_CAP).unwrap();
        (model, ctx, x, y)
    }

    #[test]
    fn zero_gradient_has_zero_influence_and_self_influence_is_positive() {
        let (model, ctx, x, y) = setup();
        let zero = vec![0.0; ctx.dim()];
        let (_, g) = loss_and_grad(&model, &x[0..2], 1, Objective::CrossEntropy(&y[0..1])).unwrap();
        assert_eq!(influence_from_gradients(&ctx, &zero, &g).unwrap(), 0.0);
        assert!(influence_loss(&ctx, &model, &x[0..2], y[0], &x[0..2], y[0]).unwrap() > 0.0);
        assert!(matches!(
            influence_from_gradients(&ctx, &g[..3], &g),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn aggregate_matches_explicit_summation() {
        let (model, ctx, x, y) = setup();
        let test = per_sample_gradients(&model, &x[..20], InfluenceLoss::Labeled(&y[..10])).unwrap();
        let agg = aggregate_from_gradients(&ctx, &test).unwrap();
        let single = aggregate_from_gradients(&ctx, &test[..1]).unwrap();
        let double = aggregate_from_gradients(&ctx, &[test[0].clone(), test[0].clone()]).unwrap();
        for i in 0..20 {
            let (_, g) = loss_and_grad(&model, &x[2 * i..2 * i + 2], 1, Objective::CrossEntropy(&y[i..i + 1])).unwrap();
            let a = total_influence(&ctx, &agg, &g).unwrap();
            let b = total_influence_explicit(&ctx, &g, &test).unwrap();
            assert!((a - b).abs() < 1e-9);
            let one = influence_from_gradients(&ctx, &g, &test[0]).unwrap();
            assert!((total_influence(&ctx, &single, &g).unwrap() - one).abs() < 1e-12);
            assert!((total_influence(&ctx, &double, &g).unwrap() - 2.0 * one).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_chain_and_decomposition() {
        let (model, ctx, x, _) = setup();
        let test = per_sample_gradients(&model, &x[..20], InfluenceLoss::Entropy).unwrap();
        let agg = aggregate_from_gradients(&ctx, &test).unwrap();
        let zero = bound_terms(&ctx, &agg, 0, &vec![0.0; ctx.dim()], 0.0).unwrap();
        assert_eq!((zero.target, zero.approx1, zero.approx2, zero.approx3), (0.0, 0.0, 0.0, 0.0));
        let grads = per_sample_gradients(&model, &x, InfluenceLoss::Entropy).unwrap();
        for (i, g) in grads.iter().enumerate() {
            let row = bound_terms(&ctx, &agg, i, g, norm(g)).unwrap();
            assert_eq!(row.approx1, row.target.abs());
            assert!(row.approx2 >= row.approx1 - 1e-9);
            let d = decompose(&ctx, &agg, g).unwrap();
            assert!((d.product() - row.target).abs() < 1e-9);
        }
        let d = decompose(&ctx, &agg, &vec![0.0; ctx.dim()]).unwrap();
        assert_eq!(d.product(), 0.0);
    }

    #[test]
    fn cosine_spread_of_parallel_vectors() {
        let (m, s) = pairwise_cosine_spread(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 0.0]]);
        assert!((m - 1.0).abs() < 1e-12);
        assert_eq!(s, 0.0);
    }
}
