//! Diagnostics that temporarily observe labels or need the next cycle's
//! model. None of them changes the pools.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::influence::{
    build_hessian, decompose, pairwise_cosine_spread, per_sample_gradients, test_aggregate, total_influence,
    BoundRow, HessianContext, InfluenceLoss, TestAggregate,
};
use crate::model::{loss_and_grad, scoped_loss_and_grad, GradScope, Objective, TaskModel};
use crate::selection::{gradnorm_score, norm, Scheme, StrategyKind};

/// Table-1 style: how many of the `k` candidates with the largest
/// supervised gradient norm the strategy picked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub cycle: usize,
    pub strategy: StrategyKind,
    pub k: usize,
    pub candidates: usize,
    pub overlap: usize,
    /// `k² / candidates`, the mean overlap of a uniformly random pick.
    pub random_expectation: f64,
}

/// Table-2 style: agreement of the strategy's picks with the top-`k`
/// candidates by exact total influence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub cycle: usize,
    pub strategy: StrategyKind,
    pub k: usize,
    pub candidates: usize,
    pub overlap: usize,
    pub overlap_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub cycle: usize,
    pub sample_id: usize,
    pub target: f64,
    pub approx1: f64,
    pub approx2: f64,
    pub approx3: f64,
    pub scheme: Scheme,
}

impl BoundsRecord {
    pub fn new(cycle: usize, scheme: Scheme, row: BoundRow) -> Self {
        Self {
            cycle,
            sample_id: row.sample_id,
            target: row.target,
            approx1: row.approx1,
            approx2: row.approx2,
            approx3: row.approx3,
            scheme,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub cycle: usize,
    pub sample_id: usize,
    pub magnitude: f64,
    pub direction: f64,
    pub total_influence: f64,
    pub scheme: Scheme,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub cycle: usize,
    pub strategy: StrategyKind,
    pub mean_cosine: f64,
    pub sd_cosine: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecords {
    pub overlap: Vec<OverlapRow>,
    pub consistency: Vec<ConsistencyRow>,
    pub bounds: Vec<BoundsRecord>,
    pub decomposition: Vec<DecompositionRow>,
    pub diversity: Vec<DiversityRow>,
}

/// `||∇ CE(model(x_i), y_i)||` per row.
pub fn true_gradnorms(model: &TaskModel, xs: &[f64], labels: &[usize], scope: GradScope) -> Result<Vec<f64>> {
    let len = model.input_len();
    xs.par_chunks(len)
        .zip(labels.par_iter())
        .map(|(x, &y)| Ok(norm(&scoped_loss_and_grad(model, x, 1, Objective::CrossEntropy(&[y]), scope)?.1)))
        .collect()
}

/// Positions of the `k` largest values, ties by position.
pub fn top_k_positions(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

pub fn overlap_count(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|i| b.contains(i)).count()
}

/// Damped CE Hessian over a labeled set.
pub fn labeled_hessian(model: &TaskModel, x: &[f64], y: &[usize], damping: f64, cap: usize) -> Result<HessianContext> {
    build_hessian(model, x, Objective::CrossEntropy(y), damping, cap)
}

/// Signed total influence of each labeled candidate on the summed test
/// cross-entropy.
pub fn exact_targets(
    ctx: &HessianContext,
    model: &TaskModel,
    cand_x: &[f64],
    cand_y: &[usize],
    test_x: &[f64],
    test_y: &[usize],
) -> Result<Vec<f64>> {
    let agg = test_aggregate(ctx, model, test_x, InfluenceLoss::Labeled(test_y))?;
    per_sample_gradients(model, cand_x, InfluenceLoss::Labeled(cand_y))?
        .iter()
        .map(|g| total_influence(ctx, &agg, g))
        .collect()
}

/// Per-scheme gradients and test aggregate used by the bound terms. The
/// entropy scheme uses entropy on both sides; the expected scheme uses
/// cross-entropy with observed labels, since its label-free weighted
/// gradient is identically zero.
pub struct SchemeInfluence {
    pub scheme: Scheme,
    pub agg: TestAggregate,
}

impl SchemeInfluence {
    pub fn new(scheme: Scheme, ctx: &HessianContext, model: &TaskModel, test_x: &[f64], test_y: &[usize]) -> Result<Self> {
        let loss = match scheme {
            Scheme::Entropy => InfluenceLoss::Entropy,
            Scheme::Expected => InfluenceLoss::Labeled(test_y),
        };
        Ok(Self {
            scheme,
            agg: test_aggregate(ctx, model, test_x, loss)?,
        })
    }

    pub fn sample_gradient(&self, model: &TaskModel, x: &[f64], y: usize) -> Result<Vec<f64>> {
        let objective = match self.scheme {
            Scheme::Entropy => Objective::Entropy,
            Scheme::Expected => Objective::CrossEntropy(std::slice::from_ref(&y)),
        };
        Ok(loss_and_grad(model, x, 1, objective)?.1)
    }

    /// Bound rows for samples `(ids, xs, ys)`; `prev` is the older model.
    #[allow(clippy::too_many_arguments)]
    pub fn bounds(
        &self,
        ctx: &HessianContext,
        cycle: usize,
        prev: &TaskModel,
        next: &TaskModel,
        ids: &[usize],
        xs: &[f64],
        ys: &[usize],
    ) -> Result<(Vec<BoundsRecord>, Vec<DecompositionRow>)> {
        let len = next.input_len();
        let mut bounds = Vec::with_capacity(ids.len());
        let mut decomp = Vec::with_capacity(ids.len());
        for (k, (&id, &y)) in ids.iter().zip(ys).enumerate() {
            let x = &xs[k * len..(k + 1) * len];
            let g = self.sample_gradient(next, x, y)?;
            let prev_norm = gradnorm_score(prev, x, self.scheme, GradScope::All)?;
            let row = crate::influence::bound_terms(ctx, &self.agg, id, &g, prev_norm)?;
            let d = decompose(ctx, &self.agg, &g)?;
            bounds.push(BoundsRecord::new(cycle, self.scheme, row));
            decomp.push(DecompositionRow {
                cycle,
                sample_id: id,
                magnitude: d.magnitude,
                direction: d.direction,
                total_influence: row.target,
                scheme: self.scheme,
            });
        }
        Ok((bounds, decomp))
    }
}

/// Pairwise cosine spread of entropy-loss gradient directions.
pub fn gradient_diversity(model: &TaskModel, xs: &[f64]) -> Result<(f64, f64)> {
    let grads = per_sample_gradients(model, xs, InfluenceLoss::Entropy)?;
    Ok(pairwise_cosine_spread(&grads))
}
