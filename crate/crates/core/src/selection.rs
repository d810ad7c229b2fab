//! Acquisition scores and top-K selection.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    predict_posteriors, scoped_candidate_gradients, scoped_loss_and_grad, GradScope, Objective, Posterior, TaskModel,
};
use crate::rng::stream;
use crate::stats::spearman;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    ExpectedGradnorm,
    EntropyGradnorm,
    Random,
    MaxEntropy,
    Margin,
    LeastConfidence,
    KcenterGreedy,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::ExpectedGradnorm,
        StrategyKind::EntropyGradnorm,
        StrategyKind::Random,
        StrategyKind::MaxEntropy,
        StrategyKind::Margin,
        StrategyKind::LeastConfidence,
        StrategyKind::KcenterGreedy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ExpectedGradnorm => "expected-gradnorm",
            StrategyKind::EntropyGradnorm => "entropy-gradnorm",
            StrategyKind::Random => "random",
            StrategyKind::MaxEntropy => "max-entropy",
            StrategyKind::Margin => "margin",
            StrategyKind::LeastConfidence => "least-confidence",
            StrategyKind::KcenterGreedy => "kcenter-greedy",
        }
    }

    pub fn is_gradnorm(self) -> bool {
        matches!(self, StrategyKind::ExpectedGradnorm | StrategyKind::EntropyGradnorm)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{s}`")))
    }
}

/// The two gradient-norm schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Expected,
    Entropy,
}

impl Scheme {
    pub const BOTH: [Scheme; 2] = [Scheme::Expected, Scheme::Entropy];

    pub fn strategy(self) -> StrategyKind {
        match self {
            Scheme::Expected => StrategyKind::ExpectedGradnorm,
            Scheme::Entropy => StrategyKind::EntropyGradnorm,
        }
    }

    pub fn of(kind: StrategyKind) -> Option<Scheme> {
        match kind {
            StrategyKind::ExpectedGradnorm => Some(Scheme::Expected),
            StrategyKind::EntropyGradnorm => Some(Scheme::Entropy),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub index: usize,
    pub score: f64,
    pub strategy: StrategyKind,
}

/// `sum_i P(y_i|x) * ||grad L_i(x)||`: the posterior-weighted norm of the
/// per-candidate cross-entropy gradients.
///
/// The norm of the weighted *sum* of gradients is not usable here: for a
/// softmax output the candidate gradients, weighted by the posterior, sum
/// to exactly zero.
pub fn score_expected_gradnorm(model: &TaskModel, x: &[f64]) -> Result<f64> {
    gradnorm_score(model, x, Scheme::Expected, GradScope::All)
}

/// `||grad H(P(.|x))||` with the entropy differentiated through the softmax.
pub fn score_entropy_gradnorm(model: &TaskModel, x: &[f64]) -> Result<f64> {
    gradnorm_score(model, x, Scheme::Entropy, GradScope::All)
}

pub fn gradnorm_score(model: &TaskModel, x: &[f64], scheme: Scheme, scope: GradScope) -> Result<f64> {
    let score = match scheme {
        Scheme::Expected => {
            let (post, grads) = scoped_candidate_gradients(model, x, scope)?;
            post.probs().iter().zip(&grads).map(|(p, g)| p * norm(g)).sum()
        }
        Scheme::Entropy => norm(&scoped_loss_and_grad(model, x, 1, Objective::Entropy, scope)?.1),
    };
    if !score.is_finite() {
        return Err(Error::NonFinite("gradient-norm score"));
    }
    Ok(score)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Negative gap between the two most probable classes.
pub fn margin(posterior: &Posterior) -> f64 {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in posterior.probs() {
        if p > a {
            b = a;
            a = p;
        } else if p > b {
            b = p;
        }
    }
    if b == f64::NEG_INFINITY {
        b = 0.0;
    }
    -(a - b)
}

pub fn least_confidence(posterior: &Posterior) -> f64 {
    1.0 - posterior.probs()[posterior.argmax()]
}

/// Settings shared by every scoring call within one selection.
#[derive(Clone, Copy, Debug)]
pub struct ScoreContext {
    pub seed: u64,
    pub cycle: usize,
    pub scope: GradScope,
}

/// Per-sample scores for every row of `xs` (rows of `input_len` values).
/// `kcenter-greedy` has no per-sample score; use [`kcenter_greedy`].
pub fn score_candidates(kind: StrategyKind, model: &TaskModel, xs: &[f64], ctx: &ScoreContext) -> Result<Vec<f64>> {
    let len = model.input_len();
    if xs.len() % len != 0 {
        return Err(Error::Dimension {
            expected: len,
            got: xs.len() % len,
        });
    }
    let rows = xs.len() / len;
    let scores: Vec<f64> = match kind {
        StrategyKind::ExpectedGradnorm | StrategyKind::EntropyGradnorm => {
            let scheme = Scheme::of(kind).unwrap();
            xs.par_chunks(len)
                .map(|x| gradnorm_score(model, x, scheme, ctx.scope))
                .collect::<Result<_>>()?
        }
        StrategyKind::Random => {
            let mut rng = stream(ctx.seed, "random-score", ctx.cycle as u64);
            (0..rows).map(|_| rng.random::<f64>()).collect()
        }
        StrategyKind::MaxEntropy | StrategyKind::Margin | StrategyKind::LeastConfidence => {
            let posts: Vec<Posterior> = if rows == 0 { Vec::new() } else { predict_posteriors(model, xs, rows)? };
            posts
                .iter()
                .map(|p| match kind {
                    StrategyKind::MaxEntropy => p.entropy(),
                    StrategyKind::Margin => margin(p),
                    _ => least_confidence(p),
                })
                .collect()
        }
        StrategyKind::KcenterGreedy => {
            return Err(Error::config("strategy", "kcenter-greedy selects iteratively and has no per-sample score"))
        }
    };
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("selection score"));
    }
    Ok(scores)
}

/// Indices of the `k` highest scores, descending, ties by ascending index.
pub fn select_top_k(scores: &[SelectionScore], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Budget {
            requested: k,
            available: scores.len(),
        });
    }
    let mut order: Vec<&SelectionScore> = scores.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    Ok(order[..k].iter().map(|s| s.index).collect())
}

/// Farthest-first traversal: repeatedly picks the candidate whose
/// Euclidean distance to the nearest labeled (or already picked) point is
/// largest. Returns `(candidate position, distance at pick time)`.
pub fn kcenter_greedy(cand_x: &[f64], labeled_x: &[f64], input_len: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    let n = cand_x.len() / input_len;
    if k == 0 || k > n {
        return Err(Error::Budget {
            requested: k,
            available: n,
        });
    }
    if labeled_x.is_empty() {
        return Err(Error::Empty("labeled pool"));
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    let mut nearest: Vec<f64> = cand_x
        .par_chunks(input_len)
        .map(|c| {
            labeled_x
                .chunks(input_len)
                .map(|l| dist2(c, l))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = usize::MAX;
        for (i, &d) in nearest.iter().enumerate() {
            if d >= 0.0 && (best == usize::MAX || d > nearest[best]) {
                best = i;
            }
        }
        picked.push((best, nearest[best].sqrt()));
        let center = &cand_x[best * input_len..(best + 1) * input_len];
        for (i, c) in cand_x.chunks(input_len).enumerate() {
            if nearest[i] >= 0.0 {
                nearest[i] = nearest[i].min(dist2(c, center));
            }
        }
        // picked points are retired
        nearest[best] = -1.0;
    }
    Ok(picked)
}

/// Runs strategy `kind` over candidates `ids` (rows of `cand_x`) and
/// returns the `k` picks in selection order with their scores.
pub fn select(
    kind: StrategyKind,
    model: &TaskModel,
    ids: &[usize],
    cand_x: &[f64],
    labeled_x: &[f64],
    k: usize,
    ctx: &ScoreContext,
) -> Result<Vec<SelectionScore>> {
    if kind == StrategyKind::KcenterGreedy {
        let picks = kcenter_greedy(cand_x, labeled_x, model.input_len(), k)?;
        return Ok(picks
            .into_iter()
            .map(|(pos, d)| SelectionScore {
                index: ids[pos],
                score: d,
                strategy: kind,
            })
            .collect());
    }
    let scores = score_candidates(kind, model, cand_x, ctx)?;
    let all: Vec<SelectionScore> = ids
        .iter()
        .zip(scores)
        .map(|(&index, score)| SelectionScore {
            index,
            score,
            strategy: kind,
        })
        .collect();
    let top = select_top_k(&all, k)?;
    let lookup: std::collections::HashMap<usize, f64> = all.iter().map(|s| (s.index, s.score)).collect();
    Ok(top
        .into_iter()
        .map(|index| SelectionScore {
            index,
            score: lookup[&index],
            strategy: kind,
        })
        .collect())
}

/// Spearman correlation between the two schemes' scores over `xs`.
pub fn scheme_rank_correlation(model: &TaskModel, xs: &[f64]) -> Result<f64> {
    let ctx = ScoreContext {
        seed: 0,
        cycle: 0,
        scope: GradScope::All,
    };
    let a = score_candidates(StrategyKind::ExpectedGradnorm, model, xs, &ctx)?;
    let b = score_candidates(StrategyKind::EntropyGradnorm, model, xs, &ctx)?;
    Ok(spearman(&a, &b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::central_difference;
    use crate::model::{cross_entropy, entropy_loss, loss_and_grad, Architecture};
    use proptest::prelude::*;

    fn ss(scores: &[f64]) -> Vec<SelectionScore> {
        scores
            .iter()
            .enumerate()
            .map(|(index, &score)| SelectionScore {
                index,
                score,
                strategy: StrategyKind::Random,
            })
            .collect()
    }

    fn bias_model(bias: &[f64]) -> TaskModel {
        let n = bias.len();
        let mut flat = vec![0.0; n];
        flat.extend_from_slice(bias);
        TaskModel::from_flat(Architecture::logistic(1, n), &flat).unwrap()
    }

    /// Central-difference gradient of `f` over all parameters.
    fn fd_grad(model: &TaskModel, f: impl Fn(&TaskModel) -> f64) -> Vec<f64> {
        let theta = model.flat_params();
        let mut probe = model.clone();
        (0..theta.len())
            .map(|i| {
                central_difference(
                    |w| {
                        probe.set_flat_params(w)?;
                        Ok(f(&probe))
                    },
                    &theta,
                    i,
                    1e-5,
                )
                .unwrap()
            })
            .collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(select_top_k(&ss(&[0.1, 0.9, 0.5]), 2).unwrap(), vec![1, 2]);
        assert_eq!(select_top_k(&ss(&[0.3; 5]), 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_top_k(&ss(&[0.2, 0.7, 0.4]), 3).unwrap(), vec![1, 2, 0]);
        assert!(matches!(
            select_top_k(&ss(&[0.1, 0.2]), 3),
            Err(Error::Budget { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn baseline_definitions() {
        let p = Posterior::new(vec![0.6, 0.4]).unwrap();
        assert!((margin(&p) + 0.2).abs() < 1e-12);
        let u = Posterior::new(vec![0.1; 10]).unwrap();
        assert!((least_confidence(&u) - 0.9).abs() < 1e-12);
        let picks = kcenter_greedy(&[0.0, 1.0, 2.0], &[0.0], 1, 1).unwrap();
        assert_eq!(picks[0], (2, 2.0));
        let picks = kcenter_greedy(&[0.0, 1.0, 2.0, 5.0], &[0.0], 1, 3).unwrap();
        assert_eq!(picks.iter().map(|p| p.0).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert!("vaal".parse::<StrategyKind>().is_err());
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
    }

    #[test]
    fn saturated_and_uniform_posteriors_score_zero() {
        let saturated = bias_model(&[60.0, 0.0, 0.0]);
        assert!(score_expected_gradnorm(&saturated, &[0.7]).unwrap() <= 1e-6);
        assert!(score_entropy_gradnorm(&saturated, &[0.7]).unwrap() <= 1e-6);
        let uniform = bias_model(&[0.0; 4]);
        assert!(score_entropy_gradnorm(&uniform, &[0.7]).unwrap() <= 1e-12);
        // uniform is not a stationary point of the weighted gradient lengths
        assert!(score_expected_gradnorm(&uniform, &[0.7]).unwrap() > 0.1);
    }

    #[test]
    fn expected_gradnorm_matches_per_candidate_fd() {
        let model = TaskModel::new(Architecture::mlp(3, &[6, 6], 3), 17).unwrap();
        let x = [0.4, -1.1, 0.9];
        let post = crate::model::predict_posterior(&model, &x).unwrap();
        let mut want = 0.0;
        for (label, p) in post.probs().iter().enumerate() {
            let g = fd_grad(&model, |m| cross_entropy(m, &x, label).unwrap());
            want += p * norm(&g);
        }
        let got = score_expected_gradnorm(&model, &x).unwrap();
        assert!(rel(got, want) < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn detached_weighted_gradient_sum_vanishes() {
        let model = TaskModel::new(Architecture::mlp(3, &[6], 4), 3).unwrap();
        let x = [0.4, -1.1, 0.9];
        let (_, g) = loss_and_grad(&model, &x, 1, Objective::Expected).unwrap();
        assert!(norm(&g) < 1e-12, "{}", norm(&g));
        assert!(score_expected_gradnorm(&model, &x).unwrap() > 1e-3);
    }

    #[test]
    fn entropy_gradnorm_matches_fd() {
        let model = TaskModel::new(Architecture::mlp(3, &[6, 6], 3), 19).unwrap();
        let x = [1.4, -0.3, 0.2];
        let g = fd_grad(&model, |m| entropy_loss(m, &x).unwrap());
        let got = score_entropy_gradnorm(&model, &x).unwrap();
        assert!(rel(got, norm(&g)) < 1e-4);
    }

    #[test]
    fn scoring_leaves_model_untouched_and_is_order_free() {
        let model = TaskModel::new(Architecture::mlp(2, &[8], 3), 2).unwrap();
        let before = model.flat_params();
        let xs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let ctx = ScoreContext {
            seed: 1,
            cycle: 0,
            scope: GradScope::All,
        };
        for kind in [StrategyKind::ExpectedGradnorm, StrategyKind::EntropyGradnorm] {
            let a = score_candidates(kind, &model, &xs, &ctx).unwrap();
            let rev: Vec<f64> = xs.chunks(2).rev().flatten().copied().collect();
            let mut b = score_candidates(kind, &model, &rev, &ctx).unwrap();
            b.reverse();
            assert_eq!(a, b);
        }
        let after = model.flat_params();
        assert!(before.iter().zip(&after).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn untrained_scheme_rank_correlation_is_reported() {
        let model = TaskModel::new(Architecture::default_mlp(2, 4), 8).unwrap();
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 1.3).cos() * 2.0).collect();
        let rho = scheme_rank_correlation(&model, &xs).unwrap();
        println!("untrained spearman(entropy, expected) = {rho:.3}");
        assert!((-1.0..=1.0).contains(&rho));
    }

    proptest! {
        #[test]
        fn top_k_is_scale_equivariant(scores in prop::collection::vec(0.0f64..10.0, 1..40), c in 0.01f64..100.0, k in 1usize..40) {
            let k = k.min(scores.len());
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            prop_assert_eq!(select_top_k(&ss(&scores), k).unwrap(), select_top_k(&ss(&scaled), k).unwrap());
        }
    }
}
