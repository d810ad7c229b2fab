//! Quick invariant suites behind the `check` command.

use rand::Rng;

use crate::autodiff::gradcheck::finite_difference_check;
use crate::data::{gen_gaussian_mixture, train_eval};
use crate::descent::{first_violation, quadratic_descent_check, random_spd, ConvexityParams};
use crate::engine::{run, ALConfig};
use crate::error::Result;
use crate::influence::{
    build_hessian, per_sample_gradients, test_aggregate, total_influence, total_influence_explicit, InfluenceLoss,
};
use crate::model::{entropy_loss, expected_loss, Architecture, Objective, TaskModel, TrainConfig};
use crate::rng::stream;
use crate::selection::StrategyKind;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: Result<(bool, String)>) -> CheckResult {
    match r {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn gradients() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let model = TaskModel::new(Architecture::mlp(4, &[16, 16], 3), seed)?;
        let mut rng = stream(seed, "check-x", 0);
        let x: Vec<f64> = (0..6 * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = [0, 1, 2, 0, 1, 2];
        worst = worst.max(finite_difference_check(&model, &x, 6, Objective::CrossEntropy(&y), 1e-5, 100, seed)?);
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e}")))
}

fn closed_forms() -> Result<(bool, String)> {
    let arch = Architecture::logistic(2, 4);
    let n = arch.param_count()?;
    let uniform = TaskModel::from_flat(arch, &vec![0.0; n])?;
    let h = entropy_loss(&uniform, &[0.3, -1.0])?;
    let e = expected_loss(&uniform, &[0.3, -1.0])?;
    let want = 4f64.ln();
    let err = (h - want).abs().max((e - want).abs());
    Ok((err <= 1e-10, format!("uniform posterior off ln 4 by {err:.1e}")))
}

fn descent() -> Result<(bool, String)> {
    let mut violations = 0;
    for seed in 0..200 {
        let a = random_spd(5, 1.0 + (seed % 40) as f64, seed);
        let eta = ConvexityParams::of_matrix(&a, 1.0)?.max_safe_eta();
        let w0: Vec<f64> = (0..5).map(|i| ((i as u64 + seed) as f64).cos()).collect();
        let norms = quadratic_descent_check(&a, &w0, eta, 20)?;
        violations += usize::from(first_violation(&norms, 1e-12).is_some());
    }
    Ok((violations == 0, format!("{violations} violations in 200 quadratics")))
}

fn influence() -> Result<(bool, String)> {
    let ds = gen_gaussian_mixture(3, 12, 2, 2.0, 5)?;
    let (train, test) = train_eval(&ds, 10, 5, true)?;
    let model = TaskModel::new(Architecture::logistic(2, 3), 5)?;
    let ctx = build_hessian(&model, train.features(), Objective::CrossEntropy(train.labels()), 0.01, 2000)?;
    let agg = test_aggregate(&ctx, &model, test.features(), InfluenceLoss::Labeled(test.labels()))?;
    let test_grads = per_sample_gradients(&model, test.features(), InfluenceLoss::Labeled(test.labels()))?;
    let gs = per_sample_gradients(&model, train.features(), InfluenceLoss::Labeled(train.labels()))?;
    let mut worst = 0.0f64;
    for g in &gs {
        let a = total_influence(&ctx, &agg, g)?;
        let b = total_influence_explicit(&ctx, g, &test_grads)?;
        worst = worst.max((a - b).abs());
    }
    Ok((worst <= 1e-10, format!("aggregate vs explicit sum differ by {worst:.1e}")))
}

fn loop_invariants() -> Result<(bool, String)> {
    let ds = gen_gaussian_mixture(3, 60, 2, 3.0, 9)?;
    let (train, eval) = train_eval(&ds, 30, 9, true)?;
    let mut cfg = ALConfig::new(3, 8, StrategyKind::EntropyGradnorm, 9);
    cfg.train = TrainConfig {
        epochs: 5,
        decay_epoch: 4,
        ..TrainConfig::default()
    };
    let arch = Architecture::mlp(2, &[8], 3);
    let a = run(&cfg, &arch, &train, &eval)?;
    let b = run(&cfg, &arch, &train, &eval)?;
    let grows = a.reports.windows(2).all(|w| w[1].budget == w[0].budget + cfg.budget);
    let same = a.reports == b.reports && a.labeled == b.labeled;
    let ok = grows && same && a.leaked_reads == 0;
    Ok((
        ok,
        format!("exact growth {grows}, repeatable {same}, leaked reads {}", a.leaked_reads),
    ))
}

/// Runs every suite; never fails as a whole, failures are reported per suite.
pub fn check_all() -> Vec<CheckResult> {
    vec![
        outcome("gradients", gradients()),
        outcome("closed-form losses", closed_forms()),
        outcome("descent property", descent()),
        outcome("influence aggregate", influence()),
        outcome("loop invariants", loop_invariants()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in check_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
