//! Influence values predict the effect of leave-one-out retraining.

use gradnorm_al::data::{gen_gaussian_mixture, train_eval};
use gradnorm_al::influence::{
    build_hessian, fit_regularized, loo_retrain_oracle, per_sample_gradients, test_aggregate, total_influence,
    InfluenceLoss, LooConfig,
};
use gradnorm_al::model::{Architecture, Objective, TaskModel};
use gradnorm_al::stats::{pearson, spearman};

fn main() -> gradnorm_al::Result<()> {
    let ds = gen_gaussian_mixture(3, 17, 2, 1.5, 4)?;
    let (train, test) = train_eval(&ds, 20, 4, true)?;
    let train = train.subset(&(0..30).collect::<Vec<_>>());
    let cfg = LooConfig::default();
    let init = TaskModel::new(Architecture::logistic(2, 3), 4)?;
    let model = fit_regularized(&init, train.features(), train.labels(), train.len(), &cfg)?;
    let ctx = build_hessian(&model, train.features(), Objective::CrossEntropy(train.labels()), cfg.damping, 2000)?;
    let agg = test_aggregate(&ctx, &model, test.features(), InfluenceLoss::Labeled(test.labels()))?;
    let grads = per_sample_gradients(&model, train.features(), InfluenceLoss::Labeled(train.labels()))?;

    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        predicted.push(total_influence(&ctx, &agg, g)?);
        actual.push(loo_retrain_oracle(&model, train.features(), train.labels(), i, test.features(), test.labels(), &cfg)?);
    }
    println!("{:>4} {:>12} {:>12}", "i", "influence", "retrained");
    for i in 0..8 {
        println!("{i:>4} {:>12.6} {:>12.6}", predicted[i], actual[i]);
    }
    println!("pearson {:.4}, spearman {:.4}", pearson(&predicted, &actual), spearman(&predicted, &actual));
    Ok(())
}
