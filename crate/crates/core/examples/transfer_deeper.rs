//! Pools chosen by a 2x64 MLP, then used to train a 4x128 MLP from scratch.

use gradnorm_al::data::{gen_gaussian_mixture, train_eval};
use gradnorm_al::engine::{transfer_train, ALConfig};
use gradnorm_al::model::Architecture;
use gradnorm_al::selection::StrategyKind;

fn main() -> gradnorm_al::Result<()> {
    let seed = 0;
    let ds = gen_gaussian_mixture(4, 1250, 20, 2.0, seed)?;
    let (train, eval) = train_eval(&ds, 1000, seed, true)?;
    for kind in [StrategyKind::ExpectedGradnorm, StrategyKind::EntropyGradnorm, StrategyKind::Random] {
        let cfg = ALConfig::new(7, 200, kind, seed);
        let t = transfer_train(
            &Architecture::default_mlp(20, 4),
            &Architecture::deeper_mlp(20, 4),
            &cfg,
            &train,
            &eval,
        )?;
        let own = t.run.reports.last().map_or(0.0, |r| r.test_acc);
        println!("{kind:>18}: selector {own:.4}, deeper model {:.4}", t.target_accuracy);
    }
    Ok(())
}
