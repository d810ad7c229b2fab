//! The three per-sample losses and every acquisition score on a few inputs.

use gradnorm_al::model::{cross_entropy, entropy_loss, expected_loss, predict_posterior, Architecture, TaskModel};
use gradnorm_al::selection::{score_candidates, scheme_rank_correlation, ScoreContext, StrategyKind};

fn main() -> gradnorm_al::Result<()> {
    let model = TaskModel::new(Architecture::mlp(2, &[16], 3), 3)?;
    let xs = [0.0, 0.0, 2.0, -1.0, -3.0, 3.0, 0.5, 0.1];
    println!("{:>14} {:>24} {:>8} {:>8} {:>8}", "x", "posterior", "CE(y=0)", "expected", "entropy");
    for x in xs.chunks(2) {
        let p = predict_posterior(&model, x)?;
        println!(
            "{:>14} {:>24} {:>8.4} {:>8.4} {:>8.4}",
            format!("{x:?}"),
            format!("{:.3?}", p.probs()),
            cross_entropy(&model, x, 0)?,
            expected_loss(&model, x)?,
            entropy_loss(&model, x)?
        );
    }

    let ctx = ScoreContext {
        seed: 0,
        cycle: 0,
        scope: Default::default(),
    };
    for kind in StrategyKind::ALL {
        if kind == StrategyKind::KcenterGreedy {
            continue; // set-level, no per-sample score
        }
        let s = score_candidates(kind, &model, &xs, &ctx)?;
        println!("{kind:>18}: {:.4?}", s);
    }
    println!("spearman(expected, entropy) = {:.3}", scheme_rank_correlation(&model, &xs)?);
    Ok(())
}
