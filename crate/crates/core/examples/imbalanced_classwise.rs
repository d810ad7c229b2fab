//! Per-class accuracy on a long-tailed mixture, gradnorm vs random.

use gradnorm_al::data::{gen_gaussian_mixture, gen_imbalanced, train_eval};
use gradnorm_al::engine::{run, ALConfig};
use gradnorm_al::model::Architecture;
use gradnorm_al::selection::StrategyKind;

fn main() -> gradnorm_al::Result<()> {
    let base = gen_gaussian_mixture(4, 1000, 10, 2.0, 5)?;
    let ds = gen_imbalanced(&base, &[1.0, 0.6, 0.3, 0.1], 5)?;
    println!("class counts {:?}", ds.class_counts());
    let (train, eval) = train_eval(&ds, 400, 5, true)?;
    for kind in [StrategyKind::ExpectedGradnorm, StrategyKind::Random] {
        let cfg = ALConfig::new(5, 100, kind, 5);
        let out = run(&cfg, &Architecture::default_mlp(10, 4), &train, &eval)?;
        let last = out.reports.last().expect("cycles");
        let per: Vec<String> = last
            .per_class_test_acc
            .iter()
            .map(|a| a.map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        let mut picked = [0usize; 4];
        for &i in &out.labeled {
            picked[train.labels()[i]] += 1;
        }
        println!("{kind:>18}: overall {:.3}, per class [{}], labeled per class {picked:?}", last.test_acc, per.join(" "));
    }
    Ok(())
}
