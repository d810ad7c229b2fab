//! How many of the candidates with the largest true (labeled) gradient
//! norm each strategy picks, against the random-pick expectation.

use gradnorm_al::data::{gen_gaussian_mixture, train_eval};
use gradnorm_al::engine::{run, ALConfig};
use gradnorm_al::model::Architecture;
use gradnorm_al::selection::StrategyKind;

fn main() -> gradnorm_al::Result<()> {
    let ds = gen_gaussian_mixture(4, 500, 10, 2.0, 2)?;
    let (train, eval) = train_eval(&ds, 400, 2, true)?;
    for kind in StrategyKind::ALL {
        let mut cfg = ALConfig::new(4, 80, kind, 2);
        cfg.probes.overlap = true;
        let out = run(&cfg, &Architecture::default_mlp(10, 4), &train, &eval)?;
        let counts: Vec<String> = out.probes.overlap.iter().map(|r| format!("{}/{}", r.overlap, r.k)).collect();
        println!(
            "{kind:>18}: {}  (random ~{:.0})",
            counts.join(" "),
            out.probes.overlap[0].random_expectation
        );
    }
    Ok(())
}
