//! Exact total influence of freshly selected samples and its three upper
//! bounds, on a logistic model small enough for a dense Hessian.

use gradnorm_al::data::{gen_gaussian_mixture, train_eval};
use gradnorm_al::engine::{run, ALConfig, ProbeToggles};
use gradnorm_al::model::Architecture;
use gradnorm_al::selection::StrategyKind;

fn main() -> gradnorm_al::Result<()> {
    let ds = gen_gaussian_mixture(4, 312, 2, 2.0, 0)?;
    let (train, eval) = train_eval(&ds, 248, 0, true)?;
    for kind in [StrategyKind::ExpectedGradnorm, StrategyKind::EntropyGradnorm] {
        let mut cfg = ALConfig::new(5, 50, kind, 0);
        cfg.probes = ProbeToggles {
            bounds: true,
            decomposition: true,
            ..ProbeToggles::default()
        };
        let out = run(&cfg, &Architecture::logistic(2, 4), &train, &eval)?;
        println!("{kind}");
        println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>8}", "cycle", "|target|", "approx1", "approx2", "approx3", "a3/a2");
        for c in 0..4 {
            let rows: Vec<_> = out.probes.bounds.iter().filter(|b| b.cycle == c).collect();
            let m = |f: &dyn Fn(&gradnorm_al::engine::BoundsRecord) -> f64| rows.iter().map(|b| f(b)).sum::<f64>() / rows.len() as f64;
            println!(
                "{c:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>8.3}",
                m(&|b| b.target.abs()),
                m(&|b| b.approx1),
                m(&|b| b.approx2),
                m(&|b| b.approx3),
                m(&|b| b.approx3 / b.approx2)
            );
        }
        let d = &out.probes.decomposition[0];
        println!(
            "first pick: magnitude {:.4} x direction {:.4} = influence {:.4}",
            d.magnitude, d.direction, d.total_influence
        );
        for r in out.probes.diversity.iter().filter(|r| r.cycle == 0) {
            println!("cycle 0 {:>18} pairwise cosine {:.3} ± {:.3}", r.strategy.to_string(), r.mean_cosine, r.sd_cosine);
        }
    }
    Ok(())
}
