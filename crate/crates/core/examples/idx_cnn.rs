//! Writes a small synthetic image set in IDX format, reads it back and runs
//! entropy-gradnorm selection with the small CNN.

use gradnorm_al::data::{read_idx, write_idx};
use gradnorm_al::engine::{run, ALConfig};
use gradnorm_al::model::{Architecture, TrainConfig};
use gradnorm_al::rng::stream;
use gradnorm_al::selection::StrategyKind;
use rand::Rng;

/// Bars: class 0 horizontal, 1 vertical, 2 diagonal, plus noise.
fn images(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = stream(seed, "bars", 0);
    let mut pixels = Vec::with_capacity(n * 100);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 3) as u8;
        let at = rng.random_range(2..8usize);
        for r in 0..10 {
            for c in 0..10 {
                let on = match class {
                    0 => r == at,
                    1 => c == at,
                    _ => r == c,
                };
                let noise: f64 = rng.random_range(0.0..60.0);
                pixels.push(if on { 255 - noise as u8 } else { noise as u8 });
            }
        }
        labels.push(class);
    }
    (pixels, labels)
}

fn main() -> gradnorm_al::Result<()> {
    let dir = std::env::temp_dir().join(format!("gradnorm-idx-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| gradnorm_al::Error::Format(e.to_string()))?;
    let files = |name: &str| (dir.join(format!("{name}-images.idx")), dir.join(format!("{name}-labels.idx")));
    for (name, n, seed) in [("train", 300, 1), ("eval", 90, 2)] {
        let (p, l) = images(n, seed);
        let (fi, fl) = files(name);
        write_idx(&fi, &fl, 10, 10, &p, &l)?;
    }
    let (ti, tl) = files("train");
    let (ei, el) = files("eval");
    let train = read_idx(&ti, &tl)?;
    let eval = read_idx(&ei, &el)?;
    println!("train {} images of shape {:?}, {} classes", train.len(), train.feature_shape(), train.classes());

    let mut cfg = ALConfig::new(4, 30, StrategyKind::EntropyGradnorm, 0);
    // tiny pools: small batches so every epoch takes several steps
    cfg.train = TrainConfig {
        epochs: 30,
        batch_size: 8,
        decay_epoch: 24,
        ..TrainConfig::default()
    };
    let out = run(&cfg, &Architecture::small_cnn(1, 10, 10, 3), &train, &eval)?;
    for r in &out.reports {
        println!("cycle {} labeled {:>3} test accuracy {:.3}", r.cycle, r.budget, r.test_acc);
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
