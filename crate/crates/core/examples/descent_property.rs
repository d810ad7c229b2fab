//! Gradient descent on quadratics: below `2μ/L²` the gradient norm never
//! grows; above it a violation needs a nearly isotropic Hessian. Then the
//! same statistic for an MLP's mean training loss.

use gradnorm_al::data::{gen_gaussian_mixture, train_eval};
use gradnorm_al::descent::{
    first_violation, nn_avg_gradnorm_track, quadratic_descent_check, random_spd, search_violation, ConvexityParams,
};
use gradnorm_al::model::{Architecture, TaskModel, TrainConfig};

fn main() -> gradnorm_al::Result<()> {
    let mut violations = 0;
    for seed in 0..1000 {
        let a = random_spd(6, 1.0 + (seed % 100) as f64, seed);
        let p = ConvexityParams::of_matrix(&a, 1.0)?;
        let w0: Vec<f64> = (0..6).map(|i| ((seed + i) as f64).sin()).collect();
        let norms = quadratic_descent_check(&a, &w0, p.max_safe_eta(), 30)?;
        violations += usize::from(first_violation(&norms, 1e-12).is_some());
    }
    println!("eta = 2mu/L^2: {violations} violations in 1000 quadratics");

    match search_violation(3, 2.5, 1.2, 500, 20) {
        Some(v) => println!(
            "eta = 2.5mu/L^2: norm grows at step {} (condition number {:.3})",
            v.step,
            v.params.condition_number()
        ),
        None => println!("eta = 2.5mu/L^2: no violation found"),
    }
    match search_violation(3, 2.5, 1000.0, 500, 20) {
        Some(v) => println!("with condition numbers up to 1000: violation at {:.3}", v.params.condition_number()),
        None => println!("with condition numbers up to 1000: only the few draws below 1.25 could violate"),
    }

    let ds = gen_gaussian_mixture(4, 100, 5, 2.0, 1)?;
    let (train, _) = train_eval(&ds, 40, 1, true)?;
    let model = TaskModel::new(Architecture::mlp(5, &[32], 4), 1)?;
    let cfg = TrainConfig {
        epochs: 20,
        decay_epoch: 15,
        ..TrainConfig::default()
    };
    let track = nn_avg_gradnorm_track(&model, train.features(), train.labels(), &cfg)?;
    let row: Vec<String> = track.iter().map(|v| format!("{v:.3}")).collect();
    println!("MLP full-batch gradient norm per epoch: {}", row.join(" "));
    Ok(())
}
