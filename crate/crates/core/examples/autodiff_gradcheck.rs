//! Reverse-mode gradients of a small MLP checked against central differences.

use gradnorm_al::autodiff::gradcheck::finite_difference_check;
use gradnorm_al::autodiff::{Tape, Tensor};
use gradnorm_al::model::{Architecture, Objective, TaskModel};

fn main() -> gradnorm_al::Result<()> {
    // a hand-built expression: f(w) = sum(relu(X w))
    let mut tape = Tape::new();
    let w = tape.param(Tensor::new(vec![2, 1], vec![0.7, 0.3])?);
    let x = tape.constant(Tensor::new(vec![3, 2], vec![1.0, 2.0, -1.0, 0.5, 0.0, 1.5])?);
    let y = tape.matmul(x, w)?;
    let t = tape.relu(y);
    let f = tape.sum(t);
    tape.backward(f)?;
    println!("f = {:.6}, df/dw = {:?}", tape.value(f).item(), tape.grad(w).unwrap_or_default());

    for (name, arch) in [
        ("logistic", Architecture::logistic(4, 3)),
        ("mlp 2x64", Architecture::default_mlp(4, 3)),
    ] {
        let model = TaskModel::new(arch, 7)?;
        let x: Vec<f64> = (0..5 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = [0, 1, 2, 1, 0];
        let err = finite_difference_check(&model, &x, 5, Objective::CrossEntropy(&y), 1e-5, 150, 1)?;
        println!("{name:>9}: {} params, max relative error {err:.2e}", model.param_count());
    }
    Ok(())
}
