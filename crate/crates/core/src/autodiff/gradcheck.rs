//! Central-difference gradient checking.

use rand::seq::index::sample;

use crate::error::Result;
use crate::model::{loss_and_grad, Objective, TaskModel};
use crate::rng::stream;

/// Denominator floor for relative error, so coordinates whose true
/// derivative is ~0 are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h`.
pub fn central_difference<F>(mut f: F, theta: &[f64], coord: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = theta.to_vec();
    probe[coord] = theta[coord] + h;
    let plus = f(&probe)?;
    probe[coord] = theta[coord] - h;
    let minus = f(&probe)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Max relative error between `grad` and central differences of `f` over
/// `coords` (all coordinates when `None`). An empty `theta` gives 0.
pub fn check_gradient<F>(mut f: F, theta: &[f64], grad: &[f64], coords: Option<&[usize]>, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta.len()).collect();
            &all
        }
    };
    let mut worst = 0.0f64;
    for &i in coords {
        let fd = central_difference(&mut f, theta, i, h)?;
        worst = worst.max(relative_error(grad[i], fd));
    }
    Ok(worst)
}

/// Compares the autodiff parameter gradient of `objective` on a batch with
/// central differences at up to `max_coords` seeded coordinates.
pub fn finite_difference_check(
    model: &TaskModel,
    x: &[f64],
    batch: usize,
    objective: Objective<'_>,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64> {
    let theta = model.flat_params();
    if theta.is_empty() {
        return Ok(0.0);
    }
    let (_, grad) = loss_and_grad(model, x, batch, objective)?;
    let coords: Vec<usize> = if max_coords >= theta.len() {
        (0..theta.len()).collect()
    } else {
        let mut rng = stream(seed, "gradcheck", 0);
        let mut c = sample(&mut rng, theta.len(), max_coords).into_vec();
        c.sort_unstable();
        c
    };
    let mut probe = model.clone();
    check_gradient(
        |w| {
            probe.set_flat_params(w)?;
            Ok(loss_and_grad(&probe, x, batch, objective)?.0)
        },
        &theta,
        &grad,
        Some(&coords),
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use crate::model::Architecture;
    use rand::Rng;

    /// Mean squared error of a linear model, value and autodiff gradient.
    fn linear_sq(w: &[f64], x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
        let d = w.len();
        let n = y.len();
        let mut tape = Tape::new();
        let wv = tape.param(Tensor::new(vec![d, 1], w.to_vec()).unwrap());
        let xv = tape.constant(Tensor::new(vec![n, d], x.to_vec()).unwrap());
        let yv = tape.constant(Tensor::new(vec![n, 1], y.to_vec()).unwrap());
        let pred = tape.matmul(xv, wv).unwrap();
        let neg = tape.scale(yv, -1.0);
        let r = tape.add(pred, neg).unwrap();
        let sq = tape.mul(r, r).unwrap();
        let loss = tape.mean(sq);
        tape.backward(loss).unwrap();
        (tape.value(loss).item(), tape.grad(wv).unwrap().to_vec())
    }

    #[test]
    fn linear_squared_loss_matches_analytic_and_fd() {
        let mut rng = stream(3, "t", 0);
        let (n, d) = (8, 4);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = linear_sq(&w, &x, &y);
        // analytic: (2/n) X^T (Xw - y)
        for j in 0..d {
            let mut want = 0.0;
            for i in 0..n {
                let r: f64 = (0..d).map(|k| x[i * d + k] * w[k]).sum::<f64>() - y[i];
                want += 2.0 / n as f64 * x[i * d + j] * r;
            }
            assert!((g[j] - want).abs() < 1e-14);
        }
        let err = check_gradient(|w| Ok(linear_sq(w, &x, &y).0), &w, &g, None, 1e-5).unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn mlp_cross_entropy_within_tolerance() {
        let model = TaskModel::new(Architecture::mlp(3, &[16, 16], 4), 21).unwrap();
        let mut rng = stream(5, "t", 0);
        let x: Vec<f64> = (0..5 * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = [0, 1, 2, 3, 1];
        let err = finite_difference_check(&model, &x, 5, Objective::CrossEntropy(&y), 1e-5, 200, 1).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn cnn_gradients_within_tolerance() {
        let model = TaskModel::new(Architecture::small_cnn(1, 10, 10, 3), 2).unwrap();
        let mut rng = stream(6, "t", 0);
        let x: Vec<f64> = (0..2 * 100).map(|_| rng.random_range(0.0..1.0)).collect();
        let err = finite_difference_check(&model, &x, 2, Objective::CrossEntropy(&[0, 2]), 1e-5, 150, 4).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn empty_parameter_vector_is_vacuous() {
        let err = check_gradient(|_| Ok(1.0), &[], &[], None, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }
}
