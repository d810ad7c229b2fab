use nalgebra::{Cholesky, DVector};

use super::hessian::{hessian_from_gradient, FD_STEP};
use crate::error::{Error, Result};
use crate::model::{evaluate, loss_and_grad, Objective, TaskModel};
use crate::selection::norm;

/// Settings for the retraining oracle. The fitted objective is
/// `(1/n) Σ_{i∈S} CE_i(θ) + (λ/2) ||θ||²`, with `n` the full pool size
/// even when `S` omits a sample, so that its Hessian at the optimum is the
/// damped average Hessian used by the influence values.
#[derive(Clone, Copy, Debug)]
pub struct LooConfig {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LooConfig {
    fn default() -> Self {
        Self {
            damping: 0.01,
            tolerance: 1e-10,
            max_iterations: 100,
        }
    }
}

struct Problem<'a> {
    model: TaskModel,
    x: &'a [f64],
    y: &'a [usize],
    n_total: usize,
    damping: f64,
}

impl Problem<'_> {
    fn value_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut m = self.model.clone();
        m.set_flat_params(theta)?;
        let scale = self.y.len() as f64 / self.n_total as f64;
        let (loss, g) = loss_and_grad(&m, self.x, self.y.len(), Objective::CrossEntropy(self.y))?;
        let reg = 0.5 * self.damping * theta.iter().map(|w| w * w).sum::<f64>();
        let grad = g.iter().zip(theta).map(|(gi, w)| scale * gi + self.damping * w).collect();
        Ok((scale * loss + reg, grad))
    }
}

/// Damped Newton iterations from `init` until the objective gradient norm
/// drops below the tolerance.
pub fn fit_regularized(init: &TaskModel, x: &[f64], y: &[usize], n_total: usize, config: &LooConfig) -> Result<TaskModel> {
    if y.is_empty() {
        return Err(Error::Empty("labeled pool"));
    }
    let problem = Problem {
        model: init.clone(),
        x,
        y,
        n_total,
        damping: config.damping,
    };
    let mut theta = init.flat_params();
    let (mut f, mut g) = problem.value_and_grad(&theta)?;
    for _ in 0..config.max_iterations {
        let gn = norm(&g);
        if gn < config.tolerance {
            let mut out = init.clone();
            out.set_flat_params(&theta)?;
            return Ok(out);
        }
        let h = hessian_from_gradient(|w| Ok(problem.value_and_grad(w)?.1), &theta, FD_STEP)?;
        let chol = Cholesky::new(h).ok_or(Error::NotSpd { min_eigenvalue: f64::NAN })?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        let slope: f64 = -g.iter().zip(step.iter()).map(|(a, b)| a * b).sum::<f64>();
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(w, s)| w - t * s).collect();
            let (fc, gc) = problem.value_and_grad(&cand)?;
            // near the optimum f is flat to rounding; a smaller gradient
            // is then the useful acceptance signal
            if fc <= f + 1e-4 * t * slope || norm(&gc) < gn || t < 1e-10 {
                theta = cand;
                f = fc;
                g = gc;
                break;
            }
            t *= 0.5;
        }
    }
    let grad_norm = norm(&g);
    if grad_norm < config.tolerance {
        let mut out = init.clone();
        out.set_flat_params(&theta)?;
        return Ok(out);
    }
    Err(Error::NonConvergence {
        grad_norm,
        iterations: config.max_iterations,
    })
}

/// Summed test cross-entropy after retraining without sample `removed`,
/// minus the same with the full pool. Both fits start from `init`.
pub fn loo_retrain_oracle(
    init: &TaskModel,
    x: &[f64],
    y: &[usize],
    removed: usize,
    test_x: &[f64],
    test_y: &[usize],
    config: &LooConfig,
) -> Result<f64> {
    let len = init.input_len();
    if removed >= y.len() {
        return Err(Error::Budget {
            requested: removed + 1,
            available: y.len(),
        });
    }
    let full = fit_regularized(init, x, y, y.len(), config)?;
    let mut xr = x.to_vec();
    xr.drain(removed * len..(removed + 1) * len);
    let mut yr = y.to_vec();
    yr.remove(removed);
    let without = fit_regularized(init, &xr, &yr, y.len(), config)?;
    let total = |m: &TaskModel| -> Result<f64> { Ok(evaluate(m, test_x, test_y)?.mean_loss * test_y.len() as f64) };
    Ok(total(&without)? - total(&full)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn fit_reaches_tolerance() {
        let x = [0.0, 1.0, 2.0, 3.0, 0.5, 2.5];
        let y = [0, 0, 1, 1, 0, 1];
        let init = TaskModel::new(Architecture::logistic(1, 2), 0).unwrap();
        let fit = fit_regularized(&init, &x, &y, 6, &LooConfig::default()).unwrap();
        let (_, g) = loss_and_grad(&fit, &x, 6, Objective::CrossEntropy(&y)).unwrap();
        let reg: Vec<f64> = g.iter().zip(fit.flat_params()).map(|(a, w)| a + 0.01 * w).collect();
        assert!(norm(&reg) < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let x = [0.0, 1.0];
        let y = [0, 1];
        let init = TaskModel::new(Architecture::logistic(1, 2), 0).unwrap();
        let cfg = LooConfig {
            max_iterations: 0,
            ..LooConfig::default()
        };
        assert!(matches!(
            fit_regularized(&init, &x, &y, 2, &cfg),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn sole_class_representative_matters() {
        // class 2 has a single training point near the test points of class 2
        let x = [0.0, 0.0, 0.3, 0.1, 4.0, 0.0, 4.2, 0.3, 2.0, 4.0];
        let y = [0, 0, 1, 1, 2];
        let test_x = [2.1, 3.9, 1.9, 4.2];
        let test_y = [2, 2];
        let init = TaskModel::new(Architecture::logistic(2, 3), 0).unwrap();
        let delta = loo_retrain_oracle(&init, &x, &y, 4, &test_x, &test_y, &LooConfig::default()).unwrap();
        assert!(delta > 0.0, "{delta}");
    }
}
