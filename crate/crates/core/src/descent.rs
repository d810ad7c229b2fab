//! Gradient-norm behavior under gradient descent: exact checks on random
//! quadratics and an empirical tracker for trained networks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{full_batch_gradient, TaskModel, TrainConfig, Trainer};
use crate::rng::stream;
use crate::selection::norm;

/// Strong convexity `mu`, smoothness `l` and a step size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvexityParams {
    pub mu: f64,
    pub l: f64,
    pub eta: f64,
}

impl ConvexityParams {
    /// `mu` and `l` from the extreme eigenvalues of symmetric `a`.
    pub fn of_matrix(a: &DMatrix<f64>, eta: f64) -> Result<Self> {
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        let (mu, l) = (eig.min(), eig.max());
        if !(mu > 0.0) {
            return Err(Error::NotSpd { min_eigenvalue: mu });
        }
        if !(eta > 0.0) {
            return Err(Error::config("eta", "must be positive"));
        }
        Ok(Self { mu, l, eta })
    }

    /// Largest step for which the gradient norm cannot grow: `2 mu / l²`.
    pub fn max_safe_eta(&self) -> f64 {
        2.0 * self.mu / (self.l * self.l)
    }

    pub fn condition_number(&self) -> f64 {
        self.l / self.mu
    }
}

/// Gradient norms `||A w_t||` for `t = 0..=steps` of `w ← w − η A w` on
/// `f(w) = ½ wᵀ A w`.
pub fn quadratic_descent_check(a: &DMatrix<f64>, w0: &[f64], eta: f64, steps: usize) -> Result<Vec<f64>> {
    let d = a.nrows();
    if a.ncols() != d || w0.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: w0.len(),
        });
    }
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-12 * a.abs().max().max(1.0) {
        return Err(Error::config("A", "matrix is not symmetric"));
    }
    ConvexityParams::of_matrix(a, eta)?;
    let mut w = DVector::from_column_slice(w0);
    let mut out = Vec::with_capacity(steps + 1);
    for _ in 0..=steps {
        let g = a * &w;
        out.push(g.norm());
        w -= g * eta;
    }
    Ok(out)
}

/// First step `t` with `norms[t+1] > norms[t] + tol`.
pub fn first_violation(norms: &[f64], tol: f64) -> Option<usize> {
    norms.windows(2).position(|w| w[1] > w[0] + tol)
}

/// `Q diag(λ) Qᵀ` with `Q` from the QR factorization of a Gaussian matrix
/// and eigenvalues log-uniform in `[1, condition]`, both ends included.
pub fn random_spd(d: usize, condition: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = stream(seed, "spd", 0);
    let g: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let log_c = condition.ln();
    let eig: Vec<f64> = (0..d)
        .map(|i| match i {
            0 => 1.0,
            1 => condition,
            _ => (rng.random::<f64>() * log_c).exp(),
        })
        .collect();
    let a: DMatrix<f64> = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// A random instance on which the gradient norm grows.
#[derive(Clone, Debug)]
pub struct Violation {
    pub seed: u64,
    pub a: DMatrix<f64>,
    pub w0: Vec<f64>,
    pub params: ConvexityParams,
    pub step: usize,
    pub norms: Vec<f64>,
}

/// Scans seeds `0..tries` for an SPD matrix of dimension `d` (condition
/// number drawn log-uniform in `[1, max_condition]`) and a start point on
/// which descent with `eta = factor · mu/L²` increases the gradient norm
/// within `steps`.
///
/// With `factor = 2.5` this can only succeed when the condition number is
/// below 1.25: otherwise `eta · λ ≤ 2` for every eigenvalue `λ`.
pub fn search_violation(d: usize, factor: f64, max_condition: f64, tries: u64, steps: usize) -> Option<Violation> {
    for seed in 0..tries {
        let mut rng = stream(seed, "violation", 0);
        let condition = (rng.random::<f64>() * max_condition.ln()).exp();
        let a = random_spd(d, condition, seed);
        let w0: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = ConvexityParams::of_matrix(&a, 1.0).ok()?;
        let eta = factor * p.mu / (p.l * p.l);
        let norms = quadratic_descent_check(&a, &w0, eta, steps).ok()?;
        if let Some(step) = first_violation(&norms, 1e-12) {
            return Some(Violation {
                seed,
                a,
                w0,
                params: ConvexityParams { eta, ..p },
                step,
                norms,
            });
        }
    }
    None
}

/// Full-batch gradient norm of the mean training loss after each epoch.
pub fn nn_avg_gradnorm_track(model: &TaskModel, x: &[f64], labels: &[usize], config: &TrainConfig) -> Result<Vec<f64>> {
    let mut model = model.clone();
    let mut trainer = Trainer::new(&model, x, labels, config)?;
    let mut out = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        trainer.epoch(&mut model)?;
        out.push(norm(&full_batch_gradient(&model, x, labels)?));
    }
    Ok(out)
}

/// One row of `descent.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentRow {
    pub instance: u64,
    pub step: usize,
    pub grad_norm: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_half_step_halves_the_norm() {
        let a = DMatrix::identity(3, 3);
        let n = quadratic_descent_check(&a, &[1.0, 0.0, 0.0], 0.5, 1).unwrap();
        assert_eq!(n, vec![1.0, 0.5]);
        assert!(quadratic_descent_check(&(a * -1.0), &[1.0, 0.0, 0.0], 0.5, 1).is_err());
    }

    #[test]
    fn boundary_step_never_increases() {
        for seed in 0..50 {
            let a = random_spd(6, 50.0, seed);
            let p = ConvexityParams::of_matrix(&a, 1.0).unwrap();
            let w0: Vec<f64> = (0..6).map(|i| (i as f64 + seed as f64).sin()).collect();
            let n = quadratic_descent_check(&a, &w0, p.max_safe_eta(), 30).unwrap();
            assert_eq!(first_violation(&n, 1e-12), None);
        }
    }

    #[test]
    fn large_step_violation_exists() {
        let v = search_violation(10, 2.5, 2.0, 500, 20).expect("no violating instance");
        assert!(v.params.condition_number() < 1.25);
        assert!(v.norms[v.step + 1] > v.norms[v.step]);
    }

    #[test]
    fn zero_learning_rate_track_is_constant() {
        let x = [0.0, 1.0, 1.0, 0.0, 2.0, 2.0, -1.0, 0.5];
        let y = [0, 1, 1, 0];
        let model = TaskModel::new(crate::model::Architecture::mlp(2, &[4], 2), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            decay_epoch: 2,
            learning_rate: 0.0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let t = nn_avg_gradnorm_track(&model, &x, &y, &cfg).unwrap();
        assert!(t.iter().all(|v| *v == t[0]));
    }

    proptest! {
        #[test]
        fn one_dimensional_contraction_is_exact(a in 0.01f64..10.0, eta in 0.0f64..1.0, w in -5.0f64..5.0) {
            prop_assume!(eta > 0.0);
            let m = DMatrix::from_element(1, 1, a);
            let n = quadratic_descent_check(&m, &[w], eta, 1).unwrap();
            prop_assert!((n[1] - (1.0 - eta * a).abs() * n[0]).abs() <= 1e-12 * n[0].max(1.0));
        }

        #[test]
        fn well_conditioned_enough_never_violates_at_two_and_a_half(seed in 0u64..10_000, c in 1.25f64..50.0) {
            let a = random_spd(5, c, seed);
            let p = ConvexityParams::of_matrix(&a, 1.0).unwrap();
            let w0: Vec<f64> = (0..5).map(|i| ((i as u64 + seed) as f64).cos()).collect();
            let n = quadratic_descent_check(&a, &w0, 2.5 * p.mu / (p.l * p.l), 10).unwrap();
            prop_assert_eq!(first_violation(&n, 1e-12), None);
        }
    }
}
