use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{loss_and_grad, Objective, TaskModel};

pub const DEFAULT_CAP: usize = 2000;
pub const DEFAULT_DAMPING: f64 = 0.01;
/// Central-difference step used on gradients.
pub const FD_STEP: f64 = 1e-4;

/// Column-by-column central differences of `grad` at `theta`, symmetrized.
pub fn hessian_from_gradient<F>(grad: F, theta: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let d = theta.len();
    let columns: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let mut w = theta.to_vec();
            w[i] = theta[i] + step;
            let plus = grad(&w)?;
            w[i] = theta[i] - step;
            let minus = grad(&w)?;
            if plus.len() != d || minus.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: plus.len(),
                });
            }
            Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * step)).collect())
        })
        .collect::<Result<_>>()?;
    let h = DMatrix::from_fn(d, d, |r, c| columns[c][r]);
    let sym = (&h + h.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian entry"));
    }
    Ok(sym)
}

/// Damped average Hessian with a Cholesky factorization ready for solves.
#[derive(Clone, Debug)]
pub struct HessianContext {
    damped: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    damping: f64,
    n: usize,
    min_eigenvalue: f64,
}

impl HessianContext {
    /// Adds `damping * I` to a symmetric `hessian`, then checks positive
    /// definiteness before factorizing. `n` is the labeled-sample count.
    pub fn from_matrix(hessian: DMatrix<f64>, damping: f64, n: usize) -> Result<Self> {
        let d = hessian.nrows();
        if hessian.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: hessian.ncols(),
            });
        }
        if n == 0 {
            return Err(Error::Empty("labeled pool"));
        }
        let damped = hessian + DMatrix::identity(d, d) * damping;
        let min_eigenvalue = SymmetricEigen::new(damped.clone()).eigenvalues.min();
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotSpd { min_eigenvalue });
        }
        let chol = Cholesky::new(damped.clone()).ok_or(Error::NotSpd { min_eigenvalue })?;
        Ok(Self {
            damped,
            chol,
            damping,
            n,
            min_eigenvalue,
        })
    }

    pub fn dim(&self) -> usize {
        self.damped.nrows()
    }

    /// Samples the Hessian is averaged over (the `1/n` in the influence).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.damped
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// `(H + λI)^{-1} v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        Ok(self.chol.solve(&DVector::from_column_slice(v)).as_slice().to_vec())
    }

    pub(crate) fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Damped Hessian of the mean `objective` over a batch of `x`.
pub fn build_hessian(
    model: &TaskModel,
    x: &[f64],
    objective: Objective<'_>,
    damping: f64,
    cap: usize,
) -> Result<HessianContext> {
    let d = model.param_count();
    if d > cap {
        return Err(Error::OverCap { params: d, cap });
    }
    let n = x.len() / model.input_len();
    if n == 0 {
        return Err(Error::Empty("labeled pool"));
    }
    let h = hessian_from_gradient(
        |w| {
            let mut m = model.clone();
            m.set_flat_params(w)?;
            Ok(loss_and_grad(&m, x, n, objective)?.1)
        },
        &model.flat_params(),
        FD_STEP,
    )?;
    HessianContext::from_matrix(h, damping, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn quadratic_hessian_is_recovered() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let h = hessian_from_gradient(
            |w| Ok((&a * DVector::from_column_slice(w)).as_slice().to_vec()),
            &[0.3, -1.0, 2.0],
            FD_STEP,
        )
        .unwrap();
        for (x, y) in h.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn identity_damping() {
        let ctx = HessianContext::from_matrix(DMatrix::identity(2, 2), 0.01, 5).unwrap();
        assert_eq!(ctx.matrix(), &(DMatrix::identity(2, 2) * 1.01));
        assert!((ctx.min_eigenvalue() - 1.01).abs() < 1e-12);
        assert!(matches!(
            HessianContext::from_matrix(DMatrix::identity(2, 2) * -1.0, 0.01, 5),
            Err(Error::NotSpd { .. })
        ));
    }

    #[test]
    fn logistic_hessian_is_spd_and_cap_is_enforced() {
        let mut rng = stream(2, "t", 0);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let model = TaskModel::new(Architecture::logistic(2, 3), 1).unwrap();
        let ctx = build_hessian(&model, &x, Objective::CrossEntropy(&y), 0.01, DEFAULT_CAP).unwrap();
        assert_eq!(ctx.dim(), 9);
        assert_eq!(ctx.n(), 20);
        assert!(ctx.min_eigenvalue() > 0.0);
        let big = TaskModel::new(Architecture::default_mlp(2, 3), 1).unwrap();
        assert!(matches!(
            build_hessian(&big, &x, Objective::CrossEntropy(&y), 0.01, DEFAULT_CAP),
            Err(Error::OverCap { cap: 2000, .. })
        ));
    }
}
