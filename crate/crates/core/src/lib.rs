//! Pool-based active learning that labels the unlabeled samples whose loss
//! gradient (with respect to the model parameters) is largest.
//!
//! Two label-free scores are provided: *expected-gradnorm* weighs the
//! per-candidate-label cross-entropy gradients by the model posterior, and
//! *entropy-gradnorm* differentiates the entropy of the softmax output.
//! Around the selection engine sits an influence-function toolkit that
//! computes the damped Hessian of small models exactly and evaluates the
//! chain of bounds relating gradient norm to held-out loss.
//!
//! Layout:
//! - [`autodiff`]: dense tensors and a reverse-mode tape
//! - [`model`]: MLP / small CNN classifiers, losses, SGD training
//! - [`selection`]: acquisition scores and top-K selection
//! - [`influence`]: damped Hessian, influence values, bound terms, LOO oracle
//! - [`engine`]: the active-learning loop, pools, probes, reports
//! - [`data`]: synthetic generators and IDX / CSV / cache readers
//! - [`descent`]: gradient-norm reduction under gradient descent
//! - [`experiment`]: JSON experiment configs and the `run`/`probe`/`plot`/`check` commands

pub mod autodiff;
pub mod data;
pub mod descent;
pub mod engine;
pub mod influence;
mod error;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod selection;
pub mod stats;

pub use error::{Error, Result};
