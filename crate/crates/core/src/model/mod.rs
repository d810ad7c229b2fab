//! Classifiers, the three losses used for scoring, and the SGD trainer.

mod arch;
pub mod checkpoint;
mod loss;
mod train;

pub use arch::{Architecture, TaskModel};
pub use loss::{
    candidate_gradients, cross_entropy, entropy_loss, expected_loss, loss_and_grad, objective_node,
    predict_posterior, predict_posteriors, scoped_candidate_gradients, scoped_loss_and_grad, GradScope,
    Objective, Posterior,
};
pub use train::{
    evaluate, full_batch_gradient, per_class_accuracy, train, Evaluation, TrainConfig, TrainOutcome, Trainer,
};


