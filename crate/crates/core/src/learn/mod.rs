//! Trainable scoring heads and classical learners.
//!
//! A [`Model`] is either a linear map or a one-hidden-layer tanh network;
//! both train with [`adamw_step`] under a linear warmup [`Schedule`].
//! Objectives are the label-smoothing cross entropy (pointwise) and the
//! pairwise hinge loss with a fixed margin. [`TreeEnsemble`] is a seeded
//! random forest used by the sentiment classifier and as the co-training
//! base learner.

mod forest;
mod io;
mod loss;
mod model;
mod optim;
mod train;

pub use forest::{fit_forest, ForestConfig, Tree, TreeEnsemble};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, write_loss_trace};
pub use loss::{hinge_pair_loss, smoothed_ce_k, smoothed_ce_loss, softmax};
pub use model::{Gradients, Model};
pub use optim::{adamw_step, AdamWConfig, OptimizerState, Schedule};
pub use train::{
    featurize_groups, train_pointwise, train_pairwise, FeaturizedQuestion, TraceRow, TrainConfig,
};

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
