//! Synthetic client objectives.

use crate::error::Result;

pub mod regression;
pub mod softmax;

pub use regression::{
    closed_form_optimum, generate_regression_data, noise_sigma_from_snr, regression_minibatch_grad,
    regression_sample_grad, RegressionClient, RegressionDataset, RegressionTask,
};
pub use softmax::{
    cross_entropy_loss, generate_classification_data, softmax, softmax_minibatch_grad, LabeledSamples,
    SoftmaxClient, SoftmaxParams, SoftmaxTask,
};

/// What the engine needs from a client's local problem.
pub trait LocalObjective {
    /// Length of the flattened parameter vector.
    fn dim(&self) -> usize;

    /// Size of the fixed local dataset batches are drawn from.
    fn n_samples(&self) -> usize;

    /// Mean per-sample loss gradient over `batch` (indices into the dataset).
    fn minibatch_grad(&self, w: &[f64], batch: &[usize]) -> Result<Vec<f64>>;

    /// Gradient over the whole local dataset: the conditional mean of
    /// `minibatch_grad` under uniform sampling.
    fn full_grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.n_samples()).collect();
        self.minibatch_grad(w, &all)
    }

    /// Exact negative population gradient, when it has a closed form.
    fn population_h(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }
}
