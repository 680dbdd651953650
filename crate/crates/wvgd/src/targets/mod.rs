//! Target posteriors: random Gaussian mixtures, Bayesian logistic
//! regression, and the GP hyperparameter posterior.

mod gp;
mod logreg;
mod mixture;

pub use gp::{make_synthetic_quasiperiodic, GpHyperTarget, KernelExponent};
pub use logreg::{
    binarize, dataset_from_rows, load_dataset, synthetic_rows, write_synthetic_csv, DatasetName,
    LogRegTarget,
};
pub use mixture::{sample_random_mixture, GaussianMixtureTarget, GaussianPosteriorTarget};
