//! Exact Gaussian process regression.

mod fit;
mod kernel;
mod model;

pub use fit::{fit, fit_with, FitOptions, HyperPrior};
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
pub use model::{GpDataset, MeanFunction, TrainedGp};

