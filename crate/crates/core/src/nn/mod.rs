//! Dense per-position MLPs with analytic backward passes, row softmax, Adam,
//! and a checksummed binary parameter file.

mod adam;
mod matrix;
mod mlp;
mod params_file;
mod softmax;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use mlp::{relu, sigmoid, ForwardCache, Layer, Mlp, OutputActivation};
pub use params_file::{load_params, load_params_expecting, save_params, Architecture, PARAM_FILE_MAGIC, PARAM_FILE_VERSION};
pub use softmax::{row_softmax, softmax_backward};
