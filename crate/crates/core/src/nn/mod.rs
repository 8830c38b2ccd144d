//! Dense feed-forward regression networks trained from scratch.
//!
//! Hidden layers use the rectifier, the output layer is linear. Gradients
//! are computed by hand-written reverse-mode differentiation and applied
//! with bias-corrected Adam under an exponentially decaying learning rate.

mod adam;
mod mlp;
mod train;

pub use adam::{adam_step, AdamState};
pub use mlp::{
    forward, init_params, loss_and_grad, Batch, Gradients, Layer, MlpParams, CONTROLLER_LAYERS,
};
pub use train::{lr_schedule, train, RegressionSet, TrainConfig, TrainReport, LOSS_CSV_HEADER};
