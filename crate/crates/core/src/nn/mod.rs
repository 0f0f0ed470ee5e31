//! Small trainable networks and their optimizer.

mod adam;
mod encoder;
mod gradcheck;
mod mlp;
mod params;

pub use adam::Adam;
pub use encoder::{Encoder, Normalizer};
pub use gradcheck::grad_check_params;
pub use mlp::Mlp;
pub use params::{GradMap, ParameterStore, Params};
