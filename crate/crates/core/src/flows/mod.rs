//! Real NVP style coupling layers, their conditional variant, and stacks.

mod coupling;
mod stack;

pub use coupling::{CouplingLayer, SCALE_CLAMP};
pub use stack::{FlowStack, FlowStep};
