//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! tensors.
//!
//! A [`Tape`] records every operation performed through [`Var`] handles.
//! Broadcasting is limited to rank-0 scalars combined with tensors of any
//! shape; every other shape disagreement is an [`Error::Shape`](crate::Error).

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error};
pub use tape::{logsumexp, Gradients, Tape, Var};
pub use tensor::Tensor;
