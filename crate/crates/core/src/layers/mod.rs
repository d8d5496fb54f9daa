//! Forward and backward passes for every layer the forecaster uses.
//!
//! Gradients are derived by hand per layer; there is no tape.

mod activation;
mod conv;
mod dense;
mod dropout;
mod reshape;

pub use activation::{relu, relu_backward, relu_tensor};
pub use conv::{conv2d_backward, conv2d_output_shape, conv2d_valid};
pub use dense::{dense_backward, dense_forward};
pub use dropout::{dropout, DropoutMask, Mode};
pub use reshape::{concat, concat_backward, flatten, unflatten};

pub(crate) use conv::conv2d_backward_into;
pub(crate) use dense::dense_backward_into;
