//! Shaped arrays with tape-based reverse-mode differentiation, plus the
//! dense, recurrent, convolutional and loss kernels used by the qgf models.

pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use tape::{concat_cols, Bound, Gradients, Tape, Var};
pub use tensor::{Param, ParamSet, Tensor};
