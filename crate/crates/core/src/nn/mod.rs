//! Numerical kernels with hand-written gradients.

mod conv;
mod dense;
mod gradcheck;
pub mod linalg;
mod loss;
mod lstm;
mod optim;
mod pool;
mod serialize;
mod tensor;

pub use conv::{Conv2dParams, ConvCache};
pub use dense::DenseParams;
pub use gradcheck::{grad_check, FnObjective, Objective};
pub use loss::{mse, softmax, softmax_cross_entropy, CrossEntropy};
pub use lstm::{Direction, LstmCellParams, LstmTape};
pub use optim::{clip_grad_norm, OptimState, UpdateRule};
pub use pool::{OddDims, PoolSpec, POOL_WINDOW};
pub use serialize::{NamedTensor, TensorFile};
pub use tensor::Tensor;
