//! Dense linear algebra, training primitives and verification oracles.

mod linalg;
mod matrix;
mod ops;
mod optim;
mod rng;
pub mod tape;

pub use linalg::{sym_eig, SymEig};
pub use matrix::Matrix;
pub use ops::{finite_diff_grad, layer_norm, relative_error, softmax, xavier_init};
pub use optim::{adam_step, OptimizerState};
pub use rng::{splitmix64, RngStream};
