//! Dense linear algebra, seeded randomness and the small nonlinear primitives
//! shared by the model, the prompt engine and the optimizer.

mod matrix;
mod rng;

pub use matrix::{axpy, dot, gaussian_matrix, log_sum_exp, matmul, sigmoid, softmax_in_place, softmax_rows, Matrix};
pub use rng::{mix_seed, RngRecord, RngStream, RNG_ALGORITHM};
