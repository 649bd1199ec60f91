//! Dense `f64` tensors with define-by-run reverse-mode differentiation.
//!
//! Every operation records its inputs on the output tensor; calling
//! [`Tensor::backward`] on a scalar walks the recorded graph in reverse
//! creation order and populates the gradient of every tensor that requires
//! one. Graphs are rebuilt on each forward pass and dropped afterwards.
//!
//! The crate also carries the [`Adam`] optimizer and a central
//! finite-difference checker used across the workspace's test suites.

mod error;
pub mod gradcheck;
mod kernels;
mod nn;
mod ops;
mod optim;
mod tensor;

pub use error::{Result, TensorError};
pub use nn::{BatchNormMode, RunningStats, BN_EPS, BN_MOMENTUM};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;

/// Size the global kernel thread pool from `FTL_THREADS`.
///
/// Kernels split work by output row, so results do not depend on the thread
/// count. Returns the number of threads in effect.
pub fn init_threads_from_env() -> usize {
    let wanted = std::env::var("FTL_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = wanted {
        // A pool may already exist (e.g. in tests); that is not an error.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    rayon::current_num_threads()
}
