//! Minimal reverse-mode autodiff over dense f32 tensors.
//!
//! The scope is exactly what the steganography networks need: 3x3
//! convolutions (strides 1/2/4), transposed convolutions, batch norm over
//! current-batch statistics, leaky ReLU, elementwise arithmetic, MAE/MSE
//! reductions, and the Adam optimizer. Ops record backward closures on a
//! [`Tape`]; `Tape::backward` replays them in reverse.
//!
//! Downstream crates add their own differentiable ops (transforms, warping
//! losses, pixel rearrangements) through [`Tape::record`] and the gradient
//! accessors on [`Tensor`].

mod adam;
mod checkpoint;
mod conv;
mod error;
mod gemm;
pub mod ops;
mod tape;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{load as load_checkpoint, save as save_checkpoint, Entry as CheckpointEntry};
pub use error::{Result, TensorError};
pub use gemm::{dgemm, sgemm};
pub use tape::Tape;
pub use tensor::{ensure_finite, Tensor};
