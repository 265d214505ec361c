//! Residual audio steganography at desk scale: encode an RGB image as a
//! host-independent spectrogram stamp, add it to the short-time DCT of any
//! host audio, push the container waveform through simulated noisy channels,
//! and reveal the image with a learned decoder.

pub mod channel;
pub mod dsp;
mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod trainer;

pub use error::{Error, Result};
