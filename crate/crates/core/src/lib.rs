//! Residual diffusion codec toolkit.
//!
//! Compression-aware diffusion (forward process, reverse sampler, training
//! loss), a quantizer with range-coded latents, semantic residual and token
//! index coding, and rate-distortion evaluation.

mod bytes;
pub mod codec;
pub mod semantic;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod latent;
pub mod rd;
pub mod schedule;

pub use error::{Error, Result};
pub use latent::Latent;
pub use schedule::{Schedule, ScheduleConfig, ScheduleKind};
