//! Over-the-air federated multi-task learning.
//!
//! Multiple learning tasks share one fading multiple-access uplink: every
//! device sparsifies its per-task gradients with error feedback, compresses
//! them through per-task partial-orthonormal operators, superposes the
//! results, and transmits with truncated channel inversion. All devices
//! send simultaneously; the receiver separates the per-task aggregated
//! gradients from the single superposed observation with a turbo
//! compressed-sensing loop whose denoiser knows (or estimates) each task's
//! Bernoulli-Gaussian prior.
//!
//! The crate provides the full pipeline plus its analysis companions:
//!
//! - [`transform`]: fast partial-DCT compression operators.
//! - [`prior`]: Bernoulli-Gaussian denoiser, MMSE curve, and EM refitting.
//! - [`transmitter`]: device-side sparsify / compress / superpose / invert.
//! - [`channel`]: fading multiple-access channel and observation scaling.
//! - [`receiver`]: multi-task turbo recovery and baselines.
//! - [`analysis`]: state evolution, loss-gap bound, error decomposition.
//! - [`harness`]: end-to-end federated training with comparison schemes.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod harness;
pub mod prior;
pub mod quad;
pub mod receiver;
pub mod seeds;
pub mod simulate;
pub mod transform;
pub mod transmitter;
pub mod util;

pub use error::{Error, Result};
