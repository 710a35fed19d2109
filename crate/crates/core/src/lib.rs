//! Relative localization of several acoustic devices without anchors or
//! clock synchronization.
//!
//! The pipeline mirrors what a coordinating server does with the recordings
//! it collects from the phones:
//!
//! 1. [`pulse`]: every phone gets its own pseudo-noise sequence, upsampled
//!    and moved onto a high-frequency carrier.
//! 2. [`schedule`]: emission offsets that keep pulses from colliding and keep
//!    every pulse inside every recording window.
//! 3. [`sim`]: synthetic sessions (geometry, propagation, noise, OS jitter)
//!    with exact ground truth.
//! 4. [`detect`]: sign filter, binary matched filter and iterative
//!    cancellation recover the arrival sample of every pulse in every
//!    recording.
//! 5. [`ranging`]: elapsed-time-between-arrivals sample counting turns
//!    arrival indices into pairwise distances.
//! 6. [`fusion`]: repeated measurement sets become one weighted problem.
//! 7. [`mds`]: classical MDS and alternating coordinate descent on s-stress.
//! 8. [`eval`]: orthogonal Procrustes alignment and error statistics.

pub mod detect;
pub mod edm;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod mds;
pub mod pulse;
pub mod ranging;
pub mod schedule;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};

/// Sampling rate used throughout the pipeline unless overridden.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 48_000.0;
