//! Curation of single-instrument stem datasets from noisy crawled audio.
//!
//! Tracks are cut into 3 s windows, each window is embedded by a frozen
//! encoder and scored by a per-stem binary purity head, and the windows that
//! score as pure are spliced back into a clean track.

pub mod audio;
pub mod classifier;
pub mod cleaner;
pub mod config;
pub mod crawler;
pub mod dsp;
pub mod embedding;
pub mod error;
pub mod mixture;
pub mod pipeline;
pub mod sdr;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
