//! Loudness measurement and the augmentation effects used for training mixtures.

mod augment;
pub mod biquad;
mod compressor;
mod eq;
pub mod loudness;
mod reverb;

pub use augment::{AugmentConfig, AugmentDraw};
pub use compressor::{compress, CompressorParams};
pub use eq::{eq, BandKind, EqBand};
pub use loudness::{measure_lufs, normalize_lufs, LoudnessTarget};
pub use reverb::{estimate_rt60, reverb, reverb_with, ReverbParams};
