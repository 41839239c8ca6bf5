//! Audio buffers, WAV I/O, resampling, and 3 s segmentation.

mod buffer;
mod resample;
mod segment;
pub mod wav;

pub use buffer::{safe_normalize, to_mono, AudioBuffer, SAFE_NORM_EPS};
pub use resample::resample;
pub use segment::{
    dropped_frames, segment, splice, Segment, SpliceOptions, SEGMENT_FRAMES, SEGMENT_RATE, SEGMENT_SECONDS,
};
pub use wav::{read_wav, write_wav, WavFormat};

/// Downmixes and resamples to the classifier input format.
pub fn to_segment_format(x: &AudioBuffer) -> crate::Result<AudioBuffer> {
    resample(&to_mono(x), SEGMENT_RATE)
}
