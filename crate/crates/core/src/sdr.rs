//! Signal-to-distortion ratio between a reference and an estimate.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Returned when the residual vanishes.
pub const SDR_CAP_DB: f64 = 100.0;

/// `10 log10(‖ref‖² / ‖ref − est‖²)` over all channels, capped at +100 dB.
pub fn sdr(reference: &AudioBuffer, estimate: &AudioBuffer) -> Result<f64> {
    if reference.num_channels() != estimate.num_channels() || reference.frames() != estimate.frames() {
        return Err(Error::Layout(format!(
            "reference is {}x{}, estimate is {}x{}",
            reference.num_channels(),
            reference.frames(),
            estimate.num_channels(),
            estimate.frames()
        )));
    }
    let mut signal = 0.0;
    let mut residual = 0.0;
    for (r, e) in reference.channels().iter().zip(estimate.channels()) {
        for (a, b) in r.iter().zip(e) {
            signal += a * a;
            residual += (a - b) * (a - b);
        }
    }
    if signal == 0.0 {
        return Err(Error::param("reference", "all-zero reference"));
    }
    if residual == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (signal / residual).log10()).min(SDR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(v: Vec<f64>) -> AudioBuffer {
        AudioBuffer::mono(v, 16_000).unwrap()
    }

    #[test]
    fn identity_is_capped() {
        let r = mono(crate::synth::sine(440.0, 0.5, 16_000, 1600));
        assert_eq!(sdr(&r, &r).unwrap(), 100.0);
    }

    #[test]
    fn zero_estimate_is_zero_db() {
        let r = mono(vec![0.5, -0.25, 1.0]);
        assert_eq!(sdr(&r, &mono(vec![0.0; 3])).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let r = mono(vec![0.0; 3]);
        assert!(sdr(&r, &r).is_err());
        assert!(sdr(&mono(vec![1.0; 3]), &mono(vec![1.0; 4])).is_err());
    }
}
