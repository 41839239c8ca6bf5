//! Integrated loudness in LKFS following the ITU-R BS.1770 K-weighted,
//! gated mean-square procedure.
//!
//! The K-weighting filter coefficients are derived from their analog
//! prototypes for the buffer's own sample rate, so no resampling to 48 kHz is
//! needed before measuring.

use serde::{Deserialize, Serialize};

use super::biquad::Biquad;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

const BLOCK_S: f64 = 0.4;
const HOP_S: f64 = 0.1;
const ABSOLUTE_GATE: f64 = -70.0;
const RELATIVE_GATE: f64 = -10.0;
const OFFSET: f64 = -0.691;

/// Normalization target in LKFS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoudnessTarget {
    pub lufs: f64,
}

impl Default for LoudnessTarget {
    fn default() -> Self {
        LoudnessTarget { lufs: -23.0 }
    }
}

impl LoudnessTarget {
    pub fn new(lufs: f64) -> Result<Self> {
        if !(-70.0..=0.0).contains(&lufs) {
            return Err(Error::param("loudness target", format!("{lufs} outside [-70, 0] LKFS")));
        }
        Ok(LoudnessTarget { lufs })
    }
}

/// High-shelf pre-filter and RLB high-pass of the K-weighting curve.
pub fn k_weighting(sample_rate: u32) -> [Biquad; 2] {
    let fs = sample_rate as f64;
    let pi = std::f64::consts::PI;

    let f0 = 1_681.974_450_955_533;
    let gain_db = 3.999_843_853_973_347;
    let q = 0.707_175_236_955_419_6;
    let k = (pi * f0 / fs).tan();
    let vh = 10f64.powf(gain_db / 20.0);
    let vb = vh.powf(0.499_666_774_154_541_6);
    let a0 = 1.0 + k / q + k * k;
    let shelf = Biquad {
        b0: (vh + vb * k / q + k * k) / a0,
        b1: 2.0 * (k * k - vh) / a0,
        b2: (vh - vb * k / q + k * k) / a0,
        a1: 2.0 * (k * k - 1.0) / a0,
        a2: (1.0 - k / q + k * k) / a0,
    };

    let f0 = 38.135_470_876_024_44;
    let q = 0.500_327_037_323_877_3;
    let k = (pi * f0 / fs).tan();
    let a0 = 1.0 + k / q + k * k;
    let highpass = Biquad { b0: 1.0, b1: -2.0, b2: 1.0, a1: 2.0 * (k * k - 1.0) / a0, a2: (1.0 - k / q + k * k) / a0 };
    [shelf, highpass]
}

/// Mean-square power of each 400 ms block (75 % overlap), summed over channels.
fn block_powers(x: &AudioBuffer) -> Vec<f64> {
    let rate = x.sample_rate() as f64;
    let block = (BLOCK_S * rate).round() as usize;
    let hop = (HOP_S * rate).round() as usize;
    if x.frames() < block || block == 0 {
        return Vec::new();
    }
    let n_blocks = (x.frames() - block) / hop + 1;
    let [shelf, highpass] = k_weighting(x.sample_rate());

    let mut powers = vec![0.0; n_blocks];
    for channel in x.channels() {
        let weighted = highpass.process(&shelf.process(channel));
        // prefix sums of squares make each block O(1)
        let mut prefix = Vec::with_capacity(weighted.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for s in &weighted {
            acc += s * s;
            prefix.push(acc);
        }
        for (j, p) in powers.iter_mut().enumerate() {
            let start = j * hop;
            *p += (prefix[start + block] - prefix[start]) / block as f64;
        }
    }
    powers
}

fn power_to_lkfs(power: f64) -> f64 {
    OFFSET + 10.0 * power.log10()
}

/// Gated integrated loudness.
pub fn measure_lufs(x: &AudioBuffer) -> Result<f64> {
    if x.duration_s() < BLOCK_S - 1e-9 {
        return Err(Error::Unmeasurable(format!("{:.3} s is shorter than one 400 ms gating block", x.duration_s())));
    }
    let powers = block_powers(x);
    let above_abs: Vec<f64> = powers.into_iter().filter(|&p| p > 0.0 && power_to_lkfs(p) > ABSOLUTE_GATE).collect();
    if above_abs.is_empty() {
        return Err(Error::Unmeasurable("no block above the -70 LKFS absolute gate".into()));
    }
    let mean = above_abs.iter().sum::<f64>() / above_abs.len() as f64;
    let relative = power_to_lkfs(mean) + RELATIVE_GATE;
    let gated: Vec<f64> = above_abs.into_iter().filter(|&p| power_to_lkfs(p) > relative).collect();
    let mean = gated.iter().sum::<f64>() / gated.len() as f64;
    Ok(power_to_lkfs(mean))
}

/// Linear gain that moves `measured` loudness to `target`.
pub fn gain_for(measured: f64, target: LoudnessTarget) -> f64 {
    10f64.powf((target.lufs - measured) / 20.0)
}

/// Applies the pure gain that brings `x` to `target`.
pub fn normalize_lufs(x: &AudioBuffer, target: LoudnessTarget) -> Result<AudioBuffer> {
    let measured = measure_lufs(x)?;
    Ok(x.scaled(gain_for(measured, target)))
}
