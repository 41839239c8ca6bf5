use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const THRESHOLD_RANGE: (f64, f64) = (0.1, 0.3);

/// Feed-forward peak compressor settings. The threshold is a linear amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressorParams {
    pub threshold: f64,
    pub ratio: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
}

impl Default for CompressorParams {
    fn default() -> Self {
        CompressorParams { threshold: 0.2, ratio: 4.0, attack_ms: 5.0, release_ms: 100.0 }
    }
}

impl CompressorParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = THRESHOLD_RANGE;
        if !(lo..=hi).contains(&self.threshold) {
            return Err(Error::param("threshold", format!("{} outside [{lo}, {hi}]", self.threshold)));
        }
        if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
            return Err(Error::param("ratio", format!("{} must be >= 1", self.ratio)));
        }
        for (name, v) in [("attack_ms", self.attack_ms), ("release_ms", self.release_ms)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        Ok(())
    }

    /// Static gain law applied to an envelope value.
    pub fn gain(&self, envelope: f64) -> f64 {
        if envelope <= self.threshold {
            1.0
        } else {
            self.threshold * (envelope / self.threshold).powf(1.0 / self.ratio) / envelope
        }
    }
}

/// Compresses with an envelope follower linked across channels.
pub fn compress(x: &AudioBuffer, params: CompressorParams) -> Result<AudioBuffer> {
    params.validate()?;
    if params.ratio == 1.0 {
        return Ok(x.clone());
    }
    let rate = x.sample_rate() as f64;
    let attack = (-1.0 / (params.attack_ms / 1000.0 * rate)).exp();
    let release = (-1.0 / (params.release_ms / 1000.0 * rate)).exp();

    let mut env = 0.0f64;
    let gains: Vec<f64> = (0..x.frames())
        .map(|i| {
            let level = x.channels().iter().map(|c| c[i].abs()).fold(0.0, f64::max);
            let coef = if level > env { attack } else { release };
            env = coef * env + (1.0 - coef) * level;
            params.gain(env)
        })
        .collect();
    Ok(x.map_channels(|c| c.iter().zip(&gains).map(|(s, g)| s * g).collect()))
}
