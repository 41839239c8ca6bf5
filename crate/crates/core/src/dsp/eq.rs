//! Three-band style equalizer built from RBJ cookbook biquads.

use serde::{Deserialize, Serialize};

use super::biquad::{Biquad, BiquadState};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const MAX_GAIN_DB: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    LowShelf,
    Peak,
    HighShelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqBand {
    pub kind: BandKind,
    /// Shelf midpoint or peak centre.
    pub freq_hz: f64,
    pub gain_db: f64,
    /// Peak bandwidth; shelves use a slope of one and ignore it.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    0.7
}

impl EqBand {
    pub fn low_shelf(freq_hz: f64, gain_db: f64) -> Self {
        EqBand { kind: BandKind::LowShelf, freq_hz, gain_db, q: default_q() }
    }

    pub fn peak(freq_hz: f64, gain_db: f64, q: f64) -> Self {
        EqBand { kind: BandKind::Peak, freq_hz, gain_db, q }
    }

    pub fn high_shelf(freq_hz: f64, gain_db: f64) -> Self {
        EqBand { kind: BandKind::HighShelf, freq_hz, gain_db, q: default_q() }
    }

    /// Low-shelf 100 Hz, peak 1 kHz (Q 0.7), high-shelf 8 kHz.
    pub fn default_bands(gains_db: [f64; 3]) -> [EqBand; 3] {
        [
            EqBand::low_shelf(100.0, gains_db[0]),
            EqBand::peak(1000.0, gains_db[1], 0.7),
            EqBand::high_shelf(8000.0, gains_db[2]),
        ]
    }

    pub fn biquad(&self, sample_rate: u32) -> Result<Biquad> {
        if self.gain_db.is_nan() || self.gain_db.abs() > MAX_GAIN_DB {
            return Err(Error::param("gain_db", format!("{} outside ±{MAX_GAIN_DB} dB", self.gain_db)));
        }
        if self.gain_db == 0.0 {
            return Ok(Biquad::IDENTITY);
        }
        let fs = sample_rate as f64;
        if !(self.freq_hz > 0.0 && self.freq_hz < fs / 2.0) {
            return Err(Error::UnstableFilter(format!("{} Hz is not below Nyquist ({} Hz)", self.freq_hz, fs / 2.0)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::param("q", format!("{} must be positive", self.q)));
        }
        let a = 10f64.powf(self.gain_db / 40.0);
        let w = 2.0 * std::f64::consts::PI * self.freq_hz / fs;
        let (sin, cos) = w.sin_cos();
        let (b, den) = match self.kind {
            BandKind::Peak => {
                let alpha = sin / (2.0 * self.q);
                ([1.0 + alpha * a, -2.0 * cos, 1.0 - alpha * a], [1.0 + alpha / a, -2.0 * cos, 1.0 - alpha / a])
            }
            BandKind::LowShelf | BandKind::HighShelf => {
                // shelf slope S = 1
                let alpha = sin / 2.0 * 2f64.sqrt();
                let k = 2.0 * a.sqrt() * alpha;
                let sign = if self.kind == BandKind::LowShelf { 1.0 } else { -1.0 };
                let (ap, am) = (a + 1.0, a - 1.0);
                (
                    [
                        a * (ap - sign * am * cos + k),
                        sign * 2.0 * a * (am - sign * ap * cos),
                        a * (ap - sign * am * cos - k),
                    ],
                    [ap + sign * am * cos + k, -sign * 2.0 * (am + sign * ap * cos), ap + sign * am * cos - k],
                )
            }
        };
        Biquad::from_raw(b, den)
    }
}

/// Runs the bands in series over every channel.
pub fn eq(x: &AudioBuffer, bands: &[EqBand]) -> Result<AudioBuffer> {
    let filters: Vec<Biquad> = bands.iter().map(|b| b.biquad(x.sample_rate())).collect::<Result<_>>()?;
    Ok(x.map_channels(|c| {
        let mut states = vec![BiquadState::default(); filters.len()];
        c.iter().map(|&s| filters.iter().zip(states.iter_mut()).fold(s, |acc, (f, st)| st.step(f, acc))).collect()
    }))
}
