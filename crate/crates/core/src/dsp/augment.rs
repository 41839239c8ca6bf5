use rand::Rng;
use serde::{Deserialize, Serialize};

use super::compressor::{compress, CompressorParams, THRESHOLD_RANGE};
use super::eq::{eq, EqBand, MAX_GAIN_DB};
use super::reverb::{reverb_with, ReverbParams, RT60_RANGE};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Randomization ranges for the three augmentation effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub rt60_range_s: (f64, f64),
    pub reverb_wet: f64,
    pub comp_threshold_range: (f64, f64),
    pub comp_ratio: f64,
    pub comp_attack_ms: f64,
    pub comp_release_ms: f64,
    /// Band layout; each band's gain is redrawn uniformly in ±`eq_gain_db`.
    pub eq_bands: Vec<EqBand>,
    pub eq_gain_db: f64,
    pub p_reverb: f64,
    pub p_compress: f64,
    pub p_eq: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rt60_range_s: RT60_RANGE,
            reverb_wet: 0.35,
            comp_threshold_range: THRESHOLD_RANGE,
            comp_ratio: 4.0,
            comp_attack_ms: 5.0,
            comp_release_ms: 100.0,
            eq_bands: EqBand::default_bands([0.0; 3]).to_vec(),
            eq_gain_db: MAX_GAIN_DB,
            p_reverb: 0.5,
            p_compress: 0.5,
            p_eq: 0.5,
        }
    }
}

impl AugmentConfig {
    /// No effect is ever applied.
    pub fn disabled() -> Self {
        AugmentConfig { p_reverb: 0.0, p_compress: 0.0, p_eq: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |name: &'static str, (lo, hi): (f64, f64), (min, max): (f64, f64)| {
            if lo <= hi && lo >= min && hi <= max {
                Ok(())
            } else {
                Err(Error::param(name, format!("[{lo}, {hi}] not within [{min}, {max}]")))
            }
        };
        within("rt60_range_s", self.rt60_range_s, RT60_RANGE)?;
        within("comp_threshold_range", self.comp_threshold_range, THRESHOLD_RANGE)?;
        within("eq_gain_db", (0.0, self.eq_gain_db), (0.0, MAX_GAIN_DB))?;
        for (name, p) in [("p_reverb", self.p_reverb), ("p_compress", self.p_compress), ("p_eq", self.p_eq)] {
            within(name, (p, p), (0.0, 1.0))?;
        }
        Ok(())
    }

    /// Draws concrete effect settings.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentDraw {
        let uniform = |rng: &mut R, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let reverb = rng.random_bool(self.p_reverb).then(|| {
            let params = ReverbParams { rt60_s: uniform(rng, self.rt60_range_s), wet: self.reverb_wet };
            (params, rng.random::<u64>())
        });
        let compressor = rng.random_bool(self.p_compress).then(|| CompressorParams {
            threshold: uniform(rng, self.comp_threshold_range),
            ratio: self.comp_ratio,
            attack_ms: self.comp_attack_ms,
            release_ms: self.comp_release_ms,
        });
        let eq_bands = rng.random_bool(self.p_eq).then(|| {
            self.eq_bands
                .iter()
                .map(|b| EqBand { gain_db: uniform(rng, (-self.eq_gain_db, self.eq_gain_db)), ..*b })
                .collect()
        });
        AugmentDraw { reverb, compressor, eq_bands }
    }
}

/// One concrete augmentation: each effect present or absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub reverb: Option<(ReverbParams, u64)>,
    pub compressor: Option<CompressorParams>,
    pub eq_bands: Option<Vec<EqBand>>,
}

impl AugmentDraw {
    /// Applies EQ, then compression, then reverb.
    pub fn apply(&self, x: &AudioBuffer) -> Result<AudioBuffer> {
        let mut y = x.clone();
        if let Some(bands) = &self.eq_bands {
            y = eq(&y, bands)?;
        }
        if let Some(params) = self.compressor {
            y = compress(&y, params)?;
        }
        if let Some((params, seed)) = self.reverb {
            y = reverb_with(&y, params, seed)?;
        }
        Ok(y)
    }
}
