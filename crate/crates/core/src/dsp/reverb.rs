//! Schroeder reverberator: four parallel feedback combs into two series allpasses.
//!
//! Each comb's feedback gain is solved from the requested RT60 so that its
//! loop decays by 60 dB in exactly `rt60_s` seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const RT60_RANGE: (f64, f64) = (0.3, 1.4);

const COMB_DELAYS_MS: [f64; 4] = [29.7, 37.1, 41.1, 43.7];
const ALLPASS: [(f64, f64); 2] = [(5.0, 0.7), (1.7, 0.7)];
/// Relative spread applied to comb delays per seed and channel.
const DELAY_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverbParams {
    pub rt60_s: f64,
    /// Wet share of the output; the dry share is `1 - wet`.
    pub wet: f64,
}

impl ReverbParams {
    pub fn new(rt60_s: f64) -> Result<Self> {
        let p = ReverbParams { rt60_s, wet: 0.35 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = RT60_RANGE;
        if !(lo..=hi).contains(&self.rt60_s) {
            return Err(Error::param("rt60_s", format!("{} outside [{lo}, {hi}]", self.rt60_s)));
        }
        if !(0.0..=1.0).contains(&self.wet) {
            return Err(Error::param("wet", format!("{} outside [0, 1]", self.wet)));
        }
        Ok(())
    }
}

struct Comb {
    buf: Vec<f64>,
    pos: usize,
    gain: f64,
}

impl Comb {
    fn step(&mut self, x: f64) -> f64 {
        let y = self.buf[self.pos];
        self.buf[self.pos] = x + self.gain * y;
        self.pos = (self.pos + 1) % self.buf.len();
        y
    }
}

struct Allpass {
    buf: Vec<f64>,
    pos: usize,
    gain: f64,
}

impl Allpass {
    fn step(&mut self, x: f64) -> f64 {
        let delayed = self.buf[self.pos];
        let v = x + self.gain * delayed;
        self.buf[self.pos] = v;
        self.pos = (self.pos + 1) % self.buf.len();
        delayed - self.gain * v
    }
}

fn delay_samples(ms: f64, rate: f64) -> usize {
    ((ms / 1000.0 * rate).round() as usize).max(1)
}

/// Wet-only impulse response processing of one channel.
fn wet_channel(input: &[f64], rate: f64, rt60_s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut combs: Vec<Comb> = COMB_DELAYS_MS
        .iter()
        .map(|&ms| {
            let jitter = 1.0 + rng.random_range(-DELAY_JITTER..=DELAY_JITTER);
            let len = delay_samples(ms * jitter, rate);
            Comb { buf: vec![0.0; len], pos: 0, gain: 10f64.powf(-3.0 * len as f64 / rate / rt60_s) }
        })
        .collect();
    let mut allpasses: Vec<Allpass> =
        ALLPASS.iter().map(|&(ms, gain)| Allpass { buf: vec![0.0; delay_samples(ms, rate)], pos: 0, gain }).collect();
    let scale = 1.0 / combs.len() as f64;
    input
        .iter()
        .map(|&x| {
            let sum: f64 = combs.iter_mut().map(|c| c.step(x)).sum::<f64>() * scale;
            allpasses.iter_mut().fold(sum, |acc, ap| ap.step(acc))
        })
        .collect()
}

/// Reverberates `x`; the tail past the input length is truncated.
pub fn reverb_with(x: &AudioBuffer, params: ReverbParams, seed: u64) -> Result<AudioBuffer> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = x.sample_rate() as f64;
    Ok(x.map_channels(|c| {
        let wet = wet_channel(c, rate, params.rt60_s, &mut rng);
        c.iter().zip(wet).map(|(&d, w)| (1.0 - params.wet) * d + params.wet * w).collect()
    }))
}

pub fn reverb(x: &AudioBuffer, rt60_s: f64, seed: u64) -> Result<AudioBuffer> {
    reverb_with(x, ReverbParams::new(rt60_s)?, seed)
}

/// Estimates RT60 from an impulse response by Schroeder backward integration,
/// fitting the -5 dB to -25 dB span of the decay curve and extrapolating to 60 dB.
pub fn estimate_rt60(impulse_response: &[f64], rate: f64) -> Option<f64> {
    let mut edc: Vec<f64> = Vec::with_capacity(impulse_response.len());
    let mut acc = 0.0;
    for s in impulse_response.iter().rev() {
        acc += s * s;
        edc.push(acc);
    }
    edc.reverse();
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let points: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, e)| (i as f64 / rate, 10.0 * (e / total).log10()))
        .filter(|&(_, db)| (-25.0..=-5.0).contains(&db))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_db = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_db)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let slope = cov / var;
    (slope < 0.0).then(|| -60.0 / slope)
}
