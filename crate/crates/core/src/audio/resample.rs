//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.

use super::AudioBuffer;
use crate::error::{Error, Result};

/// Zero crossings of the sinc on each side of the kernel centre.
const ZERO_CROSSINGS: usize = 32;
/// Kaiser shape parameter; roughly 85 dB stopband attenuation.
const KAISER_BETA: f64 = 8.6;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;
/// Largest phase count for which the kernel table is precomputed.
const MAX_TABLE_PHASES: u64 = 8192;

pub fn resample(x: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::param("target_rate", "must be positive"));
    }
    if target_rate == x.sample_rate() {
        return Ok(x.clone());
    }
    let kernel = Kernel::new(x.sample_rate(), target_rate);
    let out_frames = kernel.output_len(x.frames());
    let channels = x.channels().iter().map(|c| kernel.apply(c, out_frames)).collect();
    Ok(AudioBuffer::from_parts(channels, target_rate))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    up: u64,
    down: u64,
    cutoff: f64,
    half_width: f64,
    taps: usize,
    norm: f64,
    table: Option<Vec<Vec<f64>>>,
}

impl Kernel {
    fn new(source: u32, target: u32) -> Self {
        let g = gcd(source as u64, target as u64);
        let up = target as u64 / g;
        let down = source as u64 / g;
        let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
        let half_width = ZERO_CROSSINGS as f64 / cutoff;
        let taps = 2 * half_width.ceil() as usize;
        let mut kernel = Kernel { up, down, cutoff, half_width, taps, norm: bessel_i0(KAISER_BETA), table: None };
        if up <= MAX_TABLE_PHASES {
            kernel.table = Some((0..up).map(|p| kernel.phase_taps(p)).collect());
        }
        kernel
    }

    fn output_len(&self, frames: usize) -> usize {
        ((frames as u64 * self.up + self.down / 2) / self.down) as usize
    }

    fn first_offset(&self) -> i64 {
        self.taps as i64 / 2 - 1
    }

    fn weight(&self, tau: f64) -> f64 {
        if tau.abs() > self.half_width {
            return 0.0;
        }
        let arg = std::f64::consts::PI * self.cutoff * tau;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        let r = tau / self.half_width;
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / self.norm;
        self.cutoff * sinc * window
    }

    /// Taps for output positions falling `phase / up` input samples past an
    /// integer index, normalized to unit DC gain.
    fn phase_taps(&self, phase: u64) -> Vec<f64> {
        let frac = phase as f64 / self.up as f64;
        let offset = self.first_offset();
        let mut taps: Vec<f64> = (0..self.taps).map(|k| self.weight(k as f64 - offset as f64 - frac)).collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }

    fn apply(&self, input: &[f64], out_frames: usize) -> Vec<f64> {
        let offset = self.first_offset();
        let n_in = input.len() as i64;
        let mut out = Vec::with_capacity(out_frames);
        let mut scratch;
        for n in 0..out_frames as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = pos % self.up;
            let taps: &[f64] = match &self.table {
                Some(table) => &table[phase as usize],
                None => {
                    scratch = self.phase_taps(phase);
                    &scratch
                }
            };
            let start = base - offset;
            let lo = (-start).max(0) as usize;
            let hi = ((n_in - start).max(0) as usize).min(taps.len());
            let mut acc = 0.0;
            for k in lo..hi {
                acc += taps[k] * input[(start + k as i64) as usize];
            }
            out.push(acc);
        }
        out
    }
}
