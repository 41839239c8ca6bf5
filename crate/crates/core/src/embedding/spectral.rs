//! Built-in deterministic encoder: 64-band log-mel frames (25 ms window,
//! 10 ms hop). Each frame row holds the log-mel values followed by their
//! absolute deviation from the segment's per-band mean, so mean pooling
//! yields per-band mean and mean absolute deviation (`D = 128`).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Encoder, FrameMatrix};
use crate::audio::{Segment, SEGMENT_RATE};
use crate::error::Result;

pub const N_MELS: usize = 64;
/// Added to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

const WINDOW: usize = 400;
const HOP: usize = 160;
const N_FFT: usize = 512;

pub struct SpectralEncoder {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// `N_MELS` rows of `N_FFT / 2 + 1` triangle weights.
    filterbank: Vec<Vec<f64>>,
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn mel_filterbank(rate: f64) -> Vec<Vec<f64>> {
    let bins = N_FFT / 2 + 1;
    let top = hz_to_mel(rate / 2.0);
    let edges: Vec<f64> = (0..N_MELS + 2).map(|i| mel_to_hz(top * i as f64 / (N_MELS + 1) as f64)).collect();
    (0..N_MELS)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|b| {
                    let f = b as f64 * rate / N_FFT as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

impl Default for SpectralEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectralEncoder {
    pub const NAME: &'static str = "builtin-logmel-v1";

    pub fn new() -> Self {
        let window =
            (0..WINDOW).map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64).cos()).collect();
        SpectralEncoder {
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
            window,
            filterbank: mel_filterbank(SEGMENT_RATE as f64),
        }
    }

    /// Log-mel rows, `T × N_MELS`.
    pub fn log_mel(&self, samples: &[f64]) -> Vec<Vec<f64>> {
        if samples.len() < WINDOW {
            return Vec::new();
        }
        let n_frames = 1 + (samples.len() - WINDOW) / HOP;
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        (0..n_frames)
            .map(|t| {
                let frame = &samples[t * HOP..t * HOP + WINDOW];
                for (i, c) in buf.iter_mut().enumerate() {
                    let v = if i < WINDOW { frame[i] * self.window[i] } else { 0.0 };
                    *c = Complex::new(v, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                let power: Vec<f64> = buf[..N_FFT / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
                self.filterbank
                    .iter()
                    .map(|w| {
                        let e: f64 = w.iter().zip(&power).map(|(a, p)| a * p).sum();
                        (e + LOG_FLOOR).ln()
                    })
                    .collect()
            })
            .collect()
    }
}

impl Encoder for SpectralEncoder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        2 * N_MELS
    }

    fn frames(&self, segment: &Segment) -> Result<FrameMatrix> {
        let rows = self.log_mel(segment.samples());
        let t = rows.len();
        let mut mean = vec![0.0; N_MELS];
        for row in &rows {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / t as f64);
        }
        let mut data = Vec::with_capacity(t * 2 * N_MELS);
        for row in &rows {
            data.extend_from_slice(row);
            data.extend(row.iter().zip(&mean).map(|(v, m)| (v - m).abs()));
        }
        FrameMatrix::new(t, 2 * N_MELS, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::embedding::{embed, embed_batch, probe_dim};
    use crate::synth;

    fn seg(samples: Vec<f64>, index: usize) -> Segment {
        Segment::new(AudioBuffer::mono(samples, 16_000).unwrap(), "t", index).unwrap()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn silence_gives_floor_vector() {
        let enc = SpectralEncoder::new();
        let e = embed(&seg(vec![0.0; 48_000], 0), &enc).unwrap();
        assert_eq!(e.dim(), 128);
        assert!(e.values[..N_MELS].iter().all(|&v| (v - LOG_FLOOR.ln()).abs() < 1e-9));
        assert!(e.values[N_MELS..].iter().all(|&v| v.abs() < 1e-9));
        assert_eq!(probe_dim(&enc).unwrap(), 128);
    }

    #[test]
    fn frame_count() {
        let enc = SpectralEncoder::new();
        let m = enc.frames(&seg(vec![0.0; 48_000], 0)).unwrap();
        assert_eq!(m.frames, 298);
        assert_eq!(m.dim, 128);
    }

    #[test]
    fn different_tones_differ() {
        let enc = SpectralEncoder::new();
        let a = embed(&seg(synth::sine(1000.0, 0.5, 16_000, 48_000), 0), &enc).unwrap();
        let b = embed(&seg(synth::sine(4000.0, 0.5, 16_000, 48_000), 0), &enc).unwrap();
        assert!(cosine(&a.values, &b.values) < 0.99);
    }

    #[test]
    fn deterministic_and_parallel_safe() {
        let enc = SpectralEncoder::new();
        let segs: Vec<Segment> =
            (0..4).map(|i| seg(synth::noise(synth::NoiseColor::Pink, 0.5, 48_000, i), i as usize)).collect();
        let single: Vec<_> = segs.iter().map(|s| embed(s, &enc).unwrap()).collect();
        let serial = embed_batch(&segs, &enc, 1).unwrap();
        let parallel = embed_batch(&segs, &enc, 4).unwrap();
        assert_eq!(single, serial);
        assert_eq!(serial, parallel);
        assert!(embed_batch(&[], &enc, 4).unwrap().is_empty());
    }

    #[test]
    fn pooled_frames_equal_embedding() {
        let enc = SpectralEncoder::new();
        let s = seg(synth::instrument(crate::taxonomy::StemId::Piano, 16_000, 3.0, 1), 0);
        let m = enc.frames(&s).unwrap();
        let e = embed(&s, &enc).unwrap();
        assert_eq!(m.mean_pool(), e.values);
    }
}
