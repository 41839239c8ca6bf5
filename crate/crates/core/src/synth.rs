//! Deterministic synthetic signals: tones, colored noise, and instrument-like
//! stand-ins used for fixture pools and the synthetic noise fallback.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{wav, AudioBuffer, WavFormat};
use crate::error::Result;
use crate::mixture::{PoolEntry, SourcePool};
use crate::taxonomy::StemId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    White,
    Pink,
}

pub fn sine(freq: f64, amplitude: f64, rate: u32, frames: usize) -> Vec<f64> {
    (0..frames).map(|i| amplitude * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

/// Uniform white or Paul Kellet filtered pink noise, peak near `amplitude`.
pub fn noise(color: NoiseColor, amplitude: f64, frames: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = (0..frames).map(|_| rng.random_range(-1.0..1.0));
    match color {
        NoiseColor::White => white.map(|s| s * amplitude).collect(),
        NoiseColor::Pink => {
            let mut b = [0.0f64; 7];
            white
                .map(|w| {
                    b[0] = 0.99886 * b[0] + w * 0.0555179;
                    b[1] = 0.99332 * b[1] + w * 0.0750759;
                    b[2] = 0.96900 * b[2] + w * 0.1538520;
                    b[3] = 0.86650 * b[3] + w * 0.3104856;
                    b[4] = 0.55000 * b[4] + w * 0.5329522;
                    b[5] = -0.7616 * b[5] - w * 0.0168980;
                    let pink = b[..6].iter().sum::<f64>() + b[6] + w * 0.5362;
                    b[6] = w * 0.115926;
                    pink * 0.11 * amplitude
                })
                .collect()
        }
    }
}

fn harmonic_note(out: &mut [f64], start: usize, len: usize, freq: f64, rate: f64, harmonics: &[f64], decay_s: f64) {
    for i in 0..len.min(out.len().saturating_sub(start)) {
        let t = i as f64 / rate;
        let env = (-t / decay_s).exp() * (1.0 - (-t * 400.0).exp());
        let v: f64 = harmonics.iter().enumerate().map(|(h, a)| a * (2.0 * PI * freq * (h + 1) as f64 * t).sin()).sum();
        out[start + i] += env * v;
    }
}

/// A short synthetic phrase with a timbre characteristic of `stem`.
pub fn instrument(stem: StemId, rate: u32, seconds: f64, seed: u64) -> Vec<f64> {
    let frames = (seconds * rate as f64) as usize;
    let fs = rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (stem as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = vec![0.0; frames];
    let note = (0.25 * fs) as usize;
    let pick = |rng: &mut ChaCha8Rng, base: f64| base * 2f64.powf(rng.random_range(0..12) as f64 / 12.0);
    match stem {
        StemId::Piano => {
            for start in (0..frames).step_by(note * 2) {
                let f = pick(&mut rng, 262.0);
                harmonic_note(&mut out, start, note * 4, f, fs, &[1.0, 0.5, 0.25, 0.12], 0.4);
            }
        }
        StemId::Drums => {
            for start in (0..frames).step_by(note) {
                let burst = noise(NoiseColor::White, 1.0, note, rng.random());
                for (i, s) in burst.iter().enumerate().take(frames - start) {
                    let t = i as f64 / fs;
                    out[start + i] += s * (-t * 30.0).exp() + (2.0 * PI * 60.0 * t).sin() * (-t * 20.0).exp();
                }
            }
        }
        StemId::Bass => {
            for start in (0..frames).step_by(note * 2) {
                let f = pick(&mut rng, 55.0);
                harmonic_note(&mut out, start, note * 2, f, fs, &[1.0, 0.3], 0.8);
            }
        }
        StemId::AcousticGuitar => {
            // Karplus-Strong plucks
            for start in (0..frames).step_by(note * 2) {
                let f = pick(&mut rng, 196.0);
                let period = (fs / f) as usize;
                let mut line = noise(NoiseColor::White, 1.0, period, rng.random());
                for i in 0..(note * 2).min(frames - start) {
                    let j = i % period;
                    let next = line[(j + 1) % period];
                    let v = line[j];
                    line[j] = 0.498 * (v + next);
                    out[start + i] += v;
                }
            }
        }
        StemId::ElectricGuitar => {
            for start in (0..frames).step_by(note * 2) {
                let f = pick(&mut rng, 147.0);
                for i in 0..(note * 2).min(frames - start) {
                    let t = i as f64 / fs;
                    let saw = 2.0 * ((f * t) % 1.0) - 1.0;
                    out[start + i] += (3.0 * saw).tanh();
                }
            }
        }
        StemId::Strings => {
            let f = pick(&mut rng, 330.0);
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / fs;
                let vib = 1.0 + 0.006 * (2.0 * PI * 5.5 * t).sin();
                *o = (1..8).map(|h| (2.0 * PI * f * vib * h as f64 * t).sin() / h as f64).sum::<f64>();
            }
        }
        StemId::WindBrass => {
            for start in (0..frames).step_by(note * 2) {
                let f = pick(&mut rng, 233.0);
                harmonic_note(&mut out, start, note * 2, f, fs, &[1.0, 0.0, 0.33, 0.0, 0.2], 2.0);
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
    out.iter_mut().for_each(|s| *s *= 0.7 / peak);
    out
}

/// One file of a generated fixture pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub path: PathBuf,
    /// Stem tag, or `"noise"`.
    pub stem: String,
    pub duration_s: f64,
}

/// Writes `files_per_stem` synthetic stereo WAVs for each stem plus noise files,
/// returning pool-manifest entries.
pub fn write_fixture_pool(
    dir: &Path,
    stems: &[StemId],
    files_per_stem: usize,
    seconds: f64,
    rate: u32,
    seed: u64,
) -> Result<Vec<FixtureFile>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for &stem in stems {
        for k in 0..files_per_stem {
            let mono = instrument(stem, rate, seconds, seed.wrapping_add(k as u64));
            let path = dir.join(format!("{}_{k}.wav", stem.tag()));
            write_stereo(&path, mono, rate)?;
            out.push(FixtureFile { path, stem: stem.tag().into(), duration_s: seconds });
        }
    }
    for (k, color) in [NoiseColor::White, NoiseColor::Pink].into_iter().enumerate() {
        let mono = noise(color, 0.5, (seconds * rate as f64) as usize, seed.wrapping_add(1000 + k as u64));
        let path = dir.join(format!("noise_{k}.wav"));
        write_stereo(&path, mono, rate)?;
        out.push(FixtureFile { path, stem: "noise".into(), duration_s: seconds });
    }
    Ok(out)
}

/// Pool over generated fixture files.
pub fn fixture_source_pool(files: &[FixtureFile]) -> Result<SourcePool> {
    let entries = files
        .iter()
        .map(|f| Ok(PoolEntry { path: f.path.clone(), stem: f.stem.parse()?, duration_s: f.duration_s }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SourcePool::new(entries))
}

fn write_stereo(path: &Path, mono: Vec<f64>, rate: u32) -> Result<()> {
    let buf = AudioBuffer::mono(mono, rate)?.to_stereo();
    wav::write_wav(path, &buf, WavFormat::Int16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instruments_are_bounded_and_deterministic() {
        for stem in StemId::ALL {
            let a = instrument(stem, 16_000, 1.0, 4);
            let b = instrument(stem, 16_000, 1.0, 4);
            assert_eq!(a, b);
            assert_eq!(a.len(), 16_000);
            let peak = a.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            assert!((peak - 0.7).abs() < 1e-9, "{stem}: {peak}");
        }
    }

    #[test]
    fn pink_noise_tilts_low() {
        let n = noise(NoiseColor::Pink, 1.0, 1 << 15, 1);
        let hi: f64 = n.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let total: f64 = n.iter().map(|s| s * s).sum();
        // First differences emphasize highs; pink keeps them small relative to white's 2x.
        assert!(hi / total < 1.0);
        let w = noise(NoiseColor::White, 1.0, 1 << 15, 1);
        let hi_w: f64 = w.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let total_w: f64 = w.iter().map(|s| s * s).sum();
        assert!(hi_w / total_w > 1.5);
    }

    #[test]
    fn fixture_pool_written() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_fixture_pool(dir.path(), &[StemId::Piano, StemId::Drums], 2, 4.0, 48_000, 0).unwrap();
        assert_eq!(files.len(), 6);
        let info = wav::probe(&files[0].path).unwrap();
        assert_eq!(info.channels, 2);
        assert_eq!(info.frames, 192_000);
    }
}
