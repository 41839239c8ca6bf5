//! RIFF/WAVE I/O for 16/24-bit integer and 32-bit float PCM.

use std::io::{Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Int16,
    Int24,
    Float32,
}

impl WavFormat {
    fn spec(self, channels: u16, sample_rate: u32) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            WavFormat::Int16 => (16, SampleFormat::Int),
            WavFormat::Int24 => (24, SampleFormat::Int),
            WavFormat::Float32 => (32, SampleFormat::Float),
        };
        WavSpec { channels, sample_rate, bits_per_sample, sample_format }
    }
}

/// Header facts of a WAV file, read without decoding samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavInfo {
    pub channels: u16,
    pub sample_rate: u32,
    pub frames: u64,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }
}

pub fn probe(path: &Path) -> Result<WavInfo> {
    let reader = WavReader::open(path).map_err(|e| Error::from(e).at_path(path))?;
    let spec = reader.spec();
    Ok(WavInfo { channels: spec.channels, sample_rate: spec.sample_rate, frames: reader.duration() as u64 })
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    read_wav_range(path, 0, None).map_err(|e| e.at_path(path))
}

/// Reads `len` frames (or to end of file) starting at `start`.
///
/// Files with more than two channels keep their first two.
pub fn read_wav_range(path: &Path, start: u64, len: Option<u64>) -> Result<AudioBuffer> {
    let reader = WavReader::open(path)?;
    decode(reader, start, len)
}

pub fn decode_wav_bytes(bytes: &[u8]) -> Result<AudioBuffer> {
    let reader = WavReader::new(std::io::Cursor::new(bytes))?;
    decode(reader, 0, None)
}

fn decode<R: Read + Seek>(mut reader: WavReader<R>, start: u64, len: Option<u64>) -> Result<AudioBuffer> {
    let spec = reader.spec();
    let total = reader.duration() as u64;
    let start = start.min(total);
    let len = len.unwrap_or(total - start).min(total - start) as usize;
    if spec.channels == 0 {
        return Err(Error::Layout("zero channels".into()));
    }
    reader.seek(start as u32)?;

    let n_in = spec.channels as usize;
    let n_out = n_in.min(2);
    let mut channels = vec![Vec::with_capacity(len); n_out];
    let wanted = len * n_in;

    match spec.sample_format {
        SampleFormat::Float => {
            for (i, s) in reader.samples::<f32>().take(wanted).enumerate() {
                let c = i % n_in;
                if c < n_out {
                    channels[c].push(s? as f64);
                }
            }
        }
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            for (i, s) in reader.samples::<i32>().take(wanted).enumerate() {
                let c = i % n_in;
                if c < n_out {
                    channels[c].push(s? as f64 * scale);
                }
            }
        }
    }
    let frames = channels.iter().map(Vec::len).min().unwrap_or(0);
    channels.iter_mut().for_each(|c| c.truncate(frames));
    AudioBuffer::new(channels, spec.sample_rate)
}

/// Writes `buffer`, clamping integer formats to full scale.
pub fn write_wav(path: &Path, buffer: &AudioBuffer, format: WavFormat) -> Result<()> {
    let spec = format.spec(buffer.num_channels() as u16, buffer.sample_rate());
    let writer = WavWriter::create(path, spec).map_err(|e| Error::from(e).at_path(path))?;
    write_samples(writer, buffer, format).map_err(|e| e.at_path(path))
}

/// Encodes `buffer` as an in-memory WAV file.
pub fn encode_wav_bytes(buffer: &AudioBuffer, format: WavFormat) -> Result<Vec<u8>> {
    let spec = format.spec(buffer.num_channels() as u16, buffer.sample_rate());
    let mut cursor = std::io::Cursor::new(Vec::new());
    write_samples(WavWriter::new(&mut cursor, spec)?, buffer, format)?;
    Ok(cursor.into_inner())
}

fn write_samples<W: Write + Seek>(mut writer: WavWriter<W>, buffer: &AudioBuffer, format: WavFormat) -> Result<()> {
    let chans = buffer.channels();
    for i in 0..buffer.frames() {
        for c in chans {
            let s = c[i];
            match format {
                WavFormat::Float32 => writer.write_sample(s as f32)?,
                WavFormat::Int16 => writer.write_sample(quantize(s, 16) as i16)?,
                WavFormat::Int24 => writer.write_sample(quantize(s, 24))?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Rounds to a signed `bits`-bit integer, clamped to full scale.
pub fn quantize(s: f64, bits: u32) -> i32 {
    let full = (1i64 << (bits - 1)) as f64;
    (s * full).round().clamp(-full, full - 1.0) as i32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(frames: usize) -> Vec<f64> {
        (0..frames).map(|i| (i as f64 / frames as f64) - 0.5).collect()
    }

    #[test]
    fn formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = AudioBuffer::new(vec![ramp(1000), ramp(1000).iter().map(|s| -s).collect()], 48_000).unwrap();
        for (format, tol) in
            [(WavFormat::Int16, 1.0 / 32768.0), (WavFormat::Int24, 1.0 / 8_388_608.0), (WavFormat::Float32, 1e-7)]
        {
            let path = dir.path().join(format!("{format:?}.wav"));
            write_wav(&path, &x, format).unwrap();
            let y = read_wav(&path).unwrap();
            assert_eq!(y.sample_rate(), 48_000);
            assert_eq!(y.num_channels(), 2);
            assert_eq!(y.frames(), 1000);
            for c in 0..2 {
                for (a, b) in x.channel(c).iter().zip(y.channel(c)) {
                    assert!((a - b).abs() <= tol, "{format:?}: {a} vs {b}");
                }
            }
            let info = probe(&path).unwrap();
            assert_eq!(info.frames, 1000);
        }
    }

    #[test]
    fn range_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        let x = AudioBuffer::mono(ramp(500), 16_000).unwrap();
        write_wav(&path, &x, WavFormat::Float32).unwrap();
        let y = read_wav_range(&path, 100, Some(50)).unwrap();
        assert_eq!(y.frames(), 50);
        assert!((y.channel(0)[0] - x.channel(0)[100]).abs() < 1e-7);
        let tail = read_wav_range(&path, 480, Some(50)).unwrap();
        assert_eq!(tail.frames(), 20);
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(decode_wav_bytes(b"not a wav file at all").is_err());
    }
}
