use crate::error::{Error, Result};

/// Offset added to the peak before dividing in [`safe_normalize`].
pub const SAFE_NORM_EPS: f64 = 1e-9;

/// Planar PCM audio. Samples are unit-scale, one `Vec` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Layout("sample rate must be positive".into()));
        }
        if !(1..=2).contains(&channels.len()) {
            return Err(Error::Layout(format!("expected 1 or 2 channels, got {}", channels.len())));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::Layout("channels differ in length".into()));
        }
        let buf = AudioBuffer { channels, sample_rate };
        buf.check_finite()?;
        Ok(buf)
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silence(channels: usize, frames: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; frames]; channels], sample_rate)
    }

    /// Builds a buffer whose samples the caller guarantees finite.
    pub(crate) fn from_parts(channels: Vec<Vec<f64>>, sample_rate: u32) -> Self {
        debug_assert!((1..=2).contains(&channels.len()));
        debug_assert!(channels.iter().all(|c| c.len() == channels[0].len()));
        AudioBuffer { channels, sample_rate }
    }

    pub fn check_finite(&self) -> Result<()> {
        for (channel, data) in self.channels.iter().enumerate() {
            if let Some(frame) = data.iter().position(|s| !s.is_finite()) {
                return Err(Error::NonFinite { channel, frame });
            }
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn frames(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn is_empty(&self) -> bool {
        self.frames() == 0
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Applies `f` to every sample, keeping layout and rate.
    pub(crate) fn map_samples(&self, f: impl Fn(f64) -> f64) -> Self {
        let channels = self.channels.iter().map(|c| c.iter().map(|&s| f(s)).collect()).collect();
        AudioBuffer::from_parts(channels, self.sample_rate)
    }

    pub(crate) fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let channels = self.channels.iter().map(|c| f(c)).collect();
        AudioBuffer::from_parts(channels, self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        self.map_samples(|s| s * gain)
    }

    /// Copies frames `start..end` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.frames());
        let start = start.min(end);
        self.map_channels(|c| c[start..end].to_vec())
    }

    /// Mono copy, or a duplicate of this buffer if already mono.
    pub fn to_mono(&self) -> Self {
        to_mono(self)
    }

    /// Duplicates a mono buffer into two identical channels.
    pub fn to_stereo(&self) -> Self {
        match self.num_channels() {
            2 => self.clone(),
            _ => AudioBuffer::from_parts(vec![self.channels[0].clone(), self.channels[0].clone()], self.sample_rate),
        }
    }
}

/// Averages channels into one.
pub fn to_mono(x: &AudioBuffer) -> AudioBuffer {
    if x.num_channels() == 1 {
        return x.clone();
    }
    let n = x.num_channels() as f64;
    let mono = (0..x.frames()).map(|i| x.channels.iter().map(|c| c[i]).sum::<f64>() / n).collect();
    AudioBuffer::from_parts(vec![mono], x.sample_rate)
}

/// Scales `x` by `1 / (max|x| + 1e-9)` so that its peak is at most one.
pub fn safe_normalize(x: &AudioBuffer) -> Result<AudioBuffer> {
    x.check_finite()?;
    let scale = 1.0 / (x.peak() + SAFE_NORM_EPS);
    Ok(x.map_samples(|s| s * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(v: &[f64]) -> AudioBuffer {
        AudioBuffer::mono(v.to_vec(), 16_000).unwrap()
    }

    fn assert_rel(actual: &[f64], expected: &[f64], tol: f64) {
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= tol * e.abs().max(f64::MIN_POSITIVE), "{a} vs {e}");
        }
    }

    #[test]
    fn safe_normalize_cases() {
        let y = safe_normalize(&mono(&[0.5, -1.0, 0.25])).unwrap();
        assert_rel(y.channel(0), &[0.5, -1.0, 0.25], 1e-8);

        let y = safe_normalize(&mono(&[0.0; 16])).unwrap();
        assert!(y.channel(0).iter().all(|&s| s == 0.0));

        let y = safe_normalize(&mono(&[2.0, -4.0])).unwrap();
        assert_rel(y.channel(0), &[0.5, -1.0], 1e-8);
        assert!(y.peak() <= 1.0);
    }

    #[test]
    fn safe_normalize_rejects_nan() {
        let x = AudioBuffer::from_parts(vec![vec![0.0, f64::NAN]], 16_000);
        assert!(matches!(safe_normalize(&x), Err(Error::NonFinite { channel: 0, frame: 1 })));
    }

    #[test]
    fn constructor_checks() {
        assert!(AudioBuffer::new(vec![], 16_000).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0]; 3], 16_000).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0], vec![]], 16_000).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0]], 0).is_err());
        assert!(AudioBuffer::new(vec![vec![f64::INFINITY]], 8_000).is_err());
    }

    #[test]
    fn mono_downmix() {
        let c = vec![0.1, -0.3, 0.7];
        let x = AudioBuffer::new(vec![c.clone(), c.clone()], 48_000).unwrap();
        assert_eq!(to_mono(&x).channel(0), &c[..]);

        let neg: Vec<f64> = c.iter().map(|s| -s).collect();
        let x = AudioBuffer::new(vec![c.clone(), neg], 48_000).unwrap();
        assert!(to_mono(&x).channel(0).iter().all(|&s| s == 0.0));

        let x = AudioBuffer::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 48_000).unwrap();
        assert_eq!(to_mono(&x).channel(0), &[0.5, 0.5]);

        let m = mono(&c);
        assert_eq!(to_mono(&m), m);
    }
}
