use super::AudioBuffer;
use crate::error::{Error, Result};

pub const SEGMENT_RATE: u32 = 16_000;
pub const SEGMENT_SECONDS: f64 = 3.0;
pub const SEGMENT_FRAMES: usize = 48_000;

/// A 3 s mono 16 kHz window cut from a source track.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    audio: AudioBuffer,
    pub source_id: String,
    /// Position within the source, in whole windows.
    pub index: usize,
}

impl Segment {
    pub fn new(audio: AudioBuffer, source_id: impl Into<String>, index: usize) -> Result<Self> {
        if audio.num_channels() != 1 || audio.sample_rate() != SEGMENT_RATE || audio.frames() != SEGMENT_FRAMES {
            return Err(Error::Layout(format!(
                "segment must be mono {SEGMENT_RATE} Hz with {SEGMENT_FRAMES} frames, got {} ch @ {} Hz x {}",
                audio.num_channels(),
                audio.sample_rate(),
                audio.frames()
            )));
        }
        Ok(Segment { audio, source_id: source_id.into(), index })
    }

    pub fn audio(&self) -> &AudioBuffer {
        &self.audio
    }

    pub fn samples(&self) -> &[f64] {
        self.audio.channel(0)
    }

    pub fn with_audio(&self, audio: AudioBuffer) -> Result<Self> {
        Segment::new(audio, self.source_id.clone(), self.index)
    }
}

/// Cuts consecutive non-overlapping windows; a trailing partial window is dropped.
pub fn segment(x: &AudioBuffer, source_id: &str) -> Result<Vec<Segment>> {
    if x.num_channels() != 1 || x.sample_rate() != SEGMENT_RATE {
        return Err(Error::Layout(format!(
            "segmentation needs mono {SEGMENT_RATE} Hz input, got {} ch @ {} Hz",
            x.num_channels(),
            x.sample_rate()
        )));
    }
    let samples = x.channel(0);
    samples
        .chunks_exact(SEGMENT_FRAMES)
        .enumerate()
        .map(|(index, chunk)| {
            Segment::new(AudioBuffer::from_parts(vec![chunk.to_vec()], SEGMENT_RATE), source_id, index)
        })
        .collect()
}

/// Frames left over after segmentation.
pub fn dropped_frames(frames: usize) -> usize {
    frames % SEGMENT_FRAMES
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpliceOptions {
    /// Linear crossfade at joints between non-consecutive windows.
    pub crossfade_ms: f64,
    /// Resample the spliced result to this rate.
    pub out_rate: Option<u32>,
}

impl Default for SpliceOptions {
    fn default() -> Self {
        SpliceOptions { crossfade_ms: 10.0, out_rate: None }
    }
}

impl SpliceOptions {
    pub fn exact() -> Self {
        SpliceOptions { crossfade_ms: 0.0, out_rate: None }
    }
}

/// Concatenates kept windows of one source in index order.
///
/// Windows with consecutive indices were contiguous in the source and are
/// joined as-is. Where an index gap exists the two sides overlap by the
/// crossfade length, so each such joint shortens the output by that much.
pub fn splice(kept: &[Segment], options: SpliceOptions) -> Result<AudioBuffer> {
    if !(options.crossfade_ms >= 0.0 && options.crossfade_ms.is_finite()) {
        return Err(Error::param("crossfade_ms", "must be a non-negative number"));
    }
    let Some(first) = kept.first() else {
        return Ok(AudioBuffer::from_parts(vec![Vec::new()], options.out_rate.unwrap_or(SEGMENT_RATE)));
    };
    for pair in kept.windows(2) {
        if pair[1].source_id != first.source_id {
            return Err(Error::Splice(format!("mixed sources {:?} and {:?}", first.source_id, pair[1].source_id)));
        }
        if pair[1].index <= pair[0].index {
            return Err(Error::Splice(format!("indices not ascending: {} then {}", pair[0].index, pair[1].index)));
        }
    }

    let fade = ((options.crossfade_ms / 1000.0 * SEGMENT_RATE as f64).round() as usize).min(SEGMENT_FRAMES);
    let mut out: Vec<f64> = Vec::with_capacity(kept.len() * SEGMENT_FRAMES);
    out.extend_from_slice(first.samples());
    for pair in kept.windows(2) {
        let next = pair[1].samples();
        if pair[1].index == pair[0].index + 1 || fade == 0 {
            out.extend_from_slice(next);
            continue;
        }
        let start = out.len() - fade;
        for (k, (o, &n)) in out[start..].iter_mut().zip(&next[..fade]).enumerate() {
            let w = (k as f64 + 0.5) / fade as f64;
            *o = *o * (1.0 - w) + n * w;
        }
        out.extend_from_slice(&next[fade..]);
    }

    let spliced = AudioBuffer::from_parts(vec![out], SEGMENT_RATE);
    match options.out_rate {
        Some(rate) => super::resample(&spliced, rate),
        None => Ok(spliced),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(frames: usize) -> AudioBuffer {
        let v =
            (0..frames).map(|i| (2.0 * std::f64::consts::PI * 220.0 * i as f64 / SEGMENT_RATE as f64).sin()).collect();
        AudioBuffer::mono(v, SEGMENT_RATE).unwrap()
    }

    #[test]
    fn window_counts() {
        let segs = segment(&tone(160_000), "t").unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(dropped_frames(160_000), 16_000);
        assert_eq!(segs.iter().map(|s| s.index).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(segment(&tone(48_000), "t").unwrap().len(), 1);
        assert_eq!(dropped_frames(48_000), 0);
        assert!(segment(&tone(47_999), "t").unwrap().is_empty());
    }

    #[test]
    fn segment_rejects_wrong_layout() {
        let stereo = tone(48_000).to_stereo();
        assert!(segment(&stereo, "t").is_err());
        let wrong_rate = AudioBuffer::mono(vec![0.0; 48_000], 48_000).unwrap();
        assert!(segment(&wrong_rate, "t").is_err());
    }

    #[test]
    fn splice_lengths() {
        let segs = segment(&tone(48_000 * 3), "t").unwrap();
        let out = splice(&segs, SpliceOptions::default()).unwrap();
        assert_eq!(out.frames(), 144_000);
        let empty = splice(&[], SpliceOptions::default()).unwrap();
        assert!(empty.is_empty());
        let up = splice(&segs[..1], SpliceOptions { crossfade_ms: 10.0, out_rate: Some(48_000) }).unwrap();
        assert_eq!(up.frames(), 144_000);
        assert_eq!(up.sample_rate(), 48_000);
    }

    #[test]
    fn adjacent_windows_stay_continuous() {
        let segs = segment(&tone(96_000), "t").unwrap();
        let out = splice(&segs, SpliceOptions::default()).unwrap();
        let s = out.channel(0);
        let joint = SEGMENT_FRAMES;
        let max_step = (joint - 50..joint + 50).map(|i| (s[i + 1] - s[i]).abs()).fold(0.0, f64::max);
        assert!(max_step < 0.1, "step {max_step}");
    }

    #[test]
    fn gap_joint_is_crossfaded() {
        // Windows 0 and 2 of a tone meet out of phase; the fade keeps steps small.
        let mut segs = segment(&tone(48_000 * 3), "t").unwrap();
        segs.remove(1);
        let hard = splice(&segs, SpliceOptions::exact()).unwrap();
        let soft = splice(&segs, SpliceOptions::default()).unwrap();
        assert_eq!(hard.frames(), 96_000);
        assert_eq!(soft.frames(), 96_000 - 160);
        let step = |b: &AudioBuffer| {
            let s = b.channel(0);
            (1..s.len()).map(|i| (s[i] - s[i - 1]).abs()).fold(0.0, f64::max)
        };
        assert!(step(&soft) < 0.1);
    }

    #[test]
    fn splice_rejects_bad_order() {
        let segs = segment(&tone(96_000), "a").unwrap();
        let reversed = vec![segs[1].clone(), segs[0].clone()];
        assert!(matches!(splice(&reversed, SpliceOptions::default()), Err(Error::Splice(_))));
        let mut other = segs[1].clone();
        other.source_id = "b".into();
        assert!(matches!(splice(&[segs[0].clone(), other], SpliceOptions::default()), Err(Error::Splice(_))));
    }
}
