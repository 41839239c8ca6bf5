//! Frozen encoders that map a 3 s segment to a time-pooled embedding.

#[cfg(feature = "onnx")]
mod onnx;
mod spectral;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Segment;
use crate::error::{Error, Result};

#[cfg(feature = "onnx")]
pub use onnx::OnnxEncoder;
pub use spectral::{SpectralEncoder, LOG_FLOOR, N_MELS};

/// Row-major `T × D` frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FrameMatrix {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * dim {
            return Err(Error::Model(format!(
                "frame matrix {frames}x{dim} needs {} values, got {}",
                frames * dim,
                data.len()
            )));
        }
        Ok(FrameMatrix { frames, dim, data })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Arithmetic mean over the time axis.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for t in 0..self.frames {
            acc.iter_mut().zip(self.row(t)).for_each(|(a, v)| *a += v);
        }
        let n = self.frames.max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// A frozen feature extractor. Implementations are immutable after load and
/// may be called from many threads at once.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;

    /// Embedding width `D`.
    fn dim(&self) -> usize;

    fn frames(&self, segment: &Segment) -> Result<FrameMatrix>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub backend: String,
    pub source_id: String,
    pub index: usize,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn embed(segment: &Segment, encoder: &dyn Encoder) -> Result<Embedding> {
    let frames = encoder.frames(segment)?;
    if frames.dim != encoder.dim() {
        return Err(Error::Dimension { expected: encoder.dim(), actual: frames.dim });
    }
    if frames.frames == 0 {
        return Err(Error::Model(format!("{} produced no frames", encoder.name())));
    }
    let values = frames.mean_pool();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model(format!("{} produced non-finite features", encoder.name())));
    }
    Ok(Embedding {
        values,
        backend: encoder.name().to_string(),
        source_id: segment.source_id.clone(),
        index: segment.index,
    })
}

/// Order-preserving batch embedding on up to `parallelism` threads.
/// Errors carry the position of the failing segment.
pub fn embed_batch(segments: &[Segment], encoder: &dyn Encoder, parallelism: usize) -> Result<Vec<Embedding>> {
    let run =
        |(i, s): (usize, &Segment)| embed(s, encoder).map_err(|e| Error::AtSegment { index: i, source: Box::new(e) });
    if parallelism <= 1 {
        return segments.iter().enumerate().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Model(format!("thread pool: {e}")))?;
    pool.install(|| segments.par_iter().enumerate().map(run).collect())
}

/// Runs a silent probe segment through `encoder` to confirm its declared width.
pub fn probe_dim(encoder: &dyn Encoder) -> Result<usize> {
    let silent = crate::audio::AudioBuffer::silence(1, crate::audio::SEGMENT_FRAMES, crate::audio::SEGMENT_RATE)?;
    let e = embed(&Segment::new(silent, "probe", 0)?, encoder)?;
    Ok(e.dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(usize);

    impl Encoder for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn dim(&self) -> usize {
            self.0
        }
        fn frames(&self, _: &Segment) -> Result<FrameMatrix> {
            FrameMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 3.0, 4.0, 5.0])
        }
    }

    #[test]
    fn pooling_is_mean() {
        let m = FrameMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(m.mean_pool(), vec![2.0, 3.0, 4.0]);
        assert!(FrameMatrix::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn declared_dim_must_match() {
        let seg = Segment::new(crate::audio::AudioBuffer::silence(1, 48_000, 16_000).unwrap(), "s", 0).unwrap();
        assert_eq!(embed(&seg, &Fixed(3)).unwrap().values, vec![2.0, 3.0, 4.0]);
        assert!(matches!(embed(&seg, &Fixed(4)), Err(Error::Dimension { expected: 4, actual: 3 })));
        match embed_batch(&[seg.clone(), seg], &Fixed(4), 2) {
            Err(Error::AtSegment { index: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
