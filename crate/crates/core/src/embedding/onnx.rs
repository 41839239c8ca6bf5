//! ONNX encoder backend (tract). The model takes a `[1, 48000]` f32 waveform
//! at 16 kHz and returns frame features shaped `[1, T, D]` or `[T, D]`.

use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::{Encoder, FrameMatrix};
use crate::audio::{Segment, SEGMENT_FRAMES};
use crate::error::{Error, Result};

pub struct OnnxEncoder {
    name: String,
    dim: usize,
    model: Arc<TypedRunnableModel>,
}

fn model_err(e: impl std::fmt::Display) -> Error {
    Error::Model(e.to_string())
}

impl OnnxEncoder {
    /// Loads and optimizes the model, then probes it once to learn `D`.
    /// When `expected_dim` is given the probed width must match it.
    pub fn load(path: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, SEGMENT_FRAMES]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
        let name = format!("onnx:{}", path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        let mut enc = OnnxEncoder { name, dim: 0, model };
        let probe = enc.run(&vec![0.0f32; SEGMENT_FRAMES])?;
        enc.dim = probe.dim;
        if let Some(d) = expected_dim {
            if d != enc.dim {
                return Err(Error::Dimension { expected: d, actual: enc.dim });
            }
        }
        Ok(enc)
    }

    fn run(&self, wave: &[f32]) -> Result<FrameMatrix> {
        let input = tract_ndarray::Array2::from_shape_vec((1, wave.len()), wave.to_vec()).map_err(model_err)?;
        let out = self.model.run(tvec!(Tensor::from(input).into_tvalue())).map_err(model_err)?;
        let first = out.first().ok_or_else(|| Error::Model("model has no outputs".into()))?;
        let view = first.to_plain_array_view::<f32>().map_err(model_err)?;
        let shape = view.shape().to_vec();
        let (frames, dim) = match shape.as_slice() {
            [1, t, d] | [t, d] => (*t, *d),
            other => return Err(Error::Model(format!("expected [1, T, D] or [T, D] output, got {other:?}"))),
        };
        FrameMatrix::new(frames, dim, view.iter().map(|&v| v as f64).collect())
    }
}

impl Encoder for OnnxEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn frames(&self, segment: &Segment) -> Result<FrameMatrix> {
        let wave: Vec<f32> = segment.samples().iter().map(|&s| s as f32).collect();
        self.run(&wave)
    }
}
