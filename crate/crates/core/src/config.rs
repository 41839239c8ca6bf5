//! Pipeline configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::cleaner::{CleanOptions, OutputFormat, DEFAULT_CLEAN_THRESHOLD};
use crate::crawler::{Rate, DEFAULT_PER_QUERY_LIMIT};
use crate::dsp::{AugmentConfig, LoudnessTarget};
use crate::embedding::{Encoder, SpectralEncoder};
use crate::error::{Error, Result};
use crate::mixture::RenderConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Translation table for query expansion; built-in defaults when unset.
    pub translations: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub crawl_manifest: Option<PathBuf>,
    pub crawl_dir: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub heads: Option<PathBuf>,
    pub clean_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Builtin,
    Onnx,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_path: Option<PathBuf>,
    /// Expected embedding width; checked against the loaded model.
    pub dim: Option<usize>,
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn Encoder>> {
        match self.kind {
            BackendKind::Builtin => {
                let enc = SpectralEncoder::new();
                if let Some(d) = self.dim.filter(|&d| d != enc.dim()) {
                    return Err(Error::Dimension { expected: d, actual: enc.dim() });
                }
                Ok(Box::new(enc))
            }
            BackendKind::Onnx => self.build_onnx(),
        }
    }

    #[cfg(feature = "onnx")]
    fn build_onnx(&self) -> Result<Box<dyn Encoder>> {
        let path = self
            .model_path
            .as_ref()
            .ok_or_else(|| Error::param("backend.model_path", "required for the onnx backend"))?;
        Ok(Box::new(crate::embedding::OnnxEncoder::load(path, self.dim)?))
    }

    #[cfg(not(feature = "onnx"))]
    fn build_onnx(&self) -> Result<Box<dyn Encoder>> {
        Err(Error::Model("this build has no ONNX support; rebuild with the `onnx` feature".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Decision threshold for validation and evaluation reports.
    pub eval: f64,
    /// Keep threshold when cleaning.
    pub clean: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { eval: 0.5, clean: DEFAULT_CLEAN_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrawlConfig {
    pub per_query_limit: usize,
    pub rate: Rate,
    /// Downloader binary used when no local source directory is given.
    pub downloader: PathBuf,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            per_query_limit: DEFAULT_PER_QUERY_LIMIT,
            rate: Rate { per_minute: 30.0 },
            downloader: PathBuf::from("yt-dlp"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub crossfade_ms: f64,
    pub output: OutputFormat,
}

impl Default for CleanConfig {
    fn default() -> Self {
        let d = CleanOptions::default();
        CleanConfig { crossfade_ms: d.crossfade_ms, output: d.output }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub paths: Paths,
    pub backend: BackendConfig,
    pub thresholds: Thresholds,
    pub augment: AugmentConfig,
    pub loudness: LoudnessTarget,
    pub train: TrainConfig,
    pub crawl: CrawlConfig,
    pub clean: CleanConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            paths: Paths::default(),
            backend: BackendConfig::default(),
            thresholds: Thresholds::default(),
            augment: AugmentConfig::default(),
            loudness: LoudnessTarget::default(),
            train: TrainConfig::default(),
            crawl: CrawlConfig::default(),
            clean: CleanConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        let cfg: PipelineConfig = serde_json::from_slice(&bytes).map_err(|e| Error::from(e).at_path(path))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("thresholds.eval", self.thresholds.eval), ("thresholds.clean", self.thresholds.clean)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::param(name, format!("{t} outside (0, 1)")));
            }
        }
        if self.workers == 0 {
            return Err(Error::param("workers", "must be at least 1"));
        }
        self.augment.validate()?;
        self.train.validate()?;
        LoudnessTarget::new(self.loudness.lufs)?;
        Ok(())
    }

    pub fn render(&self) -> RenderConfig {
        RenderConfig { augment: self.augment.clone(), loudness: self.loudness, ..RenderConfig::default() }
    }

    pub fn clean_options(&self, dry_run: bool) -> CleanOptions {
        CleanOptions {
            threshold: self.thresholds.clean,
            crossfade_ms: self.clean.crossfade_ms,
            output: self.clean.output,
            dry_run,
        }
    }
}

/// Fails with a path-tagged error when `path` does not exist.
pub fn require_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "does not exist")).at_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 4, "thresholds": {"clean": 0.9}}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.thresholds.eval, 0.5);
        assert_eq!(cfg.thresholds.clean, 0.9);
        assert_eq!(cfg.crawl.rate.per_minute, 30.0);
        cfg.validate().unwrap();
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let mut cfg = PipelineConfig::default();
        cfg.thresholds.clean = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn builtin_backend() {
        let enc = BackendConfig::default().build().unwrap();
        assert_eq!(enc.dim(), 128);
        assert!(BackendConfig { dim: Some(768), ..Default::default() }.build().is_err());
    }
}
