//! Head training and evaluation on rendered mixtures.

use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, train_head, Checkpoint, EpochLog, EvalReport, Sample, TrainConfig};
use crate::embedding::{embed_batch, Encoder};
use crate::error::Result;
use crate::mixture::{build_epoch, RenderConfig, SourcePool};
use crate::taxonomy::StemId;

/// Renders `n_per_class` positive and negative mixtures for `stem` and embeds them.
pub fn labeled_embeddings(
    pool: &SourcePool,
    stem: StemId,
    n_per_class: usize,
    seed: u64,
    render: &RenderConfig,
    encoder: &dyn Encoder,
    workers: usize,
) -> Result<Vec<Sample>> {
    let examples = build_epoch(pool, stem, n_per_class, seed, render)?;
    let segments: Vec<_> = examples.iter().map(|e| e.segment.clone()).collect();
    let embeddings = embed_batch(&segments, encoder, workers)?;
    Ok(embeddings.into_iter().zip(&examples).map(|(e, ex)| Sample { x: e.values, label: ex.label }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub stem: String,
    pub backend: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub best_epoch: usize,
    pub validation: EvalReport,
    pub config: TrainConfig,
    pub render: RenderConfig,
    pub log: Vec<EpochLog>,
}

/// Renders a dataset for `stem`, trains a head on it and returns the
/// checkpoint with its training report.
pub fn train_stem(
    pool: &SourcePool,
    stem: StemId,
    encoder: &dyn Encoder,
    train: &TrainConfig,
    render: &RenderConfig,
    workers: usize,
) -> Result<(Checkpoint, TrainingReport)> {
    let data = labeled_embeddings(pool, stem, train.n_per_class, train.seed, render, encoder, workers)?;
    let outcome = train_head(&data, train)?;
    let checkpoint = Checkpoint::new(stem.tag(), encoder.name(), train.seed, outcome.head);
    let report = TrainingReport {
        stem: stem.tag().into(),
        backend: encoder.name().into(),
        seed: train.seed,
        n_train: outcome.n_train,
        n_val: outcome.n_val,
        best_epoch: outcome.best_epoch,
        validation: outcome.validation,
        config: train.clone(),
        render: render.clone(),
        log: outcome.log,
    };
    Ok((checkpoint, report))
}

/// How an evaluation set is drawn and thresholded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub n_per_class: usize,
    pub seed: u64,
    pub threshold: f64,
}

/// Scores a head on freshly rendered mixtures.
pub fn evaluate_stem(
    checkpoint: &Checkpoint,
    pool: &SourcePool,
    stem: StemId,
    encoder: &dyn Encoder,
    settings: EvalSettings,
    render: &RenderConfig,
    workers: usize,
) -> Result<EvalReport> {
    checkpoint.check_backend(encoder.name(), encoder.dim())?;
    let data = labeled_embeddings(pool, stem, settings.n_per_class, settings.seed, render, encoder, workers)?;
    evaluate(&checkpoint.head, &data, settings.threshold)
}
