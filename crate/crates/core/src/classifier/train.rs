use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::head::HeadParams;
use super::metrics::EvalReport;
use crate::error::{Error, Result};

/// One labeled embedding; label 1 is pure, 0 impure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub validation_fraction: f64,
    /// Decision threshold used for validation metrics.
    pub threshold: f64,
    /// Training stops once halving has pushed the rate below this.
    pub min_learning_rate: f64,
    /// Mixtures rendered per class when building a dataset.
    pub n_per_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            validation_fraction: 0.2,
            threshold: 0.5,
            min_learning_rate: 1e-7,
            n_per_class: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("min_learning_rate", self.min_learning_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        for (name, v) in
            [("batch_size", self.batch_size), ("max_epochs", self.max_epochs), ("n_per_class", self.n_per_class)]
        {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::param(name, format!("{v} outside [0, 1)")));
            }
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::param("validation_fraction", format!("{} outside (0, 1)", self.validation_fraction)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::param("threshold", format!("{} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean training cross-entropy of the parameters kept after this epoch.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_f1: f64,
    /// The epoch raised the training loss, so its update was undone and the
    /// learning rate halved.
    pub reverted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: HeadParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Metrics of the returned head on the validation split.
    pub validation: EvalReport,
    pub n_train: usize,
    pub n_val: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, head: &mut HeadParams, grads: &HeadParams, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in head.values_mut().zip(grads.values()).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_epsilon);
        }
    }
}

impl Clone for Adam {
    fn clone(&self) -> Self {
        Adam { m: self.m.clone(), v: self.v.clone(), t: self.t }
    }
}

fn mean_loss(head: &HeadParams, data: &[Sample]) -> Result<f64> {
    let losses = data.par_iter().map(|s| head.loss(&s.x, f64::from(s.label))).collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / data.len().max(1) as f64)
}

/// Scores every sample with `head` and tallies the confusion matrix.
pub fn evaluate(head: &HeadParams, data: &[Sample], threshold: f64) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scores = data.par_iter().map(|s| Ok((head.probability(&s.x)?, s.label))).collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(&scores, threshold)
}

/// Per-class shuffle, then the first `fraction` of each class (at least one
/// sample when the class has two or more) goes to validation.
fn stratified_split(data: &[Sample], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<Sample>, Vec<Sample>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].label == label).collect();
        idx.shuffle(rng);
        let mut n_val = (idx.len() as f64 * fraction).round() as usize;
        if idx.len() >= 2 {
            n_val = n_val.clamp(1, idx.len() - 1);
        }
        val.extend(idx[..n_val].iter().map(|&i| data[i].clone()));
        train.extend(idx[n_val..].iter().map(|&i| data[i].clone()));
    }
    (train, val)
}

fn standardizer(data: &[Sample], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in data {
        mean.iter_mut().zip(&s.x).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; dim];
    for s in data {
        scale.iter_mut().zip(&s.x).zip(&mean).for_each(|((q, v), m)| *q += (v - m).powi(2) / n);
    }
    scale.iter_mut().for_each(|q| *q = if *q > 1e-16 { q.sqrt() } else { 1.0 });
    (mean, scale)
}

fn standardized(data: &[Sample], mean: &[f64], scale: &[f64]) -> Vec<Sample> {
    data.iter()
        .map(|s| Sample { x: s.x.iter().zip(mean).zip(scale).map(|((v, m), q)| (v - m) / q).collect(), label: s.label })
        .collect()
}

/// Mini-batch Adam on mean cross-entropy with early stopping on validation F1.
///
/// Inputs are standardized with training-split statistics during
/// optimization; the returned head has that transform folded into its first
/// layer and consumes raw embeddings.
pub fn train_head(data: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dim = data.first().ok_or(Error::EmptyDataset)?.x.len();
    if let Some(s) = data.iter().find(|s| s.x.len() != dim) {
        return Err(Error::Dimension { expected: dim, actual: s.x.len() });
    }
    if let Some(s) = data.iter().find(|s| s.label > 1) {
        return Err(Error::param("label", format!("{} is not 0 or 1", s.label)));
    }
    if data.iter().any(|s| s.x.iter().any(|v| !v.is_finite())) {
        return Err(Error::param("dataset", "non-finite embedding value"));
    }
    let positives = data.iter().filter(|s| s.label == 1).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateLabels(format!(
            "{positives} positive and {} negative samples",
            data.len() - positives
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_raw, val_raw) = stratified_split(data, cfg.validation_fraction, &mut rng);
    let (mean, scale) = standardizer(&train_raw, dim);
    let train = standardized(&train_raw, &mean, &scale);
    let val = standardized(&val_raw, &mean, &scale);

    let mut head = HeadParams::init(dim, &mut rng)?;
    let mut adam = Adam::new(head.param_count());
    let mut lr = cfg.learning_rate;
    let mut prev_loss = mean_loss(&head, &train)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, HeadParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let snapshot = (head.clone(), adam.clone());
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = HeadParams::zeros(dim)?;
            for &i in batch {
                head.accumulate_gradient(&train[i].x, f64::from(train[i].label), &mut grads)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.values_mut().for_each(|g| *g *= inv);
            adam.step(&mut head, &grads, lr, cfg);
        }
        let loss = mean_loss(&head, &train)?;
        if !loss.is_finite() || head.values().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                detail: format!("training loss {loss} at learning rate {lr:e}, previous loss {prev_loss}"),
            });
        }
        let reverted = loss > prev_loss;
        if reverted {
            (head, adam) = snapshot;
            lr /= 2.0;
        } else {
            prev_loss = loss;
        }
        let report = evaluate(&head, &val, cfg.threshold)?;
        let val_loss = mean_loss(&head, &val)?;
        log::debug!(
            "epoch {epoch}: lr {lr:e} train {prev_loss:.5} val {val_loss:.5} acc {:.4} f1 {:.4}{}",
            report.accuracy,
            report.f1,
            if reverted { " (reverted)" } else { "" }
        );
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            train_loss: prev_loss,
            val_loss,
            val_accuracy: report.accuracy,
            val_f1: report.f1,
            reverted,
        });
        if best.as_ref().is_none_or(|(f1, _, _)| report.f1 > *f1) {
            best = Some((report.f1, epoch, head.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.early_stop_patience || lr < cfg.min_learning_rate {
            break;
        }
    }

    let (_, best_epoch, mut head) = best.ok_or(Error::EmptyDataset)?;
    head.fold_input_affine(&mean, &scale);
    let validation = evaluate(&head, &val_raw, cfg.threshold)?;
    Ok(TrainOutcome { head, log, best_epoch, validation, n_train: train_raw.len(), n_val: val_raw.len() })
}
