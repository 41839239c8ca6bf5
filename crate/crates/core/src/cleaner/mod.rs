//! Applies trained purity heads to whole tracks: every 3 s window is scored,
//! windows at or above the threshold are kept and spliced back together.

mod report;
mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::{
    read_wav, resample, safe_normalize, segment, splice, to_segment_format, wav, AudioBuffer, Segment, SpliceOptions,
    WavFormat, SEGMENT_SECONDS,
};
use crate::classifier::{decide, Checkpoint, HeadParams};
use crate::embedding::{embed, Encoder};
use crate::error::{Error, Result};
use crate::taxonomy::StemId;

pub use report::{CleaningReport, Failure, ReferenceFigures, Totals};
pub use stats::{corpus_stats, stats_from_durations, Bucket, StemStat, StemStats, Unreadable};

pub const DEFAULT_CLEAN_THRESHOLD: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// 48 kHz, the mono result duplicated to both channels.
    #[default]
    Stereo48k,
    Mono16k,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanOptions {
    pub threshold: f64,
    pub crossfade_ms: f64,
    pub output: OutputFormat,
    pub dry_run: bool,
}

impl Default for CleanOptions {
    fn default() -> Self {
        CleanOptions {
            threshold: DEFAULT_CLEAN_THRESHOLD,
            crossfade_ms: 10.0,
            output: OutputFormat::default(),
            dry_run: false,
        }
    }
}

impl CleanOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::param("threshold", format!("{} outside (0, 1]", self.threshold)));
        }
        if !(self.crossfade_ms >= 0.0 && self.crossfade_ms.is_finite()) {
            return Err(Error::param("crossfade_ms", "must be a non-negative number"));
        }
        Ok(())
    }
}

/// One track to clean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanJob {
    pub source_id: String,
    /// Stem tag as recorded by the crawl.
    pub stem: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub source_id: String,
    pub stem: String,
    pub n_segments: usize,
    pub n_kept: usize,
    pub kept_indices: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub input_duration_s: f64,
    /// `3 × n_kept`, before crossfades.
    pub output_duration_s: f64,
    /// Length of the written file; shorter than `output_duration_s` by the
    /// crossfades at non-adjacent joints.
    pub written_duration_s: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Purity probability for each window. Windows are safe-normalized before embedding.
pub fn score_segments(segments: &[Segment], head: &HeadParams, encoder: &dyn Encoder) -> Result<Vec<f64>> {
    segments
        .iter()
        .map(|s| {
            let normalized = s.with_audio(safe_normalize(s.audio())?)?;
            let e = embed(&normalized, encoder)?;
            head.probability(&e.values)
        })
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::AtSegment { index: i, source: Box::new(e) }))
        .collect()
}

/// Cleans an already decoded track. Returns the spliced audio at the
/// requested output format, or `None` when no window passed.
pub fn clean_audio(
    audio: &AudioBuffer,
    source_id: &str,
    stem: &str,
    head: &HeadParams,
    encoder: &dyn Encoder,
    options: &CleanOptions,
) -> Result<(Option<AudioBuffer>, TrackRecord)> {
    options.validate()?;
    let segments = segment(&to_segment_format(audio)?, source_id)?;
    let probabilities = score_segments(&segments, head, encoder)?;
    let kept: Vec<Segment> = segments
        .iter()
        .zip(&probabilities)
        .filter(|(_, &p)| decide(p, options.threshold) == 1)
        .map(|(s, _)| s.clone())
        .collect();
    let kept_indices: Vec<usize> = kept.iter().map(|s| s.index).collect();
    let mut record = TrackRecord {
        source_id: source_id.to_string(),
        stem: stem.to_string(),
        n_segments: segments.len(),
        n_kept: kept.len(),
        kept_indices,
        probabilities,
        input_duration_s: audio.duration_s(),
        output_duration_s: SEGMENT_SECONDS * kept.len() as f64,
        written_duration_s: 0.0,
        threshold: options.threshold,
        output_path: None,
        note: None,
    };
    if kept.is_empty() {
        record.note = Some(if segments.is_empty() { "shorter than one window" } else { "nothing kept" }.into());
        return Ok((None, record));
    }
    let spliced = splice(&kept, SpliceOptions { crossfade_ms: options.crossfade_ms, out_rate: None })?;
    let out = match options.output {
        OutputFormat::Mono16k => spliced,
        OutputFormat::Stereo48k => resample(&spliced, 48_000)?.to_stereo(),
    };
    record.written_duration_s = out.duration_s();
    Ok((Some(out), record))
}

/// Decodes `path` and cleans it; see [`clean_audio`].
pub fn clean_track(
    path: &Path,
    source_id: &str,
    stem: &str,
    head: &HeadParams,
    encoder: &dyn Encoder,
    options: &CleanOptions,
) -> Result<(Option<AudioBuffer>, TrackRecord)> {
    let audio = read_wav(path)?;
    clean_audio(&audio, source_id, stem, head, encoder, options)
}

pub fn output_name(source_id: &str, stem: &str) -> String {
    format!("{source_id}.{stem}.clean.wav")
}

fn sidecar_name(source_id: &str, stem: &str) -> String {
    format!("{source_id}.{stem}.record.json")
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Written next to each output so reruns can skip finished tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    input_sha256: String,
    head_fingerprint: String,
    threshold: f64,
    crossfade_ms: f64,
    output: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_sha256: Option<String>,
    record: TrackRecord,
}

/// Loads `<dir>/<stem>.head.json` for every stem in `stems`.
pub fn load_heads(dir: &Path, stems: &[StemId]) -> Result<BTreeMap<StemId, Checkpoint>> {
    stems
        .iter()
        .map(|&s| {
            let path = dir.join(head_file_name(s));
            if !path.exists() {
                return Err(Error::MissingHead(format!("{s} (looked for {})", path.display())));
            }
            Ok((s, Checkpoint::load(&path)?))
        })
        .collect()
}

pub fn head_file_name(stem: StemId) -> String {
    format!("{}.head.json", stem.tag())
}

struct Prepared<'a> {
    job: &'a CleanJob,
    stem: StemId,
    head: &'a Checkpoint,
}

/// Cleans every job with the head for its stem on `workers` threads and
/// aggregates the report. Outputs go to `out_dir` unless `options.dry_run`.
pub fn clean_corpus(
    jobs: &[CleanJob],
    heads: &BTreeMap<StemId, Checkpoint>,
    encoder: &dyn Encoder,
    options: &CleanOptions,
    out_dir: &Path,
    workers: usize,
) -> Result<CleaningReport> {
    options.validate()?;
    let mut prepared = Vec::with_capacity(jobs.len());
    for job in jobs {
        let stem: StemId = job.stem.parse()?;
        let head = heads.get(&stem).ok_or_else(|| Error::MissingHead(stem.tag().into()))?;
        head.check_backend(encoder.name(), encoder.dim())?;
        prepared.push(Prepared { job, stem, head });
    }
    if !options.dry_run {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).at_path(out_dir))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Model(format!("thread pool: {e}")))?;
    let results: Vec<std::result::Result<TrackRecord, Failure>> =
        pool.install(|| prepared.par_iter().map(|p| run_job(p, encoder, options, out_dir)).collect());

    let mut tracks = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(t) => tracks.push(t),
            Err(f) => {
                log::warn!("skipping {} ({}): {}", f.source_id, f.path.display(), f.reason);
                failures.push(f);
            }
        }
    }
    Ok(CleaningReport::build(options.threshold, encoder.name(), tracks, failures))
}

fn run_job(
    p: &Prepared,
    encoder: &dyn Encoder,
    options: &CleanOptions,
    out_dir: &Path,
) -> std::result::Result<TrackRecord, Failure> {
    let job = p.job;
    let stem = p.stem.tag();
    let fail = |e: Error| Failure {
        source_id: job.source_id.clone(),
        stem: stem.into(),
        path: job.path.clone(),
        reason: e.to_string(),
    };
    let input_sha256 = sha256_file(&job.path).map_err(fail)?;
    let head_fingerprint = p.head.fingerprint();
    let out_path = out_dir.join(output_name(&job.source_id, stem));
    let sidecar_path = out_dir.join(sidecar_name(&job.source_id, stem));

    if !options.dry_run {
        if let Some(record) = reusable(&sidecar_path, &out_path, &input_sha256, &head_fingerprint, options) {
            log::info!("{}: unchanged, reusing previous result", job.source_id);
            return Ok(record);
        }
    }

    let (audio, mut record) =
        clean_track(&job.path, &job.source_id, stem, &p.head.head, encoder, options).map_err(fail)?;
    if options.dry_run {
        return Ok(record);
    }
    let mut output_sha256 = None;
    match audio {
        Some(a) => {
            wav::write_wav(&out_path, &a, WavFormat::Float32).map_err(fail)?;
            output_sha256 = Some(sha256_file(&out_path).map_err(fail)?);
            record.output_path = Some(out_path);
        }
        None => {
            if out_path.exists() {
                std::fs::remove_file(&out_path).map_err(|e| fail(e.into()))?;
            }
        }
    }
    let sidecar = Sidecar {
        input_sha256,
        head_fingerprint,
        threshold: options.threshold,
        crossfade_ms: options.crossfade_ms,
        output: options.output,
        output_sha256,
        record: record.clone(),
    };
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| fail(e.into()))?;
    std::fs::write(&sidecar_path, json).map_err(|e| fail(Error::from(e).at_path(&sidecar_path)))?;
    Ok(record)
}

fn reusable(
    sidecar: &Path,
    out: &Path,
    input_sha256: &str,
    head_fingerprint: &str,
    options: &CleanOptions,
) -> Option<TrackRecord> {
    let s: Sidecar = serde_json::from_slice(&std::fs::read(sidecar).ok()?).ok()?;
    let same = s.input_sha256 == input_sha256
        && s.head_fingerprint == head_fingerprint
        && s.threshold == options.threshold
        && s.crossfade_ms == options.crossfade_ms
        && s.output == options.output;
    if !same {
        return None;
    }
    match &s.output_sha256 {
        Some(h) if sha256_file(out).ok().as_deref() == Some(h) => Some(s.record),
        None if !out.exists() => Some(s.record),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FrameMatrix;

    /// Zero-crossing rate, which survives per-window normalization.
    struct Zcr;

    impl Encoder for Zcr {
        fn name(&self) -> &str {
            "zcr"
        }
        fn dim(&self) -> usize {
            4
        }
        fn frames(&self, s: &Segment) -> Result<FrameMatrix> {
            let x = s.samples();
            let z = x.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count() as f64 / x.len() as f64;
            FrameMatrix::new(1, 4, vec![z, 0.0, 0.0, 0.0])
        }
    }

    /// Passes the first feature through and maps it to `gain * x0 + bias`.
    fn linear_head(gain: f64, bias: f64) -> HeadParams {
        let mut h = HeadParams::zeros(4).unwrap();
        h.layers[0].weight[0] = 1.0;
        h.layers[1].weight[0] = 1.0;
        h.layers[2].weight[0] = 1.0;
        h.layers[3].weight[0] = gain;
        h.layers[3].bias[0] = bias;
        h
    }

    /// zcr 0.125 (1 kHz) maps to p = 0.999 and zcr 0.0125 (100 Hz) to p = 0.1.
    fn toy_head() -> HeadParams {
        let hi = (0.999f64 / 0.001).ln();
        let lo = (0.1f64 / 0.9).ln();
        let gain = (hi - lo) / (0.125 - 0.0125);
        linear_head(gain, hi - gain * 0.125)
    }

    fn tone_track(freqs: &[f64]) -> AudioBuffer {
        let v = freqs.iter().flat_map(|&f| crate::synth::sine(f, 0.3, 16_000, 48_000)).collect();
        AudioBuffer::mono(v, 16_000).unwrap()
    }

    #[test]
    fn all_windows_kept() {
        let audio = tone_track(&[1000.0; 3]);
        let opts = CleanOptions { output: OutputFormat::Mono16k, ..Default::default() };
        let (out, rec) = clean_audio(&audio, "t", "piano", &toy_head(), &Zcr, &opts).unwrap();
        assert!(rec.probabilities.iter().all(|p| (p - 0.999).abs() < 1e-3), "{:?}", rec.probabilities);
        assert_eq!(rec.kept_indices, vec![0, 1, 2]);
        assert_eq!(rec.output_duration_s, 9.0);
        assert_eq!(out.unwrap().frames(), 144_000);
    }

    #[test]
    fn alternating_scores_keep_outer_windows() {
        let audio = tone_track(&[1000.0, 100.0, 1000.0]);
        let opts = CleanOptions { output: OutputFormat::Mono16k, crossfade_ms: 0.0, ..Default::default() };
        let (out, rec) = clean_audio(&audio, "t", "piano", &toy_head(), &Zcr, &opts).unwrap();
        assert!((rec.probabilities[1] - 0.1).abs() < 0.01, "{:?}", rec.probabilities);
        assert_eq!(rec.kept_indices, vec![0, 2]);
        assert_eq!(rec.output_duration_s, 6.0);
        assert_eq!(out.unwrap().frames(), 96_000);
    }

    #[test]
    fn stereo_output_at_48k() {
        let audio = tone_track(&[1000.0, 100.0, 1000.0]);
        let (out, rec) = clean_audio(&audio, "t", "piano", &toy_head(), &Zcr, &CleanOptions::default()).unwrap();
        let out = out.unwrap();
        assert_eq!((out.num_channels(), out.sample_rate()), (2, 48_000));
        // one gap joint with a 10 ms crossfade
        assert!((rec.written_duration_s - 5.99).abs() < 1e-9);
        assert_eq!(out.channel(0), out.channel(1));
    }

    #[test]
    fn empty_when_threshold_unreachable() {
        let audio = tone_track(&[1000.0, 1000.0]);
        let opts = CleanOptions { threshold: 1.0 - 1e-9, ..Default::default() };
        let (out, rec) = clean_audio(&audio, "t", "piano", &toy_head(), &Zcr, &opts).unwrap();
        assert!(out.is_none());
        assert_eq!(rec.n_kept, 0);
        assert_eq!(rec.note.as_deref(), Some("nothing kept"));
    }

    fn write_corpus(dir: &Path, tracks: &[(&str, &str, &[f64])]) -> Vec<CleanJob> {
        tracks
            .iter()
            .map(|(id, stem, freqs)| {
                let path = dir.join(format!("{id}.wav"));
                wav::write_wav(&path, &tone_track(freqs), WavFormat::Float32).unwrap();
                CleanJob { source_id: id.to_string(), stem: stem.to_string(), path }
            })
            .collect()
    }

    fn heads(stems: &[StemId]) -> BTreeMap<StemId, Checkpoint> {
        stems.iter().map(|&s| (s, Checkpoint::new(s.tag(), "zcr", 0, toy_head()))).collect()
    }

    #[test]
    fn corpus_is_worker_count_independent_and_resumable() {
        let dir = tempfile::tempdir().unwrap();
        let jobs = write_corpus(
            dir.path(),
            &[("b", "piano", &[1000.0, 100.0, 1000.0]), ("a", "bass", &[1000.0, 1000.0]), ("c", "piano", &[100.0])],
        );
        let heads = heads(&[StemId::Piano, StemId::Bass]);
        let opts = CleanOptions::default();
        let one = clean_corpus(&jobs, &heads, &Zcr, &opts, &dir.path().join("o1"), 1).unwrap();
        let four = clean_corpus(&jobs, &heads, &Zcr, &opts, &dir.path().join("o4"), 4).unwrap();
        let strip = |r: &CleaningReport| {
            r.tracks
                .iter()
                .map(|t| (t.source_id.clone(), t.kept_indices.clone(), t.probabilities.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&one), strip(&four));
        assert_eq!(one.totals, four.totals);
        assert_eq!(one.tracks[0].source_id, "a");
        assert_eq!(one.totals.n_kept, 4);
        assert!(dir.path().join("o1/b.piano.clean.wav").exists());
        assert!(!dir.path().join("o1/c.piano.clean.wav").exists());

        let stamp = std::fs::metadata(dir.path().join("o1/b.piano.clean.wav")).unwrap().modified().unwrap();
        let again = clean_corpus(&jobs, &heads, &Zcr, &opts, &dir.path().join("o1"), 2).unwrap();
        assert_eq!(strip(&again), strip(&one));
        assert_eq!(std::fs::metadata(dir.path().join("o1/b.piano.clean.wav")).unwrap().modified().unwrap(), stamp);
    }

    #[test]
    fn dry_run_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let jobs = write_corpus(dir.path(), &[("a", "piano", &[1000.0])]);
        let opts = CleanOptions { dry_run: true, ..Default::default() };
        let r = clean_corpus(&jobs, &heads(&[StemId::Piano]), &Zcr, &opts, &dir.path().join("out"), 1).unwrap();
        assert_eq!(r.totals.n_kept, 1);
        assert!(!dir.path().join("out").exists());
    }

    #[test]
    fn structured_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut jobs = write_corpus(dir.path(), &[("a", "kazoo", &[1000.0])]);
        let out = dir.path().join("out");
        match clean_corpus(&jobs, &heads(&[StemId::Piano]), &Zcr, &CleanOptions::default(), &out, 1) {
            Err(Error::UnknownStem(tag)) => assert_eq!(tag, "kazoo"),
            other => panic!("{other:?}"),
        }
        jobs[0].stem = "drums".into();
        assert!(matches!(
            clean_corpus(&jobs, &heads(&[StemId::Piano]), &Zcr, &CleanOptions::default(), &out, 1),
            Err(Error::MissingHead(_))
        ));
        jobs[0].stem = "piano".into();
        jobs.push(CleanJob { source_id: "z".into(), stem: "piano".into(), path: dir.path().join("missing.wav") });
        let r = clean_corpus(&jobs, &heads(&[StemId::Piano]), &Zcr, &CleanOptions::default(), &out, 1).unwrap();
        assert_eq!(r.tracks.len(), 1);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].source_id, "z");
    }

    #[test]
    fn empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let r = clean_corpus(&[], &BTreeMap::new(), &Zcr, &CleanOptions::default(), dir.path(), 1).unwrap();
        assert!(r.tracks.is_empty());
        assert_eq!(r.totals.output_hours, 0.0);
    }
}
