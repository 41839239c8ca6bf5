use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::TrackRecord;
use crate::audio::SEGMENT_SECONDS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub source_id: String,
    pub stem: String,
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub n_tracks: usize,
    pub n_segments: usize,
    pub n_kept: usize,
    pub input_hours: f64,
    /// Kept windows × 3 s, before crossfades.
    pub output_hours: f64,
}

impl Totals {
    fn add(&mut self, t: &TrackRecord) {
        self.n_tracks += 1;
        self.n_segments += t.n_segments;
        self.n_kept += t.n_kept;
        self.input_hours += t.input_duration_s / 3600.0;
    }

    fn finish(&mut self) {
        self.output_hours = SEGMENT_SECONDS * self.n_kept as f64 / 3600.0;
    }
}

/// Crawl and cleaned totals of the original large-scale run, kept only for
/// side-by-side comparison with a local run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub crawled_hours: f64,
    pub cleaned_hours: f64,
}

impl Default for ReferenceFigures {
    fn default() -> Self {
        ReferenceFigures { crawled_hours: 4643.51, cleaned_hours: 737.35 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub threshold: f64,
    pub backend: String,
    /// Sorted by `(stem, source_id)`.
    pub tracks: Vec<TrackRecord>,
    pub stems: BTreeMap<String, Totals>,
    pub totals: Totals,
    pub failures: Vec<Failure>,
    pub reference: ReferenceFigures,
}

impl CleaningReport {
    pub fn build(threshold: f64, backend: &str, mut tracks: Vec<TrackRecord>, mut failures: Vec<Failure>) -> Self {
        tracks.sort_by(|a, b| (&a.stem, &a.source_id).cmp(&(&b.stem, &b.source_id)));
        failures.sort_by(|a, b| (&a.stem, &a.source_id).cmp(&(&b.stem, &b.source_id)));
        let mut stems: BTreeMap<String, Totals> = BTreeMap::new();
        let mut totals = Totals::default();
        for t in &tracks {
            stems.entry(t.stem.clone()).or_default().add(t);
            totals.add(t);
        }
        stems.values_mut().for_each(Totals::finish);
        totals.finish();
        CleaningReport {
            threshold,
            backend: backend.into(),
            tracks,
            stems,
            totals,
            failures,
            reference: ReferenceFigures::default(),
        }
    }

    /// Checks `n_kept <= n_segments`, `output = 3 s × n_kept` per track, and
    /// that per-stem and global totals equal the sums of their parts. Returns
    /// a description of every violation.
    pub fn conservation_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in &self.tracks {
            if t.n_kept > t.n_segments {
                out.push(format!("{}: kept {} of {}", t.source_id, t.n_kept, t.n_segments));
            }
            if t.n_kept != t.kept_indices.len() {
                out.push(format!("{}: n_kept {} but {} indices", t.source_id, t.n_kept, t.kept_indices.len()));
            }
            if t.output_duration_s != SEGMENT_SECONDS * t.n_kept as f64 {
                out.push(format!("{}: output {} s for {} windows", t.source_id, t.output_duration_s, t.n_kept));
            }
        }
        let track_out_s: f64 = self.tracks.iter().map(|t| t.output_duration_s).sum();
        let stem_out_h: f64 = self.stems.values().map(|s| s.output_hours).sum();
        if (track_out_s / 3600.0 - self.totals.output_hours).abs() > 1e-12 {
            out.push(format!("track outputs {track_out_s} s vs global {} h", self.totals.output_hours));
        }
        if (stem_out_h - self.totals.output_hours).abs() > 1e-12 {
            out.push(format!("stem outputs {stem_out_h} h vs global {} h", self.totals.output_hours));
        }
        let kept: usize = self.stems.values().map(|s| s.n_kept).sum();
        let segs: usize = self.stems.values().map(|s| s.n_segments).sum();
        let n: usize = self.stems.values().map(|s| s.n_tracks).sum();
        if (kept, segs, n) != (self.totals.n_kept, self.totals.n_segments, self.totals.n_tracks) {
            out.push("stem counts do not sum to global counts".into());
        }
        for (stem, s) in &self.stems {
            let kept: usize = self.tracks.iter().filter(|t| &t.stem == stem).map(|t| t.n_kept).sum();
            if kept != s.n_kept {
                out.push(format!("{stem}: tracks keep {kept}, stem total says {}", s.n_kept));
            }
        }
        out
    }

    /// Human-readable per-stem summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:<16} {:>7} {:>9} {:>7} {:>10} {:>10}\n",
            "stem", "tracks", "segments", "kept", "in (h)", "out (h)"
        );
        let mut row = |name: &str, t: &Totals| {
            s.push_str(&format!(
                "{:<16} {:>7} {:>9} {:>7} {:>10.4} {:>10.4}\n",
                name, t.n_tracks, t.n_segments, t.n_kept, t.input_hours, t.output_hours
            ));
        };
        for (name, t) in &self.stems {
            row(name, t);
        }
        row("total", &self.totals);
        if !self.failures.is_empty() {
            s.push_str(&format!("{} track(s) failed\n", self.failures.len()));
        }
        s
    }
}
