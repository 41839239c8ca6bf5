use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::wav;
use crate::crawler::{CrawlManifest, Status};
use crate::error::{Error, Result};
use crate::taxonomy::StemId;

/// Upper bucket edges in seconds; the last bucket is open-ended.
const EDGES_S: [f64; 6] = [30.0, 60.0, 120.0, 300.0, 600.0, 1200.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo_s: f64,
    pub hi_s: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemStat {
    pub files: usize,
    pub total_s: f64,
    pub hours: f64,
    pub histogram: Vec<Bucket>,
}

impl Default for StemStat {
    fn default() -> Self {
        let mut lo = 0.0;
        let mut histogram = Vec::with_capacity(EDGES_S.len() + 1);
        for &hi in &EDGES_S {
            histogram.push(Bucket { lo_s: lo, hi_s: Some(hi), count: 0 });
            lo = hi;
        }
        histogram.push(Bucket { lo_s: lo, hi_s: None, count: 0 });
        StemStat { files: 0, total_s: 0.0, hours: 0.0, histogram }
    }
}

impl StemStat {
    fn add(&mut self, duration_s: f64) {
        self.files += 1;
        self.total_s += duration_s;
        self.hours = self.total_s / 3600.0;
        let b = EDGES_S.iter().position(|&e| duration_s < e).unwrap_or(EDGES_S.len());
        self.histogram[b].count += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unreadable {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StemStats {
    pub stems: BTreeMap<String, StemStat>,
    pub total_files: usize,
    pub total_hours: f64,
    pub unreadable: Vec<Unreadable>,
}

impl StemStats {
    pub fn table(&self) -> String {
        let mut s =
            format!("{:<16} {:>6} {:>10}  histogram (<30s <1m <2m <5m <10m <20m >=20m)\n", "stem", "files", "hours");
        for (stem, st) in &self.stems {
            let hist: Vec<String> = st.histogram.iter().map(|b| b.count.to_string()).collect();
            s.push_str(&format!("{stem:<16} {:>6} {:>10.4}  {}\n", st.files, st.hours, hist.join(" ")));
        }
        s.push_str(&format!("{:<16} {:>6} {:>10.4}\n", "total", self.total_files, self.total_hours));
        if !self.unreadable.is_empty() {
            s.push_str(&format!(
                "{} unreadable entr{}\n",
                self.unreadable.len(),
                if self.unreadable.len() == 1 { "y" } else { "ies" }
            ));
        }
        s
    }
}

pub fn stats_from_durations(items: impl IntoIterator<Item = (String, f64)>, unreadable: Vec<Unreadable>) -> StemStats {
    let mut stats = StemStats { unreadable, ..Default::default() };
    for (stem, d) in items {
        stats.stems.entry(stem).or_default().add(d);
    }
    stats.total_files = stats.stems.values().map(|s| s.files).sum();
    stats.total_hours = stats.stems.values().map(|s| s.total_s).sum::<f64>() / 3600.0;
    stats
}

/// Stem of a WAV file: `<id>.<stem>.clean.wav`, a stem-named parent
/// directory, or a `<stem>_<n>.wav` name, in that order.
fn infer_stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let parts: Vec<&str> = name.split('.').collect();
    if parts.len() >= 4 && parts[parts.len() - 2] == "clean" {
        if let Ok(s) = parts[parts.len() - 3].parse::<StemId>() {
            return s.tag().into();
        }
    }
    let parent = path.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str());
    if let Some(Ok(s)) = parent.map(str::parse::<StemId>) {
        return s.tag().into();
    }
    let stem_part = name.trim_end_matches(".wav");
    if let Some((prefix, _)) = stem_part.rsplit_once('_') {
        if let Ok(s) = prefix.parse::<StemId>() {
            return s.tag().into();
        }
    }
    "unknown".into()
}

fn wav_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).at_path(dir))? {
        let path = entry?.path();
        if path.is_dir() {
            wav_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Per-stem durations of a directory of WAVs (searched recursively) or of
/// the fetched records of a crawl manifest.
pub fn corpus_stats(path: &Path) -> Result<StemStats> {
    let mut items = Vec::new();
    let mut unreadable = Vec::new();
    let mut probe_into = |stem: String, p: &Path, unreadable: &mut Vec<Unreadable>| match wav::probe(p) {
        Ok(info) => items.push((stem, info.duration_s())),
        Err(e) => unreadable.push(Unreadable { path: p.to_path_buf(), reason: e.to_string() }),
    };
    if path.is_dir() {
        let mut files = Vec::new();
        wav_files(path, &mut files)?;
        files.sort();
        for f in files {
            probe_into(infer_stem(&f), &f, &mut unreadable);
        }
    } else {
        let manifest = CrawlManifest::load(path)?;
        for r in manifest.records().filter(|r| r.status == Status::Fetched) {
            match &r.local_path {
                Some(p) => probe_into(r.stem.clone(), &manifest.resolve(p), &mut unreadable),
                None => {
                    unreadable.push(Unreadable { path: PathBuf::from(&r.source_id), reason: "no local file".into() })
                }
            }
        }
    }
    Ok(stats_from_durations(items, unreadable))
}
