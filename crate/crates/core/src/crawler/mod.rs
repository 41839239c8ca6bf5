//! Query-driven crawling into an append-only JSON-lines manifest.
//!
//! Planning turns queries into `pending` records. Execution downloads each
//! pending record, converts it to 48 kHz stereo, hashes the PCM, and moves
//! it to `fetched`, `failed` or `duplicate`.

mod fetcher;
mod rate;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::wav::{self, decode_wav_bytes, quantize, WavFormat};
use crate::audio::{resample, AudioBuffer};
use crate::error::{Error, Result};
use crate::taxonomy::Query;

pub use fetcher::{CommandFetcher, Fetcher, LocalDirFetcher, SearchHit};
pub use rate::{Clock, FakeClock, Rate, RateLimiter, SystemClock};

pub const DEFAULT_PER_QUERY_LIMIT: usize = 50;
pub const CRAWL_RATE: u32 = 48_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Fetched,
    Failed,
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub query: String,
    pub stem: String,
    pub language_tag: String,
    pub source_id: String,
    pub url: String,
    #[serde(default)]
    pub title: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// Relative paths are relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_path: Option<PathBuf>,
    /// For duplicates, the source id of the record kept instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
}

impl ManifestRecord {
    fn key(&self) -> (String, String) {
        (self.source_id.clone(), self.query.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query: String,
    pub stem: String,
    pub language_tag: String,
    pub reason: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Record(ManifestRecord),
    QueryFailure(QueryFailure),
}

/// In-memory view of a manifest file. Every change is appended to the file;
/// on load, later lines for the same `(source_id, query)` replace earlier ones.
#[derive(Debug, Default)]
pub struct CrawlManifest {
    path: Option<PathBuf>,
    records: Vec<ManifestRecord>,
    index: HashMap<(String, String), usize>,
    query_failures: Vec<QueryFailure>,
}

impl CrawlManifest {
    /// A manifest that is never written to disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path`, or starts an empty manifest there if it does not exist.
    pub fn open(path: &Path) -> Result<Self> {
        let mut m = if path.exists() { Self::read(path)? } else { Self::default() };
        m.path = Some(path.to_path_buf());
        Ok(m)
    }

    /// Loads an existing manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::read(path)?;
        m.path = Some(path.to_path_buf());
        Ok(m)
    }

    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut m = Self::default();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
            match parsed {
                Line::Record(r) => m.upsert(r),
                Line::QueryFailure(f) => m.query_failures.push(f),
            }
        }
        Ok(m)
    }

    fn upsert(&mut self, r: ManifestRecord) {
        match self.index.get(&r.key()) {
            Some(&i) => self.records[i] = r,
            None => {
                self.index.insert(r.key(), self.records.len());
                self.records.push(r);
            }
        }
    }

    fn append_line(&self, line: &Line) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut f =
            OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut json = serde_json::to_string(line)?;
        json.push('\n');
        f.write_all(json.as_bytes()).map_err(|e| Error::from(e).at_path(path))?;
        Ok(())
    }

    /// Adds a record or updates an existing one. Updates may only move a
    /// record out of `pending`; re-writing identical content is a no-op.
    pub fn commit(&mut self, r: ManifestRecord) -> Result<()> {
        if let Some(&i) = self.index.get(&r.key()) {
            let old = &self.records[i];
            if *old == r {
                return Ok(());
            }
            if old.status != Status::Pending || r.status == Status::Pending {
                return Err(Error::Manifest(format!(
                    "{} ({}): illegal transition {:?} -> {:?}",
                    r.source_id, r.query, old.status, r.status
                )));
            }
        }
        self.append_line(&Line::Record(r.clone()))?;
        self.upsert(r);
        Ok(())
    }

    pub fn record_query_failure(&mut self, f: QueryFailure) -> Result<()> {
        self.append_line(&Line::QueryFailure(f.clone()))?;
        self.query_failures.push(f);
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter()
    }

    pub fn query_failures(&self) -> &[QueryFailure] {
        &self.query_failures
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<Status, usize> {
        let mut c = BTreeMap::new();
        for r in &self.records {
            *c.entry(r.status).or_default() += 1;
        }
        c
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn dir(&self) -> Option<&Path> {
        self.path.as_deref().and_then(Path::parent)
    }

    /// Absolute location of a record's `local_path`.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match self.dir() {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn relativize(&self, p: &Path) -> PathBuf {
        self.dir()
            .filter(|d| !d.as_os_str().is_empty())
            .and_then(|d| p.strip_prefix(d).ok())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| p.to_path_buf())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub queries: usize,
    pub failed_queries: usize,
    pub pending: usize,
    pub duplicate: usize,
    /// Hits already present from an earlier plan.
    pub known: usize,
}

/// Searches every query and records its hits as `pending`. A source id
/// already planned by an earlier query is recorded as `duplicate`. Search
/// failures are recorded per query and do not stop planning.
pub fn plan_crawl(
    queries: &[Query],
    fetcher: &dyn Fetcher,
    per_query_limit: usize,
    manifest: &mut CrawlManifest,
) -> Result<PlanSummary> {
    let mut summary = PlanSummary { queries: queries.len(), ..Default::default() };
    let mut owner: HashMap<String, String> = HashMap::new();
    for r in manifest.records() {
        if r.status != Status::Duplicate {
            owner.entry(r.source_id.clone()).or_insert_with(|| r.query.clone());
        }
    }
    for q in queries {
        let hits = match fetcher.search(&q.text, per_query_limit) {
            Ok(h) => h,
            Err(e) => {
                log::warn!("search failed for {:?}: {e}", q.text);
                summary.failed_queries += 1;
                manifest.record_query_failure(QueryFailure {
                    query: q.text.clone(),
                    stem: q.stem.tag().into(),
                    language_tag: q.language_tag.clone(),
                    reason: e.to_string(),
                })?;
                continue;
            }
        };
        for hit in hits.into_iter().take(per_query_limit) {
            if manifest.index.contains_key(&(hit.source_id.clone(), q.text.clone())) {
                summary.known += 1;
                continue;
            }
            let mut r = ManifestRecord {
                query: q.text.clone(),
                stem: q.stem.tag().into(),
                language_tag: q.language_tag.clone(),
                source_id: hit.source_id.clone(),
                url: hit.url,
                title: hit.title,
                status: Status::Pending,
                reason: None,
                content_hash: None,
                duration_s: None,
                local_path: None,
                duplicate_of: None,
            };
            match owner.get(&hit.source_id) {
                Some(first) => {
                    r.status = Status::Duplicate;
                    r.reason = Some(format!("already planned by query {first:?}"));
                    r.duplicate_of = Some(hit.source_id.clone());
                    summary.duplicate += 1;
                }
                None => {
                    owner.insert(hit.source_id.clone(), q.text.clone());
                    summary.pending += 1;
                }
            }
            manifest.commit(r)?;
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecuteSummary {
    pub downloads: usize,
    pub fetched: usize,
    pub failed: usize,
    pub duplicate: usize,
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
}

/// SHA-256 of the 16-bit PCM that is stored for `x`, prefixed by its
/// channel count and rate.
pub fn pcm_hash(x: &AudioBuffer) -> String {
    let mut h = Sha256::new();
    h.update((x.num_channels() as u32).to_le_bytes());
    h.update(x.sample_rate().to_le_bytes());
    let mut buf = Vec::with_capacity(x.frames() * x.num_channels() * 2);
    for i in 0..x.frames() {
        for c in x.channels() {
            buf.extend_from_slice(&(quantize(c[i], 16) as i16).to_le_bytes());
        }
    }
    h.update(&buf);
    hex::encode(h.finalize())
}

/// 48 kHz stereo version of a decoded download.
pub fn to_crawl_format(x: &AudioBuffer) -> Result<AudioBuffer> {
    Ok(resample(x, CRAWL_RATE)?.to_stereo())
}

fn file_name_for(source_id: &str) -> String {
    let safe: String =
        source_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    let tag = hex::encode(&Sha256::digest(source_id.as_bytes())[..4]);
    format!("{safe}-{tag}.wav")
}

struct Converted {
    audio: AudioBuffer,
    hash: String,
}

/// Downloads and converts every pending record, then commits the results
/// in manifest order. Records that are not pending are left alone, so a
/// second run over the same manifest does nothing.
pub fn execute_crawl(
    manifest: &mut CrawlManifest,
    fetcher: &dyn Fetcher,
    limiter: &RateLimiter,
    options: &ExecuteOptions,
) -> Result<ExecuteSummary> {
    let pending: Vec<ManifestRecord> = manifest.records().filter(|r| r.status == Status::Pending).cloned().collect();
    let mut summary = ExecuteSummary::default();
    if pending.is_empty() {
        return Ok(summary);
    }
    std::fs::create_dir_all(&options.out_dir).map_err(|e| Error::from(e).at_path(&options.out_dir))?;
    let mut seen: HashMap<String, String> = manifest
        .records()
        .filter(|r| r.status == Status::Fetched)
        .filter_map(|r| Some((r.content_hash.clone()?, r.source_id.clone())))
        .collect();
    let workers = options.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Fetch(format!("thread pool: {e}")))?;

    for chunk in pending.chunks(workers * 2) {
        let results: Vec<Result<Converted>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|r| {
                    limiter.acquire();
                    let bytes = fetcher.download(&r.source_id)?;
                    let audio = to_crawl_format(&decode_wav_bytes(&bytes)?)?;
                    let hash = pcm_hash(&audio);
                    Ok(Converted { audio, hash })
                })
                .collect()
        });
        summary.downloads += chunk.len();
        for (r, result) in chunk.iter().zip(results) {
            let mut r = r.clone();
            match result {
                Err(e) => {
                    log::warn!("{}: {e}", r.source_id);
                    r.status = Status::Failed;
                    r.reason = Some(e.to_string());
                    summary.failed += 1;
                }
                Ok(c) => {
                    if let Some(first) = seen.get(&c.hash) {
                        r.status = Status::Duplicate;
                        r.reason = Some("identical PCM already fetched".into());
                        r.duplicate_of = Some(first.clone());
                        r.content_hash = Some(c.hash);
                        summary.duplicate += 1;
                    } else {
                        let path = options.out_dir.join(file_name_for(&r.source_id));
                        wav::write_wav(&path, &c.audio, WavFormat::Int16)?;
                        seen.insert(c.hash.clone(), r.source_id.clone());
                        r.status = Status::Fetched;
                        r.duration_s = Some(c.audio.duration_s());
                        r.content_hash = Some(c.hash);
                        r.local_path = Some(manifest.relativize(&path));
                        summary.fetched += 1;
                    }
                }
            }
            manifest.commit(r)?;
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::StemId;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    fn query(text: &str) -> Query {
        Query {
            stem: StemId::Piano,
            language_tag: "en".into(),
            keyword: "piano".into(),
            text: text.into(),
            fallback: false,
        }
    }

    struct Scripted {
        results: HashMap<String, Result<Vec<SearchHit>>>,
    }

    fn hit(id: &str) -> SearchHit {
        SearchHit { source_id: id.into(), url: format!("mock://{id}"), title: id.into() }
    }

    impl Fetcher for Scripted {
        fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>> {
            match self.results.get(query) {
                Some(Ok(h)) => Ok(h.iter().take(limit).cloned().collect()),
                Some(Err(e)) => Err(Error::Fetch(e.to_string())),
                None => Ok(Vec::new()),
            }
        }
        fn download(&self, _: &str) -> Result<Vec<u8>> {
            Err(Error::Fetch("not available".into()))
        }
    }

    #[test]
    fn plan_disjoint_duplicate_and_failure() {
        let f = Scripted {
            results: HashMap::from([
                ("q1".to_string(), Ok(vec![hit("a"), hit("b"), hit("c"), hit("d")])),
                ("q2".to_string(), Ok(vec![hit("e"), hit("f"), hit("a")])),
                ("q3".to_string(), Err(Error::Fetch("timeout".into()))),
            ]),
        };
        let mut m = CrawlManifest::in_memory();
        let s = plan_crawl(&[query("q1"), query("q3"), query("q2")], &f, 3, &mut m).unwrap();
        assert_eq!((s.pending, s.duplicate, s.failed_queries), (5, 1, 1));
        assert_eq!(m.len(), 6);
        let dup = m.records().find(|r| r.status == Status::Duplicate).unwrap();
        assert_eq!((dup.source_id.as_str(), dup.query.as_str()), ("a", "q2"));
        assert_eq!(m.query_failures()[0].query, "q3");
        let again = plan_crawl(&[query("q1"), query("q2")], &f, 3, &mut m).unwrap();
        assert_eq!((again.pending, again.known), (0, 6));
    }

    #[test]
    fn manifest_reload_is_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let f = Scripted { results: HashMap::from([("q".to_string(), Ok(vec![hit("a")]))]) };
        let mut m = CrawlManifest::open(&path).unwrap();
        plan_crawl(&[query("q")], &f, 5, &mut m).unwrap();
        let mut r = m.records().next().unwrap().clone();
        r.status = Status::Failed;
        r.reason = Some("gone".into());
        m.commit(r.clone()).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        let back = CrawlManifest::load(&path).unwrap();
        assert_eq!(back.records().collect::<Vec<_>>(), vec![&r]);
        let mut m = back;
        let mut again = r.clone();
        again.status = Status::Fetched;
        assert!(matches!(m.commit(again), Err(Error::Manifest(_))));
        m.commit(r).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    struct Counting {
        inner: LocalDirFetcher,
        downloads: AtomicUsize,
    }

    impl Fetcher for Counting {
        fn search(&self, q: &str, limit: usize) -> Result<Vec<SearchHit>> {
            self.inner.search(q, limit)
        }
        fn download(&self, id: &str) -> Result<Vec<u8>> {
            self.downloads.fetch_add(1, Ordering::SeqCst);
            self.inner.download(id)
        }
    }

    fn fixture_dir(dir: &Path) {
        let tone = |f: f64| AudioBuffer::mono(crate::synth::sine(f, 0.4, 16_000, 16_000), 16_000).unwrap();
        wav::write_wav(&dir.join("a.wav"), &tone(440.0), WavFormat::Int16).unwrap();
        wav::write_wav(&dir.join("b.wav"), &tone(660.0).to_stereo(), WavFormat::Float32).unwrap();
        wav::write_wav(&dir.join("c.wav"), &tone(440.0), WavFormat::Int16).unwrap();
        std::fs::write(dir.join("d.wav"), b"garbage").unwrap();
    }

    #[test]
    fn execute_converts_dedups_and_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        std::fs::create_dir(&src).unwrap();
        fixture_dir(&src);
        let f = Counting { inner: LocalDirFetcher::new(&src).unwrap(), downloads: AtomicUsize::new(0) };
        let path = dir.path().join("crawl/manifest.jsonl");
        let mut m = CrawlManifest::open(&path).unwrap();
        plan_crawl(&[query("piano solo")], &f, 50, &mut m).unwrap();
        let total = m.len();
        let clock = Arc::new(FakeClock::default());
        let lim = RateLimiter::new(Rate::per_minute(60.0).unwrap(), clock.clone());
        let opts = ExecuteOptions { out_dir: dir.path().join("crawl/audio"), workers: 3 };
        let s = execute_crawl(&mut m, &f, &lim, &opts).unwrap();
        assert_eq!((s.fetched, s.duplicate, s.failed, s.downloads), (2, 1, 1, 4));
        assert_eq!(m.len(), total);
        assert_eq!(clock.now(), Duration::from_secs(3));
        let c = m.records().find(|r| r.source_id == "c.wav").unwrap();
        assert_eq!((c.status, c.duplicate_of.as_deref()), (Status::Duplicate, Some("a.wav")));
        for r in m.records().filter(|r| r.status == Status::Fetched) {
            let local = m.resolve(r.local_path.as_ref().unwrap());
            assert!(r.local_path.as_ref().unwrap().is_relative());
            let info = wav::probe(&local).unwrap();
            assert_eq!((info.channels, info.sample_rate, info.frames), (2, 48_000, 48_000));
            assert_eq!(pcm_hash(&wav::read_wav(&local).unwrap()), *r.content_hash.as_ref().unwrap());
        }

        let before = std::fs::read(&path).unwrap();
        let mut reloaded = CrawlManifest::load(&path).unwrap();
        let s2 = execute_crawl(&mut reloaded, &f, &lim, &opts).unwrap();
        assert_eq!(s2, ExecuteSummary::default());
        assert_eq!(f.downloads.load(Ordering::SeqCst), 4);
        assert_eq!(std::fs::read(&path).unwrap(), before);
    }
}
