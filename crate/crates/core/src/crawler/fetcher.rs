use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub source_id: String,
    pub url: String,
    pub title: String,
}

/// A media source that can be searched and downloaded from.
pub trait Fetcher: Send + Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>>;

    /// Raw bytes of the audio for `source_id`, WAV encoded.
    fn download(&self, source_id: &str) -> Result<Vec<u8>>;
}

/// Serves WAV files from a local directory.
///
/// With an `index.json` (`{"query text": ["file.wav", ...]}`) at the root,
/// searches return the listed files; otherwise every query returns all WAV
/// files under the root in path order. Source ids are root-relative paths.
pub struct LocalDirFetcher {
    root: PathBuf,
    index: Option<BTreeMap<String, Vec<String>>>,
}

impl LocalDirFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::Fetch(format!("{} is not a directory", root.display())));
        }
        let index_path = root.join("index.json");
        let index = if index_path.exists() {
            let bytes = std::fs::read(&index_path).map_err(|e| Error::from(e).at_path(&index_path))?;
            Some(serde_json::from_slice(&bytes).map_err(|e| Error::from(e).at_path(&index_path))?)
        } else {
            None
        };
        Ok(LocalDirFetcher { root, index })
    }

    fn all_wavs(&self) -> Result<Vec<String>> {
        fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) -> Result<()> {
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.is_dir() {
                    walk(&path, root, out)?;
                } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                    let rel = path.strip_prefix(root).unwrap_or(&path);
                    out.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
            Ok(())
        }
        let mut out = Vec::new();
        walk(&self.root, &self.root, &mut out)?;
        out.sort();
        Ok(out)
    }
}

impl Fetcher for LocalDirFetcher {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>> {
        let files = match &self.index {
            Some(index) => index.get(query).cloned().unwrap_or_default(),
            None => self.all_wavs()?,
        };
        Ok(files
            .into_iter()
            .take(limit)
            .map(|f| SearchHit {
                url: format!("file://{}", self.root.join(&f).display()),
                title: f.clone(),
                source_id: f,
            })
            .collect())
    }

    fn download(&self, source_id: &str) -> Result<Vec<u8>> {
        if source_id.split('/').any(|part| part == "..") {
            return Err(Error::Fetch(format!("{source_id:?} escapes the fetcher root")));
        }
        let path = self.root.join(source_id);
        std::fs::read(&path).map_err(|e| Error::Fetch(format!("{}: {e}", path.display())))
    }
}

/// Drives an external downloader binary with a `yt-dlp` compatible
/// command line. Searching uses `ytsearchN:` and `--print`; downloads
/// extract audio to WAV in a scratch directory.
#[derive(Debug, Clone)]
pub struct CommandFetcher {
    pub program: PathBuf,
    /// `{id}` is replaced by the source id.
    pub url_template: String,
    pub scratch_dir: PathBuf,
    pub extra_args: Vec<String>,
}

impl CommandFetcher {
    pub fn new(program: impl Into<PathBuf>, scratch_dir: impl Into<PathBuf>) -> Self {
        CommandFetcher {
            program: program.into(),
            url_template: "https://www.youtube.com/watch?v={id}".into(),
            scratch_dir: scratch_dir.into(),
            extra_args: Vec::new(),
        }
    }

    fn run(&self, args: &[String]) -> Result<String> {
        let out = Command::new(&self.program)
            .args(&self.extra_args)
            .args(args)
            .output()
            .map_err(|e| Error::Fetch(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(Error::Fetch(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}

impl Fetcher for CommandFetcher {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>> {
        let stdout = self.run(&[
            "--flat-playlist".into(),
            "--print".into(),
            "%(id)s\t%(webpage_url)s\t%(title)s".into(),
            format!("ytsearch{limit}:{query}"),
        ])?;
        Ok(stdout
            .lines()
            .filter_map(|line| {
                let mut f = line.splitn(3, '\t');
                let id = f.next()?.trim();
                (!id.is_empty()).then(|| SearchHit {
                    source_id: id.to_string(),
                    url: f.next().unwrap_or_default().to_string(),
                    title: f.next().unwrap_or_default().to_string(),
                })
            })
            .take(limit)
            .collect())
    }

    fn download(&self, source_id: &str) -> Result<Vec<u8>> {
        if !source_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Fetch(format!("unsupported source id {source_id:?}")));
        }
        std::fs::create_dir_all(&self.scratch_dir)?;
        let target = self.scratch_dir.join(format!("{source_id}.wav"));
        self.run(&[
            "-x".into(),
            "--audio-format".into(),
            "wav".into(),
            "-o".into(),
            self.scratch_dir.join("%(id)s.%(ext)s").to_string_lossy().into_owned(),
            self.url_template.replace("{id}", source_id),
        ])?;
        let bytes = std::fs::read(&target).map_err(|e| Error::Fetch(format!("{}: {e}", target.display())))?;
        let _ = std::fs::remove_file(&target);
        Ok(bytes)
    }
}
