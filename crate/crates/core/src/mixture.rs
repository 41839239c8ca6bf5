//! Labeled training examples for one stem's purity head.
//!
//! A positive is a 3 s crop of a pure target-stem file. A negative mixes `k`
//! (1..=5) sources drawn from other stems and noise, and when `k > 1` may also
//! include the target itself. Components are loudness-normalized to a common
//! level, summed, normalized again, augmented, downsampled to 16 kHz, and
//! finally peak-normalized.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, wav, AudioBuffer, Segment, SEGMENT_RATE, SEGMENT_SECONDS};
use crate::dsp::{loudness, AugmentConfig, LoudnessTarget};
use crate::error::{Error, Result};
use crate::synth::{self, NoiseColor};
use crate::taxonomy::StemId;

/// Rate at which components are mixed and augmented.
pub const WORKING_RATE: u32 = 48_000;
pub const MAX_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceKind {
    Stem(StemId),
    Noise,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceKind::Stem(s) => s.fmt(f),
            SourceKind::Noise => f.write_str("noise"),
        }
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("noise") {
            Ok(SourceKind::Noise)
        } else {
            s.parse().map(SourceKind::Stem)
        }
    }
}

impl Serialize for SourceKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SourceKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One line of the pool manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub path: PathBuf,
    pub stem: SourceKind,
    pub duration_s: f64,
}

#[derive(Debug, Clone)]
pub struct SourcePool {
    entries: Vec<PoolEntry>,
    /// Seeded white/pink noise stands in when the pool has no noise files.
    pub synthetic_noise: bool,
}

impl SourcePool {
    pub fn new(entries: Vec<PoolEntry>) -> Self {
        SourcePool { entries, synthetic_noise: true }
    }

    /// Reads a JSON-lines manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut entry: PoolEntry = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
            entries.push(entry);
        }
        Ok(SourcePool::new(entries))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn files(&self, kind: SourceKind) -> Vec<&PoolEntry> {
        self.entries.iter().filter(|e| e.stem == kind).collect()
    }

    fn kinds(&self) -> BTreeSet<SourceKind> {
        self.entries.iter().map(|e| e.stem).collect()
    }

    /// Source kinds a negative for `target` may draw from.
    fn negative_kinds(&self, target: StemId) -> Vec<SourceKind> {
        let mut kinds: Vec<SourceKind> = self.kinds().into_iter().filter(|k| *k != SourceKind::Stem(target)).collect();
        if !kinds.is_empty() && self.synthetic_noise && !kinds.contains(&SourceKind::Noise) {
            kinds.push(SourceKind::Noise);
        }
        kinds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Component {
    File { path: PathBuf, kind: SourceKind, offset_s: f64 },
    SyntheticNoise { color: NoiseColor, seed: u64 },
}

impl Component {
    pub fn kind(&self) -> SourceKind {
        match self {
            Component::File { kind, .. } => *kind,
            Component::SyntheticNoise { .. } => SourceKind::Noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub target: StemId,
    pub polarity: Polarity,
    /// Number of mixed components; always 1 for positives.
    pub k: usize,
    pub include_target: bool,
    pub components: Vec<Component>,
    pub seed: u64,
}

impl MixtureSpec {
    /// 1 ("clean") for positives, 0 ("impure") otherwise.
    pub fn label(&self) -> u8 {
        match self.polarity {
            Polarity::Positive => 1,
            Polarity::Negative => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let target = SourceKind::Stem(self.target);
        let bad = |why: &str| Err(Error::param("mixture spec", why.to_string()));
        if self.components.len() != self.k {
            return bad("component count differs from k");
        }
        let has_target = self.components.iter().any(|c| c.kind() == target);
        let has_other = self.components.iter().any(|c| c.kind() != target);
        match self.polarity {
            Polarity::Positive => {
                if self.k != 1 || !has_target || self.include_target {
                    return bad("positive must be exactly one target component");
                }
            }
            Polarity::Negative => {
                if !(1..=MAX_K).contains(&self.k) {
                    return bad("k outside 1..=5");
                }
                if self.include_target && self.k < 2 {
                    return bad("target inclusion needs k > 1");
                }
                if has_target != self.include_target || !has_other {
                    return bad("negative components disagree with include_target");
                }
            }
        }
        Ok(())
    }
}

fn crop_offset<R: Rng + ?Sized>(duration_s: f64, rng: &mut R) -> f64 {
    let span = duration_s - SEGMENT_SECONDS;
    if span > 0.0 {
        rng.random_range(0.0..=span)
    } else {
        0.0
    }
}

fn pick_component<R: Rng + ?Sized>(pool: &SourcePool, kind: SourceKind, rng: &mut R) -> Component {
    let files = pool.files(kind);
    if files.is_empty() {
        // only reachable for noise with the synthetic fallback
        let color = if rng.random_bool(0.5) { NoiseColor::White } else { NoiseColor::Pink };
        return Component::SyntheticNoise { color, seed: rng.random() };
    }
    let entry = files[rng.random_range(0..files.len())];
    Component::File { path: entry.path.clone(), kind, offset_s: crop_offset(entry.duration_s, rng) }
}

/// Draws a mixture recipe. `k` is uniform over 1..=5 and the target joins a
/// `k > 1` negative with probability one half.
pub fn draw_spec<R: Rng + ?Sized>(
    pool: &SourcePool,
    target: StemId,
    polarity: Polarity,
    rng: &mut R,
) -> Result<MixtureSpec> {
    let target_kind = SourceKind::Stem(target);
    let spec = match polarity {
        Polarity::Positive => {
            if pool.files(target_kind).is_empty() {
                return Err(Error::EmptyPool(format!("no {target} files for positives")));
            }
            MixtureSpec {
                target,
                polarity,
                k: 1,
                include_target: false,
                components: vec![pick_component(pool, target_kind, rng)],
                seed: rng.random(),
            }
        }
        Polarity::Negative => {
            let mut kinds = pool.negative_kinds(target);
            if kinds.is_empty() {
                return Err(Error::EmptyPool("no negative sources".into()));
            }
            let k = rng.random_range(1..=MAX_K);
            let include_target = k > 1 && !pool.files(target_kind).is_empty() && rng.random_bool(0.5);
            let others = k - include_target as usize;
            kinds.shuffle(rng);
            let mut components: Vec<Component> = (0..others)
                .map(|i| {
                    // distinct kinds first, repeats only once every kind is used
                    let kind = if i < kinds.len() { kinds[i] } else { kinds[rng.random_range(0..kinds.len())] };
                    pick_component(pool, kind, rng)
                })
                .collect();
            if include_target {
                let at = rng.random_range(0..=components.len());
                components.insert(at, pick_component(pool, target_kind, rng));
            }
            MixtureSpec { target, polarity, k, include_target, components, seed: rng.random() }
        }
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub augment: AugmentConfig,
    pub loudness: LoudnessTarget,
    /// Attempts to replace an unmeasurable (e.g. silent) component.
    pub max_redraws: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { augment: AugmentConfig::default(), loudness: LoudnessTarget::default(), max_redraws: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub segment: Segment,
    pub label: u8,
    /// The spec actually rendered, after any component redraws.
    pub spec: MixtureSpec,
}

const CROP_FRAMES: usize = (SEGMENT_SECONDS as usize) * WORKING_RATE as usize;

fn load_component(component: &Component) -> Result<Vec<f64>> {
    let mut samples = match component {
        Component::SyntheticNoise { color, seed } => synth::noise(*color, 0.5, CROP_FRAMES, *seed),
        Component::File { path, offset_s, .. } => {
            let info = wav::probe(path)?;
            let start = (offset_s * info.sample_rate as f64).round() as u64;
            let len = (SEGMENT_SECONDS * info.sample_rate as f64).round() as u64;
            let crop = wav::read_wav_range(path, start, Some(len)).map_err(|e| e.at_path(path))?;
            audio::resample(&crop.to_mono(), WORKING_RATE)?.into_channels().remove(0)
        }
    };
    // zero-pad crops of files shorter than one window
    samples.resize(CROP_FRAMES, 0.0);
    Ok(samples)
}

fn normalized_component(component: &Component, target: LoudnessTarget) -> Result<Vec<f64>> {
    let buf = AudioBuffer::from_parts(vec![load_component(component)?], WORKING_RATE);
    Ok(loudness::normalize_lufs(&buf, target)?.into_channels().remove(0))
}

/// Renders a spec into a 16 kHz segment. All randomness derives from `spec.seed`.
pub fn render(spec: &MixtureSpec, pool: &SourcePool, config: &RenderConfig) -> Result<Example> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut spec = spec.clone();
    let mut mix = vec![0.0; CROP_FRAMES];
    for slot in 0..spec.components.len() {
        let mut attempts = 0;
        let samples = loop {
            match normalized_component(&spec.components[slot], config.loudness) {
                Ok(s) => break s,
                Err(Error::Unmeasurable(why)) if attempts < config.max_redraws => {
                    attempts += 1;
                    log::warn!("redrawing unmeasurable component {:?}: {why}", spec.components[slot]);
                    let kind = spec.components[slot].kind();
                    spec.components[slot] = pick_component(pool, kind, &mut rng);
                }
                Err(e) => return Err(e),
            }
        };
        mix.iter_mut().zip(&samples).for_each(|(m, s)| *m += s);
    }

    let mix = AudioBuffer::from_parts(vec![mix], WORKING_RATE);
    let mix = loudness::normalize_lufs(&mix, config.loudness)?;
    let mix = config.augment.draw(&mut rng).apply(&mix)?;
    let mix = audio::resample(&mix, SEGMENT_RATE)?;
    let mix = audio::safe_normalize(&mix)?;
    let segment = Segment::new(mix, format!("mix-{:016x}", spec.seed), 0)?;
    Ok(Example { segment, label: spec.label(), spec })
}

/// `n_per_class` positives and as many negatives, in seeded shuffled order.
pub fn build_epoch(
    pool: &SourcePool,
    target: StemId,
    n_per_class: usize,
    seed: u64,
    config: &RenderConfig,
) -> Result<Vec<Example>> {
    if n_per_class == 0 {
        return Err(Error::param("n_per_class", "must be at least 1"));
    }
    config.augment.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        specs.push(draw_spec(pool, target, Polarity::Positive, &mut rng)?);
        specs.push(draw_spec(pool, target, Polarity::Negative, &mut rng)?);
    }
    let mut examples = specs.par_iter().map(|spec| render(spec, pool, config)).collect::<Result<Vec<_>>>()?;
    examples.shuffle(&mut rng);
    Ok(examples)
}
