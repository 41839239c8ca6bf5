use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use stemcurate::audio::{self, wav, WavFormat};
use stemcurate::classifier::Checkpoint;
use stemcurate::cleaner::{self, CleanJob};
use stemcurate::config::{require_exists, PipelineConfig};
use stemcurate::crawler::{
    self, CommandFetcher, CrawlManifest, ExecuteOptions, Fetcher, LocalDirFetcher, Rate, RateLimiter, Status,
    SystemClock,
};
use stemcurate::mixture::SourcePool;
use stemcurate::pipeline;
use stemcurate::taxonomy::{expand_queries, Query, StemId, Taxonomy, TranslationConfig};

#[derive(Debug, Parser)]
#[command(name = "stemcurate", version, about = "Curate single-instrument stem datasets from crawled audio")]
struct Cli {
    /// Pipeline config (JSON). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Plan and report without writing audio.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expand stem keywords into per-language search queries (TSV).
    ExpandQueries {
        /// Translation table: language tag -> {keyword -> localized}.
        #[arg(long)]
        translations: Option<PathBuf>,
        /// Output TSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail on a missing translation instead of using the English keyword.
        #[arg(long)]
        strict: bool,
    },
    /// Search and download audio for a query list.
    Crawl {
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Directory for downloaded WAVs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Crawl manifest; `<out>/manifest.jsonl` when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        /// Request rate, e.g. `30/min`.
        #[arg(long)]
        rate: Option<Rate>,
        /// Serve searches and downloads from a local directory of WAVs.
        #[arg(long)]
        source_dir: Option<PathBuf>,
        /// Downloader program with a yt-dlp compatible command line.
        #[arg(long)]
        downloader: Option<PathBuf>,
    },
    /// Cut a track into 3 s mono 16 kHz windows.
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a purity head for one stem on rendered mixtures.
    TrainHead {
        #[arg(long)]
        stem: StemId,
        /// Pool manifest (JSON lines of path, stem, duration_s).
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Directory for the checkpoint and reports.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Evaluate a trained head on freshly rendered mixtures.
    EvalHead {
        #[arg(long)]
        stem: StemId,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        heads: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        n_per_class: Option<usize>,
        /// Report path; `<heads>/<stem>.eval.json` when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter crawled tracks down to their pure windows.
    Clean {
        /// Crawl manifest whose fetched records are cleaned.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        heads: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report path; `<out>/cleaning_report.json` when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-stem file counts, hours and duration histograms.
    Stats {
        /// Directory of WAVs or a crawl manifest.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Signal-to-distortion ratio of an estimate against a reference.
    Sdr {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.train.seed = cfg.seed;
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match flag.or_else(|| fallback.clone()) {
        Some(p) => Ok(p),
        None => bail!("--{name} is required (or set it in the config paths)"),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let dry_run = cli.dry_run;
    match cli.command {
        Command::ExpandQueries { translations, out, strict } => {
            let taxonomy = Taxonomy::default();
            let table = match translations.or(cfg.paths.translations.clone()) {
                Some(p) => TranslationConfig::load(&p)?,
                None => TranslationConfig::default_config(&taxonomy),
            };
            let queries = expand_queries(&taxonomy, &table.templates()?, !strict)?;
            let mut text = String::new();
            for q in &queries {
                text.push_str(&q.to_tsv());
                text.push('\n');
            }
            let fallbacks = queries.iter().filter(|q| q.fallback).count();
            match out {
                Some(path) => {
                    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                    println!(
                        "{} queries written to {} ({fallbacks} with English fallback)",
                        queries.len(),
                        path.display()
                    );
                }
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }

        Command::Crawl { queries, out, manifest, limit, rate, source_dir, downloader } => {
            let queries_path = pick(queries, &cfg.paths.queries, "queries")?;
            let text = std::fs::read_to_string(&queries_path)
                .with_context(|| format!("reading {}", queries_path.display()))?;
            let queries: Vec<Query> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(Query::from_tsv)
                .collect::<stemcurate::Result<_>>()?;
            let out_dir = pick(out, &cfg.paths.crawl_dir, "out")?;
            let limit = limit.unwrap_or(cfg.crawl.per_query_limit);
            let rate = rate.unwrap_or(cfg.crawl.rate);
            let fetcher: Box<dyn Fetcher> = match source_dir {
                Some(dir) => Box::new(LocalDirFetcher::new(dir)?),
                None => Box::new(CommandFetcher::new(
                    downloader.unwrap_or(cfg.crawl.downloader.clone()),
                    out_dir.join(".scratch"),
                )),
            };
            if dry_run {
                let mut planned = CrawlManifest::in_memory();
                let plan = crawler::plan_crawl(&queries, fetcher.as_ref(), limit, &mut planned)?;
                println!("{}", serde_json::to_string_pretty(&plan)?);
                return Ok(());
            }
            let manifest_path =
                manifest.or(cfg.paths.crawl_manifest.clone()).unwrap_or_else(|| out_dir.join("manifest.jsonl"));
            let mut manifest = CrawlManifest::open(&manifest_path)?;
            let plan = crawler::plan_crawl(&queries, fetcher.as_ref(), limit, &mut manifest)?;
            let limiter = RateLimiter::new(rate, Arc::new(SystemClock::default()));
            let options = ExecuteOptions { out_dir, workers: cfg.workers };
            let exec = crawler::execute_crawl(&mut manifest, fetcher.as_ref(), &limiter, &options)?;
            println!(
                "planned {} new ({} duplicate, {} failed queries); downloaded {}: {} fetched, {} duplicate, {} failed",
                plan.pending,
                plan.duplicate,
                plan.failed_queries,
                exec.downloads,
                exec.fetched,
                exec.duplicate,
                exec.failed
            );
            println!("manifest: {}", manifest_path.display());
        }

        Command::Segment { input, out } => {
            require_exists(&input)?;
            let track = audio::to_segment_format(&wav::read_wav(&input)?)?;
            let id = input.file_stem().and_then(|s| s.to_str()).unwrap_or("track").to_string();
            let segments = audio::segment(&track, &id)?;
            let dropped = audio::dropped_frames(track.frames());
            #[derive(Serialize)]
            struct Entry {
                index: usize,
                path: String,
            }
            let mut entries = Vec::with_capacity(segments.len());
            if !dry_run {
                std::fs::create_dir_all(&out)?;
            }
            for s in &segments {
                let name = format!("{id}.{:04}.wav", s.index);
                if !dry_run {
                    wav::write_wav(&out.join(&name), s.audio(), WavFormat::Float32)?;
                }
                entries.push(Entry { index: s.index, path: name });
            }
            if !dry_run {
                write_json(
                    &out.join(format!("{id}.segments.json")),
                    &serde_json::json!({
                        "source": input,
                        "segments": entries,
                        "dropped_frames": dropped,
                    }),
                )?;
            }
            println!("{}: {} windows, {dropped} trailing frames dropped", input.display(), segments.len());
        }

        Command::TrainHead { stem, pool, out, n_per_class, max_epochs } => {
            let pool = SourcePool::load(&pick(pool, &cfg.paths.pool, "pool")?)?;
            let out_dir = pick(out, &cfg.paths.heads, "out")?;
            if let Some(n) = n_per_class {
                cfg.train.n_per_class = n;
            }
            if let Some(e) = max_epochs {
                cfg.train.max_epochs = e;
            }
            cfg.validate()?;
            let encoder = cfg.backend.build()?;
            let (checkpoint, report) =
                pipeline::train_stem(&pool, stem, encoder.as_ref(), &cfg.train, &cfg.render(), cfg.workers)?;
            std::fs::create_dir_all(&out_dir)?;
            let head_path = out_dir.join(cleaner::head_file_name(stem));
            checkpoint.save(&head_path)?;
            write_json(&out_dir.join(format!("{stem}.training.json")), &report)?;
            write_json(&out_dir.join(format!("{stem}.validation.json")), &report.validation)?;
            let v = &report.validation;
            println!(
                "{stem}: best epoch {} of {}; validation acc {:.4} P {:.4} R {:.4} F1 {:.4} (n={})",
                report.best_epoch,
                report.log.len(),
                v.accuracy,
                v.precision,
                v.recall,
                v.f1,
                v.n()
            );
            println!("checkpoint: {}", head_path.display());
        }

        Command::EvalHead { stem, pool, heads, threshold, n_per_class, out } => {
            let pool = SourcePool::load(&pick(pool, &cfg.paths.pool, "pool")?)?;
            let heads_dir = pick(heads, &cfg.paths.heads, "heads")?;
            let checkpoint = Checkpoint::load(&heads_dir.join(cleaner::head_file_name(stem)))?;
            let threshold = threshold.unwrap_or(cfg.thresholds.eval);
            let encoder = cfg.backend.build()?;
            // a different stream from the one the head was trained on
            let seed = cfg.seed.wrapping_add(0x5eed_e7a1);
            let report = pipeline::evaluate_stem(
                &checkpoint,
                &pool,
                stem,
                encoder.as_ref(),
                pipeline::EvalSettings { n_per_class: n_per_class.unwrap_or(cfg.train.n_per_class), seed, threshold },
                &cfg.render(),
                cfg.workers,
            )?;
            let path = out.unwrap_or_else(|| heads_dir.join(format!("{stem}.eval.json")));
            write_json(&path, &report)?;
            println!(
                "{stem} @ {threshold}: acc {:.4} P {:.4} R {:.4} F1 {:.4} (tp {} fp {} tn {} fn {})",
                report.accuracy,
                report.precision,
                report.recall,
                report.f1,
                report.tp,
                report.fp,
                report.tn,
                report.fn_
            );
        }

        Command::Clean { manifest, heads, threshold, out, report } => {
            if let Some(t) = threshold {
                cfg.thresholds.clean = t;
            }
            cfg.validate()?;
            let manifest_path = pick(manifest, &cfg.paths.crawl_manifest, "manifest")?;
            let manifest = CrawlManifest::load(&manifest_path)?;
            let jobs: Vec<CleanJob> = manifest
                .records()
                .filter(|r| r.status == Status::Fetched)
                .filter_map(|r| {
                    r.local_path.as_ref().map(|p| CleanJob {
                        source_id: r.source_id.clone(),
                        stem: r.stem.clone(),
                        path: manifest.resolve(p),
                    })
                })
                .collect();
            let stems: Vec<StemId> =
                jobs.iter().map(|j| j.stem.parse()).collect::<stemcurate::Result<BTreeSet<_>>>()?.into_iter().collect();
            let heads = cleaner::load_heads(&pick(heads, &cfg.paths.heads, "heads")?, &stems)?;
            let out_dir = pick(out, &cfg.paths.clean_out, "out")?;
            let encoder = cfg.backend.build()?;
            let result = cleaner::clean_corpus(
                &jobs,
                &heads,
                encoder.as_ref(),
                &cfg.clean_options(dry_run),
                &out_dir,
                cfg.workers,
            )?;
            let report_path = report.unwrap_or_else(|| out_dir.join("cleaning_report.json"));
            write_json(&report_path, &result)?;
            print!("{}", result.summary());
            for v in result.conservation_violations() {
                log::error!("report inconsistency: {v}");
            }
            println!("report: {}", report_path.display());
        }

        Command::Stats { input, out } => {
            require_exists(&input)?;
            let stats = cleaner::corpus_stats(&input)?;
            if let Some(path) = out {
                write_json(&path, &stats)?;
            }
            print!("{}", stats.table());
        }

        Command::Sdr { reference, estimate } => {
            let r = wav::read_wav(&reference)?;
            let e = wav::read_wav(&estimate)?;
            let db = stemcurate::sdr::sdr(&r, &e)?;
            println!("{db:.4}");
        }
    }
    Ok(())
}
