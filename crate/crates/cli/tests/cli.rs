use std::path::Path;
use std::process::{Command, Output};

use stemcurate::audio::{wav, AudioBuffer, WavFormat};
use stemcurate::classifier::{Checkpoint, EvalReport};
use stemcurate::cleaner::CleaningReport;
use stemcurate::synth;
use stemcurate::taxonomy::StemId;

fn stemcurate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stemcurate"))
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_pool(dir: &Path) -> std::path::PathBuf {
    let files =
        synth::write_fixture_pool(dir, &[StemId::Piano, StemId::Drums, StemId::Bass], 2, 8.0, 48_000, 3).unwrap();
    let manifest = dir.join("pool.jsonl");
    synth::fixture_source_pool(&files).unwrap().write(&manifest).unwrap();
    manifest
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = stemcurate(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn runtime_failure_exits_one() {
    let out = stemcurate(&["stats", "--input", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn expand_queries_default_table() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("queries.tsv");
    ok(&stemcurate(&["expand-queries", "--out", p(&out_path)]));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 198);
    assert!(text.lines().all(|l| l.split('\t').count() == 3));
    assert!(text.contains("piano\ten\tpiano solo"));

    let strict = stemcurate(&["expand-queries", "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn sdr_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let reference = synth::sine(440.0, 0.5, 16_000, 16_000);
    let estimate: Vec<f64> = reference.iter().map(|s| s * 0.5).collect();
    let r = dir.path().join("ref.wav");
    let e = dir.path().join("est.wav");
    wav::write_wav(&r, &AudioBuffer::mono(reference, 16_000).unwrap(), WavFormat::Float32).unwrap();
    wav::write_wav(&e, &AudioBuffer::mono(estimate, 16_000).unwrap(), WavFormat::Float32).unwrap();
    let db: f64 = ok(&stemcurate(&["sdr", "--reference", p(&r), "--estimate", p(&e)])).trim().parse().unwrap();
    assert!((db - 6.0206).abs() < 1e-3, "{db}");

    let json = dir.path().join("stats.json");
    let table = ok(&stemcurate(&["stats", "--input", p(dir.path()), "--out", p(&json)]));
    assert!(table.contains("total"));
    assert!(json.exists());
}

#[test]
fn segment_writes_windows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("take.wav");
    let track = AudioBuffer::mono(synth::sine(220.0, 0.3, 44_100, 44_100 * 7), 44_100).unwrap().to_stereo();
    wav::write_wav(&input, &track, WavFormat::Int16).unwrap();
    let out = dir.path().join("windows");
    let msg = ok(&stemcurate(&["segment", "--input", p(&input), "--out", p(&out)]));
    assert!(msg.contains("2 windows"), "{msg}");
    let info = wav::probe(&out.join("take.0001.wav")).unwrap();
    assert_eq!((info.channels, info.sample_rate, info.frames), (1, 16_000, 48_000));
    assert!(out.join("take.segments.json").exists());
}

#[test]
fn train_crawl_clean_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pool = write_pool(&dir.path().join("pool"));
    let heads = dir.path().join("heads");
    let small = ["--n-per-class", "24", "--max-epochs", "40"];

    let mut args = vec!["train-head", "--stem", "piano", "--pool", p(&pool), "--out", p(&heads), "--seed", "7"];
    args.extend(small);
    let msg = ok(&stemcurate(&args));
    assert!(msg.contains("checkpoint:"));
    let ckpt = Checkpoint::load(&heads.join("piano.head.json")).unwrap();
    assert_eq!((ckpt.stem.as_str(), ckpt.seed), ("piano", 7));
    let validation: EvalReport =
        serde_json::from_slice(&std::fs::read(heads.join("piano.validation.json")).unwrap()).unwrap();
    assert!(validation.n() > 0);
    assert!(heads.join("piano.training.json").exists());

    // same seed, same head
    let again = dir.path().join("again");
    let mut args = vec!["train-head", "--stem", "piano", "--pool", p(&pool), "--out", p(&again), "--seed", "7"];
    args.extend(small);
    ok(&stemcurate(&args));
    assert_eq!(Checkpoint::load(&again.join("piano.head.json")).unwrap(), ckpt);

    ok(&stemcurate(&["eval-head", "--stem", "piano", "--pool", p(&pool), "--heads", p(&heads), "--n-per-class", "10"]));
    assert!(heads.join("piano.eval.json").exists());

    // crawl a local directory of piano takes
    let source = dir.path().join("source");
    std::fs::create_dir_all(&source).unwrap();
    for k in 0..3 {
        let x = synth::instrument(StemId::Piano, 44_100, 7.0 + k as f64, 100 + k);
        wav::write_wav(&source.join(format!("take{k}.wav")), &AudioBuffer::mono(x, 44_100).unwrap(), WavFormat::Int16)
            .unwrap();
    }
    let queries = dir.path().join("queries.tsv");
    std::fs::write(&queries, "piano\ten\tpiano solo\n").unwrap();
    let crawl_dir = dir.path().join("crawl");
    let crawl = |extra: &[&str]| {
        let mut a = vec!["crawl", "--queries", p(&queries), "--out", p(&crawl_dir), "--source-dir", p(&source)];
        a.extend(["--rate", "6000/min"]);
        a.extend(extra);
        stemcurate(&a)
    };
    let plan = ok(&crawl(&["--dry-run"]));
    assert!(plan.contains("\"pending\": 3"), "{plan}");
    assert!(!crawl_dir.exists());
    assert!(ok(&crawl(&[])).contains("3 fetched"));
    let manifest = crawl_dir.join("manifest.jsonl");
    let before = std::fs::read(&manifest).unwrap();
    assert!(ok(&crawl(&[])).contains("downloaded 0"));
    assert_eq!(std::fs::read(&manifest).unwrap(), before);

    let clean_dir = dir.path().join("clean");
    let clean = |extra: &[&str]| {
        let mut a = vec!["clean", "--manifest", p(&manifest), "--heads", p(&heads), "--out", p(&clean_dir)];
        a.extend(["--threshold", "0.5", "--workers", "2"]);
        a.extend(extra);
        stemcurate(&a)
    };
    ok(&clean(&["--dry-run"]));
    let report_path = clean_dir.join("cleaning_report.json");
    let dry: CleaningReport = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert_eq!(dry.tracks.len(), 3);
    let wavs = |d: &Path| {
        std::fs::read_dir(d)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "wav"))
            .count()
    };
    assert_eq!(wavs(&clean_dir), 0);

    ok(&clean(&[]));
    let report: CleaningReport = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    assert!(report.conservation_violations().is_empty());
    assert_eq!(report.totals.n_segments, 2 + 2 + 3);
    let written = report.tracks.iter().filter(|t| t.n_kept > 0).count();
    assert_eq!(wavs(&clean_dir), written);
}
