use proptest::prelude::*;

use stemcurate::audio::{self, safe_normalize, AudioBuffer, SpliceOptions, SEGMENT_FRAMES, SEGMENT_RATE};
use stemcurate::classifier::{decide, EvalReport};
use stemcurate::dsp::measure_lufs;
use stemcurate::sdr::sdr;
use stemcurate::taxonomy::{expand_queries, QueryTemplate, Taxonomy};

fn buffer(samples: Vec<f64>) -> AudioBuffer {
    AudioBuffer::mono(samples, 16_000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_peak_bounded(v in prop::collection::vec(-1e3f64..1e3, 1..512)) {
        let y = safe_normalize(&buffer(v.clone())).unwrap();
        prop_assert!(y.peak() <= 1.0);
        let scale = 1.0 / (buffer(v.clone()).peak() + 1e-9);
        for (a, b) in y.channel(0).iter().zip(&v) {
            prop_assert_eq!(*a, b * scale);
        }
    }

    // Idempotence error is eps / (peak + eps); at peaks of 1e-2 and above it
    // stays under 1e-7.
    #[test]
    fn normalization_idempotent_at_audible_levels(
        v in prop::collection::vec(-1.0f64..1.0, 1..512),
        gain in 1e-2f64..1e2,
    ) {
        let peak = v.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        prop_assume!(peak > 0.5);
        let x = buffer(v.iter().map(|s| s * gain / peak).collect());
        let once = safe_normalize(&x).unwrap();
        let twice = safe_normalize(&once).unwrap();
        for (a, b) in once.channel(0).iter().zip(twice.channel(0)) {
            prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn idempotence_error_matches_closed_form(peak in 1e-8f64..1.0) {
        let x = buffer(vec![peak, -0.5 * peak]);
        let once = safe_normalize(&x).unwrap();
        let twice = safe_normalize(&once).unwrap();
        let measured = twice.channel(0)[0] / once.channel(0)[0] - 1.0;
        let m1 = peak / (peak + 1e-9);
        let predicted = 1.0 / (m1 + 1e-9) - 1.0;
        prop_assert!((measured - predicted).abs() <= 1e-12 + 1e-9 * predicted.abs());
    }

    #[test]
    fn segment_splice_exact(len in 0usize..(5 * SEGMENT_FRAMES), seed in any::<u64>()) {
        let samples: Vec<f64> = (0..len).map(|i| ((i as u64).wrapping_mul(seed | 1) % 2001) as f64 / 1000.0 - 1.0).collect();
        let x = AudioBuffer::mono(samples, SEGMENT_RATE).unwrap();
        let segs = audio::segment(&x, "p").unwrap();
        prop_assert_eq!(segs.len(), len / SEGMENT_FRAMES);
        let y = audio::splice(&segs, SpliceOptions::exact()).unwrap();
        prop_assert_eq!(y.frames() + audio::dropped_frames(len), len);
        prop_assert_eq!(y.channel(0), &x.channel(0)[..y.frames()]);
    }

    #[test]
    fn lufs_gain_equivariant(gain in 0.1f64..1.0, freq in 100.0f64..4000.0) {
        let s = stemcurate::synth::sine(freq, 0.8, 16_000, 16_000);
        let x = buffer(s);
        let base = measure_lufs(&x).unwrap();
        let scaled = measure_lufs(&x.scaled(gain)).unwrap();
        prop_assert!((scaled - base - 20.0 * gain.log10()).abs() <= 0.1);
    }

    #[test]
    fn keep_count_monotone_in_threshold(
        ps in prop::collection::vec(0.0f64..1.0, 0..64),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let kept = |t: f64| ps.iter().filter(|&&p| decide(p, t) == 1).count();
        prop_assert!(kept(hi) <= kept(lo));
    }

    #[test]
    fn metrics_recompute_from_counts(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let r = EvalReport::from_counts(tp, fp, tn, fn_, 0.5).unwrap();
        let again = EvalReport::from_counts(r.tp, r.fp, r.tn, r.fn_, r.threshold).unwrap();
        prop_assert_eq!(&r, &again);
        prop_assert_eq!(r.accuracy, (tp + tn) as f64 / (tp + fp + tn + fn_) as f64);
        for v in [r.accuracy, r.precision, r.recall, r.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn expansion_count(languages in 1usize..12) {
        let taxonomy = Taxonomy::default();
        let templates: Vec<QueryTemplate> = (0..languages)
            .map(|k| QueryTemplate {
                language_tag: format!("l{k}"),
                pattern: "{instrument} {solo}".into(),
                translations: Default::default(),
            })
            .collect();
        let q = expand_queries(&taxonomy, &templates, true).unwrap();
        prop_assert_eq!(q.len(), 22 * languages);
        prop_assert!(expand_queries(&taxonomy, &templates, false).is_err());
    }

    #[test]
    fn sdr_of_scaled_residual(db in -20.0f64..60.0) {
        let r: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 500.0 - 1.0).collect();
        let n: Vec<f64> = (0..4000).map(|i| ((i * 104_729 + 13) % 997) as f64 / 498.5 - 1.0).collect();
        let er: f64 = r.iter().map(|s| s * s).sum();
        let en: f64 = n.iter().map(|s| s * s).sum();
        let scale = (er / en / 10f64.powf(db / 10.0)).sqrt();
        let est: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + scale * b).collect();
        let got = sdr(&buffer(r), &buffer(est)).unwrap();
        prop_assert!((got - db).abs() < 1e-6);
    }
}
