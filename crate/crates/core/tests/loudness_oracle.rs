//! Integrated loudness checked against the `ebur128` crate.

use ebur128::{EbuR128, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stemcurate::audio::AudioBuffer;
use stemcurate::dsp::measure_lufs;
use stemcurate::synth;
use stemcurate::taxonomy::StemId;

fn reference(x: &AudioBuffer) -> f64 {
    let mut meter = EbuR128::new(x.num_channels() as u32, x.sample_rate(), Mode::I).unwrap();
    let mut interleaved = Vec::with_capacity(x.frames() * x.num_channels());
    for i in 0..x.frames() {
        interleaved.extend(x.channels().iter().map(|c| c[i]));
    }
    meter.add_frames_f64(&interleaved).unwrap();
    meter.loudness_global().unwrap()
}

fn assert_agrees(x: &AudioBuffer, tol: f64) {
    let ours = measure_lufs(x).unwrap();
    let theirs = reference(x);
    assert!((ours - theirs).abs() <= tol, "ours {ours:.4} vs ebur128 {theirs:.4}");
}

#[test]
fn tones_at_common_rates() {
    for rate in [16_000, 44_100, 48_000] {
        for freq in [100.0, 997.0, 5000.0] {
            let s = synth::sine(freq, 0.5, rate, 5 * rate as usize);
            assert_agrees(&AudioBuffer::mono(s, rate).unwrap(), 0.05);
        }
    }
}

#[test]
fn stereo_program_material() {
    let rate = 48_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let piano = synth::instrument(StemId::Piano, rate, 8.0, 3);
    let drums = synth::instrument(StemId::Drums, rate, 8.0, 4);
    let noise: Vec<f64> = (0..piano.len()).map(|_| 0.05 * rng.random_range(-1.0..1.0)).collect();
    let left = piano.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let x = AudioBuffer::new(vec![left, drums], rate).unwrap();
    assert_agrees(&x, 0.05);
}

#[test]
fn gating_drops_silence() {
    // Loud half followed by near silence: the gates must ignore the quiet half.
    let rate = 48_000;
    let mut s = synth::sine(440.0, 0.5, rate, 4 * rate as usize);
    s.extend(synth::sine(440.0, 1e-5, rate, 4 * rate as usize));
    assert_agrees(&AudioBuffer::mono(s, rate).unwrap(), 0.05);
}
