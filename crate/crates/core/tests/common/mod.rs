//! Shared synthetic-corpus generators for integration tests.

use std::path::Path;

use rand::rngs::StdRng;
use rand::Rng;

use noisebench::audio::{write_wav, AudioBuffer};
use noisebench::manifest::{CorpusManifest, Utterance};

pub const RATE: u32 = 16000;

/// Uniform white noise with mean-square power `amp^2`.
pub fn white_noise(rng: &mut StdRng, n: usize, amp: f32) -> Vec<f32> {
    let scale = amp * 3f32.sqrt();
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// A speech-like utterance: silence with noise bursts at `amp`, 45% duty
/// cycle, with leading and trailing pauses. Pauses stay the majority so the
/// histogram estimator's low-power mode is well defined.
pub fn burst_utterance(rng: &mut StdRng, n: usize, amp: f32) -> Vec<f32> {
    let period = RATE as usize / 2;
    (0..n)
        .map(|i| {
            let phase = (i % period) as f32 / period as f32;
            if (0.30..0.75).contains(&phase) {
                rng.random_range(-1.0f32..1.0) * amp * 3f32.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Writes `n` burst utterances whose speech powers spread over `spread_db`,
/// returning the manifest. Durations step through dyadic values
/// (2.5 .. 4.25 s in quarter-second steps) so hour totals sum exactly.
pub fn spread_corpus(dir: &Path, n: usize, base_amp: f32, spread_db: f32, rng: &mut StdRng) -> CorpusManifest {
    std::fs::create_dir_all(dir).unwrap();
    let utts: Vec<Utterance> = (0..n)
        .map(|i| {
            let id = format!("spk{:02}_utt{i:04}", i % 10);
            let path = dir.join(format!("{id}.wav"));
            let db = spread_db * (i as f32 / (n.max(2) - 1) as f32);
            let amp = base_amp * 10f32.powf(db / 20.0);
            let seconds = 2.5 + 0.25 * (i % 8) as f32;
            let samples = burst_utterance(rng, (seconds * RATE as f32) as usize, amp);
            let buffer = AudioBuffer::new(samples, RATE).unwrap();
            write_wav(&buffer, &path).unwrap();
            Utterance::new(id, format!("spk{:02}", i % 10), path, "这是一个测试")
                .with_duration(f64::from(seconds))
        })
        .collect();
    CorpusManifest::new("train", utts).unwrap()
}
