//! Fixture generators and a binary-driving helper shared by the CLI and
//! acceptance test suites.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use noisebench::audio::{write_wav, AudioBuffer};
use noisebench::manifest::{save_manifest, CorpusManifest, Utterance};

pub const RATE: u32 = 16000;

/// Runs the noisebench binary and returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let output: Output = Command::new(env!("CARGO_BIN_EXE_noisebench"))
        .args(args)
        .output()
        .expect("spawning noisebench");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

/// Uniform white noise with mean-square power `amp^2`.
pub fn white_noise(rng: &mut StdRng, n: usize, amp: f32) -> Vec<f32> {
    let scale = amp * 3f32.sqrt();
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Speech-like bursts at 45% duty cycle over silence.
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

/// Builds a burst corpus on disk as a Kaldi data dir and returns its
/// manifest.
///
/// Speech powers spread over `spread_db`; durations step through dyadic
/// values (2.5 .. 4.25 s in quarter-second steps) so hour totals are exact
/// in f64. With the defaults, 200 utterances come to exactly 675 s.
pub fn gen_corpus_dir(
    dir: &Path,
    n: usize,
    base_amp: f32,
    spread_db: f32,
    seed: u64,
) -> CorpusManifest {
    let mut rng = StdRng::seed_from_u64(seed);
    std::fs::create_dir_all(dir).unwrap();
    let utts: Vec<Utterance> = (0..n)
        .map(|i| {
            let id = format!("spk{:02}_utt{i:04}", i % 10);
            let path = dir.join(format!("{id}.wav"));
            let db = spread_db * (i as f32 / (n.max(2) - 1) as f32);
            let amp = base_amp * 10f32.powf(db / 20.0);
            let seconds = 2.5 + 0.25 * (i % 8) as f32;
            let samples = burst_utterance(&mut rng, (seconds * RATE as f32) as usize, amp);
            write_wav(&AudioBuffer::new(samples, RATE).unwrap(), &path).unwrap();
            Utterance::new(id, format!("spk{:02}", i % 10), path, "这是一个测试")
                .with_duration(f64::from(seconds))
        })
        .collect();
    let manifest = CorpusManifest::new("train", utts).unwrap();
    save_manifest(&manifest, dir).unwrap();
    manifest
}

/// Writes a one-minute noise recording and returns its path.
pub fn gen_noise_file(dir: &Path, seconds: usize, seed: u64) -> PathBuf {
    let mut rng = StdRng::seed_from_u64(seed);
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join("noise.wav");
    let samples = white_noise(&mut rng, seconds * RATE as usize, 0.1);
    write_wav(&AudioBuffer::new(samples, RATE).unwrap(), &path).unwrap();
    path
}
