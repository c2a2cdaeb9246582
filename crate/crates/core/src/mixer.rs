//! SNR-calibrated noise mixing.
//!
//! One linear gain is calibrated per (corpus, target SNR) pair so that the
//! corpus-average SNR in dB equals the target:
//!
//! ```text
//! gain_db = mean_u(speech_power_db(u)) - noise_power_db - target_snr_db
//! ```
//!
//! Speech power uses energy-VAD active frames so leading and trailing
//! silence cannot deflate it; noise power uses all frames of the noise
//! recording. Because a single gain serves the whole corpus, per-utterance
//! SNR varies exactly as the per-utterance speech powers do, and the
//! dB-domain mean equals the target by construction.
//!
//! Each utterance gets a noise segment starting at a keyed-hash offset into
//! the noise recording, wrapping circularly, so mixing is deterministic for
//! a given seed regardless of execution order or thread count.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, write_wav, AudioBuffer, AudioError};
use crate::hash::keyed_hash;
use crate::manifest::{save_manifest, CorpusManifest, ManifestError, Utterance};
use crate::snr::{mean_power_db, FrameConfig, SnrError, SnrEstimate, SnrMethod};

/// Joint rescale target: mixed output peaks are brought down to this.
const CLIP_CEILING: f32 = 0.999;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("noise recording has no energy above the silence floor")]
    SilentNoise,
    #[error("noise gain must be positive, got {gain}")]
    NonPositiveGain { gain: f64 },
    #[error("sample rate mismatch: speech {speech_hz} Hz vs noise {noise_hz} Hz (resampling is out of scope)")]
    SampleRateMismatch { speech_hz: u32, noise_hz: u32 },
    #[error("utterance {utt_id}: {message}")]
    Utterance { utt_id: String, message: String },
    #[error("no usable utterances ({skipped} skipped)")]
    NoUsableUtterances { skipped: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-utterance mixing record: where the noise came from and what the mix
/// did to the waveform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixRecord {
    pub utt_id: String,
    pub noise_offset_samples: u64,
    pub pre_clip_peak: f32,
    /// 1.0 unless the mix clipped; both components scale together, so the
    /// realized SNR is unaffected.
    pub rescale_factor: f32,
    /// Construction ratio: speech power minus scaled noise power, in dB.
    pub realized_snr_db: f64,
}

/// Corpus-wide mixing plan: one gain per target SNR plus per-utterance
/// records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixPlan {
    pub target_snr_db: f64,
    /// Linear amplitude factor applied to the noise.
    pub noise_gain: f64,
    /// All-frame power of the unscaled noise recording, in dB.
    pub noise_power_db: f64,
    pub seed: u64,
    pub per_utterance: BTreeMap<String, MixRecord>,
}

impl MixPlan {
    pub fn gain_db(&self) -> f64 {
        20.0 * self.noise_gain.log10()
    }

    /// Scaled noise power actually mixed in, in dB.
    pub fn scaled_noise_power_db(&self) -> f64 {
        self.noise_power_db + self.gain_db()
    }

    /// The per-utterance realized SNRs as construction-ratio estimates,
    /// suitable for building an [`SnrProfile`](crate::snr::SnrProfile) of
    /// what the mix actually produced (as opposed to re-estimating it from
    /// the mixed audio). The method tag keeps the two from being conflated.
    pub fn realized_estimates(&self) -> BTreeMap<String, SnrEstimate> {
        let noise_db = self.scaled_noise_power_db();
        self.per_utterance
            .iter()
            .map(|(id, record)| {
                (
                    id.clone(),
                    SnrEstimate {
                        signal_power_db: record.realized_snr_db + noise_db,
                        noise_power_db: noise_db,
                        snr_db: record.realized_snr_db,
                        method: SnrMethod::ConstructionRatio,
                    },
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String, MixError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, MixError> {
        Ok(serde_json::from_str(json)?)
    }
}

fn utt_err(utt_id: &str, err: impl std::fmt::Display) -> MixError {
    MixError::Utterance {
        utt_id: utt_id.to_string(),
        message: err.to_string(),
    }
}

fn speech_power(utt: &Utterance, noise_hz: u32, frame: FrameConfig) -> Result<f64, MixError> {
    let buffer = read_wav(utt.audio_path()).map_err(|e| utt_err(utt.utt_id(), e))?;
    if buffer.sample_rate() != noise_hz {
        return Err(MixError::SampleRateMismatch {
            speech_hz: buffer.sample_rate(),
            noise_hz,
        });
    }
    mean_power_db(&buffer, true, frame).map_err(|e| utt_err(utt.utt_id(), e))
}

fn noise_power(noise: &AudioBuffer, frame: FrameConfig) -> Result<f64, MixError> {
    mean_power_db(noise, false, frame).map_err(|e| match e {
        SnrError::Silent => MixError::SilentNoise,
        other => MixError::Utterance {
            utt_id: "<noise>".to_string(),
            message: other.to_string(),
        },
    })
}

fn plan_from_powers(
    speech_powers_db: &[f64],
    noise_power_db: f64,
    target_snr_db: f64,
    seed: u64,
) -> MixPlan {
    let mean_speech_db = speech_powers_db.iter().sum::<f64>() / speech_powers_db.len() as f64;
    let gain_db = mean_speech_db - noise_power_db - target_snr_db;
    MixPlan {
        target_snr_db,
        noise_gain: 10f64.powf(gain_db / 20.0),
        noise_power_db,
        seed,
        per_utterance: BTreeMap::new(),
    }
}

/// Calibrates the single noise gain for a target corpus-average SNR.
///
/// The average is the arithmetic mean of per-utterance speech powers in dB.
/// With `sample_size`, only the first `sample_size` utterances in manifest
/// order enter the mean (deterministic); the default is the full corpus.
/// A silent utterance inside the averaged sample is an error here — the
/// corpus-level [`mix_corpus`] skips and reports such utterances instead.
pub fn calibrate_gain(
    manifest: &CorpusManifest,
    noise: &AudioBuffer,
    target_snr_db: f64,
    sample_size: Option<usize>,
    frame: FrameConfig,
) -> Result<MixPlan, MixError> {
    if manifest.is_empty() {
        return Err(MixError::EmptyManifest);
    }
    let noise_power_db = noise_power(noise, frame)?;
    // At least one utterance always enters the mean.
    let sample = match sample_size {
        Some(n) => &manifest.utterances()[..n.clamp(1, manifest.len())],
        None => manifest.utterances(),
    };
    let powers: Vec<f64> = sample
        .par_iter()
        .map(|u| speech_power(u, noise.sample_rate(), frame))
        .collect::<Result<_, _>>()?;
    Ok(plan_from_powers(&powers, noise_power_db, target_snr_db, 0))
}

/// Deterministic noise offset for one utterance: `keyed_hash(seed, utt_id)`
/// modulo the noise length.
///
/// The utterance length does not enter the draw; segments that would run
/// past the end of the noise wrap circularly instead.
pub fn draw_offset(seed: u64, utt_id: &str, noise_len: u64, _utt_len: u64) -> u64 {
    assert!(noise_len > 0, "noise buffer must not be empty");
    keyed_hash(seed, utt_id) % noise_len
}

/// out[i] = speech[i] + gain * noise[(offset + i) mod len], before any
/// clip rescale.
fn mix_samples(speech: &[f32], noise: &[f32], gain: f32, offset: usize) -> Vec<f32> {
    let len = noise.len();
    speech
        .iter()
        .enumerate()
        .map(|(i, &s)| s + gain * noise[(offset + i) % len])
        .collect()
}

fn mix_with_noise_power(
    utt_id: &str,
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    noise_power_db: f64,
    gain: f64,
    offset: u64,
    frame: FrameConfig,
) -> Result<(AudioBuffer, MixRecord), MixError> {
    if speech.sample_rate() != noise.sample_rate() {
        return Err(MixError::SampleRateMismatch {
            speech_hz: speech.sample_rate(),
            noise_hz: noise.sample_rate(),
        });
    }
    if gain.is_nan() || gain <= 0.0 {
        return Err(MixError::NonPositiveGain { gain });
    }
    let speech_power_db =
        mean_power_db(speech, true, frame).map_err(|e| utt_err(utt_id, e))?;

    let mut mixed = mix_samples(speech.samples(), noise.samples(), gain as f32, offset as usize);
    let pre_clip_peak = mixed.iter().fold(0.0f32, |m, &s| m.max(s.abs()));
    let rescale_factor = if pre_clip_peak > CLIP_CEILING {
        let f = CLIP_CEILING / pre_clip_peak;
        for s in &mut mixed {
            *s *= f;
        }
        f
    } else {
        1.0
    };

    let record = MixRecord {
        utt_id: utt_id.to_string(),
        noise_offset_samples: offset,
        pre_clip_peak,
        rescale_factor,
        realized_snr_db: speech_power_db - (noise_power_db + 20.0 * gain.log10()),
    };
    let buffer = AudioBuffer::new(mixed, speech.sample_rate()).map_err(|e| utt_err(utt_id, e))?;
    Ok((buffer, record))
}

/// Mixes one utterance with a noise segment starting at `offset`.
///
/// The mix is linear; if the result peaks above 0.999 the whole output is
/// scaled down jointly (never saturated), preserving the realized SNR, and
/// the factor is recorded.
pub fn mix_utterance(
    utt_id: &str,
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    gain: f64,
    offset: u64,
) -> Result<(AudioBuffer, MixRecord), MixError> {
    let frame = FrameConfig::default();
    let noise_power_db = noise_power(noise, frame)?;
    mix_with_noise_power(utt_id, speech, noise, noise_power_db, gain, offset, frame)
}

/// An utterance the corpus mix left out, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedUtterance {
    pub utt_id: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct MixOutcome {
    pub manifest: CorpusManifest,
    pub plan: MixPlan,
    pub skipped: Vec<SkippedUtterance>,
}

/// Renders a target for use in ids and labels: integers without a decimal
/// point, anything else as-is.
pub fn snr_suffix(target_snr_db: f64) -> String {
    if target_snr_db == target_snr_db.trunc() {
        format!("{}", target_snr_db as i64)
    } else {
        format!("{target_snr_db}")
    }
}

/// Calibrates once, then mixes every utterance of a manifest into
/// `out_dir`.
///
/// Output ids are the originals suffixed `_snr{T}`; speakers and transcripts
/// carry over. WAVs land at `out_dir/{utt_id}.wav`, the new manifest is
/// saved to `out_dir` as a Kaldi data dir, and the plan is persisted as
/// `out_dir/mixplan.json`. Unreadable or silent utterances are skipped and
/// listed in the outcome; they also do not enter the calibration mean.
pub fn mix_corpus(
    manifest: &CorpusManifest,
    noise: &AudioBuffer,
    target_snr_db: f64,
    seed: u64,
    out_dir: impl AsRef<Path>,
    sample_size: Option<usize>,
) -> Result<MixOutcome, MixError> {
    let out_dir = out_dir.as_ref();
    let frame = FrameConfig::default();
    if manifest.is_empty() {
        return Err(MixError::EmptyManifest);
    }
    if noise.is_empty() {
        return Err(MixError::SilentNoise);
    }
    let noise_power_db = noise_power(noise, frame)?;

    // Pass 1: per-utterance speech powers; failures become skips.
    let powers: Vec<(usize, Result<f64, MixError>)> = manifest
        .utterances()
        .par_iter()
        .enumerate()
        .map(|(i, u)| (i, speech_power(u, noise.sample_rate(), frame)))
        .collect();
    let mut skipped = Vec::new();
    let mut usable: Vec<(usize, f64)> = Vec::new();
    for (i, result) in powers {
        match result {
            Ok(p) => usable.push((i, p)),
            Err(e) => skipped.push(SkippedUtterance {
                utt_id: manifest.utterances()[i].utt_id().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    if usable.is_empty() {
        return Err(MixError::NoUsableUtterances {
            skipped: skipped.len(),
        });
    }

    let averaged: Vec<f64> = match sample_size {
        Some(n) => usable.iter().take(n.max(1)).map(|&(_, p)| p).collect(),
        None => usable.iter().map(|&(_, p)| p).collect(),
    };
    let mut plan = plan_from_powers(&averaged, noise_power_db, target_snr_db, seed);

    fs::create_dir_all(out_dir).map_err(|source| MixError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let suffix = format!("_snr{}", snr_suffix(target_snr_db));
    let noise_len = noise.len() as u64;
    let gain = plan.noise_gain;

    // Pass 2: mix and write, one file per utterance, order-independent.
    type Mixed = (Utterance, MixRecord);
    let results: Vec<(usize, Result<Mixed, MixError>)> = usable
        .par_iter()
        .map(|&(i, _)| {
            let source = &manifest.utterances()[i];
            let noisy_id = format!("{}{}", source.utt_id(), suffix);
            let result = (|| {
                let speech = read_wav(source.audio_path())
                    .map_err(|e| utt_err(source.utt_id(), e))?;
                let offset =
                    draw_offset(seed, &noisy_id, noise_len, speech.len() as u64);
                let (mixed, record) = mix_with_noise_power(
                    &noisy_id,
                    &speech,
                    noise,
                    noise_power_db,
                    gain,
                    offset,
                    frame,
                )?;
                let wav_path = out_dir.join(format!("{noisy_id}.wav"));
                write_wav(&mixed, &wav_path).map_err(|e| utt_err(&noisy_id, e))?;
                let utt = Utterance::new(
                    noisy_id,
                    source.speaker_id(),
                    wav_path,
                    source.transcript(),
                )
                .with_duration(mixed.duration_seconds());
                Ok((utt, record))
            })();
            (i, result)
        })
        .collect();

    let mut utterances = Vec::with_capacity(results.len());
    for (i, result) in results {
        match result {
            Ok((utt, record)) => {
                plan.per_utterance.insert(record.utt_id.clone(), record);
                utterances.push(utt);
            }
            Err(e) => skipped.push(SkippedUtterance {
                utt_id: manifest.utterances()[i].utt_id().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    if utterances.is_empty() {
        return Err(MixError::NoUsableUtterances {
            skipped: skipped.len(),
        });
    }

    let label = format!("{}{}", manifest.label(), suffix);
    let mixed_manifest = CorpusManifest::new(label, utterances)?;
    save_manifest(&mixed_manifest, out_dir)?;
    let plan_path = out_dir.join("mixplan.json");
    fs::write(&plan_path, plan.to_json()?).map_err(|source| MixError::Io {
        path: plan_path,
        source,
    })?;

    Ok(MixOutcome {
        manifest: mixed_manifest,
        plan,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::path::PathBuf;

    const RATE: u32 = 16000;

    fn buf(samples: Vec<f32>) -> AudioBuffer {
        AudioBuffer::new(samples, RATE).unwrap()
    }

    fn white(rng: &mut StdRng, n: usize, amp: f32) -> AudioBuffer {
        buf((0..n).map(|_| rng.random_range(-amp..amp)).collect())
    }

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("noisebench-mixer-tests").join(name);
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    /// Writes a tiny corpus of constant-amplitude utterances and returns its
    /// manifest.
    fn constant_corpus(dir: &Path, amps: &[f32], seconds: f64) -> CorpusManifest {
        let utts: Vec<Utterance> = amps
            .iter()
            .enumerate()
            .map(|(i, &amp)| {
                let id = format!("spk{:02}_utt{i:04}", i % 3);
                let path = dir.join(format!("{id}.wav"));
                let b = buf(vec![amp; (seconds * RATE as f64) as usize]);
                write_wav(&b, &path).unwrap();
                Utterance::new(id, format!("spk{:02}", i % 3), path, "测试")
            })
            .collect();
        CorpusManifest::new("train", utts).unwrap()
    }

    #[test]
    fn symmetric_corpus_calibrates_to_unit_gain() {
        let dir = tmp("unit-gain");
        // Speech and noise both constant 0.25: equal powers.
        let manifest = constant_corpus(&dir, &[0.25, 0.25, 0.25], 0.5);
        let noise = buf(vec![0.25; RATE as usize]);
        let plan = calibrate_gain(&manifest, &noise, 0.0, None, FrameConfig::default()).unwrap();
        assert!((plan.noise_gain - 1.0).abs() < 1e-9, "{}", plan.noise_gain);

        let plan = calibrate_gain(&manifest, &noise, 20.0, None, FrameConfig::default()).unwrap();
        assert!((plan.noise_gain - 0.1).abs() < 1e-9, "{}", plan.noise_gain);
        // Calibration identity, exact by construction.
        assert!((plan.gain_db() + plan.noise_power_db - (-12.0412 - 20.0)).abs() < 0.01);
    }

    #[test]
    fn calibration_rejects_silent_inputs() {
        let dir = tmp("silent");
        let manifest = constant_corpus(&dir, &[0.25], 0.5);
        let silence = buf(vec![0.0; RATE as usize]);
        assert!(matches!(
            calibrate_gain(&manifest, &silence, 10.0, None, FrameConfig::default()),
            Err(MixError::SilentNoise)
        ));

        let manifest = constant_corpus(&tmp("silent-utt"), &[0.0], 0.5);
        let noise = buf(vec![0.25; RATE as usize]);
        assert!(matches!(
            calibrate_gain(&manifest, &noise, 10.0, None, FrameConfig::default()),
            Err(MixError::Utterance { .. })
        ));
    }

    #[test]
    fn offsets_are_deterministic() {
        assert_eq!(draw_offset(9, "u1", 100, 50), draw_offset(9, "u1", 100, 50));
        assert_eq!(draw_offset(9, "u1", 1, 50), 0);
    }

    #[test]
    fn mix_matches_reference_mixer() {
        let mut rng = StdRng::seed_from_u64(21);
        let speech = white(&mut rng, 1000, 0.3);
        let noise = white(&mut rng, 400, 0.2);
        let (mixed, record) = mix_utterance("u1", &speech, &noise, 0.5, 37).unwrap();

        // Independent three-line reference mixer.
        let expected: Vec<f32> = (0..speech.len())
            .map(|i| speech.samples()[i] + 0.5 * noise.samples()[(37 + i) % noise.len()])
            .collect();
        assert_eq!(mixed.samples(), expected.as_slice());
        assert_eq!(record.noise_offset_samples, 37);
        assert_eq!(record.rescale_factor, 1.0);
    }

    #[test]
    fn halving_gain_raises_realized_snr_six_db() {
        let mut rng = StdRng::seed_from_u64(22);
        let speech = white(&mut rng, RATE as usize, 0.3);
        let noise = white(&mut rng, RATE as usize, 0.2);
        let (_, full) = mix_utterance("u1", &speech, &noise, 0.4, 0).unwrap();
        let (_, half) = mix_utterance("u1", &speech, &noise, 0.2, 0).unwrap();
        let diff = half.realized_snr_db - full.realized_snr_db;
        assert!((diff - 6.0206).abs() < 0.01, "{diff}");
    }

    #[test]
    fn gain_matching_powers_gives_zero_realized_snr() {
        // Constant speech and noise at the same amplitude, gain 1.
        let speech = buf(vec![0.25; RATE as usize]);
        let noise = buf(vec![0.25; RATE as usize]);
        let (_, record) = mix_utterance("u1", &speech, &noise, 1.0, 0).unwrap();
        assert!(record.realized_snr_db.abs() < 1e-9, "{}", record.realized_snr_db);
    }

    #[test]
    fn mixing_is_linear_before_rescale() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.random_range(100..600);
            let speech: Vec<f32> = (0..n).map(|_| rng.random_range(-0.2f32..0.2)).collect();
            let noise: Vec<f32> = (0..n / 2).map(|_| rng.random_range(-0.2f32..0.2)).collect();
            let (g1, g2) = (rng.random_range(0.1f32..0.5), rng.random_range(0.1f32..0.5));
            let offset = rng.random_range(0..noise.len());
            let a = mix_samples(&speech, &noise, g1, offset);
            let b = mix_samples(&speech, &noise, g2, offset);
            let c = mix_samples(&speech, &noise, g1 + g2, offset);
            for i in 0..speech.len() {
                let lhs = a[i] + b[i] - speech[i];
                assert!((lhs - c[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn clipping_rescales_jointly_and_preserves_snr() {
        let mut rng = StdRng::seed_from_u64(24);
        let speech = white(&mut rng, RATE as usize, 0.9);
        let noise = white(&mut rng, RATE as usize, 0.9);
        let (mixed, record) = mix_utterance("u1", &speech, &noise, 1.0, 0).unwrap();
        assert!(record.pre_clip_peak > CLIP_CEILING);
        assert!(record.rescale_factor < 1.0);
        assert!(mixed.peak() <= CLIP_CEILING + 1e-6);

        // Same inputs at a gain low enough not to clip: realized SNR moves
        // only by the gain change, showing the rescale itself didn't touch it.
        let (_, quiet) = mix_utterance("u1", &speech, &noise, 0.05, 0).unwrap();
        let expected = 20.0 * (1.0f64 / 0.05).log10();
        assert!((quiet.realized_snr_db - record.realized_snr_db - expected).abs() < 1e-9);
        assert_eq!(quiet.rescale_factor, 1.0);
    }

    #[test]
    fn rate_mismatch_is_fatal() {
        let speech = AudioBuffer::new(vec![0.1; 8000], 8000).unwrap();
        let noise = buf(vec![0.1; RATE as usize]);
        assert!(matches!(
            mix_utterance("u1", &speech, &noise, 1.0, 0),
            Err(MixError::SampleRateMismatch { speech_hz: 8000, noise_hz: 16000 })
        ));
    }

    #[test]
    fn wrap_reads_noise_circularly() {
        let speech = [0.0f32; 6];
        let noise = [0.1f32, 0.2, 0.3, 0.4];
        let mixed = mix_samples(&speech, &noise, 1.0, 3);
        assert_eq!(mixed, vec![0.4, 0.1, 0.2, 0.3, 0.4, 0.1]);
    }

    /// Corpus with speech powers spread over ~12 dB.
    fn spread_corpus(dir: &Path, n: usize) -> CorpusManifest {
        let mut rng = StdRng::seed_from_u64(25);
        let utts: Vec<Utterance> = (0..n)
            .map(|i| {
                let id = format!("spk{:02}_utt{i:04}", i % 5);
                let path = dir.join(format!("{id}.wav"));
                let amp = 0.04 * 10f32.powf(12.0 * (i as f32 / (n - 1) as f32) / 20.0);
                let samples: Vec<f32> =
                    (0..RATE as usize / 2).map(|_| rng.random_range(-amp..amp)).collect();
                write_wav(&buf(samples), &path).unwrap();
                Utterance::new(id, format!("spk{:02}", i % 5), path, "测试")
            })
            .collect();
        CorpusManifest::new("train", utts).unwrap()
    }

    #[test]
    fn corpus_mix_hits_target_mean_exactly() {
        let src = tmp("corpus-src");
        let out = tmp("corpus-out");
        let manifest = spread_corpus(&src, 40);
        let mut rng = StdRng::seed_from_u64(26);
        let noise = white(&mut rng, 4 * RATE as usize, 0.2);

        let outcome = mix_corpus(&manifest, &noise, 10.0, 1, &out, None).unwrap();
        assert!(outcome.skipped.is_empty());
        assert_eq!(outcome.manifest.len(), manifest.len());

        let realized: Vec<f64> = outcome
            .plan
            .per_utterance
            .values()
            .map(|r| r.realized_snr_db)
            .collect();
        let mean = realized.iter().sum::<f64>() / realized.len() as f64;
        assert!((mean - 10.0).abs() <= 0.01, "mean realized {mean}");
        let var = realized.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / realized.len() as f64;
        assert!(var.sqrt() > 0.5, "constructed spread should survive mixing");

        // Ids suffixed, metadata preserved, plan persisted.
        let first = outcome.manifest.utterances().first().unwrap();
        assert!(first.utt_id().ends_with("_snr10"));
        assert_eq!(first.transcript(), "测试");
        assert!(out.join("mixplan.json").is_file());
        assert!(out.join("wav.scp").is_file());
        let reloaded = MixPlan::from_json(&fs::read_to_string(out.join("mixplan.json")).unwrap()).unwrap();
        assert_eq!(reloaded.per_utterance.len(), 40);

        // The construction-ratio view of the plan profiles to the target.
        let estimates = reloaded.realized_estimates();
        let profile = crate::snr::SnrProfile::from_estimates(estimates).unwrap();
        assert!((profile.mean_db - 10.0).abs() <= 0.01);
        assert!(profile
            .per_utterance
            .values()
            .all(|e| e.method == SnrMethod::ConstructionRatio));
    }

    #[test]
    fn corpus_mix_is_deterministic_per_seed() {
        let src = tmp("det-src");
        let manifest = spread_corpus(&src, 10);
        let mut rng = StdRng::seed_from_u64(27);
        let noise = white(&mut rng, 2 * RATE as usize, 0.2);

        let out_a = tmp("det-a");
        let out_b = tmp("det-b");
        mix_corpus(&manifest, &noise, 5.0, 99, &out_a, None).unwrap();
        mix_corpus(&manifest, &noise, 5.0, 99, &out_b, None).unwrap();
        for entry in fs::read_dir(&out_a).unwrap() {
            let name = entry.unwrap().file_name();
            if name.to_string_lossy().ends_with(".wav") {
                let a = fs::read(out_a.join(&name)).unwrap();
                let b = fs::read(out_b.join(&name)).unwrap();
                assert_eq!(a, b, "{name:?} differs between identical runs");
            }
        }

        let out_c = tmp("det-c");
        let plan_c = mix_corpus(&manifest, &noise, 5.0, 100, &out_c, None).unwrap().plan;
        let plan_a = MixPlan::from_json(&fs::read_to_string(out_a.join("mixplan.json")).unwrap()).unwrap();
        let changed = plan_a
            .per_utterance
            .iter()
            .any(|(id, r)| plan_c.per_utterance[id].noise_offset_samples != r.noise_offset_samples);
        assert!(changed, "a different seed should move at least one offset");
    }

    #[test]
    fn silent_utterances_are_skipped_and_listed() {
        let dir = tmp("skip");
        let manifest = constant_corpus(&dir, &[0.25, 0.0, 0.25], 0.5);
        let mut rng = StdRng::seed_from_u64(28);
        let noise = white(&mut rng, RATE as usize, 0.2);
        let out = tmp("skip-out");
        let outcome = mix_corpus(&manifest, &noise, 10.0, 0, &out, None).unwrap();
        assert_eq!(outcome.skipped.len(), 1);
        assert_eq!(outcome.manifest.len(), 2);
        assert!(outcome.skipped[0].utt_id.contains("utt0001"));
    }

    #[test]
    fn five_targets_five_complete_manifests() {
        let src = tmp("targets-src");
        let manifest = spread_corpus(&src, 8);
        let mut rng = StdRng::seed_from_u64(29);
        let noise = white(&mut rng, 2 * RATE as usize, 0.2);
        for target in [20.0, 15.0, 10.0, 5.0, 0.0] {
            let out = tmp(&format!("targets-{target}"));
            let outcome = mix_corpus(&manifest, &noise, target, 3, &out, None).unwrap();
            assert_eq!(outcome.manifest.len(), manifest.len());
            let suffix = format!("_snr{}", snr_suffix(target));
            assert!(outcome
                .manifest
                .utterances()
                .iter()
                .all(|u| u.utt_id().ends_with(&suffix)));
        }
    }

    #[test]
    fn snr_suffix_formats() {
        assert_eq!(snr_suffix(10.0), "10");
        assert_eq!(snr_suffix(0.0), "0");
        assert_eq!(snr_suffix(-5.0), "-5");
        assert_eq!(snr_suffix(7.5), "7.5");
    }
}
