//! Frame-based power analysis and SNR estimation.
//!
//! Estimates follow a histogram scheme patterned after the NIST speech SNR
//! measurement: per-frame powers on a fixed grid, the noise level read off
//! the dominant low-power mode, the signal level as the 95th power
//! percentile. The method is recorded in each estimate so numbers produced
//! by different schemes are never compared silently.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::manifest::CorpusManifest;

/// Frames quieter than this are treated as silence; nothing reports below it.
pub const SILENCE_FLOOR_DB: f64 = -120.0;

/// Width of the histogram bins used by [`estimate_snr`], in dB.
pub const HISTOGRAM_BIN_DB: f64 = 0.5;

/// Energy-VAD margin above the 20th-percentile frame power, in dB.
const ACTIVE_MARGIN_DB: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SnrError {
    #[error("invalid framing: frame {frame_ms} ms, hop {hop_ms} ms (need frame >= hop > 0)")]
    InvalidFraming { frame_ms: u32, hop_ms: u32 },
    #[error("buffer too short: {samples} samples, one {frame_len}-sample frame required")]
    TooShort { samples: usize, frame_len: usize },
    #[error("buffer shorter than {min_seconds} s, too short for SNR estimation")]
    TooShortForEstimate { min_seconds: f64 },
    #[error("signal has no energy above the silence floor")]
    Silent,
    #[error("degenerate power histogram (single bin): constant signal, SNR undefined")]
    ConstantSignal,
    #[error("utterance {utt_id}: {message}")]
    Utterance { utt_id: String, message: String },
    #[error("no utterances produced a usable SNR estimate")]
    EmptyProfile,
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}

/// Analysis framing. Defaults to 20 ms frames with a 10 ms hop and a
/// rectangular window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_ms: u32,
    pub hop_ms: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: 20,
            hop_ms: 10,
        }
    }
}

/// Per-frame powers in dB on a fixed framing grid.
#[derive(Debug, Clone)]
pub struct FramePowers {
    powers_db: Vec<f64>,
    frame_ms: u32,
    hop_ms: u32,
}

impl FramePowers {
    pub fn powers_db(&self) -> &[f64] {
        &self.powers_db
    }

    pub fn frame_ms(&self) -> u32 {
        self.frame_ms
    }

    pub fn hop_ms(&self) -> u32 {
        self.hop_ms
    }

    pub fn len(&self) -> usize {
        self.powers_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers_db.is_empty()
    }
}

/// How an SNR number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnrMethod {
    /// Histogram-mode noise level vs 95th-percentile signal level.
    NistHistogram,
    /// Construction-time ratio of known speech and scaled-noise powers.
    ConstructionRatio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub signal_power_db: f64,
    pub noise_power_db: f64,
    pub snr_db: f64,
    pub method: SnrMethod,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnrPercentiles {
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Corpus-level SNR statistics plus the per-utterance estimates they were
/// computed from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnrProfile {
    pub per_utterance: BTreeMap<String, SnrEstimate>,
    pub mean_db: f64,
    pub stddev_db: f64,
    pub percentiles: SnrPercentiles,
}

impl SnrProfile {
    /// Recomputes the aggregate statistics from the per-utterance map.
    pub fn from_estimates(per_utterance: BTreeMap<String, SnrEstimate>) -> Result<Self, SnrError> {
        if per_utterance.is_empty() {
            return Err(SnrError::EmptyProfile);
        }
        let mut snrs: Vec<f64> = per_utterance.values().map(|e| e.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        let n = snrs.len() as f64;
        let mean = snrs.iter().sum::<f64>() / n;
        // Population standard deviation: the spread of this corpus, not an
        // estimate of a larger one.
        let var = snrs.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            per_utterance,
            mean_db: mean,
            stddev_db: var.sqrt(),
            percentiles: SnrPercentiles {
                p5: percentile(&snrs, 5.0),
                p25: percentile(&snrs, 25.0),
                p50: percentile(&snrs, 50.0),
                p75: percentile(&snrs, 75.0),
                p95: percentile(&snrs, 95.0),
            },
        })
    }

    /// CSV rendering, one row per utterance.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("utt_id,snr_db,signal_db,noise_db\n");
        for (id, e) in &self.per_utterance {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.4}",
                id, e.snr_db, e.signal_power_db, e.noise_power_db
            );
        }
        out
    }
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (pct / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn db_from_power(p: f64) -> f64 {
    (10.0 * p.log10()).max(SILENCE_FLOOR_DB)
}

/// Rectangular-window mean-square power per frame, in dB, floored at
/// [`SILENCE_FLOOR_DB`].
pub fn frame_powers(buffer: &AudioBuffer, config: FrameConfig) -> Result<FramePowers, SnrError> {
    if config.hop_ms == 0 || config.frame_ms < config.hop_ms {
        return Err(SnrError::InvalidFraming {
            frame_ms: config.frame_ms,
            hop_ms: config.hop_ms,
        });
    }
    let rate = u64::from(buffer.sample_rate());
    let frame_len = (rate * u64::from(config.frame_ms) / 1000).max(1) as usize;
    let hop_len = (rate * u64::from(config.hop_ms) / 1000).max(1) as usize;
    let samples = buffer.samples();
    if samples.len() < frame_len {
        return Err(SnrError::TooShort {
            samples: samples.len(),
            frame_len,
        });
    }
    let n_frames = (samples.len() - frame_len) / hop_len + 1;
    let mut powers_db = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let frame = &samples[k * hop_len..k * hop_len + frame_len];
        let energy: f64 = frame.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
        powers_db.push(db_from_power(energy / frame_len as f64));
    }
    Ok(FramePowers {
        powers_db,
        frame_ms: config.frame_ms,
        hop_ms: config.hop_ms,
    })
}

fn mean_linear_db(powers_db: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for p in powers_db {
        sum += 10f64.powf(p / 10.0);
        n += 1;
    }
    db_from_power(sum / n as f64)
}

/// Mean linear power of a buffer in dB.
///
/// With `active_only` the mean runs over frames whose power exceeds the
/// 20th-percentile frame power by more than 3 dB — a crude energy VAD that
/// keeps leading and trailing silence out of speech-power measurements. A
/// constant signal leaves that set empty, in which case all frames are used.
pub fn mean_power_db(
    buffer: &AudioBuffer,
    active_only: bool,
    config: FrameConfig,
) -> Result<f64, SnrError> {
    let frames = frame_powers(buffer, config)?;
    let powers = frames.powers_db();
    if powers.iter().all(|&p| p <= SILENCE_FLOOR_DB) {
        return Err(SnrError::Silent);
    }
    if !active_only {
        return Ok(mean_linear_db(powers.iter().copied()));
    }
    let mut sorted = powers.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = percentile(&sorted, 20.0) + ACTIVE_MARGIN_DB;
    if powers.iter().any(|&p| p > threshold) {
        Ok(mean_linear_db(powers.iter().copied().filter(|&p| p > threshold)))
    } else {
        Ok(mean_linear_db(powers.iter().copied()))
    }
}

/// Histogram-based SNR estimate of a single recording.
///
/// Frame powers land in 0.5 dB bins; the noise level is the center of the
/// most-populated bin at or below the median frame power, the signal level
/// is the 95th percentile of frame power, and the SNR is their difference.
/// Requires at least one second of audio.
pub fn estimate_snr(buffer: &AudioBuffer, config: FrameConfig) -> Result<SnrEstimate, SnrError> {
    if buffer.len() < buffer.sample_rate() as usize {
        return Err(SnrError::TooShortForEstimate { min_seconds: 1.0 });
    }
    let frames = frame_powers(buffer, config)?;
    let powers = frames.powers_db();
    if powers.iter().all(|&p| p <= SILENCE_FLOOR_DB) {
        return Err(SnrError::Silent);
    }

    let mut histogram: BTreeMap<i64, usize> = BTreeMap::new();
    for &p in powers {
        let bin = ((p - SILENCE_FLOOR_DB) / HISTOGRAM_BIN_DB).floor() as i64;
        *histogram.entry(bin).or_insert(0) += 1;
    }
    if histogram.len() < 2 {
        return Err(SnrError::ConstantSignal);
    }

    let mut sorted = powers.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = percentile(&sorted, 50.0);
    let bin_center = |bin: i64| SILENCE_FLOOR_DB + (bin as f64 + 0.5) * HISTOGRAM_BIN_DB;

    // Dominant low-power mode: most-populated bin at or below the median;
    // ties go to the quieter bin. Every occupied bin sits above the median
    // only in pathological cases, where the lowest bin stands in.
    let noise_bin = histogram
        .iter()
        .filter(|(&bin, _)| bin_center(bin) <= median + HISTOGRAM_BIN_DB / 2.0)
        .max_by(|(ba, ca), (bb, cb)| ca.cmp(cb).then(bb.cmp(ba)))
        .map(|(&bin, _)| bin)
        .unwrap_or_else(|| *histogram.keys().next().expect("non-empty histogram"));

    let noise_power_db = bin_center(noise_bin);
    let signal_power_db = percentile(&sorted, 95.0);
    Ok(SnrEstimate {
        signal_power_db,
        noise_power_db,
        snr_db: signal_power_db - noise_power_db,
        method: SnrMethod::NistHistogram,
    })
}

/// A per-utterance failure that did not abort a corpus-level operation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceFailure {
    pub utt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileOutcome {
    pub profile: SnrProfile,
    pub failures: Vec<UtteranceFailure>,
}

/// Runs [`estimate_snr`] over every utterance of a manifest.
///
/// Utterances fan out across threads; the result map is keyed and ordered by
/// utterance id, so the outcome is independent of scheduling. Without
/// `partial`, the first per-utterance failure aborts with that utterance's
/// id attached; with it, failures are collected alongside the profile of the
/// utterances that did work.
pub fn corpus_snr_profile(
    manifest: &CorpusManifest,
    config: FrameConfig,
    partial: bool,
) -> Result<ProfileOutcome, SnrError> {
    let results: Vec<(String, Result<SnrEstimate, SnrError>)> = manifest
        .utterances()
        .par_iter()
        .map(|utt| {
            let est = crate::audio::read_wav(utt.audio_path())
                .map_err(SnrError::from)
                .and_then(|buffer| estimate_snr(&buffer, config));
            (utt.utt_id().to_string(), est)
        })
        .collect();

    let mut estimates = BTreeMap::new();
    let mut failures = Vec::new();
    for (utt_id, result) in results {
        match result {
            Ok(est) => {
                estimates.insert(utt_id, est);
            }
            Err(err) => {
                if !partial {
                    return Err(SnrError::Utterance {
                        utt_id,
                        message: err.to_string(),
                    });
                }
                failures.push(UtteranceFailure {
                    utt_id,
                    message: err.to_string(),
                });
            }
        }
    }

    Ok(ProfileOutcome {
        profile: SnrProfile::from_estimates(estimates)?,
        failures,
    })
}
