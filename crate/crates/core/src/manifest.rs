//! Kaldi-style corpus manifests: parallel sorted text files keyed by
//! utterance id.
//!
//! A data directory holds `wav.scp` (`<utt_id> <path>`), `text`
//! (`<utt_id> <transcript>`), and optionally `utt2spk`
//! (`<utt_id> <speaker_id>`), all UTF-8, single-space separated, LF line
//! endings, sorted by utterance id. `spk2utt` is derived output and never
//! trusted as input. In memory, audio paths are always absolute; relative
//! `wav.scp` entries resolve against the data directory they were loaded
//! from.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio;
use crate::hash::keyed_hash;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("missing {name} in {dir}")]
    MissingFile { dir: PathBuf, name: &'static str },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed line, expected \"<utt_id> <value>\"")]
    MalformedLine { path: PathBuf, line: usize },
    #[error("{path}:{line}: duplicate utterance id {utt_id}")]
    DuplicateLine {
        path: PathBuf,
        line: usize,
        utt_id: String,
    },
    #[error("duplicate utterance id {utt_id}")]
    DuplicateId { utt_id: String },
    #[error("utterance ids differ between {left_name} and {right_name}: {left_only:?} only in {left_name}, {right_only:?} only in {right_name}")]
    IdMismatch {
        left_name: String,
        right_name: String,
        left_only: Vec<String>,
        right_only: Vec<String>,
    },
    #[error("utterance {utt_id}: {message}")]
    Utterance { utt_id: String, message: String },
    #[error("noisy manifest {label}: expected {clean} utterances to match the clean manifest, found {noisy}")]
    CountMismatch {
        label: String,
        clean: usize,
        noisy: usize,
    },
    #[error("noisy manifest {label}: ids are not the clean ids plus a common suffix (e.g. {example})")]
    SuffixStructure { label: String, example: String },
    #[error("suffix {suffix} appears in more than one noisy manifest")]
    SuffixCollision { suffix: String },
    #[error("subset target must be positive, got {target_hours} h")]
    NonPositiveTarget { target_hours: f64 },
    #[error("subset target {target_hours} h exceeds the {available_hours} h available")]
    TargetExceedsAvailable {
        target_hours: f64,
        available_hours: f64,
    },
}

/// One corpus utterance. The duration is read lazily from the WAV header on
/// first use and cached; generators that already know it can inject it with
/// [`Utterance::with_duration`].
#[derive(Debug, Clone)]
pub struct Utterance {
    utt_id: String,
    speaker_id: String,
    audio_path: PathBuf,
    transcript: String,
    duration_s: OnceLock<f64>,
}

impl Utterance {
    pub fn new(
        utt_id: impl Into<String>,
        speaker_id: impl Into<String>,
        audio_path: impl Into<PathBuf>,
        transcript: impl Into<String>,
    ) -> Self {
        Self {
            utt_id: utt_id.into(),
            speaker_id: speaker_id.into(),
            audio_path: audio_path.into(),
            transcript: transcript.into(),
            duration_s: OnceLock::new(),
        }
    }

    pub fn with_duration(self, seconds: f64) -> Self {
        let _ = self.duration_s.set(seconds);
        self
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn speaker_id(&self) -> &str {
        &self.speaker_id
    }

    pub fn audio_path(&self) -> &Path {
        &self.audio_path
    }

    pub fn transcript(&self) -> &str {
        &self.transcript
    }

    pub fn cached_duration_s(&self) -> Option<f64> {
        self.duration_s.get().copied()
    }

    /// Duration in seconds, from the cache or the WAV header.
    pub fn duration_s(&self) -> Result<f64, ManifestError> {
        if let Some(d) = self.duration_s.get() {
            return Ok(*d);
        }
        let d = audio::wav_duration_seconds(&self.audio_path).map_err(|e| {
            ManifestError::Utterance {
                utt_id: self.utt_id.clone(),
                message: e.to_string(),
            }
        })?;
        Ok(*self.duration_s.get_or_init(|| d))
    }
}

/// An immutable, id-sorted slice of a corpus.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    label: String,
    utterances: Vec<Utterance>,
}

impl CorpusManifest {
    /// Sorts by utterance id and rejects duplicates.
    pub fn new(
        label: impl Into<String>,
        mut utterances: Vec<Utterance>,
    ) -> Result<Self, ManifestError> {
        utterances.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
        for pair in utterances.windows(2) {
            if pair[0].utt_id == pair[1].utt_id {
                return Err(ManifestError::DuplicateId {
                    utt_id: pair[0].utt_id.clone(),
                });
            }
        }
        Ok(Self {
            label: label.into(),
            utterances,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, utt_id: &str) -> Option<&Utterance> {
        self.utterances
            .binary_search_by(|u| u.utt_id.as_str().cmp(utt_id))
            .ok()
            .map(|i| &self.utterances[i])
    }

    pub fn speaker_count(&self) -> usize {
        self.utterances
            .iter()
            .map(|u| u.speaker_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Total duration in seconds, summed in id order.
    pub fn total_seconds(&self) -> Result<f64, ManifestError> {
        // Resolve any uncached durations in parallel before the ordered sum.
        let errors: Vec<ManifestError> = self
            .utterances
            .par_iter()
            .filter_map(|u| u.duration_s().err())
            .collect();
        if let Some(err) = errors.into_iter().next() {
            return Err(err);
        }
        let mut total = 0.0;
        for u in &self.utterances {
            total += u.duration_s()?;
        }
        Ok(total)
    }

    pub fn total_hours(&self) -> Result<f64, ManifestError> {
        Ok(self.total_seconds()? / 3600.0)
    }
}

/// Reads a two-column Kaldi table. With `allow_empty_value`, a bare id line
/// is accepted and yields an empty value (empty transcripts exist in the
/// wild).
pub(crate) fn read_kaldi_table(
    path: &Path,
    allow_empty_value: bool,
) -> Result<Vec<(String, String)>, ManifestError> {
    let content = fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (id, value) = match line.split_once(' ') {
            Some((id, value)) if !id.is_empty() => (id, value),
            None if allow_empty_value => (line, ""),
            _ => {
                return Err(ManifestError::MalformedLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                })
            }
        };
        if value.is_empty() && !allow_empty_value {
            return Err(ManifestError::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(ManifestError::DuplicateLine {
                path: path.to_path_buf(),
                line: i + 1,
                utt_id: id.to_string(),
            });
        }
        rows.push((id.to_string(), value.to_string()));
    }
    Ok(rows)
}

fn check_same_ids(
    left_name: &str,
    left: &BTreeSet<String>,
    right_name: &str,
    right: &BTreeSet<String>,
) -> Result<(), ManifestError> {
    if left == right {
        return Ok(());
    }
    let cap = |v: Vec<String>| -> Vec<String> { v.into_iter().take(10).collect() };
    Err(ManifestError::IdMismatch {
        left_name: left_name.to_string(),
        right_name: right_name.to_string(),
        left_only: cap(left.difference(right).cloned().collect()),
        right_only: cap(right.difference(left).cloned().collect()),
    })
}

/// Speaker fallback when no utt2spk is present: the id up to its last
/// underscore, or the whole id when there is none.
fn speaker_from_id(utt_id: &str) -> &str {
    match utt_id.rfind('_') {
        Some(pos) if pos > 0 => &utt_id[..pos],
        _ => utt_id,
    }
}

/// Loads a Kaldi data directory.
///
/// `wav.scp` and `text` are required and must agree on the id set; `utt2spk`
/// is optional but authoritative when present. The manifest label is the
/// directory name.
pub fn load_manifest(dir: impl AsRef<Path>) -> Result<CorpusManifest, ManifestError> {
    let dir = dir.as_ref();
    let wav_scp = dir.join("wav.scp");
    let text = dir.join("text");
    if !wav_scp.is_file() {
        return Err(ManifestError::MissingFile {
            dir: dir.to_path_buf(),
            name: "wav.scp",
        });
    }
    if !text.is_file() {
        return Err(ManifestError::MissingFile {
            dir: dir.to_path_buf(),
            name: "text",
        });
    }

    let wavs = read_kaldi_table(&wav_scp, false)?;
    let texts = read_kaldi_table(&text, true)?;
    let wav_ids: BTreeSet<String> = wavs.iter().map(|(id, _)| id.clone()).collect();
    let text_ids: BTreeSet<String> = texts.iter().map(|(id, _)| id.clone()).collect();
    check_same_ids("wav.scp", &wav_ids, "text", &text_ids)?;

    let utt2spk_path = dir.join("utt2spk");
    let speakers: Option<BTreeMap<String, String>> = if utt2spk_path.is_file() {
        let rows = read_kaldi_table(&utt2spk_path, false)?;
        let ids: BTreeSet<String> = rows.iter().map(|(id, _)| id.clone()).collect();
        check_same_ids("wav.scp", &wav_ids, "utt2spk", &ids)?;
        Some(rows.into_iter().collect())
    } else {
        None
    };

    let transcripts: BTreeMap<String, String> = texts.into_iter().collect();
    let utterances = wavs
        .into_iter()
        .map(|(utt_id, path_str)| {
            let raw = PathBuf::from(&path_str);
            let audio_path = if raw.is_absolute() { raw } else { dir.join(raw) };
            let speaker_id = match &speakers {
                Some(map) => map[&utt_id].clone(),
                None => speaker_from_id(&utt_id).to_string(),
            };
            let transcript = transcripts[&utt_id].clone();
            Utterance::new(utt_id, speaker_id, audio_path, transcript)
        })
        .collect();

    let label = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    CorpusManifest::new(label, utterances)
}

/// Writes a manifest as a Kaldi data directory: wav.scp, text, utt2spk, and
/// the derived spk2utt. Audio paths are written absolute.
pub fn save_manifest(manifest: &CorpusManifest, dir: impl AsRef<Path>) -> Result<(), ManifestError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ManifestError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, content: String| -> Result<(), ManifestError> {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|source| ManifestError::Write { path, source })
    };

    let mut wav_scp = String::new();
    let mut text = String::new();
    let mut utt2spk = String::new();
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for u in manifest.utterances() {
        wav_scp.push_str(&format!("{} {}\n", u.utt_id, u.audio_path.display()));
        if u.transcript.is_empty() {
            text.push_str(&format!("{}\n", u.utt_id));
        } else {
            text.push_str(&format!("{} {}\n", u.utt_id, u.transcript));
        }
        utt2spk.push_str(&format!("{} {}\n", u.utt_id, u.speaker_id));
        by_speaker.entry(&u.speaker_id).or_default().push(&u.utt_id);
    }
    let mut spk2utt = String::new();
    for (speaker, utts) in by_speaker {
        spk2utt.push_str(&format!("{} {}\n", speaker, utts.join(" ")));
    }

    write("wav.scp", wav_scp)?;
    write("text", text)?;
    write("utt2spk", utt2spk)?;
    write("spk2utt", spk2utt)
}

/// Published expectations for one corpus split. Count tolerances default to
/// zero (exact); hours get an explicit tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitExpectation {
    pub expected_utterances: usize,
    pub expected_hours: f64,
    pub expected_speakers: usize,
    #[serde(default)]
    pub utterance_tolerance: usize,
    #[serde(default)]
    pub speaker_tolerance: usize,
    pub hours_tolerance: f64,
}

impl SplitExpectation {
    pub fn new(utterances: usize, hours: f64, speakers: usize, hours_tolerance: f64) -> Self {
        Self {
            expected_utterances: utterances,
            expected_hours: hours,
            expected_speakers: speakers,
            utterance_tolerance: 0,
            speaker_tolerance: 0,
            hours_tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountCheck {
    pub expected: usize,
    pub measured: usize,
    pub tolerance: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoursCheck {
    pub expected: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub label: String,
    pub utterances: CountCheck,
    pub speakers: CountCheck,
    pub hours: HoursCheck,
    pub duration_errors: Vec<crate::snr::UtteranceFailure>,
    pub pass: bool,
}

/// Checks a manifest against published split expectations. Unreadable audio
/// files are listed and fail the hours dimension rather than aborting.
pub fn validate_split(manifest: &CorpusManifest, expect: &SplitExpectation) -> SplitReport {
    let count_check = |expected: usize, measured: usize, tolerance: usize| CountCheck {
        expected,
        measured,
        tolerance,
        pass: measured.abs_diff(expected) <= tolerance,
    };
    let utterances = count_check(
        expect.expected_utterances,
        manifest.len(),
        expect.utterance_tolerance,
    );
    let speakers = count_check(
        expect.expected_speakers,
        manifest.speaker_count(),
        expect.speaker_tolerance,
    );

    let durations: Vec<(String, Result<f64, ManifestError>)> = manifest
        .utterances()
        .par_iter()
        .map(|u| (u.utt_id.clone(), u.duration_s()))
        .collect();
    let mut duration_errors = Vec::new();
    let mut measured_seconds = 0.0f64;
    for (utt_id, result) in durations {
        match result {
            Ok(d) => measured_seconds += d,
            Err(e) => duration_errors.push(crate::snr::UtteranceFailure {
                utt_id,
                message: e.to_string(),
            }),
        }
    }
    let measured_hours = measured_seconds / 3600.0;
    let hours = HoursCheck {
        expected: expect.expected_hours,
        measured: measured_hours,
        tolerance: expect.hours_tolerance,
        pass: duration_errors.is_empty()
            && (measured_hours - expect.expected_hours).abs() <= expect.hours_tolerance,
    };

    let pass = utterances.pass && speakers.pass && hours.pass;
    SplitReport {
        label: manifest.label.clone(),
        utterances,
        speakers,
        hours,
        duration_errors,
        pass,
    }
}

/// Infers the id suffix a noisy manifest appends to the clean ids, verifying
/// the bijection.
fn infer_suffix(
    clean_ids: &BTreeSet<&str>,
    noisy: &CorpusManifest,
) -> Result<String, ManifestError> {
    let structure_err = || ManifestError::SuffixStructure {
        label: noisy.label.clone(),
        example: noisy
            .utterances
            .first()
            .map(|u| u.utt_id.clone())
            .unwrap_or_default(),
    };
    let first = noisy.utterances.first().ok_or_else(structure_err)?;
    // Longest matching clean prefix first, i.e. shortest candidate suffix.
    let mut candidates: Vec<&str> = clean_ids
        .iter()
        .filter(|c| first.utt_id.starts_with(*c) && first.utt_id.len() > c.len())
        .map(|c| &first.utt_id[c.len()..])
        .collect();
    candidates.sort_by_key(|s| s.len());
    candidates.dedup();
    for suffix in candidates {
        let stripped: Option<BTreeSet<&str>> = noisy
            .utterances
            .iter()
            .map(|u| u.utt_id.strip_suffix(suffix))
            .collect();
        if let Some(stripped) = stripped {
            if stripped == *clean_ids {
                return Ok(suffix.to_string());
            }
        }
    }
    Err(structure_err())
}

/// Concatenates a clean manifest with noisy renditions of itself.
///
/// Every noisy manifest must contain exactly the clean ids plus one common
/// suffix, and the suffixes must be pairwise distinct; the merge is sorted
/// and labeled `multicondition`.
pub fn make_multicondition(
    clean: &CorpusManifest,
    noisy: &[CorpusManifest],
) -> Result<CorpusManifest, ManifestError> {
    let clean_ids: BTreeSet<&str> = clean.utterances.iter().map(|u| u.utt_id.as_str()).collect();
    let mut suffixes = BTreeSet::new();
    for condition in noisy {
        if condition.len() != clean.len() {
            return Err(ManifestError::CountMismatch {
                label: condition.label.clone(),
                clean: clean.len(),
                noisy: condition.len(),
            });
        }
        let suffix = infer_suffix(&clean_ids, condition)?;
        if !suffixes.insert(suffix.clone()) {
            return Err(ManifestError::SuffixCollision { suffix });
        }
    }

    let mut merged = clean.utterances.clone();
    for condition in noisy {
        merged.extend(condition.utterances.iter().cloned());
    }
    CorpusManifest::new("multicondition", merged)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetReport {
    pub requested_hours: f64,
    pub selected_hours: f64,
    pub selected_utterances: usize,
    pub total_utterances: usize,
    pub speakers_selected: usize,
    pub speakers_total: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SubsetOutcome {
    pub manifest: CorpusManifest,
    pub report: SubsetReport,
}

/// Draws a deterministic subset that first reaches or exceeds the hour
/// budget.
///
/// The shuffle orders utterances by `keyed_hash(seed, utt_id)` — the same
/// keyed scheme the mixer uses for noise offsets — so the selection depends
/// only on the seed and the id set.
pub fn subset_by_hours(
    manifest: &CorpusManifest,
    target_hours: f64,
    seed: u64,
) -> Result<SubsetOutcome, ManifestError> {
    if target_hours.is_nan() || target_hours <= 0.0 {
        return Err(ManifestError::NonPositiveTarget { target_hours });
    }
    let available_hours = manifest.total_hours()?;
    if target_hours > available_hours {
        return Err(ManifestError::TargetExceedsAvailable {
            target_hours,
            available_hours,
        });
    }

    let mut order: Vec<&Utterance> = manifest.utterances.iter().collect();
    order.sort_by_key(|u| (keyed_hash(seed, &u.utt_id), u.utt_id.clone()));

    let target_seconds = target_hours * 3600.0;
    let mut selected = Vec::new();
    let mut cumulative = 0.0f64;
    for u in order {
        selected.push(u.clone());
        cumulative += u.duration_s()?;
        if cumulative >= target_seconds {
            break;
        }
    }

    let subset = CorpusManifest::new(format!("{}_subset", manifest.label), selected)?;
    let report = SubsetReport {
        requested_hours: target_hours,
        selected_hours: cumulative / 3600.0,
        selected_utterances: subset.len(),
        total_utterances: manifest.len(),
        speakers_selected: subset.speaker_count(),
        speakers_total: manifest.speaker_count(),
        seed,
    };
    Ok(SubsetOutcome {
        manifest: subset,
        report,
    })
}
