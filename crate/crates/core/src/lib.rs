//! Construction and evaluation of SNR-calibrated noisy speech corpora.
//!
//! The crate covers the data side of multi-condition ASR training:
//!
//! * [`audio`] — 16-bit PCM mono WAV I/O with fixed amplitude conventions.
//! * [`snr`] — frame powers, NIST-style histogram SNR estimation, corpus
//!   SNR profiling.
//! * [`mixer`] — calibrating one corpus-wide noise gain per target SNR and
//!   mixing deterministic noise segments into every utterance.
//! * [`manifest`] — Kaldi-style data directories: loading, validation
//!   against published split counts, multi-condition assembly, hour-budget
//!   subsetting.
//! * [`score`] — character-level alignment, CER, and binomial significance
//!   comparison between engines.
//!
//! Everything that consumes a seed derives per-utterance randomness through
//! [`hash::keyed_hash`], so results never depend on execution order or
//! thread count.

pub mod audio;
pub mod hash;
pub mod manifest;
pub mod mixer;
pub mod score;
pub mod snr;

pub use audio::{read_wav, write_wav, AudioBuffer, AudioError};
pub use manifest::{load_manifest, save_manifest, CorpusManifest, ManifestError, Utterance};
pub use mixer::{mix_corpus, MixError, MixOutcome, MixPlan, MixRecord};
pub use score::{align, compare_engines, score_corpus, ScoreError, ScoreReport, SignificanceReport};
pub use snr::{corpus_snr_profile, estimate_snr, FrameConfig, SnrError, SnrEstimate, SnrProfile};
