//! Character-level alignment, CER scoring, and engine significance
//! comparison.
//!
//! CER is (substitutions + deletions + insertions) / reference characters,
//! the standard measure for Chinese. Alignment is plain Levenshtein with
//! unit costs and a fixed backtrace preference (match > substitution >
//! deletion > insertion) so paths reproduce across runs and platforms.
//!
//! Engine comparison follows the binomial scheme: with `p` the best baseline
//! CER and `n` the unit count, `sdev = 100 * sqrt(p * (1 - p) / n)`
//! percentage points, and the candidate's improvement is measured in those
//! units with a 4-sdev significance threshold. Reverse-engineering published
//! significance rows of this form shows `n` counting scoring units (test
//! utterances), not characters; it stays an explicit parameter rather than a
//! baked-in convention.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{read_kaldi_table, CorpusManifest, ManifestError};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("reference manifest is empty")]
    EmptyReference,
    #[error("reference transcripts contain no tokens")]
    ZeroReferenceTokens,
    #[error("no baseline reports given")]
    EmptyBaselines,
    #[error("condition label mismatch: {left} vs {right}")]
    LabelMismatch { left: String, right: String },
    #[error("baseline CER {cer} outside (0, 1); the binomial deviation is undefined")]
    BaselineCerOutOfRange { cer: f64 },
    #[error("n_units must be positive")]
    ZeroUnits,
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

/// Splits a transcript into scoring tokens.
///
/// Whitespace never scores. By default every remaining Unicode scalar is one
/// token; with `ascii_runs`, maximal ASCII alphanumeric runs collapse into
/// single tokens so embedded Latin words in mixed-script text count once.
///
/// ```
/// use noisebench::score::tokenize;
///
/// assert_eq!(tokenize("你好 世界", false), vec!["你", "好", "世", "界"]);
/// assert_eq!(tokenize("abc你好", true), vec!["abc", "你", "好"]);
/// ```
pub fn tokenize(transcript: &str, ascii_runs: bool) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in transcript.chars() {
        let in_run = ascii_runs && c.is_ascii_alphanumeric();
        if !in_run && !run.is_empty() {
            tokens.push(std::mem::take(&mut run));
        }
        if c.is_whitespace() {
            continue;
        }
        if in_run {
            run.push(c);
        } else {
            tokens.push(c.to_string());
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

impl AlignOp {
    fn letter(self) -> char {
        match self {
            AlignOp::Match => 'C',
            AlignOp::Substitute => 'S',
            AlignOp::Delete => 'D',
            AlignOp::Insert => 'I',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignStep {
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
    pub op: AlignOp,
}

/// A minimal-cost token alignment with its operation counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Alignment {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub correct: usize,
    #[serde(skip)]
    pub path: Vec<AlignStep>,
}

impl Alignment {
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn ref_len(&self) -> usize {
        self.substitutions + self.deletions + self.correct
    }

    pub fn hyp_len(&self) -> usize {
        self.substitutions + self.insertions + self.correct
    }

    /// Per-utterance CER; undefined (None) for an empty reference with a
    /// non-empty hypothesis.
    pub fn cer(&self) -> Option<f64> {
        match (self.ref_len(), self.edits()) {
            (0, 0) => Some(0.0),
            (0, _) => None,
            (n, e) => Some(e as f64 / n as f64),
        }
    }
}

/// Minimal-cost alignment of two token sequences, unit cost per edit.
///
/// Where several minimal paths exist the backtrace prefers match, then
/// substitution, then deletion, then insertion, making the path (not just
/// the counts) deterministic.
pub fn align(reference: &[String], hypothesis: &[String]) -> Alignment {
    let m = reference.len();
    let n = hypothesis.len();
    let width = n + 1;
    let mut dp = vec![0usize; (m + 1) * width];
    for (j, cell) in dp[..width].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        dp[i * width] = i;
        for j in 1..=n {
            let sub_cost = usize::from(reference[i - 1] != hypothesis[j - 1]);
            let diag = dp[(i - 1) * width + j - 1] + sub_cost;
            let del = dp[(i - 1) * width + j] + 1;
            let ins = dp[i * width + j - 1] + 1;
            dp[i * width + j] = diag.min(del).min(ins);
        }
    }

    let mut path = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    let mut counts = [0usize; 4]; // match, sub, del, ins
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        let op = if i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1]
            && here == dp[(i - 1) * width + j - 1]
        {
            AlignOp::Match
        } else if i > 0 && j > 0 && here == dp[(i - 1) * width + j - 1] + 1 {
            AlignOp::Substitute
        } else if i > 0 && here == dp[(i - 1) * width + j] + 1 {
            AlignOp::Delete
        } else {
            AlignOp::Insert
        };
        let (r, h) = match op {
            AlignOp::Match | AlignOp::Substitute => {
                i -= 1;
                j -= 1;
                (Some(reference[i].clone()), Some(hypothesis[j].clone()))
            }
            AlignOp::Delete => {
                i -= 1;
                (Some(reference[i].clone()), None)
            }
            AlignOp::Insert => {
                j -= 1;
                (None, Some(hypothesis[j].clone()))
            }
        };
        counts[op as usize] += 1;
        path.push(AlignStep {
            reference: r,
            hypothesis: h,
            op,
        });
    }
    path.reverse();

    Alignment {
        substitutions: counts[AlignOp::Substitute as usize],
        deletions: counts[AlignOp::Delete as usize],
        insertions: counts[AlignOp::Insert as usize],
        correct: counts[AlignOp::Match as usize],
        path,
    }
}

/// Corpus-level CER report for one condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub condition_label: String,
    pub total_ref_tokens: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub correct: usize,
    /// (S + D + I) / N; exceeds 1.0 when insertions dominate.
    pub cer: f64,
    pub per_utterance: BTreeMap<String, Alignment>,
    /// Reference ids with no hypothesis; scored against the empty string.
    pub missing_hypotheses: Vec<String>,
    /// Hypothesis ids not in the reference; excluded from scoring.
    pub extra_hypotheses: Vec<String>,
}

impl ScoreReport {
    /// CSV rendering, one row per utterance.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("utt_id,ref_tokens,correct,substitutions,deletions,insertions,cer\n");
        for (id, a) in &self.per_utterance {
            let cer = a
                .cer()
                .map(|c| format!("{c:.6}"))
                .unwrap_or_else(|| "inf".to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                id,
                a.ref_len(),
                a.correct,
                a.substitutions,
                a.deletions,
                a.insertions,
                cer
            );
        }
        out
    }

    /// sclite-flavored dump: three lines (ref / hyp / ops) per utterance,
    /// gaps shown as `*`.
    pub fn dump_alignments(&self) -> String {
        let mut out = String::new();
        for (id, a) in &self.per_utterance {
            let col = |step: &AlignStep, side: bool| -> String {
                let token = if side { &step.reference } else { &step.hypothesis };
                token.clone().unwrap_or_else(|| "*".to_string())
            };
            let refs: Vec<String> = a.path.iter().map(|s| col(s, true)).collect();
            let hyps: Vec<String> = a.path.iter().map(|s| col(s, false)).collect();
            let ops: Vec<String> = a.path.iter().map(|s| s.op.letter().to_string()).collect();
            let _ = writeln!(out, "ref {} {}", id, refs.join(" "));
            let _ = writeln!(out, "hyp {} {}", id, hyps.join(" "));
            let _ = writeln!(out, "ops {} {}", id, ops.join(" "));
        }
        out
    }
}

/// Reads a Kaldi-text-format hypothesis file (`<utt_id> <transcript>`).
pub fn load_hypotheses(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, ScoreError> {
    Ok(read_kaldi_table(path.as_ref(), true)?.into_iter().collect())
}

/// Scores a hypothesis set against a reference manifest.
///
/// Every reference id is scored; ids missing from the hypotheses count as
/// empty output (pure deletions) rather than erroring, since engines do fail
/// on single utterances. Hypothesis ids with no reference are reported and
/// excluded.
pub fn score_corpus(
    refs: &CorpusManifest,
    hyps: &BTreeMap<String, String>,
    condition_label: &str,
    ascii_runs: bool,
) -> Result<ScoreReport, ScoreError> {
    if refs.is_empty() {
        return Err(ScoreError::EmptyReference);
    }

    // Alignment fans out per utterance; the aggregation below runs in id
    // order so totals are a deterministic reduction.
    let aligned: Vec<(String, bool, Alignment)> = refs
        .utterances()
        .par_iter()
        .map(|utt| {
            let ref_tokens = tokenize(utt.transcript(), ascii_runs);
            let hyp_text = hyps.get(utt.utt_id()).map(String::as_str);
            let hyp_tokens = tokenize(hyp_text.unwrap_or(""), ascii_runs);
            let alignment = align(&ref_tokens, &hyp_tokens);
            (utt.utt_id().to_string(), hyp_text.is_none(), alignment)
        })
        .collect();

    let mut per_utterance = BTreeMap::new();
    let mut missing = Vec::new();
    let mut totals = (0usize, 0usize, 0usize, 0usize, 0usize); // N, S, D, I, C
    for (utt_id, was_missing, alignment) in aligned {
        if was_missing {
            missing.push(utt_id.clone());
        }
        totals.0 += alignment.ref_len();
        totals.1 += alignment.substitutions;
        totals.2 += alignment.deletions;
        totals.3 += alignment.insertions;
        totals.4 += alignment.correct;
        per_utterance.insert(utt_id, alignment);
    }
    if totals.0 == 0 {
        return Err(ScoreError::ZeroReferenceTokens);
    }

    let extra = hyps
        .keys()
        .filter(|id| refs.get(id).is_none())
        .cloned()
        .collect();

    Ok(ScoreReport {
        condition_label: condition_label.to_string(),
        total_ref_tokens: totals.0,
        substitutions: totals.1,
        deletions: totals.2,
        insertions: totals.3,
        correct: totals.4,
        cer: (totals.1 + totals.2 + totals.3) as f64 / totals.0 as f64,
        per_utterance,
        missing_hypotheses: missing,
        extra_hypotheses: extra,
    })
}

/// One condition's baseline-vs-candidate comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineComparison {
    pub condition_label: String,
    /// Minimum CER across the baseline engines (the binomial `p`).
    pub baseline_cer: f64,
    pub candidate_cer: f64,
    pub n_units: u64,
    /// Binomial standard deviation of the baseline, in percentage points.
    pub sdev: f64,
    /// Candidate improvement in sdev units; positive means candidate better.
    pub num_sdev: f64,
    /// More than 4 sdev better than the best baseline.
    pub significant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub n_units: u64,
    pub conditions: Vec<EngineComparison>,
}

impl SignificanceReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("condition,baseline_cer,candidate_cer,sdev,num_sdev,significant\n");
        for c in &self.conditions {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.4},{:.4},{}",
                c.condition_label, c.baseline_cer, c.candidate_cer, c.sdev, c.num_sdev, c.significant
            );
        }
        out
    }
}

/// Compares a candidate against the best of several baselines on one
/// condition.
///
/// All reports must carry the same condition label. The result is invariant
/// under reordering of the baselines.
pub fn compare_engines(
    baselines: &[&ScoreReport],
    candidate: &ScoreReport,
    n_units: u64,
) -> Result<EngineComparison, ScoreError> {
    if baselines.is_empty() {
        return Err(ScoreError::EmptyBaselines);
    }
    if n_units == 0 {
        return Err(ScoreError::ZeroUnits);
    }
    for report in baselines {
        if report.condition_label != candidate.condition_label {
            return Err(ScoreError::LabelMismatch {
                left: report.condition_label.clone(),
                right: candidate.condition_label.clone(),
            });
        }
    }
    let p = baselines
        .iter()
        .map(|r| r.cer)
        .fold(f64::INFINITY, f64::min);
    if !(p > 0.0 && p < 1.0) {
        return Err(ScoreError::BaselineCerOutOfRange { cer: p });
    }

    let sdev = 100.0 * (p * (1.0 - p) / n_units as f64).sqrt();
    let num_sdev = (p - candidate.cer) * 100.0 / sdev;
    Ok(EngineComparison {
        condition_label: candidate.condition_label.clone(),
        baseline_cer: p,
        candidate_cer: candidate.cer,
        n_units,
        sdev,
        num_sdev,
        significant: num_sdev > 4.0,
    })
}
