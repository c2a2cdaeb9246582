//! Implementations of the six subcommands.
//!
//! Each returns the process exit code on success (0, or 2 for partial
//! per-utterance failures); fatal problems bubble up as errors and become
//! exit code 1 in `main`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use noisebench::audio::read_wav;
use noisebench::manifest::{
    load_manifest, make_multicondition, save_manifest, subset_by_hours, CorpusManifest,
};
use noisebench::mixer::{mix_corpus, snr_suffix, SkippedUtterance};
use noisebench::score::{
    compare_engines, load_hypotheses, score_corpus, EngineComparison, ScoreReport,
    SignificanceReport,
};
use noisebench::snr::{corpus_snr_profile, FrameConfig};

use crate::report::{checksum_inputs, write_report};
use crate::{log_info, log_warn};

fn manifest_files(dir: &Path) -> Vec<PathBuf> {
    ["wav.scp", "text", "utt2spk"].iter().map(|f| dir.join(f)).collect()
}

fn checksum_dirs(dirs: &[&Path], extra: &[&Path]) -> Result<serde_json::Value> {
    let mut files: Vec<PathBuf> = dirs.iter().flat_map(|d| manifest_files(d)).collect();
    files.extend(extra.iter().map(|p| p.to_path_buf()));
    let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    checksum_inputs(&refs)
}

fn csv_sibling(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

pub struct ProfileSnrArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub partial: bool,
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub seed: u64,
    pub jobs: Option<usize>,
}

pub fn profile_snr(args: ProfileSnrArgs) -> Result<u8> {
    let manifest = load_manifest(&args.data)?;
    let frame = FrameConfig {
        frame_ms: args.frame_ms,
        hop_ms: args.hop_ms,
    };
    let outcome = corpus_snr_profile(&manifest, frame, args.partial)?;

    let config = json!({
        "command": "profile-snr",
        "data": args.data,
        "out": args.out,
        "partial": args.partial,
        "frame_ms": args.frame_ms,
        "hop_ms": args.hop_ms,
        "seed": args.seed,
        "jobs": args.jobs,
        "input_checksums": checksum_dirs(&[&args.data], &[])?,
    });
    write_report(&args.out, config, &outcome)?;
    fs::write(csv_sibling(&args.out), outcome.profile.to_csv())?;

    log_info(format!(
        "profiled {} utterances: mean {:.2} dB, stddev {:.2} dB ({} failures)",
        outcome.profile.per_utterance.len(),
        outcome.profile.mean_db,
        outcome.profile.stddev_db,
        outcome.failures.len()
    ));
    for failure in &outcome.failures {
        log_warn(format!("skipped {}: {}", failure.utt_id, failure.message));
    }
    Ok(if outcome.failures.is_empty() { 0 } else { 2 })
}

#[derive(Serialize)]
struct MixTargetSummary {
    target_snr_db: f64,
    out_dir: PathBuf,
    noise_gain: f64,
    gain_db: f64,
    utterances: usize,
    skipped: Vec<SkippedUtterance>,
}

pub struct MixArgs {
    pub data: PathBuf,
    pub noise: PathBuf,
    pub snr: Vec<f64>,
    pub out_root: PathBuf,
    pub force: bool,
    pub sample_size: Option<usize>,
    pub seed: u64,
    pub jobs: Option<usize>,
}

pub fn mix(args: MixArgs) -> Result<u8> {
    if args.snr.is_empty() {
        bail!("at least one --snr target is required");
    }
    let manifest = load_manifest(&args.data)?;
    let noise = read_wav(&args.noise)?;
    fs::create_dir_all(&args.out_root)
        .with_context(|| format!("creating {}", args.out_root.display()))?;

    let mut summaries = Vec::new();
    let mut any_skipped = false;
    for &target in &args.snr {
        let out_dir = args
            .out_root
            .join(format!("{}_snr{}", manifest.label(), snr_suffix(target)));
        if out_dir.exists() && out_dir.read_dir()?.next().is_some() {
            if !args.force {
                bail!(
                    "{} already exists and is not empty (use --force to overwrite)",
                    out_dir.display()
                );
            }
            fs::remove_dir_all(&out_dir)
                .with_context(|| format!("clearing {}", out_dir.display()))?;
        }

        let outcome = mix_corpus(&manifest, &noise, target, args.seed, &out_dir, args.sample_size)?;
        log_info(format!(
            "target {} dB: gain {:+.2} dB, wrote {} utterances to {}, skipped {}",
            target,
            outcome.plan.gain_db(),
            outcome.manifest.len(),
            out_dir.display(),
            outcome.skipped.len()
        ));
        for skip in &outcome.skipped {
            log_warn(format!("skipped {}: {}", skip.utt_id, skip.reason));
        }
        any_skipped |= !outcome.skipped.is_empty();
        summaries.push(MixTargetSummary {
            target_snr_db: target,
            out_dir,
            noise_gain: outcome.plan.noise_gain,
            gain_db: outcome.plan.gain_db(),
            utterances: outcome.manifest.len(),
            skipped: outcome.skipped,
        });
    }

    let config = json!({
        "command": "mix",
        "data": args.data,
        "noise": args.noise,
        "snr": args.snr,
        "out_root": args.out_root,
        "force": args.force,
        "sample_size": args.sample_size,
        "seed": args.seed,
        "jobs": args.jobs,
        "input_checksums": checksum_dirs(&[&args.data], &[&args.noise])?,
    });
    write_report(&args.out_root.join("mix_report.json"), config, &summaries)?;
    Ok(if any_skipped { 2 } else { 0 })
}

pub struct MakeMultiArgs {
    pub clean: PathBuf,
    pub noisy: Vec<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: Option<usize>,
}

pub fn make_multi(args: MakeMultiArgs) -> Result<u8> {
    let clean = load_manifest(&args.clean)?;
    let noisy: Vec<CorpusManifest> = args
        .noisy
        .iter()
        .map(load_manifest)
        .collect::<Result<_, _>>()?;
    let merged = make_multicondition(&clean, &noisy)?;
    save_manifest(&merged, &args.out)?;

    let clean_hours = clean.total_hours()?;
    let total_hours = merged.total_hours()?;
    println!(
        "multicondition: {} utterances, {:.6} h total ({} conditions, clean {:.6} h)",
        merged.len(),
        total_hours,
        1 + noisy.len(),
        clean_hours
    );

    let mut dirs: Vec<&Path> = vec![&args.clean];
    dirs.extend(args.noisy.iter().map(PathBuf::as_path));
    let config = json!({
        "command": "make-multi",
        "clean": args.clean,
        "noisy": args.noisy,
        "out": args.out,
        "seed": args.seed,
        "jobs": args.jobs,
        "input_checksums": checksum_dirs(&dirs, &[])?,
    });
    let payload = json!({
        "utterances": merged.len(),
        "conditions": 1 + noisy.len(),
        "clean_hours": clean_hours,
        "total_hours": total_hours,
    });
    write_report(&args.out.join("report.json"), config, &payload)?;
    Ok(0)
}

pub struct SubsetArgs {
    pub data: PathBuf,
    pub hours: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: Option<usize>,
}

pub fn subset(args: SubsetArgs) -> Result<u8> {
    let manifest = load_manifest(&args.data)?;
    let outcome = subset_by_hours(&manifest, args.hours, args.seed)?;
    save_manifest(&outcome.manifest, &args.out)?;
    log_info(format!(
        "selected {} of {} utterances ({:.3} h of {:.3} h requested), {} of {} speakers",
        outcome.report.selected_utterances,
        outcome.report.total_utterances,
        outcome.report.selected_hours,
        outcome.report.requested_hours,
        outcome.report.speakers_selected,
        outcome.report.speakers_total
    ));
    let config = json!({
        "command": "subset",
        "data": args.data,
        "hours": args.hours,
        "out": args.out,
        "seed": args.seed,
        "jobs": args.jobs,
        "input_checksums": checksum_dirs(&[&args.data], &[])?,
    });
    write_report(&args.out.join("report.json"), config, &outcome.report)?;
    Ok(0)
}

pub struct ScoreArgs {
    pub reference: PathBuf,
    pub hyp: PathBuf,
    pub label: String,
    pub out: PathBuf,
    pub ascii_runs: bool,
    pub dump_align: Option<PathBuf>,
    pub seed: u64,
    pub jobs: Option<usize>,
}

pub fn score(args: ScoreArgs) -> Result<u8> {
    let refs = load_manifest(&args.reference)?;
    let hyps = load_hypotheses(&args.hyp)?;
    let report = score_corpus(&refs, &hyps, &args.label, args.ascii_runs)?;

    if !report.missing_hypotheses.is_empty() {
        log_warn(format!(
            "{} reference utterances had no hypothesis and scored as empty",
            report.missing_hypotheses.len()
        ));
    }
    if !report.extra_hypotheses.is_empty() {
        log_warn(format!(
            "{} hypothesis ids had no reference and were excluded",
            report.extra_hypotheses.len()
        ));
    }

    let config = json!({
        "command": "score",
        "ref": args.reference,
        "hyp": args.hyp,
        "label": args.label,
        "out": args.out,
        "ascii_runs": args.ascii_runs,
        "seed": args.seed,
        "jobs": args.jobs,
        "input_checksums": checksum_dirs(&[&args.reference], &[&args.hyp])?,
    });
    write_report(&args.out, config, &report)?;
    fs::write(csv_sibling(&args.out), report.to_csv())?;
    if let Some(dump) = &args.dump_align {
        fs::write(dump, report.dump_alignments())?;
    }

    println!(
        "CER {:.3} ({} edits / {} reference tokens) [{}]",
        report.cer,
        report.substitutions + report.deletions + report.insertions,
        report.total_ref_tokens,
        report.condition_label
    );
    Ok(0)
}

/// Accepts either a bare `ScoreReport` or one wrapped in a report envelope.
fn read_score_report(path: &Path) -> Result<ScoreReport> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    let payload = value.get("payload").cloned().unwrap_or(value);
    serde_json::from_value(payload)
        .with_context(|| format!("{} is not a score report", path.display()))
}

pub struct CompareArgs {
    pub baseline: Vec<PathBuf>,
    pub candidate: Vec<PathBuf>,
    pub n_units: u64,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: Option<usize>,
}

fn render_table(conditions: &[EngineComparison]) -> String {
    let mut widths: Vec<usize> = conditions
        .iter()
        .map(|c| c.condition_label.len().max(6) + 2)
        .collect();
    for w in &mut widths {
        *w = (*w).max(8);
    }
    let mut out = String::new();
    let mut row = |name: &str, cells: Vec<String>| {
        out.push_str(&format!("{name:<14}"));
        for (cell, width) in cells.iter().zip(&widths) {
            out.push_str(&format!("{cell:>width$}"));
        }
        out.push('\n');
    };
    row(
        "condition",
        conditions.iter().map(|c| c.condition_label.clone()).collect(),
    );
    row(
        "baseline_cer",
        conditions.iter().map(|c| format!("{:.2}", c.baseline_cer * 100.0)).collect(),
    );
    row(
        "candidate_cer",
        conditions.iter().map(|c| format!("{:.2}", c.candidate_cer * 100.0)).collect(),
    );
    row(
        "sdev",
        conditions.iter().map(|c| format!("{:.2}", c.sdev)).collect(),
    );
    row(
        "#sdev",
        conditions.iter().map(|c| format!("{:.1}", c.num_sdev)).collect(),
    );
    row(
        "significant",
        conditions
            .iter()
            .map(|c| if c.significant { "*" } else { "-" }.to_string())
            .collect(),
    );
    out
}

pub fn compare(args: CompareArgs) -> Result<u8> {
    let baselines: Vec<ScoreReport> = args
        .baseline
        .iter()
        .map(|p| read_score_report(p))
        .collect::<Result<_>>()?;
    let candidates: Vec<ScoreReport> = args
        .candidate
        .iter()
        .map(|p| read_score_report(p))
        .collect::<Result<_>>()?;
    if candidates.is_empty() {
        bail!("at least one --candidate report is required");
    }

    let mut grouped: BTreeMap<&str, Vec<&ScoreReport>> = BTreeMap::new();
    for report in &baselines {
        grouped.entry(&report.condition_label).or_default().push(report);
    }

    let mut conditions = Vec::new();
    for candidate in &candidates {
        let group = grouped.get(candidate.condition_label.as_str()).ok_or_else(|| {
            anyhow!(
                "no baseline report for condition {}",
                candidate.condition_label
            )
        })?;
        conditions.push(compare_engines(group, candidate, args.n_units)?);
    }
    let report = SignificanceReport {
        n_units: args.n_units,
        conditions,
    };

    print!("{}", render_table(&report.conditions));

    let config = json!({
        "command": "compare",
        "baseline": args.baseline,
        "candidate": args.candidate,
        "n_units": args.n_units,
        "out": args.out,
        "seed": args.seed,
        "jobs": args.jobs,
        "input_checksums": {
            "baselines": args.baseline.iter().map(|p| crate::report::sha256_file(p)).collect::<Result<Vec<_>>>()?,
            "candidates": args.candidate.iter().map(|p| crate::report::sha256_file(p)).collect::<Result<Vec<_>>>()?,
        },
    });
    write_report(&args.out, config, &report)?;
    fs::write(csv_sibling(&args.out), report.to_csv())?;
    Ok(0)
}
