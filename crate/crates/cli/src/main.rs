//! Batch command line for building and evaluating SNR-calibrated noisy
//! speech corpora.
//!
//! Exit codes are fixed: 0 success, 1 fatal error, 2 completed with partial
//! per-utterance failures. Never anything else — including argument errors,
//! which map to 1.

mod commands;
mod report;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

static LOG_LEVEL: OnceLock<LogLevel> = OnceLock::new();

fn level() -> LogLevel {
    *LOG_LEVEL.get().unwrap_or(&LogLevel::Info)
}

pub fn log_info(msg: impl Display) {
    if level() >= LogLevel::Info {
        eprintln!("{msg}");
    }
}

pub fn log_warn(msg: impl Display) {
    if level() >= LogLevel::Warn {
        eprintln!("warning: {msg}");
    }
}

#[derive(Parser)]
#[command(
    name = "noisebench",
    version,
    about = "Build SNR-calibrated noisy speech corpora and score ASR output",
    after_help = "Reports are JSON envelopes {schema_version, meta, config, payload}; \
only `meta` (timestamp, tool version) varies between identical runs. Commands \
writing a JSON report also write a CSV twin next to it."
)]
struct Cli {
    /// Seed for every deterministic draw (noise offsets, subset shuffles).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, env = "NOISEBENCH_JOBS")]
    jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-utterance SNR over a data dir and write a profile report.
    ProfileSnr {
        /// Kaldi data dir (wav.scp, text, optional utt2spk).
        #[arg(long)]
        data: PathBuf,
        /// Report path (JSON; a CSV with columns utt_id,snr_db,signal_db,noise_db lands next to it).
        #[arg(long)]
        out: PathBuf,
        /// Collect per-utterance failures instead of aborting on the first.
        #[arg(long)]
        partial: bool,
        /// Analysis frame length (ms).
        #[arg(long, default_value_t = 20)]
        frame_ms: u32,
        /// Analysis hop (ms).
        #[arg(long, default_value_t = 10)]
        hop_ms: u32,
    },
    /// Mix calibrated noise into a corpus at one or more target SNRs.
    Mix {
        /// Clean Kaldi data dir.
        #[arg(long)]
        data: PathBuf,
        /// Noise recording (16-bit PCM mono WAV, same rate as the speech).
        #[arg(long)]
        noise: PathBuf,
        /// Target SNRs in dB, comma separated (e.g. 20,15,10,5,0).
        #[arg(long, value_delimiter = ',', required = true)]
        snr: Vec<f64>,
        /// Parent for the per-target output dirs {label}_snr{T}.
        #[arg(long)]
        out_root: PathBuf,
        /// Overwrite existing non-empty output dirs.
        #[arg(long)]
        force: bool,
        /// Calibrate on the first N utterances instead of the full corpus.
        #[arg(long)]
        sample_size: Option<usize>,
    },
    /// Concatenate a clean dir with noisy renditions into one training dir.
    MakeMulti {
        #[arg(long)]
        clean: PathBuf,
        /// Noisy data dirs; repeat the flag once per condition.
        #[arg(long)]
        noisy: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a seeded subset that first reaches a target amount of audio.
    Subset {
        #[arg(long)]
        data: PathBuf,
        /// Hour budget; selection stops once it is reached or exceeded.
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a hypothesis file against a reference dir (character error rate).
    Score {
        /// Reference Kaldi data dir.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Hypothesis file, Kaldi text format: "<utt_id> <transcript>".
        #[arg(long)]
        hyp: PathBuf,
        /// Condition label recorded in the report (e.g. clean, 15dB).
        #[arg(long)]
        label: String,
        /// Report path (JSON; a CSV with columns utt_id,ref_tokens,correct,substitutions,deletions,insertions,cer lands next to it).
        #[arg(long)]
        out: PathBuf,
        /// Group maximal ASCII alphanumeric runs as single tokens.
        #[arg(long)]
        ascii_runs: bool,
        /// Also write a per-utterance ref/hyp/ops alignment dump.
        #[arg(long)]
        dump_align: Option<PathBuf>,
    },
    /// Binomial significance comparison of a candidate against baselines.
    Compare {
        /// Baseline score reports (one per engine and condition; repeatable).
        #[arg(long, required = true)]
        baseline: Vec<PathBuf>,
        /// Candidate score reports, one per condition, in display order.
        #[arg(long, required = true)]
        candidate: Vec<PathBuf>,
        /// Unit count for the binomial deviation (e.g. test-set utterances).
        #[arg(long)]
        n_units: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let seed = cli.seed;
    let jobs = cli.jobs;
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| anyhow::anyhow!("configuring {jobs} worker threads: {e}"))?;
    }

    match cli.command {
        Command::ProfileSnr {
            data,
            out,
            partial,
            frame_ms,
            hop_ms,
        } => commands::profile_snr(commands::ProfileSnrArgs {
            data,
            out,
            partial,
            frame_ms,
            hop_ms,
            seed,
            jobs,
        }),
        Command::Mix {
            data,
            noise,
            snr,
            out_root,
            force,
            sample_size,
        } => commands::mix(commands::MixArgs {
            data,
            noise,
            snr,
            out_root,
            force,
            sample_size,
            seed,
            jobs,
        }),
        Command::MakeMulti { clean, noisy, out } => {
            commands::make_multi(commands::MakeMultiArgs {
                clean,
                noisy,
                out,
                seed,
                jobs,
            })
        }
        Command::Subset { data, hours, out } => commands::subset(commands::SubsetArgs {
            data,
            hours,
            out,
            seed,
            jobs,
        }),
        Command::Score {
            reference,
            hyp,
            label,
            out,
            ascii_runs,
            dump_align,
        } => commands::score(commands::ScoreArgs {
            reference,
            hyp,
            label,
            out,
            ascii_runs,
            dump_align,
            seed,
            jobs,
        }),
        Command::Compare {
            baseline,
            candidate,
            n_units,
            out,
        } => commands::compare(commands::CompareArgs {
            baseline,
            candidate,
            n_units,
            out,
            seed,
            jobs,
        }),
    }
}

fn main() -> ExitCode {
    // Argument errors must exit 1, not clap's default 2: code 2 is reserved
    // for runs that completed with partial failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let _ = LOG_LEVEL.set(cli.log_level);
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
