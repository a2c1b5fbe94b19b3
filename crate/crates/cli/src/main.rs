use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use omission_core::config::Config;
use omission_core::dataset::{
    artifact_schemas, load_corpus, EncounterStatus, FormatAdapter, OutputLayout, Split,
};
use omission_core::gateway::Mode;
use omission_core::pipeline::{
    load_reports, read_manifest, rescore, run_corpus, RunOptions, RunStats,
};
use omission_core::scoring::UniquenessScope;

mod compare;
mod report;

/// Exit status contract: 0 success, 1 partial (some encounters skipped),
/// 2 failure.
const EXIT_OK: u8 = 0;
const EXIT_PARTIAL: u8 = 1;
const EXIT_FAILURE: u8 = 2;

const NOT_SELECTED: &str = "not selected";

#[derive(Parser)]
#[command(
    name = "omission",
    version,
    about = "Weighted omission scoring for clinical dialogue summaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Record => Mode::Record,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    All,
    SupportingOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over a corpus and write the artifact directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Corpus file (.json canonical layout or .csv).
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the config's `mode`, then to replay.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Cassette path; overrides the config.
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Only run these encounters (repeatable).
        #[arg(long)]
        encounter: Vec<String>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        json: bool,
    },
    /// Recompute reports from stored artifacts.
    Score {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        uniqueness: ScopeArg,
        /// Overwrite report.json with the recomputed report.
        #[arg(long)]
        write: bool,
        #[arg(long)]
        json: bool,
    },
    /// Correlate omission metrics with ROUGE and imported metrics.
    Compare {
        /// Run output directory (repeatable).
        #[arg(long = "out", required = true)]
        outs: Vec<PathBuf>,
        /// External metric as NAME=PATH to a CSV with columns encounter_id,value.
        #[arg(long = "metric-csv")]
        metric_csvs: Vec<String>,
        /// Stem tokens before computing ROUGE.
        #[arg(long)]
        stem: bool,
        #[arg(long)]
        json: bool,
    },
    /// Print the omission report of one encounter.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        encounter: String,
        #[arg(long)]
        json: bool,
    },
    /// Print the JSON Schemas of all artifacts.
    Schema,
}

static CANCEL: AtomicBool = AtomicBool::new(false);

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run {
            config,
            corpus,
            out,
            mode,
            cassette,
            encounter,
            force,
            workers,
            split,
            json,
        } => cmd_run(RunArgs {
            config,
            corpus,
            out,
            mode,
            cassette,
            encounter,
            force,
            workers,
            split,
            json,
        }),
        Command::Score {
            out,
            uniqueness,
            write,
            json,
        } => cmd_score(&out, uniqueness, write, json),
        Command::Compare {
            outs,
            metric_csvs,
            stem,
            json,
        } => compare::cmd_compare(&outs, &metric_csvs, stem, json),
        Command::Report {
            out,
            encounter,
            json,
        } => report::cmd_report(&out, &encounter, json),
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&artifact_schemas())?);
            Ok(EXIT_OK)
        }
    }
}

struct RunArgs {
    config: PathBuf,
    corpus: PathBuf,
    out: PathBuf,
    mode: Option<ModeArg>,
    cassette: Option<PathBuf>,
    encounter: Vec<String>,
    force: bool,
    workers: Option<usize>,
    split: SplitArg,
    json: bool,
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let config = Config::load(&args.config)?;
    let mode: Mode = args
        .mode
        .map(Mode::from)
        .or(config.mode)
        .unwrap_or(Mode::Replay);
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let corpus = load_corpus(&args.corpus, FormatAdapter::for_path(&args.corpus)?, split)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    let gateway = config.build_gateway(mode, args.cassette.as_deref())?;
    let pipeline = config.pipeline_config()?;

    ctrlc::set_handler(|| {
        eprintln!("interrupt: finishing in-flight encounters, skipping the rest");
        CANCEL.store(true, Ordering::SeqCst);
    })
    .context("installing signal handler")?;

    let mode_label = match mode {
        Mode::Live => "live",
        Mode::Record => "record",
        Mode::Replay => "replay",
    };
    let options = RunOptions {
        workers: args.workers.unwrap_or(config.workers),
        force: args.force,
        only: (!args.encounter.is_empty()).then(|| args.encounter.clone()),
        mode_label: mode_label.to_string(),
        // As written, not resolved, so manifests do not embed machine paths.
        cassette_label: args
            .cassette
            .as_ref()
            .or(config.gateway.cassette.as_ref())
            .filter(|_| mode != Mode::Live)
            .map(|p| p.display().to_string()),
        config_snapshot: config.snapshot(),
        timestamps: mode != Mode::Replay,
    };
    let layout = OutputLayout::new(&args.out);
    let manifest = run_corpus(&corpus, &gateway, &pipeline, &layout, &options, &CANCEL)?;
    if let (Mode::Record, Some(cassette)) = (mode, gateway.cassette()) {
        cassette.compact()?;
    }

    let reports = load_reports(&layout, &manifest)?;
    let stats = RunStats::from_reports(&manifest, &reports);
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "run_id": manifest.run_id,
                "stats": stats,
            }))?
        );
    } else {
        println!("run {} ({})", manifest.run_id, manifest.mode);
        print!("{}", stats.render_text());
        for e in &manifest.encounters {
            if e.status == EncounterStatus::Failed {
                println!(
                    "failed {}: {}",
                    e.encounter_id,
                    e.detail.as_deref().unwrap_or("")
                );
            }
        }
    }

    let skipped = manifest
        .encounters
        .iter()
        .any(|e| e.status == EncounterStatus::Skipped && e.detail.as_deref() != Some(NOT_SELECTED));
    Ok(if stats.failed > 0 {
        EXIT_FAILURE
    } else if skipped {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    })
}

fn cmd_score(out: &Path, scope: ScopeArg, write: bool, json: bool) -> Result<u8> {
    let scope = match scope {
        ScopeArg::All => UniquenessScope::AllPolarities,
        ScopeArg::SupportingOnly => UniquenessScope::SupportingOnly,
    };
    let layout = OutputLayout::new(out);
    let manifest = read_manifest(&layout)?;
    let mut reports = Vec::new();
    for e in manifest
        .encounters
        .iter()
        .filter(|e| e.status == EncounterStatus::Ok)
    {
        let dir = layout.encounter(&e.encounter_id);
        let report =
            rescore(&dir, scope).with_context(|| format!("re-scoring {}", e.encounter_id))?;
        if write {
            dir.write(omission_core::dataset::artifacts::REPORT, &report)?;
        }
        reports.push(report);
    }
    if reports.is_empty() {
        bail!("no completed encounters in {}", out.display());
    }
    let stats = RunStats::from_reports(&manifest, &reports);
    if json {
        let rows: Vec<_> = reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "encounter_id": r.encounter_id,
                    "omission_count": r.omission_count,
                    "cumulative_weight": r.cumulative_weight,
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(
                &serde_json::json!({ "encounters": rows, "stats": stats })
            )?
        );
    } else {
        for r in &reports {
            println!(
                "{:<16} count {:>3}  weight {}",
                r.encounter_id,
                r.omission_count,
                report::fmt_score(r.cumulative_weight)
            );
        }
        print!("{}", stats.render_text());
    }
    Ok(EXIT_OK)
}
