use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memscope::classify::MatchMode;
use memscope::corpus::DatasetKind;
use memscope::report::{self, CommandError, RunConfig};

#[derive(Parser)]
#[command(
    name = "memscope",
    version,
    about = "Memorized vs non-memorized analysis over inference traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file against the record schema.
    ValidateDataset(Common),
    /// Build the prompt file consumed by the trace extractor.
    Prompts(Common),
    /// Label a trace file as memorized / non-memorized.
    Classify(Common),
    /// Run analyses over labeled traces.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of length, prob, split, acc_prob, pca,
        /// reversal, ablation, or `all`.
        #[arg(long, default_value = "all")]
        which: String,
    },
    /// Validate, build prompts, classify and analyze in one go.
    ReportAll(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    kind: Option<DatasetKind>,
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Trace file; repeat for multi-run accuracy/probability summaries.
    #[arg(long)]
    traces: Vec<PathBuf>,
    /// Trace of child questions asked after their parent question.
    #[arg(long)]
    context_traces: Option<PathBuf>,
    #[arg(long, default_value = "prefix")]
    mode: MatchMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = report::DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl From<Common> for RunConfig {
    fn from(c: Common) -> Self {
        RunConfig {
            dataset: c.dataset,
            kind: c.kind,
            exemplars: c.exemplars,
            traces: c.traces,
            context_traces: c.context_traces,
            mode: c.mode,
            out: c.out,
            seed: c.seed,
            n_repeats: c.repeats,
        }
    }
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::ValidateDataset(c) => {
            let report = report::cmd_validate_dataset(&c.into())?;
            println!("{} records valid", report.total);
        }
        Command::Prompts(c) => {
            for path in report::cmd_prompts(&c.into())? {
                println!("{}", path.display());
            }
        }
        Command::Classify(c) => {
            let manifest = report::cmd_classify(&c.into())?;
            println!(
                "memorized {} / non-memorized {}",
                manifest.counts.memorized, manifest.counts.non_memorized
            );
        }
        Command::Analyze { common, which } => {
            let which = report::parse_analyses(&which)?;
            for path in report::cmd_analyze(&common.into(), &which)? {
                println!("{}", path.display());
            }
        }
        Command::ReportAll(c) => {
            for path in report::cmd_report_all(&c.into())? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
