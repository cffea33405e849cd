//! Command-line driver: dataset conversion, chain runs, reports and
//! inspection of run directories.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use codechain_core::chain::RoundSelection;
use codechain_core::eval::FilterKind;
use codechain_core::task::{SourceFormat, Split};
use codechain_cli::{inspect, report, run};

#[derive(Parser)]
#[command(name = "codechain", version, about = "Sample programs, cluster their helper functions and feed the centroids back for revision")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Convert an APPS or CodeContests dump into the canonical task layout.
    Convert {
        #[arg(long, value_parser = clap::value_parser!(SourceFormat))]
        format: SourceFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Dataset name recorded in the manifest.
        #[arg(long)]
        name: Option<String>,
    },
    /// Run the revision chain over every task of a dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory in the canonical task layout.
        #[arg(long)]
        dataset: PathBuf,
        /// Run directory; must be empty unless --resume is given.
        #[arg(long)]
        out: PathBuf,
        /// Continue an interrupted run, keeping every stored round.
        #[arg(long)]
        resume: bool,
        /// Worker threads for chains and executions.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Only these task ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
    },
    /// Aggregate pass@k tables from a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// k values, e.g. 1,5 [default: from the run config, else 1,5].
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Filters: none, naive, largest_cluster, consensus [default: all].
        #[arg(long, value_delimiter = ',')]
        filter: Option<Vec<FilterKind>>,
        /// public_proxy or fixed_round=<n> [default: from the run config].
        #[arg(long)]
        round_selection: Option<RoundSelection>,
    },
    /// Show clustering and feedback selection per round.
    InspectClusters {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        round: Option<usize>,
    },
    /// Print the rendered prompts of a task.
    InspectPrompts {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long)]
        round: Option<usize>,
    },
    /// Run code and sub-module extraction on a raw completion file.
    InspectSubmodules { file: PathBuf },
    /// Generate synthetic tests for a finished run and execute every
    /// round's candidates on them.
    GenTests {
        #[arg(long)]
        run: PathBuf,
        /// Config to take providers from [default: the run's copy].
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Convert {
            format,
            input,
            output,
            split,
            name,
        } => run::cmd_convert(format, &input, &output, split, name.as_deref()),
        Command::Run {
            config,
            dataset,
            out,
            resume,
            jobs,
            split,
            tasks,
        } => run::cmd_run(&run::RunArgs {
            config: &config,
            dataset: &dataset,
            out: &out,
            resume,
            jobs: jobs.max(1),
            split,
            tasks: &tasks,
        }),
        Command::Report {
            run,
            k,
            filter,
            round_selection,
        } => report::cmd_report(&report::ReportArgs {
            run_dir: &run,
            ks: k,
            filters: filter,
            selection: round_selection,
        }),
        Command::InspectClusters { run, task, round } => {
            print!("{}", inspect::clusters_text(&run, &task, round)?);
            Ok(())
        }
        Command::InspectPrompts { run, task, round } => {
            print!("{}", inspect::prompts_text(&run, &task, round)?);
            Ok(())
        }
        Command::InspectSubmodules { file } => {
            println!("{}", inspect::submodules_json(&file)?);
            Ok(())
        }
        Command::GenTests { run, config, jobs } => run::cmd_gen_tests(&run, config.as_deref(), jobs.max(1)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
