use clap::{Parser, Subcommand};
use htq::harness::{analyze_chain_file, run_sweep, verify, ExperimentConfig, HarnessError, Level, ModelKind};
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_INVARIANT: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Heavy-traffic analysis of queues with Markov-modulated arrivals.
#[derive(Parser)]
#[command(name = "htq", version, arg_required_else_help = true)]
struct Cli {
    /// Print the full default config (all fields explicit) for a model and exit.
    #[arg(long, value_name = "MODEL", num_args = 0..=1, default_missing_value = "ssq")]
    print_config: Option<ModelKind>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary law, rate, autocovariances, σ² and mixing envelope of a chain file.
    AnalyzeChain { chain: PathBuf },
    /// Single-server sweep over the ε grid.
    SsqSweep(SweepArgs),
    /// Input-queued switch sweep over the ε grid.
    SwitchSweep(SweepArgs),
    /// Run the invariant suite; `--full` adds the simulation acceptance checks.
    Verify {
        #[arg(long)]
        full: bool,
    },
}

#[derive(clap::Args)]
struct SweepArgs {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Writes to stdout; a closed pipe (`htq ... | head`) is not an error.
fn emit(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_INVARIANT })
}

fn sweep(model: ModelKind, args: SweepArgs) -> ExitCode {
    let mut config = match &args.config {
        Some(path) => match ExperimentConfig::read_for(path, model) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => ExperimentConfig::default_for(model),
    };
    if config.model != model {
        let e = HarnessError::ConfigInvalid {
            field: "model".into(),
            message: format!("config is for `{:?}` but this subcommand runs `{model:?}`", config.model).to_lowercase(),
        };
        return fail(&e);
    }
    if let Some(out) = args.out {
        config.output = Some(out);
    }
    // Fail on an unwritable path before spending the run.
    if let Some(path) = &config.output {
        if let Err(e) = File::create(path) {
            return fail(&HarnessError::Io(format!("{}: {e}", path.display())));
        }
    }
    match run_sweep(&config) {
        Ok(outcome) => {
            let summary = outcome.summary();
            emit(summary);
            if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVARIANT)
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(model) = cli.print_config {
        emit(ExperimentConfig::default_for(model).to_json());
        return ExitCode::SUCCESS;
    }
    match cli.command {
        None => ExitCode::SUCCESS,
        Some(Command::AnalyzeChain { chain }) => match analyze_chain_file(&chain) {
            Ok(a) => {
                emit(&a);
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Some(Command::SsqSweep(args)) => sweep(ModelKind::Ssq, args),
        Some(Command::SwitchSweep(args)) => sweep(ModelKind::Switch, args),
        Some(Command::Verify { full }) => {
            let report = verify(if full { Level::Full } else { Level::Fast });
            emit(&report);
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVARIANT)
            }
        }
    }
}
