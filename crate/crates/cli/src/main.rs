//! `collider` — command-line pipeline for the collider-inference workbench.
//!
//! Subcommands cover the full loop: `tasks list` (the canonical battery),
//! `prompts generate` (render prompt bundles), `query run` (send prompts
//! over a live, replay, or mock transport), `fit cbn` / `fit sampler`
//! (least-squares model fitting per subject or condition), `analyze
//! correlate` (per-domain and pooled Spearman tables), and `report
//! figure-data` (per-task means with bootstrap intervals, grouped by
//! inference type).
//!
//! Exit codes: 0 success, 1 input error, 2 runtime error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use collider_cli::io::CliError;
use collider_cli::pipeline::{self, FitArgs, QueryRunArgs, TransportKind};
use collider_core::model::{GeneratingFunction, ParameterTying};
use collider_core::stats::Domain;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "collider", version, about = "Collider-graph causal inference workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the canonical inference tasks
    Tasks {
        #[command(subcommand)]
        command: TasksCommand,
    },
    /// Render natural-language prompts
    Prompts {
        #[command(subcommand)]
        command: PromptsCommand,
    },
    /// Query models and collect judgments
    Query {
        #[command(subcommand)]
        command: QueryCommand,
    },
    /// Fit models to judgment data
    Fit {
        #[command(subcommand)]
        command: FitCommand,
    },
    /// Compare judgment datasets
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Export plot-ready summaries
    Report {
        #[command(subcommand)]
        command: ReportCommand,
    },
}

#[derive(Subcommand)]
enum TasksCommand {
    /// Print the eleven tasks I..XI with their formal queries
    List,
}

#[derive(Subcommand)]
enum PromptsCommand {
    /// Render the domains x counterbalances x tasks prompt matrix
    Generate {
        /// Directory of vocabulary JSON files, one per domain
        #[arg(long, default_value = "fixtures/vocab")]
        vocab: PathBuf,
        /// Domains to render (default: all three)
        #[arg(long, value_delimiter = ',')]
        domains: Vec<DomainFlag>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum QueryCommand {
    /// Execute every prompt bundle once and collect judgments
    Run {
        /// Prompt bundles (JSON lines) from `prompts generate`
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long, value_enum, default_value_t = TransportFlag::Replay)]
        transport: TransportFlag,
        /// Transcript store directory (required for replay)
        #[arg(long)]
        store: Option<PathBuf>,
        /// Provider id; live transport reads {PROVIDER}_BASE_URL and
        /// {PROVIDER}_API_KEY from the environment
        #[arg(long, default_value = "openai")]
        provider: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        /// Accept prose-wrapped numbers instead of strict bare numerals
        #[arg(long)]
        lenient: bool,
        /// Bounded concurrent in-flight requests
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FitCommand {
    /// Fit the causal-Bayes-net benchmark
    Cbn(FitFlags),
    /// Fit the mutation-sampler process model (adds chain length lambda)
    Sampler(FitFlags),
}

#[derive(Args)]
struct FitFlags {
    /// Judgments CSV
    #[arg(long)]
    judgments: PathBuf,
    #[arg(long, value_enum, default_value_t = TyingFlag::ThreeParameter)]
    tying: TyingFlag,
    #[arg(long, value_enum, default_value_t = GeneratingFlag::Logistic)]
    generating: GeneratingFlag,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo chains per sampler-objective evaluation
    #[arg(long, default_value_t = 1000)]
    chains: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Spearman correlations against a baseline dataset, per domain and pooled
    Correlate {
        /// Judgments CSV being evaluated (e.g. model judgments)
        #[arg(long)]
        judgments: PathBuf,
        /// Baseline judgments CSV (e.g. human data)
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Per-task means with bootstrapped 95% intervals, split by task group
    FigureData {
        #[arg(long)]
        judgments: PathBuf,
        /// Bootstrap replicates
        #[arg(long, default_value_t = 2000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportFlag {
    Live,
    Replay,
    Mock,
}

impl From<TransportFlag> for TransportKind {
    fn from(value: TransportFlag) -> Self {
        match value {
            TransportFlag::Live => TransportKind::Live,
            TransportFlag::Replay => TransportKind::Replay,
            TransportFlag::Mock => TransportKind::Mock,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TyingFlag {
    /// Shared prior and shared causal strength
    #[value(name = "3p")]
    ThreeParameter,
    /// Shared prior, separate causal strengths
    #[value(name = "4p")]
    FourParameter,
    /// Separate priors per cause, shared strength
    #[value(name = "freeprior")]
    FreePrior,
}

impl From<TyingFlag> for ParameterTying {
    fn from(value: TyingFlag) -> Self {
        match value {
            TyingFlag::ThreeParameter => ParameterTying::SharedPriorSharedStrength,
            TyingFlag::FourParameter => ParameterTying::SharedPriorFreeStrength,
            TyingFlag::FreePrior => ParameterTying::FreePriorSharedStrength,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratingFlag {
    Logistic,
    Noisyor,
}

impl From<GeneratingFlag> for GeneratingFunction {
    fn from(value: GeneratingFlag) -> Self {
        match value {
            GeneratingFlag::Logistic => GeneratingFunction::Logistic,
            GeneratingFlag::Noisyor => GeneratingFunction::NoisyOr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainFlag {
    Economy,
    Sociology,
    Weather,
}

impl From<DomainFlag> for Domain {
    fn from(value: DomainFlag) -> Self {
        match value {
            DomainFlag::Economy => Domain::Economy,
            DomainFlag::Sociology => Domain::Sociology,
            DomainFlag::Weather => Domain::Weather,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Tasks { command: TasksCommand::List } => {
            print!("{}", pipeline::tasks_list());
            Ok(())
        }
        Command::Prompts {
            command: PromptsCommand::Generate { vocab, domains, out },
        } => {
            let domains: Vec<Domain> = if domains.is_empty() {
                Domain::ALL.to_vec()
            } else {
                domains.into_iter().map(Domain::from).collect()
            };
            pipeline::prompts_generate(&vocab, &domains, &out)
        }
        Command::Query {
            command:
                QueryCommand::Run {
                    bundles,
                    transport,
                    store,
                    provider,
                    model,
                    temperature,
                    lenient,
                    concurrency,
                    seed,
                    out,
                },
        } => pipeline::query_run(&QueryRunArgs {
            bundles,
            transport: transport.into(),
            store,
            provider,
            model,
            temperature,
            lenient,
            concurrency,
            seed,
            out,
        }),
        Command::Fit { command } => {
            let (family, flags) = match command {
                FitCommand::Cbn(flags) => (collider_core::fit::ModelFamily::Cbn, flags),
                FitCommand::Sampler(flags) => {
                    (collider_core::fit::ModelFamily::MutationSampler, flags)
                }
            };
            pipeline::fit(
                family,
                &FitArgs {
                    judgments: flags.judgments,
                    tying: flags.tying.into(),
                    generating: flags.generating.into(),
                    seed: flags.seed,
                    chains: flags.chains,
                    out: flags.out,
                },
            )
        }
        Command::Analyze {
            command: AnalyzeCommand::Correlate { judgments, baseline, out },
        } => pipeline::analyze_correlate(&judgments, &baseline, &out),
        Command::Report {
            command: ReportCommand::FigureData { judgments, bootstrap, seed, out },
        } => pipeline::report_figure_data(&judgments, bootstrap, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
