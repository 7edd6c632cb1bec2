use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use primeineq_cli::config::ProblemConfig;
use primeineq_cli::{commands, envelope, CliError, Outcome};

#[derive(Parser, Debug)]
#[command(name = "primeineq", version, about = "Prime solutions of linear inequalities: predictions, exact counts and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML problem configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (default: machine parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// write the JSON report here ("-" for stdout)
    #[arg(long, global = true)]
    json: Option<String>,
    #[arg(long, global = true)]
    csv: Option<String>,
    /// refusal threshold on estimated enumeration work
    #[arg(long, global = true)]
    budget: Option<f64>,
    #[arg(long = "W", global = true)]
    w: Option<u64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    pcut: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// check rank, dual degeneracy and rational dimension
    Validate,
    /// predicted number of prime solutions
    Predict,
    /// exact count of prime solutions
    Count,
    /// predictions against exact counts across the N list
    Compare,
    /// Gowers norm decay of Lambda' against its local model
    Gowers,
    /// major arc, minor arc and mean value diagnostics
    Circle,
    /// per-prime local factors and singular series
    Localfactors,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Predict => "predict",
            Command::Count => "count",
            Command::Compare => "compare",
            Command::Gowers => "gowers",
            Command::Circle => "circle",
            Command::Localfactors => "localfactors",
        }
    }
}

fn load(cli: &Cli) -> Result<ProblemConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Parse { line: 0, column: 0, message: "--config is required".into() })?;
    let src = std::fs::read_to_string(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    let mut cfg = ProblemConfig::parse(&src)?;
    if let Some(x) = cli.seed {
        cfg.quad.seed = x;
    }
    if let Some(x) = cli.workers {
        cfg.run.workers = x;
    }
    if let Some(x) = &cli.json {
        cfg.output.json = Some(x.clone());
    }
    if let Some(x) = &cli.csv {
        cfg.output.csv = Some(x.clone());
    }
    if let Some(x) = cli.budget {
        cfg.run.budget = x;
    }
    if let Some(x) = cli.w {
        cfg.sieve.w = x;
    }
    if let Some(x) = cli.gamma {
        cfg.sieve.gamma = x;
    }
    if let Some(x) = cli.eta {
        cfg.sieve.eta = x;
    }
    if let Some(x) = cli.pcut {
        cfg.local.p_cut = x;
    }
    // flag values go through the same range checks as the document
    ProblemConfig::parse(&cfg.emit())
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let cfg = load(cli)?;
    let workers = if cfg.run.workers == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { cfg.run.workers };
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().map_err(|e| CliError::Other(e.to_string()))?;
    let t0 = Instant::now();
    let outcome: Outcome = match cli.command {
        Command::Validate => commands::validate(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Count => commands::count(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Gowers => commands::gowers(&cfg),
        Command::Circle => commands::circle(&cfg),
        Command::Localfactors => commands::localfactors(&cfg),
    }?;
    let report = envelope(cli.command.name(), &cfg, &outcome, t0.elapsed().as_secs_f64(), workers);
    let text = serde_json::to_string_pretty(&report).expect("serialisable") + "\n";
    match cfg.output.json.as_deref() {
        Some("-") => {
            eprint!("{}", outcome.summary);
            print!("{text}");
        }
        Some(path) => {
            std::fs::write(path, text)?;
            print!("{}", outcome.summary);
        }
        None => print!("{}", outcome.summary),
    }
    if let (Some(path), Some(csv)) = (cfg.output.csv.as_deref(), &outcome.csv) {
        std::fs::write(path, csv.render())?;
    }
    Ok(outcome.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
