use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use echo_cgc::config::{ConfigError, RunConfig, SweepAxis};
use echo_cgc::runner::{self, Experiment, RunError};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "echo-cgc",
    version,
    about = "Echo-CGC simulator and analysis tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the convergence and communication constants of a configuration.
    Theory(Common),
    /// Simulate the protocol and write per-round metrics.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Evaluate the communication bound over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Grid bounds as START:END.
        #[arg(long, value_parser = parse_range)]
        range: Option<(f64, f64)>,
        #[arg(long)]
        points: Option<usize>,
        /// Also measure the ratio with fault-free simulations.
        #[arg(long)]
        empirical: bool,
        #[arg(long)]
        replicas: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with status 3 unless every convergence condition holds.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AxisArg {
    Sigma,
    #[value(name = "mu_over_L", alias = "mu_over_l")]
    MuOverL,
    X,
    N,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Sigma => SweepAxis::Sigma,
            AxisArg::MuOverL => SweepAxis::MuOverL,
            AxisArg::X => SweepAxis::X,
            AxisArg::N => SweepAxis::N,
        }
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

enum Failure {
    Config(String),
    Infeasible(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(ConfigError::Io { .. }) => Failure::Runtime(e.to_string()),
            RunError::Config(_) | RunError::Theory(_) | RunError::Cost(_) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::from(RunError::from(e)))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn check_feasibility(
    report: &echo_cgc::theory::FeasibilityReport,
    strict: bool,
) -> Result<(), Failure> {
    if report.all_passed() {
        return Ok(());
    }
    let failed: Vec<String> = report
        .failures()
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if strict {
        return Err(Failure::Infeasible(failed.join("; ")));
    }
    for line in failed {
        eprintln!("warning: convergence condition fails: {line}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Theory(common) => {
            let config = load(&common)?;
            let report = runner::theory_report(&config)?;
            check_feasibility(&report.feasibility, common.strict)?;
            runner::write_theory_csv(output(&common.out)?, &report)?;
        }
        Command::Converge {
            common,
            replicas,
            rounds,
        } => {
            let mut config = load(&common)?;
            config.replicas = replicas.unwrap_or(config.replicas);
            config.rounds = rounds.unwrap_or(config.rounds);
            if common.strict {
                check_feasibility(&runner::theory_report(&config)?.feasibility, true)?;
            }
            let exp = Experiment::new(&config)?;
            check_feasibility(&exp.feasibility(), common.strict)?;
            let runs = exp.run_all()?;
            runner::write_converge_csv(output(&common.out)?, &runs)?;
        }
        Command::Sweep {
            common,
            axis,
            range,
            points,
            empirical,
            replicas,
        } => {
            let mut config = load(&common)?;
            if let Some(axis) = axis {
                config.sweep.axis = axis.into();
            }
            if let Some((start, end)) = range {
                config.sweep.start = start;
                config.sweep.end = end;
            }
            config.sweep.points = points.unwrap_or(config.sweep.points);
            config.replicas = replicas.unwrap_or(config.replicas);
            if common.strict {
                let report = runner::theory_report(&config)?;
                check_feasibility(&report.feasibility, true)?;
            }
            let rows = runner::sweep(&config, empirical)?;
            runner::write_sweep_csv(output(&common.out)?, config.sweep.axis, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Infeasible(msg)) => {
            eprintln!("error: infeasible configuration: {msg}");
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
