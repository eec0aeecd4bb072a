use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snc_cli::{
    cmd_bound, cmd_simulate, cmd_sweep_flows, cmd_sweep_hops, cmd_validate, load_scenario,
    CliError, Exit, Overrides, Report,
};
use snc_core::write_results_csv;

/// End-to-end delay and backlog bounds for on-off traffic in tandem networks.
///
/// Scenario fields can be shadowed by flags; flags always win. Rows are
/// written as CSV to --out, or to stdout.
#[derive(Parser)]
#[command(name = "snc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds at the first hop count and the traffic block's N and M.
    Bound(Common),
    /// Bounds for every hop count in the scenario.
    SweepHops(Common),
    /// Bounds for every (N, M) point of the flow sweep.
    SweepFlows(Common),
    /// Empirical tails from simulation.
    Simulate(Common),
    /// Simulation checked against the analytic bounds.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Halve every bound before checking; the check should then fail.
        #[arg(long)]
        self_test: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a preset in $SNC_PRESET_DIR.
    #[arg(long)]
    scenario: String,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Violation probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    /// Hop counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    hops: Option<Vec<u32>>,
    /// Number of through flows.
    #[arg(long)]
    through: Option<u32>,
    /// Number of cross flows per hop.
    #[arg(long)]
    cross: Option<u32>,
    /// Base seed for simulation.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Suppress remarks on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            epsilon: self.epsilon.clone(),
            hops: self.hops.clone(),
            through: self.through,
            cross: self.cross,
            seed: self.seed,
        }
    }
}

fn write_rows(report: &Report, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            write_results_csv(file, &report.rows)?;
        }
        None => {
            let stdout = io::stdout();
            write_results_csv(stdout.lock(), &report.rows)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Exit, CliError> {
    let (common, self_test) = match &cli.command {
        Command::Bound(c)
        | Command::SweepHops(c)
        | Command::SweepFlows(c)
        | Command::Simulate(c) => (c, false),
        Command::Validate { common, self_test } => (common, *self_test),
    };
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let scenario = load_scenario(&common.scenario, &common.overrides())?;
    let report = match cli.command {
        Command::Bound(_) => cmd_bound(&scenario)?,
        Command::SweepHops(_) => cmd_sweep_hops(&scenario)?,
        Command::SweepFlows(_) => cmd_sweep_flows(&scenario)?,
        Command::Simulate(_) => cmd_simulate(&scenario)?,
        Command::Validate { .. } => cmd_validate(&scenario, self_test)?.0,
    };
    if !common.quiet {
        let mut err = io::stderr().lock();
        for note in &report.notes {
            let _ = writeln!(err, "{note}");
        }
    }
    write_rows(&report, common.out.as_ref())?;
    Ok(report.exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit() as u8)
        }
    }
}
