use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commbatt::commands::{self, parse_range, Run};
use commbatt::config::ScenarioConfig;
use commbatt::{CliError, CliResult};

/// Community battery simulator with behavioural end users.
///
/// Log verbosity follows the COMMBATT_LOG environment variable
/// (`error`, `warn`, `info`, `debug`, `trace`; default `warn`).
#[derive(Parser, Debug)]
#[command(name = "commbatt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// la, la+ti or la+ti+br; overrides `[run] mode`.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `[run] out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit randomness models and write their statistics, ACF and covariance.
    FitRandomness(Common),
    /// Run the selected modes and write ledgers, reports and plot data.
    Simulate(Common),
    /// IRR over a grid of battery unit costs and credit charges.
    SweepIrr {
        #[command(flatten)]
        common: Common,
        /// Battery unit cost grid, $/kWh, as start:stop:step.
        #[arg(long, default_value = "400:1000:100")]
        capex: String,
        /// Credit charge grid, $/kWh, as start:stop:step.
        #[arg(long, default_value = "0:0.15:0.025")]
        credit: String,
    },
    /// Per-user bills with and without the scheme.
    CompareBills {
        #[command(flatten)]
        common: Common,
        /// Credit charge grid as start:stop:step; the configured charge when omitted.
        #[arg(long)]
        credit: Option<String>,
    },
    /// Load and check the input data without simulating.
    ValidateData(Common),
}

fn run_of(c: &Common) -> CliResult<Run> {
    let cfg = match &c.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    Run::new(cfg, c.mode.as_deref(), c.seed, c.out.clone())
}

fn execute(cli: Cli) -> CliResult<Vec<String>> {
    match cli.command {
        Command::FitRandomness(c) => commands::fit_randomness(&run_of(&c)?),
        Command::Simulate(c) => commands::simulate(&run_of(&c)?),
        Command::SweepIrr { common, capex, credit } => {
            let (capex, credit) = (parse_range(&capex)?, parse_range(&credit)?);
            commands::sweep_irr(&run_of(&common)?, &capex, &credit)
        }
        Command::CompareBills { common, credit } => {
            let credit = credit.as_deref().map(parse_range).transpose()?;
            commands::compare_bills_cmd(&run_of(&common)?, credit.as_deref())
        }
        Command::ValidateData(c) => commands::validate_data(&run_of(&c)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COMMBATT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("error: {err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
