use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use bellbet::chsh::Side;
use bellbet::net::DEFAULT_TIMEOUT;
use bellbet::referee::{ClaimantSpec, ProtocolMode};
use bellbet::strategies::StrategySpec;
use bellbet_cli::config::Angles;
use bellbet_cli::{
    cmd_analyze, cmd_design, cmd_run, cmd_serve, cmd_station, cmd_validate, AutoOr, CommandError, ConfigError,
    DesignInput, ExperimentConfig, EXIT_OK,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bellbet", version, about = "Referee for the sequential CHSH bet")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment in this process.
    Run(RunArgs),
    /// Find the smallest number of trials meeting a target error.
    Design(DesignArgs),
    /// Recompute counts, statistic, bounds and verdict from a log.
    Analyze {
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Check that a log is complete and holds only bits.
    Validate {
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Referee a run with two remote stations.
    Serve(ServeArgs),
    /// Run one station against a remote referee.
    Station(StationArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment file; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Log file; the report goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Play a built-in strategy instead of the configured side.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    disable_locality_enforcement: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DesignArgs {
    /// `optimal`, `aspect`, or four comma-separated angles such as `pi/8,3pi/8,-pi/4,0`.
    #[arg(long, default_value = "optimal", conflicts_with = "mu", allow_hyphen_values = true)]
    angles: String,
    /// Expected statistic per trial under quantum mechanics.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    target_error: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Address to listen on; port 0 picks a free port and prints it.
    #[arg(long, default_value = "127.0.0.1:0")]
    endpoint: String,
    /// Write the frame journal here.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs_f64())]
    timeout_secs: f64,
}

#[derive(Args)]
struct StationArgs {
    #[arg(long, value_enum)]
    role: RoleArg,
    #[arg(long)]
    endpoint: String,
    /// Refuse to run any other strategy.
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    ClonedSource,
    Batch,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Left,
    Right,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CommandError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.n {
            cfg.n = AutoOr::Value(n);
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::Sequential => ProtocolMode::Sequential,
                ModeArg::ClonedSource => ProtocolMode::ClonedSource,
                ModeArg::Batch => ProtocolMode::Batch,
            };
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(s) = &self.strategy {
            cfg.side = ClaimantSpec::Strategy(StrategySpec::named(s));
        }
        if self.disable_locality_enforcement {
            cfg.locality_enforced = false;
        }
        Ok(cfg)
    }
}

fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

fn run(cli: Cli) -> Result<i32, CommandError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.experiment.resolve()?;
            if args.experiment.print_config {
                emit(&cfg.to_toml());
                return Ok(EXIT_OK);
            }
            let done = cmd_run(&cfg)?;
            emit(&if args.json { done.report.to_json() } else { done.report.to_string() });
            Ok(done.exit_code())
        }
        Command::Design(args) => {
            let input = match args.mu {
                Some(mu) => DesignInput::Mean(mu),
                None => DesignInput::Angles(Angles::from_arg(&args.angles)?.resolve()?),
            };
            let d = cmd_design(input, args.target_error)?;
            emit(&if args.json {
                serde_json::to_string_pretty(&d).expect("design serializes") + "\n"
            } else {
                d.to_string()
            });
            Ok(EXIT_OK)
        }
        Command::Analyze { log, json } => {
            let r = cmd_analyze(&log)?;
            emit(&if json { r.to_json() } else { r.to_string() });
            Ok(if r.replay.is_ok() { EXIT_OK } else { bellbet_cli::EXIT_VALIDATION })
        }
        Command::Validate { log, json } => {
            let v = cmd_validate(&log)?;
            emit(&if json {
                serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
            } else {
                v.to_string()
            });
            Ok(v.exit_code())
        }
        Command::Serve(args) => {
            let cfg = args.experiment.resolve()?;
            if args.experiment.print_config {
                emit(&cfg.to_toml());
                return Ok(EXIT_OK);
            }
            let timeout = Duration::try_from_secs_f64(args.timeout_secs)
                .ok()
                .filter(|t| !t.is_zero())
                .ok_or_else(|| ConfigError::Invalid(format!("bad timeout {}", args.timeout_secs)))?;
            let done = cmd_serve(&cfg, &args.endpoint, timeout, args.transcript.as_deref(), |addr| {
                emit(&format!("listening on {addr}\n"));
            })?;
            emit(&done.run.report.to_string());
            Ok(done.run.exit_code())
        }
        Command::Station(args) => {
            let role = match args.role {
                RoleArg::Left => Side::Left,
                RoleArg::Right => Side::Right,
            };
            let r = cmd_station(role, args.strategy.as_deref(), &args.endpoint)?;
            emit(&format!("{:?} station finished {} trials\n", r.role, r.trials));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("bellbet: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
