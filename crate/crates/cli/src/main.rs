use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use relaylab::report::{build_report, optimal_rho_table, parse_scheme_list, regions_table, run_sweep, Config, Scheme};
use relaylab::{Effort, RelayError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "relaylab", version, about = "Rates and bounds for the two-relay Gaussian parallel relay network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Read configured powers as dB.
    #[arg(long, global = true)]
    db: bool,
    #[arg(long, global = true, value_name = "LEVEL")]
    effort: Option<Effort>,
    /// Comma separated subset of bound,df,af,cf,mac,bc.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_schemes)]
    scheme: Option<SchemeList>,
    /// Seed for `random` instances.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone)]
struct SchemeList(Vec<Scheme>);

fn parse_schemes(s: &str) -> Result<SchemeList, String> {
    parse_scheme_list(s).map(SchemeList)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Every requested scheme on one instance, as JSON.
    Report,
    /// Rates along the configured sweep, as CSV.
    Sweep,
    /// Optimal correlation magnitude over angle and SNR, as CSV.
    OptimalRho,
    /// Sampled MAC, subregion and broadcast boundary points, as CSV.
    Regions,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_CONFIG, error }
}

impl From<RelayError> for Failure {
    fn from(e: RelayError) -> Self {
        let code = if e.is_input_error() { EXIT_CONFIG } else { EXIT_NUMERIC };
        Failure { code, error: e.into() }
    }
}

fn read_config(path: Option<&Path>, db: bool, required: bool) -> Result<Config, Failure> {
    let Some(path) = path else {
        return if required {
            Err(config_err(anyhow!("--config is required for this command")))
        } else {
            Ok(Config::default())
        };
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(config_err)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut cfg: Config = serde_path_to_error::deserialize(de)
        .map_err(|e| {
            let at = e.path().to_string();
            let inner = e.into_inner();
            if at.is_empty() || at == "." {
                anyhow!("config {}: {inner}", path.display())
            } else {
                anyhow!("config {}: at `{at}`: {inner}", path.display())
            }
        })
        .map_err(config_err)?;
    if db {
        cfg.convert_db();
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure { code: 1, error: e.into() };
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(|error| Failure { code: 1, error }),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(io),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("RELAYLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_err(anyhow!("RELAYLAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure { code: 1, error: e.into() })
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let needs_instance = !matches!(cli.command, Command::OptimalRho);
    let cfg = read_config(cli.config.as_deref(), cli.db, needs_instance)?;
    let effort = cfg.effort_or(cli.effort);
    let text = match cli.command {
        Command::Report => {
            let inst = cfg.instance(cli.seed)?;
            let schemes = cfg.schemes_or(cli.scheme.as_ref().map(|s| s.0.as_slice()))?;
            let report = build_report(&inst, &schemes, effort)?;
            let mut s =
                serde_json::to_string_pretty(&report).map_err(|e| Failure { code: EXIT_NUMERIC, error: e.into() })?;
            s.push('\n');
            s
        }
        Command::Sweep => {
            let inst = cfg.instance(cli.seed)?;
            let spec = cfg.sweep.as_ref().ok_or_else(|| config_err(anyhow!("config has no `sweep` section")))?;
            let schemes = match (cli.scheme.as_ref().map(|s| s.0.as_slice()), &cfg.schemes) {
                (None, None) => spec.variable_default_schemes(),
                (flag, _) => cfg.schemes_or(flag)?,
            };
            run_sweep(&inst, spec, &schemes, effort)?.to_csv()
        }
        Command::OptimalRho => optimal_rho_table(&cfg.optimal_rho.clone().unwrap_or_default(), effort)?.to_csv(),
        Command::Regions => regions_table(&cfg.instance(cli.seed)?, effort)?.to_csv(),
    };
    emit(cli.out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
