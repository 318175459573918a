mod demos;
mod descriptors;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};
use unimeas::basis::BasicFunction;

use descriptors::MeasureDesc;

#[derive(Parser)]
#[command(name = "unimeas", version, about = "Exact measure oracles and randomness-test demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a basic function against a measure.
    Integrate(Common),
    /// Run a built-in demonstration.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(demos::DEMOS))]
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON file with descriptors.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output precision: intervals have width at most 2^-k.
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=40))]
    k: Option<u32>,
    /// Stages, levels or prefix length examined, depending on the demo.
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Search budget for kurtz, sample count for xi-sample.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    budget: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed descriptors.
    Usage(String),
    /// A computation or certificate failed.
    Failed(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegrateConfig {
    measure: MeasureDesc,
    function: String,
}

fn read_config(path: Option<&Path>) -> Result<Value, CliError> {
    let Some(path) = path else { return Ok(Value::Null) };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn integrate(c: &Common) -> Result<(Value, Option<String>), CliError> {
    let raw = read_config(c.config.as_deref())?;
    if raw.is_null() {
        return Err(CliError::Usage("integrate needs --config".into()));
    }
    let cfg: IntegrateConfig = serde_json::from_value(raw).map_err(|e| CliError::Usage(format!("bad integrate config: {e}")))?;
    let mu = cfg.measure.build().map_err(CliError::Usage)?;
    let f: BasicFunction = cfg.function.parse().map_err(|e| CliError::Usage(format!("bad function: {e}")))?;
    f.check(mu.space()).map_err(|e| CliError::Usage(format!("bad function: {e}")))?;
    let k = c.k.unwrap_or(16);
    let integral = mu.integrate(&f, k).map_err(|e| CliError::Failed(e.to_string()))?;
    Ok((json!({"integral": integral, "k": k}), None))
}

fn emit(out: Option<&Path>, report: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Failed(e.to_string())),
    }
}

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    let (common, result) = match &cli.command {
        Command::Integrate(c) => (c, integrate(c)),
        Command::Demo { name, common: c } => {
            let ctx = demos::Ctx {
                k: c.k.unwrap_or(10),
                depth: c.depth,
                seed: c.seed,
                budget: c.budget.map(|b| b as usize),
                config: read_config(c.config.as_deref())?,
            };
            (c, demos::run(name, &ctx))
        }
    };
    let (report, failure) = result?;
    emit(common.out.as_deref(), &report)?;
    Ok(failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("certificate failed: {failure}");
            ExitCode::from(1)
        }
        Err(CliError::Failed(e)) => {
            eprintln!("certificate failed: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
