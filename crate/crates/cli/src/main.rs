use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use zonekit_core::pipeline::{Engine, PipelineConfig};
use zonekit_core::report::CompareTable;
use zonekit_core::scenario::{self, RunOptions, Scenario, ScenarioError};
use zonekit_core::wire;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "zonekit", version, about = "Run zone-layout scenarios and compare assignment engines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Pipeline config (TOML or JSON) replacing the scenario's.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Leave wall-clock times out of the report.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relevance, assignment, sizing and accept-all on one scenario.
    Run {
        scenario: PathBuf,
        #[arg(long, value_parser = parse_engine)]
        engine: Option<Engine>,
        #[command(flatten)]
        common: Common,
    },
    /// Engine costs and regret against the oracle on random instances.
    Compare {
        scenario: PathBuf,
        /// Comma-separated engines.
        #[arg(long, value_delimiter = ',', value_parser = parse_engine, default_value = "greedy,oracle")]
        engines: Vec<Engine>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse()
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: PipelineConfig = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        wire::parse_body(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    config.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(config)
}

fn emit(common: &Common, text: String) -> Result<()> {
    match &common.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Usage and I/O problems exit 2, pipeline failures exit 1.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn classify(e: ScenarioError) -> Failure {
    Failure { code: if e.is_usage() { 2 } else { 1 }, error: e.into() }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, engine, common } => {
            let loaded = Scenario::load(&scenario).map_err(classify)?;
            let config = common.config.as_deref().map(load_config).transpose().map_err(usage)?;
            let opts = RunOptions { engine, seed: common.seed, config, timing: !common.no_timing };
            log::info!("running {} with engine {}", loaded.name, engine.unwrap_or(loaded.scenario.engine));
            let report = scenario::run(&loaded, &opts).map_err(classify)?;
            let text = match common.format {
                Format::Text => report.to_text(),
                Format::Json => wire::encode(&report, None).map_err(|e| usage(e.into()))? + "\n",
                Format::Csv => report.to_csv(),
            };
            emit(&common, text).map_err(usage)
        }
        Command::Compare { scenario, engines, trials, common } => {
            let loaded = Scenario::load(&scenario).map_err(classify)?;
            let config = match common.config.as_deref() {
                Some(p) => load_config(p).map_err(usage)?,
                None => loaded.scenario.config.clone(),
            };
            let needs_provider = engines.iter().any(|e| e.uses_provider());
            let provider = if needs_provider {
                let engine = if engines.contains(&Engine::Llm) { Engine::Llm } else { Engine::Mock };
                Some(loaded.provider(engine).map_err(classify)?)
            } else {
                None
            };
            let seed = common.seed.unwrap_or(loaded.scenario.seed);
            log::info!("comparing {engines:?} over {trials} trials, seed {seed}");
            let table: CompareTable =
                scenario::compare(&engines, trials, seed, &config, provider.as_deref(), !common.no_timing).map_err(classify)?;
            let text = match common.format {
                Format::Text => table.to_text(),
                Format::Json => wire::encode(&table, None).map_err(|e| usage(e.into()))? + "\n",
                Format::Csv => table.to_csv(),
            };
            emit(&common, text).map_err(usage)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn }).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
