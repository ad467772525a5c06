//! Scenario files, headless runs and engine comparison.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::pipeline::{run_engine, Engine, PipelineConfig, PipelineError};
use crate::recommender::{
    validate_catalog, AppDescriptor, FixtureFile, Goal, HttpProvider, HttpProviderConfig, MockProvider, Provider,
};
use crate::report::{CompareRow, CompareTable, Report};
use crate::sizing::Readability;
use crate::synth::random_instance;
use crate::telemetry::{InteractionEvent, TelemetryLog};
use crate::wire::{self, WireError};
use crate::workspace::{Resolution, WorkspaceError, WorkspaceInit, WorkspaceState};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: WireError },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl ScenarioError {
    /// Usage and I/O problems as opposed to pipeline failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, ScenarioError::Io { .. } | ScenarioError::Parse { .. } | ScenarioError::Invalid(_))
    }
}

/// Where provider answers come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderSpec {
    /// Goal-keyed fixtures; the bundled table when `fixtures` is absent.
    Mock {
        #[serde(default)]
        fixtures: Option<String>,
    },
    Http(HttpProviderConfig),
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Mock { fixtures: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub workspace: WorkspaceInit,
    pub goal: String,
    /// Replaces the workspace catalog.
    #[serde(default)]
    pub catalog: Option<Vec<AppDescriptor>>,
    /// NDJSON telemetry, relative to the scenario file.
    #[serde(default)]
    pub telemetry: Option<String>,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: PipelineConfig,
    #[serde(default)]
    pub provider: Option<ProviderSpec>,
}

/// A validated scenario with its side files loaded.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub name: String,
    pub dir: PathBuf,
    pub events: Vec<InteractionEvent>,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_owned(), source })
}

impl Scenario {
    /// Reads a scenario document, bare or inside a wire envelope.
    pub fn load(path: &Path) -> Result<LoadedScenario, ScenarioError> {
        let text = read(path)?;
        let parse = |source| ScenarioError::Parse { path: path.to_owned(), source };
        let scenario: Scenario = match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(v) if v.get("schema_version").is_some() => wire::WireEnvelope::parse(&text).and_then(|e| e.decode()).map_err(parse)?,
            _ => wire::parse_body(&text).map_err(parse)?,
        };
        let dir = path.parent().map(Path::to_owned).unwrap_or_default();
        let name = scenario
            .name
            .clone()
            .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into()));
        let events = match &scenario.telemetry {
            Some(rel) => {
                let p = dir.join(rel);
                let f = std::fs::File::open(&p).map_err(|source| ScenarioError::Io { path: p.clone(), source })?;
                TelemetryLog::read_ndjson(std::io::BufReader::new(f))
                    .map_err(|e| ScenarioError::Invalid(format!("{}: {e}", p.display())))?
                    .events()
                    .to_vec()
            }
            None => vec![],
        };
        let loaded = LoadedScenario { scenario, name, dir, events };
        loaded.validate()?;
        Ok(loaded)
    }
}

impl LoadedScenario {
    pub fn from_scenario(scenario: Scenario, name: &str) -> Result<Self, ScenarioError> {
        let s = Self { scenario, name: name.to_owned(), dir: PathBuf::new(), events: vec![] };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let s = &self.scenario;
        Goal::typed(s.goal.clone()).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if let Some(c) = &s.catalog {
            validate_catalog(c).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        s.config.validate()?;
        if let Some(ProviderSpec::Mock { fixtures: Some(f) }) = &s.provider {
            let p = self.dir.join(f);
            if !p.is_file() {
                return Err(ScenarioError::Invalid(format!("fixture file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn init(&self) -> WorkspaceInit {
        let mut init = self.scenario.workspace.clone();
        if let Some(c) = &self.scenario.catalog {
            init.catalog = Some(c.clone());
        }
        init
    }

    /// Builds the provider the scenario asks for. Engine `llm` needs an
    /// HTTP provider from the scenario or the environment.
    pub fn provider(&self, engine: Engine) -> Result<Box<dyn Provider>, ScenarioError> {
        let spec = match (&self.scenario.provider, engine) {
            (Some(ProviderSpec::Http(c)), _) => ProviderSpec::Http(c.clone().with_env()),
            (_, Engine::Llm) => ProviderSpec::Http(HttpProviderConfig::from_env().ok_or_else(|| {
                ScenarioError::Invalid("engine llm requires a provider config or ZONEKIT_PROVIDER_ENDPOINT".into())
            })?),
            (Some(spec), _) => spec.clone(),
            (None, _) => ProviderSpec::default(),
        };
        Ok(match spec {
            ProviderSpec::Mock { fixtures: None } => Box::new(MockProvider::bundled()),
            ProviderSpec::Mock { fixtures: Some(f) } => {
                let p = self.dir.join(f);
                let text = read(&p)?;
                let file: FixtureFile = wire::parse_body(&text).map_err(|source| ScenarioError::Parse { path: p, source })?;
                Box::new(MockProvider::new(file))
            }
            ProviderSpec::Http(c) => {
                Box::new(HttpProvider::new(c).map_err(|e| ScenarioError::Invalid(format!("provider: {e}")))?)
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub engine: Option<Engine>,
    pub seed: Option<u64>,
    pub config: Option<PipelineConfig>,
    /// Record wall time in the report.
    pub timing: bool,
}

/// Relevance → assignment → sizing → accept-all.
pub fn run(loaded: &LoadedScenario, opts: &RunOptions) -> Result<Report, ScenarioError> {
    let engine = opts.engine.unwrap_or(loaded.scenario.engine);
    let config = opts.config.clone().unwrap_or_else(|| loaded.scenario.config.clone());
    config.validate()?;
    let provider = loaded.provider(engine)?;
    let start = Instant::now();
    let state = WorkspaceState::from_init(&loaded.init(), &loaded.name)?;
    let (state, _) = state.ingest_events(&loaded.events)?;
    let goal = Goal::typed(loaded.scenario.goal.clone()).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let state = state.request_recommendation(&goal, engine, Some(provider.as_ref()), &config)?;
    let body = state.pending.as_ref().and_then(|p| p.body.clone()).ok_or(WorkspaceError::NoPending)?;
    let (state, record) = state.resolve_proposal(&Resolution::accept_all())?;
    let elapsed = opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    Ok(Report::new(&loaded.name, opts.seed.unwrap_or(loaded.scenario.seed), &body, &record, &state, elapsed))
}

struct TrialResult {
    costs: Vec<f64>,
    oracle: f64,
    runtimes_ms: Vec<f64>,
}

/// Mean cost, regret against the oracle and runtime per engine over
/// `trials` random instances. Trial `t` uses stream `t` of the seed.
pub fn compare(
    engines: &[Engine],
    trials: usize,
    seed: u64,
    config: &PipelineConfig,
    provider: Option<&dyn Provider>,
    timing: bool,
) -> Result<CompareTable, ScenarioError> {
    config.validate()?;
    let goal = Goal::typed("synthetic").expect("literal goal");
    let results: Vec<TrialResult> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialResult, ScenarioError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let inst = random_instance(&mut rng);
            let pinned = Assignment::new();
            let problem = inst.problem(&pinned, config.weights);
            let readability = Readability::from_catalog(&config.sizing, &[]);
            let oracle = run_engine(&problem, Engine::Oracle, None, config, &goal, &readability)?.total_cost;
            let mut costs = Vec::with_capacity(engines.len());
            let mut runtimes_ms = Vec::with_capacity(engines.len());
            for &e in engines {
                let start = Instant::now();
                let out = run_engine(&problem, e, provider, config, &goal, &readability)?;
                runtimes_ms.push(start.elapsed().as_secs_f64() * 1e3);
                costs.push(out.total_cost);
            }
            Ok(TrialResult { costs, oracle, runtimes_ms })
        })
        .collect::<Result<_, _>>()?;
    let n = results.len();
    if n == 0 {
        return Ok(CompareTable { seed, trials: 0, rows: vec![] });
    }
    let rows = engines
        .iter()
        .enumerate()
        .map(|(k, &engine)| {
            let mean = |f: &dyn Fn(&TrialResult) -> f64| results.iter().map(f).sum::<f64>() / n as f64;
            CompareRow {
                engine,
                trials: n,
                mean_cost: mean(&|r| r.costs[k]),
                mean_regret: mean(&|r| r.costs[k] - r.oracle),
                max_regret: results.iter().map(|r| r.costs[k] - r.oracle).fold(0.0, f64::max),
                mean_runtime_ms: timing.then(|| mean(&|r| r.runtimes_ms[k])),
            }
        })
        .collect();
    Ok(CompareTable { seed, trials: n, rows })
}
