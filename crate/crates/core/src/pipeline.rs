//! The recommendation pipeline: relevance, Stage-1 assignment, Stage-2
//! sizing, and proposal diagnostics.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{
    check_feasibility, entry_costs, exhaustive_assign, greedy_assign, llm_assign, prompt_cost_matrices, AssignError, Assignment,
    AssignmentProblem, EngineOutcome, FeasibilityReport, Provenance,
};
use crate::costmodel::{CostContext, CostWeights};
use crate::geometry::UserPose;
use crate::ids::{AppId, ZoneId};
use crate::layout::{occlusion_conflicts, OcclusionConflict, ZoneSpec};
use crate::recommender::{
    build_stage1_prompt, predict_relevance, AppDescriptor, Goal, Provider, ProviderError, ReadabilityRow, RecommendError,
    RelevanceSet,
};
use crate::sizing::{size_zone, Readability, SizingConfig, SizingError, SizingResult, ZoneInputs};
use crate::telemetry::{estimate_transitions, InteractionEvent, SignalStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Greedy,
    Oracle,
    Llm,
    Mock,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Greedy, Engine::Oracle, Engine::Llm, Engine::Mock];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Greedy => "greedy",
            Engine::Oracle => "oracle",
            Engine::Llm => "llm",
            Engine::Mock => "mock",
        }
    }

    /// Engines that ask a provider for the Stage-1 assignment.
    pub fn uses_provider(self) -> bool {
        matches!(self, Engine::Llm | Engine::Mock)
    }
}

impl std::str::FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown engine {s:?} (expected greedy, oracle, llm or mock)"))
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub weights: CostWeights<f64>,
    pub sizing: SizingConfig<f64>,
    /// Laplace smoothing for transition estimates.
    pub smoothing: f64,
    pub provider_timeout_secs: f64,
    /// Fall back to heuristics when the provider fails.
    pub allow_fallback: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            sizing: SizingConfig::default(),
            smoothing: 1.0,
            provider_timeout_secs: 10.0,
            allow_fallback: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.weights.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.sizing.validate()?;
        if !(self.smoothing >= 0.0) {
            return Err(PipelineError::Config("smoothing must be non-negative".into()));
        }
        if !(self.provider_timeout_secs > 0.0) || !self.provider_timeout_secs.is_finite() {
            return Err(PipelineError::Config("provider_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.provider_timeout_secs)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Sizing(#[from] SizingError),
}

impl PipelineError {
    /// The provider timed out and fallback was disabled.
    pub fn is_timeout(&self) -> bool {
        matches!(
            self,
            PipelineError::Recommend(RecommendError::Provider(ProviderError::Timeout(_)))
                | PipelineError::Assign(AssignError::Provider(ProviderError::Timeout(_)))
        )
    }

    pub fn is_provider(&self) -> bool {
        matches!(self, PipelineError::Recommend(RecommendError::Provider(_)) | PipelineError::Assign(AssignError::Provider(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FallbackFlags {
    pub relevance: bool,
    pub assignment: bool,
}

impl FallbackFlags {
    pub fn any(&self) -> bool {
        self.relevance || self.assignment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryCost {
    pub app: AppId,
    pub zone: ZoneId,
    pub cell: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Order-free Stage-1 objective of the proposed entries.
    pub total_cost: f64,
    pub entry_costs: Vec<EntryCost>,
    /// Conflicts of the sized zones with occlusion zones (reported only).
    pub occlusion_conflicts: Vec<OcclusionConflict>,
    pub feasibility: FeasibilityReport,
    pub warnings: Vec<String>,
}

/// A complete recommendation, not yet applied to any workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalBody {
    pub goal: Goal,
    pub engine: Engine,
    pub relevance: RelevanceSet<f64>,
    /// Newly proposed entries only (provenance `ai_proposed`).
    pub assignment: Assignment,
    /// Windows already hosted before the request.
    pub pinned: Assignment,
    pub sizing: Vec<SizingResult<f64>>,
    /// Sized layouts of the zones that receive entries, with proposed occupants.
    pub zones: Vec<ZoneSpec<f64>>,
    pub diagnostics: Diagnostics,
    pub fallback: FallbackFlags,
}

#[derive(Clone, Copy)]
pub struct RecommendRequest<'a> {
    pub goal: &'a Goal,
    pub pose: &'a UserPose<f64>,
    pub zones: &'a [ZoneSpec<f64>],
    pub occlusions: &'a [ZoneSpec<f64>],
    pub catalog: &'a [AppDescriptor],
    pub events: &'a [InteractionEvent],
    pub engine: Engine,
    pub provider: Option<&'a dyn Provider>,
}

/// Stage-1 assignment with the chosen engine.
pub fn run_engine(
    problem: &AssignmentProblem<'_, f64>,
    engine: Engine,
    provider: Option<&dyn Provider>,
    config: &PipelineConfig,
    goal: &Goal,
    readability: &Readability<f64>,
) -> Result<EngineOutcome<f64>, PipelineError> {
    Ok(match engine {
        Engine::Greedy => greedy_assign(problem)?,
        Engine::Oracle => exhaustive_assign(problem)?,
        Engine::Llm | Engine::Mock => {
            let rows: Vec<ReadabilityRow> = problem
                .relevance
                .entries
                .iter()
                .map(|e| ReadabilityRow {
                    app: e.app.clone(),
                    min_rows: readability.rows_for(&e.app),
                    min_angle_deg: readability.required_angle(&e.app).to_degrees(),
                })
                .collect();
            let prompt = build_stage1_prompt(problem.relevance, problem.ctx.zones, &prompt_cost_matrices(problem)?, &rows, goal);
            match provider {
                Some(p) => llm_assign(&prompt, p, config.timeout(), config.allow_fallback, problem)?,
                None if config.allow_fallback => {
                    let mut g = greedy_assign(problem)?;
                    g.fallback = true;
                    g.warnings.push("assignment fallback: no provider configured".into());
                    g
                }
                None => return Err(AssignError::Provider(ProviderError::Unavailable("no provider configured".into())).into()),
            }
        }
    })
}

/// Relevance → assignment → per-zone sizing and readability scale-up.
pub fn recommend(req: &RecommendRequest<'_>, config: &PipelineConfig) -> Result<ProposalBody, PipelineError> {
    config.validate()?;
    let timeout = config.timeout();
    let rel = predict_relevance::<f64>(req.goal, req.catalog, req.provider, timeout, config.allow_fallback)?;
    let mut warnings = rel.warnings.clone();
    let relevance = rel.set;

    let pinned = Assignment::pinned_from_zones(req.zones);
    let mut apps: Vec<AppId> = relevance.apps();
    let extra: BTreeSet<AppId> = pinned.entries.keys().filter(|a| !apps.contains(a)).cloned().collect();
    apps.extend(extra);
    let transitions = estimate_transitions(req.events, &apps, config.smoothing);
    let ctx = CostContext::new(req.zones, req.pose, config.weights).with_hand(SignalStats::from_log(req.events));
    let problem = AssignmentProblem { relevance: &relevance, pinned: &pinned, transitions: &transitions, ctx };

    let readability = Readability::from_catalog(&config.sizing, req.catalog);
    let outcome = run_engine(&problem, req.engine, req.provider, config, req.goal, &readability)?;
    warnings.extend(outcome.warnings.iter().cloned());

    let mut proposed = Assignment { entries: Default::default(), unassigned: outcome.assignment.unassigned.clone() };
    for (app, p) in &outcome.assignment.entries {
        if p.provenance == Provenance::AiProposed {
            proposed.entries.insert(app.clone(), *p);
        }
    }
    let costs = entry_costs(&problem, &proposed)?
        .into_iter()
        .map(|(app, cell, cost)| EntryCost { app, zone: cell.zone, cell: cell.cell, cost })
        .collect();

    // Stage 2 on every zone that receives a new entry.
    let targets: BTreeSet<ZoneId> = proposed.entries.values().map(|p| p.zone).collect();
    let mut sized_zones = Vec::new();
    let mut sizing = Vec::new();
    for z in req.zones.iter().filter(|z| targets.contains(&z.id)) {
        let mut tentative = z.clone();
        for (app, p) in &proposed.entries {
            if p.zone == z.id {
                tentative.cell_mut(p.cell).map_err(SizingError::from)?.occupant = Some(app.clone());
            }
        }
        let inputs = ZoneInputs {
            relevance: &relevance,
            transitions: &transitions,
            weights: &config.weights,
            config: &config.sizing,
            pose: req.pose,
        };
        let (sized, result) = size_zone(&tentative, &inputs, &readability)?;
        if result.clamped {
            warnings.push(format!("zone {} needs more than {}× to be readable", z.id, config.sizing.max_scale));
        }
        sized_zones.push(sized);
        sizing.push(result);
    }
    let conflicts = occlusion_conflicts(&sized_zones, req.occlusions, req.pose);
    for c in &conflicts {
        warnings.push(format!("sized zone {} overlaps occlusion {}", c.zone, c.occlusion));
    }
    let mut after: Vec<ZoneSpec<f64>> = req.zones.to_vec();
    for s in &sized_zones {
        if let Some(z) = after.iter_mut().find(|z| z.id == s.id) {
            *z = s.clone();
        }
    }
    let feasibility = check_feasibility(&Assignment::new(), &after, req.pose, &readability);
    let feasibility = FeasibilityReport {
        violations: feasibility
            .violations
            .into_iter()
            .filter(|v| proposed.entries.keys().any(|a| a.as_str() == v.subject) || v.rule.is_structural())
            .collect(),
    };

    Ok(ProposalBody {
        goal: req.goal.clone(),
        engine: req.engine,
        relevance,
        assignment: proposed,
        pinned,
        sizing,
        zones: sized_zones,
        diagnostics: Diagnostics {
            total_cost: outcome.total_cost,
            entry_costs: costs,
            occlusion_conflicts: conflicts,
            feasibility,
            warnings,
        },
        fallback: FallbackFlags { relevance: rel.fallback, assignment: outcome.fallback },
    })
}
