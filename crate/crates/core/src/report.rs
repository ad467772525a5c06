//! Run and comparison reports.

use serde::{Deserialize, Serialize};

use crate::assignment::Violation;
use crate::ids::{AppId, ZoneId};
use crate::layout::{TemplateKind, ThetaParams};
use crate::pipeline::{EntryCost, Engine, FallbackFlags, ProposalBody};
use crate::recommender::RelevanceEntry;
use crate::workspace::{AcceptanceRecord, WorkspaceState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneReport {
    pub zone: ZoneId,
    pub template: TemplateKind,
    pub theta_star: ThetaParams<f64>,
    pub scale_factor: f64,
    pub objective_value: f64,
    pub evaluated_points: usize,
    pub clamped: bool,
    pub unreadable: Vec<AppId>,
    /// Final zone size after acceptance.
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSummary {
    pub proposed: usize,
    pub accepted: usize,
    pub declined: usize,
    pub overridden: usize,
    pub layouts_adjusted: usize,
}

impl From<&AcceptanceRecord> for AcceptanceSummary {
    fn from(r: &AcceptanceRecord) -> Self {
        Self {
            proposed: r.decisions.len(),
            accepted: r.accepted,
            declined: r.declined,
            overridden: r.overridden,
            layouts_adjusted: r.layouts_adjusted,
        }
    }
}

/// Result of one headless scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub scenario: String,
    pub goal: String,
    pub engine: Engine,
    pub seed: u64,
    pub total_cost: f64,
    pub fallback: FallbackFlags,
    pub relevance: Vec<RelevanceEntry<f64>>,
    pub assignment: Vec<EntryCost>,
    pub unassigned: Vec<AppId>,
    pub zones: Vec<ZoneReport>,
    pub acceptance: AcceptanceSummary,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Report {
    pub fn new(
        scenario: &str,
        seed: u64,
        body: &ProposalBody,
        record: &AcceptanceRecord,
        state: &WorkspaceState,
        wall_time_ms: Option<f64>,
    ) -> Self {
        let zones = body
            .sizing
            .iter()
            .map(|s| {
                let z = state.zone(s.zone);
                ZoneReport {
                    zone: s.zone,
                    template: z.map(|z| z.kind).unwrap_or(TemplateKind::OneByOne),
                    theta_star: s.theta_star,
                    scale_factor: s.scale_factor,
                    objective_value: s.objective_value,
                    evaluated_points: s.evaluated_points,
                    clamped: s.clamped,
                    unreadable: s.unreadable.clone(),
                    width: z.map_or(0.0, |z| z.width),
                    height: z.map_or(0.0, |z| z.height),
                }
            })
            .collect();
        Self {
            scenario: scenario.to_owned(),
            goal: body.goal.text.clone(),
            engine: body.engine,
            seed,
            total_cost: body.diagnostics.total_cost,
            fallback: body.fallback,
            relevance: body.relevance.entries.clone(),
            assignment: body.diagnostics.entry_costs.clone(),
            unassigned: body.assignment.unassigned.clone(),
            zones,
            acceptance: record.into(),
            violations: body.diagnostics.feasibility.violations.clone(),
            warnings: body.diagnostics.warnings.clone(),
            wall_time_ms,
        }
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "scenario {}\ngoal     {}\nengine   {}\ncost     {:.6}\n",
            self.scenario, self.goal, self.engine, self.total_cost
        );
        if self.fallback.any() {
            out.push_str(&format!("fallback relevance={} assignment={}\n", self.fallback.relevance, self.fallback.assignment));
        }
        out.push_str("assignment:\n");
        for e in &self.assignment {
            out.push_str(&format!("  {:<12} z{}/c{}  cost {:.6}\n", e.app, e.zone.0, e.cell, e.cost));
        }
        if !self.unassigned.is_empty() {
            let names: Vec<&str> = self.unassigned.iter().map(AppId::as_str).collect();
            out.push_str(&format!("unassigned: {}\n", names.join(", ")));
        }
        out.push_str("zones:\n");
        for z in &self.zones {
            out.push_str(&format!(
                "  z{} {:<5} w0={:.4} h0={:.4} scale={:.4}{} size={:.3}x{:.3}\n",
                z.zone.0,
                z.template,
                z.theta_star.w0,
                z.theta_star.h0,
                z.scale_factor,
                if z.clamped { " (clamped)" } else { "" },
                z.width,
                z.height
            ));
        }
        let a = &self.acceptance;
        out.push_str(&format!("accepted {}/{} (layouts adjusted {})\n", a.accepted, a.proposed, a.layouts_adjusted));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        if let Some(ms) = self.wall_time_ms {
            out.push_str(&format!("wall time {ms:.1} ms\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRow {
    pub engine: Engine,
    pub trials: usize,
    pub mean_cost: f64,
    /// Mean of cost minus oracle cost.
    pub mean_regret: f64,
    pub max_regret: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareTable {
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    pub fn to_text(&self) -> String {
        let timed = self.rows.iter().any(|r| r.mean_runtime_ms.is_some());
        let mut out = format!("{:<8} {:>6} {:>12} {:>12} {:>12}", "engine", "trials", "mean_cost", "mean_regret", "max_regret");
        if timed {
            out.push_str(&format!(" {:>12}", "runtime_ms"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:<8} {:>6} {:>12.6} {:>12.6} {:>12.6}",
                r.engine, r.trials, r.mean_cost, r.mean_regret, r.max_regret
            ));
            if let Some(ms) = r.mean_runtime_ms {
                out.push_str(&format!(" {ms:>12.3}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("engine,trials,mean_cost,mean_regret,max_regret,mean_runtime_ms\n");
        for r in &self.rows {
            let ms = r.mean_runtime_ms.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", r.engine, r.trials, r.mean_cost, r.mean_regret, r.max_regret, ms));
        }
        out
    }
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("app,zone,cell,cost\n");
        for e in &self.assignment {
            out.push_str(&format!("{},{},{},{}\n", e.app, e.zone.0, e.cell, e.cost));
        }
        out
    }
}
