//! Goal-to-application relevance prediction and the Stage-1 prompt.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canonical;
use crate::costmodel::CostMatrix;
use crate::ids::AppId;
use crate::layout::ZoneSpec;
use crate::scalar::Real;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecommendError {
    #[error("goal is empty")]
    EmptyGoal,
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("duplicate catalog id {0}")]
    DuplicateApp(AppId),
    #[error("app {0} has min_rows = 0")]
    ZeroRows(AppId),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSource {
    #[default]
    Typed,
    Transcribed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGoal")]
pub struct Goal {
    pub text: String,
    #[serde(default)]
    pub source: GoalSource,
}

#[derive(Deserialize)]
struct RawGoal {
    text: String,
    #[serde(default)]
    source: GoalSource,
}

impl TryFrom<RawGoal> for Goal {
    type Error = RecommendError;
    fn try_from(raw: RawGoal) -> Result<Self, Self::Error> {
        Goal::new(raw.text, raw.source)
    }
}

impl Goal {
    pub fn new(text: impl Into<String>, source: GoalSource) -> Result<Self, RecommendError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(RecommendError::EmptyGoal);
        }
        Ok(Self { text, source })
    }

    pub fn typed(text: impl Into<String>) -> Result<Self, RecommendError> {
        Self::new(text, GoalSource::Typed)
    }

    /// Lower-cased, whitespace-collapsed text used as a fixture key.
    pub fn key(&self) -> String {
        normalize_goal(&self.text)
    }
}

fn normalize_goal(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    Landscape,
    Portrait,
    #[default]
    Any,
}

fn default_rows() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppDescriptor {
    pub id: AppId,
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub preferred_aspect: Aspect,
    /// Text rows that must stay legible in the hosting cell.
    #[serde(default = "default_rows")]
    pub min_rows: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
}

impl AppDescriptor {
    pub fn new(id: &str, name: &str, category: &str) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            category: category.into(),
            preferred_aspect: Aspect::Any,
            min_rows: default_rows(),
            keywords: Vec::new(),
        }
    }
}

pub fn validate_catalog(catalog: &[AppDescriptor]) -> Result<(), RecommendError> {
    if catalog.is_empty() {
        return Err(RecommendError::EmptyCatalog);
    }
    let mut seen = BTreeSet::new();
    for a in catalog {
        if !seen.insert(&a.id) {
            return Err(RecommendError::DuplicateApp(a.id.clone()));
        }
        if a.min_rows == 0 {
            return Err(RecommendError::ZeroRows(a.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceEntry<T> {
    pub app: AppId,
    pub r: T,
}

/// Recommended apps with relevance in `[0, 1]`, distinct ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSet<T> {
    pub goal: Goal,
    pub entries: Vec<RelevanceEntry<T>>,
}

impl<T: Real> RelevanceSet<T> {
    /// Clamps scores into `[0, 1]`; later duplicates are dropped.
    pub fn new(goal: Goal, entries: Vec<(AppId, T)>) -> Self {
        let mut seen = BTreeSet::new();
        let entries = entries
            .into_iter()
            .filter(|(a, _)| seen.insert(a.clone()))
            .map(|(app, r)| RelevanceEntry { app, r: clamp_unit(r) })
            .collect();
        Self { goal, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, app: &AppId) -> Option<T> {
        self.entries.iter().find(|e| &e.app == app).map(|e| e.r)
    }

    pub fn apps(&self) -> Vec<AppId> {
        self.entries.iter().map(|e| e.app.clone()).collect()
    }

    /// Descending relevance; ties keep entry order.
    pub fn by_relevance(&self) -> Vec<&RelevanceEntry<T>> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| b.r.partial_cmp(&a.r).unwrap_or(std::cmp::Ordering::Equal));
        v
    }

    pub fn cast<U: Real>(&self) -> RelevanceSet<U> {
        RelevanceSet {
            goal: self.goal.clone(),
            entries: self.entries.iter().map(|e| RelevanceEntry { app: e.app.clone(), r: U::lit(e.r.as_f64()) }).collect(),
        }
    }
}

fn clamp_unit<T: Real>(r: T) -> T {
    if r.is_nan() {
        T::zero()
    } else {
        r.max(T::zero()).min(T::one())
    }
}

// ---------------------------------------------------------------------------
// Providers

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Relevance,
    Assignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderRequest {
    pub purpose: Purpose,
    pub goal: String,
    pub instructions: String,
    pub payload: String,
    pub timeout: Duration,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("provider timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider output: {0}")]
    Malformed(String),
}

impl ProviderError {
    fn retryable(&self) -> bool {
        matches!(self, Self::Timeout(_) | Self::Transport(_))
    }
}

/// Structured text completion: payload in, JSON text out.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

/// Calls the provider, retrying once on a timeout or transport failure.
pub fn call_with_retry(provider: &dyn Provider, request: &ProviderRequest) -> Result<String, ProviderError> {
    match provider.complete(request) {
        Err(e) if e.retryable() => {
            log::warn!("provider {} failed ({e}); retrying once", provider.name());
            provider.complete(request)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockMode {
    #[default]
    Online,
    Offline,
    /// Reports a timeout whenever the request timeout is shorter than this.
    Latency(Duration),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub purpose: Purpose,
    pub goal: String,
    /// JSON response; `response_text` wins when both are present.
    #[serde(default)]
    pub response: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureFile {
    pub fixtures: Vec<Fixture>,
}

/// Deterministic provider backed by a goal-keyed fixture table.
///
/// Unknown relevance goals rank the catalog found in the payload by
/// keyword match; unknown assignment goals return an empty map.
#[derive(Debug, Default)]
pub struct MockProvider {
    table: BTreeMap<(Purpose, String), String>,
    mode: MockMode,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(fixtures: FixtureFile) -> Self {
        let table = fixtures
            .fixtures
            .into_iter()
            .map(|f| {
                let text = f.response_text.unwrap_or_else(|| canonical::value_to_string(&f.response).unwrap_or_default());
                ((f.purpose, normalize_goal(&f.goal)), text)
            })
            .collect();
        Self { table, mode: MockMode::Online, calls: AtomicUsize::new(0) }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    /// Fixtures shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_FIXTURES).expect("bundled fixtures parse")
    }

    pub fn with_mode(mut self, mode: MockMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub const BUNDLED_FIXTURES: &str = include_str!("../fixtures/mock_provider.json");
pub const BUNDLED_CATALOG: &str = include_str!("../fixtures/catalog.json");

/// The default ~20-app catalog.
pub fn bundled_catalog() -> Vec<AppDescriptor> {
    serde_json::from_str(BUNDLED_CATALOG).expect("bundled catalog parses")
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match self.mode {
            MockMode::Offline => return Err(ProviderError::Unavailable("mock offline".into())),
            MockMode::Latency(d) if d > request.timeout => return Err(ProviderError::Timeout(request.timeout)),
            _ => {}
        }
        if let Some(text) = self.table.get(&(request.purpose, normalize_goal(&request.goal))) {
            return Ok(text.clone());
        }
        match request.purpose {
            Purpose::Assignment => Ok(r#"{"assignment":[]}"#.into()),
            Purpose::Relevance => {
                let payload: Value =
                    serde_json::from_str(&request.payload).map_err(|e| ProviderError::Malformed(e.to_string()))?;
                let catalog: Vec<AppDescriptor> = serde_json::from_value(payload["catalog"].clone())
                    .map_err(|e| ProviderError::Malformed(e.to_string()))?;
                let goal = Goal::typed(request.goal.clone()).map_err(|e| ProviderError::Malformed(e.to_string()))?;
                let set = keyword_relevance::<f64>(&goal, &catalog);
                let apps: Vec<Value> = set.entries.iter().map(|e| json!({"id": e.app, "relevance": e.r})).collect();
                Ok(canonical::value_to_string(&json!({ "applications": apps })).expect("finite scores"))
            }
        }
    }
}

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

impl HttpProviderConfig {
    /// Applies `ZONEKIT_PROVIDER_{ENDPOINT,KEY,MODEL,TIMEOUT}` overrides.
    pub fn with_env(mut self) -> Self {
        if let Ok(v) = std::env::var("ZONEKIT_PROVIDER_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("ZONEKIT_PROVIDER_KEY") {
            self.api_key = Some(v);
        }
        if let Ok(v) = std::env::var("ZONEKIT_PROVIDER_MODEL") {
            self.model = v;
        }
        if let Some(v) = std::env::var("ZONEKIT_PROVIDER_TIMEOUT").ok().and_then(|v| v.parse().ok()) {
            self.timeout_secs = v;
        }
        self
    }

    /// Config from the environment alone, if an endpoint is set.
    pub fn from_env() -> Option<Self> {
        std::env::var("ZONEKIT_PROVIDER_ENDPOINT").ok().map(|endpoint| {
            Self { endpoint, api_key: None, model: "default".into(), timeout_secs: default_timeout_secs() }.with_env()
        })
    }
}

pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let timeout = request.timeout.min(Duration::from_secs(self.config.timeout_secs.max(1)));
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": request.instructions},
                {"role": "user", "content": request.payload},
            ],
        });
        let mut req = self.client.post(&self.config.endpoint).timeout(timeout).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(timeout)
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(ProviderError::Unavailable(format!("status {}", resp.status())));
        }
        let v: Value = resp.json().map_err(|e| ProviderError::Malformed(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
    }
}

// ---------------------------------------------------------------------------
// Relevance

const CATEGORY_KEYWORDS: &[(&str, &[&str])] = &[
    ("development", &["code", "coding", "program", "programming", "debug", "develop", "developing", "software", "web", "game", "build", "script", "api", "bug", "deploy"]),
    ("browser", &["web", "browse", "search", "research", "online", "website", "game", "read"]),
    ("communication", &["chat", "email", "mail", "message", "team", "meeting", "call", "friends", "reply", "coordinate"]),
    ("documents", &["write", "writing", "paper", "report", "essay", "document", "notes", "read", "reading", "study", "thesis"]),
    ("productivity", &["plan", "planning", "schedule", "calendar", "todo", "task", "organize", "meeting", "trip"]),
    ("design", &["design", "draw", "sketch", "art", "ui", "mockup", "prototype", "photo", "edit"]),
    ("media", &["music", "video", "watch", "listen", "movie", "relax", "podcast", "stream"]),
    ("finance", &["budget", "money", "finance", "expense", "invoice", "tax", "spreadsheet"]),
    ("reference", &["learn", "study", "research", "reference", "dictionary", "translate", "paper"]),
];

fn tokens(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Category-keyword heuristic. Never empty for a non-empty catalog.
pub fn keyword_relevance<T: Real>(goal: &Goal, catalog: &[AppDescriptor]) -> RelevanceSet<T> {
    let words = tokens(&goal.text);
    let mut scored: Vec<(AppId, f64)> = Vec::new();
    for app in catalog {
        let mut s = 0.0;
        let cat = app.category.to_lowercase();
        if let Some((_, kws)) = CATEGORY_KEYWORDS.iter().find(|(c, _)| *c == cat) {
            let hits = kws.iter().filter(|k| words.contains(**k)).count();
            s += 0.3 * hits.min(2) as f64;
        }
        let own: BTreeSet<String> = tokens(&app.name)
            .into_iter()
            .chain(tokens(app.id.as_str()))
            .chain(app.keywords.iter().flat_map(|k| tokens(k)))
            .collect();
        if own.iter().any(|t| words.contains(t)) {
            s += 0.3;
        }
        if s > 0.0 {
            scored.push((app.id.clone(), (0.2 + s).min(1.0)));
        }
    }
    if scored.is_empty() {
        scored = catalog.iter().take(8).map(|a| (a.id.clone(), 0.2)).collect();
    }
    RelevanceSet::new(goal.clone(), scored.into_iter().map(|(a, r)| (a, T::lit(r))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceOutcome<T> {
    pub set: RelevanceSet<T>,
    pub fallback: bool,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct RelevanceResponse {
    applications: Vec<RelevanceItem>,
}

#[derive(Deserialize)]
struct RelevanceItem {
    id: AppId,
    relevance: f64,
}

pub const RELEVANCE_INSTRUCTIONS: &str = "Given the user's goal and the application catalog, reply with JSON only: \
{\"applications\":[{\"id\":<catalog id>,\"relevance\":<0..1>}]}. Use catalog ids only. No free text.";

pub fn relevance_payload(goal: &Goal, catalog: &[AppDescriptor]) -> String {
    let cat: Vec<Value> = catalog
        .iter()
        .map(|a| json!({"id": a.id, "name": a.name, "category": a.category}))
        .collect();
    canonical::value_to_string(&json!({"goal": goal.text, "catalog": cat})).expect("payload is finite")
}

/// Asks the provider for relevant catalog apps. Provider failure, malformed
/// output or an empty usable answer falls back to [`keyword_relevance`]
/// unless `allow_fallback` is false.
pub fn predict_relevance<T: Real>(
    goal: &Goal,
    catalog: &[AppDescriptor],
    provider: Option<&dyn Provider>,
    timeout: Duration,
    allow_fallback: bool,
) -> Result<RelevanceOutcome<T>, RecommendError> {
    validate_catalog(catalog)?;
    let mut warnings = Vec::new();
    let fail = |e: ProviderError, mut warnings: Vec<String>| {
        if !allow_fallback {
            return Err(RecommendError::Provider(e));
        }
        warnings.push(format!("relevance fallback: {e}"));
        Ok(RelevanceOutcome { set: keyword_relevance(goal, catalog), fallback: true, warnings })
    };
    let Some(provider) = provider else {
        return fail(ProviderError::Unavailable("no provider configured".into()), warnings);
    };
    let request = ProviderRequest {
        purpose: Purpose::Relevance,
        goal: goal.text.clone(),
        instructions: RELEVANCE_INSTRUCTIONS.into(),
        payload: relevance_payload(goal, catalog),
        timeout,
    };
    let text = match call_with_retry(provider, &request) {
        Ok(t) => t,
        Err(e) => return fail(e, warnings),
    };
    let parsed: RelevanceResponse = match serde_json::from_str(&text) {
        Ok(p) => p,
        Err(e) => return fail(ProviderError::Malformed(e.to_string()), warnings),
    };
    let mut scores: BTreeMap<AppId, f64> = BTreeMap::new();
    for item in parsed.applications {
        if !catalog.iter().any(|a| a.id == item.id) {
            warnings.push(format!("dropped unknown app id {}", item.id));
            continue;
        }
        if !item.relevance.is_finite() {
            warnings.push(format!("dropped non-finite relevance for {}", item.id));
            continue;
        }
        if scores.contains_key(&item.id) {
            warnings.push(format!("dropped duplicate app id {}", item.id));
            continue;
        }
        if !(0.0..=1.0).contains(&item.relevance) {
            warnings.push(format!("clamped relevance {} for {}", item.relevance, item.id));
        }
        scores.insert(item.id, item.relevance);
    }
    if scores.is_empty() {
        return fail(ProviderError::Malformed("no usable applications".into()), warnings);
    }
    let entries = catalog
        .iter()
        .filter_map(|a| scores.get(&a.id).map(|&r| (a.id.clone(), T::lit(r))))
        .collect();
    Ok(RelevanceOutcome { set: RelevanceSet::new(goal.clone(), entries), fallback: false, warnings })
}

// ---------------------------------------------------------------------------
// Stage-1 prompt

/// Per-app readability requirement expressed on the wire in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityRow {
    pub app: AppId,
    pub min_rows: u32,
    pub min_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Prompt {
    pub applications: Value,
    pub zones: Value,
    pub cost_matrix: Value,
    pub readability: Value,
    pub goal: Value,
    pub response_format: String,
}

pub const ASSIGNMENT_INSTRUCTIONS: &str = "Assign the recommended applications to empty cells, minimizing interaction cost \
while respecting readability. Reply with JSON only: {\"assignment\":[{\"app\":<id>,\"zone\":<zone id>,\"cell\":<cell index>}]}. \
At most one application per cell. No free text.";

impl Stage1Prompt {
    pub const SECTIONS: [&'static str; 5] = ["applications", "zones", "cost_matrix", "readability", "goal"];

    pub fn sections(&self) -> [(&'static str, &Value); 5] {
        [
            ("applications", &self.applications),
            ("zones", &self.zones),
            ("cost_matrix", &self.cost_matrix),
            ("readability", &self.readability),
            ("goal", &self.goal),
        ]
    }

    pub fn section_count(&self) -> usize {
        self.sections().len()
    }

    /// Canonical JSON payload sent to the provider.
    pub fn to_payload(&self) -> String {
        canonical::to_string(self).expect("prompt is finite")
    }
}

/// Builds the structured Stage-1 payload: apps with scores, zones with
/// layout and occupied cells, the cost matrix, readability limits, goal.
pub fn build_stage1_prompt<T: Real + Serialize>(
    relevance: &RelevanceSet<T>,
    zones: &[ZoneSpec<T>],
    costs: &[CostMatrix<T>],
    readability: &[ReadabilityRow],
    goal: &Goal,
) -> Stage1Prompt {
    let applications = relevance.entries.iter().map(|e| json!({"id": e.app, "relevance": e.r.as_f64()})).collect();
    let zones = zones
        .iter()
        .filter(|z| !z.is_occlusion())
        .map(|z| {
            let cells: Vec<Value> = z
                .cells
                .iter()
                .map(|c| {
                    json!({
                        "index": c.index,
                        "width": c.width.as_f64(),
                        "height": c.height.as_f64(),
                        "occupant": c.occupant,
                    })
                })
                .collect();
            json!({
                "id": z.id,
                "template": z.kind,
                "width": z.width.as_f64(),
                "height": z.height.as_f64(),
                "locked": z.locked,
                "cells": cells,
            })
        })
        .collect();
    let cost_matrix = costs
        .iter()
        .map(|m| {
            let entries: Vec<Value> = m
                .entries
                .iter()
                .map(|e| json!({"zone": e.cell.zone, "cell": e.cell.cell, "cost": e.cost.as_f64()}))
                .collect();
            json!({"app": m.app, "context": m.context, "entries": entries})
        })
        .collect();
    Stage1Prompt {
        applications: Value::Array(applications),
        zones: Value::Array(zones),
        cost_matrix: Value::Array(cost_matrix),
        readability: serde_json::to_value(readability).expect("rows serialize"),
        goal: json!({"text": goal.text, "source": goal.source}),
        response_format: ASSIGNMENT_INSTRUCTIONS.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{UserPose, Vec3};
    use crate::ids::ZoneId;
    use crate::layout::TemplateKind;

    fn catalog() -> Vec<AppDescriptor> {
        bundled_catalog()
    }

    #[test]
    fn bundled_catalog_is_valid() {
        let c = catalog();
        validate_catalog(&c).unwrap();
        assert!((18..=22).contains(&c.len()));
    }

    #[test]
    fn goal_validation() {
        assert_eq!(Goal::typed("   "), Err(RecommendError::EmptyGoal));
        assert!(serde_json::from_str::<Goal>(r#"{"text":""}"#).is_err());
        let g: Goal = serde_json::from_str(r#"{"text":"x","source":"transcribed"}"#).unwrap();
        assert_eq!(g.source, GoalSource::Transcribed);
    }

    #[test]
    fn mock_fixture_round_trip() {
        let p = MockProvider::bundled();
        let goal = Goal::typed("coding a web game").unwrap();
        let out = predict_relevance::<f64>(&goal, &catalog(), Some(&p), DEFAULT_TIMEOUT, true).unwrap();
        assert!(!out.fallback);
        let got: BTreeMap<_, _> = out.set.entries.iter().map(|e| (e.app.as_str().to_owned(), e.r)).collect();
        let want: BTreeMap<_, _> =
            [("ide", 0.95), ("terminal", 0.9), ("browser", 0.8), ("chat", 0.5)].map(|(a, r)| (a.to_owned(), r)).into();
        assert_eq!(got, want);
    }

    struct Scripted(&'static str);
    impl Provider for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }
        fn complete(&self, _: &ProviderRequest) -> Result<String, ProviderError> {
            Ok(self.0.into())
        }
    }

    #[test]
    fn clamps_and_drops_unknown() {
        let p = Scripted(r#"{"applications":[{"id":"ide","relevance":1.7},{"id":"nope","relevance":0.5},{"id":"chat","relevance":-1}]}"#);
        let out = predict_relevance::<f64>(&Goal::typed("x").unwrap(), &catalog(), Some(&p), DEFAULT_TIMEOUT, true).unwrap();
        assert_eq!(out.set.score(&"ide".into()), Some(1.0));
        assert_eq!(out.set.score(&"chat".into()), Some(0.0));
        assert_eq!(out.set.score(&"nope".into()), None);
        assert_eq!(out.warnings.len(), 3);
    }

    #[test]
    fn empty_catalog_rejected() {
        let r = predict_relevance::<f64>(&Goal::typed("x").unwrap(), &[], None, DEFAULT_TIMEOUT, true);
        assert_eq!(r.unwrap_err(), RecommendError::EmptyCatalog);
    }

    #[test]
    fn offline_and_slow_fall_back() {
        let goal = Goal::typed("coding a web game").unwrap();
        let off = MockProvider::bundled().with_mode(MockMode::Offline);
        let out = predict_relevance::<f64>(&goal, &catalog(), Some(&off), DEFAULT_TIMEOUT, true).unwrap();
        assert!(out.fallback && !out.set.is_empty());
        assert_eq!(off.calls(), 1);

        let slow = MockProvider::bundled().with_mode(MockMode::Latency(Duration::from_secs(30)));
        let out = predict_relevance::<f64>(&goal, &catalog(), Some(&slow), DEFAULT_TIMEOUT, true).unwrap();
        assert!(out.fallback);
        assert_eq!(slow.calls(), 2, "timeouts are retried once");

        let err = predict_relevance::<f64>(&goal, &catalog(), Some(&slow), DEFAULT_TIMEOUT, false).unwrap_err();
        assert!(matches!(err, RecommendError::Provider(ProviderError::Timeout(_))));
    }

    #[test]
    fn malformed_output_falls_back() {
        let p = Scripted("sure! here are some apps");
        let out = predict_relevance::<f64>(&Goal::typed("write a paper").unwrap(), &catalog(), Some(&p), DEFAULT_TIMEOUT, true).unwrap();
        assert!(out.fallback);
    }

    #[test]
    fn unknown_goal_uses_catalog_ranking() {
        let p = MockProvider::bundled();
        let goal = Goal::typed("plan a trip with friends").unwrap();
        let out = predict_relevance::<f64>(&goal, &catalog(), Some(&p), DEFAULT_TIMEOUT, true).unwrap();
        assert!(!out.fallback);
        assert!(out.set.apps().iter().all(|a| catalog().iter().any(|c| &c.id == a)));
        assert!(!out.set.is_empty());
    }

    #[test]
    fn heuristic_never_empty() {
        for g in ["zzz qqq", "coding", "listen to music", "!!"] {
            let set = keyword_relevance::<f64>(&Goal::typed(g).unwrap(), &catalog());
            assert!(!set.is_empty(), "{g}");
        }
    }

    #[test]
    fn prompt_has_five_sections_and_is_canonical() {
        let pose = UserPose::<f64>::origin();
        let zones = vec![ZoneSpec::new(ZoneId(1), TemplateKind::TwoByTwo, 1.0, 0.8, Vec3::new(0.0, 0.0, 2.0), None, &pose).unwrap()];
        let goal = Goal::typed("coding a web game").unwrap();
        let rel = RelevanceSet::new(goal.clone(), vec![("ide".into(), 0.95), ("terminal".into(), 0.9)]);
        let rows = vec![ReadabilityRow { app: "ide".into(), min_rows: 20, min_angle_deg: 10.0 }];
        let a = build_stage1_prompt(&rel, &zones, &[], &rows, &goal);
        let b = build_stage1_prompt(&rel, &zones, &[], &rows, &goal);
        assert_eq!(a.section_count(), 5);
        assert_eq!(a.to_payload(), b.to_payload());
        let v: Value = serde_json::from_str(&a.to_payload()).unwrap();
        for s in Stage1Prompt::SECTIONS {
            assert!(v.get(s).is_some(), "{s}");
        }
    }
}
