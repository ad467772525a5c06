//! Versioned wire documents shared by the service and the CLI.
//!
//! Every document travels inside a [`WireEnvelope`] and is printed with the
//! canonical profile from [`crate::canonical`], so serialize → parse →
//! serialize is byte-identical.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{self, CanonicalError};
use crate::pipeline::Engine;
use crate::report::{CompareTable, Report};
use crate::scenario::Scenario;
use crate::telemetry::InteractionEvent;
use crate::workspace::{AcceptanceRecord, Op, OpEffects, Proposal, Resolution, WorkspaceInit, WorkspaceState};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum WireError {
    #[error("unsupported schema_version {0:?} (expected \"1\")")]
    SchemaVersion(String),
    #[error("expected a {expected} document, got {got}")]
    WrongKind { expected: WireKind, got: WireKind },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

impl WireError {
    fn from_path(e: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = e.path().to_string();
        WireError::Field { path: if path == "." { "$".into() } else { format!("$.{path}") }, message: e.into_inner().to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireKind {
    WorkspaceInit,
    WorkspaceCreated,
    WorkspaceSnapshot,
    RecommendRequest,
    Proposal,
    Resolution,
    ResolveResult,
    OpRequest,
    OpResult,
    EventBatch,
    EventAck,
    Scenario,
    Report,
    CompareTable,
    Error,
}

impl WireKind {
    pub const ALL: [WireKind; 15] = [
        WireKind::WorkspaceInit,
        WireKind::WorkspaceCreated,
        WireKind::WorkspaceSnapshot,
        WireKind::RecommendRequest,
        WireKind::Proposal,
        WireKind::Resolution,
        WireKind::ResolveResult,
        WireKind::OpRequest,
        WireKind::OpResult,
        WireKind::EventBatch,
        WireKind::EventAck,
        WireKind::Scenario,
        WireKind::Report,
        WireKind::CompareTable,
        WireKind::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WireKind::WorkspaceInit => "workspace_init",
            WireKind::WorkspaceCreated => "workspace_created",
            WireKind::WorkspaceSnapshot => "workspace_snapshot",
            WireKind::RecommendRequest => "recommend_request",
            WireKind::Proposal => "proposal",
            WireKind::Resolution => "resolution",
            WireKind::ResolveResult => "resolve_result",
            WireKind::OpRequest => "op_request",
            WireKind::OpResult => "op_result",
            WireKind::EventBatch => "event_batch",
            WireKind::EventAck => "event_ack",
            WireKind::Scenario => "scenario",
            WireKind::Report => "report",
            WireKind::CompareTable => "compare_table",
            WireKind::Error => "error",
        }
    }
}

impl std::fmt::Display for WireKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A document body with a fixed kind.
pub trait WireDocument: Serialize + DeserializeOwned {
    const KIND: WireKind;
}

macro_rules! wire_document {
    ($($t:ty => $k:ident),* $(,)?) => {
        $(impl WireDocument for $t {
            const KIND: WireKind = WireKind::$k;
        })*
    };
}

wire_document! {
    WorkspaceInit => WorkspaceInit,
    WorkspaceCreated => WorkspaceCreated,
    WorkspaceSnapshot => WorkspaceSnapshot,
    RecommendBody => RecommendRequest,
    Proposal => Proposal,
    Resolution => Resolution,
    ResolveResult => ResolveResult,
    OpRequest => OpRequest,
    OpResult => OpResult,
    EventBatch => EventBatch,
    EventAck => EventAck,
    Scenario => Scenario,
    Report => Report,
    CompareTable => CompareTable,
    ErrorBody => Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireEnvelope {
    pub schema_version: String,
    #[serde(default)]
    pub request_id: Option<String>,
    pub kind: WireKind,
    pub body: serde_json::Value,
}

impl WireEnvelope {
    pub fn wrap<D: WireDocument>(body: &D, request_id: Option<String>) -> Result<Self, WireError> {
        // Round through canonical text so the stored body is already normalized.
        let text = canonical::to_string(body)?;
        let body = serde_json::from_str(&text).map_err(CanonicalError::from)?;
        Ok(Self { schema_version: SCHEMA_VERSION.into(), request_id, kind: D::KIND, body })
    }

    /// Parses and checks the schema version. Unknown kinds are rejected.
    pub fn parse(text: &str) -> Result<Self, WireError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let env: WireEnvelope = serde_path_to_error::deserialize(de).map_err(WireError::from_path)?;
        if env.schema_version != SCHEMA_VERSION {
            return Err(WireError::SchemaVersion(env.schema_version));
        }
        Ok(env)
    }

    pub fn decode<D: WireDocument>(&self) -> Result<D, WireError> {
        if self.kind != D::KIND {
            return Err(WireError::WrongKind { expected: D::KIND, got: self.kind });
        }
        decode_body(&self.body)
    }

    pub fn to_canonical(&self) -> Result<String, WireError> {
        Ok(canonical::to_string(self)?)
    }
}

/// Decodes a bare body with field-level diagnostics.
pub fn decode_body<D: DeserializeOwned>(v: &serde_json::Value) -> Result<D, WireError> {
    serde_path_to_error::deserialize(v).map_err(WireError::from_path)
}

/// Parses bare body text with field-level diagnostics.
pub fn parse_body<D: DeserializeOwned>(text: &str) -> Result<D, WireError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(WireError::from_path)
}

/// Canonical text of a document inside its envelope.
pub fn encode<D: WireDocument>(body: &D, request_id: Option<String>) -> Result<String, WireError> {
    WireEnvelope::wrap(body, request_id)?.to_canonical()
}

/// Canonical text → document → canonical text.
pub fn reencode<D: WireDocument>(text: &str) -> Result<String, WireError> {
    let env = WireEnvelope::parse(text)?;
    let doc: D = env.decode()?;
    encode(&doc, env.request_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceCreated {
    pub id: String,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceSnapshot {
    pub revision: u64,
    pub state: WorkspaceState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendBody {
    pub goal: String,
    #[serde(default)]
    pub engine: Option<Engine>,
    /// Return immediately with a pending proposal and poll the snapshot.
    #[serde(default, rename = "async")]
    pub run_async: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolveResult {
    pub revision: u64,
    pub state: WorkspaceState,
    pub record: AcceptanceRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpRequest {
    #[serde(default)]
    pub expected_revision: Option<u64>,
    pub op: Op,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpResult {
    pub revision: u64,
    pub effects: OpEffects,
    pub state: WorkspaceState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventBatch {
    pub events: Vec<InteractionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventAck {
    pub stored: usize,
    pub total: usize,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UserPose;

    #[test]
    fn envelope_roundtrip_and_version_check() {
        let doc = WorkspaceCreated { id: "a".into(), revision: 0 };
        let text = encode(&doc, Some("r1".into())).unwrap();
        assert_eq!(text, r#"{"body":{"id":"a","revision":0},"kind":"workspace_created","request_id":"r1","schema_version":"1"}"#);
        assert_eq!(reencode::<WorkspaceCreated>(&text).unwrap(), text);
        let bad = text.replace(r#""schema_version":"1""#, r#""schema_version":"2""#);
        assert!(matches!(WireEnvelope::parse(&bad), Err(WireError::SchemaVersion(_))));
        let unknown = text.replace("workspace_created", "teleport");
        assert!(matches!(WireEnvelope::parse(&unknown), Err(WireError::Field { .. })));
        let env = WireEnvelope::parse(&text).unwrap();
        assert!(matches!(env.decode::<EventAck>(), Err(WireError::WrongKind { .. })));
    }

    #[test]
    fn missing_field_reports_path() {
        let err = parse_body::<WorkspaceInit>(r#"{"zones":[]}"#).unwrap_err();
        match err {
            WireError::Field { message, .. } => assert!(message.contains("pose"), "{message}"),
            e => panic!("unexpected {e}"),
        }
        let err = parse_body::<WorkspaceInit>(r#"{"pose":{"position":[0,0,0],"forward":[0,0,1]},"zones":[{"id":1}]}"#).unwrap_err();
        match err {
            WireError::Field { path, .. } => assert!(path.starts_with("$.zones[0]"), "{path}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn state_roundtrip_is_byte_identical() {
        let s = WorkspaceState::new("w", UserPose::origin());
        let snap = WorkspaceSnapshot { revision: 0, state: s };
        let text = encode(&snap, None).unwrap();
        assert_eq!(reencode::<WorkspaceSnapshot>(&text).unwrap(), text);
    }
}
