//! The mixed-initiative workspace session.
//!
//! [`WorkspaceState`] is a value: every operation returns a new state or an
//! error and leaves its input untouched. After each operation zones and
//! free windows that intrude on an occlusion zone are swung aside; if that
//! is impossible the operation is rejected.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{face_user_orientation, GeometryError, PlanarRect, UserPose, Vec3};
use crate::ids::{AppId, CellRef, ZoneId};
use crate::layout::{
    check_occlusion_placement, move_inner_knob, move_outer_knob, occlusion_conflicts, resolve_intrusion, Axis, LayoutError,
    TemplateKind, ThetaParams, ZoneSpec,
};
use crate::pipeline::{recommend, Engine, PipelineConfig, PipelineError, ProposalBody, RecommendRequest};
use crate::recommender::{bundled_catalog, AppDescriptor, Goal, Provider};
use crate::telemetry::{InteractionEvent, TelemetryError, TelemetryLog};

pub const UNDO_DEPTH: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkspaceError {
    #[error("unknown zone {0}")]
    UnknownZone(ZoneId),
    #[error("zone id {0} already in use")]
    DuplicateZone(ZoneId),
    #[error("no window for app {0}")]
    UnknownWindow(AppId),
    #[error("app {0} already has a window")]
    DuplicateWindow(AppId),
    #[error("cell {0} is occupied")]
    Occupied(CellRef),
    #[error("zone {0} is an occlusion zone")]
    Intrusion(ZoneId),
    #[error("window {0} is not hosted in a cell")]
    NotHosted(AppId),
    #[error("a recommendation is already pending ({0})")]
    PendingExists(String),
    #[error("no pending recommendation")]
    NoPending,
    #[error("proposal {got} does not match pending proposal {expected}")]
    ProposalMismatch { expected: String, got: String },
    #[error("missing decisions for {0:?}")]
    IncompleteDecisions(Vec<AppId>),
    #[error("decision for {0} which is not in the proposal")]
    UnknownDecision(AppId),
    #[error("proposal no longer applies: {0}")]
    StaleProposal(String),
    #[error("expected revision {expected}, current revision is {actual}")]
    StaleRevision { expected: u64, actual: u64 },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("telemetry: {0}")]
    Telemetry(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreePose {
    pub position: Vec3<f64>,
    pub width: f64,
    pub height: f64,
}

/// One app window: either free-floating or hosted in a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowInstance {
    pub app: AppId,
    #[serde(default)]
    pub free_pose: Option<FreePose>,
    #[serde(default)]
    pub host: Option<CellRef>,
}

impl WindowInstance {
    pub fn free(app: AppId, pose: FreePose) -> Self {
        Self { app, free_pose: Some(pose), host: None }
    }

    pub fn hosted(app: AppId, cell: CellRef) -> Self {
        Self { app, free_pose: None, host: Some(cell) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub status: ProposalStatus,
    pub base_revision: u64,
    pub body: Option<ProposalBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Accepted,
    Declined,
    Overridden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum Decision {
    Accept,
    Decline,
    Override { zone: ZoneId, cell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchDecision {
    Accept,
    Decline,
}

/// Per-app decisions plus per-zone batch flags. An explicit per-app
/// decision wins over its zone's batch flag.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Resolution {
    #[serde(default)]
    pub proposal_id: Option<String>,
    #[serde(default)]
    pub decisions: BTreeMap<AppId, Decision>,
    #[serde(default)]
    pub zones: BTreeMap<ZoneId, BatchDecision>,
}

impl Resolution {
    pub fn accept_all() -> Self {
        Self::default().with_default(BatchDecision::Accept)
    }

    pub fn decline_all() -> Self {
        Self::default().with_default(BatchDecision::Decline)
    }

    fn with_default(mut self, d: BatchDecision) -> Self {
        self.zones.insert(ZoneId(u32::MAX), d);
        self
    }

    fn for_zone(&self, zone: ZoneId) -> Option<BatchDecision> {
        self.zones.get(&zone).or_else(|| self.zones.get(&ZoneId(u32::MAX))).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub app: AppId,
    pub proposed: CellRef,
    pub decision: DecisionKind,
    pub placed: Option<CellRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRecord {
    pub proposal_id: String,
    pub decisions: Vec<DecisionRecord>,
    pub accepted: usize,
    pub declined: usize,
    pub overridden: usize,
    pub layouts_adjusted: usize,
    /// Entries the user moved to a different cell.
    pub reorderings: usize,
}

impl AcceptanceRecord {
    pub fn reconciles(&self) -> bool {
        self.accepted + self.declined + self.overridden == self.decisions.len()
    }
}

/// Initial-state document for a workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceInit {
    #[serde(default)]
    pub id: Option<String>,
    pub pose: UserPose<f64>,
    #[serde(default)]
    pub zones: Vec<ZoneInit>,
    #[serde(default)]
    pub occlusions: Vec<OcclusionInit>,
    #[serde(default)]
    pub windows: Vec<WindowInstance>,
    #[serde(default)]
    pub catalog: Option<Vec<AppDescriptor>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneInit {
    pub id: ZoneId,
    pub template: TemplateKind,
    pub width: f64,
    pub height: f64,
    pub position: Vec3<f64>,
    #[serde(default)]
    pub theta: Option<ThetaParams<f64>>,
    #[serde(default)]
    pub locked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionInit {
    pub id: ZoneId,
    pub width: f64,
    pub height: f64,
    pub position: Vec3<f64>,
}

/// Arrangement operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Op {
    OpenWindow { app: AppId, position: Vec3<f64>, width: f64, height: f64 },
    CloseWindow { app: AppId },
    DragIn { app: AppId, zone: ZoneId, cell: usize },
    DragOut { app: AppId, position: Vec3<f64> },
    MoveInnerKnob { zone: ZoneId, axis: Axis, value: f64 },
    MoveOuterKnob { zone: ZoneId, width: f64, height: f64 },
    CreateZone { zone: ZoneInit },
    DeleteZone { zone: ZoneId },
    TranslateZone { zone: ZoneId, position: Vec3<f64> },
    SetLocked { zone: ZoneId, locked: bool },
    CreateOcclusion { occlusion: OcclusionInit },
    DeleteOcclusion { zone: ZoneId },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::OpenWindow { .. } => "open_window",
            Op::CloseWindow { .. } => "close_window",
            Op::DragIn { .. } => "drag_in",
            Op::DragOut { .. } => "drag_out",
            Op::MoveInnerKnob { .. } => "move_inner_knob",
            Op::MoveOuterKnob { .. } => "move_outer_knob",
            Op::CreateZone { .. } => "create_zone",
            Op::DeleteZone { .. } => "delete_zone",
            Op::TranslateZone { .. } => "translate_zone",
            Op::SetLocked { .. } => "set_locked",
            Op::CreateOcclusion { .. } => "create_occlusion",
            Op::DeleteOcclusion { .. } => "delete_occlusion",
        }
    }
}

/// What an operation changed beyond the state itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpEffects {
    /// A knob value was clamped to its admissible interval.
    pub clamped: bool,
    /// Zones swung aside to clear occlusion zones.
    pub moved_zones: Vec<ZoneId>,
    /// Free windows swung aside to clear occlusion zones.
    pub moved_windows: Vec<AppId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceState {
    pub id: String,
    pub pose: UserPose<f64>,
    pub zones: Vec<ZoneSpec<f64>>,
    pub occlusions: Vec<ZoneSpec<f64>>,
    pub windows: Vec<WindowInstance>,
    pub pending: Option<Proposal>,
    pub log: TelemetryLog,
    pub catalog: Vec<AppDescriptor>,
    pub records: Vec<AcceptanceRecord>,
    pub revision: u64,
}

fn free_rect(pose: &UserPose<f64>, w: &FreePose) -> Result<PlanarRect<f64>, GeometryError> {
    Ok(PlanarRect { center: w.position, orientation: face_user_orientation(w.position, pose)?, width: w.width, height: w.height })
}

impl WorkspaceState {
    pub fn new(id: impl Into<String>, pose: UserPose<f64>) -> Self {
        Self {
            id: id.into(),
            pose,
            zones: vec![],
            occlusions: vec![],
            windows: vec![],
            pending: None,
            log: TelemetryLog::new(),
            catalog: bundled_catalog(),
            records: vec![],
            revision: 0,
        }
    }

    /// Builds and validates a state from an initial document. Zones that
    /// intrude on occlusions are swung aside.
    pub fn from_init(init: &WorkspaceInit, default_id: &str) -> Result<Self, WorkspaceError> {
        let mut s = Self::new(init.id.clone().unwrap_or_else(|| default_id.to_owned()), init.pose);
        if let Some(c) = &init.catalog {
            crate::recommender::validate_catalog(c).map_err(|e| WorkspaceError::Invariant(e.to_string()))?;
            s.catalog = c.clone();
        }
        for o in &init.occlusions {
            s.create_occlusion(o)?;
        }
        for z in &init.zones {
            s.create_zone(z)?;
        }
        for w in &init.windows {
            if s.window(&w.app).is_some() {
                return Err(WorkspaceError::DuplicateWindow(w.app.clone()));
            }
            match (w.free_pose, w.host) {
                (Some(fp), None) => {
                    check_free(&fp)?;
                    s.windows.push(w.clone());
                }
                (None, Some(cell)) => {
                    s.windows.push(WindowInstance::free(w.app.clone(), FreePose { position: init.pose.position(), width: 1.0, height: 1.0 }));
                    s.drag_in(&w.app, cell)?;
                }
                _ => return Err(WorkspaceError::Invariant(format!("window {} needs exactly one of free_pose and host", w.app))),
            }
        }
        s.settle()?;
        s.validate()?;
        Ok(s)
    }

    pub fn zone(&self, id: ZoneId) -> Option<&ZoneSpec<f64>> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn window(&self, app: &AppId) -> Option<&WindowInstance> {
        self.windows.iter().find(|w| &w.app == app)
    }

    fn zone_mut(&mut self, id: ZoneId) -> Result<&mut ZoneSpec<f64>, WorkspaceError> {
        if self.occlusions.iter().any(|o| o.id == id) {
            return Err(WorkspaceError::Intrusion(id));
        }
        self.zones.iter_mut().find(|z| z.id == id).ok_or(WorkspaceError::UnknownZone(id))
    }

    fn window_index(&self, app: &AppId) -> Result<usize, WorkspaceError> {
        self.windows.iter().position(|w| &w.app == app).ok_or_else(|| WorkspaceError::UnknownWindow(app.clone()))
    }

    fn id_in_use(&self, id: ZoneId) -> bool {
        self.zones.iter().chain(&self.occlusions).any(|z| z.id == id)
    }

    /// Dimensions of the window of `app` as currently displayed.
    pub fn window_size(&self, app: &AppId) -> Option<(f64, f64)> {
        let w = self.window(app)?;
        match (w.free_pose, w.host) {
            (Some(fp), _) => Some((fp.width, fp.height)),
            (None, Some(cell)) => self.zone(cell.zone)?.cell(cell.cell).ok().map(|c| (c.width, c.height)),
            _ => None,
        }
    }

    /// Applies an operation, returning the new state.
    pub fn apply(&self, op: &Op, config: &PipelineConfig) -> Result<(Self, OpEffects), WorkspaceError> {
        let mut next = self.clone();
        let mut effects = OpEffects::default();
        match op {
            Op::OpenWindow { app, position, width, height } => {
                if next.window(app).is_some() {
                    return Err(WorkspaceError::DuplicateWindow(app.clone()));
                }
                let fp = FreePose { position: *position, width: *width, height: *height };
                check_free(&fp)?;
                next.windows.push(WindowInstance::free(app.clone(), fp));
            }
            Op::CloseWindow { app } => {
                let i = next.window_index(app)?;
                next.vacate(i)?;
                next.windows.remove(i);
            }
            Op::DragIn { app, zone, cell } => next.drag_in(app, CellRef { zone: *zone, cell: *cell })?,
            Op::DragOut { app, position } => next.drag_out(app, *position)?,
            Op::MoveInnerKnob { zone, axis, value } => {
                let bounds = config.sizing.bounds();
                let z = next.zone_mut(*zone)?;
                let moved = move_inner_knob(z, *axis, *value, bounds)?;
                effects.clamped = moved.clamped;
                *z = moved.zone;
            }
            Op::MoveOuterKnob { zone, width, height } => {
                let z = next.zone_mut(*zone)?;
                *z = move_outer_knob(z, *width, *height)?;
            }
            Op::CreateZone { zone } => next.create_zone(zone)?,
            Op::DeleteZone { zone } => {
                let z = next.zone(*zone).ok_or(WorkspaceError::UnknownZone(*zone))?.clone();
                for (c, app) in z.occupied() {
                    let center = z.cell_center(c.index)?;
                    let i = next.window_index(app)?;
                    next.windows[i] = WindowInstance::free(app.clone(), FreePose { position: center, width: c.width, height: c.height });
                }
                next.zones.retain(|x| x.id != *zone);
            }
            Op::TranslateZone { zone, position } => {
                let pose = next.pose;
                let z = next.zone_mut(*zone)?;
                *z = z.translated(*position, &pose)?;
            }
            Op::SetLocked { zone, locked } => next.zone_mut(*zone)?.locked = *locked,
            Op::CreateOcclusion { occlusion } => next.create_occlusion(occlusion)?,
            Op::DeleteOcclusion { zone } => {
                if !next.occlusions.iter().any(|o| o.id == *zone) {
                    return Err(WorkspaceError::UnknownZone(*zone));
                }
                next.occlusions.retain(|o| o.id != *zone);
            }
        }
        let (mz, mw) = next.settle()?;
        effects.moved_zones = mz;
        effects.moved_windows = mw;
        next.validate()?;
        next.revision = self.revision + 1;
        Ok((next, effects))
    }

    fn create_zone(&mut self, z: &ZoneInit) -> Result<(), WorkspaceError> {
        if self.id_in_use(z.id) {
            return Err(WorkspaceError::DuplicateZone(z.id));
        }
        if z.template == TemplateKind::OcclusionFree {
            return Err(WorkspaceError::Invariant("use create_occlusion for occlusion zones".into()));
        }
        let spec = ZoneSpec::new(z.id, z.template, z.width, z.height, z.position, z.theta, &self.pose)?.with_locked(z.locked);
        spec.validate()?;
        self.zones.push(spec);
        self.zones.sort_by_key(|z| z.id);
        Ok(())
    }

    fn create_occlusion(&mut self, o: &OcclusionInit) -> Result<(), WorkspaceError> {
        if self.id_in_use(o.id) {
            return Err(WorkspaceError::DuplicateZone(o.id));
        }
        let spec = ZoneSpec::occlusion(o.id, o.width, o.height, o.position, &self.pose)?;
        check_occlusion_placement(&self.occlusions, &spec, &self.pose)?;
        self.occlusions.push(spec);
        self.occlusions.sort_by_key(|z| z.id);
        Ok(())
    }

    fn vacate(&mut self, i: usize) -> Result<(), WorkspaceError> {
        if let Some(cell) = self.windows[i].host {
            self.zone_mut(cell.zone)?.cell_mut(cell.cell)?.occupant = None;
        }
        Ok(())
    }

    fn drag_in(&mut self, app: &AppId, cell: CellRef) -> Result<(), WorkspaceError> {
        let i = self.window_index(app)?;
        let z = self.zone_mut(cell.zone)?;
        let c = z.cell(cell.cell)?;
        match &c.occupant {
            Some(o) if o != app => return Err(WorkspaceError::Occupied(cell)),
            _ => {}
        }
        self.vacate(i)?;
        self.zone_mut(cell.zone)?.cell_mut(cell.cell)?.occupant = Some(app.clone());
        self.windows[i] = WindowInstance::hosted(app.clone(), cell);
        Ok(())
    }

    fn drag_out(&mut self, app: &AppId, position: Vec3<f64>) -> Result<(), WorkspaceError> {
        let i = self.window_index(app)?;
        let cell = self.windows[i].host.ok_or_else(|| WorkspaceError::NotHosted(app.clone()))?;
        let (width, height) = {
            let c = self.zone(cell.zone).ok_or(WorkspaceError::UnknownZone(cell.zone))?.cell(cell.cell)?;
            (c.width, c.height)
        };
        self.vacate(i)?;
        let fp = FreePose { position, width, height };
        check_free(&fp)?;
        self.windows[i] = WindowInstance::free(app.clone(), fp);
        Ok(())
    }

    /// Swings every intruding zone and free window aside.
    fn settle(&mut self) -> Result<(Vec<ZoneId>, Vec<AppId>), WorkspaceError> {
        let mut moved_zones = Vec::new();
        let mut moved_windows = Vec::new();
        if self.occlusions.is_empty() {
            return Ok((moved_zones, moved_windows));
        }
        let pose = self.pose;
        let conflicted: BTreeSet<ZoneId> = occlusion_conflicts(&self.zones, &self.occlusions, &pose).iter().map(|c| c.zone).collect();
        for z in self.zones.iter_mut().filter(|z| conflicted.contains(&z.id)) {
            *z = resolve_intrusion(z, &self.occlusions, &pose)?;
            moved_zones.push(z.id);
        }
        for w in &mut self.windows {
            let Some(fp) = w.free_pose else { continue };
            let proxy = ZoneSpec::new(ZoneId(u32::MAX), TemplateKind::OneByOne, fp.width, fp.height, fp.position, None, &pose)?;
            if occlusion_conflicts(std::slice::from_ref(&proxy), &self.occlusions, &pose).is_empty() {
                continue;
            }
            let resolved = resolve_intrusion(&proxy, &self.occlusions, &pose)
                .map_err(|_| WorkspaceError::Layout(LayoutError::Unresolvable { zone: ZoneId(u32::MAX) }))?;
            w.free_pose = Some(FreePose { position: resolved.position, ..fp });
            moved_windows.push(w.app.clone());
        }
        Ok((moved_zones, moved_windows))
    }

    /// Checks every state invariant.
    pub fn validate(&self) -> Result<(), WorkspaceError> {
        let bad = |m: String| Err(WorkspaceError::Invariant(m));
        let mut ids = BTreeSet::new();
        for z in self.zones.iter().chain(&self.occlusions) {
            if !ids.insert(z.id) {
                return bad(format!("duplicate zone id {}", z.id));
            }
            z.validate()?;
        }
        if self.zones.iter().any(ZoneSpec::is_occlusion) || self.occlusions.iter().any(|o| !o.is_occlusion()) {
            return bad("zone lists mix occlusion and arrangement zones".into());
        }
        for (i, a) in self.occlusions.iter().enumerate() {
            for b in &self.occlusions[i + 1..] {
                if a.footprint(&self.pose).overlaps(&b.footprint(&self.pose)) {
                    return bad(format!("occlusions {} and {} overlap", a.id, b.id));
                }
            }
        }
        let mut apps = BTreeSet::new();
        for w in &self.windows {
            if !apps.insert(&w.app) {
                return bad(format!("duplicate window {}", w.app));
            }
            match (w.free_pose, w.host) {
                (Some(fp), None) => {
                    check_free(&fp)?;
                    let fpr = crate::geometry::angular_footprint(&free_rect(&self.pose, &fp)?, &self.pose);
                    if self.occlusions.iter().any(|o| o.footprint(&self.pose).overlaps(&fpr)) {
                        return bad(format!("free window {} overlaps an occlusion zone", w.app));
                    }
                }
                (None, Some(cell)) => {
                    let Some(z) = self.zone(cell.zone) else {
                        return bad(format!("window {} hosted in missing or occlusion zone {}", w.app, cell.zone));
                    };
                    if z.cell(cell.cell)?.occupant.as_ref() != Some(&w.app) {
                        return bad(format!("cell {cell} does not record {}", w.app));
                    }
                }
                _ => return bad(format!("window {} must be either free or hosted", w.app)),
            }
        }
        for z in &self.zones {
            for (c, app) in z.occupied() {
                if self.window(app).and_then(|w| w.host) != Some(CellRef { zone: z.id, cell: c.index }) {
                    return bad(format!("cell {}/c{} holds {app} without a hosted window", z.id, c.index));
                }
            }
        }
        if let Some(c) = occlusion_conflicts(&self.zones, &self.occlusions, &self.pose).first() {
            return bad(format!("zone {} overlaps occlusion {}", c.zone, c.occlusion));
        }
        Ok(())
    }

    /// Appends telemetry atomically.
    pub fn ingest_events(&self, batch: &[InteractionEvent]) -> Result<(Self, usize), WorkspaceError> {
        let mut next = self.clone();
        let n = next.log.append(batch)?;
        next.revision = self.revision + 1;
        Ok((next, n))
    }

    /// Id the next proposal will carry.
    pub fn next_proposal_id(&self) -> String {
        format!("{}-r{}", self.id, self.revision)
    }

    /// Runs the pipeline on the committed layout and stores the result as
    /// the pending proposal. Committed zones and windows are not touched.
    pub fn request_recommendation(
        &self,
        goal: &Goal,
        engine: Engine,
        provider: Option<&dyn Provider>,
        config: &PipelineConfig,
    ) -> Result<Self, WorkspaceError> {
        if let Some(p) = &self.pending {
            if p.status != ProposalStatus::Failed {
                return Err(WorkspaceError::PendingExists(p.id.clone()));
            }
        }
        let body = self.run_pipeline(goal, engine, provider, config)?;
        Ok(self.with_proposal(self.next_proposal_id(), self.revision, Ok(body)))
    }

    /// Runs the pipeline without storing anything.
    pub fn run_pipeline(
        &self,
        goal: &Goal,
        engine: Engine,
        provider: Option<&dyn Provider>,
        config: &PipelineConfig,
    ) -> Result<ProposalBody, PipelineError> {
        let req = RecommendRequest {
            goal,
            pose: &self.pose,
            zones: &self.zones,
            occlusions: &self.occlusions,
            catalog: &self.catalog,
            events: self.log.events(),
            engine,
            provider,
        };
        recommend(&req, config)
    }

    /// Stores a finished (or failed) pipeline run as the pending proposal.
    pub fn with_proposal(&self, id: String, base_revision: u64, body: Result<ProposalBody, String>) -> Self {
        let mut next = self.clone();
        next.pending = Some(match body {
            Ok(b) => Proposal { id, status: ProposalStatus::Ready, base_revision, body: Some(b), error: None },
            Err(e) => Proposal { id, status: ProposalStatus::Failed, base_revision, body: None, error: Some(e) },
        });
        next.revision = self.revision + 1;
        next
    }

    /// Applies per-entry decisions to the pending proposal.
    pub fn resolve_proposal(&self, resolution: &Resolution) -> Result<(Self, AcceptanceRecord), WorkspaceError> {
        let proposal = self.pending.as_ref().ok_or(WorkspaceError::NoPending)?;
        if let Some(id) = &resolution.proposal_id {
            if id != &proposal.id {
                return Err(WorkspaceError::ProposalMismatch { expected: proposal.id.clone(), got: id.clone() });
            }
        }
        let body = match (&proposal.status, &proposal.body) {
            (ProposalStatus::Ready, Some(b)) => b,
            _ => return Err(WorkspaceError::NoPending),
        };
        for app in resolution.decisions.keys() {
            if !body.assignment.entries.contains_key(app) {
                return Err(WorkspaceError::UnknownDecision(app.clone()));
            }
        }
        let mut decided = Vec::new();
        let mut missing = Vec::new();
        for (app, p) in &body.assignment.entries {
            let d = resolution.decisions.get(app).copied().or_else(|| {
                resolution.for_zone(p.zone).map(|b| match b {
                    BatchDecision::Accept => Decision::Accept,
                    BatchDecision::Decline => Decision::Decline,
                })
            });
            match d {
                Some(d) => decided.push((app.clone(), p.cell_ref(), d)),
                None => missing.push(app.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(WorkspaceError::IncompleteDecisions(missing));
        }

        let mut next = self.clone();
        let accepted_zones: BTreeSet<ZoneId> =
            decided.iter().filter(|(_, _, d)| *d == Decision::Accept).map(|(_, c, _)| c.zone).collect();
        let mut layouts_adjusted = 0;
        for zid in &accepted_zones {
            let Some(sized) = body.zones.iter().find(|z| z.id == *zid) else { continue };
            let current = next.zone_mut(*zid).map_err(|_| WorkspaceError::StaleProposal(format!("zone {zid} no longer exists")))?;
            if current.kind != sized.kind {
                return Err(WorkspaceError::StaleProposal(format!("zone {zid} changed template")));
            }
            if current.locked {
                continue;
            }
            let resized = move_outer_knob(current, sized.width, sized.height)?.with_theta(sized.theta)?;
            if resized.width != current.width || resized.height != current.height || resized.theta != current.theta {
                layouts_adjusted += 1;
            }
            *current = resized;
        }

        let mut records = Vec::new();
        let (mut accepted, mut declined, mut overridden) = (0, 0, 0);
        let mut targets = BTreeSet::new();
        for (app, proposed, d) in decided {
            let (kind, target) = match d {
                Decision::Accept => (DecisionKind::Accepted, Some(proposed)),
                Decision::Decline => (DecisionKind::Declined, None),
                Decision::Override { zone, cell } => (DecisionKind::Overridden, Some(CellRef { zone, cell })),
            };
            match kind {
                DecisionKind::Accepted => accepted += 1,
                DecisionKind::Declined => declined += 1,
                DecisionKind::Overridden => overridden += 1,
            }
            if let Some(cell) = target {
                if !targets.insert(cell) {
                    return Err(WorkspaceError::Occupied(cell));
                }
                if next.window(&app).is_none() {
                    next.windows.push(WindowInstance::free(app.clone(), FreePose { position: next.pose.position(), width: 1.0, height: 1.0 }));
                }
                next.drag_in(&app, cell)?;
            }
            records.push(DecisionRecord { app, proposed, decision: kind, placed: target });
        }
        let record = AcceptanceRecord {
            proposal_id: proposal.id.clone(),
            decisions: records,
            accepted,
            declined,
            overridden,
            layouts_adjusted,
            reorderings: overridden,
        };
        next.pending = None;
        next.settle()?;
        next.validate()?;
        next.records.push(record.clone());
        next.revision = self.revision + 1;
        Ok((next, record))
    }
}

impl From<TelemetryError> for WorkspaceError {
    fn from(e: TelemetryError) -> Self {
        WorkspaceError::Telemetry(e.to_string())
    }
}

fn check_free(fp: &FreePose) -> Result<(), WorkspaceError> {
    if !(fp.width > 0.0 && fp.height > 0.0 && fp.width.is_finite() && fp.height.is_finite()) {
        return Err(WorkspaceError::Layout(LayoutError::NonPositive { what: "window size", value: fp.width.min(fp.height) }));
    }
    if !fp.position.is_finite() {
        return Err(WorkspaceError::Geometry(GeometryError::NonFinite { what: "window position" }));
    }
    Ok(())
}

/// A session: the current state plus undo history.
#[derive(Debug, Clone)]
pub struct Workspace {
    state: WorkspaceState,
    history: VecDeque<WorkspaceState>,
    depth: usize,
}

impl Workspace {
    pub fn new(state: WorkspaceState) -> Self {
        Self { state, history: VecDeque::new(), depth: UNDO_DEPTH }
    }

    pub fn state(&self) -> &WorkspaceState {
        &self.state
    }

    pub fn revision(&self) -> u64 {
        self.state.revision
    }

    /// Replaces the state, remembering the previous one for undo.
    pub fn commit(&mut self, next: WorkspaceState) {
        let prev = std::mem::replace(&mut self.state, next);
        self.history.push_back(prev);
        while self.history.len() > self.depth {
            self.history.pop_front();
        }
    }

    pub fn apply(&mut self, op: &Op, config: &PipelineConfig) -> Result<OpEffects, WorkspaceError> {
        let (next, effects) = self.state.apply(op, config)?;
        self.commit(next);
        Ok(effects)
    }

    /// Restores the previous state under a new revision.
    pub fn undo(&mut self) -> Result<(), WorkspaceError> {
        let mut prev = self.history.pop_back().ok_or(WorkspaceError::NothingToUndo)?;
        prev.revision = self.state.revision + 1;
        self.state = prev;
        Ok(())
    }

    pub fn undo_len(&self) -> usize {
        self.history.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::MockProvider;

    fn init() -> WorkspaceInit {
        WorkspaceInit {
            id: Some("ws".into()),
            pose: UserPose::origin(),
            zones: vec![
                ZoneInit { id: ZoneId(1), template: TemplateKind::TwoByTwo, width: 1.2, height: 0.8, position: Vec3::new(-0.8, 0.0, 2.0), theta: None, locked: false },
                ZoneInit { id: ZoneId(2), template: TemplateKind::OneByTwoV, width: 1.0, height: 0.8, position: Vec3::new(0.8, 0.0, 2.0), theta: None, locked: false },
            ],
            occlusions: vec![],
            windows: vec![WindowInstance::free("notes".into(), FreePose { position: Vec3::new(0.0, 1.2, 2.0), width: 0.4, height: 0.3 })],
            catalog: None,
        }
    }

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn drag_in_snaps_and_drag_out_inherits() {
        let s = WorkspaceState::from_init(&init(), "x").unwrap();
        let (s1, _) = s.apply(&Op::DragIn { app: "notes".into(), zone: ZoneId(1), cell: 0 }, &cfg()).unwrap();
        assert_eq!(s1.revision, 1);
        assert_eq!(s1.window_size(&"notes".into()), Some((0.6, 0.4)));
        assert_eq!(s1.zone(ZoneId(1)).unwrap().cells[0].occupant, Some("notes".into()));
        let (s2, _) = s1.apply(&Op::DragOut { app: "notes".into(), position: Vec3::new(0.0, 1.0, 2.0) }, &cfg()).unwrap();
        assert_eq!(s2.window_size(&"notes".into()), Some((0.6, 0.4)));
        assert_eq!(s2.zone(ZoneId(1)).unwrap().cells[0].occupant, None);
    }

    #[test]
    fn drop_on_occupied_cell_fails_without_change() {
        let s = WorkspaceState::from_init(&init(), "x").unwrap();
        let (s1, _) = s.apply(&Op::OpenWindow { app: "ide".into(), position: Vec3::new(0.0, -1.0, 2.0), width: 0.5, height: 0.4 }, &cfg()).unwrap();
        let (s2, _) = s1.apply(&Op::DragIn { app: "ide".into(), zone: ZoneId(1), cell: 0 }, &cfg()).unwrap();
        let before = s2.clone();
        let err = s2.apply(&Op::DragIn { app: "notes".into(), zone: ZoneId(1), cell: 0 }, &cfg()).unwrap_err();
        assert_eq!(err, WorkspaceError::Occupied(CellRef::new(1, 0)));
        assert_eq!(s2, before);
    }

    #[test]
    fn occlusion_pushes_zone_aside_and_rejects_hosting() {
        let s = WorkspaceState::from_init(&init(), "x").unwrap();
        let op = Op::CreateOcclusion { occlusion: OcclusionInit { id: ZoneId(9), width: 0.6, height: 0.6, position: Vec3::new(0.8, 0.0, 2.0) } };
        let (s1, eff) = s.apply(&op, &cfg()).unwrap();
        assert_eq!(eff.moved_zones, vec![ZoneId(2)]);
        assert!(occlusion_conflicts(&s1.zones, &s1.occlusions, &s1.pose).is_empty());
        let err = s1.apply(&Op::DragIn { app: "notes".into(), zone: ZoneId(9), cell: 0 }, &cfg()).unwrap_err();
        assert_eq!(err, WorkspaceError::Intrusion(ZoneId(9)));
        let overlap = Op::CreateOcclusion { occlusion: OcclusionInit { id: ZoneId(10), width: 0.6, height: 0.6, position: Vec3::new(0.9, 0.0, 2.0) } };
        assert!(matches!(s1.apply(&overlap, &cfg()), Err(WorkspaceError::Layout(LayoutError::OcclusionOverlap { .. }))));
    }

    #[test]
    fn knob_clamps() {
        let s = WorkspaceState::from_init(&init(), "x").unwrap();
        let (s1, eff) = s.apply(&Op::MoveInnerKnob { zone: ZoneId(1), axis: Axis::Vertical, value: 0.01 }, &cfg()).unwrap();
        assert!(eff.clamped);
        assert!((s1.zone(ZoneId(1)).unwrap().theta.w0 - 0.18).abs() < 1e-12);
    }

    fn with_proposal() -> WorkspaceState {
        let s = WorkspaceState::from_init(&init(), "x").unwrap();
        let goal = Goal::typed("prepare a conference talk with my team").unwrap();
        s.request_recommendation(&goal, Engine::Greedy, Some(&MockProvider::bundled()), &cfg()).unwrap()
    }

    #[test]
    fn proposal_is_non_destructive_and_exclusive() {
        let s = WorkspaceState::from_init(&init(), "x").unwrap();
        let p = with_proposal();
        assert_eq!(p.zones, s.zones);
        assert_eq!(p.windows, s.windows);
        assert_eq!(p.revision, s.revision + 1);
        let body = p.pending.as_ref().unwrap().body.as_ref().unwrap();
        assert_eq!(body.assignment.len(), 6);
        assert_eq!(body.assignment.unassigned.len(), 2);
        let goal = Goal::typed("again").unwrap();
        assert!(matches!(p.request_recommendation(&goal, Engine::Greedy, None, &cfg()), Err(WorkspaceError::PendingExists(_))));
    }

    #[test]
    fn accept_all_matches_proposal() {
        let p = with_proposal();
        let body = p.pending.as_ref().unwrap().body.clone().unwrap();
        let (s, rec) = p.resolve_proposal(&Resolution::accept_all()).unwrap();
        assert!(rec.reconciles());
        assert_eq!(rec.accepted, 6);
        for z in &body.zones {
            assert_eq!(s.zone(z.id).unwrap(), z);
        }
        assert!(s.pending.is_none());
    }

    #[test]
    fn decline_all_leaves_layout() {
        let p = with_proposal();
        let (s, rec) = p.resolve_proposal(&Resolution::decline_all()).unwrap();
        assert_eq!(rec.declined, 6);
        assert_eq!(s.zones, p.zones);
        assert_eq!(s.windows, p.windows);
        assert_eq!(s.revision, p.revision + 1);
    }

    #[test]
    fn mixed_batches_resize_only_accepted_zone() {
        let p = with_proposal();
        let body = p.pending.as_ref().unwrap().body.clone().unwrap();
        let zones: BTreeSet<ZoneId> = body.assignment.entries.values().map(|e| e.zone).collect();
        assert_eq!(zones.len(), 2, "fixture spreads over both zones");
        let mut r = Resolution::default();
        r.zones.insert(ZoneId(1), BatchDecision::Accept);
        r.zones.insert(ZoneId(2), BatchDecision::Decline);
        let (s, rec) = p.resolve_proposal(&r).unwrap();
        assert!(rec.reconciles());
        assert_eq!(s.zone(ZoneId(2)), p.zone(ZoneId(2)));
        assert_eq!(s.zone(ZoneId(1)).unwrap(), body.zones.iter().find(|z| z.id == ZoneId(1)).unwrap());
    }

    #[test]
    fn incomplete_decisions_rejected() {
        let p = with_proposal();
        let mut r = Resolution::default();
        r.zones.insert(ZoneId(1), BatchDecision::Accept);
        assert!(matches!(p.resolve_proposal(&r), Err(WorkspaceError::IncompleteDecisions(_))));
    }

    #[test]
    fn undo_restores_with_new_revision() {
        let mut w = Workspace::new(WorkspaceState::from_init(&init(), "x").unwrap());
        let before = w.state().clone();
        w.apply(&Op::DragIn { app: "notes".into(), zone: ZoneId(2), cell: 1 }, &cfg()).unwrap();
        w.undo().unwrap();
        assert_eq!(w.state().zones, before.zones);
        assert_eq!(w.revision(), 2);
        assert!(w.undo().is_err());
    }
}
