//! Stage-1 application-to-cell assignment.
//!
//! Three engines share one problem description:
//! - [`greedy_assign`] places apps one at a time by descending relevance,
//!   each taking the cheapest empty cell given the apps placed before it.
//! - [`exhaustive_assign`] minimizes the order-free objective
//!   `Σ_i C_i` with every other assigned app as context, by branch and bound.
//! - [`llm_assign`] asks a provider, repairs its answer and backfills greedily.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{cost_matrix, pair_cost, relevance_or_one, CostContext, CostError, CostMatrix, PairCosts};
use crate::geometry::{angular_size, UserPose};
use crate::ids::{AppId, CellRef, ZoneId};
use crate::layout::ZoneSpec;
use crate::recommender::{
    call_with_retry, Provider, ProviderError, ProviderRequest, Purpose, RelevanceSet, Stage1Prompt, ASSIGNMENT_INSTRUCTIONS,
};
use crate::scalar::Real;
use crate::sizing::Readability;
use crate::telemetry::TransitionMatrix;

/// Upper bound on complete placements the exhaustive oracle will enumerate.
pub const EXHAUSTIVE_BUDGET: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("exhaustive search needs {needed} placements, budget is {budget}")]
    TooLarge { needed: u128, budget: u128 },
    #[error("pinned assignment is infeasible: {0}")]
    PinnedInfeasible(String),
    #[error("provider failed: {0}")]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AiProposed,
    UserPinned,
    UserOverridden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub zone: ZoneId,
    pub cell: usize,
    pub provenance: Provenance,
}

impl Placement {
    pub fn new(cell: CellRef, provenance: Provenance) -> Self {
        Self { zone: cell.zone, cell: cell.cell, provenance }
    }

    pub fn cell_ref(&self) -> CellRef {
        CellRef { zone: self.zone, cell: self.cell }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub entries: BTreeMap<AppId, Placement>,
    #[serde(default)]
    pub unassigned: Vec<AppId>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, app: AppId, cell: CellRef, provenance: Provenance) {
        self.entries.insert(app, Placement::new(cell, provenance));
    }

    pub fn get(&self, app: &AppId) -> Option<CellRef> {
        self.entries.get(app).map(Placement::cell_ref)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(app, cell)` pairs sorted by cell.
    pub fn by_cell(&self) -> Vec<(AppId, CellRef)> {
        let mut v: Vec<_> = self.entries.iter().map(|(a, p)| (a.clone(), p.cell_ref())).collect();
        v.sort_by_key(|(_, c)| *c);
        v
    }

    /// Pinned entries from windows already hosted in `zones`.
    pub fn pinned_from_zones<T: Real>(zones: &[ZoneSpec<T>]) -> Self {
        let mut a = Self::new();
        for z in zones {
            for (c, app) in z.occupied() {
                a.insert(app.clone(), CellRef { zone: z.id, cell: c.index }, Provenance::UserPinned);
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    UnknownCell,
    DuplicateCell,
    OverCapacity,
    ThetaOutsideZone,
    Readability,
}

impl Rule {
    pub fn is_structural(self) -> bool {
        self != Rule::Readability
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub subject: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_structurally_feasible(&self) -> bool {
        self.violations.iter().all(|v| !v.rule.is_structural())
    }

    fn push(&mut self, rule: Rule, subject: impl ToString, detail: impl Into<String>) {
        self.violations.push(Violation { rule, subject: subject.to_string(), detail: detail.into() });
    }
}

/// Checks every constraint on an assignment against the zones: unique
/// existing cells, per-zone capacity, split points inside their zone, and
/// the readability floor for every occupied cell.
pub fn check_feasibility<T: Real>(
    assignment: &Assignment,
    zones: &[ZoneSpec<T>],
    pose: &UserPose<T>,
    readability: &Readability<T>,
) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    let mut holder: BTreeMap<CellRef, &AppId> = BTreeMap::new();
    for z in zones {
        for (c, app) in z.occupied() {
            holder.insert(CellRef { zone: z.id, cell: c.index }, app);
        }
    }
    let mut per_zone: BTreeMap<ZoneId, BTreeSet<usize>> = BTreeMap::new();
    for (app, p) in &assignment.entries {
        let cell = p.cell_ref();
        let Some(z) = zones.iter().find(|z| z.id == p.zone && !z.is_occlusion()) else {
            report.push(Rule::UnknownCell, app, format!("{cell} is not a cell of any arrangement zone"));
            continue;
        };
        if p.cell >= z.cells.len() {
            report.push(Rule::UnknownCell, app, format!("{cell} does not exist in a {} zone", z.kind));
            continue;
        }
        match holder.get(&cell) {
            Some(other) if *other != app => {
                report.push(Rule::DuplicateCell, app, format!("{cell} already holds {other}"));
            }
            _ => {
                holder.insert(cell, app);
            }
        }
        per_zone.entry(z.id).or_default().insert(p.cell);
    }
    for z in zones.iter().filter(|z| !z.is_occlusion()) {
        let used: BTreeSet<usize> = z
            .occupied()
            .map(|(c, _)| c.index)
            .chain(per_zone.get(&z.id).into_iter().flatten().copied())
            .collect();
        let hosted = assignment.entries.values().filter(|p| p.zone == z.id).count()
            + z.occupied().filter(|(c, a)| assignment.get(a) != Some(CellRef { zone: z.id, cell: c.index })).count();
        if hosted > z.kind.cell_count() || used.len() > z.kind.cell_count() {
            report.push(Rule::OverCapacity, z.id, format!("{hosted} apps for {} cells", z.kind.cell_count()));
        }
        let t = z.theta;
        let inside = |v: T, len: T| v > T::zero() && v < len;
        if (z.kind.uses_w0() && !inside(t.w0, z.width)) || (z.kind.uses_h0() && !inside(t.h0, z.height)) {
            report.push(Rule::ThetaOutsideZone, z.id, format!("θ=({}, {}) outside {}×{}", t.w0, t.h0, z.width, z.height));
        }
        let tol = T::geom_tol() * (T::one() + z.width.max(z.height));
        for c in &z.cells {
            let out = c.origin[0] < -tol
                || c.origin[1] < -tol
                || c.origin[0] + c.width > z.width + tol
                || c.origin[1] + c.height > z.height + tol;
            if out {
                report.push(Rule::ThetaOutsideZone, CellRef { zone: z.id, cell: c.index }, "cell extends past the zone");
            }
        }
    }
    for (cell, app) in &holder {
        let Some(z) = zones.iter().find(|z| z.id == cell.zone) else { continue };
        let Ok(c) = z.cell(cell.cell) else { continue };
        let Ok(center) = z.cell_center(cell.cell) else { continue };
        let need = readability.required_angle(app);
        let d = center.distance(pose.position());
        match angular_size(c.width, c.height, d) {
            Ok((aw, ah)) if aw.min(ah) >= need => {}
            Ok((aw, ah)) => report.push(
                Rule::Readability,
                app,
                format!("{cell}: {:.3}° < {:.3}°", aw.min(ah).to_degrees(), need.to_degrees()),
            ),
            Err(e) => report.push(Rule::Readability, app, format!("{cell}: {e}")),
        }
    }
    report
}

/// Everything an engine needs for one decision.
#[derive(Debug, Clone, Copy)]
pub struct AssignmentProblem<'a, T> {
    pub relevance: &'a RelevanceSet<T>,
    pub pinned: &'a Assignment,
    pub transitions: &'a TransitionMatrix<T>,
    pub ctx: CostContext<'a, T>,
}

/// Precomputed tables for one problem: placement order, unary costs
/// against pinned apps, and the candidate-pair cost table.
struct Prepared<T> {
    /// Apps to place, in placement order.
    apps: Vec<AppId>,
    /// Apps that did not fit.
    overflow: Vec<AppId>,
    r: Vec<T>,
    /// `p[k][m]` among apps to place.
    p: Vec<Vec<T>>,
    /// `unary[k][a]`: cost of app `k` at candidate `a` against pinned apps.
    unary: Vec<Vec<T>>,
    table: PairCosts<T>,
    /// Anchor index of each candidate.
    anchor: Vec<usize>,
    pinned_cells: Vec<(AppId, CellRef)>,
}

impl<T: Real> Prepared<T> {
    fn new(problem: &AssignmentProblem<'_, T>) -> Result<Self, AssignError> {
        let mut pinned_cells = problem.pinned.by_cell();
        for z in problem.ctx.zones {
            for (c, app) in z.occupied() {
                let cell = CellRef { zone: z.id, cell: c.index };
                if !pinned_cells.iter().any(|(_, pc)| *pc == cell) {
                    pinned_cells.push((app.clone(), cell));
                }
            }
        }
        pinned_cells.sort_by_key(|(_, c)| *c);
        let occupied: Vec<CellRef> = pinned_cells.iter().map(|(_, c)| *c).collect();
        let table = PairCosts::build(&problem.ctx, &occupied)?;
        let capacity = table.candidates().len();

        let pinned_apps: BTreeSet<&AppId> = pinned_cells.iter().map(|(a, _)| a).collect();
        let ordered: Vec<AppId> = problem
            .relevance
            .by_relevance()
            .into_iter()
            .map(|e| e.app.clone())
            .filter(|a| !pinned_apps.contains(a))
            .collect();
        let n = ordered.len().min(capacity);
        let (apps, overflow) = (ordered[..n].to_vec(), ordered[n..].to_vec());

        let r: Vec<T> = apps.iter().map(|a| relevance_or_one(problem.relevance, a)).collect();
        let tm = problem.transitions;
        let p = apps.iter().map(|i| apps.iter().map(|l| tm.get(i, l)).collect()).collect();
        let anchor: Vec<usize> = (0..capacity).map(|a| table.candidate_anchor(a)).collect();
        let unary = apps
            .iter()
            .map(|app| {
                let m = cost_matrix(app, problem.relevance, &pinned_cells, tm, &table);
                m.entries.iter().map(|e| e.cost).collect()
            })
            .collect();
        Ok(Self { apps, overflow, r, p, unary, table, anchor, pinned_cells })
    }

    /// `T(k at a | m at b)`: both transition directions between new apps.
    #[inline]
    fn pair(&self, k: usize, a: usize, m: usize, b: usize) -> T {
        let bi = self.anchor[b];
        pair_cost(self.r[k], self.r[m], self.p[k][m], self.p[m][k], self.table.forward(a, bi), self.table.backward(a, bi))
    }

    /// Cost of app `k` at candidate `a` given `placed` new apps.
    fn step_cost(&self, k: usize, a: usize, placed: &[(usize, usize)]) -> T {
        let mut c = self.unary[k][a];
        for &(m, b) in placed {
            c = c + self.pair(k, a, m, b);
        }
        c
    }

    /// Order-free objective for `cells[k]` = candidate of app `k`. Summation
    /// order matches the exhaustive search exactly.
    fn total(&self, cells: &[usize]) -> T {
        let mut acc = T::zero();
        for k in 0..cells.len() {
            acc = self.extend(acc, cells, k);
        }
        acc
    }

    #[inline]
    fn extend(&self, mut acc: T, cells: &[usize], k: usize) -> T {
        acc = acc + self.unary[k][cells[k]];
        for m in 0..k {
            acc = acc + self.pair(k, cells[k], m, cells[m]);
            acc = acc + self.pair(m, cells[m], k, cells[k]);
        }
        acc
    }

    /// Greedy completion of a partial placement in app order.
    fn greedy_fill(&self, mut placed: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
        let mut taken: BTreeSet<usize> = placed.iter().map(|&(_, a)| a).collect();
        let done: BTreeSet<usize> = placed.iter().map(|&(k, _)| k).collect();
        for k in (0..self.apps.len()).filter(|k| !done.contains(k)) {
            let mut best: Option<(usize, T)> = None;
            for a in (0..self.table.candidates().len()).filter(|a| !taken.contains(a)) {
                let c = self.step_cost(k, a, &placed);
                if best.is_none_or(|(_, bc)| c < bc) {
                    best = Some((a, c));
                }
            }
            if let Some((a, _)) = best {
                taken.insert(a);
                placed.push((k, a));
            }
        }
        placed
    }

    fn to_assignment(&self, placed: &[(usize, usize)], problem: &AssignmentProblem<'_, T>) -> Assignment {
        let mut out = Assignment::new();
        for (app, _) in &self.pinned_cells {
            if problem.pinned.entries.contains_key(app) {
                out.entries.insert(app.clone(), problem.pinned.entries[app]);
            }
        }
        let mut placed_apps = BTreeSet::new();
        for &(k, a) in placed {
            out.insert(self.apps[k].clone(), self.table.candidates()[a], Provenance::AiProposed);
            placed_apps.insert(k);
        }
        out.unassigned = (0..self.apps.len())
            .filter(|k| !placed_apps.contains(k))
            .map(|k| self.apps[k].clone())
            .chain(self.overflow.iter().cloned())
            .collect();
        out
    }

    fn cells_of(&self, placed: &[(usize, usize)]) -> Vec<usize> {
        let mut cells = vec![usize::MAX; self.apps.len()];
        for &(k, a) in placed {
            cells[k] = a;
        }
        cells
    }
}

/// An engine's assignment with its objective value and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOutcome<T> {
    pub assignment: Assignment,
    /// Order-free objective `Σ_i C_i` over the newly placed apps.
    pub total_cost: T,
    pub fallback: bool,
    pub warnings: Vec<String>,
}

fn check_pinned<T: Real>(problem: &AssignmentProblem<'_, T>) -> Result<(), AssignError> {
    let report = check_feasibility(problem.pinned, problem.ctx.zones, problem.ctx.pose, &Readability::none());
    if report.is_structurally_feasible() {
        Ok(())
    } else {
        Err(AssignError::PinnedInfeasible(
            report.violations.iter().map(|v| format!("{}: {}", v.subject, v.detail)).collect::<Vec<_>>().join("; "),
        ))
    }
}

/// Sequential placement by descending relevance; ties go to the lowest
/// `(zone, cell)`.
pub fn greedy_assign<T: Real>(problem: &AssignmentProblem<'_, T>) -> Result<EngineOutcome<T>, AssignError> {
    check_pinned(problem)?;
    let prep = Prepared::new(problem)?;
    let placed = prep.greedy_fill(Vec::new());
    let total = prep.total(&prep.cells_of(&placed));
    Ok(EngineOutcome { assignment: prep.to_assignment(&placed, problem), total_cost: total, fallback: false, warnings: vec![] })
}

/// Number of complete placements of `apps` into `cells`: `cells!/(cells−apps)!`.
pub fn placement_count(cells: usize, apps: usize) -> u128 {
    if apps > cells {
        return 0;
    }
    let mut n: u128 = 1;
    for i in 0..apps {
        n = n.saturating_mul((cells - i) as u128);
    }
    n
}

struct Search<'p, T> {
    prep: &'p Prepared<T>,
    /// Lower bound on the cost still to come after depth `k`.
    rest: Vec<T>,
    cells: Vec<usize>,
    used: Vec<bool>,
    best: T,
    best_cells: Vec<usize>,
}

impl<T: Real> Search<'_, T> {
    fn dfs(&mut self, k: usize, acc: T) {
        let n = self.prep.apps.len();
        if k == n {
            if acc < self.best || (acc == self.best && self.cells < self.best_cells) {
                self.best = acc;
                self.best_cells.clone_from(&self.cells);
            }
            return;
        }
        let slack = T::one() + T::lit(1e-9);
        for a in 0..self.used.len() {
            if self.used[a] {
                continue;
            }
            self.cells[k] = a;
            let next = self.prep.extend(acc, &self.cells, k);
            // Pair terms are non-negative, so partial sums only grow.
            if next > self.best || next + self.rest[k + 1] > self.best * slack {
                continue;
            }
            self.used[a] = true;
            self.dfs(k + 1, next);
            self.used[a] = false;
        }
    }
}

/// Exact minimizer of the order-free objective. Ties resolve to the
/// lexicographically smallest cell tuple in placement order. Refuses
/// instances beyond [`EXHAUSTIVE_BUDGET`] complete placements.
pub fn exhaustive_assign<T: Real>(problem: &AssignmentProblem<'_, T>) -> Result<EngineOutcome<T>, AssignError> {
    check_pinned(problem)?;
    let prep = Prepared::new(problem)?;
    let (n, e) = (prep.apps.len(), prep.table.candidates().len());
    let needed = placement_count(e, n);
    if needed > EXHAUSTIVE_BUDGET {
        return Err(AssignError::TooLarge { needed, budget: EXHAUSTIVE_BUDGET });
    }
    let greedy = prep.cells_of(&prep.greedy_fill(Vec::new()));
    let mut rest = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        let min_u = prep.unary[k].iter().copied().fold(T::infinity(), T::min);
        rest[k] = rest[k + 1] + if min_u.is_finite() { min_u } else { T::zero() };
    }
    let mut s = Search {
        prep: &prep,
        rest,
        cells: vec![0; n],
        used: vec![false; e],
        best: prep.total(&greedy),
        best_cells: greedy,
    };
    s.dfs(0, T::zero());
    let placed: Vec<(usize, usize)> = s.best_cells.iter().enumerate().map(|(k, &a)| (k, a)).collect();
    Ok(EngineOutcome {
        assignment: prep.to_assignment(&placed, problem),
        total_cost: s.best,
        fallback: false,
        warnings: vec![],
    })
}

/// Order-free objective of an arbitrary assignment's non-pinned entries,
/// evaluated in placement order. Entries outside the candidate cells are
/// ignored.
pub fn total_cost<T: Real>(problem: &AssignmentProblem<'_, T>, assignment: &Assignment) -> Result<T, AssignError> {
    let prep = Prepared::new(problem)?;
    let mut acc = T::zero();
    let mut cells = Vec::new();
    let mut idx = Vec::new();
    for (k, app) in prep.apps.iter().enumerate() {
        let Some(cell) = assignment.get(app) else { continue };
        let Ok(a) = prep.table.candidates().binary_search(&cell) else { continue };
        idx.push(k);
        cells.push(a);
    }
    // Re-index so that pair lookups use original app indices.
    for j in 0..cells.len() {
        let (k, a) = (idx[j], cells[j]);
        acc = acc + prep.unary[k][a];
        for i in 0..j {
            let (m, b) = (idx[i], cells[i]);
            acc = acc + prep.pair(k, a, m, b);
            acc = acc + prep.pair(m, b, k, a);
        }
    }
    Ok(acc)
}

/// Per-app cost matrices for the prompt: each app against the pinned apps.
pub fn prompt_cost_matrices<T: Real>(problem: &AssignmentProblem<'_, T>) -> Result<Vec<CostMatrix<T>>, AssignError> {
    let prep = Prepared::new(problem)?;
    Ok(prep
        .apps
        .iter()
        .map(|app| cost_matrix(app, problem.relevance, &prep.pinned_cells, problem.transitions, &prep.table))
        .collect())
}

/// `C_i` of every non-pinned entry with all other assigned apps as context.
pub fn entry_costs<T: Real>(problem: &AssignmentProblem<'_, T>, assignment: &Assignment) -> Result<Vec<(AppId, CellRef, T)>, AssignError> {
    let prep = Prepared::new(problem)?;
    let placed: Vec<(usize, usize)> = prep
        .apps
        .iter()
        .enumerate()
        .filter_map(|(k, app)| {
            let cell = assignment.get(app)?;
            prep.table.candidates().binary_search(&cell).ok().map(|a| (k, a))
        })
        .collect();
    Ok(placed
        .iter()
        .map(|&(k, a)| {
            let others: Vec<(usize, usize)> = placed.iter().copied().filter(|&(m, _)| m != k).collect();
            (prep.apps[k].clone(), prep.table.candidates()[a], prep.step_cost(k, a, &others))
        })
        .collect())
}

#[derive(Deserialize)]
struct AssignmentResponse {
    assignment: Vec<AssignmentItem>,
}

#[derive(Deserialize)]
struct AssignmentItem {
    app: AppId,
    zone: ZoneId,
    cell: usize,
}

/// Provider-proposed assignment. Unknown apps, unknown or taken cells and
/// duplicates are dropped; remaining apps are backfilled greedily. Provider
/// failure yields the plain greedy result, flagged as fallback, unless
/// `allow_fallback` is false.
pub fn llm_assign<T: Real>(
    prompt: &Stage1Prompt,
    provider: &dyn Provider,
    timeout: std::time::Duration,
    allow_fallback: bool,
    problem: &AssignmentProblem<'_, T>,
) -> Result<EngineOutcome<T>, AssignError> {
    check_pinned(problem)?;
    let prep = Prepared::new(problem)?;
    let request = ProviderRequest {
        purpose: Purpose::Assignment,
        goal: problem.relevance.goal.text.clone(),
        instructions: ASSIGNMENT_INSTRUCTIONS.into(),
        payload: prompt.to_payload(),
        timeout,
    };
    let mut warnings = Vec::new();
    let parsed = call_with_retry(provider, &request).and_then(|text| {
        serde_json::from_str::<AssignmentResponse>(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
    });
    let items = match parsed {
        Ok(r) => r.assignment,
        Err(e) if allow_fallback => {
            warnings.push(format!("assignment fallback: {e}"));
            let placed = prep.greedy_fill(Vec::new());
            let total = prep.total(&prep.cells_of(&placed));
            return Ok(EngineOutcome { assignment: prep.to_assignment(&placed, problem), total_cost: total, fallback: true, warnings });
        }
        Err(e) => return Err(e.into()),
    };
    let mut placed: Vec<(usize, usize)> = Vec::new();
    for item in items {
        let cell = CellRef { zone: item.zone, cell: item.cell };
        let Some(k) = prep.apps.iter().position(|a| *a == item.app) else {
            warnings.push(format!("dropped {} → {cell}: not a placeable app", item.app));
            continue;
        };
        let Ok(a) = prep.table.candidates().binary_search(&cell) else {
            warnings.push(format!("dropped {} → {cell}: not an empty cell", item.app));
            continue;
        };
        if placed.iter().any(|&(pk, pa)| pk == k || pa == a) {
            warnings.push(format!("dropped {} → {cell}: duplicate", item.app));
            continue;
        }
        placed.push((k, a));
    }
    placed.sort_unstable();
    let placed = prep.greedy_fill(placed);
    let total = prep.total(&prep.cells_of(&placed));
    Ok(EngineOutcome { assignment: prep.to_assignment(&placed, problem), total_cost: total, fallback: false, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::CostWeights;
    use crate::geometry::Vec3;
    use crate::layout::TemplateKind;
    use crate::recommender::{build_stage1_prompt, Goal, MockMode, MockProvider, DEFAULT_TIMEOUT};
    use crate::telemetry::{estimate_transitions, InteractionEvent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose() -> UserPose<f64> {
        UserPose::origin()
    }

    fn origin() -> &'static UserPose<f64> {
        static POSE: std::sync::OnceLock<UserPose<f64>> = std::sync::OnceLock::new();
        POSE.get_or_init(UserPose::origin)
    }

    fn zone(id: u32, kind: TemplateKind, x: f64) -> ZoneSpec<f64> {
        ZoneSpec::new(ZoneId(id), kind, 1.2, 0.8, Vec3::new(x, 0.0, 2.0), None, &pose()).unwrap()
    }

    fn rel(apps: &[(&str, f64)]) -> RelevanceSet<f64> {
        RelevanceSet::new(Goal::typed("t").unwrap(), apps.iter().map(|(a, r)| (AppId::from(*a), *r)).collect())
    }

    fn tm(apps: &RelevanceSet<f64>, seed: u64) -> TransitionMatrix<f64> {
        let ids = apps.apps();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log: Vec<_> = (0..60).map(|t| InteractionEvent::focus(t as f64, ids[rng.gen_range(0..ids.len())].clone())).collect();
        estimate_transitions(&log, &ids, 0.5)
    }

    #[test]
    fn empty_assignment_feasible() {
        let z = vec![zone(1, TemplateKind::TwoByTwo, 0.0)];
        assert!(check_feasibility(&Assignment::new(), &z, &pose(), &Readability::default()).is_feasible());
    }

    #[test]
    fn duplicate_cell_is_one_violation() {
        let z = vec![zone(1, TemplateKind::TwoByTwo, 0.0)];
        let mut a = Assignment::new();
        a.insert("a".into(), CellRef::new(1, 0), Provenance::AiProposed);
        a.insert("b".into(), CellRef::new(1, 0), Provenance::AiProposed);
        let r = check_feasibility(&a, &z, &pose(), &Readability::none());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::DuplicateCell);
    }

    #[test]
    fn unknown_cell_and_occlusion_rejected() {
        let mut z = vec![zone(1, TemplateKind::OneByOne, 0.0)];
        z.push(ZoneSpec::occlusion(ZoneId(2), 0.5, 0.5, Vec3::new(3.0, 0.0, 2.0), &pose()).unwrap());
        let mut a = Assignment::new();
        a.insert("a".into(), CellRef::new(1, 1), Provenance::AiProposed);
        a.insert("b".into(), CellRef::new(2, 0), Provenance::AiProposed);
        let r = check_feasibility(&a, &z, &pose(), &Readability::none());
        assert_eq!(r.violations.iter().filter(|v| v.rule == Rule::UnknownCell).count(), 2);
    }

    #[test]
    fn readability_violation_matches_angle_oracle() {
        // 0.3 m cell at 3 m subtends atan(0.1) ≈ 5.71°; 20 rows at 0.5° need 10°.
        let z = vec![ZoneSpec::new(ZoneId(1), TemplateKind::OneByOne, 0.3, 0.3, Vec3::new(0.0, 0.0, 3.0), None, &pose()).unwrap()];
        let mut a = Assignment::new();
        a.insert("a".into(), CellRef::new(1, 0), Provenance::AiProposed);
        let r = check_feasibility(&a, &z, &pose(), &Readability::default());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::Readability);
        assert!((0.1f64).atan().to_degrees() < 10.0);
        let big = vec![ZoneSpec::new(ZoneId(1), TemplateKind::OneByOne, 0.6, 0.6, Vec3::new(0.0, 0.0, 3.0), None, &pose()).unwrap()];
        assert!((0.2f64).atan().to_degrees() > 10.0);
        assert!(check_feasibility(&a, &big, &pose(), &Readability::default()).is_feasible());
    }

    #[test]
    fn one_app_one_cell() {
        let z = vec![zone(1, TemplateKind::OneByOne, 0.0)];
        let r = rel(&[("a", 0.9)]);
        let p = tm(&r, 1);
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        let g = greedy_assign(&prob).unwrap();
        let e = exhaustive_assign(&prob).unwrap();
        assert_eq!(g.assignment.get(&"a".into()), Some(CellRef::new(1, 0)));
        assert_eq!(g.assignment, e.assignment);
    }

    #[test]
    fn overflow_goes_unassigned_and_no_zones_means_all_unassigned() {
        let z = vec![zone(1, TemplateKind::OneByTwoV, 0.0)];
        let r = rel(&[("a", 0.9), ("b", 0.8), ("c", 0.7)]);
        let p = tm(&r, 2);
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        let g = greedy_assign(&prob).unwrap();
        assert_eq!(g.assignment.unassigned, vec![AppId::from("c")]);
        let none: Vec<ZoneSpec<f64>> = vec![];
        let prob = AssignmentProblem { ctx: CostContext::new(&none, origin(), CostWeights::default()), ..prob };
        let g = greedy_assign(&prob).unwrap();
        assert!(g.assignment.is_empty());
        assert_eq!(g.assignment.unassigned.len(), 3);
    }

    #[test]
    fn pinned_entries_never_move() {
        let z = vec![zone(1, TemplateKind::TwoByTwo, 0.0), zone(2, TemplateKind::OneByTwoH, 1.5)];
        let r = rel(&[("a", 0.9), ("b", 0.8), ("c", 0.7)]);
        let p = tm(&r, 3);
        let mut pinned = Assignment::new();
        pinned.insert("pinned".into(), CellRef::new(1, 2), Provenance::UserPinned);
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        for out in [greedy_assign(&prob).unwrap(), exhaustive_assign(&prob).unwrap()] {
            assert_eq!(out.assignment.entries[&AppId::from("pinned")], Placement::new(CellRef::new(1, 2), Provenance::UserPinned));
            assert!(out.assignment.entries.values().filter(|p| p.provenance == Provenance::AiProposed).all(|p| p.cell_ref() != CellRef::new(1, 2)));
        }
    }

    #[test]
    fn exhaustive_refuses_large_instances() {
        let z: Vec<_> = (0..4).map(|i| zone(i + 1, TemplateKind::TwoByTwo, i as f64 * 1.5)).collect();
        let names: Vec<String> = (0..12).map(|i| format!("app{i}")).collect();
        let r = RelevanceSet::new(Goal::typed("t").unwrap(), names.iter().map(|n| (AppId::new(n.clone()), 0.5)).collect());
        let p = tm(&r, 4);
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        assert!(matches!(exhaustive_assign(&prob), Err(AssignError::TooLarge { .. })));
        assert_eq!(placement_count(8, 8), 40320);
        assert_eq!(placement_count(4, 3), 24);
    }

    #[test]
    fn eight_apps_eight_cells_completes() {
        let z = vec![zone(1, TemplateKind::TwoByTwo, 0.0), zone(2, TemplateKind::TwoByTwo, 1.5)];
        let names: Vec<String> = (0..8).map(|i| format!("app{i}")).collect();
        let r = RelevanceSet::new(Goal::typed("t").unwrap(), names.iter().enumerate().map(|(i, n)| (AppId::new(n.clone()), 1.0 - i as f64 * 0.1)).collect());
        let p = tm(&r, 5);
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        let e = exhaustive_assign(&prob).unwrap();
        let g = greedy_assign(&prob).unwrap();
        assert_eq!(e.assignment.len(), 8);
        assert!(e.total_cost <= g.total_cost);
        assert_eq!(total_cost(&prob, &e.assignment).unwrap(), e.total_cost);
        assert_eq!(total_cost(&prob, &g.assignment).unwrap(), g.total_cost);
    }

    /// Brute force over all permutations, independent of the search code.
    fn brute_force(prob: &AssignmentProblem<'_, f64>) -> f64 {
        let cells: Vec<CellRef> = prob.ctx.zones.iter().flat_map(|z| z.cells.iter().map(move |c| CellRef { zone: z.id, cell: c.index })).collect();
        let apps = prob.relevance.apps();
        let mut best = f64::INFINITY;
        let mut stack = vec![(Vec::<usize>::new())];
        while let Some(chosen) = stack.pop() {
            if chosen.len() == apps.len() {
                let mut a = Assignment::new();
                for (k, &c) in chosen.iter().enumerate() {
                    a.insert(apps[k].clone(), cells[c], Provenance::AiProposed);
                }
                best = best.min(total_cost(prob, &a).unwrap());
                continue;
            }
            for c in 0..cells.len() {
                if !chosen.contains(&c) {
                    let mut next = chosen.clone();
                    next.push(c);
                    stack.push(next);
                }
            }
        }
        best
    }

    #[test]
    fn exhaustive_le_greedy_and_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..60 {
            let z = vec![zone(1, TemplateKind::OneByTwoV, rng.gen_range(-1.0..0.0)), zone(2, TemplateKind::OneByTwoH, rng.gen_range(0.5..1.5))];
            let r = rel(&[("a", rng.gen()), ("b", rng.gen()), ("c", rng.gen())]);
            let p = tm(&r, trial);
            let pinned = Assignment::new();
            let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
            let g = greedy_assign(&prob).unwrap();
            let e = exhaustive_assign(&prob).unwrap();
            assert!(e.total_cost <= g.total_cost, "trial {trial}");
            let bf = brute_force(&prob);
            assert!((e.total_cost - bf).abs() <= 1e-12 * (1.0 + bf), "trial {trial}: {} vs {bf}", e.total_cost);
        }
    }

    #[test]
    fn relabel_invariance() {
        let z = vec![zone(1, TemplateKind::TwoByTwo, 0.0), zone(2, TemplateKind::OneByTwoV, 1.5)];
        let r = rel(&[("a", 0.9), ("b", 0.7), ("c", 0.5)]);
        let p = tm(&r, 11);
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        let rename = |a: &AppId| AppId::new(format!("x_{}", a.as_str()));
        let r2 = RelevanceSet::new(r.goal.clone(), r.entries.iter().map(|e| (rename(&e.app), e.r)).collect());
        let p2 = TransitionMatrix { apps: p.apps.iter().map(rename).collect(), p: p.p.clone() };
        let prob2 = AssignmentProblem { relevance: &r2, transitions: &p2, ..prob };
        for (x, y) in [(greedy_assign(&prob).unwrap(), greedy_assign(&prob2).unwrap()), (exhaustive_assign(&prob).unwrap(), exhaustive_assign(&prob2).unwrap())] {
            for (app, pl) in &x.assignment.entries {
                assert_eq!(y.assignment.entries[&rename(app)], *pl);
            }
        }
    }

    fn coding_problem() -> (Vec<ZoneSpec<f64>>, RelevanceSet<f64>, TransitionMatrix<f64>) {
        let z = vec![zone(1, TemplateKind::TwoByTwo, 0.0), zone(2, TemplateKind::OneByTwoV, 1.5)];
        let r = RelevanceSet::new(
            Goal::typed("coding a web game").unwrap(),
            vec![("ide".into(), 0.95), ("terminal".into(), 0.9), ("browser".into(), 0.8), ("chat".into(), 0.5)],
        );
        let p = tm(&r, 12);
        (z, r, p)
    }

    #[test]
    fn llm_repairs_duplicates_and_unknown_cells() {
        let (z, r, p) = coding_problem();
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        let prompt = build_stage1_prompt(&r, &z, &prompt_cost_matrices(&prob).unwrap(), &[], &r.goal);
        let out = llm_assign(&prompt, &MockProvider::bundled(), DEFAULT_TIMEOUT, true, &prob).unwrap();
        assert!(!out.fallback);
        assert_eq!(out.warnings.len(), 2);
        assert_eq!(out.assignment.get(&"ide".into()), Some(CellRef::new(1, 0)));
        assert_eq!(out.assignment.get(&"browser".into()), Some(CellRef::new(2, 0)));
        assert_eq!(out.assignment.len(), 4);
        assert!(check_feasibility(&out.assignment, &z, &pose(), &Readability::none()).is_feasible());
    }

    #[test]
    fn llm_offline_falls_back_to_greedy() {
        let (z, r, p) = coding_problem();
        let pinned = Assignment::new();
        let prob = AssignmentProblem { relevance: &r, pinned: &pinned, transitions: &p, ctx: CostContext::new(&z, origin(), CostWeights::default()) };
        let prompt = build_stage1_prompt(&r, &z, &[], &[], &r.goal);
        let off = MockProvider::bundled().with_mode(MockMode::Offline);
        let out = llm_assign(&prompt, &off, DEFAULT_TIMEOUT, true, &prob).unwrap();
        assert!(out.fallback);
        assert_eq!(out.assignment, greedy_assign(&prob).unwrap().assignment);
        assert!(llm_assign(&prompt, &off, DEFAULT_TIMEOUT, false, &prob).is_err());
    }
}
