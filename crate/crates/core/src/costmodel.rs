//! Interaction-cost signals and the placement cost matrix.
//!
//! Three raw signals describe a transition from one placed app to another:
//! pointing distance `F` between cells, head-turn angle `H` to the target
//! cell, and hand travel `M`. Each is min-max normalized over the candidate
//! cells of the current decision and combined as `λf·F̃ + λh·H̃ + λm·M̃`.
//!
//! The placement cost of app `i` in candidate cell `(k, j)` given already
//! placed apps `ℓ` is
//!
//! ```text
//! C[i,k,j] = Σ_ℓ  r_i r_ℓ P[i][ℓ] · c(i→ℓ) + r_ℓ r_i P[ℓ][i] · c(ℓ→i)
//! ```
//!
//! Candidates are the cells that are empty when the decision starts. During
//! planning there is no live hand data, so `M` is proxied by `F`, rescaled to
//! the observed mean hand travel once enough samples exist.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{head_turn_angle, GeometryError, UserPose};
use crate::ids::{AppId, CellRef, ZoneId};
use crate::layout::{LayoutError, ZoneSpec};
use crate::recommender::RelevanceSet;
use crate::scalar::Real;
use crate::telemetry::{SignalStats, TransitionMatrix};

/// Telemetry samples needed before hand travel replaces the pointing proxy.
pub const MIN_HAND_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("unknown zone {0}")]
    UnknownZone(ZoneId),
    #[error("weights must be non-negative with λf + λh + λm = 1")]
    BadWeights,
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct CostWeights<T> {
    pub lambda_f: T,
    pub lambda_h: T,
    pub lambda_m: T,
    /// Weight of the size-relevance term in per-zone sizing.
    pub lambda_s: T,
}

impl<T: Real> Default for CostWeights<T> {
    fn default() -> Self {
        let third = T::one() / T::lit(3.0);
        Self { lambda_f: third, lambda_h: third, lambda_m: third, lambda_s: T::lit(0.5) }
    }
}

impl<T: Real> CostWeights<T> {
    pub fn validate(&self) -> Result<(), CostError> {
        let all = [self.lambda_f, self.lambda_h, self.lambda_m, self.lambda_s];
        if all.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(CostError::BadWeights);
        }
        let sum = self.lambda_f + self.lambda_h + self.lambda_m;
        if (sum - T::one()).abs() > T::geom_tol().max(T::epsilon() * T::lit(8.0)) {
            return Err(CostError::BadWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scope", content = "zone")]
pub enum SignalScope {
    SameZone(ZoneId),
    CrossZone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalBundle<T> {
    /// Meters.
    pub f_raw: T,
    /// Radians.
    pub h_raw: T,
    /// Meters.
    pub m_raw: T,
    pub f_norm: T,
    pub h_norm: T,
    pub m_norm: T,
    pub scope: SignalScope,
}

impl<T: Real> SignalBundle<T> {
    pub fn raw(f: T, h: T, m: T, scope: SignalScope) -> Self {
        Self { f_raw: f, h_raw: h, m_raw: m, f_norm: T::zero(), h_norm: T::zero(), m_norm: T::zero(), scope }
    }
}

fn zone<T: Real>(zones: &[ZoneSpec<T>], id: ZoneId) -> Result<&ZoneSpec<T>, CostError> {
    zones.iter().find(|z| z.id == id).ok_or(CostError::UnknownZone(id))
}

/// Cell-center distance within a zone; zone-center distance across zones.
pub fn pointing_distance<T: Real>(a: CellRef, b: CellRef, zones: &[ZoneSpec<T>]) -> Result<T, CostError> {
    let za = zone(zones, a.zone)?;
    if a.zone == b.zone {
        Ok(za.cell_center(a.cell)?.distance(za.cell_center(b.cell)?))
    } else {
        let zb = zone(zones, b.zone)?;
        za.cell(a.cell)?;
        zb.cell(b.cell)?;
        Ok(za.position.distance(zb.position))
    }
}

fn min_max<T: Real>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    values.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn rescale<T: Real>(v: T, lo: T, hi: T) -> T {
    if hi > lo {
        ((v - lo) / (hi - lo)).max(T::zero()).min(T::one()).snap_unit()
    } else {
        T::zero()
    }
}

/// Min-max normalizes each signal over the candidate set. A constant signal
/// maps to 0. Normalized values are snapped to a `sqrt(eps)` grid so that
/// signals equal in exact arithmetic compare equal.
pub fn normalize_signals<T: Real>(candidates: &mut [SignalBundle<T>]) {
    let (flo, fhi) = min_max(candidates.iter().map(|b| b.f_raw));
    let (hlo, hhi) = min_max(candidates.iter().map(|b| b.h_raw));
    let (mlo, mhi) = min_max(candidates.iter().map(|b| b.m_raw));
    for b in candidates.iter_mut() {
        b.f_norm = rescale(b.f_raw, flo, fhi);
        b.h_norm = rescale(b.h_raw, hlo, hhi);
        b.m_norm = rescale(b.m_raw, mlo, mhi);
    }
}

/// `λf·F̃ + λh·H̃ + λm·M̃`.
pub fn instantaneous_cost<T: Real>(bundle: &SignalBundle<T>, weights: &CostWeights<T>) -> T {
    weights.lambda_f * bundle.f_norm + weights.lambda_h * bundle.h_norm + weights.lambda_m * bundle.m_norm
}

/// One summand of the cost matrix: both transition directions between app
/// `i` and app `ℓ`, each weighted by joint relevance and its frequency.
#[inline]
pub fn pair_cost<T: Real>(r_i: T, r_l: T, p_il: T, p_li: T, c_il: T, c_li: T) -> T {
    r_i * r_l * p_il * c_il + r_l * r_i * p_li * c_li
}

/// Geometry shared by every cost evaluation of one decision.
#[derive(Debug, Clone, Copy)]
pub struct CostContext<'a, T> {
    pub zones: &'a [ZoneSpec<T>],
    pub pose: &'a UserPose<T>,
    pub weights: CostWeights<T>,
    pub hand: SignalStats,
    /// Uniform factor applied to every raw signal (unit conversion).
    /// Normalization makes all costs independent of it.
    pub signal_scale: T,
}

impl<'a, T: Real> CostContext<'a, T> {
    pub fn new(zones: &'a [ZoneSpec<T>], pose: &'a UserPose<T>, weights: CostWeights<T>) -> Self {
        Self { zones, pose, weights, hand: SignalStats::default(), signal_scale: T::one() }
    }

    pub fn with_hand(mut self, hand: SignalStats) -> Self {
        self.hand = hand;
        self
    }

    pub fn with_signal_scale(mut self, scale: T) -> Self {
        self.signal_scale = scale;
        self
    }
}

/// Transition costs between every candidate cell and every anchor cell
/// (candidates plus occupied cells) of one decision.
///
/// `forward(a, b)` is `c(i→ℓ)` with `i` hypothetically in candidate `a` and
/// `ℓ` in anchor `b`; `backward(a, b)` is `c(ℓ→i)` for the same placement.
#[derive(Debug, Clone)]
pub struct PairCosts<T> {
    candidates: Vec<CellRef>,
    anchors: Vec<CellRef>,
    forward: Vec<Vec<T>>,
    backward: Vec<Vec<T>>,
}

impl<T: Real> PairCosts<T> {
    /// `occupied` lists cells already holding an app; every other cell of a
    /// non-occlusion zone is a candidate.
    pub fn build(ctx: &CostContext<'_, T>, occupied: &[CellRef]) -> Result<Self, CostError> {
        let mut candidates = Vec::new();
        let mut anchors = Vec::new();
        for z in ctx.zones.iter().filter(|z| !z.is_occlusion()) {
            for c in &z.cells {
                let r = CellRef { zone: z.id, cell: c.index };
                anchors.push(r);
                if c.occupant.is_none() && !occupied.contains(&r) {
                    candidates.push(r);
                }
            }
        }
        candidates.sort();
        anchors.sort();

        let head: Vec<T> = candidates
            .iter()
            .map(|c| Ok(head_turn_angle(ctx.pose, zone(ctx.zones, c.zone)?.cell_center(c.cell)?)?))
            .collect::<Result<_, CostError>>()?;
        let scale = ctx.signal_scale;
        let use_hand = ctx.hand.samples >= MIN_HAND_SAMPLES;
        let hand_mean = T::lit(ctx.hand.mean_hand_travel);

        let (nc, na) = (candidates.len(), anchors.len());
        let mut forward = vec![vec![T::zero(); na]; nc];
        let mut backward = vec![vec![T::zero(); na]; nc];
        for (bi, &b) in anchors.iter().enumerate() {
            let anchor_center = zone(ctx.zones, b.zone)?.cell_center(b.cell)?;
            let h_target = head_turn_angle(ctx.pose, anchor_center)?;
            let f: Vec<T> = candidates
                .iter()
                .map(|&a| pointing_distance(a, b, ctx.zones))
                .collect::<Result<_, _>>()?;
            let f_mean = if f.is_empty() { T::zero() } else { f.iter().copied().sum::<T>() / T::from_count(f.len()) };
            let m: Vec<T> = f
                .iter()
                .map(|&fv| if use_hand && f_mean > T::zero() { hand_mean * fv / f_mean } else { fv })
                .collect();
            let scope = |a: CellRef| if a.zone == b.zone { SignalScope::SameZone(b.zone) } else { SignalScope::CrossZone };

            let mut fwd: Vec<SignalBundle<T>> = candidates
                .iter()
                .enumerate()
                .map(|(ai, &a)| SignalBundle::raw(f[ai] * scale, h_target * scale, m[ai] * scale, scope(a)))
                .collect();
            let mut bwd: Vec<SignalBundle<T>> = candidates
                .iter()
                .enumerate()
                .map(|(ai, &a)| SignalBundle::raw(f[ai] * scale, head[ai] * scale, m[ai] * scale, scope(a)))
                .collect();
            normalize_signals(&mut fwd);
            normalize_signals(&mut bwd);
            for ai in 0..nc {
                forward[ai][bi] = instantaneous_cost(&fwd[ai], &ctx.weights);
                backward[ai][bi] = instantaneous_cost(&bwd[ai], &ctx.weights);
            }
        }
        Ok(Self { candidates, anchors, forward, backward })
    }

    /// Empty cells at the start of the decision, sorted by `(zone, cell)`.
    pub fn candidates(&self) -> &[CellRef] {
        &self.candidates
    }

    pub fn anchor_index(&self, cell: CellRef) -> Option<usize> {
        self.anchors.binary_search(&cell).ok()
    }

    /// Anchor index of the `i`-th candidate.
    pub fn candidate_anchor(&self, candidate: usize) -> usize {
        self.anchor_index(self.candidates[candidate]).expect("candidates are anchors")
    }

    pub fn forward(&self, candidate: usize, anchor: usize) -> T {
        self.forward[candidate][anchor]
    }

    pub fn backward(&self, candidate: usize, anchor: usize) -> T {
        self.backward[candidate][anchor]
    }
}

/// Per-candidate-cell placement cost for one app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix<T> {
    pub app: AppId,
    pub entries: Vec<CostEntry<T>>,
    /// Previously placed apps the costs are relative to.
    pub context: Vec<AppId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEntry<T> {
    pub cell: CellRef,
    pub cost: T,
}

impl<T: Real> CostMatrix<T> {
    /// Lowest-cost cell; ties go to the smallest `(zone, cell)`.
    pub fn argmin(&self) -> Option<CellRef> {
        let mut best: Option<&CostEntry<T>> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.cost < b.cost) {
                best = Some(e);
            }
        }
        best.map(|e| e.cell)
    }
}

/// Relevance used in cost terms: the predicted score, or 1 for apps the
/// user placed themselves.
pub fn relevance_or_one<T: Real>(relevance: &RelevanceSet<T>, app: &AppId) -> T {
    relevance.score(app).unwrap_or(T::one())
}

/// `C[i, k, j]` for `app` over every candidate cell, relative to the apps
/// in `prev` (summed in `(zone, cell)` order).
pub fn cost_matrix<T: Real>(
    app: &AppId,
    relevance: &RelevanceSet<T>,
    prev: &[(AppId, CellRef)],
    transitions: &TransitionMatrix<T>,
    table: &PairCosts<T>,
) -> CostMatrix<T> {
    let mut prev: Vec<&(AppId, CellRef)> = prev.iter().collect();
    prev.sort_by_key(|(_, c)| *c);
    let r_i = relevance_or_one(relevance, app);
    let entries = table
        .candidates()
        .iter()
        .enumerate()
        .filter(|(_, c)| !prev.iter().any(|(_, pc)| pc == *c))
        .map(|(ai, &cell)| {
            let mut cost = T::zero();
            for (l, lc) in &prev {
                let Some(bi) = table.anchor_index(*lc) else { continue };
                let r_l = relevance_or_one(relevance, l);
                cost = cost
                    + pair_cost(
                        r_i,
                        r_l,
                        transitions.get(app, l),
                        transitions.get(l, app),
                        table.forward(ai, bi),
                        table.backward(ai, bi),
                    );
            }
            CostEntry { cell, cost }
        })
        .collect();
    CostMatrix { app: app.clone(), entries, context: prev.iter().map(|(a, _)| a.clone()).collect() }
}
