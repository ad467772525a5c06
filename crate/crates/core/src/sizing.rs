//! Stage-2 per-zone split optimization and the readability scale-up.
//!
//! For a zone with assigned apps `A` the objective at split `θ` is
//!
//! ```text
//! J(θ) = Σ_{i≠j ∈ A} r_i r_j P[i][j] (λf F̃_ij(θ) + λh H̃_j + λm M̃_ij)  −  λs Σ_i r_i A_i(θ) / (W·H)
//! ```
//!
//! `F̃` is the cell-center distance over the zone diagonal, `H̃` the head
//! turn to the cell at the initial split over π, and `M̃` the initial-split
//! `F̃`. Only `F̃` and the areas move with `θ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::CostWeights;
use crate::geometry::{angular_size, head_turn_angle, GeometryError, UserPose};
use crate::ids::{AppId, ZoneId};
use crate::layout::{instantiate, KnobBounds, LayoutError, ThetaParams, ZoneSpec};
use crate::recommender::{AppDescriptor, RelevanceSet};
use crate::scalar::Real;
use crate::telemetry::TransitionMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizingError {
    #[error("invalid sizing config: {0}")]
    Config(&'static str),
    #[error("zone {0} is an occlusion zone")]
    Occlusion(ZoneId),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Angles are radians internally and degrees on the wire.
pub mod degrees {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::scalar::Real;

    pub fn serialize<T: Real, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.as_f64().to_degrees())
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        Ok(T::lit(f64::deserialize(d)?.to_radians()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SizingConfig<T> {
    #[serde(rename = "alpha_min_deg", with = "degrees")]
    pub alpha_min: T,
    pub omega_margin: T,
    pub grid_resolution: usize,
    pub lambda_s: T,
    pub max_scale: T,
    pub default_rows: u32,
}

impl<T: Real> Default for SizingConfig<T> {
    fn default() -> Self {
        Self {
            alpha_min: T::lit(0.5f64.to_radians()),
            omega_margin: T::lit(0.15),
            grid_resolution: 41,
            lambda_s: T::lit(0.5),
            max_scale: T::lit(3.0),
            default_rows: 20,
        }
    }
}

impl<T: Real> SizingConfig<T> {
    pub fn validate(&self) -> Result<(), SizingError> {
        if !(self.omega_margin > T::zero() && self.omega_margin < T::lit(0.5)) {
            return Err(SizingError::Config("omega_margin must lie in (0, 0.5)"));
        }
        if self.grid_resolution < 3 {
            return Err(SizingError::Config("grid_resolution must be at least 3"));
        }
        if !(self.alpha_min > T::zero()) {
            return Err(SizingError::Config("alpha_min must be positive"));
        }
        if !(self.lambda_s >= T::zero()) {
            return Err(SizingError::Config("lambda_s must be non-negative"));
        }
        if !(self.max_scale >= T::one()) {
            return Err(SizingError::Config("max_scale must be at least 1"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> KnobBounds<T> {
        KnobBounds { margin: self.omega_margin }
    }
}

/// Minimum legible angle per app: `α_min · rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Readability<T> {
    #[serde(rename = "alpha_min_deg", with = "degrees")]
    pub alpha_min: T,
    pub default_rows: u32,
    #[serde(default)]
    pub rows: BTreeMap<AppId, u32>,
}

impl<T: Real> Default for Readability<T> {
    fn default() -> Self {
        let c = SizingConfig::<T>::default();
        Self { alpha_min: c.alpha_min, default_rows: c.default_rows, rows: BTreeMap::new() }
    }
}

impl<T: Real> Readability<T> {
    /// No readability requirement.
    pub fn none() -> Self {
        Self { alpha_min: T::zero(), default_rows: 0, rows: BTreeMap::new() }
    }

    pub fn from_catalog(config: &SizingConfig<T>, catalog: &[AppDescriptor]) -> Self {
        Self {
            alpha_min: config.alpha_min,
            default_rows: config.default_rows,
            rows: catalog.iter().map(|a| (a.id.clone(), a.min_rows)).collect(),
        }
    }

    pub fn rows_for(&self, app: &AppId) -> u32 {
        self.rows.get(app).copied().unwrap_or(self.default_rows)
    }

    /// Radians.
    pub fn required_angle(&self, app: &AppId) -> T {
        self.alpha_min * T::from_count(self.rows_for(app) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult<T> {
    pub zone: ZoneId,
    /// Optimal split before any scale-up.
    pub theta_star: ThetaParams<T>,
    pub scale_factor: T,
    pub objective_value: T,
    pub evaluated_points: usize,
    /// The required scale exceeded the configured maximum.
    #[serde(default)]
    pub clamped: bool,
    /// Apps still below the readability floor after scale-up.
    #[serde(default)]
    pub unreadable: Vec<AppId>,
}

/// Area of one cell at split `theta`.
pub fn cell_area<T: Real>(zone: &ZoneSpec<T>, index: usize, theta: ThetaParams<T>) -> Result<T, SizingError> {
    let cells = instantiate(zone.kind, zone.width, zone.height, theta.pinned(zone.kind, zone.width, zone.height))?;
    cells
        .get(index)
        .map(|c| c.area())
        .ok_or(SizingError::Layout(LayoutError::NoSuchCell { zone: zone.id, cell: index }))
}

/// Inputs shared by every objective evaluation of one zone.
#[derive(Debug, Clone, Copy)]
pub struct ZoneInputs<'a, T> {
    pub relevance: &'a RelevanceSet<T>,
    pub transitions: &'a TransitionMatrix<T>,
    pub weights: &'a CostWeights<T>,
    pub config: &'a SizingConfig<T>,
    pub pose: &'a UserPose<T>,
}

/// θ-independent parts of the objective for one zone.
struct Prepared<T> {
    cells: Vec<usize>,
    r: Vec<T>,
    p: Vec<Vec<T>>,
    /// Head-turn term per app, fixed at the initial split.
    h: Vec<T>,
    /// Pointing term per pair, fixed at the initial split (hand proxy).
    m: Vec<Vec<T>>,
    diag: T,
    area: T,
}

fn prepare<T: Real>(zone: &ZoneSpec<T>, inputs: &ZoneInputs<'_, T>) -> Result<Prepared<T>, SizingError> {
    if zone.is_occlusion() {
        return Err(SizingError::Occlusion(zone.id));
    }
    let occ: Vec<(usize, &AppId)> = zone.occupied().map(|(c, a)| (c.index, a)).collect();
    let r = occ.iter().map(|(_, a)| inputs.relevance.score(a).unwrap_or(T::one())).collect();
    let p = occ.iter().map(|(_, i)| occ.iter().map(|(_, j)| inputs.transitions.get(i, j)).collect()).collect();
    let h = occ
        .iter()
        .map(|(c, _)| Ok(head_turn_angle(inputs.pose, zone.cell_center(*c)?)? / T::PI()))
        .collect::<Result<Vec<T>, SizingError>>()?;
    let diag = zone.width.hypot(zone.height);
    let centers: Vec<(T, T)> = occ.iter().map(|(c, _)| zone.cells[*c].center_local()).collect();
    let m = centers.iter().map(|a| centers.iter().map(|b| dist2(*a, *b) / diag).collect()).collect();
    Ok(Prepared { cells: occ.iter().map(|(c, _)| *c).collect(), r, p, h, m, diag, area: zone.width * zone.height })
}

fn dist2<T: Real>(a: (T, T), b: (T, T)) -> T {
    (a.0 - b.0).hypot(a.1 - b.1)
}

fn evaluate<T: Real>(zone: &ZoneSpec<T>, prep: &Prepared<T>, w: &CostWeights<T>, lambda_s: T, theta: ThetaParams<T>) -> Result<T, SizingError> {
    let cells = instantiate(zone.kind, zone.width, zone.height, theta)?;
    let centers: Vec<(T, T)> = prep.cells.iter().map(|&c| cells[c].center_local()).collect();
    let n = prep.cells.len();
    let mut cost = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let f = dist2(centers[i], centers[j]) / prep.diag;
            let c = w.lambda_f * f + w.lambda_h * prep.h[j] + w.lambda_m * prep.m[i][j];
            cost = cost + prep.r[i] * prep.r[j] * prep.p[i][j] * c;
        }
    }
    let mut size = T::zero();
    for (k, &c) in prep.cells.iter().enumerate() {
        size = size - prep.r[k] * cells[c].area() / prep.area;
    }
    Ok(cost + lambda_s * size)
}

/// Objective at `theta` for the apps hosted in `zone` (its occupants).
pub fn zone_objective<T: Real>(zone: &ZoneSpec<T>, inputs: &ZoneInputs<'_, T>, theta: ThetaParams<T>) -> Result<T, SizingError> {
    let prep = prepare(zone, inputs)?;
    evaluate(zone, &prep, inputs.weights, inputs.config.lambda_s, theta.pinned(zone.kind, zone.width, zone.height))
}

/// `i`-th of `n` evenly spaced points on `[lo, hi]`.
pub fn grid_point<T: Real>(lo: T, hi: T, i: usize, n: usize) -> T {
    lo + (hi - lo) * T::from_count(i) / T::from_count(n - 1)
}

/// Grid values searched along one axis: the full grid when the template
/// has that divider, otherwise the pinned midpoint.
pub fn axis_grid<T: Real>(active: bool, length: T, config: &SizingConfig<T>) -> Vec<T> {
    if !active {
        return vec![length / T::lit(2.0)];
    }
    let (lo, hi) = config.bounds().interval(length);
    let n = config.grid_resolution;
    (0..n).map(|i| grid_point(lo, hi, i, n)).collect()
}

/// Values within this distance of the grid minimum count as ties.
pub fn tie_tolerance<T: Real>(min: T) -> T {
    T::epsilon() * T::lit(1024.0) * min.abs().max(T::one())
}

/// Grid search of the split. Ties keep the smallest `w0`, then `h0`.
/// Locked zones return their current split.
pub fn optimize_zone<T: Real>(zone: &ZoneSpec<T>, inputs: &ZoneInputs<'_, T>) -> Result<SizingResult<T>, SizingError> {
    inputs.config.validate()?;
    let prep = prepare(zone, inputs)?;
    let (w, ls) = (inputs.weights, inputs.config.lambda_s);
    if zone.locked {
        return Ok(SizingResult {
            zone: zone.id,
            theta_star: zone.theta,
            scale_factor: T::one(),
            objective_value: evaluate(zone, &prep, w, ls, zone.theta)?,
            evaluated_points: 1,
            clamped: false,
            unreadable: vec![],
        });
    }
    let ws = axis_grid(zone.kind.uses_w0(), zone.width, inputs.config);
    let hs = axis_grid(zone.kind.uses_h0(), zone.height, inputs.config);
    let mut values = Vec::with_capacity(ws.len() * hs.len());
    for &w0 in &ws {
        for &h0 in &hs {
            let theta = ThetaParams::new(w0, h0);
            values.push((evaluate(zone, &prep, w, ls, theta)?, theta));
        }
    }
    let evaluated = values.len();
    let min = values.iter().map(|(v, _)| *v).fold(T::infinity(), T::min);
    let tol = tie_tolerance(min);
    let (objective_value, theta_star) = *values.iter().find(|(v, _)| *v <= min + tol).expect("grid is non-empty");
    Ok(SizingResult {
        zone: zone.id,
        theta_star,
        scale_factor: T::one(),
        objective_value,
        evaluated_points: evaluated,
        clamped: false,
        unreadable: vec![],
    })
}

/// Whether every occupant of `zone` meets its readability angle.
pub fn unreadable_apps<T: Real>(zone: &ZoneSpec<T>, pose: &UserPose<T>, readability: &Readability<T>) -> Result<Vec<AppId>, SizingError> {
    let mut out = Vec::new();
    for (c, app) in zone.occupied() {
        let d = zone.cell_center(c.index)?.distance(pose.position());
        let (aw, ah) = angular_size(c.width, c.height, d)?;
        if aw.min(ah) < readability.required_angle(app) {
            out.push(app.clone());
        }
    }
    Ok(out)
}

/// Smallest `f ≥ 0` with `f·s ≥ t·|q + f·o|`, where `q` is the user-to-zone
/// center vector and `o` the cell-center offset, or `None` if unattainable.
fn required_factor<T: Real>(s: T, t: T, q2: T, qo: T, o2: T) -> Option<T> {
    let a = s * s - t * t * o2;
    if !(a > T::zero()) {
        return None;
    }
    let t2 = t * t;
    let disc = t2 * t2 * qo * qo + a * t2 * q2;
    Some((t2 * qo + disc.max(T::zero()).sqrt()) / a)
}

/// Uniformly scales the zone about its center until every occupied cell
/// meets its readability angle. The required factor accounts for the cell
/// center moving with the scale. Factors above `max_scale` are clamped and
/// the still-unreadable apps recorded.
pub fn readability_scaleup<T: Real>(
    zone: &ZoneSpec<T>,
    pose: &UserPose<T>,
    config: &SizingConfig<T>,
    readability: &Readability<T>,
) -> Result<(ZoneSpec<T>, T, bool, Vec<AppId>), SizingError> {
    if unreadable_apps(zone, pose, readability)?.is_empty() {
        return Ok((zone.clone(), T::one(), false, vec![]));
    }
    let q = zone.position - pose.position();
    let mut factor = T::one();
    let mut impossible = false;
    for (c, app) in zone.occupied() {
        let need = readability.required_angle(app);
        if need >= T::FRAC_PI_2() {
            impossible = true;
            continue;
        }
        let t = need.tan();
        let o = zone.cell_center(c.index)? - zone.position;
        for s in [c.width, c.height] {
            match required_factor(s, t, q.dot(q), q.dot(o), o.dot(o)) {
                Some(f) => factor = factor.max(f),
                None => impossible = true,
            }
        }
    }
    let mut clamped = impossible || factor > config.max_scale;
    factor = factor.min(config.max_scale);
    let mut scaled = zone.scaled(factor)?;
    // Absorb rounding: nudge up by a few ulps while below the floor.
    let mut nudge = 0;
    while !clamped && nudge < 8 && !unreadable_apps(&scaled, pose, readability)?.is_empty() {
        factor = factor * (T::one() + T::epsilon() * T::lit(4.0));
        if factor > config.max_scale {
            factor = config.max_scale;
            clamped = true;
        }
        scaled = zone.scaled(factor)?;
        nudge += 1;
    }
    let unreadable = unreadable_apps(&scaled, pose, readability)?;
    Ok((scaled, factor, clamped || !unreadable.is_empty(), unreadable))
}

/// Grid-optimizes the split, applies it, then scales up for readability.
pub fn size_zone<T: Real>(
    zone: &ZoneSpec<T>,
    inputs: &ZoneInputs<'_, T>,
    readability: &Readability<T>,
) -> Result<(ZoneSpec<T>, SizingResult<T>), SizingError> {
    let mut result = optimize_zone(zone, inputs)?;
    if zone.locked {
        return Ok((zone.clone(), result));
    }
    let split = zone.with_theta(result.theta_star)?;
    let (sized, factor, clamped, unreadable) = readability_scaleup(&split, inputs.pose, inputs.config, readability)?;
    result.scale_factor = factor;
    result.clamped = clamped;
    result.unreadable = unreadable;
    Ok((sized, result))
}
