//! Zone templates, cell partitions, knobs and occlusion-free regions.
//!
//! Every template is parameterized by a split point `theta = (w0, h0)`
//! measured from the zone's top-left corner. Cell tilings:
//!
//! | kind   | cells | tiling                                                     |
//! |--------|-------|------------------------------------------------------------|
//! | `1x1`  | 1     | whole zone                                                 |
//! | `1x2v` | 2     | vertical divider at `w0`                                   |
//! | `1x2h` | 2     | horizontal divider at `h0`                                 |
//! | `2x1v` | 3     | full-height left column of width `w0`, right column split at `h0` |
//! | `2x1h` | 3     | full-width top row of height `h0`, bottom row split at `w0` |
//! | `2x2`  | 4     | `P0..P3` clockwise from the top-left quadrant              |
//!
//! Cell indices run row-major from the top-left, except `2x2` whose indices
//! follow the clockwise `P0..P3` quadrant labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angular_footprint, azimuth_overlap, face_user_orientation, wrap_angle, AngularFootprint,
    GeometryError, Orientation, PlanarRect, UserPose, Vec3,
};
use crate::ids::{AppId, ZoneId};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("split {axis}={value} leaves a degenerate cell (must lie strictly inside (0, {limit}))")]
    DegenerateCell { axis: Axis, value: f64, limit: f64 },
    #[error("zone {what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("template {kind:?} has no {axis} divider")]
    NoDivider { kind: TemplateKind, axis: Axis },
    #[error("zone {zone} has no cell {cell}")]
    NoSuchCell { zone: ZoneId, cell: usize },
    #[error("no conflict-free bearing for zone {zone} within ±180°")]
    Unresolvable { zone: ZoneId },
    #[error("occlusion zone {new} overlaps existing occlusion zone {existing}")]
    OcclusionOverlap { new: ZoneId, existing: ZoneId },
    #[error("scale factor must be positive, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateKind {
    #[serde(rename = "1x1")]
    OneByOne,
    #[serde(rename = "2x2")]
    TwoByTwo,
    #[serde(rename = "1x2v")]
    OneByTwoV,
    #[serde(rename = "1x2h")]
    OneByTwoH,
    #[serde(rename = "2x1v")]
    TwoByOneV,
    #[serde(rename = "2x1h")]
    TwoByOneH,
    #[serde(rename = "occlusion")]
    OcclusionFree,
}

impl std::fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.wire_name())
    }
}

impl TemplateKind {
    pub fn wire_name(self) -> &'static str {
        match self {
            TemplateKind::OneByOne => "1x1",
            TemplateKind::TwoByTwo => "2x2",
            TemplateKind::OneByTwoV => "1x2v",
            TemplateKind::OneByTwoH => "1x2h",
            TemplateKind::TwoByOneV => "2x1v",
            TemplateKind::TwoByOneH => "2x1h",
            TemplateKind::OcclusionFree => "occlusion",
        }
    }

    /// The six cell-bearing templates.
    pub const CELL_TEMPLATES: [TemplateKind; 6] = [
        TemplateKind::OneByOne,
        TemplateKind::TwoByTwo,
        TemplateKind::OneByTwoV,
        TemplateKind::OneByTwoH,
        TemplateKind::TwoByOneV,
        TemplateKind::TwoByOneH,
    ];

    pub fn cell_count(self) -> usize {
        match self {
            TemplateKind::OneByOne => 1,
            TemplateKind::TwoByTwo => 4,
            TemplateKind::OneByTwoV | TemplateKind::OneByTwoH => 2,
            TemplateKind::TwoByOneV | TemplateKind::TwoByOneH => 3,
            TemplateKind::OcclusionFree => 0,
        }
    }

    /// Whether `w0` (a vertical divider) shapes the cells.
    pub fn uses_w0(self) -> bool {
        matches!(
            self,
            TemplateKind::TwoByTwo | TemplateKind::OneByTwoV | TemplateKind::TwoByOneV | TemplateKind::TwoByOneH
        )
    }

    /// Whether `h0` (a horizontal divider) shapes the cells.
    pub fn uses_h0(self) -> bool {
        matches!(
            self,
            TemplateKind::TwoByTwo | TemplateKind::OneByTwoH | TemplateKind::TwoByOneV | TemplateKind::TwoByOneH
        )
    }

    pub fn has_divider(self, axis: Axis) -> bool {
        match axis {
            Axis::Vertical => self.uses_w0(),
            Axis::Horizontal => self.uses_h0(),
        }
    }
}

/// Divider orientation. A vertical divider sits at `w0`, a horizontal one at `h0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizontal,
    Vertical,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Horizontal => "h0",
            Axis::Vertical => "w0",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams<T> {
    pub w0: T,
    pub h0: T,
}

impl<T: Real> ThetaParams<T> {
    pub fn new(w0: T, h0: T) -> Self {
        Self { w0, h0 }
    }

    pub fn midpoint(width: T, height: T) -> Self {
        let half = T::lit(0.5);
        Self { w0: width * half, h0: height * half }
    }

    /// Pins the axes `kind` does not use to the zone midline.
    pub fn pinned(self, kind: TemplateKind, width: T, height: T) -> Self {
        let half = T::lit(0.5);
        Self {
            w0: if kind.uses_w0() { self.w0 } else { width * half },
            h0: if kind.uses_h0() { self.h0 } else { height * half },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell<T> {
    pub index: usize,
    /// Zone-local top-left corner `[x, y]`, `y` growing downward.
    pub origin: [T; 2],
    pub width: T,
    pub height: T,
    pub occupant: Option<AppId>,
}

impl<T: Real> Cell<T> {
    fn new(index: usize, x: T, y: T, width: T, height: T) -> Self {
        Self { index, origin: [x, y], width, height, occupant: None }
    }

    pub fn area(&self) -> T {
        self.width * self.height
    }

    pub fn center_local(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.origin[0] + self.width * half, self.origin[1] + self.height * half)
    }
}

fn check_split<T: Real>(axis: Axis, value: T, limit: T) -> Result<(), LayoutError> {
    if !(value > T::zero() && value < limit) {
        return Err(LayoutError::DegenerateCell { axis, value: value.as_f64(), limit: limit.as_f64() });
    }
    Ok(())
}

fn check_dims<T: Real>(width: T, height: T) -> Result<(), LayoutError> {
    for (what, v) in [("width", width), ("height", height)] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(LayoutError::NonPositive { what, value: v.as_f64() });
        }
    }
    Ok(())
}

/// Cell partition of a `width × height` zone at split point `theta`.
pub fn instantiate<T: Real>(
    kind: TemplateKind,
    width: T,
    height: T,
    theta: ThetaParams<T>,
) -> Result<Vec<Cell<T>>, LayoutError> {
    check_dims(width, height)?;
    if kind.uses_w0() {
        check_split(Axis::Vertical, theta.w0, width)?;
    }
    if kind.uses_h0() {
        check_split(Axis::Horizontal, theta.h0, height)?;
    }
    let (w, h) = (width, height);
    let (w0, h0) = (theta.w0, theta.h0);
    let z = T::zero();
    let cells = match kind {
        TemplateKind::OneByOne => vec![Cell::new(0, z, z, w, h)],
        TemplateKind::OneByTwoV => vec![Cell::new(0, z, z, w0, h), Cell::new(1, w0, z, w - w0, h)],
        TemplateKind::OneByTwoH => vec![Cell::new(0, z, z, w, h0), Cell::new(1, z, h0, w, h - h0)],
        TemplateKind::TwoByOneV => vec![
            Cell::new(0, z, z, w0, h),
            Cell::new(1, w0, z, w - w0, h0),
            Cell::new(2, w0, h0, w - w0, h - h0),
        ],
        TemplateKind::TwoByOneH => vec![
            Cell::new(0, z, z, w, h0),
            Cell::new(1, z, h0, w0, h - h0),
            Cell::new(2, w0, h0, w - w0, h - h0),
        ],
        TemplateKind::TwoByTwo => vec![
            Cell::new(0, z, z, w0, h0),
            Cell::new(1, w0, z, w - w0, h0),
            Cell::new(2, w0, h0, w - w0, h - h0),
            Cell::new(3, z, h0, w0, h - h0),
        ],
        TemplateKind::OcclusionFree => Vec::new(),
    };
    Ok(cells)
}

/// Checks that a cell list is the divider grid of its template: every edge
/// lies on `{0, w0, W} × {0, h0, H}`, cells sharing a row band share its
/// height, cells sharing a column band share its width, and the cells tile
/// the zone without interior overlap.
pub fn is_grid_aligned<T: Real>(
    kind: TemplateKind,
    width: T,
    height: T,
    theta: ThetaParams<T>,
    cells: &[Cell<T>],
) -> bool {
    let tol = T::geom_tol() * width.max(height).max(T::one());
    let near = |a: T, b: T| (a - b).abs() <= tol;
    let theta = theta.pinned(kind, width, height);

    let band_ok = |start: T, len: T, split: T, full: T, split_used: bool| -> bool {
        if near(start, T::zero()) {
            near(len, full) || (split_used && near(len, split))
        } else {
            split_used && near(start, split) && near(len, full - split)
        }
    };
    let edges_ok = cells.iter().all(|c| {
        band_ok(c.origin[0], c.width, theta.w0, width, kind.uses_w0())
            && band_ok(c.origin[1], c.height, theta.h0, height, kind.uses_h0())
    });
    if !edges_ok || cells.len() != kind.cell_count() {
        return false;
    }
    let disjoint = cells.iter().enumerate().all(|(i, a)| {
        cells[i + 1..].iter().all(|b| {
            let sep_x = a.origin[0] + a.width <= b.origin[0] + tol || b.origin[0] + b.width <= a.origin[0] + tol;
            let sep_y = a.origin[1] + a.height <= b.origin[1] + tol || b.origin[1] + b.height <= a.origin[1] + tol;
            sep_x || sep_y
        })
    });
    let area: T = cells.iter().map(Cell::area).sum();
    disjoint && (kind == TemplateKind::OcclusionFree || (area - width * height).abs() <= tol * width * height)
}

/// A zone: a user-placed, user-facing rectangle holding a tiled cell layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec<T> {
    pub id: ZoneId,
    pub kind: TemplateKind,
    pub width: T,
    pub height: T,
    pub position: Vec3<T>,
    pub orientation: Orientation<T>,
    pub theta: ThetaParams<T>,
    pub cells: Vec<Cell<T>>,
    /// User-pinned layout; sizing leaves it untouched.
    pub locked: bool,
}

impl<T: Real> ZoneSpec<T> {
    /// Builds a zone facing `pose`. `theta` defaults to the midpoint split.
    pub fn new(
        id: ZoneId,
        kind: TemplateKind,
        width: T,
        height: T,
        position: Vec3<T>,
        theta: Option<ThetaParams<T>>,
        pose: &UserPose<T>,
    ) -> Result<Self, LayoutError> {
        check_dims(width, height)?;
        let theta = theta.unwrap_or_else(|| ThetaParams::midpoint(width, height)).pinned(kind, width, height);
        let cells = instantiate(kind, width, height, theta)?;
        let orientation = face_user_orientation(position, pose)?;
        Ok(Self { id, kind, width, height, position, orientation, theta, cells, locked: false })
    }

    /// An occlusion-free region (no cells).
    pub fn occlusion(
        id: ZoneId,
        width: T,
        height: T,
        position: Vec3<T>,
        pose: &UserPose<T>,
    ) -> Result<Self, LayoutError> {
        Self::new(id, TemplateKind::OcclusionFree, width, height, position, None, pose)
    }

    pub fn with_locked(mut self, locked: bool) -> Self {
        self.locked = locked;
        self
    }

    pub fn is_occlusion(&self) -> bool {
        self.kind == TemplateKind::OcclusionFree
    }

    pub fn rect(&self) -> PlanarRect<T> {
        PlanarRect { center: self.position, orientation: self.orientation, width: self.width, height: self.height }
    }

    pub fn footprint(&self, pose: &UserPose<T>) -> AngularFootprint<T> {
        angular_footprint(&self.rect(), pose)
    }

    pub fn cell(&self, index: usize) -> Result<&Cell<T>, LayoutError> {
        self.cells.get(index).ok_or(LayoutError::NoSuchCell { zone: self.id, cell: index })
    }

    pub fn cell_mut(&mut self, index: usize) -> Result<&mut Cell<T>, LayoutError> {
        let zone = self.id;
        self.cells.get_mut(index).ok_or(LayoutError::NoSuchCell { zone, cell: index })
    }

    /// World-space center of a cell.
    pub fn cell_center(&self, index: usize) -> Result<Vec3<T>, LayoutError> {
        let (u, v) = self.cell(index)?.center_local();
        Ok(self.rect().local_to_world(u, v))
    }

    pub fn occupied(&self) -> impl Iterator<Item = (&Cell<T>, &AppId)> {
        self.cells.iter().filter_map(|c| c.occupant.as_ref().map(|a| (c, a)))
    }

    /// Re-partitions at `theta` keeping occupants by cell index.
    pub fn with_theta(&self, theta: ThetaParams<T>) -> Result<Self, LayoutError> {
        self.resized(self.width, self.height, theta)
    }

    fn resized(&self, width: T, height: T, theta: ThetaParams<T>) -> Result<Self, LayoutError> {
        check_dims(width, height)?;
        let theta = theta.pinned(self.kind, width, height);
        let mut cells = instantiate(self.kind, width, height, theta)?;
        for (new, old) in cells.iter_mut().zip(&self.cells) {
            new.occupant = old.occupant.clone();
        }
        Ok(Self { width, height, theta, cells, ..self.clone() })
    }

    /// Multiplies `W`, `H`, `w0` and `h0` by `factor` about the zone center.
    pub fn scaled(&self, factor: T) -> Result<Self, LayoutError> {
        if !(factor > T::zero()) || !factor.is_finite() {
            return Err(LayoutError::BadScale(factor.as_f64()));
        }
        let theta = ThetaParams::new(self.theta.w0 * factor, self.theta.h0 * factor);
        self.resized(self.width * factor, self.height * factor, theta)
    }

    /// Moves the zone center and re-orients it toward the user.
    pub fn translated(&self, position: Vec3<T>, pose: &UserPose<T>) -> Result<Self, LayoutError> {
        let orientation = face_user_orientation(position, pose)?;
        Ok(Self { position, orientation, ..self.clone() })
    }

    /// Verifies the structural invariants of the zone.
    pub fn validate(&self) -> Result<(), LayoutError> {
        check_dims(self.width, self.height)?;
        let expected = instantiate(self.kind, self.width, self.height, self.theta)?;
        if expected.len() != self.cells.len() {
            return Err(LayoutError::NoSuchCell { zone: self.id, cell: expected.len() });
        }
        if !is_grid_aligned(self.kind, self.width, self.height, self.theta, &self.cells) {
            return Err(LayoutError::DegenerateCell {
                axis: Axis::Vertical,
                value: self.theta.w0.as_f64(),
                limit: self.width.as_f64(),
            });
        }
        Ok(())
    }
}

/// Admissible split interval `[margin·L, (1 − margin)·L]` along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnobBounds<T> {
    pub margin: T,
}

impl<T: Real> KnobBounds<T> {
    pub fn interval(&self, length: T) -> (T, T) {
        (length * self.margin, length * (T::one() - self.margin))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnobMove<T> {
    pub zone: ZoneSpec<T>,
    /// The requested value lay outside the admissible interval.
    pub clamped: bool,
}

/// Drags an inner divider. Values outside the admissible interval are clamped.
pub fn move_inner_knob<T: Real>(
    zone: &ZoneSpec<T>,
    axis: Axis,
    new_value: T,
    bounds: KnobBounds<T>,
) -> Result<KnobMove<T>, LayoutError> {
    if !zone.kind.has_divider(axis) {
        return Err(LayoutError::NoDivider { kind: zone.kind, axis });
    }
    if !new_value.is_finite() {
        return Err(LayoutError::DegenerateCell { axis, value: new_value.as_f64(), limit: 0.0 });
    }
    let length = match axis {
        Axis::Vertical => zone.width,
        Axis::Horizontal => zone.height,
    };
    let (lo, hi) = bounds.interval(length);
    let value = new_value.max(lo).min(hi);
    let clamped = value != new_value;
    let mut theta = zone.theta;
    match axis {
        Axis::Vertical => theta.w0 = value,
        Axis::Horizontal => theta.h0 = value,
    }
    Ok(KnobMove { zone: zone.with_theta(theta)?, clamped })
}

/// Resizes the whole zone; the split point scales proportionally.
pub fn move_outer_knob<T: Real>(zone: &ZoneSpec<T>, new_width: T, new_height: T) -> Result<ZoneSpec<T>, LayoutError> {
    check_dims(new_width, new_height)?;
    let theta = ThetaParams::new(
        zone.theta.w0 * (new_width / zone.width),
        zone.theta.h0 * (new_height / zone.height),
    );
    zone.resized(new_width, new_height, theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcclusionConflict {
    pub zone: ZoneId,
    pub occlusion: ZoneId,
}

/// Every `(zone, occlusion)` pair whose angular footprints overlap.
pub fn occlusion_conflicts<T: Real>(
    zones: &[ZoneSpec<T>],
    occlusions: &[ZoneSpec<T>],
    pose: &UserPose<T>,
) -> Vec<OcclusionConflict> {
    let occ: Vec<_> = occlusions.iter().map(|o| (o.id, o.footprint(pose))).collect();
    let mut out = Vec::new();
    for z in zones {
        let fp = z.footprint(pose);
        for (oid, ofp) in &occ {
            if fp.overlaps(ofp) {
                out.push(OcclusionConflict { zone: z.id, occlusion: *oid });
            }
        }
    }
    out
}

/// Rejects an occlusion zone whose footprint overlaps an existing one.
pub fn check_occlusion_placement<T: Real>(
    existing: &[ZoneSpec<T>],
    new: &ZoneSpec<T>,
    pose: &UserPose<T>,
) -> Result<(), LayoutError> {
    let fp = new.footprint(pose);
    for o in existing {
        if o.footprint(pose).overlaps(&fp) {
            return Err(LayoutError::OcclusionOverlap { new: new.id, existing: o.id });
        }
    }
    Ok(())
}

/// Swings a conflicting zone sideways around the user (distance preserved)
/// to the nearest bearing that clears every occlusion. Equal left and right
/// shifts resolve to the right. A conflict-free zone is returned unchanged.
pub fn resolve_intrusion<T: Real>(
    zone: &ZoneSpec<T>,
    occlusions: &[ZoneSpec<T>],
    pose: &UserPose<T>,
) -> Result<ZoneSpec<T>, LayoutError> {
    let fp = zone.footprint(pose);
    let occ: Vec<AngularFootprint<T>> = occlusions
        .iter()
        .map(|o| o.footprint(pose))
        .filter(|o| fp.elevation.0 < o.elevation.1 && o.elevation.0 < fp.elevation.1)
        .collect();
    if !occ.iter().any(|o| o.overlaps(&fp)) {
        return Ok(zone.clone());
    }

    let sep = T::epsilon().sqrt();
    let clear = |delta: T| {
        let shifted = (fp.azimuth.0 + delta, fp.azimuth.1 + delta);
        !occ.iter().any(|o| azimuth_overlap(shifted, o.azimuth))
    };
    let mut best: Option<T> = None;
    for o in &occ {
        for delta in [o.azimuth.1 - fp.azimuth.0 + sep, o.azimuth.0 - fp.azimuth.1 - sep] {
            let delta = wrap_angle(delta);
            if !clear(delta) {
                continue;
            }
            best = Some(match best {
                None => delta,
                Some(b) => {
                    let (da, db) = (delta.abs(), b.abs());
                    if (da - db).abs() <= T::geom_tol() {
                        delta.max(b)
                    } else if da < db {
                        delta
                    } else {
                        b
                    }
                }
            });
        }
    }
    let delta = best.ok_or(LayoutError::Unresolvable { zone: zone.id })?;
    let origin = pose.position();
    let moved = zone.translated(origin + (zone.position - origin).rotate_about_up(delta), pose)?;
    if occlusion_conflicts(std::slice::from_ref(&moved), occlusions, pose).is_empty() {
        Ok(moved)
    } else {
        Err(LayoutError::Unresolvable { zone: zone.id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pose() -> UserPose<f64> {
        UserPose::origin()
    }

    fn zone(kind: TemplateKind, w: f64, h: f64, theta: (f64, f64)) -> ZoneSpec<f64> {
        ZoneSpec::new(ZoneId(1), kind, w, h, Vec3::new(0.0, 0.0, 2.0), Some(ThetaParams::new(theta.0, theta.1)), &pose())
            .unwrap()
    }

    fn dims(cells: &[Cell<f64>]) -> Vec<(f64, f64)> {
        cells.iter().map(|c| (c.width, c.height)).collect()
    }

    #[test]
    fn two_by_two_midpoint() {
        let cells = instantiate(TemplateKind::TwoByTwo, 2.0, 1.0, ThetaParams::new(1.0, 0.5)).unwrap();
        assert_eq!(dims(&cells), vec![(1.0, 0.5); 4]);
    }

    #[test]
    fn two_by_two_quadrant_formulas() {
        let (w, h, w0, h0) = (3.0, 2.0, 0.7, 1.5);
        let cells = instantiate(TemplateKind::TwoByTwo, w, h, ThetaParams::new(w0, h0)).unwrap();
        assert_eq!(dims(&cells), vec![(w0, h0), (w - w0, h0), (w - w0, h - h0), (w0, h - h0)]);
        assert_eq!(cells[2].origin, [w0, h0]);
        assert_eq!(cells[3].origin, [0.0, h0]);
    }

    #[test]
    fn one_by_two_v_three_to_seven() {
        let cells = instantiate(TemplateKind::OneByTwoV, 1.0, 1.0, ThetaParams::new(0.3, 0.5)).unwrap();
        assert_eq!(dims(&cells), vec![(0.3, 1.0), (0.7, 1.0)]);
    }

    #[test]
    fn three_cell_templates() {
        let th = ThetaParams::new(0.4, 0.25);
        let v = instantiate(TemplateKind::TwoByOneV, 1.0, 1.0, th).unwrap();
        assert_eq!(dims(&v), vec![(0.4, 1.0), (0.6, 0.25), (0.6, 0.75)]);
        let h = instantiate(TemplateKind::TwoByOneH, 1.0, 1.0, th).unwrap();
        assert_eq!(dims(&h), vec![(1.0, 0.25), (0.4, 0.75), (0.6, 0.75)]);
        assert!(is_grid_aligned(TemplateKind::TwoByOneV, 1.0, 1.0, th, &v));
        assert!(is_grid_aligned(TemplateKind::TwoByOneH, 1.0, 1.0, th, &h));
    }

    #[test]
    fn cell_counts() {
        let counts: Vec<_> = TemplateKind::CELL_TEMPLATES.iter().map(|k| k.cell_count()).collect();
        assert_eq!(counts, vec![1, 4, 2, 2, 3, 3]);
        assert!(instantiate(TemplateKind::OcclusionFree, 1.0, 1.0, ThetaParams::midpoint(1.0, 1.0)).unwrap().is_empty());
    }

    #[test]
    fn boundary_split_is_degenerate() {
        let err = instantiate(TemplateKind::OneByTwoV, 1.0, 1.0, ThetaParams::new(1.0, 0.5)).unwrap_err();
        assert!(matches!(err, LayoutError::DegenerateCell { axis: Axis::Vertical, .. }));
        assert!(instantiate(TemplateKind::OneByTwoH, 1.0, 1.0, ThetaParams::new(0.5, 0.0)).is_err());
        // The unused axis is not checked.
        assert!(instantiate(TemplateKind::OneByTwoH, 1.0, 1.0, ThetaParams::new(5.0, 0.5)).is_ok());
    }

    #[test]
    fn misaligned_cells_fail_predicate() {
        let th = ThetaParams::new(0.4, 0.5);
        let mut cells = instantiate(TemplateKind::TwoByTwo, 1.0, 1.0, th).unwrap();
        cells[1].height = 0.45;
        assert!(!is_grid_aligned(TemplateKind::TwoByTwo, 1.0, 1.0, th, &cells));
    }

    #[test]
    fn inner_knob_moves_and_clamps() {
        let z = zone(TemplateKind::OneByTwoV, 1.0, 1.0, (0.3, 0.5));
        let bounds = KnobBounds { margin: 0.15 };
        let m = move_inner_knob(&z, Axis::Vertical, 0.5, bounds).unwrap();
        assert!(!m.clamped);
        assert_eq!(dims(&m.zone.cells), vec![(0.5, 1.0), (0.5, 1.0)]);

        let m = move_inner_knob(&z, Axis::Vertical, 0.95, bounds).unwrap();
        assert!(m.clamped);
        assert_abs_diff_eq!(m.zone.theta.w0, 0.85);

        assert!(matches!(
            move_inner_knob(&z, Axis::Horizontal, 0.5, bounds),
            Err(LayoutError::NoDivider { .. })
        ));
    }

    #[test]
    fn horizontal_knob_keeps_widths() {
        let z = zone(TemplateKind::TwoByTwo, 2.0, 1.0, (0.8, 0.5));
        let m = move_inner_knob(&z, Axis::Horizontal, 0.3, KnobBounds { margin: 0.15 }).unwrap();
        let before: Vec<_> = z.cells.iter().map(|c| c.width).collect();
        let after: Vec<_> = m.zone.cells.iter().map(|c| c.width).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn outer_knob_scales_theta() {
        let z = zone(TemplateKind::OneByTwoV, 1.0, 1.0, (0.3, 0.5));
        let z2 = move_outer_knob(&z, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(z2.theta.w0, 0.6);
        assert!(move_outer_knob(&z, 0.0, 1.0).is_err());

        let z = zone(TemplateKind::TwoByTwo, 1.3, 0.7, (0.31, 0.22));
        let big = move_outer_knob(&z, 2.6, 1.4).unwrap();
        for (a, b) in z.cells.iter().zip(&big.cells) {
            assert_abs_diff_eq!(b.area(), 4.0 * a.area(), epsilon = 1e-12);
        }
        let back = move_outer_knob(&big, 1.3, 0.7).unwrap();
        assert_eq!(back, z);
    }

    #[test]
    fn knob_moves_preserve_occupants() {
        let mut z = zone(TemplateKind::TwoByOneH, 1.0, 1.0, (0.5, 0.5));
        z.cells[0].occupant = Some("ide".into());
        z.cells[2].occupant = Some("chat".into());
        let m = move_inner_knob(&z, Axis::Horizontal, 0.7, KnobBounds { margin: 0.15 }).unwrap().zone;
        let o = move_outer_knob(&m, 1.7, 0.9).unwrap();
        let occ = |z: &ZoneSpec<f64>| z.cells.iter().map(|c| c.occupant.clone()).collect::<Vec<_>>();
        assert_eq!(occ(&z), occ(&o));
    }

    fn occ_at(id: u32, bearing_deg: f64, w: f64) -> ZoneSpec<f64> {
        let b = bearing_deg.to_radians();
        ZoneSpec::occlusion(ZoneId(id), w, 1.0, Vec3::new(2.0 * b.sin(), 0.0, 2.0 * b.cos()), &pose()).unwrap()
    }

    #[test]
    fn conflicts_basic() {
        let z = zone(TemplateKind::OneByOne, 1.0, 1.0, (0.5, 0.5));
        assert!(occlusion_conflicts(std::slice::from_ref(&z), &[occ_at(10, 90.0, 1.0)], &pose()).is_empty());
        assert_eq!(
            occlusion_conflicts(std::slice::from_ref(&z), &[occ_at(10, 0.0, 0.5)], &pose()),
            vec![OcclusionConflict { zone: ZoneId(1), occlusion: ZoneId(10) }]
        );
    }

    #[test]
    fn conflicts_three_zones_one_overlapping() {
        // Bearings 0°, 60°, -60°; a narrow occlusion at 60°.
        let mk = |id: u32, deg: f64| {
            let b: f64 = deg.to_radians();
            ZoneSpec::new(ZoneId(id), TemplateKind::OneByOne, 0.8, 0.8, Vec3::new(2.0 * b.sin(), 0.0, 2.0 * b.cos()), None, &pose())
                .unwrap()
        };
        let zones = vec![mk(1, 0.0), mk(2, 60.0), mk(3, -60.0)];
        let occ = vec![occ_at(10, 60.0, 0.2)];
        // Interval oracle: zone 2 spans 60° ± atan(0.4/2) ≈ ±11.3°, occlusion 60° ± atan(0.1/2) ≈ ±2.9°;
        // zones 1 and 3 are ≥ 37° away.
        let conflicts = occlusion_conflicts(&zones, &occ, &pose());
        assert_eq!(conflicts, vec![OcclusionConflict { zone: ZoneId(2), occlusion: ZoneId(10) }]);
    }

    #[test]
    fn resolve_tie_goes_right() {
        // Occlusion spans [-5°, 5°]; zone spans 20° centred at 0°.
        let d = 2.0f64;
        let occ_w = 2.0 * d * (5.0f64).to_radians().tan();
        let zone_w = 2.0 * d * (10.0f64).to_radians().tan();
        let occ = ZoneSpec::occlusion(ZoneId(10), occ_w, 1.0, Vec3::new(0.0, 0.0, d), &pose()).unwrap();
        let z = ZoneSpec::new(ZoneId(1), TemplateKind::OneByOne, zone_w, 0.5, Vec3::new(0.0, 0.0, d), None, &pose()).unwrap();
        let moved = resolve_intrusion(&z, std::slice::from_ref(&occ), &pose()).unwrap();
        let (bearing, _) = pose().bearing(moved.position);
        assert_abs_diff_eq!(bearing.to_degrees(), 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(moved.position.norm(), d, epsilon = 1e-12);
        assert!(occlusion_conflicts(&[moved], &[occ], &pose()).is_empty());
    }

    #[test]
    fn resolve_prefers_smaller_shift() {
        // Occlusion centred 4° right of the zone: going left is shorter.
        let occ = occ_at(10, 4.0, 0.2);
        let z = zone(TemplateKind::OneByOne, 0.6, 0.6, (0.3, 0.3));
        let moved = resolve_intrusion(&z, std::slice::from_ref(&occ), &pose()).unwrap();
        assert!(pose().bearing(moved.position).0 < 0.0);
        assert!(occlusion_conflicts(&[moved], &[occ], &pose()).is_empty());
    }

    #[test]
    fn resolve_identity_and_unresolvable() {
        let z = zone(TemplateKind::OneByOne, 0.6, 0.6, (0.3, 0.3));
        assert_eq!(resolve_intrusion(&z, &[occ_at(10, 120.0, 0.5)], &pose()).unwrap(), z);
        // Eight wide occlusions tile the full circle.
        let ring: Vec<_> = (0..8).map(|i| occ_at(10 + i, 45.0 * i as f64, 2.0)).collect();
        assert_eq!(resolve_intrusion(&z, &ring, &pose()), Err(LayoutError::Unresolvable { zone: ZoneId(1) }));
    }

    #[test]
    fn overlapping_occlusion_rejected() {
        let a = occ_at(10, 0.0, 1.0);
        let b = occ_at(11, 5.0, 1.0);
        assert!(matches!(check_occlusion_placement(std::slice::from_ref(&a), &b, &pose()), Err(LayoutError::OcclusionOverlap { .. })));
        assert!(check_occlusion_placement(&[a], &occ_at(12, 90.0, 1.0), &pose()).is_ok());
    }

    fn kind_strategy() -> impl Strategy<Value = TemplateKind> {
        prop::sample::select(TemplateKind::CELL_TEMPLATES.to_vec())
    }

    proptest! {
        #[test]
        fn partition_complete(kind in kind_strategy(), w in 0.1f64..5.0, h in 0.1f64..5.0, fx in 0.01f64..0.99, fy in 0.01f64..0.99) {
            let th = ThetaParams::new(w * fx, h * fy).pinned(kind, w, h);
            let cells = instantiate(kind, w, h, th).unwrap();
            let area: f64 = cells.iter().map(Cell::area).sum();
            prop_assert!((area - w * h).abs() <= 1e-9 * w * h);
            prop_assert!(is_grid_aligned(kind, w, h, th, &cells));
        }

        #[test]
        fn resolved_zone_never_conflicts(bz in -60.0f64..60.0, bo in -60.0f64..60.0, zw in 0.2f64..1.5, ow in 0.1f64..1.5) {
            let b = bz.to_radians();
            let z = ZoneSpec::new(ZoneId(1), TemplateKind::TwoByTwo, zw, 0.6, Vec3::new(2.0 * b.sin(), 0.1, 2.0 * b.cos()), None, &pose()).unwrap();
            let occ = occ_at(10, bo, ow);
            if let Ok(moved) = resolve_intrusion(&z, std::slice::from_ref(&occ), &pose()) {
                prop_assert!(occlusion_conflicts(&[moved], &[occ], &pose()).is_empty());
            }
        }
    }
}
