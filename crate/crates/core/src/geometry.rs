//! User-relative 3D math.
//!
//! World frame: `+y` is up, `+z` is the default forward direction and `+x`
//! is to the user's right (left-handed, as in most XR engines). Azimuth is
//! measured about world-up relative to the horizontal projection of the
//! user's forward vector, positive to the right. Elevation is measured from
//! the horizontal plane, positive upward. All angles are radians.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} must be finite")]
    NonFinite { what: &'static str },
    #[error("forward vector must have unit norm, got norm {norm}")]
    NotUnit { norm: f64 },
    #[error("target coincides with the viewpoint; direction is undefined")]
    Coincident,
}

/// Serialized as a `[x, y, z]` array.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Serialize> Serialize for Vec3<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.x, &self.y, &self.z).serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Vec3<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (x, y, z) = <(T, T, T)>::deserialize(d)?;
        Ok(Self { x, y, z })
    }
}

impl<T> From<[T; 3]> for Vec3<T> {
    fn from([x, y, z]: [T; 3]) -> Self {
        Self { x, y, z }
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn up() -> Self {
        Self::new(T::zero(), T::one(), T::zero())
    }

    pub fn forward() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::epsilon() {
            Some(self * (T::one() / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotates about world-up by `angle` (positive turns `+z` toward `+x`).
    pub fn rotate_about_up(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(self.x * c + self.z * s, self.y, self.z * c - self.x * s)
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// The user's viewpoint and forward viewing direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawPose<T>",
    into = "RawPose<T>",
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct UserPose<T> {
    position: Vec3<T>,
    forward: Vec3<T>,
}

#[derive(Serialize, Deserialize)]
struct RawPose<T> {
    position: Vec3<T>,
    forward: Vec3<T>,
}

impl<T: Real> TryFrom<RawPose<T>> for UserPose<T> {
    type Error = GeometryError;
    fn try_from(raw: RawPose<T>) -> Result<Self, Self::Error> {
        UserPose::new(raw.position, raw.forward)
    }
}

impl<T: Real> From<UserPose<T>> for RawPose<T> {
    fn from(p: UserPose<T>) -> Self {
        RawPose { position: p.position, forward: p.forward }
    }
}

impl<T: Real> UserPose<T> {
    /// Validating constructor; `forward` must already be unit length.
    pub fn new(position: Vec3<T>, forward: Vec3<T>) -> Result<Self, GeometryError> {
        if !position.is_finite() {
            return Err(GeometryError::NonFinite { what: "position" });
        }
        if !forward.is_finite() {
            return Err(GeometryError::NonFinite { what: "forward" });
        }
        let norm = forward.norm();
        if (norm - T::one()).abs() > T::geom_tol() {
            return Err(GeometryError::NotUnit { norm: norm.as_f64() });
        }
        Ok(Self { position, forward })
    }

    /// Normalizes `direction` before constructing.
    pub fn looking_along(position: Vec3<T>, direction: Vec3<T>) -> Result<Self, GeometryError> {
        let forward = direction.normalized().ok_or(GeometryError::Coincident)?;
        Self::new(position, forward)
    }

    /// Origin, looking down `+z`.
    pub fn origin() -> Self {
        Self { position: Vec3::zero(), forward: Vec3::forward() }
    }

    pub fn position(&self) -> Vec3<T> {
        self.position
    }

    pub fn forward(&self) -> Vec3<T> {
        self.forward
    }

    /// Horizontal (forward, right) basis used for azimuth.
    fn horizontal_basis(&self) -> (Vec3<T>, Vec3<T>) {
        let flat = Vec3::new(self.forward.x, T::zero(), self.forward.z);
        let fwd = flat.normalized().unwrap_or_else(Vec3::forward);
        let right = Vec3::new(fwd.z, T::zero(), -fwd.x);
        (fwd, right)
    }

    /// Azimuth and elevation of a world point as seen from this pose.
    pub fn bearing(&self, target: Vec3<T>) -> (T, T) {
        let (fwd, right) = self.horizontal_basis();
        let d = target - self.position;
        let (f, r) = (d.dot(fwd), d.dot(right));
        (r.atan2(f), d.y.atan2(f.hypot(r)))
    }
}

/// `(arctan(w/d), arctan(h/d))`: azimuthal and elevational angular size.
pub fn angular_size<T: Real>(width: T, height: T, distance: T) -> Result<(T, T), GeometryError> {
    for (what, v) in [("width", width), ("height", height), ("distance", distance)] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(GeometryError::NonPositive { what, value: v.as_f64() });
        }
    }
    Ok(((width / distance).atan(), (height / distance).atan()))
}

/// Angle between the forward vector and the direction to `target`, in `[0, π]`.
pub fn head_turn_angle<T: Real>(pose: &UserPose<T>, target: Vec3<T>) -> Result<T, GeometryError> {
    let dir = target - pose.position;
    let n = dir.norm();
    if !(n > T::epsilon()) {
        return Err(GeometryError::Coincident);
    }
    let cos = pose.forward.dot(dir) / (pose.forward.norm() * n);
    Ok(cos.max(-T::one()).min(T::one()).acos())
}

/// Orthonormal frame of a zone plane. `normal` points at the viewer, `up`
/// and `right` span the plane (`right` as seen by the viewer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation<T> {
    pub normal: Vec3<T>,
    pub up: Vec3<T>,
    pub right: Vec3<T>,
}

impl<T: Real> Orientation<T> {
    /// Frame facing down `-z`, for a zone straight ahead of the default pose.
    pub fn facing_origin() -> Self {
        Self {
            normal: Vec3::new(T::zero(), T::zero(), -T::one()),
            up: Vec3::up(),
            right: Vec3::new(T::one(), T::zero(), T::zero()),
        }
    }
}

/// Orients a plane at `zone_center` so that it faces the viewer.
///
/// The up axis is world-up projected onto the plane; when the plane is
/// horizontal (viewer directly above or below) the viewer's forward vector
/// is used as the up reference instead.
pub fn face_user_orientation<T: Real>(
    zone_center: Vec3<T>,
    pose: &UserPose<T>,
) -> Result<Orientation<T>, GeometryError> {
    let normal = (pose.position - zone_center).normalized().ok_or(GeometryError::Coincident)?;
    let project = |v: Vec3<T>| (v - normal * v.dot(normal)).normalized();
    let up = project(Vec3::up())
        .filter(|u| u.norm() > T::zero() && Vec3::up().dot(normal).abs() < T::one() - T::geom_tol())
        .or_else(|| project(pose.forward))
        .or_else(|| project(Vec3::forward()))
        .or_else(|| project(Vec3::new(T::one(), T::zero(), T::zero())))
        .ok_or(GeometryError::Coincident)?;
    let right = normal.cross(up);
    Ok(Orientation { normal, up, right })
}

/// A finite oriented rectangle in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarRect<T> {
    pub center: Vec3<T>,
    pub orientation: Orientation<T>,
    pub width: T,
    pub height: T,
}

impl<T: Real> PlanarRect<T> {
    /// World point of plane-local `(u, v)` measured from the top-left corner,
    /// `u` rightward and `v` downward.
    pub fn local_to_world(&self, u: T, v: T) -> Vec3<T> {
        let half = T::lit(0.5);
        self.center
            + self.orientation.right * (u - self.width * half)
            + self.orientation.up * (self.height * half - v)
    }

    pub fn corners(&self) -> [Vec3<T>; 4] {
        [
            self.local_to_world(T::zero(), T::zero()),
            self.local_to_world(self.width, T::zero()),
            self.local_to_world(self.width, self.height),
            self.local_to_world(T::zero(), self.height),
        ]
    }
}

/// Azimuth/elevation extent subtended by a rectangle.
///
/// The azimuth interval is unwrapped around the rectangle's center bearing,
/// so it may extend past `±π` for rectangles straddling the rear seam;
/// [`AngularFootprint::overlaps`] accounts for the wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularFootprint<T> {
    pub azimuth: (T, T),
    pub elevation: (T, T),
    /// Center lies more than 90° off the forward direction.
    pub behind: bool,
}

impl<T: Real> AngularFootprint<T> {
    pub fn center_azimuth(&self) -> T {
        (self.azimuth.0 + self.azimuth.1) * T::lit(0.5)
    }

    pub fn azimuth_span(&self) -> T {
        self.azimuth.1 - self.azimuth.0
    }

    /// Interior overlap in both axes (touching intervals do not overlap).
    pub fn overlaps(&self, other: &Self) -> bool {
        let (e0, e1) = self.elevation;
        let (f0, f1) = other.elevation;
        if !(e0 < f1 && f0 < e1) {
            return false;
        }
        azimuth_overlap(self.azimuth, other.azimuth)
    }
}

/// Interval overlap on the circle.
pub fn azimuth_overlap<T: Real>(a: (T, T), b: (T, T)) -> bool {
    let tau = T::TAU();
    [-T::one(), T::zero(), T::one()].into_iter().any(|k| {
        let shift = tau * k;
        a.0 < b.1 + shift && b.0 + shift < a.1
    })
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::TAU();
    let mut x = a % tau;
    if x <= -T::PI() {
        x = x + tau;
    } else if x > T::PI() {
        x = x - tau;
    }
    x
}

/// Angular footprint of a rectangle seen from `pose`.
///
/// Azimuth extents come from the four corners. Elevation extents also
/// consider each edge's point of closest horizontal approach, where a
/// horizontal edge attains its extreme elevation.
pub fn angular_footprint<T: Real>(rect: &PlanarRect<T>, pose: &UserPose<T>) -> AngularFootprint<T> {
    let (center_az, _) = pose.bearing(rect.center);
    let corners = rect.corners();

    let mut az = (T::infinity(), T::neg_infinity());
    for &c in &corners {
        let (a, _) = pose.bearing(c);
        let a = center_az + wrap_angle(a - center_az);
        az = (az.0.min(a), az.1.max(a));
    }

    let mut el = (T::infinity(), T::neg_infinity());
    let mut take = |p: Vec3<T>| {
        let (_, e) = pose.bearing(p);
        el = (el.0.min(e), el.1.max(e));
    };
    for i in 0..4 {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        take(a);
        take((a + b) * T::lit(0.5));
        let (ah, bh) = (a - pose.position, b - pose.position);
        let dh = Vec3::new(bh.x - ah.x, T::zero(), bh.z - ah.z);
        let len2 = dh.dot(dh);
        if len2 > T::epsilon() {
            let t = -(Vec3::new(ah.x, T::zero(), ah.z).dot(dh)) / len2;
            let t = t.max(T::zero()).min(T::one());
            take(a + (b - a) * t);
        }
    }

    let behind = head_turn_angle(pose, rect.center)
        .map(|h| h > T::FRAC_PI_2())
        .unwrap_or(false);
    AngularFootprint { azimuth: az, elevation: el, behind }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn angular_size_examples() {
        let (a, e) = angular_size(1.0f64, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(a, deg(45.0), epsilon = 1e-12);
        assert_abs_diff_eq!(e, deg(45.0), epsilon = 1e-12);

        // arctan(0.25) = 14.036°, arctan(0.2) = 11.310°
        let (a, e) = angular_size(0.5f64, 0.4, 2.0).unwrap();
        assert_abs_diff_eq!(a.to_degrees(), 14.036_243_467_926_479, epsilon = 1e-9);
        assert_abs_diff_eq!(e.to_degrees(), 11.309_932_474_020_213, epsilon = 1e-9);
        assert!(a.min(e) >= deg(10.0));
    }

    #[test]
    fn angular_size_f32() {
        let (a, _) = angular_size(1.0f32, 1.0, 1.0).unwrap();
        assert!((a - std::f32::consts::FRAC_PI_4).abs() < 1e-6);
    }

    #[test]
    fn angular_size_rejects_non_positive() {
        assert!(matches!(angular_size(0.0, 1.0, 1.0), Err(GeometryError::NonPositive { what: "width", .. })));
        assert!(angular_size(1.0, -1.0, 1.0).is_err());
        assert!(angular_size(1.0, 1.0, 0.0).is_err());
        assert!(angular_size(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn head_turn_examples() {
        let pose = UserPose::new(Vec3::new(1.0, 2.0, 3.0), Vec3::forward()).unwrap();
        let p = pose.position();
        assert_abs_diff_eq!(head_turn_angle(&pose, p + Vec3::new(0.0, 0.0, 2.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            head_turn_angle(&pose, p + Vec3::new(1.0, 0.0, 1.0)).unwrap(),
            deg(45.0),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            head_turn_angle(&pose, p + Vec3::new(0.0, 0.0, -1.0)).unwrap(),
            deg(180.0),
            epsilon = 1e-12
        );
        assert_eq!(head_turn_angle(&pose, p), Err(GeometryError::Coincident));
    }

    #[test]
    fn pose_validation() {
        assert!(UserPose::new(Vec3::zero(), Vec3::new(0.0, 0.0, 2.0)).is_err());
        assert!(UserPose::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::forward()).is_err());
        let p = UserPose::looking_along(Vec3::zero(), Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p.forward(), Vec3::forward());
        let json = serde_json::json!({"position": [0.0, 0.0, 0.0], "forward": [0.0, 0.0, 3.0]});
        assert!(serde_json::from_value::<UserPose<f64>>(json).is_err());
    }

    #[test]
    fn face_user_examples() {
        let pose = UserPose::<f64>::origin();
        let o = face_user_orientation(Vec3::new(0.0, 0.0, 2.0), &pose).unwrap();
        assert_eq!(o.normal, Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(o.up, Vec3::up());
        assert_eq!(o.right, Vec3::new(1.0, 0.0, 0.0));

        let o = face_user_orientation(Vec3::new(2.0, 0.0, 0.0), &pose).unwrap();
        assert_eq!(o.normal, Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(o.up, Vec3::up());

        // Directly overhead: world-up is parallel to the normal.
        let o = face_user_orientation(Vec3::new(0.0, 2.0, 0.0), &pose).unwrap();
        assert_eq!(o.normal, Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(o.up, Vec3::forward());
        assert_abs_diff_eq!(o.right.dot(o.up), 0.0);
        assert_abs_diff_eq!(o.right.norm(), 1.0, epsilon = 1e-12);

        assert!(face_user_orientation(Vec3::zero(), &pose).is_err());
    }

    fn rect_at(center: Vec3<f64>, w: f64, h: f64, pose: &UserPose<f64>) -> PlanarRect<f64> {
        PlanarRect { center, orientation: face_user_orientation(center, pose).unwrap(), width: w, height: h }
    }

    #[test]
    fn footprint_forward_square() {
        let pose = UserPose::origin();
        let fp = angular_footprint(&rect_at(Vec3::new(0.0, 0.0, 2.0), 1.0, 1.0, &pose), &pose);
        let half = (0.25f64).atan();
        assert_abs_diff_eq!(fp.azimuth.0, -half, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.azimuth.1, half, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.elevation.1, half, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.center_azimuth(), 0.0, epsilon = 1e-12);
        assert!(!fp.behind);
    }

    #[test]
    fn footprint_disjoint_and_behind() {
        let pose = UserPose::origin();
        let a = angular_footprint(&rect_at(Vec3::new(0.0, 0.0, 2.0), 1.0, 1.0, &pose), &pose);
        let b = angular_footprint(&rect_at(Vec3::new(2.0, 0.0, 0.0), 1.0, 1.0, &pose), &pose);
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&a));
        let c = angular_footprint(&rect_at(Vec3::new(0.0, 0.0, -2.0), 1.0, 1.0, &pose), &pose);
        assert!(c.behind);
        assert_abs_diff_eq!(c.azimuth_span(), 2.0 * (0.25f64).atan(), epsilon = 1e-12);
        // Straddles the rear seam but still overlaps a copy of itself shifted by 2π.
        let shifted = AngularFootprint { azimuth: (c.azimuth.0 - std::f64::consts::TAU, c.azimuth.1 - std::f64::consts::TAU), ..c };
        assert!(c.overlaps(&shifted));
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-0.5), -0.5);
        assert_abs_diff_eq!(wrap_angle(7.0), 7.0 - std::f64::consts::TAU, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn angular_size_monotone(w in 0.01f64..10.0, h in 0.01f64..10.0, d in 0.05f64..20.0, k in 1.01f64..3.0) {
            let (a, e) = angular_size(w, h, d).unwrap();
            let (a2, e2) = angular_size(w, h, d * k).unwrap();
            prop_assert!(a2 < a && e2 < e);
            let (a3, _) = angular_size(w * k, h, d).unwrap();
            let (_, e3) = angular_size(w, h * k, d).unwrap();
            prop_assert!(a3 > a && e3 > e);
            prop_assert!(a > 0.0 && a < std::f64::consts::FRAC_PI_2);
        }

        #[test]
        fn head_turn_scale_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0, s in 0.01f64..100.0) {
            let v = Vec3::new(x, y, z);
            prop_assume!(v.norm() > 1e-3);
            let pose = UserPose::new(Vec3::new(0.3, -0.2, 1.0), Vec3::new(0.6, 0.0, 0.8)).unwrap();
            let a = head_turn_angle(&pose, pose.position() + v).unwrap();
            let b = head_turn_angle(&pose, pose.position() + v * s).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=std::f64::consts::PI).contains(&a));
        }

        #[test]
        fn footprint_centered_on_bearing(
            az in -3.0f64..3.0, el in -1.2f64..1.2, d in 0.8f64..6.0,
            w in 0.1f64..1.5, h in 0.1f64..1.5,
        ) {
            let pose = UserPose::origin();
            let dir = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos());
            let center = dir * d;
            let fp = angular_footprint(&rect_at(center, w, h, &pose), &pose);
            let (bearing, _) = pose.bearing(center);
            prop_assert!(wrap_angle(fp.center_azimuth() - bearing).abs() < 1e-6);
            prop_assert!(fp.azimuth.0 <= fp.azimuth.1 && fp.elevation.0 <= fp.elevation.1);
        }
    }
}
