//! Rigid-body pose algebra, rotations, quaternions and pinhole projection in
//! normalized image coordinates.
//!
//! Poses map world points into the camera frame: `X_cam = R * X_world + T`,
//! so the camera center is `c = -Rᵀ T`. A relative pose `(R_qk, T̂_qk)` maps
//! anchor-frame points into the query frame up to the unknown baseline
//! length: `X_q = R_qk * X_k + λ T̂_qk`.

use std::ops::Mul;

use nalgebra::{Matrix3, Unit, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Minimum camera-frame depth accepted by projection, in meters.
pub const DEPTH_EPS: f64 = 1e-8;

/// Per-entry tolerance for `RᵀR = I` and `det R = 1`.
pub const ROTATION_TOL: f64 = 1e-9;

/// Sanity bound on normalized coordinates (roughly a 168° field of view).
pub const FEATURE_BOUND: f64 = 10.0;

/// Skew-symmetric matrix `[v]×` such that `[v]× w = v × w`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Nearest proper rotation (Frobenius sense) to an arbitrary 3×3 matrix.
pub fn project_to_so3(m: &Mat3) -> Option<Mat3> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Some(u * d * v_t)
}

/// A proper 3D rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Mat3);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Builds a rotation, projecting onto SO(3) when the input is slightly off.
    ///
    /// Matrices that are not finite or whose nearest orthogonal matrix is a
    /// reflection are rejected.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("rotation matrix has non-finite entries".into()));
        }
        if is_rotation(&m) {
            return Ok(Rotation(m));
        }
        if m.determinant() <= 0.0 {
            return Err(Error::Domain(
                "matrix is not close to a proper rotation (det <= 0)".into(),
            ));
        }
        let r = project_to_so3(&m)
            .ok_or_else(|| Error::Domain("svd failed while orthonormalizing".into()))?;
        Ok(Rotation(r))
    }

    /// Builds a rotation only if the input already satisfies the tolerance.
    pub fn from_matrix_strict(m: Mat3) -> Result<Self> {
        if m.iter().all(|v| v.is_finite()) && is_rotation(&m) {
            Ok(Rotation(m))
        } else {
            Err(Error::Domain(format!(
                "matrix is not a rotation within {ROTATION_TOL:e}"
            )))
        }
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Exponential map of a rotation vector (axis times angle in radians).
    pub fn from_scaled_axis(w: Vec3) -> Self {
        let theta = w.norm();
        if theta < 1e-12 {
            // second-order expansion keeps tiny rotations orthonormal
            let k = skew(&w);
            let m = Mat3::identity() + k + 0.5 * k * k;
            return Rotation(project_to_so3(&m).unwrap_or(m));
        }
        let axis = w / theta;
        let k = skew(&axis);
        let m = Mat3::identity() + theta.sin() * k + (1.0 - theta.cos()) * k * k;
        Rotation(m)
    }

    pub fn from_axis_angle_deg(axis: Vec3, degrees: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Domain("rotation axis must be a nonzero vector".into()));
        }
        Ok(Self::from_scaled_axis(axis / n * degrees.to_radians()))
    }

    pub fn rot_x(degrees: f64) -> Self {
        Self::from_scaled_axis(Vec3::x() * degrees.to_radians())
    }

    pub fn rot_y(degrees: f64) -> Self {
        Self::from_scaled_axis(Vec3::y() * degrees.to_radians())
    }

    pub fn rot_z(degrees: f64) -> Self {
        Self::from_scaled_axis(Vec3::z() * degrees.to_radians())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Logarithm map: rotation vector with angle in `[0, π]`.
    pub fn log(&self) -> Vec3 {
        let m = &self.0;
        let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let sin = 0.5 * vee.norm();
        let cos = 0.5 * (m.trace() - 1.0);
        let theta = sin.atan2(cos);
        if theta < 1e-7 {
            return 0.5 * vee;
        }
        if std::f64::consts::PI - theta < 1e-6 {
            // near π the antisymmetric part vanishes; recover the axis from the quaternion
            let q = self.to_quaternion();
            let v = Vec3::new(q.q1(), q.q2(), q.q3());
            let n = v.norm();
            return v / n * theta;
        }
        vee * (theta / (2.0 * sin))
    }

    /// Rotation angle in degrees.
    pub fn angle_deg(&self) -> f64 {
        geodesic_angle(&Rotation::identity(), self)
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        rotation_to_quat(self)
    }
}

fn is_rotation(m: &Mat3) -> bool {
    let e = m.transpose() * m - Mat3::identity();
    e.iter().all(|v| v.abs() <= ROTATION_TOL) && (m.determinant() - 1.0).abs() <= ROTATION_TOL
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Scalar-first unit quaternion, stored in canonical sign (`q0 >= 0`, ties
/// broken by the first nonzero component being positive).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion([f64; 4]);

impl UnitQuaternion {
    /// Normalizes and canonicalizes `(q0, q1, q2, q3)`.
    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Result<Self> {
        Self::from_vector(Vector4::new(q0, q1, q2, q3))
    }

    pub fn from_vector(v: Vector4<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::Domain("quaternion must be finite and nonzero".into()));
        }
        let u = v / n;
        Ok(UnitQuaternion(canonical_sign(u).into()))
    }

    pub fn identity() -> Self {
        UnitQuaternion([1.0, 0.0, 0.0, 0.0])
    }

    pub fn q0(&self) -> f64 {
        self.0[0]
    }
    pub fn q1(&self) -> f64 {
        self.0[1]
    }
    pub fn q2(&self) -> f64 {
        self.0[2]
    }
    pub fn q3(&self) -> f64 {
        self.0[3]
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }

    pub fn components(&self) -> [f64; 4] {
        self.0
    }

    /// Re-applies the sign convention; a no-op on stored values.
    pub fn canonical(&self) -> Self {
        UnitQuaternion(canonical_sign(self.as_vector()).into())
    }

    /// Left-multiplication matrix `L(p)` with `L(p) q = p ⊗ q`.
    pub fn left_matrix(&self) -> nalgebra::Matrix4<f64> {
        left_matrix(&self.as_vector())
    }

    pub fn to_rotation(&self) -> Rotation {
        quat_to_rotation(self)
    }
}

pub(crate) fn left_matrix(p: &Vector4<f64>) -> nalgebra::Matrix4<f64> {
    let (q0, q1, q2, q3) = (p[0], p[1], p[2], p[3]);
    nalgebra::Matrix4::new(
        q0, -q1, -q2, -q3, //
        q1, q0, -q3, q2, //
        q2, q3, q0, -q1, //
        q3, -q2, q1, q0,
    )
}

fn canonical_sign(v: Vector4<f64>) -> Vector4<f64> {
    match v.iter().find(|c| **c != 0.0) {
        Some(first) if *first < 0.0 => -v,
        _ => v,
    }
}

pub fn quat_to_rotation(q: &UnitQuaternion) -> Rotation {
    let [w, x, y, z] = q.0;
    let m = Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    Rotation(m)
}

/// Shepperd's method: pivot on the largest of the trace and diagonal entries.
pub fn rotation_to_quat(r: &Rotation) -> UnitQuaternion {
    let m = &r.0;
    let t = m.trace();
    let v = if t >= m[(0, 0)] && t >= m[(1, 1)] && t >= m[(2, 2)] {
        let s = (1.0 + t).sqrt() * 2.0;
        Vector4::new(
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        )
    } else if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        Vector4::new(
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        )
    } else if m[(1, 1)] >= m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        Vector4::new(
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        Vector4::new(
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let v = v / v.norm();
    UnitQuaternion(canonical_sign(v).into())
}

/// Angle of the relative rotation `Raᵀ Rb`, in degrees, within `[0, 180]`.
///
/// Computed as `atan2(sin θ, cos θ)` from the antisymmetric part and the trace,
/// which equals the clamped `acos((tr − 1) / 2)` but keeps full precision near 0.
pub fn geodesic_angle(ra: &Rotation, rb: &Rotation) -> f64 {
    let m = ra.0.transpose() * rb.0;
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = (0.5 * vee.norm()).min(1.0);
    sin.atan2(cos).to_degrees()
}

/// World→camera rigid transform.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Pose from orientation and camera center: `T = −R c`.
    pub fn from_center(rotation: Rotation, center: Vec3) -> Self {
        let translation = -(rotation.0 * center);
        Pose {
            rotation,
            translation,
        }
    }

    /// Camera at `center` looking towards `target`; image y points away from `up`.
    pub fn look_at(center: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = target - center;
        if z.norm() < 1e-12 {
            return Err(Error::Domain("look_at target coincides with center".into()));
        }
        let z = z.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-9 {
            return Err(Error::Domain("look_at up vector is parallel to view direction".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let r = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Pose::from_center(Rotation::from_matrix(r)?, center))
    }

    pub fn center(&self) -> Vec3 {
        -(self.rotation.0.transpose() * self.translation)
    }

    /// Maps a world point into this camera's frame.
    pub fn transform_point(&self, world: &Vec3) -> Vec3 {
        self.rotation.0 * world + self.translation
    }

    /// Maps a camera-frame point back into the world frame.
    pub fn inverse_transform_point(&self, cam: &Vec3) -> Vec3 {
        self.rotation.0.transpose() * (cam - self.translation)
    }

    /// Back-projects a feature to the world point at the given camera depth.
    pub fn unproject(&self, feature: &NormalizedFeature, depth: f64) -> Vec3 {
        self.inverse_transform_point(&(feature.homogeneous() * depth))
    }

    /// Viewing direction of a feature, expressed in the world frame.
    pub fn ray_direction(&self, feature: &NormalizedFeature) -> Vec3 {
        (self.rotation.0.transpose() * feature.homogeneous()).normalize()
    }

    /// Relative transform `(R_ab, T_ab)` with `X_a = R_ab X_b + T_ab`.
    pub fn relative_to(&self, other: &Pose) -> (Rotation, Vec3) {
        let r = Rotation(self.rotation.0 * other.rotation.0.transpose());
        let t = self.translation - r.0 * other.translation;
        (r, t)
    }
}

/// Image-plane point with intrinsics removed; homogeneous form `(x, y, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedFeature {
    x: f64,
    y: f64,
}

impl NormalizedFeature {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain("feature coordinates must be finite".into()));
        }
        if x.abs() >= FEATURE_BOUND || y.abs() >= FEATURE_BOUND {
            return Err(Error::Domain(format!(
                "feature ({x}, {y}) outside the normalized bound {FEATURE_BOUND}"
            )));
        }
        Ok(NormalizedFeature { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn vector(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn homogeneous(&self) -> Vec3 {
        Vec3::new(self.x, self.y, 1.0)
    }
}

/// Scale-free relative pose of the query with respect to one anchor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePoseEstimate {
    rotation: Rotation,
    direction: Unit<Vec3>,
}

impl RelativePoseEstimate {
    /// `direction` is normalized; a zero or non-finite vector is rejected.
    pub fn new(rotation: Rotation, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::Domain("relative translation direction must be nonzero".into()));
        }
        Ok(RelativePoseEstimate {
            rotation,
            direction: Unit::new_normalize(direction),
        })
    }

    /// Exact relative pose of `query` with respect to `anchor`.
    pub fn between(query: &Pose, anchor: &Pose) -> Result<Self> {
        let (r, t) = query.relative_to(anchor);
        Self::new(r, t)
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn direction(&self) -> Vec3 {
        self.direction.into_inner()
    }
}

/// Chains a relative pose onto an anchor: `(R_qk R_k, R_qk T_k + s T̂_qk)`.
pub fn compose_absolute(rel: &RelativePoseEstimate, scale: f64, anchor: &Pose) -> Result<Pose> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    let r = rel.rotation * anchor.rotation;
    let t = rel.rotation.0 * anchor.translation + scale * rel.direction();
    Ok(Pose::new(r, t))
}

/// Swaps the roles of query and anchor: `(R_qkᵀ, −R_qkᵀ T̂_qk)`.
pub fn invert_relative(rel: &RelativePoseEstimate) -> RelativePoseEstimate {
    let rt = rel.rotation.transpose();
    let d = -(rt.0 * rel.direction());
    RelativePoseEstimate {
        rotation: rt,
        direction: Unit::new_normalize(d),
    }
}

/// Perspective projection returning raw normalized coordinates.
pub(crate) fn project_raw(pose: &Pose, world: &Vec3) -> Result<Vec2> {
    let p = pose.transform_point(world);
    if !(p.z > DEPTH_EPS) {
        return Err(Error::BehindCamera { depth: p.z });
    }
    Ok(Vec2::new(p.x / p.z, p.y / p.z))
}

pub fn project(pose: &Pose, world: &Vec3) -> Result<NormalizedFeature> {
    let p = project_raw(pose, world)?;
    NormalizedFeature::new(p.x, p.y)
}
