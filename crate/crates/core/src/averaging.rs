//! Combining K relative-pose estimates with K known anchor poses into one
//! query pose.
//!
//! Two families live here. The baselines (translation averaging over the
//! cross-product constraint and linear quaternion rotation averaging) couple
//! relative rotation into the translation estimate. The decoupled estimators
//! intersect one locus ray per anchor in closed form for the camera center
//! and take the Frobenius-optimal rotation mean for orientation.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix4, Unit, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{
    invert_relative, project_to_so3, skew, Mat3, Pose, RelativePoseEstimate, Rotation,
    UnitQuaternion, Vec3,
};

/// Opaque image identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorId(pub String);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AnchorId {
    fn from(s: &str) -> Self {
        AnchorId(s.to_owned())
    }
}

impl From<String> for AnchorId {
    fn from(s: String) -> Self {
        AnchorId(s)
    }
}

/// One anchor's known pose together with the query's relative pose to it.
///
/// The reverse direction `T̂_kq = −R_qkᵀ T̂_qk` is fixed at construction so the
/// center path reads it without touching `R_qk` again.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorObservation {
    pub anchor_id: AnchorId,
    pub anchor_pose: Pose,
    rel: RelativePoseEstimate,
    direction_kq: Unit<Vec3>,
}

impl AnchorObservation {
    pub fn new(anchor_id: impl Into<AnchorId>, anchor_pose: Pose, rel: RelativePoseEstimate) -> Self {
        let inv = invert_relative(&rel);
        AnchorObservation {
            anchor_id: anchor_id.into(),
            anchor_pose,
            rel,
            direction_kq: Unit::new_normalize(inv.direction()),
        }
    }

    /// Builds an observation from the relative rotation and an already known
    /// anchor→query direction `T̂_kq`, which is stored verbatim.
    pub fn from_reverse_direction(
        anchor_id: impl Into<AnchorId>,
        anchor_pose: Pose,
        rotation_qk: Rotation,
        direction_kq: Vec3,
    ) -> Result<Self> {
        let n = direction_kq.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(Error::Domain("direction must be nonzero".into()));
        }
        let direction_kq = Unit::new_normalize(direction_kq);
        let rel = RelativePoseEstimate::new(rotation_qk, -(rotation_qk * direction_kq.into_inner()))?;
        Ok(AnchorObservation {
            anchor_id: anchor_id.into(),
            anchor_pose,
            rel,
            direction_kq,
        })
    }

    pub fn rel(&self) -> &RelativePoseEstimate {
        &self.rel
    }

    pub fn direction_kq(&self) -> Vec3 {
        self.direction_kq.into_inner()
    }

    /// Per-anchor estimate of the query rotation, `R_qk R_k`.
    pub fn rotation_estimate(&self) -> Rotation {
        self.rel.rotation() * &self.anchor_pose.rotation
    }

    pub fn rotation_constraint(&self) -> RotationConstraint {
        RotationConstraint {
            anchor_rotation: self.anchor_pose.rotation,
            relative_rotation: *self.rel.rotation(),
        }
    }
}

/// The rotation-only part of an observation: `(R_k, R_qk)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationConstraint {
    pub anchor_rotation: Rotation,
    pub relative_rotation: Rotation,
}

/// Half-line of candidate camera centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    direction: Unit<Vec3>,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !n.is_finite() || n < 1e-300 || !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("ray needs a finite origin and nonzero direction".into()));
        }
        Ok(Ray {
            origin,
            direction: Unit::new_normalize(direction),
        })
    }

    pub fn direction(&self) -> Vec3 {
        self.direction.into_inner()
    }

    pub fn point_at(&self, lambda: f64) -> Vec3 {
        self.origin + lambda * self.direction.into_inner()
    }

    /// Distance from `p` to the supporting line.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let d = self.direction.into_inner();
        let w = p - self.origin;
        (w - d * d.dot(&w)).norm()
    }

    /// Angle in degrees between the ray direction and `p − origin`; 180° when
    /// `p` lies behind the origin. `None` when `p` coincides with the origin.
    pub fn angle_to(&self, p: &Vec3) -> Option<f64> {
        let w = p - self.origin;
        let n = w.norm();
        if n < 1e-12 {
            return None;
        }
        let d = self.direction.into_inner();
        Some(d.cross(&w).norm().atan2(d.dot(&w)).to_degrees())
    }

    /// Midpoint of the common perpendicular between the two supporting lines.
    ///
    /// Fails when the lines are parallel within `min_angle_rad`.
    pub fn midpoint_with(&self, other: &Ray, min_angle_rad: f64) -> Result<Vec3> {
        let (p1, p2) = self.closest_points(other, min_angle_rad)?;
        Ok(0.5 * (p1 + p2))
    }

    /// Closest points `(on self, on other)` of the two supporting lines.
    pub fn closest_points(&self, other: &Ray, min_angle_rad: f64) -> Result<(Vec3, Vec3)> {
        let d1 = self.direction.into_inner();
        let d2 = other.direction.into_inner();
        let sin = d1.cross(&d2).norm();
        if sin <= min_angle_rad.sin() {
            return Err(Error::DegenerateGeometry(format!(
                "rays are parallel (angle {:e} rad)",
                sin.asin()
            )));
        }
        let w0 = self.origin - other.origin;
        let b = d1.dot(&d2);
        let d = d1.dot(&w0);
        let e = d2.dot(&w0);
        let denom = 1.0 - b * b;
        let s = (b * e - d) / denom;
        let t = (e - b * d) / denom;
        Ok((self.point_at(s), other.point_at(t)))
    }
}

/// Line of query centers `c_k + λ R_kᵀ T̂_kq` allowed by one anchor.
pub fn locus_ray(obs: &AnchorObservation) -> Ray {
    let origin = obs.anchor_pose.center();
    let direction = obs.anchor_pose.rotation.transpose().apply(&obs.direction_kq());
    Ray {
        origin,
        direction: Unit::new_normalize(direction),
    }
}

/// Closed-form least-squares center of a ray bundle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterSolution {
    pub center: Vec3,
    pub normal_matrix_condition: f64,
    pub residual_rms: f64,
}

/// Condition number above which the ray bundle is treated as parallel.
pub const MAX_CENTER_CONDITION: f64 = 1e8;

/// Sum of squared point-to-line distances.
pub fn ray_objective(rays: &[Ray], c: &Vec3) -> f64 {
    rays.iter().map(|r| r.distance(c).powi(2)).sum()
}

/// Point minimizing the summed squared distance to all rays:
/// `Σ(I − d dᵀ) c = Σ(I − d dᵀ) c_k`.
pub fn center_average(rays: &[Ray]) -> Result<CenterSolution> {
    if rays.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "center averaging needs at least 2 rays, got {}",
            rays.len()
        )));
    }
    let mut a = Mat3::zeros();
    let mut b = Vec3::zeros();
    for ray in rays {
        let d = ray.direction();
        let p = Mat3::identity() - d * d.transpose();
        a += p;
        b += p * ray.origin;
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_CENTER_CONDITION) {
        return Err(Error::DegenerateGeometry(format!(
            "ray bundle is near-parallel (condition {cond:e})"
        )));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::DegenerateGeometry("normal matrix is not positive definite".into()))?;
    let center = chol.solve(&b);
    let residual_rms = (ray_objective(rays, &center) / rays.len() as f64).sqrt();
    Ok(CenterSolution {
        center,
        normal_matrix_condition: cond,
        residual_rms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TranslationAveragingOptions {
    pub max_iters: usize,
    /// Stop once the update is shorter than this, in meters.
    pub tol: f64,
    /// Baseline floor as a fraction of the anchor spread.
    pub floor_factor: f64,
}

impl Default for TranslationAveragingOptions {
    fn default() -> Self {
        TranslationAveragingOptions {
            max_iters: 50,
            tol: 1e-9,
            floor_factor: 1e-6,
        }
    }
}

/// Iteratively reweighted least squares over `[T̂_kq]× (T_k − R_kq T_q) = 0`.
///
/// Row blocks are weighted by the inverse of the current baseline estimate so
/// the algebraic residual approximates a geometric one.
pub fn govindu_translation_average(
    obs: &[AnchorObservation],
    opts: &TranslationAveragingOptions,
) -> Result<Vec3> {
    if obs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "translation averaging needs at least 2 observations, got {}",
            obs.len()
        )));
    }
    let blocks: Vec<(Mat3, Vec3, Mat3, Vec3)> = obs
        .iter()
        .map(|o| {
            let r_kq = *o.rel().rotation().transpose().matrix();
            let s = skew(&o.direction_kq());
            let t_k = o.anchor_pose.translation;
            (s * r_kq, s * t_k, r_kq, t_k)
        })
        .collect();

    let centers: Vec<Vec3> = obs.iter().map(|o| o.anchor_pose.center()).collect();
    let mean = centers.iter().sum::<Vec3>() / centers.len() as f64;
    let spread = centers.iter().map(|c| (c - mean).norm()).sum::<f64>() / centers.len() as f64;
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let floor = opts.floor_factor * scale;

    let mut weights = vec![1.0; blocks.len()];
    let mut t_q = solve_weighted(&blocks, &weights)?;
    for _ in 1..opts.max_iters.max(1) {
        for (w, (_, _, r_kq, t_k)) in weights.iter_mut().zip(&blocks) {
            let baseline = (t_k - r_kq * t_q).norm();
            *w = 1.0 / baseline.max(floor);
        }
        let next = solve_weighted(&blocks, &weights)?;
        let step = (next - t_q).norm();
        t_q = next;
        if step < opts.tol {
            break;
        }
    }
    Ok(t_q)
}

fn solve_weighted(blocks: &[(Mat3, Vec3, Mat3, Vec3)], weights: &[f64]) -> Result<Vec3> {
    let n = blocks.len() * 3;
    let mut a = DMatrix::<f64>::zeros(n, 3);
    let mut b = DVector::<f64>::zeros(n);
    for (k, ((ak, bk, _, _), w)) in blocks.iter().zip(weights).enumerate() {
        a.view_mut((3 * k, 0), (3, 3)).copy_from(&(ak * *w));
        b.rows_mut(3 * k, 3).copy_from(&(bk * *w));
    }
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let (hi, lo) = (s.max(), s.min());
    if !(lo > 1e-10 * hi) {
        return Err(Error::DegenerateGeometry(format!(
            "translation system has rank < 3 (singular values {hi:e} .. {lo:e})"
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Internal(format!("svd solve failed: {e}")))?;
    Ok(Vec3::new(x[0], x[1], x[2]))
}

/// Linear least squares on the stacked quaternion system `Q_kq q_q = q_k`.
///
/// `Q_kq` is the left-multiplication matrix of the quaternion of `R_qkᵀ`. Each
/// `q_k` is sign-aligned so that its implied query quaternion `Q_kqᵀ q_k` lies
/// in the hemisphere of the first one; the solution is then normalized.
pub fn govindu_rotation_average(constraints: &[RotationConstraint]) -> Result<Rotation> {
    if constraints.is_empty() {
        return Err(Error::InsufficientData("rotation averaging needs at least 1 observation".into()));
    }
    let k = constraints.len();
    let mut a = DMatrix::<f64>::zeros(4 * k, 4);
    let mut b = DVector::<f64>::zeros(4 * k);
    let mut reference: Option<Vector4<f64>> = None;
    for (i, c) in constraints.iter().enumerate() {
        let q_kq = c.relative_rotation.transpose().to_quaternion();
        let l = q_kq.left_matrix();
        let mut q_k = c.anchor_rotation.to_quaternion().as_vector();
        let implied = l.transpose() * q_k;
        match reference {
            None => reference = Some(implied),
            Some(r) if r.dot(&implied) < 0.0 => q_k = -q_k,
            _ => {}
        }
        a.view_mut((4 * i, 0), (4, 4)).copy_from(&l);
        b.rows_mut(4 * i, 4).copy_from(&q_k);
    }
    let svd = a.svd(true, true);
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Internal(format!("svd solve failed: {e}")))?;
    let q = UnitQuaternion::from_vector(Vector4::new(x[0], x[1], x[2], x[3]))?;
    Ok(q.to_rotation())
}

/// Summed squared Frobenius distance `Σ ‖R − A_k‖²_F`.
pub fn frobenius_objective(r: &Rotation, estimates: &[Rotation]) -> f64 {
    estimates
        .iter()
        .map(|a| (r.matrix() - a.matrix()).norm_squared())
        .sum()
}

/// Frobenius-optimal rotation mean via the dominant eigenvector of `Σ q_k q_kᵀ`.
///
/// Fails when the top eigenvalue is not separated from the second one, i.e.
/// when the mean is not unique.
pub fn markley_rotation_average(estimates: &[Rotation]) -> Result<Rotation> {
    if estimates.is_empty() {
        return Err(Error::InsufficientData("rotation averaging needs at least 1 estimate".into()));
    }
    let mut m = Matrix4::<f64>::zeros();
    let mut running = Vector4::<f64>::zeros();
    for r in estimates {
        let mut q = r.to_quaternion().as_vector();
        if running.dot(&q) < 0.0 {
            q = -q;
        }
        running += q;
        m += q * q.transpose();
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let gap = eig.eigenvalues[order[0]] - eig.eigenvalues[order[1]];
    if gap <= 1e-9 * estimates.len() as f64 {
        return Err(Error::AmbiguousAverage { gap });
    }
    let v: Vector4<f64> = eig.eigenvectors.column(order[0]).into_owned();
    Ok(UnitQuaternion::from_vector(v)?.to_rotation())
}

/// The same mean computed as the SO(3) projection of `Σ A_k`.
pub fn markley_by_projection(estimates: &[Rotation]) -> Result<Rotation> {
    if estimates.is_empty() {
        return Err(Error::InsufficientData("rotation averaging needs at least 1 estimate".into()));
    }
    let sum = estimates.iter().fold(Mat3::zeros(), |acc, r| acc + r.matrix());
    let r = project_to_so3(&sum).ok_or_else(|| Error::Internal("svd failed".into()))?;
    Ok(Rotation::from_matrix_unchecked(r))
}

/// Baseline query pose: quaternion rotation averaging plus translation
/// averaging, with the center read off as `−R_qᵀ T_q`.
pub fn govindu_pose(obs: &[AnchorObservation], opts: &TranslationAveragingOptions) -> Result<Pose> {
    let constraints: Vec<RotationConstraint> = obs.iter().map(|o| o.rotation_constraint()).collect();
    let rotation = govindu_rotation_average(&constraints)?;
    let translation = govindu_translation_average(obs, opts)?;
    Ok(Pose::new(rotation, translation))
}
