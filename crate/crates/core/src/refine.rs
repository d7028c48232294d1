//! Pose refinement through latent 3D points.
//!
//! Stage one triangulates every correspondence track from the anchor views
//! alone, minimizing the anchor-side feature perturbation `E₁`. Stage two
//! holds those points fixed and moves the query pose to minimize the query
//! reprojection error `E₂`. Because `E₁` never involves the query, one pass
//! of the two stages solves the nested problem exactly.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Matrix6, Vector6};

use crate::averaging::AnchorId;
use crate::error::{Error, Result};
use crate::geometry::{project_raw, skew, Mat3, NormalizedFeature, Pose, Rotation, Vec2, Vec3, DEPTH_EPS};
use crate::relative::midpoint_triangulate;

pub type AnchorPoses = BTreeMap<AnchorId, Pose>;

/// Third standard basis vector; selects depth from a camera-frame point.
const E3: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// One query feature with its matches in two or more anchor views.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceTrack {
    pub track_id: u64,
    pub query_feature: NormalizedFeature,
    anchor_obs: Vec<(AnchorId, NormalizedFeature)>,
}

impl CorrespondenceTrack {
    pub fn new(
        track_id: u64,
        query_feature: NormalizedFeature,
        anchor_obs: Vec<(AnchorId, NormalizedFeature)>,
    ) -> Result<Self> {
        if anchor_obs.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "track {track_id} has {} anchor observations, need 2",
                anchor_obs.len()
            )));
        }
        let mut seen = HashSet::new();
        if !anchor_obs.iter().all(|(id, _)| seen.insert(id)) {
            return Err(Error::Domain(format!("track {track_id} repeats an anchor id")));
        }
        Ok(CorrespondenceTrack {
            track_id,
            query_feature,
            anchor_obs,
        })
    }

    pub fn anchor_obs(&self) -> &[(AnchorId, NormalizedFeature)] {
        &self.anchor_obs
    }
}

/// A triangulated track, parameterized in its reference anchor view.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPoint {
    pub track_id: u64,
    pub world_point: Vec3,
    pub reference_view: AnchorId,
    pub ref_depth: f64,
    pub ref_feature: Vec2,
    /// `E₁` at the optimum.
    pub e1_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub max_iters: usize,
    pub step_tol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangulationOptions {
    pub lm: LmOptions,
}

impl Default for TriangulationOptions {
    fn default() -> Self {
        TriangulationOptions {
            lm: LmOptions {
                initial_damping: 1e-4,
                max_iters: 100,
                step_tol: 1e-10,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    /// Tracks whose reprojection error at the initial pose exceeds this are
    /// left out of `E₂` (normalized units).
    pub tau_reproj: f64,
    /// Huber scale for `E₂`; `None` keeps the plain quadratic.
    pub huber: Option<f64>,
    pub lm: LmOptions,
    pub triangulation: TriangulationOptions,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            tau_reproj: 0.01,
            huber: None,
            lm: LmOptions {
                initial_damping: 1e-4,
                max_iters: 100,
                step_tol: 1e-12,
            },
            triangulation: TriangulationOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementResult {
    pub pose: Pose,
    pub e2_initial: f64,
    pub e2_final: f64,
    pub iterations: usize,
    pub points_used: usize,
    pub latent_points: Vec<LatentPoint>,
}

/// Anchor view `k` expressed relative to the reference view:
/// `(R_k1, T_k1, γ_k)`.
struct RelativeView {
    rotation: Mat3,
    translation: Vec3,
    feature: Vec3,
}

struct TrackFrame {
    reference: AnchorId,
    reference_pose: Pose,
    ref_observed: Vec2,
    others: Vec<RelativeView>,
}

fn lookup<'a>(poses: &'a AnchorPoses, id: &AnchorId) -> Result<&'a Pose> {
    poses
        .get(id)
        .ok_or_else(|| Error::Domain(format!("no pose for anchor {id}")))
}

fn track_frame(track: &CorrespondenceTrack, poses: &AnchorPoses, reference: &AnchorId) -> Result<TrackFrame> {
    let (_, ref_feat) = track
        .anchor_obs
        .iter()
        .find(|(id, _)| id == reference)
        .ok_or_else(|| Error::Domain(format!("anchor {reference} is not in track {}", track.track_id)))?;
    let ref_pose = *lookup(poses, reference)?;
    let mut others = Vec::with_capacity(track.anchor_obs.len() - 1);
    for (id, f) in &track.anchor_obs {
        if id == reference {
            continue;
        }
        let pose = lookup(poses, id)?;
        let (r, t) = pose.relative_to(&ref_pose);
        others.push(RelativeView {
            rotation: *r.matrix(),
            translation: t,
            feature: f.homogeneous(),
        });
    }
    Ok(TrackFrame {
        reference: reference.clone(),
        reference_pose: ref_pose,
        ref_observed: ref_feat.vector(),
        others,
    })
}

fn check_depth(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("reference depth must be positive, got {rho}")));
    }
    Ok(())
}

/// Closed-form `E(γ̂₁, ρ̂₁)` expanded per view as
/// `|γ_k|² − 2 (ρ γ_kᵀR h + γ_kᵀT)/d + (ρ²|h|² + |T|² + 2ρ hᵀRᵀT)/d²`
/// with `h = (γ̂₁, 1)` and `d = ρ e₃ᵀR h + e₃ᵀT`, plus `|γ₁ − γ̂₁|²`.
fn frame_objective(frame: &TrackFrame, gamma_hat: &Vec2, rho: f64) -> Result<f64> {
    check_depth(rho)?;
    let h = Vec3::new(gamma_hat.x, gamma_hat.y, 1.0);
    let mut e = (frame.ref_observed - gamma_hat).norm_squared();
    for v in &frame.others {
        let rh = v.rotation * h;
        let den = rho * E3.dot(&rh) + E3.dot(&v.translation);
        if !(den > DEPTH_EPS) {
            return Err(Error::BehindCamera { depth: den });
        }
        let num1 = rho * v.feature.dot(&rh) + v.feature.dot(&v.translation);
        let num2 = rho * rho * h.norm_squared()
            + v.translation.norm_squared()
            + 2.0 * rho * rh.dot(&v.translation);
        e += v.feature.norm_squared() - 2.0 * num1 / den + num2 / (den * den);
    }
    Ok(e)
}

fn frame_gradient(frame: &TrackFrame, gamma_hat: &Vec2, rho: f64) -> Result<Vec3> {
    check_depth(rho)?;
    let h = Vec3::new(gamma_hat.x, gamma_hat.y, 1.0);
    let d0 = -2.0 * (frame.ref_observed - gamma_hat);
    let mut g = Vec3::new(d0.x, d0.y, 0.0);
    for v in &frame.others {
        let r = &v.rotation;
        let t = &v.translation;
        let rh = r * h;
        let den = rho * E3.dot(&rh) + E3.dot(t);
        if !(den > DEPTH_EPS) {
            return Err(Error::BehindCamera { depth: den });
        }
        let num1 = rho * v.feature.dot(&rh) + v.feature.dot(t);
        let num2 = rho * rho * h.norm_squared() + t.norm_squared() + 2.0 * rho * rh.dot(t);
        // partials of (num1, den, num2) w.r.t. (u, v, ρ)
        let mut dnum1 = Vec3::zeros();
        let mut dden = Vec3::zeros();
        let mut dnum2 = Vec3::zeros();
        for axis in 0..2 {
            let col: Vec3 = r.column(axis).into_owned();
            dnum1[axis] = rho * v.feature.dot(&col);
            dden[axis] = rho * col.z;
            dnum2[axis] = 2.0 * rho * rho * h[axis] + 2.0 * rho * col.dot(t);
        }
        dnum1[2] = v.feature.dot(&rh);
        dden[2] = rh.z;
        dnum2[2] = 2.0 * rho * h.norm_squared() + 2.0 * rh.dot(t);
        g += -2.0 * (dnum1 / den - dden * (num1 / (den * den))) + dnum2 / (den * den)
            - dden * (2.0 * num2 / (den * den * den));
    }
    Ok(g)
}

/// `E₁` for a track parameterized in `reference`'s view.
pub fn e1_objective(
    track: &CorrespondenceTrack,
    poses: &AnchorPoses,
    reference: &AnchorId,
    gamma_hat: Vec2,
    rho: f64,
) -> Result<f64> {
    frame_objective(&track_frame(track, poses, reference)?, &gamma_hat, rho)
}

/// Analytic gradient of [`e1_objective`] with respect to `(γ̂ₓ, γ̂ᵧ, ρ̂)`.
pub fn e1_gradient(
    track: &CorrespondenceTrack,
    poses: &AnchorPoses,
    reference: &AnchorId,
    gamma_hat: Vec2,
    rho: f64,
) -> Result<Vec3> {
    frame_gradient(&track_frame(track, poses, reference)?, &gamma_hat, rho)
}

/// Stacked residuals and Jacobian in `(u, v, ln ρ)`.
fn frame_residuals(frame: &TrackFrame, p: &Vec3) -> Option<(Vec<f64>, Vec<[f64; 3]>)> {
    let rho = p.z.exp();
    let h = Vec3::new(p.x, p.y, 1.0);
    let mut r = Vec::with_capacity(2 + 2 * frame.others.len());
    let mut j = Vec::with_capacity(r.capacity());
    r.push(frame.ref_observed.x - p.x);
    r.push(frame.ref_observed.y - p.y);
    j.push([-1.0, 0.0, 0.0]);
    j.push([0.0, -1.0, 0.0]);
    for v in &frame.others {
        let pt = rho * (v.rotation * h) + v.translation;
        if !(pt.z > DEPTH_EPS) {
            return None;
        }
        let iz = 1.0 / pt.z;
        let proj = Matrix3::new(iz, 0.0, -pt.x * iz * iz, 0.0, iz, -pt.y * iz * iz, 0.0, 0.0, 0.0);
        let dp = Matrix3::from_columns(&[
            rho * v.rotation.column(0),
            rho * v.rotation.column(1),
            rho * (v.rotation * h),
        ]);
        let jd = -(proj * dp);
        r.push(v.feature.x - pt.x * iz);
        r.push(v.feature.y - pt.y * iz);
        j.push([jd[(0, 0)], jd[(0, 1)], jd[(0, 2)]]);
        j.push([jd[(1, 0)], jd[(1, 1)], jd[(1, 2)]]);
    }
    Some((r, j))
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Picks the reference anchor: the earlier member of the track pair whose
/// viewing rays meet at the widest angle at `point`.
fn choose_reference(track: &CorrespondenceTrack, poses: &AnchorPoses, point: &Vec3) -> Result<AnchorId> {
    let dirs: Vec<Vec3> = track
        .anchor_obs
        .iter()
        .map(|(id, _)| lookup(poses, id).map(|p| (point - p.center()).normalize()))
        .collect::<Result<_>>()?;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..dirs.len() {
        for k in i + 1..dirs.len() {
            let angle = dirs[i].cross(&dirs[k]).norm().atan2(dirs[i].dot(&dirs[k]));
            if angle > best.0 {
                best = (angle, i);
            }
        }
    }
    Ok(track.anchor_obs[best.1].0.clone())
}

/// Minimizes `E₁` for one track by Levenberg–Marquardt over `(γ̂₁, ln ρ̂₁)`.
///
/// Without `init`, starts from the midpoint triangulation of the first two
/// anchor views.
pub fn triangulate_track(
    track: &CorrespondenceTrack,
    poses: &AnchorPoses,
    init: Option<Vec3>,
    opts: &TriangulationOptions,
) -> Result<LatentPoint> {
    let start = initial_point(track, poses, init)?;
    let reference = choose_reference(track, poses, &start)?;
    triangulate_track_in(track, poses, &reference, start, opts)
}

/// As [`triangulate_track`], with the reference view fixed by the caller.
pub fn triangulate_track_with_reference(
    track: &CorrespondenceTrack,
    poses: &AnchorPoses,
    reference: &AnchorId,
    init: Option<Vec3>,
    opts: &TriangulationOptions,
) -> Result<LatentPoint> {
    let start = initial_point(track, poses, init)?;
    triangulate_track_in(track, poses, reference, start, opts)
}

fn initial_point(track: &CorrespondenceTrack, poses: &AnchorPoses, init: Option<Vec3>) -> Result<Vec3> {
    let centers: Vec<Vec3> = track
        .anchor_obs
        .iter()
        .map(|(id, _)| lookup(poses, id).map(|p| p.center()))
        .collect::<Result<_>>()?;
    let spread = centers
        .iter()
        .map(|c| (c - centers[0]).norm())
        .fold(0.0, f64::max);
    if spread < 1e-12 {
        return Err(Error::DegenerateGeometry(format!(
            "track {}: all anchor centers coincide, depth is unobservable",
            track.track_id
        )));
    }
    match init {
        Some(p) => Ok(p),
        None => {
            let (ia, fa) = &track.anchor_obs[0];
            let (ib, fb) = &track.anchor_obs[1];
            midpoint_triangulate(lookup(poses, ia)?, lookup(poses, ib)?, fa, fb)
        }
    }
}

fn triangulate_track_in(
    track: &CorrespondenceTrack,
    poses: &AnchorPoses,
    reference: &AnchorId,
    start: Vec3,
    opts: &TriangulationOptions,
) -> Result<LatentPoint> {
    let frame = track_frame(track, poses, reference)?;
    let local = frame.reference_pose.transform_point(&start);
    if !(local.z > DEPTH_EPS) {
        return Err(Error::Init(format!(
            "track {}: initial point is behind reference anchor {reference}",
            track.track_id
        )));
    }
    let mut p = Vec3::new(local.x / local.z, local.y / local.z, local.z.ln());
    let (mut r, mut jac) = frame_residuals(&frame, &p).ok_or_else(|| {
        Error::Init(format!("track {}: initial point is behind an anchor", track.track_id))
    })?;
    let initial_cost = sum_sq(&r);
    let mut cost = initial_cost;
    let mut lambda = opts.lm.initial_damping;
    for _ in 0..opts.lm.max_iters {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vec3::zeros();
        for (ri, ji) in r.iter().zip(&jac) {
            let row = Vec3::new(ji[0], ji[1], ji[2]);
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        if jtr.amax() == 0.0 {
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for d in 0..3 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + delta;
            match frame_residuals(&frame, &trial) {
                Some((tr, tj)) if sum_sq(&tr) < cost => {
                    p = trial;
                    cost = sum_sq(&tr);
                    r = tr;
                    jac = tj;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if delta.norm() < opts.lm.step_tol {
                        lambda = f64::INFINITY;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted || !lambda.is_finite() {
            break;
        }
    }
    if !(cost <= 10.0 * initial_cost) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence(format!("track {} triangulation diverged", track.track_id)));
    }
    if jacobian_rank_deficient(&jac) {
        return Err(Error::DegenerateGeometry(format!(
            "track {}: depth is unobservable from these anchors",
            track.track_id
        )));
    }
    let rho = p.z.exp();
    let ref_feature = Vec2::new(p.x, p.y);
    let world_point = frame
        .reference_pose
        .inverse_transform_point(&(rho * Vec3::new(p.x, p.y, 1.0)));
    Ok(LatentPoint {
        track_id: track.track_id,
        world_point,
        reference_view: frame.reference,
        ref_depth: rho,
        ref_feature,
        e1_residual: cost,
    })
}

fn jacobian_rank_deficient(jac: &[[f64; 3]]) -> bool {
    let mut jtj = Matrix3::<f64>::zeros();
    for ji in jac {
        let row = Vec3::new(ji[0], ji[1], ji[2]);
        jtj += row * row.transpose();
    }
    let e = jtj.symmetric_eigenvalues();
    !(e.min() > 1e-14 * e.max())
}

/// Squared query reprojection error of one latent point, or `None` if it is
/// behind the camera.
fn reprojection_sq(pose: &Pose, point: &Vec3, observed: &Vec2) -> Option<f64> {
    project_raw(pose, point).ok().map(|p| (observed - p).norm_squared())
}

fn robust_cost(sq: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(k) if sq > k * k => 2.0 * k * sq.sqrt() - k * k,
        _ => sq,
    }
}

fn e2_cost(pose: &Pose, pts: &[(Vec3, Vec2)], huber: Option<f64>) -> Option<f64> {
    let mut c = 0.0;
    for (x, obs) in pts {
        c += robust_cost(reprojection_sq(pose, x, obs)?, huber);
    }
    Some(c)
}

/// Two-stage refinement: triangulate every track from the anchors, then
/// minimize the query reprojection error over SE(3) starting at `init_pose`.
pub fn refine_pose(
    tracks: &[CorrespondenceTrack],
    poses: &AnchorPoses,
    init_pose: &Pose,
    cfg: &RefineConfig,
) -> Result<RefinementResult> {
    let mut latent = Vec::new();
    let mut pts: Vec<(Vec3, Vec2)> = Vec::new();
    for track in tracks {
        let Ok(lp) = triangulate_track(track, poses, None, &cfg.triangulation) else {
            continue;
        };
        let observed = track.query_feature.vector();
        match reprojection_sq(init_pose, &lp.world_point, &observed) {
            Some(sq) if sq.sqrt() <= cfg.tau_reproj => {
                pts.push((lp.world_point, observed));
                latent.push(lp);
            }
            _ => {}
        }
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} usable tracks for pose refinement, need 3",
            pts.len()
        )));
    }

    let (pose, e2_initial, e2_final, iterations) = minimize_e2(&pts, init_pose, cfg)?;
    if e2_final > e2_initial {
        return Err(Error::Internal("query reprojection error increased".into()));
    }
    Ok(RefinementResult {
        pose,
        e2_initial,
        e2_final,
        iterations,
        points_used: pts.len(),
        latent_points: latent,
    })
}

fn minimize_e2(pts: &[(Vec3, Vec2)], init: &Pose, cfg: &RefineConfig) -> Result<(Pose, f64, f64, usize)> {
    let huber = cfg.huber;
    let initial = e2_cost(init, pts, huber).ok_or_else(|| Error::Internal("latent point behind initial pose".into()))?;
    let mut pose = *init;
    let mut cost = initial;
    let mut lambda = cfg.lm.initial_damping;
    let mut iterations = 0;
    while iterations < cfg.lm.max_iters {
        if cost == 0.0 {
            break;
        }
        iterations += 1;
        let (jtj, jtr) = normal_equations(&pose, pts, huber);
        if jtr.amax() == 0.0 {
            break;
        }
        let mut accepted = false;
        let mut small_step = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for d in 0..6 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let omega = Vec3::new(delta[0], delta[1], delta[2]);
            let dt = Vec3::new(delta[3], delta[4], delta[5]);
            let trial = Pose::new(
                pose.rotation * Rotation::from_scaled_axis(omega),
                pose.translation + dt,
            );
            match e2_cost(&trial, pts, huber) {
                Some(c) if c < cost => {
                    pose = trial;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    small_step = delta.norm() < cfg.lm.step_tol;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted || small_step {
            break;
        }
    }
    Ok((pose, initial, cost, iterations))
}

/// Gauss–Newton normal equations for the right-multiplicative increment
/// `R ← R exp(ω)`, `T ← T + δt`, with Huber weights when enabled.
fn normal_equations(pose: &Pose, pts: &[(Vec3, Vec2)], huber: Option<f64>) -> (Matrix6<f64>, Vector6<f64>) {
    let mut jtj = Matrix6::<f64>::zeros();
    let mut jtr = Vector6::<f64>::zeros();
    let r_mat = pose.rotation.matrix();
    for (x, obs) in pts {
        let pc = pose.transform_point(x);
        let iz = 1.0 / pc.z;
        let res = obs - Vec2::new(pc.x * iz, pc.y * iz);
        let weight = match huber {
            Some(k) if res.norm() > k => k / res.norm(),
            _ => 1.0,
        };
        let jp = Matrix2x3::new(iz, 0.0, -pc.x * iz * iz, 0.0, iz, -pc.y * iz * iz);
        // d(pc)/dω = −R [x]×, d(pc)/dt = I; residual = obs − π(pc)
        let d_omega = jp * (r_mat * skew(x));
        let d_t = -jp;
        let mut j = Matrix2x6::<f64>::zeros();
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_omega);
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_t);
        jtj += weight * j.transpose() * j;
        jtr += weight * j.transpose() * res;
    }
    (jtj, jtr)
}
