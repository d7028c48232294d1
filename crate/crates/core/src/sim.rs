//! Synthetic scenes and the controlled localization studies run on them.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::averaging::{
    center_average, govindu_pose, govindu_translation_average, locus_ray, markley_rotation_average, AnchorId,
    AnchorObservation, Ray, TranslationAveragingOptions,
};
use crate::consensus::decoupled_pose;
use crate::error::{Error, Result};
use crate::geometry::{
    geodesic_angle, project, NormalizedFeature, Pose, RelativePoseEstimate, Rotation, Vec3, FEATURE_BOUND,
};
use crate::localize::{
    estimate_anchors, localize_estimated, AnchorMatches, EstimatedAnchor, KeypointMatch, Localization,
    LocalizeConfig,
};

const MAX_ATTEMPTS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Ring,
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_points: usize,
    pub n_anchors: usize,
    pub layout: Layout,
    /// Ring radius, or half the line length (m).
    pub radius: f64,
    /// Anchor and query heights are drawn uniformly from `±height_jitter` (m).
    pub height_jitter: f64,
    /// Probability that an anchor observes a given point. The query sees all.
    pub visibility: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 100,
            n_anchors: 20,
            layout: Layout::Ring,
            radius: 5.0,
            height_jitter: 0.5,
            visibility: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub points: Vec<Vec3>,
    pub anchor_ids: Vec<AnchorId>,
    pub anchor_poses: Vec<Pose>,
    pub query_pose: Pose,
    /// `visible[k][j]`: anchor `k` observes point `j`.
    pub visible: Vec<Vec<bool>>,
    pub rng_seed: u64,
}

/// Standard deviations of the three noise sources.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Relative rotation, degrees of axis-angle per axis.
    pub sigma_rot: f64,
    /// Relative translation direction, degrees of axis-angle per axis.
    pub sigma_dir: f64,
    /// Image features, normalized coordinates.
    pub sigma_feat: f64,
}

impl NoiseSpec {
    pub fn new(sigma_rot: f64, sigma_dir: f64, sigma_feat: f64) -> Result<Self> {
        let s = NoiseSpec {
            sigma_rot,
            sigma_dir,
            sigma_feat,
        };
        s.validate()?;
        Ok(s)
    }

    /// Equal rotation and direction noise, no feature noise.
    pub fn pose(sigma_deg: f64) -> Result<Self> {
        NoiseSpec::new(sigma_deg, sigma_deg, 0.0)
    }

    pub fn features(sigma_feat: f64) -> Result<Self> {
        NoiseSpec::new(0.0, 0.0, sigma_feat)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_rot", self.sigma_rot),
            ("sigma_dir", self.sigma_dir),
            ("sigma_feat", self.sigma_feat),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `exp([ω]×)` with `ω ~ N(0, σ²I)`, σ in degrees.
fn random_small_rotation<R: Rng + ?Sized>(sigma_deg: f64, rng: &mut R) -> Rotation {
    let s = sigma_deg.to_radians();
    Rotation::from_scaled_axis(Vec3::new(s * gauss(rng), s * gauss(rng), s * gauss(rng)))
}

/// Deterministic per-trial generator; `tag` keeps independent draws apart.
pub fn trial_rng(seed: u64, tag: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 32) ^ trial);
    rng
}

impl SyntheticScene {
    pub fn centroid(&self) -> Vec3 {
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }

    pub fn anchor_pose_map(&self) -> crate::refine::AnchorPoses {
        self.anchor_ids.iter().cloned().zip(self.anchor_poses.iter().copied()).collect()
    }

    /// Noise-free `(R_qk, T̂_qk)` for anchor `k`.
    pub fn exact_relative(&self, k: usize) -> Result<RelativePoseEstimate> {
        RelativePoseEstimate::between(&self.query_pose, &self.anchor_poses[k])
    }

    /// Anchor indices sorted by distance from the query center.
    pub fn nearest_anchors(&self) -> Vec<usize> {
        let c = self.query_pose.center();
        let mut idx: Vec<usize> = (0..self.anchor_poses.len()).collect();
        idx.sort_by(|&a, &b| {
            let da = (self.anchor_poses[a].center() - c).norm();
            let db = (self.anchor_poses[b].center() - c).norm();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        idx
    }

    /// Observations built from ground-truth relative poses perturbed by `noise`.
    ///
    /// Noise is applied to the anchor-side pose `(R_kq, T̂_kq)`, so rotation
    /// and direction errors stay independent in the form each averaging
    /// stage reads.
    pub fn observations<R: Rng + ?Sized>(&self, noise: &NoiseSpec, rng: &mut R) -> Result<Vec<AnchorObservation>> {
        (0..self.anchor_poses.len())
            .map(|k| {
                let rel_kq = RelativePoseEstimate::between(&self.anchor_poses[k], &self.query_pose)?;
                perturbed_observation(self.anchor_ids[k].clone(), self.anchor_poses[k], &rel_kq, noise, rng)
            })
            .collect()
    }

    /// Projects every point into the query and the listed anchors, adds
    /// feature noise, and returns per-anchor matches keyed by point index.
    pub fn anchor_matches<R: Rng + ?Sized>(
        &self,
        anchors: &[usize],
        sigma_feat: f64,
        rng: &mut R,
    ) -> Result<Vec<AnchorMatches>> {
        let noisy = |pose: &Pose, x: &Vec3, rng: &mut R| -> Result<NormalizedFeature> {
            let f = project(pose, x)?;
            if sigma_feat == 0.0 {
                return Ok(f);
            }
            NormalizedFeature::new(f.x() + sigma_feat * gauss(rng), f.y() + sigma_feat * gauss(rng))
        };
        let query: Vec<NormalizedFeature> = self
            .points
            .iter()
            .map(|x| noisy(&self.query_pose, x, rng))
            .collect::<Result<_>>()?;
        anchors
            .iter()
            .map(|&k| {
                let matches = self
                    .points
                    .iter()
                    .zip(&query)
                    .enumerate()
                    .filter(|(j, _)| self.visible[k][*j])
                    .map(|(j, (x, q))| {
                        Ok(KeypointMatch {
                            query_kp: j as u64,
                            query: *q,
                            anchor: noisy(&self.anchor_poses[k], x, rng)?,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(AnchorMatches {
                    anchor_id: self.anchor_ids[k].clone(),
                    anchor_pose: self.anchor_poses[k],
                    matches,
                })
            })
            .collect()
    }
}

fn perturbed_observation<R: Rng + ?Sized>(
    id: AnchorId,
    pose: Pose,
    rel_kq: &RelativePoseEstimate,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<AnchorObservation> {
    let noisy = perturb_relative_pose(rel_kq, noise, rng);
    AnchorObservation::from_reverse_direction(id, pose, noisy.rotation().transpose(), noisy.direction())
}

/// Builds a scene of `n_points` in a ball around the origin, anchors on a
/// ring or line looking at the point centroid, and one query camera.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<SyntheticScene> {
    if cfg.n_points < 8 || cfg.n_anchors < 2 {
        return Err(Error::Config(format!(
            "need at least 8 points and 2 anchors, got {} and {}",
            cfg.n_points, cfg.n_anchors
        )));
    }
    if !(cfg.radius > 0.0) || !(cfg.height_jitter >= 0.0) {
        return Err(Error::Config("radius must be positive and height_jitter non-negative".into()));
    }
    if !(cfg.visibility > 0.0 && cfg.visibility <= 1.0) {
        return Err(Error::Config(format!("visibility must lie in (0, 1], got {}", cfg.visibility)));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = trial_rng(seed, 0, attempt);
        if let Some(scene) = try_scene(cfg, seed, &mut rng) {
            return Ok(scene);
        }
    }
    Err(Error::Config(format!(
        "no valid scene after {MAX_ATTEMPTS} attempts for this layout"
    )))
}

/// Smallest query-to-anchor distance, as a fraction of the radius.
const MIN_QUERY_BASELINE: f64 = 0.05;

fn sample_query_center(cfg: &SceneConfig, centroid: &Vec3, rng: &mut ChaCha8Rng) -> Vec3 {
    let r = cfg.radius;
    let h = if cfg.height_jitter > 0.0 {
        rng.random_range(-cfg.height_jitter..=cfg.height_jitter)
    } else {
        0.0
    };
    match cfg.layout {
        Layout::Ring => {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let rq = r * rng.random_range(0.8..1.2);
            centroid + Vec3::new(rq * a.cos(), rq * a.sin(), h)
        }
        Layout::Line => centroid + Vec3::new(rng.random_range(-r..r), -r * rng.random_range(0.6..0.7), h),
    }
}

fn sees_all(pose: &Pose, points: &[Vec3], radius: f64) -> bool {
    points.iter().all(|x| {
        let pc = pose.transform_point(x);
        pc.z > 0.05 * radius && (pc.x / pc.z).abs() < FEATURE_BOUND && (pc.y / pc.z).abs() < FEATURE_BOUND
    })
}

/// Additional query poses for an existing scene, drawn by the same rule as
/// the scene's own query.
pub fn sample_queries(scene: &SyntheticScene, cfg: &SceneConfig, n: usize, seed: u64) -> Result<Vec<Pose>> {
    let centroid = scene.centroid();
    let r = cfg.radius;
    (0..n as u64)
        .map(|i| {
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = trial_rng(seed, 1 + attempt, i);
                let c = sample_query_center(cfg, &centroid, &mut rng);
                let target = centroid + Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05) * r);
                let Ok(pose) = Pose::look_at(c, target, Vec3::z()) else {
                    continue;
                };
                let clear = scene
                    .anchor_poses
                    .iter()
                    .all(|a| (a.center() - c).norm() >= MIN_QUERY_BASELINE * r);
                if clear && sees_all(&pose, &scene.points, r) {
                    return Ok(pose);
                }
            }
            Err(Error::Config(format!("no valid query pose after {MAX_ATTEMPTS} attempts")))
        })
        .collect()
}

fn try_scene(cfg: &SceneConfig, seed: u64, rng: &mut ChaCha8Rng) -> Option<SyntheticScene> {
    let r = cfg.radius;
    let ball = 0.4 * r;
    let mut points = Vec::with_capacity(cfg.n_points);
    while points.len() < cfg.n_points {
        let p = Vec3::from_fn(|_, _| rng.random_range(-ball..ball));
        if p.norm() <= ball {
            points.push(p);
        }
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let jitter = |rng: &mut ChaCha8Rng| {
        if cfg.height_jitter > 0.0 {
            rng.random_range(-cfg.height_jitter..=cfg.height_jitter)
        } else {
            0.0
        }
    };
    let target = |rng: &mut ChaCha8Rng| centroid + Vec3::from_fn(|_, _| rng.random_range(-0.05..0.05) * r);

    let mut centers = Vec::with_capacity(cfg.n_anchors);
    match cfg.layout {
        Layout::Ring => {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            for i in 0..cfg.n_anchors {
                let a = phase + std::f64::consts::TAU * i as f64 / cfg.n_anchors as f64;
                centers.push(centroid + Vec3::new(r * a.cos(), r * a.sin(), jitter(rng)));
            }
        }
        Layout::Line => {
            for i in 0..cfg.n_anchors {
                let x = -r + 2.0 * r * i as f64 / (cfg.n_anchors - 1) as f64;
                centers.push(centroid + Vec3::new(x, -r, jitter(rng)));
            }
        }
    }
    let query_center = sample_query_center(cfg, &centroid, rng);

    let anchor_poses: Vec<Pose> = centers
        .iter()
        .map(|c| Pose::look_at(*c, target(rng), Vec3::z()).ok())
        .collect::<Option<_>>()?;
    let query_pose = Pose::look_at(query_center, target(rng), Vec3::z()).ok()?;

    if !sees_all(&query_pose, &points, r) || !anchor_poses.iter().all(|p| sees_all(p, &points, r)) {
        return None;
    }
    if centers.iter().any(|c| (c - query_center).norm() < MIN_QUERY_BASELINE * r) {
        return None;
    }
    let visible: Vec<Vec<bool>> = if cfg.visibility < 1.0 {
        (0..cfg.n_anchors)
            .map(|_| (0..cfg.n_points).map(|_| rng.random_bool(cfg.visibility)).collect())
            .collect()
    } else {
        vec![vec![true; cfg.n_points]; cfg.n_anchors]
    };
    for a in 0..cfg.n_anchors {
        if visible[a].iter().filter(|&&v| v).count() < 8 {
            return None;
        }
        for b in a + 1..cfg.n_anchors {
            if visible[a].iter().zip(&visible[b]).filter(|(x, y)| **x && **y).count() < 8 {
                return None;
            }
        }
    }
    let anchor_ids = (0..cfg.n_anchors).map(|i| AnchorId(format!("a{i:03}"))).collect();
    Some(SyntheticScene {
        points,
        anchor_ids,
        anchor_poses,
        query_pose,
        visible,
        rng_seed: seed,
    })
}

/// Left-multiplies the rotation by a random `exp([ω]×)` and rotates the
/// direction by an independent draw of the same kind.
pub fn perturb_relative_pose<R: Rng + ?Sized>(
    rel: &RelativePoseEstimate,
    spec: &NoiseSpec,
    rng: &mut R,
) -> RelativePoseEstimate {
    let rotation = if spec.sigma_rot > 0.0 {
        random_small_rotation(spec.sigma_rot, rng) * *rel.rotation()
    } else {
        *rel.rotation()
    };
    let direction = if spec.sigma_dir > 0.0 {
        (random_small_rotation(spec.sigma_dir, rng) * rel.direction()).normalize()
    } else {
        rel.direction()
    };
    RelativePoseEstimate::new(rotation, direction).expect("rotated unit direction is nonzero")
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(Error::Config(format!("need at least {min} trials, got {trials}")));
    }
    Ok(())
}

fn check_skips(skipped: usize, trials: usize, what: &str) -> Result<()> {
    if skipped * 10 > trials {
        return Err(Error::Config(format!(
            "{what}: {skipped} of {trials} trials were degenerate"
        )));
    }
    Ok(())
}

fn position_error(est: &Pose, truth: &Pose) -> f64 {
    (est.center() - truth.center()).norm()
}

fn rotation_error(est: &Pose, truth: &Pose) -> f64 {
    geodesic_angle(&est.rotation, &truth.rotation)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Govindu rotation and translation averaging.
    Govindu,
    /// Center averaging with Markley rotation averaging.
    Decoupled,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Govindu => "govindu",
            Method::Decoupled => "decoupled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyRow {
    pub noise: NoiseSpec,
    pub method: Method,
    pub median_position_m: f64,
    pub median_rotation_deg: f64,
    pub trials_used: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub scene: SceneConfig,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<NoiseStudyRow>,
}

impl NoiseStudy {
    pub fn row(&self, noise_index: usize, method: Method) -> &NoiseStudyRow {
        &self.rows[2 * noise_index + usize::from(method == Method::Decoupled)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma_rot_deg,sigma_dir_deg,method,median_position_m,median_rotation_deg,trials_used,skipped\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.noise.sigma_rot,
                r.noise.sigma_dir,
                r.method.name(),
                r.median_position_m,
                r.median_rotation_deg,
                r.trials_used,
                r.skipped
            );
        }
        s
    }
}

/// Govindu versus decoupled averaging on perturbed ground-truth relative poses.
/// Every noise level reuses the same scenes, so rows differ only in noise.
pub fn run_noise_study(cfg: &SceneConfig, grid: &[NoiseSpec], trials: usize, seed: u64) -> Result<NoiseStudy> {
    check_trials(trials, 100)?;
    let scenes = trial_scenes(cfg, trials, seed)?;
    let opts = TranslationAveragingOptions::default();
    let mut rows = Vec::with_capacity(2 * grid.len());
    for (level, spec) in grid.iter().enumerate() {
        spec.validate()?;
        let mut errs = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
        let mut skipped = 0;
        for (trial, scene) in scenes.iter().enumerate() {
            let mut rng = trial_rng(seed, 1 + level as u64, trial as u64);
            let truth = &scene.query_pose;
            let outcome = scene
                .observations(spec, &mut rng)
                .and_then(|obs| Ok((govindu_pose(&obs, &opts)?, decoupled_pose(&obs)?)));
            match outcome {
                Ok((g, d)) => {
                    for (slot, pose) in errs.iter_mut().zip([g, d]) {
                        slot.0.push(position_error(&pose, truth));
                        slot.1.push(rotation_error(&pose, truth));
                    }
                }
                Err(_) => skipped += 1,
            }
        }
        check_skips(skipped, trials, "noise study")?;
        for (method, (mut pos, mut rot)) in [Method::Govindu, Method::Decoupled].into_iter().zip(errs) {
            rows.push(NoiseStudyRow {
                noise: *spec,
                method,
                median_position_m: median(&mut pos),
                median_rotation_deg: median(&mut rot),
                trials_used: trials - skipped,
                skipped,
            });
        }
    }
    Ok(NoiseStudy {
        scene: *cfg,
        trials,
        seed,
        rows,
    })
}

fn trial_scenes(cfg: &SceneConfig, trials: usize, seed: u64) -> Result<Vec<SyntheticScene>> {
    (0..trials)
        .map(|t| generate_scene(cfg, trial_rng(seed, 0, t as u64).random()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPair {
    pub trial: usize,
    pub translation_averaging_m: f64,
    pub center_averaging_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub scene: SceneConfig,
    pub noise: NoiseSpec,
    pub trials: usize,
    pub seed: u64,
    pub skipped: usize,
    pub pairs: Vec<AblationPair>,
    pub median_translation_averaging_m: f64,
    pub median_center_averaging_m: f64,
    pub center_wins: usize,
    pub center_losses: usize,
    pub ties: usize,
    /// One-sided sign test p-value for "center averaging is more accurate".
    pub sign_test_p: f64,
}

impl Ablation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trial,translation_averaging_m,center_averaging_m\n");
        for p in &self.pairs {
            let _ = writeln!(s, "{},{},{}", p.trial, p.translation_averaging_m, p.center_averaging_m);
        }
        s
    }
}

/// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = (wins + losses) as u64;
    if wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("p = 0.5 is a valid probability");
    b.sf(wins as u64 - 1)
}

/// Same observations and Markley rotation in both arms; only the center
/// stage differs.
pub fn run_averaging_ablation(cfg: &SceneConfig, noise: &NoiseSpec, trials: usize, seed: u64) -> Result<Ablation> {
    check_trials(trials, 100)?;
    noise.validate()?;
    let scenes = trial_scenes(cfg, trials, seed)?;
    let opts = TranslationAveragingOptions::default();
    let mut pairs = Vec::with_capacity(trials);
    let mut skipped = 0;
    for (trial, scene) in scenes.iter().enumerate() {
        let mut rng = trial_rng(seed, 1, trial as u64);
        let outcome = scene.observations(noise, &mut rng).and_then(|obs| {
            let estimates: Vec<Rotation> = obs.iter().map(|o| o.rotation_estimate()).collect();
            let rotation = markley_rotation_average(&estimates)?;
            let t = govindu_translation_average(&obs, &opts)?;
            let via_translation = Pose::new(rotation, t).center();
            let rays: Vec<Ray> = obs.iter().map(locus_ray).collect();
            let via_center = center_average(&rays)?.center;
            Ok((via_translation, via_center))
        });
        match outcome {
            Ok((a, b)) => {
                let c = scene.query_pose.center();
                pairs.push(AblationPair {
                    trial,
                    translation_averaging_m: (a - c).norm(),
                    center_averaging_m: (b - c).norm(),
                });
            }
            Err(_) => skipped += 1,
        }
    }
    check_skips(skipped, trials, "averaging ablation")?;
    let mut ta: Vec<f64> = pairs.iter().map(|p| p.translation_averaging_m).collect();
    let mut ca: Vec<f64> = pairs.iter().map(|p| p.center_averaging_m).collect();
    let wins = pairs.iter().filter(|p| p.center_averaging_m < p.translation_averaging_m).count();
    let losses = pairs.iter().filter(|p| p.center_averaging_m > p.translation_averaging_m).count();
    Ok(Ablation {
        scene: *cfg,
        noise: *noise,
        trials,
        seed,
        skipped,
        median_translation_averaging_m: median(&mut ta),
        median_center_averaging_m: median(&mut ca),
        center_wins: wins,
        center_losses: losses,
        ties: pairs.len() - wins - losses,
        sign_test_p: sign_test(wins, losses),
        pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSweepRow {
    pub k: usize,
    pub median_stage1_position_m: f64,
    pub median_stage1_rotation_deg: f64,
    pub median_position_m: f64,
    pub median_rotation_deg: f64,
    /// Fraction of all trials that ended with a refined pose.
    pub refined_fraction: f64,
    /// Trials where localization failed; they enter the medians as +∞.
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub scene: SceneConfig,
    pub noise: NoiseSpec,
    pub pipeline: LocalizeConfig,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<KSweepRow>,
}

impl KSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "k,median_stage1_position_m,median_stage1_rotation_deg,median_position_m,median_rotation_deg,refined_fraction,failed\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.k,
                r.median_stage1_position_m,
                r.median_stage1_rotation_deg,
                r.median_position_m,
                r.median_rotation_deg,
                r.refined_fraction,
                r.failed
            );
        }
        s
    }
}

/// Pipeline settings used by the simulated studies. Feature noise is
/// Gaussian with no planted mismatches, so the epipolar threshold is set
/// a few σ above the default noise level.
pub fn simulation_pipeline() -> LocalizeConfig {
    LocalizeConfig {
        epipolar_threshold: 5e-3,
        ..LocalizeConfig::default()
    }
}

/// One simulated query through the full pipeline, using the `k` anchors
/// nearest to the query.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedQuery {
    pub matches: Vec<AnchorMatches>,
    pub estimated: Vec<EstimatedAnchor>,
}

impl SimulatedQuery {
    /// Synthesizes noisy matches for the `k` nearest anchors and estimates
    /// their relative poses. Relative-pose noise in `noise`, if any, is
    /// applied on top of the estimates.
    pub fn new<R: Rng + ?Sized>(
        scene: &SyntheticScene,
        k: usize,
        noise: &NoiseSpec,
        pipeline: &LocalizeConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let nearest: Vec<usize> = scene.nearest_anchors().into_iter().take(k).collect();
        let matches = scene.anchor_matches(&nearest, noise.sigma_feat, rng)?;
        let mut estimated = estimate_anchors(&matches, &pipeline.ransac(), rng);
        if noise.sigma_rot > 0.0 || noise.sigma_dir > 0.0 {
            for e in &mut estimated {
                let o = &e.observation;
                let rel_kq = RelativePoseEstimate::new(o.rel().rotation().transpose(), o.direction_kq())?;
                e.observation = perturbed_observation(o.anchor_id.clone(), o.anchor_pose, &rel_kq, noise, rng)?;
            }
        }
        Ok(SimulatedQuery { matches, estimated })
    }

    /// Localizes using only the first `k` (nearest) anchors.
    pub fn localize(&self, k: usize, pipeline: &LocalizeConfig, seed: u64) -> Result<Localization> {
        let subset: Vec<EstimatedAnchor> = self.estimated.iter().filter(|e| e.index < k).cloned().collect();
        localize_estimated(&self.matches, &subset, pipeline, seed)
    }
}

pub fn run_k_sweep(cfg: &SceneConfig, ks: &[usize], noise: &NoiseSpec, trials: usize, seed: u64) -> Result<KSweep> {
    run_k_sweep_with(cfg, ks, noise, trials, seed, &simulation_pipeline())
}

/// Full-pipeline error as a function of the number of anchors. Relative
/// poses are estimated once per trial and shared by every `K`. A trial that
/// fails to localize counts as an infinite error rather than being dropped.
pub fn run_k_sweep_with(
    cfg: &SceneConfig,
    ks: &[usize],
    noise: &NoiseSpec,
    trials: usize,
    seed: u64,
    pipeline: &LocalizeConfig,
) -> Result<KSweep> {
    noise.validate()?;
    let max_k = ks.iter().copied().max().unwrap_or(0);
    if max_k > cfg.n_anchors || ks.iter().any(|&k| k < 2) {
        return Err(Error::Config(format!(
            "every K must lie in [2, {}], got {ks:?}",
            cfg.n_anchors
        )));
    }
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let mut acc: Vec<[Vec<f64>; 4]> = vec![Default::default(); ks.len()];
    let mut refined = vec![0usize; ks.len()];
    let mut failed = vec![0usize; ks.len()];
    for trial in 0..trials as u64 {
        let scene = generate_scene(cfg, trial_rng(seed, 0, trial).random())?;
        let mut rng = trial_rng(seed, 1, trial);
        let query = SimulatedQuery::new(&scene, max_k, noise, pipeline, &mut rng)?;
        for (slot, &k) in ks.iter().enumerate() {
            match query.localize(k, pipeline, seed ^ trial) {
                Ok(loc) => {
                    let truth = &scene.query_pose;
                    let best = loc.best_pose();
                    acc[slot][0].push(position_error(&loc.stage1_pose, truth));
                    acc[slot][1].push(rotation_error(&loc.stage1_pose, truth));
                    acc[slot][2].push(position_error(&best, truth));
                    acc[slot][3].push(rotation_error(&best, truth));
                    refined[slot] += usize::from(loc.refinement.is_ok());
                }
                Err(_) => {
                    failed[slot] += 1;
                    for v in &mut acc[slot] {
                        v.push(f64::INFINITY);
                    }
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(ks.len());
    for (slot, &k) in ks.iter().enumerate() {
        let [a, b, c, d] = &mut acc[slot];
        rows.push(KSweepRow {
            k,
            median_stage1_position_m: median(a),
            median_stage1_rotation_deg: median(b),
            median_position_m: median(c),
            median_rotation_deg: median(d),
            refined_fraction: refined[slot] as f64 / trials as f64,
            failed: failed[slot],
        });
    }
    Ok(KSweep {
        scene: *cfg,
        noise: *noise,
        pipeline: *pipeline,
        trials,
        seed,
        rows,
    })
}
