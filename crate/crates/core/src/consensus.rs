//! Outlier-anchor rejection by RANSAC over anchor pairs, followed by the
//! decoupled center/rotation solve on the surviving anchors.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::averaging::{center_average, locus_ray, markley_rotation_average, AnchorId, AnchorObservation, Ray};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle, Pose, Rotation, Vec3};

/// Minimum angle between two locus rays for a pair hypothesis, radians.
pub const MIN_PAIR_ANGLE: f64 = 1e-6;

/// Largest anchor count for which [`PairMode::Auto`] enumerates every pair.
pub const EXHAUSTIVE_LIMIT: usize = 150;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    /// All `K(K−1)/2` pairs.
    Exhaustive,
    /// A seeded random sample of pairs.
    Sampled,
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] anchors, sampled beyond.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsensusConfig {
    pub theta_ray_deg: f64,
    pub theta_rot_deg: f64,
    pub mode: PairMode,
    /// Number of pairs drawn in sampled mode.
    pub sampled_pairs: usize,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            theta_ray_deg: 5.0,
            theta_rot_deg: 10.0,
            mode: PairMode::Auto,
            sampled_pairs: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorConsensus {
    /// Inlier anchors in observation order.
    pub inlier_ids: Vec<AnchorId>,
    pub inlier_indices: Vec<usize>,
    pub hypothesis_pose: Pose,
    /// Observation indices of the winning pair.
    pub hypothesis_pair: (usize, usize),
    pub inlier_count: usize,
}

/// Approximate query pose from two anchors: midpoint of the two locus rays'
/// common perpendicular and the rotation mean of the two per-anchor estimates.
pub fn pair_hypothesis(a: &AnchorObservation, b: &AnchorObservation) -> Result<Pose> {
    let ra = locus_ray(a);
    let rb = locus_ray(b);
    let center = ra.midpoint_with(&rb, MIN_PAIR_ANGLE).map_err(|_| {
        Error::DegenerateGeometry(format!(
            "locus rays of {} and {} are parallel",
            a.anchor_id, b.anchor_id
        ))
    })?;
    let rotation = markley_rotation_average(&[a.rotation_estimate(), b.rotation_estimate()])?;
    Ok(Pose::from_center(rotation, center))
}

/// Whether an anchor agrees with a hypothesis under both angular tests.
pub fn is_consistent(hypothesis: &Pose, obs: &AnchorObservation, cfg: &ConsensusConfig) -> bool {
    let ray = locus_ray(obs);
    consistent_with(hypothesis, &ray, &obs.rotation_estimate(), cfg)
}

fn consistent_with(hypothesis: &Pose, ray: &Ray, rotation: &Rotation, cfg: &ConsensusConfig) -> bool {
    let Some(angle) = ray.angle_to(&hypothesis.center()) else {
        return false;
    };
    angle <= cfg.theta_ray_deg && geodesic_angle(&hypothesis.rotation, rotation) <= cfg.theta_rot_deg
}

/// RANSAC over anchor pairs. The hypothesis with the most consistent anchors
/// wins; ties go to the lexicographically smaller pair. A hypothesis only
/// counts if both of its own anchors pass the tests.
pub fn anchor_ransac(obs: &[AnchorObservation], cfg: &ConsensusConfig) -> Result<AnchorConsensus> {
    let k = obs.len();
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "anchor consensus needs at least 2 observations, got {k}"
        )));
    }
    let mut seen = HashSet::new();
    for o in obs {
        if !seen.insert(&o.anchor_id) {
            return Err(Error::Domain(format!("duplicate anchor id {}", o.anchor_id)));
        }
    }

    let rays: Vec<Ray> = obs.iter().map(locus_ray).collect();
    let rotations: Vec<Rotation> = obs.iter().map(|o| o.rotation_estimate()).collect();

    let exhaustive = match cfg.mode {
        PairMode::Exhaustive => true,
        PairMode::Sampled => false,
        PairMode::Auto => k <= EXHAUSTIVE_LIMIT,
    };
    let pairs: Vec<(usize, usize)> = if exhaustive {
        (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.sampled_pairs)
            .map(|_| {
                let i = rng.random_range(0..k);
                let mut j = rng.random_range(0..k - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect()
    };

    let mut best: Option<(usize, (usize, usize), Pose, Vec<usize>)> = None;
    for &(i, j) in &pairs {
        let Ok(h) = pair_hypothesis(&obs[i], &obs[j]) else {
            continue;
        };
        let members: Vec<usize> = (0..k)
            .filter(|&m| consistent_with(&h, &rays[m], &rotations[m], cfg))
            .collect();
        if !(members.contains(&i) && members.contains(&j)) {
            continue;
        }
        let better = match &best {
            None => true,
            Some((count, pair, _, _)) => {
                members.len() > *count || (members.len() == *count && (i, j) < *pair)
            }
        };
        if better {
            best = Some((members.len(), (i, j), h, members));
        }
    }

    match best {
        Some((count, pair, pose, members)) if count >= 2 => Ok(AnchorConsensus {
            inlier_ids: members.iter().map(|&m| obs[m].anchor_id.clone()).collect(),
            inlier_indices: members,
            hypothesis_pose: pose,
            hypothesis_pair: pair,
            inlier_count: count,
        }),
        _ => Err(Error::NoConsensus("no anchor pair produced a self-consistent hypothesis".into())),
    }
}

/// Query pose from the closed-form center of the locus rays and the
/// Frobenius-optimal mean of the per-anchor rotation estimates.
///
/// The center reads only anchor poses and `T̂_kq`; the rotation reads only
/// `R_k` and `R_qk`.
pub fn decoupled_pose(inliers: &[AnchorObservation]) -> Result<Pose> {
    if inliers.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "decoupled pose needs at least 2 anchors, got {}",
            inliers.len()
        )));
    }
    Ok(Pose::from_center(decoupled_rotation(inliers)?, decoupled_center(inliers)?))
}

/// Center half of [`decoupled_pose`].
pub fn decoupled_center(inliers: &[AnchorObservation]) -> Result<Vec3> {
    let rays: Vec<Ray> = inliers.iter().map(locus_ray).collect();
    Ok(center_average(&rays)?.center)
}

/// Rotation half of [`decoupled_pose`].
pub fn decoupled_rotation(inliers: &[AnchorObservation]) -> Result<Rotation> {
    let estimates: Vec<Rotation> = inliers.iter().map(|o| o.rotation_estimate()).collect();
    markley_rotation_average(&estimates)
}

/// Consensus followed by the decoupled solve on the inlier anchors.
pub fn localize_decoupled(
    obs: &[AnchorObservation],
    cfg: &ConsensusConfig,
) -> Result<(AnchorConsensus, Pose)> {
    let consensus = anchor_ransac(obs, cfg)?;
    let inliers: Vec<AnchorObservation> = consensus
        .inlier_indices
        .iter()
        .map(|&i| obs[i].clone())
        .collect();
    let pose = decoupled_pose(&inliers)?;
    Ok((consensus, pose))
}
