//! Single-query localization from per-anchor feature matches.
//!
//! Each anchor's matches give a relative pose; consensus over anchors and the
//! decoupled solve give the stage-1 pose; tracks linked by query keypoint id
//! feed the latent-point refinement.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::averaging::{AnchorId, AnchorObservation};
use crate::consensus::{anchor_ransac, decoupled_pose, ConsensusConfig, PairMode};
use crate::error::{Error, Result};
use crate::geometry::{NormalizedFeature, Pose};
use crate::refine::{refine_pose, AnchorPoses, CorrespondenceTrack, RefineConfig, RefinementResult};
use crate::relative::{estimate_relative_pose, Correspondence2D2D, RansacConfig};

/// Fewest matches an anchor needs before its relative pose is attempted.
pub const MIN_MATCHES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub top_k: usize,
    pub epipolar_threshold: f64,
    pub ransac_confidence: f64,
    pub ransac_max_iterations: usize,
    pub theta_ray_deg: f64,
    pub theta_rot_deg: f64,
    pub sampled_pairs: usize,
    pub tau_reproj: f64,
    pub huber: Option<f64>,
    pub refine: bool,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        let ransac = RansacConfig::default();
        let consensus = ConsensusConfig::default();
        let refine = RefineConfig::default();
        LocalizeConfig {
            top_k: 150,
            epipolar_threshold: ransac.epipolar_threshold,
            ransac_confidence: ransac.confidence,
            ransac_max_iterations: ransac.max_iterations,
            theta_ray_deg: consensus.theta_ray_deg,
            theta_rot_deg: consensus.theta_rot_deg,
            sampled_pairs: consensus.sampled_pairs,
            tau_reproj: refine.tau_reproj,
            huber: refine.huber,
            refine: true,
        }
    }
}

impl LocalizeConfig {
    pub fn ransac(&self) -> RansacConfig {
        RansacConfig {
            epipolar_threshold: self.epipolar_threshold,
            confidence: self.ransac_confidence,
            max_iterations: self.ransac_max_iterations,
        }
    }

    pub fn consensus(&self, seed: u64) -> ConsensusConfig {
        ConsensusConfig {
            theta_ray_deg: self.theta_ray_deg,
            theta_rot_deg: self.theta_rot_deg,
            mode: PairMode::Auto,
            sampled_pairs: self.sampled_pairs,
            seed,
        }
    }

    pub fn refinement(&self) -> RefineConfig {
        RefineConfig {
            tau_reproj: self.tau_reproj,
            huber: self.huber,
            ..RefineConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointMatch {
    pub query_kp: u64,
    pub query: NormalizedFeature,
    pub anchor: NormalizedFeature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnchorMatches {
    pub anchor_id: AnchorId,
    pub anchor_pose: Pose,
    pub matches: Vec<KeypointMatch>,
}

/// An anchor whose relative pose was estimated, with its epipolar inliers.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedAnchor {
    pub index: usize,
    pub observation: AnchorObservation,
    pub inliers: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Localization {
    pub stage1_pose: Pose,
    pub inlier_anchor_ids: Vec<AnchorId>,
    pub tracks_built: usize,
    pub refinement: std::result::Result<RefinementResult, String>,
}

impl Localization {
    /// Refined pose when refinement succeeded, else the stage-1 pose.
    pub fn best_pose(&self) -> Pose {
        match &self.refinement {
            Ok(r) => r.pose,
            Err(_) => self.stage1_pose,
        }
    }

    pub fn refined_pose(&self) -> Option<Pose> {
        self.refinement.as_ref().ok().map(|r| r.pose)
    }
}

/// Estimates a relative pose for every anchor with enough matches. Anchors
/// whose estimation fails are dropped.
pub fn estimate_anchors<R: Rng + ?Sized>(
    anchors: &[AnchorMatches],
    ransac: &RansacConfig,
    rng: &mut R,
) -> Vec<EstimatedAnchor> {
    let mut out = Vec::new();
    for (index, a) in anchors.iter().enumerate() {
        if a.matches.len() < MIN_MATCHES {
            continue;
        }
        let pairs: Vec<Correspondence2D2D> = a
            .matches
            .iter()
            .map(|m| Correspondence2D2D::new(m.query, m.anchor))
            .collect();
        if let Ok(fit) = estimate_relative_pose(&pairs, ransac, rng) {
            out.push(EstimatedAnchor {
                index,
                observation: AnchorObservation::new(a.anchor_id.clone(), a.anchor_pose, fit.rel),
                inliers: fit.inliers,
            });
        }
    }
    out
}

/// Links epipolar-inlier matches from the given anchors into tracks keyed by
/// query keypoint id. Keypoints seen by fewer than two anchors are dropped.
pub fn build_tracks(anchors: &[AnchorMatches], estimated: &[&EstimatedAnchor]) -> Vec<CorrespondenceTrack> {
    let mut by_kp: BTreeMap<u64, (NormalizedFeature, Vec<(AnchorId, NormalizedFeature)>)> = BTreeMap::new();
    for est in estimated {
        let a = &anchors[est.index];
        let mut seen = std::collections::HashSet::new();
        for (m, &ok) in a.matches.iter().zip(&est.inliers) {
            if !ok || !seen.insert(m.query_kp) {
                continue;
            }
            by_kp
                .entry(m.query_kp)
                .or_insert_with(|| (m.query, Vec::new()))
                .1
                .push((a.anchor_id.clone(), m.anchor));
        }
    }
    by_kp
        .into_iter()
        .filter_map(|(kp, (q, obs))| CorrespondenceTrack::new(kp, q, obs).ok())
        .collect()
}

/// Consensus, decoupled pose and refinement over already estimated anchors.
pub fn localize_estimated(
    anchors: &[AnchorMatches],
    estimated: &[EstimatedAnchor],
    cfg: &LocalizeConfig,
    seed: u64,
) -> Result<Localization> {
    if estimated.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} anchors with a relative pose, need 2",
            estimated.len()
        )));
    }
    let obs: Vec<AnchorObservation> = estimated.iter().map(|e| e.observation.clone()).collect();
    let consensus = anchor_ransac(&obs, &cfg.consensus(seed))?;
    let inliers: Vec<AnchorObservation> = consensus.inlier_indices.iter().map(|&i| obs[i].clone()).collect();
    let stage1_pose = decoupled_pose(&inliers)?;

    let chosen: Vec<&EstimatedAnchor> = consensus.inlier_indices.iter().map(|&i| &estimated[i]).collect();
    let tracks = build_tracks(anchors, &chosen);
    let refinement = if cfg.refine {
        let poses: AnchorPoses = chosen
            .iter()
            .map(|e| (e.observation.anchor_id.clone(), e.observation.anchor_pose))
            .collect();
        refine_pose(&tracks, &poses, &stage1_pose, &cfg.refinement()).map_err(|e| e.to_string())
    } else {
        Err("refinement disabled".to_string())
    };
    Ok(Localization {
        stage1_pose,
        inlier_anchor_ids: consensus.inlier_ids,
        tracks_built: tracks.len(),
        refinement,
    })
}

/// Full localization of one query from its anchors' matches.
pub fn localize_matches<R: Rng + ?Sized>(
    anchors: &[AnchorMatches],
    cfg: &LocalizeConfig,
    seed: u64,
    rng: &mut R,
) -> Result<Localization> {
    if anchors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "query has {} neighbors, need 2",
            anchors.len()
        )));
    }
    let estimated = estimate_anchors(anchors, &cfg.ransac(), rng);
    localize_estimated(anchors, &estimated, cfg, seed)
}
