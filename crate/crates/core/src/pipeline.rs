//! File-driven localization runs, scoring, and synthetic dataset export.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::averaging::AnchorId;
use crate::dataset::{Dataset, Intrinsics, Neighbor, PixelMatch, PoseRecord};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle, project, Pose};
use crate::localize::{localize_matches, AnchorMatches, LocalizeConfig};
use crate::sim::SyntheticScene;

/// Joint (meters, degrees) accuracy buckets.
pub const ACCURACY_THRESHOLDS: [(f64, f64); 3] = [(0.25, 2.0), (0.5, 5.0), (5.0, 10.0)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub position_m: f64,
    pub rotation_deg: f64,
}

pub fn pose_error(estimate: &Pose, truth: &Pose) -> PoseError {
    PoseError {
        position_m: (estimate.center() - truth.center()).norm(),
        rotation_deg: geodesic_angle(&estimate.rotation, &truth.rotation),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub query_id: String,
    pub stage1_pose: Pose,
    /// Present only when refinement ran on at least three tracks.
    pub refined_pose: Option<Pose>,
    pub inlier_anchor_count: usize,
    pub tracks_used: usize,
    /// Why refinement was skipped, if it was.
    pub refinement_note: Option<String>,
    pub stage1_error: Option<PoseError>,
    pub refined_error: Option<PoseError>,
}

impl QueryResult {
    pub fn final_pose(&self) -> Pose {
        self.refined_pose.unwrap_or(self.stage1_pose)
    }
}

/// Per-query generator derived from the run seed and the query id, so a
/// query's result does not depend on which other queries are in the run.
pub fn query_rng(seed: u64, query_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query_id.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Localizes one query from its top-K neighbors.
pub fn localize_query(query_id: &str, dataset: &Dataset, cfg: &LocalizeConfig, seed: u64) -> Result<QueryResult> {
    let neighbors = dataset
        .neighbors
        .get(query_id)
        .ok_or_else(|| Error::Domain(format!("unknown query {query_id}")))?;
    let chosen = &neighbors[..neighbors.len().min(cfg.top_k)];
    if chosen.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "insufficient neighbors for {query_id}: {} of 2 needed",
            chosen.len()
        )));
    }
    let anchors: Vec<AnchorMatches> = chosen
        .iter()
        .map(|nb| {
            Ok(AnchorMatches {
                anchor_id: nb.anchor_id.clone(),
                anchor_pose: dataset.anchor_pose(&nb.anchor_id)?,
                matches: dataset.normalized_matches(query_id, &nb.anchor_id)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut rng = query_rng(seed, query_id);
    let consensus_seed: u64 = rng.random();
    let loc = localize_matches(&anchors, cfg, consensus_seed, &mut rng)?;
    let truth = dataset.ground_truth_pose(query_id);
    let refined_pose = loc.refined_pose();
    Ok(QueryResult {
        query_id: query_id.to_string(),
        stage1_pose: loc.stage1_pose,
        refined_pose,
        inlier_anchor_count: loc.inlier_anchor_ids.len(),
        tracks_used: loc.refinement.as_ref().map_or(0, |r| r.points_used),
        refinement_note: loc.refinement.as_ref().err().cloned(),
        stage1_error: truth.map(|t| pose_error(&loc.stage1_pose, &t)),
        refined_error: truth.zip(refined_pose).map(|(t, p)| pose_error(&p, &t)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBucket {
    pub max_position_m: f64,
    pub max_rotation_deg: f64,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub queries: usize,
    pub median_position_m: f64,
    pub median_rotation_deg: f64,
    pub accuracy: Vec<AccuracyBucket>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Medians and joint-threshold accuracies; a query counts toward a bucket
/// only when both its position and rotation errors are within the bucket.
pub fn score_errors(errors: &[PoseError]) -> Result<ScoreReport> {
    if errors.is_empty() {
        return Err(Error::InsufficientData("nothing to score".into()));
    }
    let n = errors.len() as f64;
    let accuracy = ACCURACY_THRESHOLDS
        .iter()
        .map(|&(m, deg)| AccuracyBucket {
            max_position_m: m,
            max_rotation_deg: deg,
            percent: 100.0
                * errors.iter().filter(|e| e.position_m <= m && e.rotation_deg <= deg).count() as f64
                / n,
        })
        .collect();
    Ok(ScoreReport {
        queries: errors.len(),
        median_position_m: median(errors.iter().map(|e| e.position_m).collect()),
        median_rotation_deg: median(errors.iter().map(|e| e.rotation_deg).collect()),
        accuracy,
    })
}

/// Scores each result's final pose against the ground truth.
pub fn score_run(results: &[QueryResult], ground_truth: &BTreeMap<String, Pose>) -> Result<ScoreReport> {
    let errors = results
        .iter()
        .map(|r| {
            let truth = ground_truth
                .get(&r.query_id)
                .ok_or_else(|| Error::Domain(format!("no ground truth for {}", r.query_id)))?;
            Ok(pose_error(&r.final_pose(), truth))
        })
        .collect::<Result<Vec<_>>>()?;
    score_errors(&errors)
}

/// One CSV line per localized query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub query_id: String,
    pub status: String,
    pub inlier_anchors: usize,
    pub tracks_used: usize,
    pub stage1_qw: f64,
    pub stage1_qx: f64,
    pub stage1_qy: f64,
    pub stage1_qz: f64,
    pub stage1_tx: f64,
    pub stage1_ty: f64,
    pub stage1_tz: f64,
    pub refined_qw: Option<f64>,
    pub refined_qx: Option<f64>,
    pub refined_qy: Option<f64>,
    pub refined_qz: Option<f64>,
    pub refined_tx: Option<f64>,
    pub refined_ty: Option<f64>,
    pub refined_tz: Option<f64>,
    pub stage1_position_error_m: Option<f64>,
    pub stage1_rotation_error_deg: Option<f64>,
    pub position_error_m: Option<f64>,
    pub rotation_error_deg: Option<f64>,
}

impl ResultRow {
    pub fn from_result(r: &QueryResult) -> Self {
        let s = PoseRecord::from_pose(&r.stage1_pose);
        let f = r.refined_pose.map(|p| PoseRecord::from_pose(&p));
        let q = |i: usize| f.map(|p| p.quaternion[i]);
        let t = |i: usize| f.map(|p| p.translation[i]);
        let final_error = r.refined_error.or(r.stage1_error);
        ResultRow {
            query_id: r.query_id.clone(),
            status: if r.refined_pose.is_some() { "refined" } else { "stage1" }.into(),
            inlier_anchors: r.inlier_anchor_count,
            tracks_used: r.tracks_used,
            stage1_qw: s.quaternion[0],
            stage1_qx: s.quaternion[1],
            stage1_qy: s.quaternion[2],
            stage1_qz: s.quaternion[3],
            stage1_tx: s.translation[0],
            stage1_ty: s.translation[1],
            stage1_tz: s.translation[2],
            refined_qw: q(0),
            refined_qx: q(1),
            refined_qy: q(2),
            refined_qz: q(3),
            refined_tx: t(0),
            refined_ty: t(1),
            refined_tz: t(2),
            stage1_position_error_m: r.stage1_error.map(|e| e.position_m),
            stage1_rotation_error_deg: r.stage1_error.map(|e| e.rotation_deg),
            position_error_m: final_error.map(|e| e.position_m),
            rotation_error_deg: final_error.map(|e| e.rotation_deg),
        }
    }

    pub fn to_result(&self) -> Result<QueryResult> {
        let stage1_pose = PoseRecord {
            quaternion: [self.stage1_qw, self.stage1_qx, self.stage1_qy, self.stage1_qz],
            translation: [self.stage1_tx, self.stage1_ty, self.stage1_tz],
        }
        .to_pose()?;
        let refined = [
            self.refined_qw,
            self.refined_qx,
            self.refined_qy,
            self.refined_qz,
            self.refined_tx,
            self.refined_ty,
            self.refined_tz,
        ];
        let refined_pose = match refined {
            [Some(w), Some(x), Some(y), Some(z), Some(tx), Some(ty), Some(tz)] => Some(
                PoseRecord {
                    quaternion: [w, x, y, z],
                    translation: [tx, ty, tz],
                }
                .to_pose()?,
            ),
            [None, None, None, None, None, None, None] => None,
            _ => return Err(Error::Domain(format!("{}: refined pose is partially filled", self.query_id))),
        };
        Ok(QueryResult {
            query_id: self.query_id.clone(),
            stage1_pose,
            refined_pose,
            inlier_anchor_count: self.inlier_anchors,
            tracks_used: self.tracks_used,
            refinement_note: None,
            stage1_error: None,
            refined_error: None,
        })
    }
}

pub fn results_to_csv(results: &[QueryResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(ResultRow::from_result(r)).map_err(|e| Error::Internal(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<QueryResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    r.deserialize::<ResultRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            row.to_result().map_err(|e| Error::parse(path, i + 2, e.to_string()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySummary {
    pub query_id: String,
    pub refined: bool,
    pub inlier_anchors: usize,
    pub tracks_used: usize,
    pub refinement_note: Option<String>,
    pub stage1_error: Option<PoseError>,
    pub refined_error: Option<PoseError>,
}

/// Aggregate report of one localization run. Contains no paths or times,
/// so identical inputs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: LocalizeConfig,
    pub seed: u64,
    pub queries: usize,
    pub localized: usize,
    pub refined: usize,
    pub score: Option<ScoreReport>,
    pub stage1_score: Option<ScoreReport>,
    pub per_query: Vec<QuerySummary>,
    pub failures: Vec<QueryFailure>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub results: Vec<QueryResult>,
    pub report: RunReport,
}

/// Localizes every query in the dataset, in id order.
pub fn run_localization(dataset: &Dataset, cfg: &LocalizeConfig, seed: u64) -> RunOutput {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for q in dataset.query_ids() {
        match localize_query(&q, dataset, cfg, seed) {
            Ok(r) => results.push(r),
            Err(e) => failures.push(QueryFailure {
                query_id: q,
                error: e.to_string(),
            }),
        }
    }
    let with_truth: Vec<&QueryResult> = results.iter().filter(|r| r.stage1_error.is_some()).collect();
    let score = if with_truth.is_empty() {
        None
    } else {
        let final_errors: Vec<PoseError> = with_truth
            .iter()
            .map(|r| r.refined_error.or(r.stage1_error).expect("filtered on ground truth"))
            .collect();
        score_errors(&final_errors).ok()
    };
    let stage1_score = if with_truth.is_empty() {
        None
    } else {
        score_errors(&with_truth.iter().filter_map(|r| r.stage1_error).collect::<Vec<_>>()).ok()
    };
    let report = RunReport {
        config: *cfg,
        seed,
        queries: results.len() + failures.len(),
        localized: results.len(),
        refined: results.iter().filter(|r| r.refined_pose.is_some()).count(),
        score,
        stage1_score,
        per_query: results
            .iter()
            .map(|r| QuerySummary {
                query_id: r.query_id.clone(),
                refined: r.refined_pose.is_some(),
                inlier_anchors: r.inlier_anchor_count,
                tracks_used: r.tracks_used,
                refinement_note: r.refinement_note.clone(),
                stage1_error: r.stage1_error,
                refined_error: r.refined_error,
            })
            .collect(),
        failures,
    };
    RunOutput { results, report }
}

/// Camera model used for exported synthetic datasets.
pub const SYNTHETIC_INTRINSICS: Intrinsics = Intrinsics {
    fx: 800.0,
    fy: 800.0,
    cx: 320.0,
    cy: 240.0,
};

/// Turns a synthetic scene into an on-disk style dataset. Each query lists
/// every anchor as a neighbor, nearest first; keypoint ids are point indices.
pub fn synthetic_dataset(
    scene: &SyntheticScene,
    queries: &[(String, Pose)],
    sigma_feat: f64,
    seed: u64,
) -> Result<Dataset> {
    let k = SYNTHETIC_INTRINSICS;
    let mut intrinsics = BTreeMap::new();
    let mut anchors = BTreeMap::new();
    for (id, pose) in scene.anchor_ids.iter().zip(&scene.anchor_poses) {
        anchors.insert(id.clone(), PoseRecord::from_pose(pose));
        intrinsics.insert(id.0.clone(), k);
    }
    let mut neighbors = BTreeMap::new();
    let mut matches = BTreeMap::new();
    let mut ground_truth = BTreeMap::new();
    for (qi, (qid, qpose)) in queries.iter().enumerate() {
        if anchors.contains_key(&AnchorId(qid.clone())) {
            return Err(Error::Domain(format!("query id {qid} collides with an anchor id")));
        }
        intrinsics.insert(qid.clone(), k);
        ground_truth.insert(qid.clone(), PoseRecord::from_pose(qpose));
        let mut rng = crate::sim::trial_rng(seed, 7, qi as u64);
        let noise = |rng: &mut ChaCha8Rng| -> f64 {
            if sigma_feat == 0.0 {
                0.0
            } else {
                let z: f64 = StandardNormal.sample(rng);
                sigma_feat * z
            }
        };
        let query_px: Vec<(f64, f64)> = scene
            .points
            .iter()
            .map(|x| {
                let f = project(qpose, x)?;
                let (u, v) = k.to_pixels(&f);
                Ok((u + k.fx * noise(&mut rng), v + k.fy * noise(&mut rng)))
            })
            .collect::<Result<_>>()?;
        let c = qpose.center();
        let mut list: Vec<Neighbor> = scene
            .anchor_ids
            .iter()
            .zip(&scene.anchor_poses)
            .map(|(id, p)| Neighbor {
                anchor_id: id.clone(),
                score: 1.0 / (1.0 + (p.center() - c).norm()),
            })
            .collect();
        list.sort_by(|a, b| b.score.total_cmp(&a.score));
        for (ai, (aid, apose)) in scene.anchor_ids.iter().zip(&scene.anchor_poses).enumerate() {
            let mut m = Vec::new();
            for (j, x) in scene.points.iter().enumerate() {
                if !scene.visible[ai][j] {
                    continue;
                }
                let (u, v) = k.to_pixels(&project(apose, x)?);
                m.push(PixelMatch {
                    query_kp: j as u64,
                    query: query_px[j],
                    anchor: (u + k.fx * noise(&mut rng), v + k.fy * noise(&mut rng)),
                });
            }
            matches.insert((qid.clone(), aid.clone()), m);
        }
        neighbors.insert(qid.clone(), list);
    }
    Ok(Dataset {
        anchors,
        intrinsics,
        neighbors,
        matches,
        ground_truth: Some(ground_truth),
    })
}

/// Writes the run's CSV and JSON outputs into `dir`.
pub fn write_run_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    std::fs::write(&csv_path, results_to_csv(&out.results)?).map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, Vec3};
    use crate::sim::{generate_scene, SceneConfig};

    fn err(m: f64, d: f64) -> PoseError {
        PoseError {
            position_m: m,
            rotation_deg: d,
        }
    }

    #[test]
    fn score_single_exact_query() {
        let r = score_errors(&[err(0.0, 0.0)]).unwrap();
        assert_eq!((r.median_position_m, r.median_rotation_deg), (0.0, 0.0));
        assert!(r.accuracy.iter().all(|b| b.percent == 100.0));
    }

    #[test]
    fn score_two_queries() {
        let r = score_errors(&[err(0.1, 1.0), err(1.0, 6.0)]).unwrap();
        let p: Vec<f64> = r.accuracy.iter().map(|b| b.percent).collect();
        assert_eq!(p, vec![50.0, 50.0, 100.0]);
    }

    #[test]
    fn score_joint_rule() {
        let r = score_errors(&[err(0.3, 1.0)]).unwrap();
        assert_eq!(r.accuracy[0].percent, 0.0);
        assert_eq!(r.accuracy[1].percent, 100.0);
        assert!(score_errors(&[]).is_err());
    }

    #[test]
    fn score_run_uses_final_pose() {
        let truth = Pose::from_center(Rotation::identity(), Vec3::zeros());
        let off = Pose::from_center(Rotation::identity(), Vec3::new(1.0, 0.0, 0.0));
        let result = QueryResult {
            query_id: "q".into(),
            stage1_pose: off,
            refined_pose: Some(truth),
            inlier_anchor_count: 2,
            tracks_used: 3,
            refinement_note: None,
            stage1_error: None,
            refined_error: None,
        };
        let gt = [("q".to_string(), truth)].into();
        assert_eq!(score_run(&[result.clone()], &gt).unwrap().median_position_m, 0.0);
        assert!(score_run(&[result], &BTreeMap::new()).is_err());
    }

    #[test]
    fn query_rng_depends_on_seed_and_id() {
        let a: u64 = query_rng(1, "q1").random();
        assert_eq!(a, query_rng(1, "q1").random::<u64>());
        assert_ne!(a, query_rng(2, "q1").random::<u64>());
        assert_ne!(a, query_rng(1, "q2").random::<u64>());
    }

    fn exact_dataset() -> (Dataset, Pose) {
        let cfg = SceneConfig {
            n_points: 60,
            n_anchors: 6,
            ..Default::default()
        };
        let scene = generate_scene(&cfg, 21).unwrap();
        let q = scene.query_pose;
        (synthetic_dataset(&scene, &[("q0".into(), q)], 0.0, 0).unwrap(), q)
    }

    #[test]
    fn exact_synthetic_query_localizes() {
        let (d, truth) = exact_dataset();
        let r = localize_query("q0", &d, &LocalizeConfig::default(), 3).unwrap();
        let e = pose_error(&r.refined_pose.unwrap(), &truth);
        assert!(e.position_m < 1e-6 && e.rotation_deg < 1e-5, "{e:?}");
        assert_eq!(r.inlier_anchor_count, 6);
    }

    #[test]
    fn single_neighbor_is_rejected() {
        let (d, _) = exact_dataset();
        let cfg = LocalizeConfig {
            top_k: 1,
            ..Default::default()
        };
        let e = localize_query("q0", &d, &cfg, 0).unwrap_err();
        assert!(matches!(e, Error::InsufficientData(_)), "{e}");
    }

    #[test]
    fn results_csv_round_trip() {
        let (d, _) = exact_dataset();
        let out = run_localization(&d, &LocalizeConfig::default(), 0);
        let dir = tempfile::tempdir().unwrap();
        write_run_outputs(dir.path(), &out).unwrap();
        let back = read_results_csv(&dir.path().join("results.csv")).unwrap();
        assert_eq!(back.len(), 1);
        let a = out.results[0].final_pose();
        let b = back[0].final_pose();
        assert!((a.center() - b.center()).norm() < 1e-12);
        assert!(geodesic_angle(&a.rotation, &b.rotation) < 1e-9);
    }
}
