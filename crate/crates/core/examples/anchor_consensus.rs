//! Reject anchors whose relative pose is wrong before the decoupled solve.

use mvloc::averaging::AnchorObservation;
use mvloc::consensus::{decoupled_pose, localize_decoupled, ConsensusConfig};
use mvloc::geometry::{geodesic_angle, RelativePoseEstimate, Rotation, Vec3};
use mvloc::sim::{generate_scene, trial_rng, NoiseSpec, SceneConfig};
use rand::Rng;

fn main() -> mvloc::Result<()> {
    let scene = generate_scene(&SceneConfig { n_anchors: 20, ..Default::default() }, 5)?;
    let mut rng = trial_rng(5, 3, 0);
    let mut obs = scene.observations(&NoiseSpec::pose(0.5)?, &mut rng)?;
    for o in obs.iter_mut().take(5) {
        let axis = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
        let dir = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
        let bad = RelativePoseEstimate::new(Rotation::from_scaled_axis(axis * 2.0), dir)?;
        *o = AnchorObservation::new(o.anchor_id.clone(), o.anchor_pose, bad);
    }

    let truth = scene.query_pose;
    let naive = decoupled_pose(&obs)?;
    let (consensus, pose) = localize_decoupled(&obs, &ConsensusConfig::default())?;
    println!("corrupted anchors  {:?}", obs[..5].iter().map(|o| o.anchor_id.0.as_str()).collect::<Vec<_>>());
    println!("inliers            {} of {}", consensus.inlier_count, obs.len());
    println!("winning pair       {:?}", consensus.hypothesis_pair);
    for (name, p) in [("all anchors", naive), ("consensus", pose)] {
        println!(
            "{name:<18} {:.4} m, {:.4} deg",
            (p.center() - truth.center()).norm(),
            geodesic_angle(&p.rotation, &truth.rotation)
        );
    }
    Ok(())
}
