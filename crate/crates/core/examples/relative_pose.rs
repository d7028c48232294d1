//! Two-view relative pose from feature matches with planted mismatches.

use mvloc::geometry::{geodesic_angle, project, NormalizedFeature, RelativePoseEstimate};
use mvloc::relative::{estimate_relative_pose, Correspondence2D2D, RansacConfig};
use mvloc::sim::{generate_scene, trial_rng, SceneConfig};
use rand::Rng;

fn main() -> mvloc::Result<()> {
    let scene = generate_scene(&SceneConfig { n_points: 80, n_anchors: 4, ..Default::default() }, 11)?;
    let anchor = scene.anchor_poses[0];
    let mut rng = trial_rng(11, 2, 0);

    let mut matches = Vec::new();
    for x in &scene.points {
        matches.push(Correspondence2D2D::new(project(&scene.query_pose, x)?, project(&anchor, x)?));
    }
    // Replace a quarter of the anchor-side features with random ones.
    for m in matches.iter_mut().step_by(4) {
        let f = NormalizedFeature::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))?;
        *m = Correspondence2D2D::new(m.a, f);
    }

    let fit = estimate_relative_pose(&matches, &RansacConfig::default(), &mut rng)?;
    let truth = RelativePoseEstimate::between(&scene.query_pose, &anchor)?;
    println!("inliers            {}/{}", fit.inlier_count(), matches.len());
    println!("rotation error     {:.2e} deg", geodesic_angle(fit.rel.rotation(), truth.rotation()));
    println!(
        "direction error    {:.2e} deg",
        fit.rel.direction().dot(&truth.direction()).clamp(-1.0, 1.0).acos().to_degrees()
    );
    Ok(())
}
