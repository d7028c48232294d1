//! Stage-1 pose followed by refinement over latent 3D points.

use mvloc::geometry::geodesic_angle;
use mvloc::sim::{generate_scene, simulation_pipeline, trial_rng, NoiseSpec, SceneConfig, SimulatedQuery};

fn main() -> mvloc::Result<()> {
    let cfg = SceneConfig { n_points: 50, n_anchors: 8, ..Default::default() };
    let scene = generate_scene(&cfg, 17)?;
    let pipeline = simulation_pipeline();
    let sim = SimulatedQuery::new(&scene, 8, &NoiseSpec::features(1e-3)?, &pipeline, &mut trial_rng(17, 4, 0))?;
    let loc = sim.localize(8, &pipeline, 17)?;

    let truth = scene.query_pose;
    let report = |name: &str, p: &mvloc::geometry::Pose| {
        println!(
            "{name:<8} {:.5} m, {:.5} deg",
            (p.center() - truth.center()).norm(),
            geodesic_angle(&p.rotation, &truth.rotation)
        )
    };
    report("stage 1", &loc.stage1_pose);
    match &loc.refinement {
        Ok(r) => {
            report("refined", &r.pose);
            println!("tracks {} / built {}, iterations {}", r.points_used, loc.tracks_built, r.iterations);
            println!("reprojection energy {:.3e} -> {:.3e}", r.e2_initial, r.e2_final);
            let worst = r.latent_points.iter().map(|p| p.e1_residual).fold(0.0, f64::max);
            println!("largest per-track triangulation residual {worst:.3e}");
        }
        Err(e) => println!("refinement skipped: {e}"),
    }
    Ok(())
}
