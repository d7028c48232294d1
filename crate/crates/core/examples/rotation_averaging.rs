//! Frobenius-optimal rotation mean, its projection form, and the linear
//! quaternion baseline.

use mvloc::averaging::{frobenius_objective, govindu_rotation_average, markley_by_projection, markley_rotation_average};
use mvloc::geometry::geodesic_angle;
use mvloc::sim::{generate_scene, trial_rng, NoiseSpec, SceneConfig};

fn main() -> mvloc::Result<()> {
    let scene = generate_scene(&SceneConfig::default(), 3)?;
    let truth = scene.query_pose.rotation;
    let obs = scene.observations(&NoiseSpec::pose(5.0)?, &mut trial_rng(3, 1, 0))?;
    let estimates: Vec<_> = obs.iter().map(|o| o.rotation_estimate()).collect();

    let eig = markley_rotation_average(&estimates)?;
    let proj = markley_by_projection(&estimates)?;
    let lin = govindu_rotation_average(&obs.iter().map(|o| o.rotation_constraint()).collect::<Vec<_>>())?;

    println!("eigenvector mean   err {:.4} deg, objective {:.6}", geodesic_angle(&eig, &truth), frobenius_objective(&eig, &estimates));
    println!("projection mean    err {:.4} deg, objective {:.6}", geodesic_angle(&proj, &truth), frobenius_objective(&proj, &estimates));
    println!("linear quaternions err {:.4} deg, objective {:.6}", geodesic_angle(&lin, &truth), frobenius_objective(&lin, &estimates));
    println!("eigen vs projection {:.2e} deg", geodesic_angle(&eig, &proj));
    Ok(())
}
