//! Closed-form camera center from noisy locus rays, compared with the
//! translation-averaging baseline.

use mvloc::averaging::{center_average, govindu_pose, locus_ray, ray_objective, TranslationAveragingOptions};
use mvloc::sim::{generate_scene, trial_rng, NoiseSpec, SceneConfig};

fn main() -> mvloc::Result<()> {
    let scene = generate_scene(&SceneConfig::default(), 7)?;
    let truth = scene.query_pose.center();
    for sigma in [0.0, 1.0, 5.0] {
        let obs = scene.observations(&NoiseSpec::pose(sigma)?, &mut trial_rng(7, 1, 0))?;
        let rays: Vec<_> = obs.iter().map(locus_ray).collect();
        let sol = center_average(&rays)?;
        let baseline = govindu_pose(&obs, &TranslationAveragingOptions::default())?.center();
        println!(
            "sigma {sigma:>3} deg: center err {:.4} m (objective {:.2e}, cond {:.1}), translation averaging err {:.4} m",
            (sol.center - truth).norm(),
            ray_objective(&rays, &sol.center),
            sol.normal_matrix_condition,
            (baseline - truth).norm(),
        );
    }
    Ok(())
}
