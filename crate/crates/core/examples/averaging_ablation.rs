//! Paired comparison of center averaging and translation averaging on the
//! same noisy observations, with a sign test.

use mvloc::sim::{run_averaging_ablation, NoiseSpec, SceneConfig};

fn main() -> mvloc::Result<()> {
    let cfg = SceneConfig { n_points: 8, n_anchors: 20, ..Default::default() };
    let a = run_averaging_ablation(&cfg, &NoiseSpec::pose(5.0)?, 500, 0)?;
    println!("median center averaging      {:.4} m", a.median_center_averaging_m);
    println!("median translation averaging {:.4} m", a.median_translation_averaging_m);
    println!("center wins {}, losses {}, ties {}", a.center_wins, a.center_losses, a.ties);
    println!("one-sided sign test p = {:.3e}", a.sign_test_p);
    Ok(())
}
