//! Localization error as the number of retrieved neighbors grows.
//! Pass a trial count to change the default; run with --release.

use mvloc::sim::{run_k_sweep, NoiseSpec, SceneConfig};

fn main() -> mvloc::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let cfg = SceneConfig { n_points: 200, n_anchors: 50, visibility: 0.3, ..Default::default() };
    let sweep = run_k_sweep(&cfg, &[2, 5, 10, 20, 50], &NoiseSpec::features(1e-3)?, trials, 0)?;
    print!("{}", sweep.to_csv());
    Ok(())
}
