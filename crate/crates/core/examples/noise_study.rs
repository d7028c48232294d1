//! Position error of the decoupled solve versus translation averaging as
//! relative-pose noise grows. Pass a trial count to change the default.

use mvloc::sim::{run_noise_study, Method, NoiseSpec, SceneConfig};

fn main() -> mvloc::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let cfg = SceneConfig { n_points: 8, n_anchors: 20, ..Default::default() };
    let sigmas = [1.0, 2.0, 5.0, 10.0];
    let grid = sigmas.iter().map(|&s| NoiseSpec::pose(s)).collect::<mvloc::Result<Vec<_>>>()?;
    let study = run_noise_study(&cfg, &grid, trials, 0)?;

    println!("sigma_deg  decoupled_m  govindu_m   decoupled_deg  govindu_deg");
    for (i, s) in sigmas.iter().enumerate() {
        let d = study.row(i, Method::Decoupled);
        let g = study.row(i, Method::Govindu);
        println!(
            "{s:>9}  {:>11.4}  {:>9.4}   {:>13.4}  {:>11.4}",
            d.median_position_m, g.median_position_m, d.median_rotation_deg, g.median_rotation_deg
        );
    }
    Ok(())
}
