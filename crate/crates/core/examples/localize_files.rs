//! Export a synthetic dataset to text files, load it back, localize every
//! query and score the run. Writes into a directory given as the first
//! argument, or a fresh temporary one.

use mvloc::dataset::{load_dataset, DatasetManifest};
use mvloc::pipeline::{run_localization, synthetic_dataset, write_run_outputs};
use mvloc::sim::{generate_scene, sample_queries, SceneConfig};

fn main() -> mvloc::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mvloc-example"));
    let cfg = SceneConfig { n_points: 120, n_anchors: 12, visibility: 0.6, ..Default::default() };
    let scene = generate_scene(&cfg, 1)?;
    let queries: Vec<(String, _)> = sample_queries(&scene, &cfg, 5, 1)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| (format!("q{i:03}"), p))
        .collect();

    let manifest_path = synthetic_dataset(&scene, &queries, 1e-3, 1)?.save(&dir)?;
    let dataset = load_dataset(&DatasetManifest::load(&manifest_path)?)?;
    let out = run_localization(&dataset, &Default::default(), 0);
    write_run_outputs(&dir.join("run"), &out)?;

    for q in &out.report.per_query {
        let e = q.refined_error.or(q.stage1_error).unwrap();
        println!("{}  {:.4} m  {:.4} deg  refined={}", q.query_id, e.position_m, e.rotation_deg, q.refined);
    }
    if let Some(s) = &out.report.score {
        for b in &s.accuracy {
            println!("({} m, {} deg): {:.0}%", b.max_position_m, b.max_rotation_deg, b.percent);
        }
    }
    println!("outputs in {}", dir.join("run").display());
    Ok(())
}
