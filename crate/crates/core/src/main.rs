use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mvloc::dataset::{load_dataset, read_poses, DatasetManifest};
use mvloc::localize::LocalizeConfig;
use mvloc::pipeline::{read_results_csv, run_localization, score_run, write_run_outputs};
use mvloc::sim::{
    run_averaging_ablation, run_k_sweep_with, run_noise_study, simulation_pipeline, NoiseSpec, SceneConfig,
};
use mvloc::{Error, Result};

#[derive(Parser)]
#[command(name = "mvloc", version, about = "Multiview camera localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize every query listed in a dataset manifest.
    Localize {
        #[arg(long)]
        manifest: PathBuf,
        /// TOML file with pipeline settings; flags below take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        epipolar_threshold: Option<f64>,
        #[arg(long)]
        tau_reproj: Option<f64>,
        #[arg(long)]
        huber: Option<f64>,
        /// Report stage-1 poses only.
        #[arg(long)]
        no_refine: bool,
        /// Directory receiving results.csv and report.json.
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a synthetic study and write `<study>.csv` and `<study>.json`.
    Simulate {
        study: Study,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a results CSV against ground-truth poses.
    Score {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    Noise,
    Ksweep,
    Ablation,
}

impl Study {
    fn name(self) -> &'static str {
        match self {
            Study::Noise => "noise",
            Study::Ksweep => "ksweep",
            Study::Ablation => "ablation",
        }
    }
}

/// Study settings; every key is optional and falls back to the study's default.
#[derive(Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    trials: Option<usize>,
    scene: Option<SceneConfig>,
    /// Noise study: per-axis rotation and direction σ in degrees.
    sigmas_deg: Option<Vec<f64>>,
    /// Ablation: per-axis σ in degrees.
    sigma_deg: Option<f64>,
    /// K-sweep: neighbor counts and feature noise.
    ks: Option<Vec<usize>>,
    sigma_feat: Option<f64>,
    pipeline: Option<LocalizeConfig>,
}

fn read_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Internal(e.to_string()))
}

enum Failure {
    Lib(Error),
    NothingLocalized,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn simulate(study: Study, config: Option<&Path>, seed: u64, trials: Option<usize>, output: &Path) -> Result<()> {
    let file: StudyFile = read_toml(config)?;
    let trials = trials.or(file.trials);
    std::fs::create_dir_all(output).map_err(|e| Error::Io {
        path: output.to_path_buf(),
        source: e,
    })?;
    let (csv, json) = match study {
        Study::Noise => {
            let scene = file.scene.unwrap_or(SceneConfig {
                n_points: 8,
                n_anchors: 20,
                ..SceneConfig::default()
            });
            let grid = file
                .sigmas_deg
                .unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0])
                .into_iter()
                .map(NoiseSpec::pose)
                .collect::<Result<Vec<_>>>()?;
            let s = run_noise_study(&scene, &grid, trials.unwrap_or(500), seed)?;
            (s.to_csv(), to_json(&s)?)
        }
        Study::Ablation => {
            let scene = file.scene.unwrap_or(SceneConfig {
                n_points: 8,
                n_anchors: 20,
                ..SceneConfig::default()
            });
            let noise = NoiseSpec::pose(file.sigma_deg.unwrap_or(5.0))?;
            let s = run_averaging_ablation(&scene, &noise, trials.unwrap_or(500), seed)?;
            (s.to_csv(), to_json(&s)?)
        }
        Study::Ksweep => {
            let scene = file.scene.unwrap_or(SceneConfig {
                n_points: 200,
                n_anchors: 50,
                visibility: 0.3,
                ..SceneConfig::default()
            });
            let ks = file.ks.unwrap_or_else(|| vec![2, 10, 50]);
            let noise = NoiseSpec::features(file.sigma_feat.unwrap_or(1e-3))?;
            let pipeline = file.pipeline.unwrap_or_else(simulation_pipeline);
            let s = run_k_sweep_with(&scene, &ks, &noise, trials.unwrap_or(300), seed, &pipeline)?;
            (s.to_csv(), to_json(&s)?)
        }
    };
    write_file(&output.join(format!("{}.csv", study.name())), &csv)?;
    write_file(&output.join(format!("{}.json", study.name())), &json)
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Localize {
            manifest,
            config,
            seed,
            top_k,
            epipolar_threshold,
            tau_reproj,
            huber,
            no_refine,
            output,
        } => {
            let mut cfg: LocalizeConfig = read_toml(config.as_deref())?;
            if let Some(k) = top_k {
                cfg.top_k = k;
            }
            if let Some(t) = epipolar_threshold {
                cfg.epipolar_threshold = t;
            }
            if let Some(t) = tau_reproj {
                cfg.tau_reproj = t;
            }
            if huber.is_some() {
                cfg.huber = huber;
            }
            if no_refine {
                cfg.refine = false;
            }
            let dataset = load_dataset(&DatasetManifest::load(&manifest)?)?;
            let out = run_localization(&dataset, &cfg, seed);
            write_run_outputs(&output, &out)?;
            for f in &out.report.failures {
                eprintln!("{}: {}", f.query_id, f.error);
            }
            eprintln!(
                "localized {}/{} queries ({} refined)",
                out.report.localized, out.report.queries, out.report.refined
            );
            if out.report.localized == 0 {
                return Err(Failure::NothingLocalized);
            }
            Ok(())
        }
        Command::Simulate {
            study,
            config,
            seed,
            trials,
            output,
        } => Ok(simulate(study, config.as_deref(), seed, trials, &output)?),
        Command::Score {
            results,
            ground_truth,
            output,
        } => {
            let results = read_results_csv(&results)?;
            let gt = read_poses(&ground_truth)?
                .into_iter()
                .map(|(k, v)| Ok((k, v.to_pose()?)))
                .collect::<Result<_>>()?;
            let json = to_json(&score_run(&results, &gt)?)?;
            match output {
                Some(p) => write_file(&p, &json)?,
                None => print!("{json}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NothingLocalized) => {
            eprintln!("error: no query was localized");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } | Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
