//! Expand an experiment file into its resolution × augmentation runs.
//!
//!     cargo run --release --example experiment_grid -- experiment.toml [--run]
//!
//! Without a file the built-in ablation grid is shown. `--run` trains every
//! cell, which needs the dataset and backbone weights.

use std::path::PathBuf;

use leafnet::experiment::{run_experiment, ExperimentConfig, GridSection, RunFlags};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let execute = args.iter().any(|a| a == "--run");
    let cfg = match args.iter().find(|a| !a.starts_with("--")) {
        Some(path) => ExperimentConfig::load(&PathBuf::from(path))?,
        None => ExperimentConfig {
            output_dir: "runs/ablation".into(),
            grid: Some(GridSection::default()),
            ..Default::default()
        },
    };
    cfg.validate()?;
    for run in cfg.expand() {
        println!(
            "{:<28} input {}x{}  augment {:<5}  lr {}  batch {}",
            run.output_dir.display(),
            run.model.input_resolution,
            run.model.input_resolution,
            run.augmentation.enabled,
            run.training.learning_rate,
            run.training.batch_size
        );
        if execute {
            let summary = run_experiment(&run, None, RunFlags::default())?;
            println!("    {}", summary.report.summary());
        }
    }
    if !execute {
        println!("\nresolved config:\n{}", cfg.to_toml()?);
    }
    Ok(())
}
