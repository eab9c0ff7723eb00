//! `ssnerf`: pretrain, finetune, render and evaluate sparse-view radiance
//! fields on the built-in synthetic scenes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssnerf_core::field::load_checkpoint;
use ssnerf_core::harness::{
    analyze_layers, evaluate_checkpoint, finetune_to_dir, pretrain_to_dir, PoseSpec, RunConfig,
};
use ssnerf_core::renderer::render_image;

#[derive(Parser, Debug)]
#[command(name = "ssnerf", version, about = "Semi-supervised sparse-view NeRF on synthetic scenes")]
struct Cli {
    /// Overrides the seed of the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Supervised training on the sparse training views.
    Pretrain {
        config: PathBuf,
        /// Output directory.
        #[arg(long, short, default_value = "runs/pretrain")]
        out: PathBuf,
    },
    /// Teacher-student finetuning from a pretraining checkpoint.
    Finetune {
        config: PathBuf,
        checkpoint: PathBuf,
        #[arg(long, short, default_value = "runs/finetune")]
        out: PathBuf,
    },
    /// Renders one view of a checkpoint to PNG.
    ///
    /// Poses: `identity`, `orbit:<azimuth>,<elevation>,<radius>` in degrees,
    /// or twelve comma-separated numbers (row-major camera-to-world [R|T]).
    Render {
        checkpoint: PathBuf,
        pose: String,
        output: PathBuf,
        /// Config supplying resolution, field of view and sampling.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// PSNR/SSIM per view, density-noise robustness and sweep flicker.
    Evaluate { checkpoint: PathBuf, config: PathBuf },
    /// Ranks layers by parameter variance across checkpoints.
    AnalyzeLayers {
        #[arg(required = true, num_args = 2..)]
        checkpoints: Vec<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> ssnerf_core::Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> ssnerf_core::Result<()> {
    match cli.command {
        Command::Pretrain { config, out } => {
            let config = load_config(Some(&config), cli.seed)?;
            let result = pretrain_to_dir(&config, &out)?;
            if let Some(row) = result.log.last_with_train_psnr() {
                println!("step {} train psnr {:.3}", row.step + 1, row.train_psnr.unwrap_or_default());
            }
            println!("checkpoint {}", result.checkpoint.display());
            println!("metrics {}", result.metrics.display());
        }
        Command::Finetune {
            config,
            checkpoint,
            out,
        } => {
            let config = load_config(Some(&config), cli.seed)?;
            let result = finetune_to_dir(&config, &checkpoint, &out)?;
            println!("checkpoint {}", result.checkpoint.display());
            println!("metrics {}", result.metrics.display());
        }
        Command::Render {
            checkpoint,
            pose,
            output,
            config,
        } => {
            let config = load_config(config.as_ref(), cli.seed)?;
            let params = load_checkpoint(&checkpoint)?;
            let rig = config.rig();
            let camera = PoseSpec::parse(&pose)?.camera(rig.focal(), rig.width, rig.height)?;
            render_image(&params, &camera, &config.render_config(), None)?
                .image
                .save_png(&output)?;
            println!("wrote {}", output.display());
        }
        Command::Evaluate { checkpoint, config } => {
            let config = load_config(Some(&config), cli.seed)?;
            print!("{}", evaluate_checkpoint(&checkpoint, &config)?.to_text());
        }
        Command::AnalyzeLayers { checkpoints } => {
            print!("{}", analyze_layers(&checkpoints)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
