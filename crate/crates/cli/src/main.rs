mod commands;
mod config;
mod container;
mod error;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wavesplat_core::Execution;

use crate::commands::Context;
use crate::config::{LoadedConfig, Overrides};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "wavesplat", version, about = "Random-phase Gaussian wave splatting holograms")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured frame count.
    #[arg(long, global = true)]
    frames: Option<usize>,
    /// Overrides the export directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs every loop sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Composite the configured scene into a time-multiplexed hologram.
    Hologram,
    /// Refocus a hologram at the configured depths.
    Focalstack {
        /// Container to read; defaults to `<out>/hologram.wsh`.
        #[arg(long)]
        hologram: Option<PathBuf>,
    },
    /// STFT light field, view energies and an epipolar image.
    Lightfield {
        #[arg(long)]
        hologram: Option<PathBuf>,
    },
    /// Bandwidth report of every configured channel.
    Analyze {
        #[arg(long)]
        hologram: Option<PathBuf>,
    },
    /// Encode one hologram frame as a phase-only pattern.
    Encode {
        #[arg(long)]
        hologram: Option<PathBuf>,
    },
    /// PSNR and SSIM between two PNG or PFM images.
    Metrics { image: PathBuf, reference: PathBuf },
}

fn execution(threads: Option<usize>) -> CliResult<Execution> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(_n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(_n)
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::default()),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let exec = execution(cli.threads)?;
    if let Command::Metrics { image, reference } = &cli.command {
        return commands::metrics(image, reference);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required for this command".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        frames: cli.frames,
        out: cli.out.clone(),
    };
    let mut ctx = Context::new(LoadedConfig::load(path, &overrides)?, exec);
    match &cli.command {
        Command::Hologram => commands::hologram(&mut ctx),
        Command::Focalstack { hologram } => commands::focal_stack(&mut ctx, hologram.as_deref()),
        Command::Lightfield { hologram } => commands::light_field(&mut ctx, hologram.as_deref()),
        Command::Analyze { hologram } => commands::analyze(&mut ctx, hologram.as_deref()),
        Command::Encode { hologram } => commands::encode_phase(&mut ctx, hologram.as_deref()),
        Command::Metrics { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wavesplat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
