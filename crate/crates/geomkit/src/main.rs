use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geomkit::error::{KitError, Result};
use geomkit::{run, RunConfig};

#[derive(Parser)]
#[command(name = "geomkit", version, about = "Geometry-preserving embeddings and elastica interpolation of pose manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a pose dataset.
    GenData {
        /// Preset name ("desk", "paper") or JSON config path.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train the mapper.
    Train {
        #[arg(long)]
        config: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Suppress per-epoch progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Interpolate between two test poses.
    Interpolate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory; defaults to the one recorded at training.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        j: usize,
        #[arg(long = "T", default_value_t = 10)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the path suite and write the per-frame summary CSV.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the elastica and eval sections of the training config.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Project a corrupted image onto the nearest interpolated path point.
    Denoise {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Latent bank written by `eval`.
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient, invariance, elastica and tangent checks.
    Selfcheck,
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { config, out, force, jobs } => {
            let cfg = RunConfig::load(&config)?;
            let hash = run::gen_data(&cfg, &out, force, jobs)?;
            println!("{} train / {} test images in {} (manifest {hash})", cfg.dataset.grid.train_len(), cfg.dataset.grid.test_len(), out.display());
        }
        Command::Train { config, data, out, quiet } => {
            let cfg = RunConfig::load(&config)?;
            let epochs = cfg.train.epochs;
            let mut last_epoch = usize::MAX;
            let mut progress = |row: &geomkit_core::embed::LogRow| {
                if !quiet && row.epoch != last_epoch {
                    last_epoch = row.epoch;
                    eprintln!("epoch {}/{epochs} total {:.6}", row.epoch + 1, row.total);
                }
            };
            let t = run::train(&cfg, &data, &out, &mut progress)?;
            println!("checkpoint {} ({})", out.display(), t.sidecar.checkpoint_hash);
        }
        Command::Interpolate { ckpt, data, i, j, frames, out } => {
            let paths = run::interpolate(&ckpt, data.as_deref(), i, j, frames, &out)?;
            for p in &paths {
                println!("{:<13} interior SE {:.6}  velocity SE {:.6}", p.method.tag(), p.interior_se(), p.mean_velocity_se());
            }
        }
        Command::Eval { ckpt, data, out, config, jobs } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let report = run::eval(&ckpt, data.as_deref(), &out, cfg.as_ref(), jobs)?;
            for s in &report.scores {
                println!("{:<13} interior SE {:.6}  velocity SE {:.6}", s.method.tag(), s.interior_se, s.velocity_se);
            }
        }
        Command::Denoise { ckpt, image, paths, out } => {
            run::denoise(&ckpt, &image, &paths, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Selfcheck => {
            let checks = run::selfcheck()?;
            let failed = checks.iter().filter(|c| !c.pass).count();
            for c in &checks {
                let tag = if c.pass { "PASS" } else { "FAIL" };
                println!("{tag} {:<36} {:.3e} (bound {:.1e})", c.name, c.value, c.bound);
            }
            if failed > 0 {
                return Err(KitError::ChecksFailed(failed));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
