use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diffedit::cli::{run, ExperimentConfig, Verb};

#[derive(Parser)]
#[command(name = "diffedit", version, about = "Diffusion models over latent edit directions")]
struct Cli {
    #[command(subcommand)]
    verb: Command,
    /// Experiment config (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic latent world.
    GenWorld,
    /// Draw labelled pairs and write the normalized direction dataset.
    GenPairs,
    /// Train the denoiser and write a checkpoint plus loss trace.
    Train,
    /// Draw unit-scale directions from the trained model.
    Sample,
    /// Apply sampled directions to the source latents.
    Edit,
    /// Compute metrics over dataset, samples and edits.
    Eval,
    /// Check the backward pass against finite differences.
    GradCheck,
}

impl From<Command> for Verb {
    fn from(c: Command) -> Verb {
        match c {
            Command::GenWorld => Verb::GenWorld,
            Command::GenPairs => Verb::GenPairs,
            Command::Train => Verb::Train,
            Command::Sample => Verb::Sample,
            Command::Edit => Verb::Edit,
            Command::Eval => Verb::Eval,
            Command::GradCheck => Verb::GradCheck,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.out.clone());
    match run(cli.verb.into(), &cfg, &out) {
        Ok(o) => {
            println!("{}", o.summary);
            if o.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
