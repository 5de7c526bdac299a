//! The `vitderm` command line.
//!
//! [`run`] parses arguments and dispatches to one subcommand per pipeline
//! stage. It returns the process exit code: 0 on success, 1 for data,
//! configuration or I/O failures, 2 for usage errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod manifest;
pub mod settings;

pub const THREADS_ENV: &str = "VITDERM_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "vitderm",
    version,
    about = "Vision Transformer skin-lesion classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration layering shared by the model-building subcommands.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key=value config file; repeatable, later files win.
    #[arg(long = "config", value_name = "FILE")]
    pub configs: Vec<PathBuf>,
    /// Override one config key (KEY=VALUE); beats config files.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cleanse metadata, split by lesion, augment, and write a split manifest.
    Prepare {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Train/val/test fractions.
        #[arg(long, default_value = "0.8,0.1,0.1")]
        ratios: String,
        /// Per-class target for balancing; defaults to the nv training count.
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        no_augment: bool,
        /// Fields whose missing values drop a record.
        #[arg(long, default_value = "sex,age,localization")]
        drop: String,
    },
    /// Exploratory statistics of the (cleansed) metadata.
    Stats {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_cleanse: bool,
    },
    /// Train a model on a split manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Image directory; defaults to the one recorded by prepare.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Model preset (l16, l32, b16, b32, tiny).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Initial weights; head tensors are re-initialized.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint on one split and print the report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Column name of the measured model in the comparison table.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        no_reference: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Class probabilities for image files.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Attention heatmaps for image files.
    Attention {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Use one layer's class-token attention instead of rollout.
        #[arg(long)]
        layer: Option<usize>,
        /// Select one head (with --layer; default averages heads).
        #[arg(long)]
        head: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train and test one run per config file and tabulate accuracies.
    Ablate {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn configure_threads() -> vitderm_core::Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        vitderm_core::Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got '{v}'"
        ))
    })?;
    // a pool may already exist when run() is called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs one invocation and returns its exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, vitderm_core::Error::Usage(_)) {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> vitderm_core::Result<()> {
    match cmd {
        Command::Prepare {
            metadata,
            images,
            seed,
            out,
            ratios,
            target,
            no_augment,
            drop,
        } => commands::prepare(&commands::PrepareArgs {
            metadata,
            images,
            seed,
            out,
            ratios,
            target,
            no_augment,
            drop,
        }),
        Command::Stats {
            metadata,
            out,
            no_cleanse,
        } => commands::stats(&metadata, out.as_deref(), no_cleanse),
        Command::Train {
            manifest,
            images,
            out,
            preset,
            seed,
            epochs,
            batch_size,
            weights,
            config,
        } => {
            let mut config = config;
            let mut push = |k: &str, v: Option<String>| {
                if let Some(v) = v {
                    config.set.push(format!("{k}={v}"));
                }
            };
            push("model", preset);
            push("seed", seed.map(|s| s.to_string()));
            push("epochs", epochs.map(|s| s.to_string()));
            push("batch_size", batch_size.map(|s| s.to_string()));
            push("weights", weights.map(|p| p.display().to_string()));
            commands::train(&manifest, images.as_deref(), &out, &config).map(|_| ())
        }
        Command::Eval {
            model,
            manifest,
            split,
            images,
            out,
            name,
            no_reference,
            config,
        } => commands::eval(
            &commands::EvalArgs {
                model,
                manifest,
                split,
                images,
                out,
                name,
                no_reference,
            },
            &config,
        ),
        Command::Predict {
            model,
            images,
            out,
            config,
        } => commands::predict(&model, &images, out.as_deref(), &config),
        Command::Attention {
            model,
            images,
            out,
            alpha,
            layer,
            head,
            config,
        } => commands::attention(&model, &images, &out, alpha, layer, head, &config),
        Command::Ablate {
            configs,
            manifest,
            images,
            out,
            set,
        } => commands::ablate(&configs, &manifest, images.as_deref(), &out, &set),
    }
}
