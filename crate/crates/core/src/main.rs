use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use swkernel::earth_model::PriorKind;
use swkernel::pipeline::{self, RunConfig};
use swkernel::Result;

/// Neural surrogate sensitivity kernels for surface-wave dispersion.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Single worker, fixed reduction order.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample prior models and write their dispersion curves and masks.
    Generate {
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        prior: Option<PriorKind>,
    },
    /// Train a surrogate on a `generate` output directory.
    Train {
        #[arg(long, value_name = "DIR")]
        dataset: PathBuf,
    },
    /// Surrogate and finite-difference kernels for every model of an ensemble file.
    Kernels {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        models: PathBuf,
        /// Use only the first N models.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Band report and prior-artifact score from `kernels` output.
    Compare {
        #[arg(long, value_name = "PATH")]
        surrogate: PathBuf,
        #[arg(long, value_name = "PATH")]
        reference: PathBuf,
        #[arg(long, value_name = "PATH")]
        predictions: PathBuf,
    },
    /// Invert observed curves through the surrogate.
    Invert {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        observations: PathBuf,
        /// Starting model(s) as an ensemble file; defaults to the weak-prior median.
        #[arg(long, value_name = "PATH")]
        initial: Option<PathBuf>,
    },
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.deterministic |= common.deterministic;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("summary serializes"));
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config(&cli.common)?;
    match cli.command {
        Command::Generate { size, prior } => {
            if let Some(n) = size {
                cfg.dataset_size = n;
            }
            if let Some(p) = prior {
                cfg.prior = p;
            }
            print_json(&pipeline::cmd_generate(&cfg)?);
        }
        Command::Train { dataset } => {
            let s = pipeline::cmd_train(&cfg, &dataset)?;
            println!("final train loss {:.6e}, validation loss {:.6e}", s.final_train_loss, s.final_validation_loss);
            print_json(&s);
        }
        Command::Kernels { checkpoint, models, limit } => print_json(&pipeline::cmd_kernels(&cfg, &checkpoint, &models, limit)?),
        Command::Compare { surrogate, reference, predictions } => {
            print_json(&pipeline::cmd_compare(&cfg, &surrogate, &reference, &predictions)?)
        }
        Command::Invert { checkpoint, observations, initial } => {
            print_json(&pipeline::cmd_invert(&cfg, &checkpoint, &observations, initial.as_deref())?)
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
