//! Batch driver: simulations, dataset generation, training, rollouts and
//! evaluation, each writing CSV metrics, snapshots and a run manifest under
//! `--out`.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors (nothing is
//! written), 2 on numerical failure (outputs up to the failure are kept).

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pfno_core::allen_cahn::AcError;
use pfno_core::dendrite::DendriteError;
use pfno_core::metrics::MetricsError;
use pfno_core::neural::NeuralError;
use pfno_core::training::TrainError;
use pfno_core::FieldError;
use thiserror::Error;

use config::{ModelKind, RawConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("plot failed: {0}")]
    Plot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    AllenCahn(#[from] AcError),
    #[error(transparent)]
    Dendrite(#[from] DendriteError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        let numerical = match self {
            CliError::Numerical(_) => true,
            CliError::Dendrite(e) => matches!(e, DendriteError::NonFinite | DendriteError::NonPositiveEnergy(_)),
            CliError::Field(e) => matches!(e, FieldError::NonFinite(_)),
            CliError::Train(e) => matches!(
                e,
                TrainError::NonFiniteLoss { .. }
                    | TrainError::NonFinitePrediction
                    | TrainError::Dendrite(DendriteError::NonFinite | DendriteError::NonPositiveEnergy(_))
            ),
            _ => false,
        };
        if numerical {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pfno", version, about = "Phase-field solvers and neural operator training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key=value configuration file; a previous run manifest works too
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Grid points per side
    #[arg(long)]
    pub n: Option<usize>,
    /// Worker threads; 1 gives bit-reproducible runs
    #[arg(long, env = "PFNO_THREADS")]
    pub threads: Option<usize>,
    /// Write PNG images of fields and metric curves
    #[arg(long)]
    pub plots: bool,
    /// Extra configuration override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Allen-Cahn splitting-scheme run
    SimulateAc {
        #[command(flatten)]
        common: Common,
    },
    /// Anisotropic dendrite run with the SAV scheme
    SimulateDendrite {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
    },
    /// Generate a training dataset
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
    },
    /// Train a neural operator on a dataset
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        loss: Option<String>,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long, value_name = "DIR")]
        dataset: Option<PathBuf>,
        /// Warm-start checkpoint
        #[arg(long, value_name = "PATH")]
        ckpt: Option<PathBuf>,
    },
    /// Iterate a trained operator next to the reference solver
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        ckpt: Option<PathBuf>,
    },
    /// Compare two trajectory directories
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "ref", value_name = "DIR")]
        reference: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        pred: Option<PathBuf>,
    },
    /// Solve the Ivantsov relation for the tip Peclet number
    Ivantsov {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        kappa: Option<f64>,
    },
    /// Finite-difference checks of layers, architectures and losses
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

/// What a subcommand needs after argument parsing.
#[derive(Debug)]
pub struct Invocation {
    pub name: &'static str,
    pub common: Common,
    pub raw: RawConfig,
    pub forced: Option<ModelKind>,
}

fn build_raw(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RawConfig, CliError> {
    let mut raw = match &common.config {
        Some(p) => RawConfig::read(p)?,
        None => RawConfig::default(),
    };
    for pair in &common.set {
        raw.set_pair(pair)?;
    }
    let flags = [
        ("run.seed", common.seed.map(|v| v.to_string())),
        ("run.steps", common.steps.map(|v| v.to_string())),
        ("run.n", common.n.map(|v| v.to_string())),
        ("run.plots", common.plots.then(|| "true".to_string())),
    ];
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            raw.set(k, v);
        }
    }
    Ok(raw)
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn invocation(cmd: Command) -> Result<Invocation, CliError> {
    let f = |v: Option<f64>| v.map(|x| x.to_string());
    let (name, common, extra, forced): (&'static str, Common, Vec<(&str, Option<String>)>, Option<ModelKind>) = match cmd {
        Command::SimulateAc { common } => ("simulate-ac", common, vec![], Some(ModelKind::Ac)),
        Command::SimulateDendrite { common, sigma } => {
            ("simulate-dendrite", common, vec![("dendrite.sigma", f(sigma))], Some(ModelKind::Dendrite))
        }
        Command::GenData { common, model, sigma } => {
            ("gen-data", common, vec![("model", model), ("dendrite.sigma", f(sigma))], None)
        }
        Command::Train { common, loss, arch, dataset, ckpt } => (
            "train",
            common,
            vec![
                ("train.loss", loss),
                ("train.arch", arch),
                ("path.dataset", path_str(&dataset)),
                ("path.ckpt", path_str(&ckpt)),
            ],
            None,
        ),
        Command::Rollout { common, ckpt } => ("rollout", common, vec![("path.ckpt", path_str(&ckpt))], None),
        Command::Evaluate { common, reference, pred } => (
            "evaluate",
            common,
            vec![("path.ref", path_str(&reference)), ("path.pred", path_str(&pred))],
            None,
        ),
        Command::Ivantsov { common, kappa } => ("ivantsov", common, vec![("ivantsov.kappa", f(kappa))], None),
        Command::Gradcheck { common } => ("gradcheck", common, vec![], None),
    };
    let raw = build_raw(&common, &extra)?;
    Ok(Invocation { name, common, raw, forced })
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Config(e.to_string()))
}

/// Parses `argv` (without the program name) and runs the subcommand.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = std::iter::once(OsString::from("pfno")).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    let inv = invocation(cmd)?;
    let pool = thread_pool(inv.common.threads)?;
    pool.install(|| commands::dispatch(&inv))
}
