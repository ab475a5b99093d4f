//! `relulab`: every experiment and verification of the laboratory as a
//! subcommand. Configs are JSON, tabular results are CSV, everything else is
//! JSON. All randomness flows from `--seed`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Status;

/// Environment variable consulted for the dataset directory when
/// `--data-dir` is absent.
pub const DATA_DIR_ENV: &str = "RELULAB_DATA_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "relulab",
    version,
    about = "Desk-scale experiments on single-hidden-layer ReLU networks",
    after_help = "Exit codes: 0 success, 1 domain error or failed check, 2 usage error."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output file. Omitted: primary output goes to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Worker threads. Defaults to the number of available cores.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: Option<u16>,

    /// Dataset directory holding the MNIST IDX or CIFAR-10 binary files.
    /// Falls back to $RELULAB_DATA_DIR, then ./data.
    #[arg(long, global = true, value_name = "DIR", env = DATA_DIR_ENV, default_value = "data")]
    pub data_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one network with SGD and report its learning curve.
    #[command(after_help = commands::TRAIN_HELP)]
    Train {
        /// Train job (JSON): dataset, hidden, train, init_sigma.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Also write the final parameters as a checkpoint.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep hidden-layer sizes and dataset variants, emitting one CSV row per cell.
    #[command(after_help = commands::SWEEP_HELP)]
    Sweep {
        /// Sweep configuration (JSON).
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Also write per-(variant, H) mean and standard deviation as CSV.
        #[arg(long, value_name = "PATH")]
        aggregate: Option<PathBuf>,
    },
    /// Relabel a dataset with the predictions of a small trained teacher.
    #[command(after_help = commands::CENSOR_HELP)]
    Censor {
        /// Censor job (JSON): dataset, h0, train, init_sigma.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Change a fixed fraction of training and validation labels.
    #[command(after_help = commands::NOISE_HELP)]
    Noise {
        /// Noise job (JSON): dataset, fraction.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Solve an ℓ1-regularized convex network over a finite unit library.
    #[command(after_help = commands::CONVEXNN_HELP)]
    Convexnn {
        /// Instance (JSON): x, y, lambda, library, optional loss and solver.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Compile an intersection of halfspaces into a ReLU network and verify it
    /// on every point of the hypercube.
    #[command(after_help = commands::HALFSPACE_HELP)]
    Halfspace {
        /// Normals inline, rows of ±1 separated by ',' or ';', e.g. "+1+1,+1-1".
        #[arg(
            long,
            value_name = "ROWS",
            conflicts_with = "normals_file",
            required_unless_present = "normals_file"
        )]
        normals: Option<String>,
        /// Text file with one row of ±1 entries per line; '#' starts a comment.
        #[arg(long, value_name = "PATH")]
        normals_file: Option<PathBuf>,
    },
    /// Rescale a single-output checkpoint so every unit has ‖u_h‖ = |v_h|.
    #[command(after_help = commands::BALANCE_HELP)]
    Balance {
        /// Checkpoint to balance.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Further rescale to unit-norm hidden weights (single-output networks only).
        #[arg(long)]
        unit: bool,
    },
    /// Compare backpropagated gradients with central finite differences.
    #[command(after_help = commands::GRADCHECK_HELP)]
    Gradcheck {
        /// Optional configuration (JSON); defaults are used for absent fields.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Number of random (network, input) pairs.
        #[arg(long, value_name = "N")]
        pairs: Option<usize>,
    },
}

fn dispatch(cmd: Command, g: &GlobalArgs) -> relulab::Result<Status> {
    match cmd {
        Command::Train { config, checkpoint } => commands::train(g, &config, checkpoint.as_deref()),
        Command::Sweep { config, aggregate } => commands::sweep(g, &config, aggregate.as_deref()),
        Command::Censor { config } => commands::censor(g, &config),
        Command::Noise { config } => commands::noise(g, &config),
        Command::Convexnn { config } => commands::convexnn(g, &config),
        Command::Halfspace {
            normals,
            normals_file,
        } => commands::halfspace(g, normals.as_deref(), normals_file.as_deref()),
        Command::Balance { input, unit } => commands::balance(g, &input, unit),
        Command::Gradcheck { config, pairs } => commands::gradcheck(g, config.as_deref(), pairs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.global.workers {
        pool = pool.num_threads(usize::from(w));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let global = cli.global;
    match pool.install(|| dispatch(cli.command, &global)) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
