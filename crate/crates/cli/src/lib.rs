//! The `grbm` command-line tool.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod output;

pub use output::Format;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<grbm::Error> for CliError {
    fn from(e: grbm::Error) -> Self {
        match e {
            grbm::Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "grbm",
    version,
    about = "Gaussian-binary RBMs: training, exact evaluation and experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or output directory for `bss` and `bench`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat TOML file of configuration keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Extra configuration `key=value`, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Two-source separation study: GRBMs against Gaussian, ICA, MoG and
    /// the true density over many seeded trials.
    Bss(commands::BssArgs),
    /// Train a GRBM on a dataset and save the model.
    Train(commands::TrainCmd),
    /// Average log-likelihood of a dataset under a model.
    Eval(commands::EvalArgs),
    /// Mixture-of-Gaussians view of a model: order masses and components.
    Mixture(commands::MixtureArgs),
    /// Estimate ln Z by annealed importance sampling.
    Ais(commands::AisCmd),
    /// Draw visible samples with independent Gibbs chains.
    Sample(commands::SampleArgs),
    /// Whiten a dataset with PCA or ZCA.
    Whiten(commands::WhitenArgs),
    /// Image-patch study: patches, whitening, GRBM against the Gaussian.
    Patches(commands::PatchesArgs),
    /// Compare CD, PCD and PT samplers at equal epochs.
    Bench(commands::BenchArgs),
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("grbm: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = config::Overrides::load(cli.common.config.as_deref())?;
    for a in &cli.common.set {
        overrides.set_assignment(a)?;
    }
    overrides.set_opt("seed", cli.common.seed);
    let ctx = Context {
        out: cli.common.out.clone(),
        format: cli.common.format,
    };
    let job = move || commands::dispatch(cli.command, overrides, &ctx);
    match cli.common.workers {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(job),
        None => job(),
    }
}

pub struct Context {
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Context {
    pub fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}
