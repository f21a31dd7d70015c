//! `knitsim`: command-line harness for the wire-cutting experiments.
//!
//! Every run writes `<command>-<hash12>.csv` (and a `.json` with nested
//! diagnostics) into `--out`. See the README for the file format.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use knitsim_core::ensembles::EnsembleKind;
use knitsim_core::treesim::Protocol;

mod commands;
mod config;
mod output;

use config::ConfigFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Run(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "knitsim", version, about = "Learning-based circuit knitting experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Master seed; every trial derives its own from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON object of parameters; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn O_Phi = Phi^dagger(O) for random channels at the planned shot count.
    Tomography(TomographyArgs),
    /// Two-layer knitting (one cut layer).
    Twolayer(TreeArgs),
    /// Multi-layer or chain knitting; L = 1 runs the two-layer protocol.
    Tree(TreeArgs),
    /// Planned shots of learning versus QPD baselines.
    Scaling(ScalingArgs),
    /// Success rate against shot budget on the hard instances.
    Separation(SeparationArgs),
    /// Print the shot allocation without simulating.
    Plan(PlanArgs),
    /// Re-check the hashes embedded in result files.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct TomographyArgs {
    #[arg(long)]
    pub kind: Option<EnsembleKind>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Minimum success fraction for exit status 0.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    /// Tree description (JSON); otherwise a random tree per trial.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kind: Option<EnsembleKind>,
    /// a (channel) or b (classical); only for L = 1.
    #[arg(long)]
    pub protocol: Option<Protocol>,
}

pub type PlanArgs = TreeArgs;

#[derive(Args, Debug)]
pub struct ScalingArgs {
    #[arg(long)]
    pub d: Option<usize>,
    /// Comma-separated branching factors.
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<usize>>,
    /// Comma-separated depths.
    #[arg(long, value_delimiter = ',')]
    pub l: Option<Vec<usize>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kind: Option<EnsembleKind>,
}

#[derive(Args, Debug)]
pub struct SeparationArgs {
    #[arg(long, value_delimiter = ',')]
    pub r: Option<Vec<usize>>,
    /// Qubits per wire.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub kind: Option<EnsembleKind>,
    /// Comma-separated shot budgets; empty means the learning plan total.
    #[arg(long, value_delimiter = ',')]
    pub shots: Option<Vec<u64>>,
}

fn run(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.common.threads {
        config::check_positive("threads", n)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    if let Command::Verify { files } = &cli.command {
        return Ok(verify(files));
    }
    let cfg = ConfigFile::load(cli.common.config.as_deref())?;
    let start = Instant::now();
    let produced = match &cli.command {
        Command::Tomography(a) => commands::tomography(&cli.common, a, &cfg)?,
        Command::Twolayer(a) => commands::twolayer(&cli.common, a, &cfg)?,
        Command::Tree(a) => commands::tree(&cli.common, a, &cfg)?,
        Command::Scaling(a) => commands::scaling(&cli.common, a, &cfg)?,
        Command::Separation(a) => commands::separation(&cli.common, a, &cfg)?,
        Command::Plan(a) => commands::plan(&cli.common, a, &cfg)?,
        Command::Verify { .. } => unreachable!(),
    };
    let elapsed = start.elapsed();
    let path = output::write(&cli.common.out, &produced.table, elapsed, produced.json.as_ref())?;
    println!("{}: {}", path.display(), produced.summary);
    Ok(produced.status)
}

fn verify(files: &[PathBuf]) -> u8 {
    let mut failed = false;
    for f in files {
        let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let res = std::fs::read_to_string(f)
            .map_err(|e| e.to_string())
            .and_then(|text| output::verify_text(&text, Some(name)));
        match res {
            Ok(v) => println!("OK {} command={} config_hash={} rows={}", f.display(), v.command, v.config_hash, v.rows),
            Err(e) => {
                failed = true;
                println!("FAILED {}: {e}", f.display());
            }
        }
    }
    u8::from(failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("knitsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
