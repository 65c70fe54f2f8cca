use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fossil::experiment::{CommandOutput, Experiment, Overrides};
use fossil::weighting::Scheme;

#[derive(Parser)]
#[command(name = "fossil", version, about = "Difficulty-weighted training experiments")]
struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long, global = true, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root; falls back to the config, then $FOSSIL_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Weighting scheme, replacing the config's.
    #[arg(long, global = true, value_enum)]
    weighting: Option<WeightingArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Fossil,
    Uniform,
    Focal,
    Meta,
}

impl From<WeightingArg> for Scheme {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Fossil => Scheme::Fossil,
            WeightingArg::Uniform => Scheme::Uniform,
            WeightingArg::Focal => Scheme::Focal,
            WeightingArg::Meta => Scheme::Meta,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic datasets.
    Generate,
    /// Score difficulties and build the curriculum partition.
    Difficulty {
        /// Probability file `sample_id,label,p_0,...`.
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Cross-validate over every seed.
    Train,
    /// Simulate weighted online gradient descent and check the regret bound.
    Regret,
    /// Paired tests between two training reports.
    Stats { report_a: PathBuf, report_b: PathBuf },
    /// Evaluate a checkpoint under image perturbations.
    Perturb {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> fossil::Result<CommandOutput> {
    let overrides = Overrides {
        seeds: cli.seed_list,
        workers: cli.workers,
        out: cli.out,
        weighting: cli.weighting.map(Scheme::from),
        force: cli.force,
    };
    let exp = Experiment::from_args(cli.config.as_deref(), overrides)?;
    match cli.command {
        Command::Generate => exp.generate(),
        Command::Difficulty { probs } => exp.difficulty(probs.as_deref()),
        Command::Train => exp.train(),
        Command::Regret => exp.regret(),
        Command::Stats { report_a, report_b } => exp.stats(&report_a, &report_b),
        Command::Perturb { checkpoint } => exp.perturb(checkpoint.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            for note in &out.notes {
                println!("{note}");
            }
            println!("{}: {} files in {}", out.command, out.outputs.len(), out.dir.display());
            if out.succeeded() {
                ExitCode::SUCCESS
            } else {
                for f in &out.failures {
                    eprintln!("failed: {f}");
                }
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
