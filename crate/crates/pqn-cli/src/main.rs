//! `pqn`: generate instances, train PQN and the plain pointer network,
//! evaluate them against the benchmark heuristic, and render plots.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad configuration, 3 missing file.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::TypedValueParser;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "pqn", version, about = "Pointer Q-Network experiments on the travelling salesman problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/eval/test instance sets and the experiment config to --out.
    Generate(GenerateArgs),
    /// Train PQN and the pointer-network baseline on the training set.
    Train(RunArgs),
    /// Evaluate stored checkpoints on an instance set; writes report.json and table.csv.
    Evaluate(EvaluateArgs),
    /// Train both models with cost perturbation, then evaluate on unperturbed instances.
    Perturb(PerturbArgs),
    /// Render SVG plots from the files in --out.
    Report(OutArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Experiment directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    /// Hidden size of the LSTMs and attention.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["128", "256"]).map(|s| s.parse::<usize>().unwrap()))]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Environment steps per epoch.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr_ptr: Option<f64>,
    #[arg(long)]
    pub lr_q: Option<f64>,
    /// Replay minibatch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Target network sync period in steps.
    #[arg(long)]
    pub sync_c: Option<u64>,
    /// Supervised Adam steps at the end of each epoch.
    #[arg(long)]
    pub sup_steps: Option<usize>,
    /// Parameters updated by the TD loss: q_only or all.
    #[arg(long)]
    pub td_scope: Option<String>,
    /// Seed of the training run (PQN_SEED takes precedence).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Preset: tsp20, tsp50, perturbed-tsp20 or custom.
    #[arg(long, default_value = "tsp20")]
    experiment: String,
    /// Number of cities.
    #[arg(long)]
    n: Option<usize>,
    /// Instances per split.
    #[arg(long)]
    instances: Option<usize>,
    /// Benchmark heuristic: two_opt or held_karp.
    #[arg(long)]
    benchmark: Option<String>,
    /// Perturbed epochs, inclusive, as A:B.
    #[arg(long)]
    perturb_range: Option<String>,
    /// Multiplier bounds as LO:HI.
    #[arg(long)]
    perturb_bounds: Option<String>,
    #[command(flatten)]
    train: TrainOverrides,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Which models to train: pqn, ptrnet or both.
    #[arg(long, default_value = "both")]
    method: String,
    #[command(flatten)]
    train: TrainOverrides,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Instance set: train, eval or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long, default_value = "5:10")]
    perturb_range: String,
    #[arg(long, default_value = "0.9:1.1")]
    perturb_bounds: String,
    /// Instance set for the post-training evaluation.
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    train: TrainOverrides,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(
            &a.out.out,
            commands::GenerateOptions {
                experiment: a.experiment,
                n: a.n,
                instances: a.instances,
                benchmark: a.benchmark,
                perturb_range: a.perturb_range,
                perturb_bounds: a.perturb_bounds,
            },
            &a.train,
        ),
        Command::Train(a) => commands::train(&a.out.out, &a.method, &a.train),
        Command::Evaluate(a) => commands::evaluate(&a.out.out, &a.split),
        Command::Perturb(a) => commands::perturb(&a.out.out, &a.perturb_range, &a.perturb_bounds, &a.split, &a.train),
        Command::Report(a) => commands::report(&a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
