use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use aoi_cli::{run, ExperimentSpec, Pipeline};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aoi",
    version,
    about = "Optimal status-update scheduling under a transmission budget"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Solve each grid point; write policy maps, boundaries and a summary.
    Solve(Overrides),
    /// Solve and check threshold structure and budget compliance.
    Verify(Overrides),
    /// Simulate the optimal mixture against the random baseline.
    Simulate(Overrides),
    /// Write one table row per grid point.
    Sweep(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML config file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated update probabilities.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    p: Option<Vec<f64>>,
    /// Comma-separated failure probabilities.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    gamma: Option<Vec<f64>>,
    /// Comma-separated transmission budgets.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    gamma_max: Option<Vec<f64>>,
    #[arg(long)]
    delta_max: Option<u32>,
    #[arg(long)]
    l_max: Option<u32>,
    #[arg(long)]
    epsilon_lambda: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Write the slot trace of the first trial (simulate only).
    #[arg(long)]
    trace: bool,
}

impl Overrides {
    fn into_spec(self, pipeline: Pipeline) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    spec.$field = v;
                }
            )*};
        }
        set!(
            out,
            seed,
            p,
            gamma,
            gamma_max,
            delta_max,
            l_max,
            epsilon_lambda,
            trials,
            horizon
        );
        spec.trace |= self.trace;
        spec.pipelines = vec![pipeline];
        Ok(spec)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pipeline, overrides) = match cli.verb {
        Verb::Solve(o) => (Pipeline::Solve, o),
        Verb::Verify(o) => (Pipeline::Verify, o),
        Verb::Simulate(o) => (Pipeline::Simulate, o),
        Verb::Sweep(o) => (Pipeline::Sweep, o),
    };
    let result = overrides.into_spec(pipeline).and_then(|spec| run(&spec));
    match result {
        Ok(files) => {
            for f in &files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
