//! `hetnet-sim`: runs the seeded Monte Carlo experiments and writes CSV.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hetnet_core::experiment::{run_experiment, write_outputs, ExperimentPreset, ExperimentSpec, Scheme, Sweep};
use hetnet_core::model::ScenarioConfig;

#[derive(Parser)]
#[command(name = "hetnet-sim", version, about = "Multiband relay HetNet resource allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Experiment {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Custom,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write `<out>`, `<out stem>.summary.csv` and, with
    /// `--trace`, `<out stem>.trace.csv`.
    Run {
        /// Scenario TOML; defaults to the shipped three-cell preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "custom")]
        experiment: Experiment,
        /// Comma-separated subset of dual, greedy, ep, no_pairing, lte_only, e_only.
        /// Defaults to the experiment's own list (`dual` for custom).
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long)]
        drops: Option<usize>,
        /// Master seed; defaults to the scenario's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the dual solver's iteration trace.
        #[arg(long)]
        trace: bool,
        /// Record per-row wall time (output then differs between runs).
        #[arg(long)]
        timing: bool,
    },
    /// Print the shipped scenario preset as TOML.
    ShowConfig,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::ShowConfig => {
            print!("{}", ScenarioConfig::baseline().to_toml_string());
            Ok(())
        }
        Command::Run {
            config,
            experiment,
            schemes,
            drops,
            seed,
            workers,
            out,
            trace,
            timing,
        } => {
            let scenario = match &config {
                Some(path) => ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
                None => ScenarioConfig::baseline(),
            };
            let mut spec = match experiment {
                Experiment::Custom => ExperimentSpec::new(scenario, vec![Scheme::Dual], Sweep::None, 100),
                other => {
                    let name = format!("{other:?}").to_lowercase();
                    ExperimentPreset::builtin(&name)
                        .with_context(|| format!("no preset named {name}"))?
                        .into_spec(&scenario)
                }
            };
            if let Some(list) = schemes {
                spec.schemes = list
                    .iter()
                    .map(|s| Scheme::parse(s).with_context(|| format!("unknown scheme {s:?}")))
                    .collect::<Result<_>>()?;
            }
            if let Some(d) = drops {
                spec.drops = d;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if workers == 0 {
                bail!("--workers must be at least 1");
            }
            spec.workers = workers;
            spec.trace = trace;
            spec.timing = timing;

            let output = run_experiment(&spec)?;
            for path in write_outputs(&output, &out)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
