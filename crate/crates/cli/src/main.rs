//! `nlcons`: command-line runs of nonlinear consensus experiments.
//!
//! Settings are resolved as built-in defaults, then the `--config` JSON
//! document, then individual flags.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlconsensus::experiment::{run, Command, InitialCondition, ScenarioConfig, ScenarioName};
use nlconsensus::{Error, Result};

#[derive(Parser)]
#[command(name = "nlcons", version, about = "Nonlinear consensus dynamics on undirected graphs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Sub {
    /// Spectrum of D^-1 A.
    Spectrum,
    /// Synchronization threshold report for the signal's gain.
    Threshold,
    /// Integrates one trajectory.
    Simulate,
    /// Multi-start equilibrium search with stability and condition checks.
    Equilibria,
    /// Gain sweep on line:5.
    Bifurcate,
    /// Cluster ISS analysis along one trajectory; needs --partition.
    Iss,
    /// Named experiment: karate-fig5, line5-fig3 or topology-fig4.
    Scenario { name: String },
}

#[derive(Args)]
struct Opts {
    /// JSON config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in topology (line:5, ring:8, star:6, complete:6, complete_bipartite:2,3, karate) or edge-list path.
    #[arg(long, global = true)]
    graph: Option<String>,
    /// Signal family: tanh:K=<k>, clip:K=<k>, sinestair, pwl:file=<path>.
    #[arg(long, global = true)]
    signal: Option<String>,
    /// Replaces the signal gain.
    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[arg(long = "record-every", global = true)]
    record_every: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `karate` or a file of `vertex label` lines.
    #[arg(long, global = true)]
    partition: Option<String>,
    /// Comma-separated initial state.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long = "k-min", global = true)]
    k_min: Option<f64>,
    #[arg(long = "k-max", global = true)]
    k_max: Option<f64>,
    #[arg(long = "k-step", global = true)]
    k_step: Option<f64>,
    /// Random starts for the equilibrium search.
    #[arg(long, global = true)]
    starts: Option<usize>,
}

impl Opts {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(path) => ScenarioConfig::read(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = &self.graph {
            c.graph = v.clone();
        }
        if let Some(v) = &self.signal {
            c.signal = v.clone();
        }
        if self.k.is_some() {
            c.k = self.k;
        }
        if let Some(v) = self.dt {
            c.integration.dt = v;
        }
        if let Some(v) = self.t_end {
            c.integration.t_end = v;
        }
        if let Some(v) = self.record_every {
            c.integration.record_every = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if self.partition.is_some() {
            c.partition = self.partition.clone();
        }
        if let Some(values) = &self.x0 {
            c.initial_condition = InitialCondition::Explicit { values: values.clone() };
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.k_min {
            c.sweep.k_min = v;
        }
        if let Some(v) = self.k_max {
            c.sweep.k_max = v;
        }
        if let Some(v) = self.k_step {
            c.sweep.k_step = v;
        }
        if let Some(v) = self.starts {
            c.starts = v;
        }
        Ok(c)
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let config = cli.opts.resolve()?;
    let command = match &cli.command {
        Sub::Spectrum => Command::Spectrum,
        Sub::Threshold => Command::Threshold,
        Sub::Simulate => Command::Simulate,
        Sub::Equilibria => Command::Equilibria,
        Sub::Bifurcate => Command::Bifurcate,
        Sub::Iss => Command::Iss,
        Sub::Scenario { name } => Command::Scenario(name.parse::<ScenarioName>()?),
    };
    let report = run(command, &config)?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    // a closed pipe (e.g. `| head`) is not a failure of the run
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
