//! Config-driven runs that write CSV and JSON artifacts, shared by the CLI
//! and the acceptance tests.

pub mod config;
pub mod output;
pub mod scenario;

use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

pub use config::{InitialCondition, ScenarioConfig, SweepConfig};
pub use output::{Artifacts, ARTIFACT_VERSION};
pub use scenario::{karate_fig5, KarateOutcome, KarateRun, ScenarioName};

use crate::bifurcation::bifurcation_sweep;
use crate::cluster::analyze_clusters;
use crate::dynamics::{integrate, residual, Trajectory};
use crate::equilibrium::{find_equilibria, nfse_conditions, nfse_feasibility, SeedPlan};
use crate::error::{Error, Result};
use crate::graph::{Partition, SubgraphDecomposition};
use crate::spectral::{normalized_spectrum, threshold_report};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Threshold,
    Simulate,
    Equilibria,
    Bifurcate,
    Iss,
    Scenario(ScenarioName),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Spectrum => "spectrum".into(),
            Command::Threshold => "threshold".into(),
            Command::Simulate => "simulate".into(),
            Command::Equilibria => "equilibria".into(),
            Command::Bifurcate => "bifurcate".into(),
            Command::Iss => "iss".into(),
            Command::Scenario(s) => format!("scenario {s}"),
        }
    }
}

/// What a run wrote and a short JSON summary for stdout.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Runs `command` and writes its artifacts under `config.output_dir`. On
/// error, files written so far are removed.
pub fn run(command: Command, config: &ScenarioConfig) -> Result<RunReport> {
    let config = match command {
        Command::Scenario(name) => name.preset(config),
        _ => config.clone(),
    };
    let mut out = Artifacts::create(&command.name(), &config)?;
    let summary = match command {
        Command::Spectrum => spectrum(&config, &mut out)?,
        Command::Threshold => threshold(&config, &mut out)?,
        Command::Simulate => simulate(&config, &mut out)?,
        Command::Equilibria => equilibria(&config, &mut out)?,
        Command::Bifurcate => bifurcate(&config, &mut out)?,
        Command::Iss => iss(&config, &mut out)?,
        Command::Scenario(name) => name.run(&config, &mut out)?,
    };
    Ok(RunReport {
        command: command.name(),
        files: out.finish(),
        summary,
    })
}

fn spectrum(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let g = config.build_graph()?;
    let spec = normalized_spectrum(&g)?;
    let value = json!({ "graph": config.graph, "n": g.n(), "spectrum": spec });
    out.json("spectrum.json", &value)?;
    Ok(value)
}

fn threshold(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let g = config.build_graph()?;
    let s = config.build_signal()?;
    let spec = normalized_spectrum(&g)?;
    let report = threshold_report(&spec, s.lipschitz())?;
    let value = serde_json::to_value(&report)?;
    out.json("threshold.json", &value)?;
    Ok(value)
}

fn write_trajectory(out: &mut Artifacts, traj: &Trajectory) -> Result<()> {
    out.csv("trajectory.csv", |w| traj.write_csv(w))
}

fn simulate(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let g = config.build_graph()?;
    let s = config.build_signal()?;
    let part = config.build_partition(g.n())?;
    let x0 = config.initial_state(&g, part.as_ref())?;
    let traj = integrate(&g, &s, &x0, &config.integration)?;
    write_trajectory(out, &traj)?;
    let value = json!({
        "converged": traj.converged,
        "samples": traj.len(),
        "final_time": traj.times.last(),
        "final_state": traj.final_state(),
        "final_residual": residual(&g, &s, traj.final_state())?,
        "final_disagreement": traj.disagreement.last(),
        "max_excursion": traj.max_excursion,
    });
    out.json("simulation.json", &value)?;
    Ok(value)
}

fn equilibria(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let g = config.build_graph()?;
    let s = config.build_signal()?;
    let plan = SeedPlan::with_random(config.starts, config.multi_start_seed());
    let search = find_equilibria(&g, &s, &plan)?;
    let conditions = search
        .nfse()
        .map(|e| nfse_conditions(&g, &s, &e.state))
        .collect::<Result<Vec<_>>>()?;
    let value = json!({
        "search": search,
        "feasibility": nfse_feasibility(&s)?,
        "nfse_conditions": conditions,
    });
    out.json("equilibria.json", &value)?;
    Ok(json!({
        "equilibria": search.equilibria.len(),
        "nfse": search.nfse().count(),
        "log": search.log,
    }))
}

fn bifurcate(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let g = config.build_graph()?;
    let s = config.build_signal()?;
    let sw = config.sweep;
    let diagram = bifurcation_sweep(&g, &s, sw.k_min, sw.k_max, sw.k_step)?;
    out.csv("bifurcation.csv", |w| diagram.write_csv(w))?;
    let value = json!({
        "k_min": sw.k_min,
        "k_max": sw.k_max,
        "k_step": sw.k_step,
        "lambda_second": diagram.lambda_second,
        "detected_k_bif": diagram.detected_k_bif,
        "detected_k_stab": diagram.detected_k_stab,
        "points": diagram.points.len(),
    });
    out.json("bifurcation_summary.json", &value)?;
    Ok(value)
}

/// Decompositions for every label of `part`, in label order.
pub fn clusters_of(g: &crate::graph::Graph, part: &Partition) -> Result<Vec<(usize, SubgraphDecomposition)>> {
    part.label_set()
        .into_iter()
        .map(|l| Ok((l, SubgraphDecomposition::new(g, &part.members(l))?)))
        .collect()
}

fn iss(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let g = config.build_graph()?;
    let s = config.build_signal()?;
    let part = config
        .build_partition(g.n())?
        .ok_or_else(|| Error::Config("iss needs a partition".into()))?;
    let x0 = config.initial_state(&g, Some(&part))?;
    let traj = integrate(&g, &s, &x0, &config.integration)?;
    write_trajectory(out, &traj)?;
    let clusters = clusters_of(&g, &part)?;
    let decs: Vec<SubgraphDecomposition> = clusters.iter().map(|(_, d)| d.clone()).collect();
    let results = analyze_clusters(&g, &s, &decs, &traj)?;
    let mut entries = Vec::new();
    for ((label, _), (analysis, trace)) in clusters.iter().zip(&results) {
        out.csv(&format!("iss_cluster_{label}.csv"), |w| trace.write_csv(w))?;
        entries.push(json!({
            "label": label,
            "analysis": analysis,
            "holds_at_all_samples": trace.holds_at_all_samples,
            "tail_within_ultimate_bound": analysis.ultimate_bound.map(|b| trace.tail_within(0.2, b)),
        }));
    }
    let value = json!({ "clusters": entries });
    out.json("iss.json", &value)?;
    Ok(value)
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Command> {
        match s {
            "spectrum" => Ok(Command::Spectrum),
            "threshold" => Ok(Command::Threshold),
            "simulate" => Ok(Command::Simulate),
            "equilibria" => Ok(Command::Equilibria),
            "bifurcate" => Ok(Command::Bifurcate),
            "iss" => Ok(Command::Iss),
            other => Err(Error::Config(format!("unknown command `{other}`"))),
        }
    }
}
