use std::fmt;
use std::io::Write as _;
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use super::config::{mode_start, stream, streams, InitialCondition, ScenarioConfig, SweepConfig};
use super::output::Artifacts;
use super::{bifurcate, clusters_of, write_trajectory};
use crate::cluster::{analyze_clusters, ClusterAnalysis, IssTrace};
use crate::dynamics::{integrate, IntegrationSettings, Trajectory};
use crate::equilibrium::{classify_equilibrium, newton_refine, EquilibriumReport};
use crate::error::{Error, Result};
use crate::graph::{Graph, Partition, SubgraphDecomposition, Topology};
use crate::signal::SignalFunction;
use crate::spectral::normalized_spectrum;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioName {
    KarateFig5,
    Line5Fig3,
    TopologyFig4,
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::KarateFig5 => "karate-fig5",
            ScenarioName::Line5Fig3 => "line5-fig3",
            ScenarioName::TopologyFig4 => "topology-fig4",
        })
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScenarioName> {
        match s {
            "karate-fig5" => Ok(ScenarioName::KarateFig5),
            "line5-fig3" => Ok(ScenarioName::Line5Fig3),
            "topology-fig4" => Ok(ScenarioName::TopologyFig4),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

impl ScenarioName {
    /// Fixes graph, signal and partition; seed, integration and output
    /// directory come from `base`.
    pub fn preset(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut c = base.clone();
        c.k = None;
        match self {
            ScenarioName::KarateFig5 => {
                c.graph = "karate".into();
                c.signal = "clip:K=1.2".into();
                c.partition = Some("karate".into());
                c.initial_condition = InitialCondition::PartitionSigned {};
            }
            ScenarioName::Line5Fig3 => {
                c.graph = "line:5".into();
                c.signal = "tanh:K=1".into();
                c.partition = None;
                c.sweep = SweepConfig::default();
            }
            ScenarioName::TopologyFig4 => {
                c.graph = TOPOLOGIES.join(";");
                c.signal = "clip:K=1".into();
                c.partition = None;
                c.initial_condition = TOPOLOGY_START;
            }
        }
        c
    }

    pub(crate) fn run(&self, config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
        match self {
            ScenarioName::KarateFig5 => {
                let outcome = karate_fig5(config.seed, &config.integration)?;
                write_trajectory(out, &outcome.trajectory)?;
                for (cluster, trace) in outcome.run.clusters.iter().zip(&outcome.traces) {
                    out.csv(&format!("iss_cluster_{}.csv", cluster.label), |w| trace.write_csv(w))?;
                }
                out.json("equilibrium.json", &outcome.run.equilibrium)?;
                out.json("karate_fig5.json", &outcome.run)?;
                Ok(serde_json::to_value(&outcome.run.summary())?)
            }
            ScenarioName::Line5Fig3 => bifurcate(config, out),
            ScenarioName::TopologyFig4 => topology_fig4(config, out),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterVerdict {
    pub label: usize,
    pub analysis: ClusterAnalysis,
    pub holds_at_all_samples: Option<bool>,
    /// Last 20% of samples under the ultimate bound.
    pub tail_within_ultimate_bound: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KarateRun {
    pub seed: u64,
    pub equilibrium: EquilibriumReport,
    /// Vertices whose sign relative to 0 matches the faction split, up to a global flip.
    pub sign_agreement: usize,
    /// Largest within-faction range of the final state.
    pub intra_spread: f64,
    /// Distance between the faction means.
    pub inter_gap: f64,
    pub clusters: Vec<ClusterVerdict>,
}

impl KarateRun {
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "seed": self.seed,
            "kind": if self.equilibrium.is_fse() { "FSE" } else { "NFSE" },
            "residual": self.equilibrium.residual,
            "local_stability": self.equilibrium.local_stability,
            "sign_agreement": self.sign_agreement,
            "intra_spread": self.intra_spread,
            "inter_gap": self.inter_gap,
            "clusters": self.clusters.iter().map(|c| json!({
                "label": c.label,
                "alpha_in": c.analysis.alpha_in,
                "ultimate_bound": c.analysis.ultimate_bound,
                "holds_at_all_samples": c.holds_at_all_samples,
                "tail_within_ultimate_bound": c.tail_within_ultimate_bound,
            })).collect::<Vec<_>>(),
        })
    }
}

pub struct KarateOutcome {
    pub trajectory: Trajectory,
    pub traces: Vec<IssTrace>,
    pub run: KarateRun,
}

/// Integrates then polishes the end state with Newton and classifies it.
pub fn settle_and_classify(
    g: &Graph,
    s: &SignalFunction,
    x0: &[f64],
    settings: &IntegrationSettings,
) -> Result<(Trajectory, EquilibriumReport)> {
    let traj = integrate(g, s, x0, settings)?;
    let (x, _) = newton_refine(g, s, traj.final_state())?;
    let report = classify_equilibrium(g, s, &x)?;
    Ok((traj, report))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn faction_metrics(x: &[f64], part: &Partition, decs: &[(usize, SubgraphDecomposition)]) -> (usize, f64, f64) {
    let first = decs[0].0;
    let agree = x
        .iter()
        .zip(&part.labels)
        .filter(|(&xi, &l)| (xi < 0.0 && l == first) || (xi > 0.0 && l != first))
        .count();
    let flipped = x
        .iter()
        .zip(&part.labels)
        .filter(|(&xi, &l)| (xi > 0.0 && l == first) || (xi < 0.0 && l != first))
        .count();
    let mut spread = 0.0_f64;
    let mut means = Vec::new();
    for (_, dec) in decs {
        let xs = dec.select(x);
        spread = spread.max(crate::equilibrium::spread(&xs));
        means.push(mean(&xs));
    }
    (agree.max(flipped), spread, (means[0] - means[1]).abs())
}

/// The karate club under `clip:K=1.2` from a faction-signed random start,
/// with the ISS analysis of both factions.
pub fn karate_fig5(seed: u64, settings: &IntegrationSettings) -> Result<KarateOutcome> {
    let config = ScenarioName::KarateFig5.preset(&ScenarioConfig {
        seed,
        integration: *settings,
        ..ScenarioConfig::default()
    });
    let g = config.build_graph()?;
    let s = config.build_signal()?;
    let part = config.build_partition(g.n())?.expect("preset sets a partition");
    let x0 = config.initial_state(&g, Some(&part))?;
    let (trajectory, equilibrium) = settle_and_classify(&g, &s, &x0, settings)?;

    let decs = clusters_of(&g, &part)?;
    let (sign_agreement, intra_spread, inter_gap) = faction_metrics(&equilibrium.state, &part, &decs);
    let plain: Vec<SubgraphDecomposition> = decs.iter().map(|(_, d)| d.clone()).collect();
    let results = analyze_clusters(&g, &s, &plain, &trajectory)?;
    let mut clusters = Vec::new();
    let mut traces = Vec::new();
    for ((label, _), (analysis, trace)) in decs.iter().zip(results) {
        clusters.push(ClusterVerdict {
            label: *label,
            holds_at_all_samples: trace.holds_at_all_samples,
            tail_within_ultimate_bound: analysis.ultimate_bound.map(|b| trace.tail_within(0.2, b)),
            analysis,
        });
        traces.push(trace);
    }
    Ok(KarateOutcome {
        trajectory,
        traces,
        run: KarateRun {
            seed,
            equilibrium,
            sign_agreement,
            intra_spread,
            inter_gap,
            clusters,
        },
    })
}

/// Graphs compared above and below the threshold. The last two have
/// `lambda_{N-1} <= 0` and synchronize at any gain.
pub const TOPOLOGIES: [&str; 5] = ["line:8", "ring:10", "karate", "star:8", "complete:6"];

const MODE_AMPLITUDE: f64 = 0.8;
const MODE_NOISE: f64 = 0.2;
const TOPOLOGY_START: InitialCondition = InitialCondition::Mode {
    amplitude: MODE_AMPLITUDE,
    noise: MODE_NOISE,
};

#[derive(Clone, Debug, Serialize)]
struct TopologyRun {
    topology: String,
    regime: &'static str,
    k: f64,
    k_lambda: f64,
    kind: &'static str,
    spread: f64,
    state: Vec<f64>,
}

fn topology_fig4(config: &ScenarioConfig, out: &mut Artifacts) -> Result<serde_json::Value> {
    let mut rng = stream(config.seed, streams::TOPOLOGY);
    let mut runs = Vec::new();
    for name in TOPOLOGIES {
        let g = name.parse::<Topology>()?.build()?;
        let lambda = normalized_spectrum(&g)?.lambda_second;
        // one start per topology, shared by both regimes
        let x0 = mode_start(&g, MODE_AMPLITUDE, MODE_NOISE, &mut rng)?;
        let (k_low, k_high) = if lambda > 0.0 { (0.9 / lambda, 1.5 / lambda) } else { (0.9, 5.0) };
        for (regime, k) in [("below", k_low), ("above", k_high)] {
            let s = SignalFunction::clip_linear(k)?;
            let (_, eq) = settle_and_classify(&g, &s, &x0, &config.integration)?;
            runs.push(TopologyRun {
                topology: name.to_string(),
                regime,
                k,
                k_lambda: k * lambda,
                kind: if eq.is_fse() { "FSE" } else { "NFSE" },
                spread: eq.spread(),
                state: eq.state,
            });
        }
    }
    out.csv("topology_fig4.csv", |w| {
        writeln!(w, "topology,regime,K,k_lambda,kind,vertex,x")?;
        for r in &runs {
            for (v, x) in r.state.iter().enumerate() {
                writeln!(w, "{},{},{},{},{},{},{}", r.topology, r.regime, r.k, r.k_lambda, r.kind, v, x)?;
            }
        }
        Ok(())
    })?;
    out.json("topology_fig4.json", &runs)?;
    Ok(json!(runs
        .iter()
        .map(|r| json!({ "topology": r.topology, "regime": r.regime, "k_lambda": r.k_lambda, "kind": r.kind }))
        .collect::<Vec<_>>()))
}
