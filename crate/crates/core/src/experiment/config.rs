use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::IntegrationSettings;
use crate::error::{Error, Result};
use crate::graph::{Graph, Partition, Topology};
use crate::signal::SignalFunction;
use crate::spectral::normalized_spectrum;

/// Per-purpose streams derived from the root seed.
pub mod streams {
    pub const INITIAL_CONDITION: u64 = 1;
    pub const MULTI_START: u64 = 2;
    pub const TOPOLOGY: u64 = 3;
}

/// Start along the slowest disagreement mode `v_{N-1}`, see [`InitialCondition::Mode`].
pub fn mode_start<R: Rng + ?Sized>(g: &Graph, amplitude: f64, noise: f64, rng: &mut R) -> Result<Vec<f64>> {
    let v = normalized_spectrum(g)?.top_eigenvector;
    let scale = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    Ok(v.iter()
        .map(|vi| {
            let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            (amplitude * vi / scale + jitter).clamp(-1.0, 1.0)
        })
        .collect())
}

/// Independent generator for `purpose`. Adding a stream never shifts another.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Explicit { values: Vec<f64> },
    /// Uniform in `[-1, 1]^N`.
    // empty braces so that extra keys are rejected like in other variants
    Uniform {},
    /// `c 1`.
    Synchronized { c: f64 },
    /// Magnitudes uniform in `(0, 1)`; the lowest partition label gets
    /// negative signs, the other label positive ones.
    PartitionSigned {},
    /// `amplitude v_{N-1} / ||v_{N-1}||_inf` plus uniform noise in
    /// `[-noise, noise]`, clamped to `[-1, 1]`.
    Mode { amplitude: f64, noise: f64 },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Uniform {}
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub k_step: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_min: 0.5,
            k_max: 3.5,
            k_step: 0.01,
        }
    }
}

/// One JSON document describing a run. Command-line flags override fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Built-in topology (`line:5`, `karate`, ...) or an edge-list path.
    pub graph: String,
    /// Signal family string such as `tanh:K=2` or `clip:K=1.2`.
    pub signal: String,
    /// Replaces the gain of `signal` when set.
    pub k: Option<f64>,
    pub integration: IntegrationSettings,
    pub seed: u64,
    pub initial_condition: InitialCondition,
    /// `karate` for the built-in factions, otherwise a label file.
    pub partition: Option<String>,
    pub output_dir: PathBuf,
    pub sweep: SweepConfig,
    /// Random starts for the equilibrium search.
    pub starts: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            graph: "line:5".into(),
            signal: "tanh:K=1".into(),
            k: None,
            integration: IntegrationSettings::default(),
            seed: 0,
            initial_condition: InitialCondition::Uniform {},
            partition: None,
            output_dir: PathBuf::from("out"),
            sweep: SweepConfig::default(),
            starts: 64,
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ScenarioConfig::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn build_graph(&self) -> Result<Graph> {
        let path = Path::new(&self.graph);
        if path.is_file() {
            Graph::read_edge_list(path)
        } else {
            self.graph.parse::<Topology>()?.build()
        }
    }

    pub fn build_signal(&self) -> Result<SignalFunction> {
        let s = SignalFunction::from_spec(&self.signal)?;
        match self.k {
            Some(k) => s.with_gain(k),
            None => Ok(s),
        }
    }

    pub fn build_partition(&self, n: usize) -> Result<Option<Partition>> {
        match self.partition.as_deref() {
            None => Ok(None),
            Some("karate") => {
                if n != 34 {
                    return Err(Error::Config("the karate partition needs the 34-vertex karate graph".into()));
                }
                Ok(Some(Partition::karate_factions()))
            }
            Some(path) => Partition::read(path, n).map(Some),
        }
    }

    pub fn initial_state(&self, g: &Graph, partition: Option<&Partition>) -> Result<Vec<f64>> {
        let n = g.n();
        let mut rng = stream(self.seed, streams::INITIAL_CONDITION);
        match &self.initial_condition {
            InitialCondition::Explicit { values } => {
                if values.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: values.len(),
                    });
                }
                Ok(values.clone())
            }
            InitialCondition::Uniform {} => Ok((0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()),
            InitialCondition::Synchronized { c } => Ok(vec![*c; n]),
            InitialCondition::Mode { amplitude, noise } => mode_start(g, *amplitude, *noise, &mut rng),
            InitialCondition::PartitionSigned {} => {
                let part = partition
                    .ok_or_else(|| Error::Config("partition_signed initial condition needs a partition".into()))?;
                let labels = part.label_set();
                if labels.len() != 2 {
                    return Err(Error::Config(format!(
                        "partition_signed needs two labels, found {}",
                        labels.len()
                    )));
                }
                Ok(part
                    .labels
                    .iter()
                    .map(|&l| {
                        let u: f64 = rng.gen_range(0.0..1.0);
                        if l == labels[0] {
                            -u
                        } else {
                            u
                        }
                    })
                    .collect())
            }
        }
    }

    /// Seed for the equilibrium search, drawn from its own stream.
    pub fn multi_start_seed(&self) -> u64 {
        stream(self.seed, streams::MULTI_START).gen()
    }
}
