//! Run configuration: a JSON document, overridden field by field by flags.

use std::path::Path;

use kuramoto_mfg::model::DEFAULT_NODE_COUNT;
use kuramoto_mfg::{DistributionKind, FrequencyDistribution, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kappa: f64,
    pub beta: f64,
    pub sigma: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            beta: 1.0,
            sigma: 1.0,
        }
    }
}

/// Frequency law as written in the config, e.g.
/// `{"kind":"dirac","nodes":[[2.0,0.5],[-2.0,0.5]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistSpec {
    Dirac {
        nodes: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symmetric: Option<bool>,
    },
    Gaussian {
        mean: f64,
        variance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_count: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symmetric: Option<bool>,
    },
    Uniform {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_count: Option<usize>,
    },
    Table {
        nodes: Vec<f64>,
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symmetric: Option<bool>,
    },
}

impl Default for DistSpec {
    fn default() -> Self {
        DistSpec::Dirac {
            nodes: vec![[2.0, 0.5], [-2.0, 0.5]],
            symmetric: None,
        }
    }
}

impl DistSpec {
    /// Builds the distribution. An unspecified `symmetric` flag is set
    /// when the law passes the symmetry validation.
    pub fn build(&self) -> Result<FrequencyDistribution, CliError> {
        let (kind, declared, nodes) = match self {
            DistSpec::Dirac { nodes, symmetric } => (
                DistributionKind::Dirac(nodes.iter().map(|[w, p]| (*w, *p)).collect()),
                *symmetric,
                DEFAULT_NODE_COUNT,
            ),
            DistSpec::Gaussian {
                mean,
                variance,
                node_count,
                symmetric,
            } => (
                DistributionKind::Gaussian {
                    mean: *mean,
                    variance: *variance,
                },
                *symmetric,
                node_count.unwrap_or(DEFAULT_NODE_COUNT),
            ),
            DistSpec::Uniform { a, node_count } => (
                DistributionKind::Uniform { half_width: *a },
                Some(true),
                node_count.unwrap_or(DEFAULT_NODE_COUNT),
            ),
            DistSpec::Table {
                nodes,
                weights,
                symmetric,
            } => (
                DistributionKind::Table {
                    nodes: nodes.clone(),
                    weights: weights.clone(),
                },
                *symmetric,
                DEFAULT_NODE_COUNT,
            ),
        };
        let build = |sym| FrequencyDistribution::with_node_count(kind.clone(), sym, nodes);
        let dist = match declared {
            Some(sym) => build(sym),
            None => build(true).or_else(|_| build(false)),
        };
        dist.map_err(|e| CliError::Config(format!("dist: {e}")))
    }

    /// `ω₀` when the law is `(δ_{ω₀} + δ_{−ω₀})/2` with `ω₀ > 0`.
    pub fn two_dirac_omega(&self) -> Option<f64> {
        match self {
            DistSpec::Dirac { nodes, .. } if nodes.len() == 2 => {
                let ([w0, p0], [w1, p1]) = (nodes[0], nodes[1]);
                let symmetric = w0 != 0.0 && (w0 + w1).abs() < 1e-14 && (p0 - 0.5).abs() < 1e-14 && (p1 - 0.5).abs() < 1e-14;
                symmetric.then_some(w0.abs())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmapSpec {
    /// Upper end of the scan; defaults to `κ`.
    pub alpha_max: Option<f64>,
    /// Number of scan intervals; defaults to 64.
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenroseSpec {
    pub theta_max: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    /// Couplings to certify; defaults to the model `κ`.
    pub kappas: Option<Vec<f64>>,
    /// Also solve the time-domain resolvent for `φ = e^{−rate t}`.
    pub resolvent: bool,
    pub forcing_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub epsilon: f64,
    pub steps: usize,
    pub damping: f64,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Start at the largest fixed point of the G-map instead of the
    /// perturbed uniform density.
    pub seed_equilibrium: bool,
    pub dump_densities: bool,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            steps: 2000,
            damping: 0.5,
            max_sweeps: 200,
            tol: 1e-7,
            seed_equilibrium: false,
            dump_densities: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub dist: DistSpec,
    pub grid_n: usize,
    pub time_n: usize,
    /// Time horizon; each command has its own default.
    pub horizon: Option<f64>,
    /// Norm weight; defaults to `0.01 σ²`.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub gmap: GmapSpec,
    pub penrose: PenroseSpec,
    pub stability: StabilitySpec,
    pub simulate: SimulateSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            dist: DistSpec::default(),
            grid_n: kuramoto_mfg::torus::DEFAULT_GRID_N,
            time_n: kuramoto_mfg::operator::DEFAULT_TIME_N,
            horizon: None,
            lambda: None,
            seed: 0,
            gmap: GmapSpec::default(),
            penrose: PenroseSpec::default(),
            stability: StabilitySpec::default(),
            simulate: SimulateSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.model.kappa, self.model.beta, self.model.sigma)
            .map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn lambda_or_default(&self) -> f64 {
        self.lambda.unwrap_or(0.01 * self.model.sigma * self.model.sigma)
    }
}

/// Parses an inline `--dist` document.
pub fn parse_dist(text: &str) -> Result<DistSpec, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("dist: {e}")))
}
