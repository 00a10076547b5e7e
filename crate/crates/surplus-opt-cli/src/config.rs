//! Config file schema and validation.
//!
//! A config is a single JSON document. Parsing alone never accepts a bad
//! experiment: [`parse_config`] builds every core object (graph, surplus
//! weights, objectives, parameters, system matrix) so all structural and
//! numerical validation fires before any stepping occurs, and the returned
//! config has `"auto"` epsilon replaced by the resolved number.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surplus_opt::graph::{build_surplus_matrix, generate, max_epsilon, SurplusScheme};
use surplus_opt::linalg::Mat;
use surplus_opt::objective::ObjectiveFamily;
use surplus_opt::protocol::{
    build_system_matrix, default_initial_state, AgentState, ProtocolParams, StepSchedule,
    SwarmState, SystemMatrix,
};
use surplus_opt::{Digraph, SurplusWeights};

#[derive(Debug)]
pub enum CliError {
    /// Malformed config document or command line. Exit code 1.
    Parse(String),
    /// A core validation or runtime error; the exit code depends on the
    /// variant (divergence and verification failures are distinguished).
    Core(surplus_opt::Error),
    /// Filesystem problem. Exit code 4.
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<surplus_opt::Error> for CliError {
    fn from(e: surplus_opt::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Core(surplus_opt::Error::Divergence { .. }) => 2,
            CliError::Core(surplus_opt::Error::VerificationMismatch { .. }) => 3,
            CliError::Core(_) => 1,
            CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Verify,
    Check,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    /// Directed cycle; node i transmits to i+1 (mod n) with weights[i].
    Ring {
        n: usize,
        weights: Vec<f64>,
    },
    RingUniform {
        n: usize,
        weight: f64,
    },
    RandomUnbalanced {
        n: usize,
        p: f64,
        w_lo: f64,
        w_hi: f64,
        graph_seed: u64,
    },
    /// Text file of `j i a_ij` triples, 1-based, `#` comments.
    EdgeList {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// One (Q, c) pair per agent; Q is a dim×dim row-major matrix.
    Quadratic { q: Vec<Vec<Vec<f64>>>, c: Vec<Vec<f64>> },
    /// One center per agent.
    Quartic { centers: Vec<Vec<f64>> },
}

/// Either the literal string "auto" (resolved to 0.5·ε_max) or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    Auto(AutoWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoWord {
    Auto,
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        EpsilonSpec::Auto(AutoWord::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// α_k = alpha0 / (k+1).
    Harmonic { alpha0: f64 },
    /// α_k = alpha0 / (k+1)^exponent, exponent in (0.5, 1].
    Power { alpha0: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "default_metric_tol")]
    pub tol_c: f64,
    #[serde(default = "default_metric_tol")]
    pub tol_y: f64,
    #[serde(default = "default_metric_tol")]
    pub tol_q: f64,
    #[serde(default = "default_guard")]
    pub guard: f64,
}

fn default_metric_tol() -> f64 {
    1e-3
}

fn default_guard() -> f64 {
    1e6
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            tol_c: default_metric_tol(),
            tol_y: default_metric_tol(),
            tol_q: default_metric_tol(),
            guard: default_guard(),
        }
    }
}

/// Explicit starting state; absent vectors default to zero, an absent block
/// falls back to the seeded default (r ~ uniform[-5,5]^s, q = y = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub r: Vec<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub y: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub graph: GraphSpec,
    pub objective: ObjectiveSpec,
    pub dim: usize,
    pub t: f64,
    #[serde(default)]
    pub epsilon: EpsilonSpec,
    pub schedule: ScheduleSpec,
    pub k_max: u64,
    #[serde(default = "default_stride")]
    pub record_stride: u64,
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
}

fn default_stride() -> u64 {
    1
}

/// Core objects built from a validated config. Everything a run needs,
/// constructed once so validation cannot drift from execution.
pub struct Resolved {
    pub graph: Digraph,
    pub surplus: SurplusWeights,
    pub family: ObjectiveFamily<f64>,
    pub params: ProtocolParams<f64>,
    pub initial: SwarmState<f64>,
    pub system: Option<SystemMatrix<f64>>,
    pub epsilon_max: f64,
}

fn build_graph(spec: &GraphSpec) -> Result<Digraph, CliError> {
    match spec {
        GraphSpec::Ring { n, weights } => Ok(generate::ring(*n, weights)?),
        GraphSpec::RingUniform { n, weight } => Ok(generate::ring_uniform(*n, *weight)?),
        GraphSpec::RandomUnbalanced { n, p, w_lo, w_hi, graph_seed } => {
            Ok(generate::random_unbalanced(*n, *p, (*w_lo, *w_hi), *graph_seed)?)
        }
        GraphSpec::EdgeList { path } => {
            let text = std::fs::read_to_string(path)?;
            Ok(generate::from_edge_list(&text)?)
        }
    }
}

fn build_objectives(
    spec: &ObjectiveSpec,
    n: usize,
    dim: usize,
) -> Result<ObjectiveFamily<f64>, CliError> {
    let family = match spec {
        ObjectiveSpec::Quadratic { q, c } => {
            if q.len() != n || c.len() != n {
                return Err(CliError::Parse(format!(
                    "objective lists {} quadratics and {} centers for {n} agents",
                    q.len(),
                    c.len()
                )));
            }
            let members = q
                .iter()
                .zip(c)
                .map(|(qm, cm)| {
                    let rows: Vec<Vec<f64>> = qm.clone();
                    Ok((Mat::from_rows(&rows).map_err(CliError::Core)?, cm.clone()))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            for (qm, cm) in &members {
                if qm.rows() != dim || qm.cols() != dim || cm.len() != dim {
                    return Err(CliError::Parse(format!(
                        "quadratic member shape {}×{} with center length {} does not match dim = {dim}",
                        qm.rows(),
                        qm.cols(),
                        cm.len()
                    )));
                }
            }
            ObjectiveFamily::quadratic(members)?
        }
        ObjectiveSpec::Quartic { centers } => {
            if centers.len() != n {
                return Err(CliError::Parse(format!(
                    "objective lists {} quartic centers for {n} agents",
                    centers.len()
                )));
            }
            for cm in centers {
                if cm.len() != dim {
                    return Err(CliError::Parse(format!(
                        "quartic center length {} does not match dim = {dim}",
                        cm.len()
                    )));
                }
            }
            ObjectiveFamily::quartic(centers.clone())?
        }
    };
    Ok(family)
}

fn build_initial(
    spec: &Option<InitialSpec>,
    n: usize,
    dim: usize,
    seed: u64,
) -> Result<SwarmState<f64>, CliError> {
    let Some(init) = spec else {
        return Ok(default_initial_state(n, dim, seed));
    };
    let block = |name: &str, rows: &Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>, CliError> {
        if rows.len() != n || rows.iter().any(|r| r.len() != dim) {
            return Err(CliError::Parse(format!(
                "initial.{name} must be {n} vectors of length {dim}"
            )));
        }
        Ok(rows.clone())
    };
    let r = block("r", &init.r)?;
    let zeros = vec![vec![0.0; dim]; n];
    let q = match &init.q {
        Some(q) => block("q", q)?,
        None => zeros.clone(),
    };
    let y = match &init.y {
        Some(y) => block("y", y)?,
        None => zeros,
    };
    let agents = r
        .into_iter()
        .zip(q)
        .zip(y)
        .map(|((r, q), y)| AgentState::new(r, q, y))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SwarmState::new(agents, 0)?)
}

/// Builds every core object the configured experiment needs, running the
/// full validation stack: strong connectivity, per-node parameter
/// conditions, schedule admissibility over the configured horizon, and the
/// spectral guard on M.
pub fn resolve(cfg: &SimConfig) -> Result<Resolved, CliError> {
    if cfg.dim == 0 {
        return Err(CliError::Parse("dim must be positive".into()));
    }
    if cfg.k_max == 0 {
        return Err(CliError::Parse("k_max must be positive".into()));
    }
    if cfg.record_stride == 0 {
        return Err(CliError::Parse("record_stride must be positive".into()));
    }
    let graph = build_graph(&cfg.graph)?;
    let n = graph.n();
    let surplus = build_surplus_matrix(&graph, SurplusScheme::Uniform)?;
    let family = build_objectives(&cfg.objective, n, cfg.dim)?;

    let schedule = match cfg.schedule {
        ScheduleSpec::Harmonic { alpha0 } => StepSchedule::harmonic(alpha0)?,
        ScheduleSpec::Power { alpha0, exponent } => StepSchedule::power(alpha0, exponent)?,
    };
    // Admissibility is a property of the schedule, not of this run's length,
    // so probe it at a fixed long horizon even for short runs.
    schedule.check_admissibility(1_000_000)?;

    let epsilon_max = max_epsilon(&graph, cfg.t)?;
    let params = match cfg.epsilon {
        EpsilonSpec::Value(e) => ProtocolParams::new(cfg.t, e, schedule)?,
        EpsilonSpec::Auto(_) => ProtocolParams::new(cfg.t, 0.5 * epsilon_max, schedule)?,
    };
    params.validate_for(&graph)?;

    // Even compare mode runs a surplus-on leg, so M is assembled and guard
    // checked for every mode before any stepping.
    let system = {
        let sm = build_system_matrix(&graph, &surplus, &params)?;
        sm.check_spectral_guard()?;
        Some(sm)
    };

    let initial = build_initial(&cfg.initial, n, cfg.dim, cfg.seed)?;
    if !(cfg.tolerances.tol_c > 0.0 && cfg.tolerances.tol_y > 0.0 && cfg.tolerances.tol_q > 0.0) {
        return Err(CliError::Parse("tolerances must be positive".into()));
    }
    if !(cfg.tolerances.guard > 0.0) {
        return Err(CliError::Parse("guard bound must be positive".into()));
    }

    Ok(Resolved { graph, surplus, family, params, initial, system, epsilon_max })
}

/// Reads and parses a config file, validates it end to end, and returns it
/// with `"auto"` epsilon materialized as the resolved number.
pub fn parse_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: SimConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let resolved = resolve(&cfg)?;
    cfg.epsilon = EpsilonSpec::Value(resolved.params.epsilon);
    Ok(cfg)
}
