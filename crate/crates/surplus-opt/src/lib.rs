//! Distributed second-order optimization over unbalanced directed networks.
//!
//! A team of double-integrator agents minimizes Σ_i f_i(x) while talking
//! over a strongly connected digraph whose weights need not be balanced.
//! Plain consensus+gradient schemes converge to the wrong point on such
//! graphs: the stationary distribution of the weight matrix skews the
//! effective objective. Here every agent also carries a surplus variable
//! that re-captures the mass the unbalanced mixing loses and feeds it back
//! through a column-stochastic companion matrix, which restores convergence
//! to the true team optimum under diminishing, clipped gradient steps.
//!
//! The crate provides the communication graph machinery ([`graph`]), the
//! objective families and centralized oracle ([`objective`]), the protocol
//! itself with an independent stacked-iteration engine for cross-checking
//! ([`protocol`]), and empirical claim-checkers for the geometric mixing
//! rate and convergence behavior ([`analysis`]). Everything is generic over
//! the floating-point scalar through [`Scalar`]; the aliases below pin f64.
//!
//! ```
//! use surplus_opt::graph::{build_surplus_matrix, generate, SurplusScheme};
//! use surplus_opt::linalg::Mat;
//! use surplus_opt::protocol::{self, ProtocolParams, RunSpec, StepSchedule};
//! use surplus_opt::Objectives;
//!
//! let g = generate::ring(2, &[0.4, 0.4])?;
//! let b = build_surplus_matrix(&g, SurplusScheme::Uniform)?;
//! let f = Objectives::quadratic(vec![
//!     (Mat::from_rows(&[vec![1.0]])?, vec![0.0]),
//!     (Mat::from_rows(&[vec![1.0]])?, vec![2.0]),
//! ])?;
//! let params = ProtocolParams::new(0.5, 0.1, StepSchedule::harmonic(1.0)?)?;
//! let initial = protocol::default_initial_state(2, 1, 7);
//! let mut spec = RunSpec::new(&g, &b, &f, params, initial, 2000);
//! spec.record_stride = 100;
//! let trajectory = protocol::run(&spec)?;
//!
//! let diag = &trajectory.diagnostics;
//! assert!(diag.max_mass_residual.unwrap() <= 1e-10);
//! assert!(diag.max_theta_residual.unwrap() <= 1e-12);
//! let first = &trajectory.points.first().unwrap().metrics;
//! let last = &trajectory.points.last().unwrap().metrics;
//! assert!(last.consensus_error < first.consensus_error / 10.0);
//! # Ok::<(), surplus_opt::Error>(())
//! ```

// Validation deliberately writes `!(x > 0)` instead of `x <= 0`: the former
// also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod objective;
pub mod protocol;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Digraph = graph::WeightedDigraph<f64>;
pub type SurplusWeights = graph::SurplusMatrix<f64>;
pub type Objectives = objective::ObjectiveFamily<f64>;
pub type Optimum = objective::OptimalityOracle<f64>;
pub type Schedule = protocol::StepSchedule<f64>;
pub type Params = protocol::ProtocolParams<f64>;
pub type Swarm = protocol::SwarmState<f64>;
pub type System = protocol::SystemMatrix<f64>;
pub type Metrics = analysis::MetricsRecord<f64>;
pub type Report = analysis::ConvergenceReport<f64>;
pub type Decay = analysis::DecayEstimate<f64>;
