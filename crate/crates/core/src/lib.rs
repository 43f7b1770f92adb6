//! Simulation and analysis of Echo-CGC, a Byzantine-tolerant distributed
//! gradient descent protocol for single-hop radio networks.
//!
//! Workers transmit in fixed TDMA slots. Every worker overhears the raw
//! gradients sent before its slot, and when its own gradient lies close to
//! their span it sends a short *echo* (a norm ratio, coefficients and ids)
//! instead of `d` scalars. The server rebuilds every gradient, clips the
//! largest norms with the comparative gradient clipping (CGC) filter, and
//! takes a gradient step.
//!
//! Modules:
//!
//! * [`geometry`]: vectors, the incremental span basis and least-squares echo projection.
//! * [`cost`]: the strongly convex quadratic cost and the gradient noise model.
//! * [`protocol`]: workers, server, CGC filter, adversaries and the round engine.
//! * [`theory`]: closed-form convergence and communication constants.
//! * [`accounting`]: bit counts and communication ratios.
//! * [`config`] and [`runner`]: TOML configuration, replicas, sweeps and CSV output.
//!
//! ```
//! use echo_cgc::config::RunConfig;
//! use echo_cgc::runner::Experiment;
//!
//! let config = RunConfig { n: 10, f: 1, d: 5, sigma: 0.0, rounds: 20, ..RunConfig::default() };
//! let exp = Experiment::new(&config).unwrap();
//! let metrics = exp.run_replica(0).unwrap();
//! let last = metrics.last().unwrap();
//! assert!(last.next_distance_sq < 1e-3 * metrics[0].distance_sq);
//! // without noise only the first worker sends a raw gradient
//! assert_eq!(last.raw_count, 1);
//! ```

// Range checks are written `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod config;
pub mod cost;
pub mod geometry;
pub mod protocol;
pub mod runner;
pub mod theory;

pub use accounting::{CostModel, RoundMetrics};
pub use config::RunConfig;
pub use cost::{NoiseModel, QuadraticCost, SpectrumMode};
pub use geometry::{DenseVector, GradientBasis};
pub use protocol::{Adversary, AdversaryKind, Message, ProtocolParams, Simulation};
pub use runner::Experiment;
