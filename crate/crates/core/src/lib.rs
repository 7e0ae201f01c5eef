//! Simulation and design library for coupled-oscillator networks built from
//! charge-pump PLLs.
//!
//! Two fidelity levels share one set of domain types:
//!
//! - [`kuramoto`]: the delayed Kuramoto model over a clustered [`topology`].
//! - [`behavioral`]: square-wave VCOs, phase comparators, charge pumps and
//!   loop filters stepped on a fixed time grid, coupled through the parallel
//!   gate scheme or the counter-driven multiplexed scheme.
//!
//! [`pll`] synthesizes and analyzes the linear type-2 third-order loop, and
//! [`analysis`] computes synchronization metrics from traces.

pub mod analysis;
pub mod behavioral;
pub mod error;
pub mod history;
pub mod kuramoto;
pub mod phase;
pub mod pll;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
pub use history::HistoryBuffer;
pub use kuramoto::{HistoryInit, KuramotoSystem};
pub use phase::{wrap_phase, CouplingConfig, Normalization, OscillatorParams, PhaseVector};
pub use topology::{build_clustered, ClusterSpec, InterCoupling, IntraCoupling, Topology};
pub use trace::SimTrace;
