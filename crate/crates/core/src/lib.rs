//! Co-primary spectrum sharing (CoPSS) simulator for multi-operator indoor
//! small cell networks.
//!
//! The crate is organised the way a run flows:
//!
//! - [`topology`] builds buildings, small cells, users and the SBS
//!   communication graph.
//! - [`channel`] turns geometry into per-PRB SINR (path loss, walls,
//!   shadowing, frequency-selective fading, MRC, EVM).
//! - [`link`] covers CQI estimation with and without inter-operator
//!   coordination, MCS selection and HARQ with chase combining.
//! - [`scheduler`] is the per-SBS proportional fair scheduler and the
//!   bandwidth-utilisation (BWU) bookkeeping.
//! - [`sharing`] holds the four PRB sharing algorithms.
//! - [`traffic`] generates full buffer / constant rate / multimedia demand.
//! - [`engine`] drives the TTI loop over drops.
//! - [`metrics`] aggregates throughput samples; [`cli`] wraps it all.

pub mod channel;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod link;
pub mod metrics;
pub mod rng;
pub mod scheduler;
pub mod sharing;
pub mod topology;
pub mod traffic;

pub use config::{CqiMode, LayoutKind, ScenarioConfig};
pub use engine::{run, Algorithm, RunParams};
pub use error::{Error, Result};
pub use metrics::MetricsStore;
pub use topology::Scenario;

/// Length of one transmission time interval in seconds.
pub const TTI_SECONDS: f64 = 1e-3;
