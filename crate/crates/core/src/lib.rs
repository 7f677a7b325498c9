//! Simulation of GPU sharing regimes (time slicing, MPS, MIG and green
//! contexts) for periodic DNN inference workloads.
//!
//! The crate models the partitioning rules of each regime, calibrates a
//! roofline latency model per DNN, simulates several periodic processes
//! sharing one GPU under DVFS, and drives the maximum-IMS search and the
//! isolation benchmark on top of that simulator.

// Range checks are written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod partition;
pub mod report;
pub mod search;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use partition::{ArchClass, DeviceRegistry, GpuSpec, Partition, PartitionPlan, Regime, Violation};
pub use sim::{run_simulation, ProcessSpec, Role, SimConfig, SimDuration, SimResult};
pub use workload::{Model, ModelProfile, ProfileSet};
