//! Deterministic discrete-event simulator for inference processes sharing a GPU.
//!
//! Each process issues inferences strictly periodically at `1 / target_ims`.
//! An inference whose completion lands after `issue + 1 / target_ims` is a
//! timeout; it still runs to completion. Running inferences progress at a
//! rate set by the current allocation (SMs, bandwidth share, clock,
//! interference), and rates are re-derived at every event.

pub(crate) mod engine;
pub mod power;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{GpuSpec, PartitionPlan};
use crate::workload::{Model, ProfileSet};

pub use power::{power_step, temp_proxy_step, DvfsGovernor, DvfsParams, ThermalParams};

/// A completion later than its deadline by more than this counts as a miss.
/// Completion exactly at the deadline is met.
pub const DEADLINE_TOL_S: f64 = 1e-9;

pub fn misses_deadline(completion_s: f64, deadline_s: f64) -> bool {
    completion_s > deadline_s + DEADLINE_TOL_S
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Fixed,
    Adjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub id: u32,
    pub model: Model,
    pub target_ims: u32,
    /// Bound partition; required under MIG and GC, absent otherwise.
    #[serde(default)]
    pub partition: Option<u32>,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimDuration {
    /// Every process issues exactly this many inferences.
    Inferences(u64),
    /// Processes issue while `issue_time < horizon` seconds.
    Horizon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub gpu: GpuSpec,
    pub plan: PartitionPlan,
    pub profiles: ProfileSet,
    pub processes: Vec<ProcessSpec>,
    pub duration: SimDuration,
    pub seed: u64,
    /// MIG latency inflation while another instance is executing.
    pub mig_residual_eps: f64,
    /// MPS latency inflation while another client is executing.
    pub mps_interference: f64,
    pub dvfs: DvfsParams,
    pub thermal: ThermalParams,
    pub telemetry_period_s: f64,
    /// How long to keep running after the last issue for in-flight work.
    pub drain_s: f64,
    /// Replaces every profile's jitter bound when set (0 disables noise).
    pub jitter_override: Option<f64>,
    pub record_events: bool,
}

impl SimConfig {
    pub const DEFAULT_MIG_EPS: f64 = 0.005;
    pub const DEFAULT_MPS_INTERFERENCE: f64 = 0.01;
    pub const DEFAULT_TELEMETRY_PERIOD_S: f64 = 0.01;
    pub const DEFAULT_DRAIN_S: f64 = 1.0;

    /// Config with device-derived DVFS/thermal defaults and no processes.
    pub fn new(gpu: GpuSpec, plan: PartitionPlan, profiles: ProfileSet) -> Self {
        let dvfs = DvfsParams::for_device(&gpu);
        let thermal = ThermalParams::for_device(&gpu);
        SimConfig {
            gpu,
            plan,
            profiles,
            processes: Vec::new(),
            duration: SimDuration::Inferences(1000),
            seed: 0,
            mig_residual_eps: Self::DEFAULT_MIG_EPS,
            mps_interference: Self::DEFAULT_MPS_INTERFERENCE,
            dvfs,
            thermal,
            telemetry_period_s: Self::DEFAULT_TELEMETRY_PERIOD_S,
            drain_s: Self::DEFAULT_DRAIN_S,
            jitter_override: None,
            record_events: false,
        }
    }

    pub fn with_process(mut self, p: ProcessSpec) -> Self {
        self.processes.push(p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gpu.validate()?;
        self.plan.validate(&self.gpu)?;
        self.dvfs.validate(&self.gpu)?;
        if self.processes.is_empty() {
            return Err(Error::config("no processes"));
        }
        match self.duration {
            SimDuration::Inferences(0) => return Err(Error::config("duration must be >= 1 inference")),
            SimDuration::Horizon(h) if !(h > 0.0 && h.is_finite()) => {
                return Err(Error::config("horizon must be positive"))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.mig_residual_eps) {
            return Err(Error::config("mig_residual_eps must lie in [0, 1)"));
        }
        if !(self.mps_interference >= 0.0) {
            return Err(Error::config("mps_interference must be >= 0"));
        }
        if !(self.telemetry_period_s > 0.0) || !(self.drain_s >= 0.0) {
            return Err(Error::config("telemetry period must be > 0 and drain >= 0"));
        }
        if !(self.thermal.tau_s > 0.0) {
            return Err(Error::config("thermal tau must be > 0"));
        }
        if let Some(j) = self.jitter_override {
            if !(0.0..1.0).contains(&j) {
                return Err(Error::config("jitter override must lie in [0, 1)"));
            }
        }
        let mut ids: Vec<u32> = self.processes.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate process id"));
        }
        let partitioned = self.plan.regime.is_partitioned();
        let mut bound: Vec<u32> = Vec::new();
        for p in &self.processes {
            if p.target_ims == 0 {
                return Err(Error::config(format!("process {}: target_ims must be >= 1", p.id)));
            }
            let profile = self.profiles.get(p.model)?;
            if profile.platform != self.gpu.name {
                return Err(Error::config(format!(
                    "profile for {} is calibrated for `{}`, not `{}`",
                    p.model, profile.platform, self.gpu.name
                )));
            }
            match (partitioned, p.partition) {
                (true, None) => {
                    return Err(Error::config(format!(
                        "process {} needs a partition under {}",
                        p.id, self.plan.regime
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::config(format!(
                        "process {} is bound to a partition, but {} has none",
                        p.id, self.plan.regime
                    )))
                }
                (true, Some(part)) => {
                    if self.plan.partition(part).is_none() {
                        return Err(Error::config(format!("process {}: unknown partition {part}", p.id)));
                    }
                    if bound.contains(&part) {
                        return Err(Error::config(format!("partition {part} is bound to two processes")));
                    }
                    bound.push(part);
                }
                (false, None) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessStats {
    pub id: u32,
    pub role: Role,
    pub model: Model,
    pub target_ims: u32,
    pub issued: u64,
    pub completed: u64,
    /// Late completions plus in-flight inferences already past their deadline.
    pub timeouts: u64,
    pub late_completions: u64,
    pub in_flight_at_end: u64,
    pub mean_response_s: f64,
    pub max_response_s: f64,
}

impl ProcessStats {
    pub fn timeout_pct(&self) -> f64 {
        if self.issued == 0 {
            0.0
        } else {
            100.0 * self.timeouts as f64 / self.issued as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t_s: f64,
    pub power_w: f64,
    pub freq_hz: f64,
    pub temp_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_issue: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub process: u32,
    pub deadline: f64,
    pub timeout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub processes: Vec<ProcessStats>,
    pub telemetry: Vec<TelemetrySample>,
    /// Times of throttle events (telemetry tick at which the clock dropped).
    pub throttle_events: Vec<f64>,
    pub end_time_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventRecord>,
}

impl SimResult {
    pub fn process(&self, id: u32) -> Option<&ProcessStats> {
        self.processes.iter().find(|p| p.id == id)
    }

    pub fn avg_power_w(&self) -> f64 {
        mean(self.telemetry.iter().map(|s| s.power_w))
    }

    pub fn mean_freq_hz(&self) -> f64 {
        mean(self.telemetry.iter().map(|s| s.freq_hz))
    }

    /// Canonical serialization used for byte-level determinism checks.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }

    pub fn telemetry_csv(&self) -> String {
        let mut out = String::from("t_s,power_w,freq_hz,temp_c\n");
        for s in &self.telemetry {
            let _ = writeln!(out, "{:.4},{:.4},{:.0},{:.4}", s.t_s, s.power_w, s.freq_hz, s.temp_c);
        }
        out
    }

    /// One JSON object per line.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs one simulation to completion. Fails only on configuration errors.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    Ok(engine::Engine::new(config)?.run())
}
