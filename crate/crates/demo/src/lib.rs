//! Browser bindings: JSON in, JSON out.
//!
//! The `*_json` functions are plain Rust so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors into JS exceptions.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use gpushare::bench::{self, ExperimentSpec, FixedIms, Platform};
use gpushare::partition::{enumerate_gc_layouts, gc_valid_sizes};
use gpushare::search::SearchConfig;
use gpushare::sim::TelemetrySample;
use gpushare::{Model, PartitionPlan, Regime};

/// Sweep request. Omitted fields take the CLI defaults.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub device: String,
    pub regime: Regime,
    pub model: Model,
    #[serde(default)]
    pub fixed_ims: Option<u32>,
    #[serde(default)]
    pub n_processes: Option<u32>,
    #[serde(default)]
    pub inferences_per_point: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub agx_equivalence: bool,
}

impl SweepRequest {
    fn spec(&self) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(&self.device, self.regime, self.model);
        if let Some(f) = self.fixed_ims {
            spec.fixed_ims = FixedIms::Value(f);
        }
        if let Some(n) = self.n_processes {
            spec.n_processes = n;
        }
        if let Some(n) = self.inferences_per_point {
            spec.inferences_per_point = n;
        }
        spec.seed = self.seed;
        spec.agx_equivalence = self.agx_equivalence;
        spec
    }
}

#[derive(Debug, Serialize)]
pub struct TelemetryReply {
    pub fixed_ims: u32,
    pub adjusted_ims: u32,
    pub fixed_timeout_pct: f64,
    pub throttle_events: Vec<f64>,
    pub samples: Vec<TelemetrySample>,
}

#[derive(Debug, Serialize)]
pub struct PartitionOption {
    /// GPCs for MIG, SMs for GC.
    pub size: u32,
    pub sms: u32,
    pub max_concurrent: u32,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Runs a full contention sweep and returns the experiment as JSON.
pub fn run_sweep_json(request: &str) -> Result<String, String> {
    let req: SweepRequest = serde_json::from_str(request).map_err(err)?;
    let platform = Platform::builtin(&req.device).map_err(err)?;
    let exp = bench::run_sweep(&req.spec(), &platform, &SearchConfig::default()).map_err(err)?;
    serde_json::to_string(&exp).map_err(err)
}

/// Runs the sweep point at `adjusted_ims` and returns its telemetry.
pub fn run_telemetry_json(request: &str, adjusted_ims: u32) -> Result<String, String> {
    let req: SweepRequest = serde_json::from_str(request).map_err(err)?;
    let platform = Platform::builtin(&req.device).map_err(err)?;
    let spec = req.spec();
    let fixed = bench::resolve_fixed_ims(&spec, &platform, &SearchConfig::default()).map_err(err)?;
    let index = bench::sweep_points(&spec, fixed)
        .iter()
        .position(|&a| a == adjusted_ims)
        .unwrap_or(0);
    let r = bench::run_point(&spec, &platform, fixed, adjusted_ims, index).map_err(err)?;
    let row = bench::ResultRow::from_result(adjusted_ims, &r);
    let reply = TelemetryReply {
        fixed_ims: fixed,
        adjusted_ims,
        fixed_timeout_pct: row.fixed_timeout_pct,
        throttle_events: r.throttle_events,
        samples: r.telemetry,
    };
    serde_json::to_string(&reply).map_err(err)
}

/// Valid partition sizes of `device` under `regime`.
pub fn list_partitions_json(device: &str, regime: &str) -> Result<String, String> {
    let platform = Platform::builtin(device).map_err(err)?;
    let gpu = &platform.gpu;
    let regime: Regime = regime.parse().map_err(err)?;
    let options = match regime {
        Regime::StandAlone | Regime::Mps => vec![PartitionOption {
            size: gpu.total_sms,
            sms: gpu.total_sms,
            max_concurrent: 1,
        }],
        Regime::Mig => {
            if !gpu.supports_mig {
                return Err(format!("{} does not support mig", gpu.name));
            }
            gpu.mig_sizes
                .iter()
                .map(|&g| PartitionOption {
                    size: g,
                    sms: g * gpu.sms_per_gpc(),
                    max_concurrent: (1..=gpu.gpc_count / g)
                        .rev()
                        .find(|&k| PartitionPlan::mig(gpu, &vec![g; k as usize]).is_ok())
                        .unwrap_or(0),
                })
                .collect()
        }
        Regime::Gc => gc_valid_sizes(gpu)
            .map_err(err)?
            .into_iter()
            .map(|s| {
                Ok(PartitionOption {
                    size: s,
                    sms: s,
                    max_concurrent: enumerate_gc_layouts(gpu, s).map_err(err)?,
                })
            })
            .collect::<Result<_, String>>()?,
    };
    serde_json::to_string(&options).map_err(err)
}

#[wasm_bindgen]
pub fn run_sweep(request: &str) -> Result<String, JsValue> {
    run_sweep_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_telemetry(request: &str, adjusted_ims: u32) -> Result<String, JsValue> {
    run_telemetry_json(request, adjusted_ims).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn list_partitions(device: &str, regime: &str) -> Result<String, JsValue> {
    list_partitions_json(device, regime).map_err(|e| JsValue::from_str(&e))
}
