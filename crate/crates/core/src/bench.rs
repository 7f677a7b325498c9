//! Contention experiments: a fixed process (or three) at its maximum IMS
//! next to an adjusted process whose rate sweeps upwards, plus solo
//! partition-size sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{gc_valid_sizes, DeviceRegistry, GpuSpec, PartitionPlan, Regime};
use crate::search::{search_max_frequency, SearchConfig, SimExecutor};
use crate::sim::{run_simulation, ProcessSpec, Role, SimConfig, SimDuration, SimResult};
use crate::workload::{reference_platform, Model, ProfileSet};

/// Clock the AGX is pinned to when mimicking the Nano.
pub const EQUIVALENCE_FREQ_HZ: f64 = 1.02e9;
/// Green Context size every process gets in equivalence mode.
pub const EQUIVALENCE_SMS: u32 = 4;
/// The adjusted sweep goes this far past the maximum in equivalence mode.
pub const EQUIVALENCE_SWEEP_FACTOR: f64 = 1.25;
/// Memory each allocated SM adds on top of the model footprint.
pub const MIB_PER_SM: f64 = 8.0;
pub const DEFAULT_MIG_OVERHEAD: f64 = 0.02;

/// A device together with profiles calibrated for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Platform {
    pub gpu: GpuSpec,
    pub profiles: ProfileSet,
}

impl Platform {
    /// Looks `name` up and calibrates its profiles, porting them from the
    /// reference platform when the device has no measurements of its own.
    pub fn load(registry: &DeviceRegistry, name: &str) -> Result<Self> {
        let gpu = registry.get(name)?.clone();
        let reference = match reference_platform(name) {
            Some(r) if r != name => Some(registry.get(r)?.clone()),
            _ => None,
        };
        let profiles = ProfileSet::calibrate(&gpu, reference.as_ref())?;
        Ok(Platform { gpu, profiles })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        Self::load(&DeviceRegistry::builtin(), name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedIms {
    #[default]
    Auto,
    Value(u32),
}

impl Serialize for FixedIms {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FixedIms::Auto => s.serialize_str("auto"),
            FixedIms::Value(v) => s.serialize_u32(*v),
        }
    }
}

impl<'de> Deserialize<'de> for FixedIms {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("fixed_ims must be >= 1")),
            Raw::Num(v) => Ok(FixedIms::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(FixedIms::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "fixed_ims must be an integer or \"auto\", got `{t}`"
            ))),
        }
    }
}

fn default_n() -> u32 {
    2
}

fn default_inferences() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub platform: String,
    pub regime: Regime,
    pub model: Model,
    #[serde(default = "default_n")]
    pub n_processes: u32,
    #[serde(default)]
    pub fixed_ims: FixedIms,
    /// Adjusted-process rates; defaults to `1..=max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_sweep: Option<Vec<u32>>,
    #[serde(default = "default_inferences")]
    pub inferences_per_point: u64,
    #[serde(default)]
    pub seed: u64,
    /// Pin the clock to 1.02 GHz and give every process 4 SMs.
    #[serde(default)]
    pub agx_equivalence: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mig_residual_eps: Option<f64>,
    /// Explicit partition sizes (GPCs for MIG, SMs for GC), one per process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<u32>>,
}

impl ExperimentSpec {
    pub fn new(platform: &str, regime: Regime, model: Model) -> Self {
        ExperimentSpec {
            platform: platform.to_string(),
            regime,
            model,
            n_processes: 2,
            fixed_ims: FixedIms::Auto,
            adjusted_sweep: None,
            inferences_per_point: 1000,
            seed: 0,
            agx_equivalence: false,
            mig_residual_eps: None,
            partitions: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.n_processes, 2 | 4) {
            return Err(Error::config(format!("n_processes must be 2 or 4, got {}", self.n_processes)));
        }
        if self.inferences_per_point == 0 {
            return Err(Error::config("inferences_per_point must be >= 1"));
        }
        if let Some(sweep) = &self.adjusted_sweep {
            if sweep.is_empty() || sweep.contains(&0) {
                return Err(Error::config("adjusted_sweep must be non-empty with rates >= 1"));
            }
            if sweep.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("adjusted_sweep must be strictly ascending"));
            }
        }
        if let Some(p) = &self.partitions {
            if !self.regime.is_partitioned() {
                return Err(Error::config(format!("{} takes no partition sizes", self.regime)));
            }
            if p.len() != self.n_processes as usize {
                return Err(Error::config(format!(
                    "{} partition sizes given for {} processes",
                    p.len(),
                    self.n_processes
                )));
            }
        }
        if self.agx_equivalence && self.regime == Regime::Mig {
            return Err(Error::config("equivalence mode uses Green Context sized partitions, not MIG"));
        }
        Ok(())
    }

    fn sim_template(&self, platform: &Platform, plan: PartitionPlan) -> SimConfig {
        let mut cfg = SimConfig::new(platform.gpu.clone(), plan, platform.profiles.clone());
        if self.agx_equivalence {
            cfg.dvfs = cfg.dvfs.pinned(EQUIVALENCE_FREQ_HZ);
        }
        if let Some(eps) = self.mig_residual_eps {
            cfg.mig_residual_eps = eps;
        }
        cfg.seed = self.seed;
        cfg
    }
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub adjusted_ims: u32,
    /// Mean over the fixed processes.
    pub fixed_timeout_pct: f64,
    pub adjusted_timeout_pct: f64,
    pub avg_power_w: f64,
    pub throttle_events: u64,
    pub mean_freq_hz: f64,
    pub fixed_timeouts: u64,
    pub fixed_issued: u64,
    pub adjusted_timeouts: u64,
    pub adjusted_issued: u64,
}

impl ResultRow {
    pub const HEADER: &'static str = "adjusted_ims,fixed_timeout_pct,adjusted_timeout_pct,avg_power_w,throttle_events,mean_freq_hz,fixed_timeouts,fixed_issued,adjusted_timeouts,adjusted_issued";

    pub fn from_result(adjusted_ims: u32, r: &SimResult) -> Self {
        let fixed: Vec<_> = r.processes.iter().filter(|p| p.role == Role::Fixed).collect();
        let adjusted: Vec<_> = r.processes.iter().filter(|p| p.role == Role::Adjusted).collect();
        let fixed_timeout_pct = fixed.iter().map(|p| p.timeout_pct()).sum::<f64>() / fixed.len().max(1) as f64;
        let adjusted_timeout_pct =
            adjusted.iter().map(|p| p.timeout_pct()).sum::<f64>() / adjusted.len().max(1) as f64;
        ResultRow {
            adjusted_ims,
            fixed_timeout_pct,
            adjusted_timeout_pct,
            avg_power_w: r.avg_power_w(),
            throttle_events: r.throttle_events.len() as u64,
            mean_freq_hz: r.mean_freq_hz(),
            fixed_timeouts: fixed.iter().map(|p| p.timeouts).sum(),
            fixed_issued: fixed.iter().map(|p| p.issued).sum(),
            adjusted_timeouts: adjusted.iter().map(|p| p.timeouts).sum(),
            adjusted_issued: adjusted.iter().map(|p| p.issued).sum(),
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.4},{:.4},{:.4},{},{:.0},{},{},{},{}",
            self.adjusted_ims,
            self.fixed_timeout_pct,
            self.adjusted_timeout_pct,
            self.avg_power_w,
            self.throttle_events,
            self.mean_freq_hz,
            self.fixed_timeouts,
            self.fixed_issued,
            self.adjusted_timeouts,
            self.adjusted_issued
        )
    }

    pub fn parse_csv_line(line: &str) -> std::result::Result<Self, String> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 10 {
            return Err(format!("expected 10 columns, found {}", f.len()));
        }
        fn num<T: std::str::FromStr>(s: &str, col: &str) -> std::result::Result<T, String> {
            s.parse().map_err(|_| format!("bad {col} value `{s}`"))
        }
        Ok(ResultRow {
            adjusted_ims: num(f[0], "adjusted_ims")?,
            fixed_timeout_pct: num(f[1], "fixed_timeout_pct")?,
            adjusted_timeout_pct: num(f[2], "adjusted_timeout_pct")?,
            avg_power_w: num(f[3], "avg_power_w")?,
            throttle_events: num(f[4], "throttle_events")?,
            mean_freq_hz: num(f[5], "mean_freq_hz")?,
            fixed_timeouts: num(f[6], "fixed_timeouts")?,
            fixed_issued: num(f[7], "fixed_issued")?,
            adjusted_timeouts: num(f[8], "adjusted_timeouts")?,
            adjusted_issued: num(f[9], "adjusted_issued")?,
        })
    }
}

/// A finished sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub fixed_ims: u32,
    pub rows: Vec<ResultRow>,
}

impl Experiment {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(ResultRow::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv_line());
            out.push('\n');
        }
        out
    }
}

/// Partition plan for `n` equal processes under the spec's regime.
pub fn experiment_plan(spec: &ExperimentSpec, gpu: &GpuSpec) -> Result<PartitionPlan> {
    let n = spec.n_processes;
    if let Some(sizes) = &spec.partitions {
        return match spec.regime {
            Regime::Mig => PartitionPlan::mig(gpu, sizes),
            Regime::Gc => PartitionPlan::gc(gpu, sizes),
            other => Err(Error::config(format!("{other} takes no partition sizes"))),
        };
    }
    match spec.regime {
        Regime::StandAlone => Ok(PartitionPlan::standalone(gpu)),
        Regime::Mps => Ok(PartitionPlan::mps(gpu)),
        Regime::Mig => {
            if !gpu.supports_mig {
                return Err(Error::UnsupportedRegime {
                    device: gpu.name.clone(),
                    regime: Regime::Mig,
                });
            }
            let size = gpu
                .mig_sizes
                .iter()
                .copied()
                .filter(|&g| g * n <= gpu.gpc_count)
                .max()
                .ok_or_else(|| Error::config(format!("{} cannot host {n} MIG instances", gpu.name)))?;
            PartitionPlan::mig(gpu, &vec![size; n as usize])
        }
        Regime::Gc => {
            let size = EQUIVALENCE_SMS;
            let valid = gc_valid_sizes(gpu)?;
            if !valid.contains(&size) || size * n > gpu.total_sms {
                return Err(Error::config(format!(
                    "{} cannot host {n} non-overlapping {size}-SM green contexts",
                    gpu.name
                )));
            }
            PartitionPlan::gc(gpu, &vec![size; n as usize])
        }
    }
}

/// The rate the fixed processes run at: the spec's value, or a search in
/// the allocation one of `n` equal processes would get.
pub fn resolve_fixed_ims(spec: &ExperimentSpec, platform: &Platform, search: &SearchConfig) -> Result<u32> {
    spec.validate()?;
    if let FixedIms::Value(v) = spec.fixed_ims {
        return Ok(v);
    }
    let gpu = &platform.gpu;
    let mut exec = if spec.agx_equivalence {
        let plan = PartitionPlan::gc(gpu, &[EQUIVALENCE_SMS])?;
        SimExecutor::from_template(spec.sim_template(platform, plan), spec.model)?
    } else {
        SimExecutor::solo(gpu, &platform.profiles, spec.model, spec.regime, spec.seed)?
    };
    Ok(search_max_frequency(&mut exec, search)?.f)
}

/// Adjusted rates swept for a given fixed rate.
pub fn sweep_points(spec: &ExperimentSpec, fixed_ims: u32) -> Vec<u32> {
    if let Some(s) = &spec.adjusted_sweep {
        return s.clone();
    }
    let top = if spec.agx_equivalence {
        (f64::from(fixed_ims) * EQUIVALENCE_SWEEP_FACTOR).ceil() as u32
    } else {
        fixed_ims
    };
    (1..=top.max(1)).collect()
}

/// Config of one sweep point; `index` is the point's position in the sweep.
pub fn point_config(spec: &ExperimentSpec, platform: &Platform, fixed_ims: u32, adjusted_ims: u32, index: usize) -> Result<SimConfig> {
    let plan = experiment_plan(spec, &platform.gpu)?;
    let partitioned = plan.regime.is_partitioned();
    let mut cfg = spec.sim_template(platform, plan);
    let n = spec.n_processes;
    for id in 0..n {
        let adjusted = id == n - 1;
        cfg.processes.push(ProcessSpec {
            id,
            model: spec.model,
            target_ims: if adjusted { adjusted_ims } else { fixed_ims },
            partition: partitioned.then_some(id),
            role: if adjusted { Role::Adjusted } else { Role::Fixed },
        });
    }
    cfg.duration = SimDuration::Horizon(spec.inferences_per_point as f64 / f64::from(fixed_ims));
    cfg.seed = spec.seed ^ index as u64;
    Ok(cfg)
}

pub fn run_point(spec: &ExperimentSpec, platform: &Platform, fixed_ims: u32, adjusted_ims: u32, index: usize) -> Result<SimResult> {
    run_simulation(&point_config(spec, platform, fixed_ims, adjusted_ims, index)?)
}

/// Runs every sweep point as an independent simulation.
pub fn run_sweep(spec: &ExperimentSpec, platform: &Platform, search: &SearchConfig) -> Result<Experiment> {
    spec.validate()?;
    if spec.platform != platform.gpu.name {
        return Err(Error::config(format!(
            "experiment targets `{}` but platform is `{}`",
            spec.platform, platform.gpu.name
        )));
    }
    experiment_plan(spec, &platform.gpu)?;
    let fixed_ims = resolve_fixed_ims(spec, platform, search)?;
    let points = sweep_points(spec, fixed_ims);
    let run = |(i, &adj): (usize, &u32)| -> Result<ResultRow> {
        let r = run_point(spec, platform, fixed_ims, adj, i)?;
        Ok(ResultRow::from_result(adj, &r))
    };
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        points.par_iter().enumerate().map(run).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows = points.iter().enumerate().map(run).collect::<Result<Vec<_>>>()?;
    Ok(Experiment {
        spec: spec.clone(),
        fixed_ims,
        rows,
    })
}

pub fn run_two_process_sweep(spec: &ExperimentSpec, platform: &Platform, search: &SearchConfig) -> Result<Experiment> {
    if spec.n_processes != 2 {
        return Err(Error::config("two-process sweep needs n_processes = 2"));
    }
    run_sweep(spec, platform, search)
}

pub fn run_four_process_sweep(spec: &ExperimentSpec, platform: &Platform, search: &SearchConfig) -> Result<Experiment> {
    if spec.n_processes != 4 {
        return Err(Error::config("four-process sweep needs n_processes = 4"));
    }
    run_sweep(spec, platform, search)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactOptions {
    pub horizon_s: f64,
    pub mig_overhead: f64,
    pub mib_per_sm: f64,
    pub seed: u64,
}

impl Default for ImpactOptions {
    fn default() -> Self {
        ImpactOptions {
            horizon_s: 5.0,
            mig_overhead: DEFAULT_MIG_OVERHEAD,
            mib_per_sm: MIB_PER_SM,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    /// GPCs for MIG, SMs otherwise.
    pub size: u32,
    pub sms: u32,
    pub throughput: f64,
    pub mem_mib: f64,
    pub avg_power_w: f64,
}

impl ImpactRow {
    pub const HEADER: &'static str = "size,sms,throughput,mem_mib,avg_power_w";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.3},{:.1},{:.4}",
            self.size, self.sms, self.throughput, self.mem_mib, self.avg_power_w
        )
    }
}

/// One saturated solo process per partition size. Sizes are GPCs under MIG
/// and SMs under GC; StandAlone and MPS take the whole device whatever the
/// size says.
pub fn partition_impact_sweep(
    platform: &Platform,
    model: Model,
    regime: Regime,
    sizes: &[u32],
    opts: &ImpactOptions,
) -> Result<Vec<ImpactRow>> {
    if !(opts.horizon_s > 0.0) || !(0.0..1.0).contains(&opts.mig_overhead) || !(opts.mib_per_sm >= 0.0) {
        return Err(Error::config("impact options out of range"));
    }
    let gpu = &platform.gpu;
    let profile = platform.profiles.get(model)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let plan = match regime {
            Regime::StandAlone => PartitionPlan::standalone(gpu),
            Regime::Mps => PartitionPlan::mps(gpu),
            Regime::Mig => {
                if gpu.supports_mig && !gpu.mig_sizes.contains(&size) {
                    return Err(Error::InvalidSize {
                        device: gpu.name.clone(),
                        size,
                        valid: gpu.mig_sizes.clone(),
                    });
                }
                PartitionPlan::mig(gpu, &[size])?
            }
            Regime::Gc => {
                let valid = gc_valid_sizes(gpu)?;
                if !valid.contains(&size) {
                    return Err(Error::InvalidSize {
                        device: gpu.name.clone(),
                        size,
                        valid,
                    });
                }
                PartitionPlan::gc(gpu, &[size])?
            }
        };
        let part = &plan.partitions[0];
        let sms = crate::partition::partition_sm_count(regime, part, gpu);
        let bw = if regime == Regime::Mig { part.mem_share } else { 1.0 };
        // Issue at twice the solo rate so the process never idles.
        let latency = profile.latency(f64::from(sms), gpu.f_max_hz, bw);
        let ims = (2.0 / latency).ceil() as u32;
        let mut cfg = SimConfig::new(gpu.clone(), plan.clone(), platform.profiles.clone());
        cfg.processes.push(ProcessSpec {
            id: 0,
            model,
            target_ims: ims.max(1),
            partition: regime.is_partitioned().then_some(part.id),
            role: Role::Fixed,
        });
        cfg.duration = SimDuration::Horizon(opts.horizon_s);
        cfg.drain_s = 0.0;
        cfg.seed = opts.seed;
        let r = run_simulation(&cfg)?;
        let mut throughput = r.processes[0].completed as f64 / opts.horizon_s;
        if regime == Regime::Mig {
            throughput *= 1.0 - opts.mig_overhead;
        }
        rows.push(ImpactRow {
            size,
            sms,
            throughput,
            mem_mib: profile.footprint_mib + opts.mib_per_sm * f64::from(sms),
            avg_power_w: r.avg_power_w(),
        });
    }
    Ok(rows)
}
