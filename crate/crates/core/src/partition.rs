//! Device topologies and the MIG / Green Context partitioning rules.
//!
//! MIG allocates whole GPCs and splits memory proportionally. Green Contexts
//! allocate SMs subject to an architecture-specific minimum and step, and
//! share the memory system. StandAlone and MPS always see the whole device.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compute-capability family, which fixes the Green Context allocation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchClass {
    A6x,
    A7x,
    A8x,
    A90plus,
}

impl ArchClass {
    pub const ALL: [ArchClass; 4] = [ArchClass::A6x, ArchClass::A7x, ArchClass::A8x, ArchClass::A90plus];
}

impl fmt::Display for ArchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArchClass::A6x => "6.x",
            ArchClass::A7x => "7.x",
            ArchClass::A8x => "8.x",
            ArchClass::A90plus => "9.0+",
        })
    }
}

impl FromStr for ArchClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a6x" | "6.x" | "6" => Ok(ArchClass::A6x),
            "a7x" | "7.x" | "7" => Ok(ArchClass::A7x),
            "a8x" | "8.x" | "8" => Ok(ArchClass::A8x),
            "a90plus" | "9.0+" | "9" => Ok(ArchClass::A90plus),
            other => Err(Error::parse("arch_class", format!("unknown architecture class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "standalone", alias = "stand-alone", alias = "StandAlone")]
    StandAlone,
    #[serde(rename = "mps", alias = "MPS")]
    Mps,
    #[serde(rename = "mig", alias = "MIG")]
    Mig,
    #[serde(rename = "gc", alias = "GC")]
    Gc,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::StandAlone, Regime::Mps, Regime::Mig, Regime::Gc];

    /// Whether processes must be bound to a dedicated partition.
    pub fn is_partitioned(self) -> bool {
        matches!(self, Regime::Mig | Regime::Gc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::StandAlone => "standalone",
            Regime::Mps => "mps",
            Regime::Mig => "mig",
            Regime::Gc => "gc",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standalone" | "stand-alone" | "gpu" => Ok(Regime::StandAlone),
            "mps" => Ok(Regime::Mps),
            "mig" => Ok(Regime::Mig),
            "gc" | "green-context" | "greencontext" => Ok(Regime::Gc),
            other => Err(Error::parse("regime", format!("unknown regime `{other}`"))),
        }
    }
}

fn default_jitter() -> f64 {
    0.01
}

/// Static description of a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuSpec {
    pub name: String,
    pub arch_class: ArchClass,
    pub gpc_count: u32,
    pub tpc_per_gpc: u32,
    pub sm_per_tpc: u32,
    pub total_sms: u32,
    pub f_max_hz: f64,
    pub f_min_hz: f64,
    pub power_cap_w: f64,
    pub idle_power_w: f64,
    /// Memory bandwidth relative to the device the workload profiles were
    /// calibrated on (1.0 = same bandwidth).
    pub mem_bandwidth_rel: f64,
    pub supports_mig: bool,
    pub supports_gc: bool,
    /// Legal MIG instance sizes in GPCs.
    #[serde(default)]
    pub mig_sizes: Vec<u32>,
    /// Upper bound of the multiplicative latency noise, drawn from `[1, 1 + j]`.
    #[serde(default = "default_jitter")]
    pub latency_jitter: f64,
}

impl GpuSpec {
    pub fn a100() -> Self {
        GpuSpec {
            name: "a100".into(),
            arch_class: ArchClass::A8x,
            gpc_count: 7,
            tpc_per_gpc: 8,
            sm_per_tpc: 2,
            total_sms: 112,
            f_max_hz: 1.41e9,
            f_min_hz: 0.21e9,
            power_cap_w: 250.0,
            idle_power_w: 55.0,
            mem_bandwidth_rel: 1.0,
            supports_mig: true,
            supports_gc: true,
            mig_sizes: vec![1, 2, 3, 4, 7],
            latency_jitter: 0.01,
        }
    }

    pub fn orin_nano() -> Self {
        GpuSpec {
            name: "orin-nano".into(),
            arch_class: ArchClass::A8x,
            gpc_count: 1,
            tpc_per_gpc: 4,
            sm_per_tpc: 2,
            total_sms: 8,
            f_max_hz: 1.02e9,
            f_min_hz: 0.306e9,
            power_cap_w: 20.0,
            idle_power_w: 7.0,
            mem_bandwidth_rel: 1.0,
            supports_mig: false,
            supports_gc: true,
            mig_sizes: Vec::new(),
            latency_jitter: 0.005,
        }
    }

    pub fn orin_agx() -> Self {
        GpuSpec {
            name: "orin-agx".into(),
            arch_class: ArchClass::A8x,
            gpc_count: 2,
            tpc_per_gpc: 4,
            sm_per_tpc: 2,
            total_sms: 16,
            f_max_hz: 1.3e9,
            f_min_hz: 0.306e9,
            power_cap_w: 50.0,
            idle_power_w: 10.0,
            mem_bandwidth_rel: 3.0,
            supports_mig: false,
            supports_gc: true,
            mig_sizes: Vec::new(),
            latency_jitter: 0.005,
        }
    }

    pub fn sms_per_gpc(&self) -> u32 {
        self.tpc_per_gpc * self.sm_per_tpc
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(format!("device `{}`: {msg}", self.name)));
        if self.total_sms == 0 {
            return fail("total_sms must be >= 1".into());
        }
        if self.gpc_count > 0 && self.total_sms != self.gpc_count * self.sms_per_gpc() {
            return fail(format!(
                "total_sms {} != gpc_count x tpc_per_gpc x sm_per_tpc = {}",
                self.total_sms,
                self.gpc_count * self.sms_per_gpc()
            ));
        }
        if !(self.f_min_hz > 0.0 && self.f_min_hz < self.f_max_hz) {
            return fail("require 0 < f_min_hz < f_max_hz".into());
        }
        if !(self.idle_power_w >= 0.0 && self.idle_power_w < self.power_cap_w) {
            return fail("require 0 <= idle_power_w < power_cap_w".into());
        }
        if !(self.mem_bandwidth_rel > 0.0) {
            return fail("mem_bandwidth_rel must be positive".into());
        }
        if !(0.0..1.0).contains(&self.latency_jitter) {
            return fail("latency_jitter must lie in [0, 1)".into());
        }
        if self.supports_mig {
            if self.gpc_count == 0 {
                return fail("MIG support requires gpc_count > 0".into());
            }
            if self.mig_sizes.is_empty() || self.mig_sizes.iter().any(|&g| g == 0 || g > self.gpc_count) {
                return fail("mig_sizes must be non-empty and within 1..=gpc_count".into());
            }
        }
        Ok(())
    }
}

/// Minimum SM count and allocation step for a Green Context partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcAllocationRule {
    pub arch_class: ArchClass,
    pub min_sms: u32,
    pub step_sms: u32,
}

pub fn gc_step_rule(arch_class: ArchClass) -> GcAllocationRule {
    let (min_sms, step_sms) = match arch_class {
        ArchClass::A6x => (2, 2),
        ArchClass::A7x => (2, 2),
        ArchClass::A8x => (4, 2),
        ArchClass::A90plus => (8, 8),
    };
    GcAllocationRule {
        arch_class,
        min_sms,
        step_sms,
    }
}

/// All Green Context partition sizes the device accepts, ascending.
pub fn gc_valid_sizes(gpu: &GpuSpec) -> Result<Vec<u32>> {
    if !gpu.supports_gc {
        return Err(Error::UnsupportedRegime {
            device: gpu.name.clone(),
            regime: Regime::Gc,
        });
    }
    let rule = gc_step_rule(gpu.arch_class);
    Ok((rule.min_sms..=gpu.total_sms).step_by(rule.step_sms as usize).collect())
}

/// Maximum number of concurrent, non-overlapping GC partitions of `size` SMs.
pub fn enumerate_gc_layouts(gpu: &GpuSpec, size: u32) -> Result<u32> {
    let valid = gc_valid_sizes(gpu)?;
    if !valid.contains(&size) {
        return Err(Error::InvalidSize {
            device: gpu.name.clone(),
            size,
            valid,
        });
    }
    Ok(gpu.total_sms / size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub id: u32,
    /// GPCs owned by the partition (MIG only, zero otherwise).
    pub gpcs: u32,
    pub sms: u32,
    pub mem_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub regime: Regime,
    pub partitions: Vec<Partition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    WrongRegime { expected: Regime, found: Regime },
    Unsupported { regime: Regime },
    IllegalMigSize { partition: u32, gpcs: u32 },
    Oversubscribed { unit: String, requested: u32, available: u32 },
    InvalidGcSize { partition: u32, sms: u32 },
    SmMismatch { partition: u32, sms: u32, expected: u32 },
    PartitionCount { expected: usize, found: usize },
    DuplicateId { partition: u32 },
    BadMemShare { partition: u32, mem_share: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongRegime { expected, found } => write!(f, "expected a {expected} plan, found {found}"),
            Violation::Unsupported { regime } => write!(f, "device does not support {regime}"),
            Violation::IllegalMigSize { partition, gpcs } => {
                write!(f, "partition {partition}: {gpcs} GPCs is not a legal MIG instance size")
            }
            Violation::Oversubscribed {
                unit,
                requested,
                available,
            } => write!(f, "oversubscribed: {requested} {unit} requested, {available} available"),
            Violation::InvalidGcSize { partition, sms } => {
                write!(f, "partition {partition}: {sms} SMs violates the GC min/step rule")
            }
            Violation::SmMismatch {
                partition,
                sms,
                expected,
            } => write!(f, "partition {partition}: {sms} SMs, expected {expected}"),
            Violation::PartitionCount { expected, found } => {
                write!(f, "expected {expected} partition(s), found {found}")
            }
            Violation::DuplicateId { partition } => write!(f, "duplicate partition id {partition}"),
            Violation::BadMemShare { partition, mem_share } => {
                write!(f, "partition {partition}: mem_share {mem_share} outside (0, 1]")
            }
        }
    }
}

impl PartitionPlan {
    pub fn standalone(gpu: &GpuSpec) -> Self {
        Self::whole_device(Regime::StandAlone, gpu)
    }

    pub fn mps(gpu: &GpuSpec) -> Self {
        Self::whole_device(Regime::Mps, gpu)
    }

    fn whole_device(regime: Regime, gpu: &GpuSpec) -> Self {
        PartitionPlan {
            regime,
            partitions: vec![Partition {
                id: 0,
                gpcs: 0,
                sms: gpu.total_sms,
                mem_share: 1.0,
            }],
        }
    }

    /// MIG plan with one instance per entry of `gpcs`; fails if the plan is illegal.
    pub fn mig(gpu: &GpuSpec, gpcs: &[u32]) -> Result<Self> {
        let plan = PartitionPlan {
            regime: Regime::Mig,
            partitions: gpcs
                .iter()
                .enumerate()
                .map(|(i, &g)| Partition {
                    id: i as u32,
                    gpcs: g,
                    sms: g * gpu.sms_per_gpc(),
                    mem_share: if gpu.gpc_count > 0 {
                        g as f64 / gpu.gpc_count as f64
                    } else {
                        0.0
                    },
                })
                .collect(),
        };
        plan.validate(gpu)?;
        Ok(plan)
    }

    /// Green Context plan with one context per entry of `sms`.
    pub fn gc(gpu: &GpuSpec, sms: &[u32]) -> Result<Self> {
        let plan = PartitionPlan {
            regime: Regime::Gc,
            partitions: sms
                .iter()
                .enumerate()
                .map(|(i, &s)| Partition {
                    id: i as u32,
                    gpcs: 0,
                    sms: s,
                    mem_share: 1.0,
                })
                .collect(),
        };
        plan.validate(gpu)?;
        Ok(plan)
    }

    /// The plan a regime uses when `n` processes each get an equal share:
    /// whole device for StandAlone/MPS, `n` instances of `size` otherwise.
    pub fn for_regime(gpu: &GpuSpec, regime: Regime, n: usize, size: u32) -> Result<Self> {
        match regime {
            Regime::StandAlone => Ok(Self::standalone(gpu)),
            Regime::Mps => Ok(Self::mps(gpu)),
            Regime::Mig => Self::mig(gpu, &vec![size; n]),
            Regime::Gc => Self::gc(gpu, &vec![size; n]),
        }
    }

    pub fn partition(&self, id: u32) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.id == id)
    }

    pub fn validate(&self, gpu: &GpuSpec) -> Result<()> {
        let violations = self.violations(gpu);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPlan(violations))
        }
    }

    pub fn violations(&self, gpu: &GpuSpec) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut ids: Vec<u32> = self.partitions.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                out.push(Violation::DuplicateId { partition: w[0] });
            }
        }
        for p in &self.partitions {
            if !(p.mem_share > 0.0 && p.mem_share <= 1.0) {
                out.push(Violation::BadMemShare {
                    partition: p.id,
                    mem_share: p.mem_share,
                });
            }
        }
        match self.regime {
            Regime::StandAlone | Regime::Mps => {
                if self.partitions.len() != 1 {
                    out.push(Violation::PartitionCount {
                        expected: 1,
                        found: self.partitions.len(),
                    });
                }
                for p in &self.partitions {
                    if p.sms != gpu.total_sms {
                        out.push(Violation::SmMismatch {
                            partition: p.id,
                            sms: p.sms,
                            expected: gpu.total_sms,
                        });
                    }
                }
            }
            Regime::Mig => out.extend(mig_violations(self, gpu)),
            Regime::Gc => out.extend(gc_violations(self, gpu)),
        }
        out
    }
}

/// Checks MIG instance sizes against the device's legal set and the GPC budget.
/// Returns every violation found rather than stopping at the first.
pub fn validate_mig_plan(plan: &PartitionPlan, gpu: &GpuSpec) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if plan.regime != Regime::Mig {
        v.push(Violation::WrongRegime {
            expected: Regime::Mig,
            found: plan.regime,
        });
    }
    v.extend(mig_violations(plan, gpu));
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn mig_violations(plan: &PartitionPlan, gpu: &GpuSpec) -> Vec<Violation> {
    let mut v = Vec::new();
    if !gpu.supports_mig {
        v.push(Violation::Unsupported { regime: Regime::Mig });
        return v;
    }
    for p in &plan.partitions {
        if !gpu.mig_sizes.contains(&p.gpcs) {
            v.push(Violation::IllegalMigSize {
                partition: p.id,
                gpcs: p.gpcs,
            });
        }
        let expected = p.gpcs * gpu.sms_per_gpc();
        if p.sms != expected {
            v.push(Violation::SmMismatch {
                partition: p.id,
                sms: p.sms,
                expected,
            });
        }
    }
    let total: u32 = plan.partitions.iter().map(|p| p.gpcs).sum();
    if total > gpu.gpc_count {
        v.push(Violation::Oversubscribed {
            unit: "GPCs".into(),
            requested: total,
            available: gpu.gpc_count,
        });
    }
    v
}

fn gc_violations(plan: &PartitionPlan, gpu: &GpuSpec) -> Vec<Violation> {
    let valid = match gc_valid_sizes(gpu) {
        Ok(v) => v,
        Err(_) => return vec![Violation::Unsupported { regime: Regime::Gc }],
    };
    let mut v: Vec<Violation> = plan
        .partitions
        .iter()
        .filter(|p| !valid.contains(&p.sms))
        .map(|p| Violation::InvalidGcSize {
            partition: p.id,
            sms: p.sms,
        })
        .collect();
    let total: u32 = plan.partitions.iter().map(|p| p.sms).sum();
    if total > gpu.total_sms {
        v.push(Violation::Oversubscribed {
            unit: "SMs".into(),
            requested: total,
            available: gpu.total_sms,
        });
    }
    v
}

/// SMs a partition can use under its plan's regime.
pub fn partition_sm_count(regime: Regime, p: &Partition, gpu: &GpuSpec) -> u32 {
    match regime {
        Regime::Mig => p.gpcs * gpu.sms_per_gpc(),
        Regime::Gc => p.sms,
        Regime::StandAlone | Regime::Mps => gpu.total_sms,
    }
}

/// Homogeneous MIG layouts: `k` instances of each legal size, for every `k`
/// that fits.
pub fn enumerate_mig_layouts(gpu: &GpuSpec) -> Result<Vec<PartitionPlan>> {
    if !gpu.supports_mig {
        return Err(Error::UnsupportedRegime {
            device: gpu.name.clone(),
            regime: Regime::Mig,
        });
    }
    let mut plans = Vec::new();
    for &size in &gpu.mig_sizes {
        for k in 1..=gpu.gpc_count / size {
            plans.push(PartitionPlan::mig(gpu, &vec![size; k as usize])?);
        }
    }
    Ok(plans)
}

/// Homogeneous GC layouts: `k` contexts of each valid size.
pub fn enumerate_gc_plans(gpu: &GpuSpec) -> Result<Vec<PartitionPlan>> {
    let mut plans = Vec::new();
    for size in gc_valid_sizes(gpu)? {
        for k in 1..=enumerate_gc_layouts(gpu, size)? {
            plans.push(PartitionPlan::gc(gpu, &vec![size; k as usize])?);
        }
    }
    Ok(plans)
}

/// Named device records. Ships A100, Orin Nano and Orin AGX; more can be
/// loaded from a TOML document of `[[device]]` tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRegistry {
    devices: BTreeMap<String, GpuSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    device: Vec<GpuSpec>,
}

impl Default for DeviceRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl DeviceRegistry {
    pub fn builtin() -> Self {
        let mut devices = BTreeMap::new();
        for gpu in [GpuSpec::a100(), GpuSpec::orin_nano(), GpuSpec::orin_agx()] {
            devices.insert(gpu.name.clone(), gpu);
        }
        DeviceRegistry { devices }
    }

    pub fn empty() -> Self {
        DeviceRegistry {
            devices: BTreeMap::new(),
        }
    }

    pub fn parse(src: &str, location: &str) -> Result<Self> {
        let file: RegistryFile = toml::from_str(src).map_err(|e| Error::parse(location, e))?;
        let mut reg = Self::empty();
        for gpu in file.device {
            reg.insert(gpu)?;
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src, &path.display().to_string())
    }

    pub fn insert(&mut self, gpu: GpuSpec) -> Result<()> {
        gpu.validate()?;
        self.devices.insert(gpu.name.clone(), gpu);
        Ok(())
    }

    /// Adds every device from `other`, replacing same-named entries.
    pub fn merge(&mut self, other: DeviceRegistry) {
        self.devices.extend(other.devices);
    }

    pub fn get(&self, name: &str) -> Result<&GpuSpec> {
        self.devices
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown device `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.devices.keys().map(String::as_str)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            device: Vec<&'a GpuSpec>,
        }
        toml::to_string(&Out {
            device: self.devices.values().collect(),
        })
        .expect("device records serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let rows: Vec<(u32, u32)> = ArchClass::ALL
            .iter()
            .map(|&a| {
                let r = gc_step_rule(a);
                (r.min_sms, r.step_sms)
            })
            .collect();
        assert_eq!(rows, vec![(2, 2), (2, 2), (4, 2), (8, 8)]);
    }

    #[test]
    fn gc_sizes_for_builtin_devices() {
        assert_eq!(gc_valid_sizes(&GpuSpec::orin_nano()).unwrap(), vec![4, 6, 8]);
        assert_eq!(
            gc_valid_sizes(&GpuSpec::orin_agx()).unwrap(),
            vec![4, 6, 8, 10, 12, 14, 16]
        );
        let mut hopper = GpuSpec::orin_agx();
        hopper.arch_class = ArchClass::A90plus;
        assert_eq!(gc_valid_sizes(&hopper).unwrap(), vec![8, 16]);
    }

    #[test]
    fn gc_unsupported() {
        let mut gpu = GpuSpec::orin_nano();
        gpu.supports_gc = false;
        assert!(matches!(gc_valid_sizes(&gpu), Err(Error::UnsupportedRegime { .. })));
    }

    #[test]
    fn gc_layout_counts() {
        let nano = GpuSpec::orin_nano();
        assert_eq!(enumerate_gc_layouts(&nano, 4).unwrap(), 2);
        assert_eq!(enumerate_gc_layouts(&nano, 6).unwrap(), 1);
        assert_eq!(enumerate_gc_layouts(&GpuSpec::orin_agx(), 4).unwrap(), 4);
        assert!(matches!(
            enumerate_gc_layouts(&nano, 5),
            Err(Error::InvalidSize { size: 5, .. })
        ));
    }

    #[test]
    fn mig_validation() {
        let a100 = GpuSpec::a100();
        assert!(PartitionPlan::mig(&a100, &[3, 3]).is_ok());
        assert!(PartitionPlan::mig(&a100, &[7]).is_ok());
        assert!(PartitionPlan::mig(&a100, &[3, 2, 1]).is_ok());

        let bad = PartitionPlan {
            regime: Regime::Mig,
            partitions: (0..2)
                .map(|id| Partition {
                    id,
                    gpcs: 4,
                    sms: 64,
                    mem_share: 4.0 / 7.0,
                })
                .collect(),
        };
        let v = validate_mig_plan(&bad, &a100).unwrap_err();
        assert!(v.iter().any(|x| matches!(
            x,
            Violation::Oversubscribed {
                requested: 8,
                available: 7,
                ..
            }
        )));

        let illegal = PartitionPlan {
            regime: Regime::Mig,
            partitions: vec![Partition {
                id: 0,
                gpcs: 5,
                sms: 80,
                mem_share: 5.0 / 7.0,
            }],
        };
        let v = validate_mig_plan(&illegal, &a100).unwrap_err();
        assert_eq!(v, vec![Violation::IllegalMigSize { partition: 0, gpcs: 5 }]);
    }

    #[test]
    fn mig_on_jetson_is_rejected() {
        let err = PartitionPlan::mig(&GpuSpec::orin_nano(), &[1]).unwrap_err();
        assert!(matches!(err, Error::InvalidPlan(_)));
    }

    #[test]
    fn sm_counts() {
        let a100 = GpuSpec::a100();
        let mig = PartitionPlan::mig(&a100, &[3]).unwrap();
        assert_eq!(partition_sm_count(Regime::Mig, &mig.partitions[0], &a100), 48);
        assert!((mig.partitions[0].mem_share - 3.0 / 7.0).abs() < 1e-12);

        let nano = GpuSpec::orin_nano();
        let gc = PartitionPlan::gc(&nano, &[4]).unwrap();
        assert_eq!(partition_sm_count(Regime::Gc, &gc.partitions[0], &nano), 4);

        let sa = PartitionPlan::standalone(&a100);
        assert_eq!(partition_sm_count(Regime::StandAlone, &sa.partitions[0], &a100), 112);
    }

    #[test]
    fn device_invariants() {
        for gpu in [GpuSpec::a100(), GpuSpec::orin_nano(), GpuSpec::orin_agx()] {
            gpu.validate().unwrap();
        }
        let mut broken = GpuSpec::a100();
        broken.total_sms = 100;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn registry_round_trip_and_unknown_keys() {
        let reg = DeviceRegistry::builtin();
        let text = reg.to_toml();
        let back = DeviceRegistry::parse(&text, "inline").unwrap();
        assert_eq!(back, reg);

        let bad = text.replacen("supports_gc", "supports_gcx", 1);
        assert!(matches!(
            DeviceRegistry::parse(&bad, "inline"),
            Err(Error::Parse { .. })
        ));
        assert!(reg.get("h100").is_err());
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("GC".parse::<Regime>().unwrap(), Regime::Gc);
        assert_eq!("stand-alone".parse::<Regime>().unwrap(), Regime::StandAlone);
        assert!("tpu".parse::<Regime>().is_err());
    }
}
