//! Calibrated latency models for the six vision networks.
//!
//! Latency follows a two-term roofline: a compute term that shrinks with the
//! SMs a network can occupy (up to its saturation point) and with clock
//! frequency, and a memory term that shrinks with the bandwidth share.
//! Parameters are fitted to the measured maximum-IMS tables.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{GpuSpec, Regime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "convnext-base")]
    ConvNextBase,
    #[serde(rename = "convnext-large")]
    ConvNextLarge,
    #[serde(rename = "mobilenet-v2")]
    MobileNetV2,
    #[serde(rename = "resnet18")]
    ResNet18,
    #[serde(rename = "vit-b-16")]
    VitB16,
    #[serde(rename = "vit-l-32")]
    VitL32,
}

impl Model {
    pub const ALL: [Model; 6] = [
        Model::ConvNextBase,
        Model::ConvNextLarge,
        Model::MobileNetV2,
        Model::ResNet18,
        Model::VitB16,
        Model::VitL32,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::ConvNextBase => "convnext-base",
            Model::ConvNextLarge => "convnext-large",
            Model::MobileNetV2 => "mobilenet-v2",
            Model::ResNet18 => "resnet18",
            Model::VitB16 => "vit-b-16",
            Model::VitL32 => "vit-l-32",
        }
    }

    /// Networks large enough that a context switch costs noticeably more.
    pub fn is_large(self) -> bool {
        matches!(self, Model::ConvNextLarge | Model::VitL32)
    }

    pub fn default_switch_cost_s(self) -> f64 {
        if self.is_large() {
            0.5e-3
        } else {
            0.1e-3
        }
    }

    /// Weights, activations and runtime context, in MiB.
    pub fn default_footprint_mib(self) -> f64 {
        match self {
            Model::ConvNextBase => 1100.0,
            Model::ConvNextLarge => 1650.0,
            Model::MobileNetV2 => 420.0,
            Model::ResNet18 => 480.0,
            Model::VitB16 => 1050.0,
            Model::VitL32 => 1900.0,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "convnextbase" => Ok(Model::ConvNextBase),
            "convnextlarge" => Ok(Model::ConvNextLarge),
            "mobilenetv2" => Ok(Model::MobileNetV2),
            "resnet18" => Ok(Model::ResNet18),
            "vitb16" => Ok(Model::VitB16),
            "vitl32" => Ok(Model::VitL32),
            _ => Err(Error::parse("model", format!("unknown model `{s}`"))),
        }
    }
}

/// Resource configuration an IMS value was measured under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorConfig {
    FullGpu,
    Mig3g,
    Gc4sm,
}

impl AnchorConfig {
    /// The config a solo search under `regime` runs in.
    pub fn for_regime(regime: Regime) -> Self {
        match regime {
            Regime::StandAlone | Regime::Mps => AnchorConfig::FullGpu,
            Regime::Mig => AnchorConfig::Mig3g,
            Regime::Gc => AnchorConfig::Gc4sm,
        }
    }

    /// (SMs, bandwidth share) a solo process gets under this config.
    pub fn allocation(self, gpu: &GpuSpec) -> (u32, f64) {
        match self {
            AnchorConfig::FullGpu => (gpu.total_sms, 1.0),
            AnchorConfig::Mig3g => (3 * gpu.sms_per_gpc(), 3.0 / gpu.gpc_count.max(1) as f64),
            AnchorConfig::Gc4sm => (4, 1.0),
        }
    }
}

impl fmt::Display for AnchorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorConfig::FullGpu => "full-gpu",
            AnchorConfig::Mig3g => "mig-3g",
            AnchorConfig::Gc4sm => "gc-4sm",
        })
    }
}

/// One measured maximum-IMS value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImsAnchor {
    pub model: Model,
    pub platform: String,
    pub regime: Regime,
    pub config: AnchorConfig,
    pub ims: u32,
}

// Columns: stand-alone, MPS, partitioned (MIG 3g on the A100, GC 4 SMs on the Nano).
const A100_IMS: [(Model, [u32; 3]); 6] = [
    (Model::ConvNextBase, [61, 61, 54]),
    (Model::ConvNextLarge, [52, 52, 52]),
    (Model::MobileNetV2, [147, 147, 123]),
    (Model::ResNet18, [129, 129, 118]),
    (Model::VitB16, [95, 95, 76]),
    (Model::VitL32, [55, 55, 55]),
];

const NANO_IMS: [(Model, [u32; 3]); 6] = [
    (Model::ConvNextBase, [58, 58, 35]),
    (Model::ConvNextLarge, [33, 33, 18]),
    (Model::MobileNetV2, [134, 134, 79]),
    (Model::ResNet18, [127, 127, 70]),
    (Model::VitB16, [58, 58, 36]),
    (Model::VitL32, [42, 42, 24]),
];

/// All 36 measured anchors: 6 models x 3 columns x 2 platforms.
pub fn anchor_table() -> Vec<ImsAnchor> {
    let mut out = Vec::with_capacity(36);
    let platforms = [
        ("a100", &A100_IMS, Regime::Mig, AnchorConfig::Mig3g),
        ("orin-nano", &NANO_IMS, Regime::Gc, AnchorConfig::Gc4sm),
    ];
    for (platform, rows, part_regime, part_config) in platforms {
        for (model, [sa, mps, part]) in rows.iter() {
            for (regime, config, ims) in [
                (Regime::StandAlone, AnchorConfig::FullGpu, *sa),
                (Regime::Mps, AnchorConfig::FullGpu, *mps),
                (part_regime, part_config, *part),
            ] {
                out.push(ImsAnchor {
                    model: *model,
                    platform: platform.to_string(),
                    regime,
                    config,
                    ims,
                });
            }
        }
    }
    out
}

pub fn anchor_lookup(model: Model, platform: &str, regime: Regime) -> Option<u32> {
    anchor_table()
        .into_iter()
        .find(|a| a.model == model && a.platform == platform && a.regime == regime)
        .map(|a| a.ims)
}

/// Batch-1 latency implied by an IMS value.
pub fn latency_from_ims(ims: f64) -> Result<f64> {
    if !(ims > 0.0) || !ims.is_finite() {
        return Err(Error::domain(format!("IMS must be positive, got {ims}")));
    }
    Ok(1.0 / ims)
}

/// Calibrated latency parameters of one network on one platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub model: Model,
    pub platform: String,
    /// SM-seconds of work at the platform's maximum clock.
    pub compute_work: f64,
    /// Seconds of memory traffic at full device bandwidth.
    pub mem_work: f64,
    pub sm_saturation: u32,
    pub switch_cost_s: f64,
    pub f_max_hz: f64,
    pub f_min_hz: f64,
    pub device_sms: u32,
    pub latency_jitter: f64,
    pub footprint_mib: f64,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.compute_work > 0.0) || !(self.mem_work >= 0.0) {
            return Err(Error::config(format!(
                "{}: require compute_work > 0 and mem_work >= 0",
                self.model
            )));
        }
        if self.sm_saturation == 0 || self.sm_saturation > self.device_sms {
            return Err(Error::config(format!(
                "{}: sm_saturation {} outside 1..={}",
                self.model, self.sm_saturation, self.device_sms
            )));
        }
        if !(0.0..1.0).contains(&self.latency_jitter) || !(self.switch_cost_s >= 0.0) {
            return Err(Error::config(format!("{}: bad jitter or switch cost", self.model)));
        }
        Ok(())
    }

    /// SMs the network actually keeps busy when given `sms`.
    pub fn occupied_sms(&self, sms: f64) -> f64 {
        sms.min(self.sm_saturation as f64)
    }

    /// Unchecked roofline latency; `sms` may be fractional (MPS shares).
    pub fn latency(&self, sms: f64, freq_hz: f64, bw_share: f64) -> f64 {
        let freq_rel = freq_hz / self.f_max_hz;
        let compute = self.compute_work / (self.occupied_sms(sms) * freq_rel);
        let memory = self.mem_work / bw_share;
        compute.max(memory)
    }
}

pub fn predict_latency(profile: &ModelProfile, sms: u32, freq_hz: f64, bw_share: f64) -> Result<f64> {
    if sms == 0 {
        return Err(Error::domain("sms must be >= 1"));
    }
    if !(bw_share > 0.0 && bw_share <= 1.0) {
        return Err(Error::domain(format!("bandwidth share {bw_share} outside (0, 1]")));
    }
    let tol = 1e-9 * profile.f_max_hz;
    if !(freq_hz >= profile.f_min_hz - tol && freq_hz <= profile.f_max_hz + tol) {
        return Err(Error::domain(format!(
            "frequency {freq_hz} Hz outside [{}, {}]",
            profile.f_min_hz, profile.f_max_hz
        )));
    }
    Ok(profile.latency(sms as f64, freq_hz, bw_share))
}

/// A measured operating point used for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAnchor {
    pub sms: u32,
    pub bw_share: f64,
    pub ims: u32,
}

/// Headroom placed between the worst jittered latency and the IMS period.
/// The worst case lands at `1 / (ims + delta)` with
/// `delta = min(HEADROOM_REL * ims, HEADROOM_MAX)`, which keeps the integer
/// IMS exact while leaving room for small co-runner inflation.
pub const HEADROOM_REL: f64 = 0.007;
pub const HEADROOM_MAX: f64 = 0.9;

/// Relative tolerance a calibrated profile must reproduce anchors within.
pub const CALIBRATION_TOL: f64 = 0.02;

/// Nominal (jitter-free) latency a calibrated profile targets for `ims`.
pub fn nominal_target_latency(ims: u32, jitter: f64) -> f64 {
    let ims = ims as f64;
    let delta = (HEADROOM_REL * ims).min(HEADROOM_MAX);
    1.0 / ((ims + delta) * (1.0 + jitter))
}

/// Fits compute work, memory work and SM saturation to `anchors`.
///
/// For a fixed saturation the largest feasible compute and memory terms are
/// `min_i L_i * min(s_i, sat)` and `min_i L_i * b_i`; any smaller choice only
/// lowers the predicted latency, so these maxima decide feasibility. The
/// saturation with the smallest residual wins, ties going to the larger value.
pub fn calibrate_profile(model: Model, gpu: &GpuSpec, anchors: &[CalibrationAnchor]) -> Result<ModelProfile> {
    let mut points: Vec<CalibrationAnchor> = Vec::new();
    for a in anchors {
        if a.ims == 0 || !(a.bw_share > 0.0 && a.bw_share <= 1.0) || a.sms == 0 {
            return Err(Error::domain(format!("invalid calibration anchor {a:?}")));
        }
        if !points.iter().any(|p| p.sms == a.sms && p.bw_share == a.bw_share) {
            points.push(*a);
        } else if points.iter().any(|p| p.sms == a.sms && p.bw_share == a.bw_share && p.ims != a.ims) {
            return Err(Error::domain(format!(
                "conflicting anchors at {} SMs for {model}",
                a.sms
            )));
        }
    }
    let distinct_sms = {
        let mut s: Vec<u32> = points.iter().map(|p| p.sms).collect();
        s.sort_unstable();
        s.dedup();
        s.len()
    };
    if distinct_sms < 2 {
        return Err(Error::Calibration {
            model: model.to_string(),
            best_residual: f64::INFINITY,
        });
    }

    let jitter = gpu.latency_jitter;
    let targets: Vec<f64> = points.iter().map(|p| nominal_target_latency(p.ims, jitter)).collect();

    let mut best: Option<(f64, u32, f64, f64)> = None;
    for sat in 1..=gpu.total_sms {
        let eff = |s: u32| s.min(sat) as f64;
        let compute = points
            .iter()
            .zip(&targets)
            .map(|(p, l)| l * eff(p.sms))
            .fold(f64::INFINITY, f64::min);
        let memory = points
            .iter()
            .zip(&targets)
            .map(|(p, l)| l * p.bw_share)
            .fold(f64::INFINITY, f64::min);
        let residual = points
            .iter()
            .zip(&targets)
            .map(|(p, l)| {
                let pred = (compute / eff(p.sms)).max(memory / p.bw_share);
                ((pred - l) / l).abs()
            })
            .fold(0.0, f64::max);
        let quantized = if residual <= 1e-9 { 0.0 } else { residual };
        let better = match best {
            None => true,
            Some((r, ..)) => quantized <= r,
        };
        if better {
            best = Some((quantized, sat, compute, memory));
        }
    }

    let (residual, sat, compute_work, mem_work) = best.expect("at least one saturation candidate");
    if residual > CALIBRATION_TOL {
        return Err(Error::Calibration {
            model: model.to_string(),
            best_residual: residual,
        });
    }
    let profile = ModelProfile {
        model,
        platform: gpu.name.clone(),
        compute_work,
        mem_work,
        sm_saturation: sat,
        switch_cost_s: model.default_switch_cost_s(),
        f_max_hz: gpu.f_max_hz,
        f_min_hz: gpu.f_min_hz,
        device_sms: gpu.total_sms,
        latency_jitter: jitter,
        footprint_mib: model.default_footprint_mib(),
    };
    profile.validate()?;
    Ok(profile)
}

/// Re-targets a profile to a device of the same architecture: compute work
/// is rescaled so the absolute clock sets the speed, memory work by the
/// bandwidth ratio.
pub fn port_profile(profile: &ModelProfile, from: &GpuSpec, to: &GpuSpec) -> ModelProfile {
    ModelProfile {
        model: profile.model,
        platform: to.name.clone(),
        compute_work: profile.compute_work * from.f_max_hz / to.f_max_hz,
        mem_work: profile.mem_work * from.mem_bandwidth_rel / to.mem_bandwidth_rel,
        sm_saturation: profile.sm_saturation.min(to.total_sms),
        switch_cost_s: profile.switch_cost_s,
        f_max_hz: to.f_max_hz,
        f_min_hz: to.f_min_hz,
        device_sms: to.total_sms,
        latency_jitter: to.latency_jitter,
        footprint_mib: profile.footprint_mib,
    }
}

/// Anchors of one model on one platform, converted to allocations on `gpu`.
pub fn calibration_anchors(model: Model, gpu: &GpuSpec) -> Vec<CalibrationAnchor> {
    anchor_table()
        .into_iter()
        .filter(|a| a.model == model && a.platform == gpu.name)
        .map(|a| {
            let (sms, bw_share) = a.config.allocation(gpu);
            CalibrationAnchor {
                sms,
                bw_share,
                ims: a.ims,
            }
        })
        .collect()
}

/// Which measured platform a device's profiles come from.
pub fn reference_platform(device: &str) -> Option<&'static str> {
    match device {
        "a100" => Some("a100"),
        "orin-nano" => Some("orin-nano"),
        "orin-agx" => Some("orin-nano"),
        _ => None,
    }
}

/// Calibrated profiles for every model on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    pub platform: String,
    #[serde(rename = "profile")]
    pub profiles: Vec<ModelProfile>,
}

impl ProfileSet {
    /// Calibrates against the anchor table, porting from the reference
    /// platform when the device has no anchors of its own.
    pub fn calibrate(gpu: &GpuSpec, reference: Option<&GpuSpec>) -> Result<Self> {
        let has_own = anchor_table().iter().any(|a| a.platform == gpu.name);
        let profiles = if has_own {
            Model::ALL
                .iter()
                .map(|&m| calibrate_profile(m, gpu, &calibration_anchors(m, gpu)))
                .collect::<Result<Vec<_>>>()?
        } else {
            let from = reference
                .ok_or_else(|| Error::config(format!("no anchors or reference platform for `{}`", gpu.name)))?;
            Model::ALL
                .iter()
                .map(|&m| Ok(port_profile(&calibrate_profile(m, from, &calibration_anchors(m, from))?, from, gpu)))
                .collect::<Result<Vec<_>>>()?
        };
        Ok(ProfileSet {
            platform: gpu.name.clone(),
            profiles,
        })
    }

    pub fn get(&self, model: Model) -> Result<&ModelProfile> {
        self.profiles
            .iter()
            .find(|p| p.model == model)
            .ok_or_else(|| Error::config(format!("no profile for {model} on `{}`", self.platform)))
    }

    pub fn by_model(&self) -> BTreeMap<Model, &ModelProfile> {
        self.profiles.iter().map(|p| (p.model, p)).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profiles serialize")
    }

    pub fn parse(src: &str, location: &str) -> Result<Self> {
        let set: ProfileSet = toml::from_str(src).map_err(|e| Error::parse(location, e))?;
        for p in &set.profiles {
            p.validate()?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::parse(&src, &path.display().to_string())
    }
}
