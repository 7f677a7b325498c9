//! Power, clock and temperature models sampled once per telemetry period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::GpuSpec;

/// Relative slack when comparing a power sample against the cap.
const CAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DvfsParams {
    pub cap_w: f64,
    /// Power must stay at or above the cap this long before the clock drops.
    pub sustain_window_s: f64,
    pub throttle_factor: f64,
    /// Power must stay below the cap this long before the clock recovers.
    pub recover_window_s: f64,
    pub per_sm_power_w: f64,
    pub power_exponent: f64,
    /// Base clock when pinned below the maximum; `None` runs at `f_max`.
    #[serde(default)]
    pub pinned_freq_hz: Option<f64>,
}

impl DvfsParams {
    pub const DEFAULT_SUSTAIN_S: f64 = 0.5;
    pub const DEFAULT_RECOVER_S: f64 = 0.05;
    pub const DEFAULT_THROTTLE_FACTOR: f64 = 0.5;
    pub const DEFAULT_EXPONENT: f64 = 2.0;

    /// Defaults for `gpu`: per-SM power is set so that every SM busy at
    /// `f_max` draws exactly the device cap.
    pub fn for_device(gpu: &GpuSpec) -> Self {
        DvfsParams {
            cap_w: gpu.power_cap_w,
            sustain_window_s: Self::DEFAULT_SUSTAIN_S,
            throttle_factor: Self::DEFAULT_THROTTLE_FACTOR,
            recover_window_s: Self::DEFAULT_RECOVER_S,
            per_sm_power_w: (gpu.power_cap_w - gpu.idle_power_w) / gpu.total_sms as f64,
            power_exponent: Self::DEFAULT_EXPONENT,
            pinned_freq_hz: None,
        }
    }

    pub fn pinned(mut self, freq_hz: f64) -> Self {
        self.pinned_freq_hz = Some(freq_hz);
        self
    }

    pub fn base_freq(&self, gpu: &GpuSpec) -> f64 {
        self.pinned_freq_hz.unwrap_or(gpu.f_max_hz)
    }

    pub fn validate(&self, gpu: &GpuSpec) -> Result<()> {
        if !(self.throttle_factor > 0.0 && self.throttle_factor < 1.0) {
            return Err(Error::config("dvfs.throttle_factor must lie in (0, 1)"));
        }
        if !(self.sustain_window_s >= 0.0 && self.recover_window_s >= 0.0) {
            return Err(Error::config("dvfs windows must be non-negative"));
        }
        if !(self.per_sm_power_w >= 0.0) || !(self.cap_w > 0.0) || !(self.power_exponent >= 0.0) {
            return Err(Error::config("dvfs power parameters must be non-negative"));
        }
        if let Some(f) = self.pinned_freq_hz {
            if !(f >= gpu.f_min_hz && f <= gpu.f_max_hz) {
                return Err(Error::config(format!(
                    "pinned frequency {f} Hz outside [{}, {}]",
                    gpu.f_min_hz, gpu.f_max_hz
                )));
            }
        }
        Ok(())
    }
}

/// Device power for `active_sms` busy SMs (time-averaged) at `freq_hz`.
pub fn power_step(gpu: &GpuSpec, dvfs: &DvfsParams, active_sms: f64, freq_hz: f64) -> f64 {
    let freq_rel = freq_hz / gpu.f_max_hz;
    gpu.idle_power_w + dvfs.per_sm_power_w * active_sms * freq_rel.powf(dvfs.power_exponent)
}

/// Two-level power-cap governor with hysteresis windows.
#[derive(Debug, Clone)]
pub struct DvfsGovernor {
    params: DvfsParams,
    base_hz: f64,
    throttled_hz: f64,
    freq_hz: f64,
    above_s: f64,
    below_s: f64,
    throttled: bool,
}

impl DvfsGovernor {
    pub fn new(gpu: &GpuSpec, params: &DvfsParams) -> Self {
        let base_hz = params.base_freq(gpu);
        let throttled_hz = (gpu.f_max_hz * params.throttle_factor).clamp(gpu.f_min_hz, base_hz);
        DvfsGovernor {
            params: params.clone(),
            base_hz,
            throttled_hz,
            freq_hz: base_hz,
            above_s: 0.0,
            below_s: 0.0,
            throttled: false,
        }
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn is_throttled(&self) -> bool {
        self.throttled
    }

    pub fn at_or_above_cap(&self, power_w: f64) -> bool {
        power_w >= self.params.cap_w * (1.0 - CAP_TOL)
    }

    /// Feeds one power sample covering `dt` seconds and returns the clock for
    /// the next period. The second value is true when this sample triggered
    /// a throttle event.
    pub fn dvfs_step(&mut self, power_w: f64, dt: f64) -> (f64, bool) {
        if self.at_or_above_cap(power_w) {
            self.above_s += dt;
            self.below_s = 0.0;
        } else {
            self.below_s += dt;
            self.above_s = 0.0;
        }
        let slack = 1e-9 * dt.max(1e-12);
        let mut event = false;
        if !self.throttled && self.above_s + slack >= self.params.sustain_window_s && self.above_s > 0.0 {
            self.throttled = true;
            self.freq_hz = self.throttled_hz;
            event = true;
        } else if self.throttled && self.below_s + slack >= self.params.recover_window_s && self.below_s > 0.0 {
            self.throttled = false;
            self.freq_hz = self.base_hz;
        }
        (self.freq_hz, event)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    pub ambient_c: f64,
    pub tau_s: f64,
    /// Steady-state rise per watt.
    pub c_per_w: f64,
}

impl ThermalParams {
    /// Roughly 50 C of rise at the power cap, 20 s time constant.
    pub fn for_device(gpu: &GpuSpec) -> Self {
        ThermalParams {
            ambient_c: 25.0,
            tau_s: 20.0,
            c_per_w: 50.0 / gpu.power_cap_w,
        }
    }
}

/// First-order low-pass step towards `ambient + c_per_w * power`.
pub fn temp_proxy_step(temp_c: f64, power_w: f64, dt: f64, thermal: &ThermalParams) -> f64 {
    let alpha = (dt / thermal.tau_s).min(1.0);
    temp_c + alpha * (thermal.ambient_c + thermal.c_per_w * power_w - temp_c)
}
