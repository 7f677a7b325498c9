//! Maximum inference frequency search.
//!
//! Estimate a starting rate from the slowest measured inferences, climb one
//! step at a time until a batch misses a deadline, then walk down until the
//! rate survives several validation batches in a row.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{partition_sm_count, GpuSpec, PartitionPlan, Regime};
use crate::sim::engine::splitmix64;
use crate::sim::{misses_deadline, run_simulation, ProcessSpec, Role, SimConfig, SimDuration};
use crate::workload::{AnchorConfig, Model, ModelProfile, ProfileSet};

/// Something that can run one inference and report how long it took.
pub trait InferenceExecutor {
    /// Elapsed seconds of one inference; must be positive.
    fn run_one_inference(&mut self) -> Result<f64>;

    /// Returns the executor to its initial state.
    fn reset(&mut self);

    fn description(&self) -> String;

    /// Issues `n` inferences at period `1 / f` and counts deadline misses.
    ///
    /// The default runs inferences back to back through a FIFO queue in
    /// virtual time using `run_one_inference` for each service time.
    fn run_timed_batch(&mut self, n: u64, f: u32) -> Result<u64> {
        fifo_batch(self, n, f)
    }
}

fn fifo_batch<E: InferenceExecutor + ?Sized>(exec: &mut E, n: u64, f: u32) -> Result<u64> {
    if n == 0 || f == 0 {
        return Err(Error::domain("batch needs n >= 1 and f >= 1"));
    }
    let rate = f64::from(f);
    let mut free_at = 0.0_f64;
    let mut violations = 0;
    for i in 0..n {
        let elapsed = exec.run_one_inference()?;
        if !(elapsed > 0.0 && elapsed.is_finite()) {
            return Err(Error::Batch(format!(
                "{} reported elapsed time {elapsed}",
                exec.description()
            )));
        }
        let issue = i as f64 / rate;
        let end = issue.max(free_at) + elapsed;
        free_at = end;
        if misses_deadline(end, (i + 1) as f64 / rate) {
            violations += 1;
        }
    }
    Ok(violations)
}

/// Executor whose every inference takes exactly `latency_s`.
#[derive(Debug, Clone)]
pub struct ConstantExecutor {
    pub latency_s: f64,
}

impl ConstantExecutor {
    pub fn new(latency_s: f64) -> Self {
        ConstantExecutor { latency_s }
    }
}

impl InferenceExecutor for ConstantExecutor {
    fn run_one_inference(&mut self) -> Result<f64> {
        Ok(self.latency_s)
    }

    fn reset(&mut self) {}

    fn description(&self) -> String {
        format!("constant {} s", self.latency_s)
    }
}

/// Runs batches on the simulator: one process alone in its allocation.
#[derive(Debug, Clone)]
pub struct SimExecutor {
    template: SimConfig,
    model: Model,
    partition: Option<u32>,
    profile: ModelProfile,
    sms: f64,
    bw: f64,
    seed: u64,
    rng: ChaCha8Rng,
    batches: u64,
}

impl SimExecutor {
    /// The solo allocation a search under `regime` measures: the whole
    /// device for StandAlone/MPS, a 3-GPC instance for MIG, 4 SMs for GC.
    pub fn solo(gpu: &GpuSpec, profiles: &ProfileSet, model: Model, regime: Regime, seed: u64) -> Result<Self> {
        let plan = match AnchorConfig::for_regime(regime) {
            AnchorConfig::FullGpu if regime == Regime::Mps => PartitionPlan::mps(gpu),
            AnchorConfig::FullGpu => PartitionPlan::standalone(gpu),
            AnchorConfig::Mig3g => PartitionPlan::mig(gpu, &[3])?,
            AnchorConfig::Gc4sm => PartitionPlan::gc(gpu, &[4])?,
        };
        let mut template = SimConfig::new(gpu.clone(), plan, profiles.clone());
        template.seed = seed;
        Self::from_template(template, model)
    }

    /// Uses `template`'s device, plan and knobs; the process is bound to the
    /// plan's first partition when the regime is partitioned.
    pub fn from_template(mut template: SimConfig, model: Model) -> Result<Self> {
        template.processes.clear();
        let regime = template.plan.regime;
        let first = template
            .plan
            .partitions
            .first()
            .ok_or_else(|| Error::config("plan has no partitions"))?;
        let partition = regime.is_partitioned().then_some(first.id);
        let sms = f64::from(partition_sm_count(regime, first, &template.gpu));
        let bw = if regime == Regime::Mig { first.mem_share } else { 1.0 };
        let profile = template.profiles.get(model)?.clone();
        let seed = template.seed;
        let exec = SimExecutor {
            template,
            model,
            partition,
            profile,
            sms,
            bw,
            seed,
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed)),
            batches: 0,
        };
        exec.batch_config(1, 1).validate()?;
        Ok(exec)
    }

    fn jitter(&self) -> f64 {
        self.template.jitter_override.unwrap_or(self.profile.latency_jitter)
    }

    fn batch_config(&self, n: u64, f: u32) -> SimConfig {
        let mut cfg = self.template.clone();
        cfg.processes = vec![ProcessSpec {
            id: 0,
            model: self.model,
            target_ims: f,
            partition: self.partition,
            role: Role::Fixed,
        }];
        cfg.duration = SimDuration::Inferences(n);
        cfg.seed = splitmix64(self.seed ^ splitmix64(self.batches));
        cfg
    }
}

impl InferenceExecutor for SimExecutor {
    fn run_one_inference(&mut self) -> Result<f64> {
        let freq = self.template.dvfs.base_freq(&self.template.gpu);
        let u: f64 = self.rng.gen();
        Ok(self.profile.latency(self.sms, freq, self.bw) * (1.0 + self.jitter() * u))
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed));
        self.batches = 0;
    }

    fn description(&self) -> String {
        format!(
            "{} on {} ({}, {} SMs)",
            self.model, self.template.gpu.name, self.template.plan.regime, self.sms
        )
    }

    fn run_timed_batch(&mut self, n: u64, f: u32) -> Result<u64> {
        if n == 0 || f == 0 {
            return Err(Error::domain("batch needs n >= 1 and f >= 1"));
        }
        let cfg = self.batch_config(n, f);
        self.batches += 1;
        let r = run_simulation(&cfg)?;
        Ok(r.processes[0].timeouts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub batch_size_n: u64,
    pub validation_batches_k: u32,
    pub worst_count: usize,
    pub step: u32,
    pub f_floor: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            batch_size_n: 1000,
            validation_batches_k: 3,
            worst_count: 5,
            step: 1,
            f_floor: 1,
        }
    }
}

impl SearchConfig {
    /// Upper bound on the ascent, as a multiple of the initial estimate.
    pub const CAP_FACTOR: u32 = 10;

    pub fn validate(&self) -> Result<()> {
        if self.worst_count == 0 || self.batch_size_n < self.worst_count as u64 {
            return Err(Error::config("search needs batch_size_n >= worst_count >= 1"));
        }
        if self.validation_batches_k == 0 || self.step == 0 || self.f_floor == 0 {
            return Err(Error::config("search needs k >= 1, step >= 1, f_floor >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Estimate,
    Ascend,
    Descend,
    Validate,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Estimate => "estimate",
            Phase::Ascend => "ascend",
            Phase::Descend => "descend",
            Phase::Validate => "validate",
        })
    }
}

/// One probe. `Descend` entries mark a step down and carry the violations
/// of the batch that caused it; `Estimate` carries none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub phase: Phase,
    pub f: u32,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub entries: Vec<TraceEntry>,
    pub final_f: u32,
}

impl SearchTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,f,violations\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.phase, e.f, e.violations);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub f: u32,
    pub trace: SearchTrace,
    /// The ascent hit the cap without a single violation.
    pub cap_reached: bool,
}

/// The `k` largest values of `times`.
pub fn select_worst_times(times: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > times.len() {
        return Err(Error::domain(format!("cannot select {k} of {} times", times.len())));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.truncate(k);
    Ok(sorted)
}

/// `floor(1 / mean(worst times))`, at least `cfg.f_floor`.
pub fn initial_estimate(times: &[f64], cfg: &SearchConfig) -> Result<u32> {
    if times.is_empty() {
        return Err(Error::domain("no inference times"));
    }
    let worst = select_worst_times(times, cfg.worst_count.min(times.len()))?;
    let mean = worst.iter().sum::<f64>() / worst.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::domain(format!("mean worst time {mean} is not positive")));
    }
    let f = (1.0 / mean + 1e-9).floor();
    Ok((f.min(u32::MAX as f64) as u32).max(cfg.f_floor))
}

pub fn run_timed_batch<E: InferenceExecutor + ?Sized>(exec: &mut E, n: u64, f: u32) -> Result<u64> {
    exec.run_timed_batch(n, f)
}

pub fn search_max_frequency<E: InferenceExecutor + ?Sized>(exec: &mut E, cfg: &SearchConfig) -> Result<SearchOutcome> {
    cfg.validate()?;
    exec.reset();
    let times = (0..cfg.batch_size_n)
        .map(|_| exec.run_one_inference())
        .collect::<Result<Vec<_>>>()?;
    let estimate = initial_estimate(&times, cfg)?;
    let mut entries = vec![TraceEntry {
        phase: Phase::Estimate,
        f: estimate,
        violations: 0,
    }];
    let cap = estimate.saturating_mul(SearchConfig::CAP_FACTOR);

    let mut f = estimate;
    let mut cap_reached = false;
    let mut trigger = loop {
        let v = exec.run_timed_batch(cfg.batch_size_n, f)?;
        entries.push(TraceEntry {
            phase: Phase::Ascend,
            f,
            violations: v,
        });
        if v > 0 {
            break Some(v);
        }
        match f.checked_add(cfg.step) {
            Some(next) if next <= cap => f = next,
            _ => {
                cap_reached = true;
                break None;
            }
        }
    };

    loop {
        if let Some(v) = trigger {
            f = match f.checked_sub(cfg.step) {
                Some(next) if next >= cfg.f_floor => next,
                _ => {
                    return Err(Error::SearchFailed(format!(
                        "{} misses deadlines even at {} IMS",
                        exec.description(),
                        f.min(cfg.f_floor)
                    )))
                }
            };
            entries.push(TraceEntry {
                phase: Phase::Descend,
                f,
                violations: v,
            });
        }
        trigger = None;
        for _ in 0..cfg.validation_batches_k {
            let v = exec.run_timed_batch(cfg.batch_size_n, f)?;
            entries.push(TraceEntry {
                phase: Phase::Validate,
                f,
                violations: v,
            });
            if v > 0 {
                trigger = Some(v);
                break;
            }
        }
        if trigger.is_none() {
            return Ok(SearchOutcome {
                f,
                trace: SearchTrace { entries, final_f: f },
                cap_reached,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_times_examples() {
        let ms: Vec<f64> = (1..=7).map(|x| x as f64 * 1e-3).collect();
        let mut w = select_worst_times(&ms, 5).unwrap();
        w.sort_by(f64::total_cmp);
        assert_eq!(w, ms[2..].to_vec());
        assert_eq!(select_worst_times(&[0.004; 9], 5).unwrap(), vec![0.004; 5]);
        assert_eq!(select_worst_times(&ms, 7).unwrap().len(), 7);
        assert!(matches!(select_worst_times(&ms, 8), Err(Error::Domain(_))));
    }

    #[test]
    fn estimate_examples() {
        let cfg = SearchConfig::default();
        assert_eq!(initial_estimate(&[0.02; 5], &cfg).unwrap(), 50);
        assert_eq!(initial_estimate(&[0.010; 5], &cfg).unwrap(), 100);
        assert_eq!(initial_estimate(&[0.0077; 5], &cfg).unwrap(), 129);
        assert!(initial_estimate(&[], &cfg).is_err());
        assert_eq!(initial_estimate(&[10.0; 5], &cfg).unwrap(), 1);
    }

    #[test]
    fn constant_batches() {
        let mut e = ConstantExecutor::new(0.010);
        assert_eq!(run_timed_batch(&mut e, 1000, 100).unwrap(), 0);
        assert_eq!(run_timed_batch(&mut e, 1000, 101).unwrap(), 1000);
        assert_eq!(run_timed_batch(&mut e, 1000, 50).unwrap(), 0);
    }

    #[test]
    fn constant_search_and_trace_shape() {
        let mut e = ConstantExecutor::new(0.010);
        let out = search_max_frequency(&mut e, &SearchConfig::default()).unwrap();
        assert_eq!(out.f, 100);
        assert!(!out.cap_reached);
        let phases: Vec<Phase> = out.trace.entries.iter().map(|e| e.phase).collect();
        assert_eq!(
            phases,
            vec![
                Phase::Estimate,
                Phase::Ascend,
                Phase::Ascend,
                Phase::Descend,
                Phase::Validate,
                Phase::Validate,
                Phase::Validate
            ]
        );
        assert!(out.trace.to_csv().starts_with("phase,f,violations\nestimate,100,0\n"));
    }

    struct Failing;
    impl InferenceExecutor for Failing {
        fn run_one_inference(&mut self) -> Result<f64> {
            Ok(2.0)
        }
        fn reset(&mut self) {}
        fn description(&self) -> String {
            "two seconds".into()
        }
    }

    #[test]
    fn floor_violation_fails() {
        assert!(matches!(
            search_max_frequency(&mut Failing, &SearchConfig::default()),
            Err(Error::SearchFailed(_))
        ));
    }

    /// Measures fast, but batches never violate.
    struct Optimist;
    impl InferenceExecutor for Optimist {
        fn run_one_inference(&mut self) -> Result<f64> {
            Ok(0.1)
        }
        fn reset(&mut self) {}
        fn description(&self) -> String {
            "optimist".into()
        }
        fn run_timed_batch(&mut self, _n: u64, _f: u32) -> Result<u64> {
            Ok(0)
        }
    }

    #[test]
    fn cap_is_reported_not_looped() {
        let out = search_max_frequency(&mut Optimist, &SearchConfig::default()).unwrap();
        assert!(out.cap_reached);
        assert_eq!(out.f, 100);
    }

    #[test]
    fn bad_elapsed_is_batch_error() {
        let mut e = ConstantExecutor::new(0.0);
        assert!(matches!(run_timed_batch(&mut e, 10, 5), Err(Error::Batch(_))));
    }

    #[test]
    fn sim_search_resnet18_a100() {
        let gpu = GpuSpec::a100();
        let profiles = ProfileSet::calibrate(&gpu, None).unwrap();
        let mut e = SimExecutor::solo(&gpu, &profiles, Model::ResNet18, Regime::StandAlone, 1).unwrap();
        let out = search_max_frequency(&mut e, &SearchConfig::default()).unwrap();
        assert!(out.f.abs_diff(129) <= 1, "{}", out.f);
        let again = search_max_frequency(&mut e, &SearchConfig::default()).unwrap();
        assert_eq!(out, again);
    }
}
