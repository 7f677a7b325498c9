//! Acceptance gate: one PASS/FAIL line per criterion, then a single assert.
//!
//! Tolerances are pinned as constants next to each check.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gpushare::bench::{self, ExperimentSpec, Platform};
use gpushare::partition::{enumerate_gc_layouts, gc_valid_sizes};
use gpushare::sim::DvfsGovernor;
use gpushare::search::{search_max_frequency, ConstantExecutor, SearchConfig, SimExecutor};
use gpushare::workload::anchor_table;
use gpushare::{run_simulation, GpuSpec, Model, PartitionPlan, ProcessSpec, Regime, Role, SimConfig, SimDuration};

struct Gate {
    lines: Vec<String>,
    failed: usize,
}

impl Gate {
    fn record(&mut self, id: u32, name: &str, elapsed: Duration, outcome: Result<String, String>) {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                self.failed += 1;
                ("FAIL", d)
            }
        };
        let line = format!("{tag} criterion {id} {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
        println!("{line}");
        self.lines.push(line);
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn within(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < budget_s {
        Ok(())
    } else {
        Err(format!("took {:.2}s, budget {budget_s}s", elapsed.as_secs_f64()))
    }
}

// Criterion 1: constant executors land exactly on floor(1/L).
const C1_LATENCIES_MS: [f64; 5] = [1.0, 5.0, 10.0, 20.0, 100.0];
const C1_BUDGET_S: f64 = 1.0;

fn criterion_1() -> Result<String, String> {
    let cfg = SearchConfig::default();
    let mut got = Vec::new();
    for ms in C1_LATENCIES_MS {
        let l = ms / 1000.0;
        let expected = (1.0 / l + 1e-9).floor() as u32;
        let f = search_max_frequency(&mut ConstantExecutor::new(l), &cfg)
            .map_err(|e| e.to_string())?
            .f;
        if f != expected {
            return Err(format!("L={ms}ms gave {f}, expected {expected}"));
        }
        got.push(f);
    }
    Ok(format!("{got:?}"))
}

// Criterion 2: every measured maximum IMS reproduced within one unit.
const C2_TOL_IMS: i64 = 1;
const C2_BUDGET_S: f64 = 30.0;

fn criterion_2() -> Result<String, String> {
    let cfg = SearchConfig::default();
    let mut worst = 0i64;
    let table = anchor_table();
    for a in &table {
        let platform = Platform::builtin(&a.platform).map_err(|e| e.to_string())?;
        let mut exec = SimExecutor::solo(&platform.gpu, &platform.profiles, a.model, a.regime, 1)
            .map_err(|e| e.to_string())?;
        let f = search_max_frequency(&mut exec, &cfg).map_err(|e| e.to_string())?.f;
        let dev = (i64::from(f) - i64::from(a.ims)).abs();
        if dev > C2_TOL_IMS {
            return Err(format!("{} {} {}: {f} vs {}", a.platform, a.regime, a.model, a.ims));
        }
        worst = worst.max(dev);
    }
    Ok(format!("{} anchors, max deviation {worst}", table.len()))
}

// Criterion 3: MIG keeps the fixed process isolated.
const C3_MAX_FIXED_PCT: f64 = 0.5;

fn criterion_3() -> Result<String, String> {
    let platform = Platform::builtin("a100").map_err(|e| e.to_string())?;
    let search = SearchConfig::default();
    let mut spec = ExperimentSpec::new("a100", Regime::Mig, Model::VitB16);
    spec.mig_residual_eps = Some(0.005);
    let exp = bench::run_sweep(&spec, &platform, &search).map_err(|e| e.to_string())?;
    let worst = exp.rows.iter().map(|r| r.fixed_timeout_pct).fold(0.0, f64::max);
    if worst > C3_MAX_FIXED_PCT {
        return Err(format!("eps=0.005: worst fixed timeout {worst:.3}%"));
    }

    spec.mig_residual_eps = Some(0.0);
    let fixed = exp.fixed_ims;
    for (i, adj) in bench::sweep_points(&spec, fixed).into_iter().enumerate() {
        let cfg = bench::point_config(&spec, &platform, fixed, adj, i).map_err(|e| e.to_string())?;
        let mut solo = cfg.clone();
        solo.processes.retain(|p| p.role == Role::Fixed);
        let paired = run_simulation(&cfg).map_err(|e| e.to_string())?;
        let alone = run_simulation(&solo).map_err(|e| e.to_string())?;
        if paired.process(0) != alone.process(0) {
            return Err(format!("eps=0: adjusted={adj} differs from the solo run"));
        }
    }
    Ok(format!(
        "fixed_ims={fixed}, {} points, worst {worst:.3}% at eps=0.005, eps=0 identical to solo",
        exp.rows.len()
    ))
}

// Criterion 4: MIG < MPS < StandAlone at the top of the ConvNeXt-Large sweep.
fn criterion_4() -> Result<String, String> {
    let platform = Platform::builtin("a100").map_err(|e| e.to_string())?;
    let search = SearchConfig::default();
    let mut top = Vec::new();
    for regime in [Regime::Mig, Regime::Mps, Regime::StandAlone] {
        let mut spec = ExperimentSpec::new("a100", regime, Model::ConvNextLarge);
        spec.seed = 7;
        let exp = bench::run_sweep(&spec, &platform, &search).map_err(|e| e.to_string())?;
        top.push(exp.rows.last().expect("non-empty sweep").fixed_timeout_pct);
    }
    let detail = format!("mig {:.2}% < mps {:.2}% < standalone {:.2}%", top[0], top[1], top[2]);
    if top[0] < top[1] && top[1] < top[2] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Criterion 5: the Nano saturates its power cap and halves its clock.
const C5_POWER_W: (f64, f64) = (18.0, 22.0);
const C5_PLATEAU_TOL: f64 = 0.05;
// A flat segment at the throttled clock lasting at least the 50 ms recovery
// window (5 telemetry samples).
const C5_PLATEAU_SAMPLES: usize = 5;
const C5_RATIO: f64 = 5.0;

fn longest_run(flags: impl Iterator<Item = bool>) -> usize {
    let (mut best, mut cur) = (0, 0);
    for f in flags {
        cur = if f { cur + 1 } else { 0 };
        best = best.max(cur);
    }
    best
}

fn criterion_5() -> Result<String, String> {
    let search = SearchConfig::default();
    let nano = Platform::builtin("orin-nano").map_err(|e| e.to_string())?;
    let mut spec = ExperimentSpec::new("orin-nano", Regime::Gc, Model::ConvNextLarge);
    spec.seed = 3;
    let exp = bench::run_sweep(&spec, &nano, &search).map_err(|e| e.to_string())?;
    let top_idx = exp.rows.len() - 1;
    let top = &exp.rows[top_idx];
    let r = bench::run_point(&spec, &nano, exp.fixed_ims, top.adjusted_ims, top_idx).map_err(|e| e.to_string())?;

    let power = r.avg_power_w();
    if !(C5_POWER_W.0..=C5_POWER_W.1).contains(&power) {
        return Err(format!("mean power {power:.2} W"));
    }
    if r.throttle_events.is_empty() {
        return Err("no throttle events".into());
    }
    let half = 0.5 * nano.gpu.f_max_hz;
    let plateau = longest_run(
        r.telemetry
            .iter()
            .map(|s| (s.freq_hz - half).abs() <= C5_PLATEAU_TOL * half),
    );
    if plateau < C5_PLATEAU_SAMPLES {
        return Err(format!("longest run near 0.5 f_max is {plateau} samples"));
    }

    let agx = Platform::builtin("orin-agx").map_err(|e| e.to_string())?;
    let mut eq = ExperimentSpec::new("orin-agx", Regime::Gc, Model::ConvNextLarge);
    eq.seed = 3;
    eq.agx_equivalence = true;
    let agx_exp = bench::run_sweep(&eq, &agx, &search).map_err(|e| e.to_string())?;
    let agx_top = agx_exp.rows.last().expect("non-empty sweep").fixed_timeout_pct;
    if top.fixed_timeout_pct < C5_RATIO * agx_top {
        return Err(format!("nano {:.2}% vs agx {agx_top:.2}%", top.fixed_timeout_pct));
    }
    Ok(format!(
        "power {power:.2} W, {} throttle events, plateau {plateau} samples, nano {:.2}% vs agx {agx_top:.2}%",
        r.throttle_events.len(),
        top.fixed_timeout_pct
    ))
}

// Criterion 6: the pinned AGX never throttles and keeps the fixed process on time.
const C6_MAX_FIXED_PCT: f64 = 1.0;

fn criterion_6() -> Result<String, String> {
    let agx = Platform::builtin("orin-agx").map_err(|e| e.to_string())?;
    let mut spec = ExperimentSpec::new("orin-agx", Regime::Gc, Model::ConvNextLarge);
    spec.seed = 3;
    spec.agx_equivalence = true;
    let exp = bench::run_sweep(&spec, &agx, &SearchConfig::default()).map_err(|e| e.to_string())?;
    let top_adj = exp.rows.last().expect("non-empty sweep").adjusted_ims;
    if f64::from(top_adj) < 1.25 * f64::from(exp.fixed_ims) {
        return Err(format!("sweep stops at {top_adj}, fixed {}", exp.fixed_ims));
    }
    let throttles: u64 = exp.rows.iter().map(|r| r.throttle_events).sum();
    let worst = exp.rows.iter().map(|r| r.fixed_timeout_pct).fold(0.0, f64::max);
    let detail = format!(
        "fixed_ims={}, sweep 1..={top_adj}, {throttles} throttle events, worst {worst:.3}%",
        exp.fixed_ims
    );
    if throttles == 0 && worst <= C6_MAX_FIXED_PCT {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Criterion 7: partition enumeration matches the hardware rules.
fn criterion_7() -> Result<String, String> {
    let nano = GpuSpec::orin_nano();
    let sizes = gc_valid_sizes(&nano).map_err(|e| e.to_string())?;
    if sizes != [4, 6, 8] {
        return Err(format!("nano gc sizes {sizes:?}"));
    }
    let nano_4 = enumerate_gc_layouts(&nano, 4).map_err(|e| e.to_string())?;
    if nano_4 != 2 {
        return Err(format!("nano fits {nano_4} 4-SM partitions"));
    }
    let agx = GpuSpec::orin_agx();
    let agx_4 = enumerate_gc_layouts(&agx, 4).map_err(|e| e.to_string())?;
    if agx_4 < 4 || PartitionPlan::gc(&agx, &[4, 4, 4, 4]).is_err() {
        return Err(format!("agx fits {agx_4} 4-SM partitions"));
    }
    let a100 = GpuSpec::a100();
    if PartitionPlan::mig(&a100, &[3, 3]).is_err() {
        return Err("a100 rejects 2x3g".into());
    }
    if PartitionPlan::mig(&a100, &[4, 4]).is_ok() {
        return Err("a100 accepts 2x4g".into());
    }
    Ok(format!("nano {sizes:?} x{nano_4}, agx 4-SM x{agx_4}, a100 2x3g ok, 2x4g rejected"))
}

// Criterion 8: property checks over random configurations.
const C8_CONFIGS: usize = 100;
const C8_BUDGET_S: f64 = 60.0;

fn random_config(rng: &mut ChaCha8Rng, platforms: &[Platform]) -> SimConfig {
    let platform = &platforms[rng.gen_range(0..platforms.len())];
    let gpu = &platform.gpu;
    let regimes: Vec<Regime> = Regime::ALL
        .into_iter()
        .filter(|r| *r != Regime::Mig || gpu.supports_mig)
        .collect();
    let regime = regimes[rng.gen_range(0..regimes.len())];
    let n = rng.gen_range(1..=2u32);
    let plan = match regime {
        Regime::StandAlone => PartitionPlan::standalone(gpu),
        Regime::Mps => PartitionPlan::mps(gpu),
        Regime::Mig => PartitionPlan::mig(gpu, &vec![3; n as usize]).expect("2x3g fits"),
        Regime::Gc => PartitionPlan::gc(gpu, &vec![4; n as usize]).expect("2x4 SMs fit"),
    };
    let mut cfg = SimConfig::new(gpu.clone(), plan, platform.profiles.clone());
    for id in 0..n {
        cfg.processes.push(ProcessSpec {
            id,
            model: Model::ALL[rng.gen_range(0..Model::ALL.len())],
            target_ims: rng.gen_range(1..=150),
            partition: regime.is_partitioned().then_some(id),
            role: if id == 0 { Role::Fixed } else { Role::Adjusted },
        });
    }
    cfg.duration = SimDuration::Horizon(rng.gen_range(0.5..3.0));
    cfg.seed = rng.gen();
    cfg
}

fn criterion_8() -> Result<String, String> {
    let platforms: Vec<Platform> = ["a100", "orin-nano", "orin-agx"]
        .iter()
        .map(|n| Platform::builtin(n).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut throttle_checks = 0usize;
    for case in 0..C8_CONFIGS {
        let cfg = random_config(&mut rng, &platforms);
        let a = run_simulation(&cfg).map_err(|e| format!("case {case}: {e}"))?;
        let b = run_simulation(&cfg).map_err(|e| format!("case {case}: {e}"))?;
        if a.to_canonical_json() != b.to_canonical_json() {
            return Err(format!("case {case}: rerun differs"));
        }
        for p in &a.processes {
            if p.issued != p.completed + p.in_flight_at_end {
                return Err(format!("case {case}: process {} breaks conservation", p.id));
            }
        }
        // A clock drop needs the preceding sustain window at or above the cap.
        let governor = DvfsGovernor::new(&cfg.gpu, &cfg.dvfs);
        let period = cfg.telemetry_period_s;
        let window = (cfg.dvfs.sustain_window_s / period).round() as usize;
        for &t in &a.throttle_events {
            let idx = a
                .telemetry
                .iter()
                .position(|s| (s.t_s - t).abs() < 1e-9)
                .ok_or_else(|| format!("case {case}: throttle at {t} has no telemetry sample"))?;
            let from = idx.saturating_sub(window.saturating_sub(1));
            if idx + 1 < window || a.telemetry[from..=idx].iter().any(|s| !governor.at_or_above_cap(s.power_w)) {
                return Err(format!("case {case}: throttle at {t:.3}s without a sustained window over the cap"));
            }
            throttle_checks += 1;
        }
    }

    // Latency monotonicity: more SMs, higher clocks or more bandwidth never slow a network down.
    let mut grid_points = 0usize;
    for platform in &platforms {
        let gpu = &platform.gpu;
        for profile in &platform.profiles.profiles {
            for sms in 1..gpu.total_sms {
                for freq in [0.25, 0.5, 0.75, 1.0] {
                    for bw in [0.125, 0.25, 0.5, 1.0] {
                        let f = freq * gpu.f_max_hz;
                        let l = profile.latency(f64::from(sms), f, bw);
                        let more_sms = profile.latency(f64::from(sms + 1), f, bw);
                        let faster = profile.latency(f64::from(sms), (freq + 0.25).min(1.0) * gpu.f_max_hz, bw);
                        let wider = profile.latency(f64::from(sms), f, (bw * 2.0).min(1.0));
                        if more_sms > l || faster > l || wider > l {
                            return Err(format!("{} on {}: latency rises at sms={sms} f={freq} bw={bw}", profile.model, gpu.name));
                        }
                        grid_points += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{C8_CONFIGS} configs deterministic and conserved, {throttle_checks} throttles checked, {grid_points} grid points monotone"
    ))
}

#[test]
fn acceptance() {
    let mut gate = Gate {
        lines: Vec::new(),
        failed: 0,
    };

    let (r, t) = timed(criterion_1);
    gate.record(1, "search-oracle", t, r.and_then(|d| within(t, C1_BUDGET_S).map(|_| d)));
    let (r, t) = timed(criterion_2);
    gate.record(2, "anchor-reproduction", t, r.and_then(|d| within(t, C2_BUDGET_S).map(|_| d)));
    let (r, t) = timed(criterion_3);
    gate.record(3, "mig-isolation", t, r);
    let (r, t) = timed(criterion_4);
    gate.record(4, "regime-ordering", t, r);
    let (r, t) = timed(criterion_5);
    gate.record(5, "nano-saturation", t, r);
    let (r, t) = timed(criterion_6);
    gate.record(6, "agx-relief", t, r);
    let (r, t) = timed(criterion_7);
    gate.record(7, "partition-enumeration", t, r);
    let (r, t) = timed(criterion_8);
    gate.record(8, "property-suites", t, r.and_then(|d| within(t, C8_BUDGET_S).map(|_| d)));

    assert_eq!(gate.failed, 0, "\n{}", gate.lines.join("\n"));
}
