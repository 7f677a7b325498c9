//! Property suites over the simulator, the search and the partition rules.

use proptest::prelude::*;

use gpushare::bench::{self, ExperimentSpec, FixedIms, ImpactOptions, Platform};
use gpushare::partition::{enumerate_gc_plans, enumerate_mig_layouts, partition_sm_count};
use gpushare::search::{
    search_max_frequency, select_worst_times, ConstantExecutor, Phase, SearchConfig,
};
use gpushare::sim::DvfsGovernor;
use gpushare::{run_simulation, GpuSpec, Model, PartitionPlan, ProcessSpec, Regime, Role, SimConfig, SimDuration};

fn platform(i: usize) -> Platform {
    Platform::builtin(["a100", "orin-nano", "orin-agx"][i]).unwrap()
}

fn regime_for(gpu: &GpuSpec, pick: usize) -> Regime {
    let regimes: Vec<Regime> = Regime::ALL
        .into_iter()
        .filter(|r| *r != Regime::Mig || gpu.supports_mig)
        .collect();
    regimes[pick % regimes.len()]
}

fn plan_for(gpu: &GpuSpec, regime: Regime, n: usize) -> PartitionPlan {
    match regime {
        Regime::StandAlone => PartitionPlan::standalone(gpu),
        Regime::Mps => PartitionPlan::mps(gpu),
        Regime::Mig => PartitionPlan::mig(gpu, &vec![3; n]).unwrap(),
        Regime::Gc => PartitionPlan::gc(gpu, &vec![4; n]).unwrap(),
    }
}

#[derive(Debug, Clone)]
struct Case {
    platform: usize,
    regime: usize,
    models: Vec<usize>,
    rates: Vec<u32>,
    horizon: f64,
    seed: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (
        0..3usize,
        0..4usize,
        prop::collection::vec((0..6usize, 1..160u32), 1..=2),
        0.2..2.0f64,
        any::<u64>(),
    )
        .prop_map(|(platform, regime, procs, horizon, seed)| Case {
            platform,
            regime,
            models: procs.iter().map(|p| p.0).collect(),
            rates: procs.iter().map(|p| p.1).collect(),
            horizon,
            seed,
        })
}

fn build(c: &Case) -> SimConfig {
    let p = platform(c.platform);
    let regime = regime_for(&p.gpu, c.regime);
    let plan = plan_for(&p.gpu, regime, c.models.len());
    let mut cfg = SimConfig::new(p.gpu.clone(), plan, p.profiles.clone());
    for (i, (&m, &r)) in c.models.iter().zip(&c.rates).enumerate() {
        let id = i as u32;
        cfg.processes.push(ProcessSpec {
            id,
            model: Model::ALL[m],
            target_ims: r,
            partition: regime.is_partitioned().then_some(id),
            role: if i == 0 { Role::Fixed } else { Role::Adjusted },
        });
    }
    cfg.duration = SimDuration::Horizon(c.horizon);
    cfg.seed = c.seed;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn identical_configs_give_identical_bytes(c in case()) {
        let cfg = build(&c);
        let a = run_simulation(&cfg).unwrap().to_canonical_json();
        let b = run_simulation(&cfg).unwrap().to_canonical_json();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn every_issued_inference_is_accounted_for(c in case()) {
        let r = run_simulation(&build(&c)).unwrap();
        for p in &r.processes {
            prop_assert_eq!(p.issued, p.completed + p.in_flight_at_end);
            prop_assert!(p.late_completions <= p.completed);
            prop_assert!(p.timeouts <= p.issued);
            prop_assert!(p.timeouts >= p.late_completions);
        }
    }

    #[test]
    fn power_stays_between_idle_and_full_load(c in case()) {
        let cfg = build(&c);
        let r = run_simulation(&cfg).unwrap();
        let hi = cfg.gpu.idle_power_w + cfg.dvfs.per_sm_power_w * f64::from(cfg.gpu.total_sms);
        for s in &r.telemetry {
            prop_assert!(s.power_w >= cfg.gpu.idle_power_w - 1e-9);
            prop_assert!(s.power_w <= hi + 1e-9);
            prop_assert!(s.freq_hz >= cfg.gpu.f_min_hz && s.freq_hz <= cfg.gpu.f_max_hz);
        }
    }

    #[test]
    fn throttles_follow_a_full_window_at_the_cap(c in case()) {
        let cfg = build(&c);
        let r = run_simulation(&cfg).unwrap();
        let gov = DvfsGovernor::new(&cfg.gpu, &cfg.dvfs);
        let window = (cfg.dvfs.sustain_window_s / cfg.telemetry_period_s).round() as usize;
        for &t in &r.throttle_events {
            let idx = r.telemetry.iter().position(|s| (s.t_s - t).abs() < 1e-9).unwrap();
            prop_assert!(idx + 1 >= window);
            let from = idx + 1 - window;
            prop_assert!(r.telemetry[from..=idx].iter().all(|s| gov.at_or_above_cap(s.power_w)));
        }
    }

    #[test]
    fn a_corunner_never_helps_under_shared_regimes(
        platform_i in 0..3usize,
        mps in any::<bool>(),
        model in 0..6usize,
        fixed in 1..120u32,
        other in 1..120u32,
        seed in any::<u64>(),
    ) {
        let p = platform(platform_i);
        let regime = if mps { Regime::Mps } else { Regime::StandAlone };
        let mut solo = SimConfig::new(p.gpu.clone(), plan_for(&p.gpu, regime, 1), p.profiles.clone());
        solo.jitter_override = Some(0.0);
        solo.duration = SimDuration::Horizon(1.0);
        solo.seed = seed;
        solo.processes.push(ProcessSpec {
            id: 0,
            model: Model::ALL[model],
            target_ims: fixed,
            partition: None,
            role: Role::Fixed,
        });
        let mut pair = solo.clone();
        pair.processes.push(ProcessSpec {
            id: 1,
            model: Model::ALL[model],
            target_ims: other,
            partition: None,
            role: Role::Adjusted,
        });
        let alone = run_simulation(&solo).unwrap();
        let shared = run_simulation(&pair).unwrap();
        let (a, s) = (alone.process(0).unwrap(), shared.process(0).unwrap());
        prop_assert!(s.timeouts >= a.timeouts, "solo {} shared {}", a.timeouts, s.timeouts);
        prop_assert!(s.mean_response_s >= a.mean_response_s - 1e-12);
    }

    #[test]
    fn worst_times_dominate_every_other_selection(
        times in prop::collection::vec(1e-4..1.0f64, 1..60),
        k_pick in 0..60usize,
    ) {
        let k = k_pick % times.len() + 1;
        let worst = select_worst_times(&times, k).unwrap();
        prop_assert_eq!(worst.len(), k);
        let min_selected = worst.iter().copied().fold(f64::INFINITY, f64::min);
        let sum: f64 = worst.iter().sum();
        // Any other k-subset sums to no more: compare against the first k.
        let first: f64 = times[..k].iter().sum();
        prop_assert!(sum >= first - 1e-12);
        let above = times.iter().filter(|&&t| t > min_selected).count();
        prop_assert!(above < k);
    }

    #[test]
    fn constant_executor_finds_floor_of_rate(l_us in 500u32..200_000) {
        let l = f64::from(l_us) * 1e-6;
        let out = search_max_frequency(&mut ConstantExecutor::new(l), &SearchConfig::default()).unwrap();
        prop_assert_eq!(out.f, (1.0 / l + 1e-9).floor() as u32);
        prop_assert!(!out.cap_reached);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn search_traces_are_well_formed(l_us in 500u32..200_000) {
        let l = f64::from(l_us) * 1e-6;
        let cfg = SearchConfig::default();
        let out = search_max_frequency(&mut ConstantExecutor::new(l), &cfg).unwrap();
        let e = &out.trace.entries;
        prop_assert_eq!(e[0].phase, Phase::Estimate);
        prop_assert_eq!(out.trace.final_f, out.f);
        let last = e.last().unwrap();
        prop_assert_eq!(last.phase, Phase::Validate);
        prop_assert_eq!(last.f, out.f);
        prop_assert_eq!(last.violations, 0);
        let tail = e.iter().rev().take_while(|x| x.phase == Phase::Validate).count();
        prop_assert_eq!(tail, cfg.validation_batches_k as usize);
        for w in e.windows(2) {
            match w[1].phase {
                Phase::Estimate => prop_assert!(false, "estimate after the first entry"),
                Phase::Ascend => prop_assert!(matches!(w[0].phase, Phase::Estimate | Phase::Ascend)),
                Phase::Descend => {
                    prop_assert!(w[1].violations > 0);
                    prop_assert_eq!(w[1].f + cfg.step, w[0].f);
                }
                Phase::Validate => {}
            }
        }
        let csv = out.trace.to_csv();
        prop_assert_eq!(csv.lines().count(), e.len() + 1);
    }

    #[test]
    fn sweep_points_are_independent_and_percentages_match(
        regime_i in 0..4usize,
        model in 0..6usize,
        seed in any::<u64>(),
        fixed in 5..40u32,
    ) {
        let p = platform(0);
        let regime = Regime::ALL[regime_i];
        let mut spec = ExperimentSpec::new("a100", regime, Model::ALL[model]);
        spec.fixed_ims = FixedIms::Value(fixed);
        spec.adjusted_sweep = Some(vec![1, fixed / 2 + 1, fixed]);
        spec.inferences_per_point = 40;
        spec.seed = seed;
        let exp = bench::run_sweep(&spec, &p, &SearchConfig::default()).unwrap();
        for (i, row) in exp.rows.iter().enumerate() {
            let alone = bench::run_point(&spec, &p, fixed, row.adjusted_ims, i).unwrap();
            prop_assert_eq!(row, &bench::ResultRow::from_result(row.adjusted_ims, &alone));
            let pct = 100.0 * row.fixed_timeouts as f64 / row.fixed_issued as f64;
            prop_assert!((pct - row.fixed_timeout_pct).abs() < 1e-9);
            let pct = 100.0 * row.adjusted_timeouts as f64 / row.adjusted_issued as f64;
            prop_assert!((pct - row.adjusted_timeout_pct).abs() < 1e-9);
        }
    }

    #[test]
    fn mig_rows_without_residual_match_the_solo_fixed_process(
        model in 0..6usize,
        seed in any::<u64>(),
        adjusted in 1..150u32,
    ) {
        let p = platform(0);
        let mut spec = ExperimentSpec::new("a100", Regime::Mig, Model::ALL[model]);
        spec.mig_residual_eps = Some(0.0);
        spec.inferences_per_point = 100;
        spec.seed = seed;
        let fixed = 40;
        let cfg = bench::point_config(&spec, &p, fixed, adjusted, 0).unwrap();
        let mut solo = cfg.clone();
        solo.processes.truncate(1);
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&solo).unwrap();
        prop_assert_eq!(a.process(0), b.process(0));
    }
}

#[test]
fn mig_layouts_respect_capacity() {
    let gpu = GpuSpec::a100();
    for plan in enumerate_mig_layouts(&gpu).unwrap() {
        let gpcs: u32 = plan.partitions.iter().map(|p| p.gpcs).sum();
        let mem: f64 = plan.partitions.iter().map(|p| p.mem_share).sum();
        assert!(gpcs <= gpu.gpc_count);
        assert!(mem <= 1.0 + 1e-9);
        assert!(plan.violations(&gpu).is_empty());
        for p in &plan.partitions {
            assert!(gpu.mig_sizes.contains(&p.gpcs));
            assert_eq!(partition_sm_count(Regime::Mig, p, &gpu), p.gpcs * gpu.sms_per_gpc());
        }
    }
    for a in &gpu.mig_sizes {
        for b in &gpu.mig_sizes {
            let fits = a + b <= gpu.gpc_count;
            assert_eq!(PartitionPlan::mig(&gpu, &[*a, *b]).is_ok(), fits, "{a}+{b}");
        }
    }
}

#[test]
fn gc_layouts_respect_capacity() {
    for gpu in [GpuSpec::a100(), GpuSpec::orin_nano(), GpuSpec::orin_agx()] {
        for plan in enumerate_gc_plans(&gpu).unwrap() {
            let sms: u32 = plan.partitions.iter().map(|p| p.sms).sum();
            assert!(sms <= gpu.total_sms, "{}", gpu.name);
            assert!(plan.violations(&gpu).is_empty());
        }
    }
}

#[test]
fn impact_throughput_never_drops_with_size() {
    for (name, regime) in [("a100", Regime::Mig), ("orin-nano", Regime::Gc), ("orin-agx", Regime::Gc)] {
        let p = Platform::builtin(name).unwrap();
        let sizes = match regime {
            Regime::Mig => p.gpu.mig_sizes.clone(),
            _ => gpushare::partition::gc_valid_sizes(&p.gpu).unwrap(),
        };
        for model in Model::ALL {
            let rows = bench::partition_impact_sweep(&p, model, regime, &sizes, &ImpactOptions::default()).unwrap();
            for w in rows.windows(2) {
                assert!(
                    w[1].throughput >= w[0].throughput - 1.0 / ImpactOptions::default().horizon_s,
                    "{name} {model}: {} -> {}",
                    w[0].throughput,
                    w[1].throughput
                );
                assert!(w[1].sms > w[0].sms);
            }
        }
    }
}
