use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gpushare::bench::{self, Experiment, ExperimentSpec, FixedIms, ImpactOptions, Platform};
use gpushare::partition::{enumerate_gc_layouts, gc_valid_sizes};
use gpushare::report::{self, Scenario, SearchRecord};
use gpushare::search::{search_max_frequency, SimExecutor};
use gpushare::workload::{anchor_table, calibration_anchors, nominal_target_latency, predict_latency};
use gpushare::{DeviceRegistry, Error, GpuSpec, Model, Regime};

#[derive(Parser)]
#[command(name = "gpushare", version, about = "Simulate DNN inference under GPU sharing regimes")]
struct Cli {
    /// Extra device records (TOML with [[device]] tables).
    #[arg(long, global = true)]
    devices: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List valid partition sizes and how many fit at once.
    Partitions {
        #[arg(long)]
        device: String,
        #[arg(long)]
        regime: Regime,
    },
    /// Fit latency profiles to the measured IMS table and print them.
    Calibrate {
        #[arg(long)]
        device: String,
        #[arg(long)]
        model: Option<Model>,
        /// Write the profiles as TOML here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum IMS search for each (model, regime).
    Search(RunArgs),
    /// Contention sweeps.
    Bench(BenchArgs),
    /// Solo throughput/memory/power per partition size.
    Impact {
        #[command(flatten)]
        run: RunArgs,
        /// Partition sizes (GPCs for MIG, SMs for GC).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<u32>,
    },
    /// Summarize a results directory and check its expectations.
    Report {
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    device: Option<String>,
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Processes sharing the GPU (2 or 4).
    #[arg(long, default_value_t = 2)]
    processes: u32,
    /// Fixed-process rate; searched when omitted.
    #[arg(long)]
    fixed_ims: Option<u32>,
    /// Pin 1.02 GHz and 4-SM partitions.
    #[arg(long)]
    equivalence: bool,
    #[arg(long)]
    telemetry: bool,
}

enum Failure {
    Lib(Error),
    Expectations(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SearchFailed(_) | Error::Batch(_) => 3,
        Error::Parse { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = registry(cli.devices.as_deref()).map_err(Failure::from).and_then(|reg| run(cli.cmd, reg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Expectations(fails)) => {
            for f in fails {
                eprintln!("expectation failed: {f}");
            }
            ExitCode::from(5)
        }
    }
}

fn registry(extra: Option<&Path>) -> gpushare::Result<DeviceRegistry> {
    let mut reg = DeviceRegistry::builtin();
    if let Some(p) = extra {
        reg.merge(DeviceRegistry::load(p)?);
    }
    Ok(reg)
}

fn run(cmd: Cmd, reg: DeviceRegistry) -> CmdResult {
    match cmd {
        Cmd::Partitions { device, regime } => cmd_partitions(reg.get(&device)?, regime),
        Cmd::Calibrate { device, model, out } => cmd_calibrate(&reg, &device, model, out.as_deref()),
        Cmd::Search(args) => cmd_search(&reg, &args),
        Cmd::Bench(args) => cmd_bench(&reg, &args),
        Cmd::Impact { run, sizes } => cmd_impact(&reg, &run, &sizes),
        Cmd::Report { dir } => cmd_report(&dir),
    }
}

fn cmd_partitions(gpu: &GpuSpec, regime: Regime) -> CmdResult {
    println!(
        "{}: {} GPCs x {} TPCs x {} SMs = {} SMs",
        gpu.name, gpu.gpc_count, gpu.tpc_per_gpc, gpu.sm_per_tpc, gpu.total_sms
    );
    match regime {
        Regime::StandAlone | Regime::Mps => {
            println!("{regime}: whole device, {} SMs shared by every process", gpu.total_sms);
        }
        Regime::Mig => {
            if !gpu.supports_mig {
                return Err(Error::UnsupportedRegime {
                    device: gpu.name.clone(),
                    regime,
                }
                .into());
            }
            println!("mig sizes (GPCs): {}", join(&gpu.mig_sizes));
            for &g in &gpu.mig_sizes {
                let max = (1..=gpu.gpc_count / g)
                    .rev()
                    .find(|&k| gpushare::PartitionPlan::mig(gpu, &vec![g; k as usize]).is_ok())
                    .unwrap_or(0);
                println!("  {g}g ({} SMs): up to {max} concurrent", g * gpu.sms_per_gpc());
            }
        }
        Regime::Gc => {
            let sizes = gc_valid_sizes(gpu)?;
            println!("gc sizes (SMs): {}", join(&sizes));
            for &s in &sizes {
                println!("  {s} SMs: up to {} concurrent", enumerate_gc_layouts(gpu, s)?);
            }
        }
    }
    Ok(())
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
}

fn cmd_calibrate(reg: &DeviceRegistry, device: &str, model: Option<Model>, out: Option<&Path>) -> CmdResult {
    let platform = Platform::load(reg, device)?;
    let gpu = &platform.gpu;
    let mut set = platform.profiles.clone();
    if let Some(m) = model {
        set.profiles.retain(|p| p.model == m);
    }
    for p in &set.profiles {
        println!(
            "{} on {}: compute {:.6} SM-s, memory {:.6} s, saturation {} SMs",
            p.model, gpu.name, p.compute_work, p.mem_work, p.sm_saturation
        );
        for a in calibration_anchors(p.model, gpu) {
            let target = nominal_target_latency(a.ims, gpu.latency_jitter);
            let pred = predict_latency(p, a.sms, gpu.f_max_hz, a.bw_share)?;
            println!(
                "  anchor {} IMS at {} SMs / bw {:.3}: target {:.3} ms, model {:.3} ms",
                a.ims,
                a.sms,
                a.bw_share,
                target * 1e3,
                pred * 1e3
            );
        }
    }
    if !anchor_table().iter().any(|a| a.platform == gpu.name) {
        println!("(no measurements for {}; profiles ported from its reference platform)", gpu.name);
    }
    if let Some(path) = out {
        std::fs::write(path, set.to_toml()).map_err(Error::from)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Scenario from `--scenario`, or one assembled from the flags.
fn scenario_or_flags(args: &RunArgs) -> gpushare::Result<Scenario> {
    let mut sc = match &args.scenario {
        Some(p) => Scenario::load(p)?,
        None => {
            let device = args
                .device
                .clone()
                .ok_or_else(|| Error::Config("either --scenario or --device is required".into()))?;
            Scenario {
                device,
                devices_file: None,
                seed: 0,
                out: PathBuf::from("results"),
                search: None,
                experiments: Vec::new(),
                impacts: Vec::new(),
            }
        }
    };
    if let Some(d) = &args.device {
        sc.device = d.clone();
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    if let Some(o) = &args.out {
        sc.out = o.clone();
    }
    Ok(sc)
}

fn scenario_registry(reg: &DeviceRegistry, sc: &Scenario) -> gpushare::Result<DeviceRegistry> {
    let mut reg = reg.clone();
    if let Some(p) = &sc.devices_file {
        reg.merge(DeviceRegistry::load(p)?);
    }
    Ok(reg)
}

fn cmd_search(reg: &DeviceRegistry, args: &RunArgs) -> CmdResult {
    let sc = scenario_or_flags(args)?;
    let reg = scenario_registry(reg, &sc)?;
    let platform = Platform::load(&reg, &sc.device)?;
    let section = sc.search.clone();
    let regimes = match (args.regime, &section) {
        (Some(r), _) => vec![r],
        (None, Some(s)) if !s.regimes.is_empty() => s.regimes.clone(),
        _ => return Err(Error::Config("no regime given (--regime or [search].regimes)".into()).into()),
    };
    let models = match (args.model, &section) {
        (Some(m), _) => vec![m],
        (None, Some(s)) if !s.models.is_empty() => s.models.clone(),
        _ => Model::ALL.to_vec(),
    };
    let cfg = section.and_then(|s| s.config).unwrap_or_default();
    std::fs::create_dir_all(&sc.out).map_err(Error::from)?;

    let mut records = Vec::new();
    for &regime in &regimes {
        for &model in &models {
            let mut exec = SimExecutor::solo(&platform.gpu, &platform.profiles, model, regime, sc.seed)?;
            let outcome = search_max_frequency(&mut exec, &cfg)?;
            let trace_file = sc.out.join(format!("search-{}-{}-{}.trace.csv", platform.gpu.name, regime, model));
            std::fs::write(&trace_file, outcome.trace.to_csv()).map_err(Error::from)?;
            let rec = SearchRecord {
                model,
                platform: platform.gpu.name.clone(),
                regime,
                final_ims: outcome.f,
                cap_reached: outcome.cap_reached,
            };
            println!("{}", rec.summary_line());
            records.push(rec);
        }
    }
    std::fs::write(sc.out.join(SearchRecord::FILE), report::search_csv(&records)).map_err(Error::from)?;
    Ok(())
}

fn cmd_bench(reg: &DeviceRegistry, args: &BenchArgs) -> CmdResult {
    let sc = scenario_or_flags(&args.run)?;
    let reg = scenario_registry(reg, &sc)?;
    let platform = Platform::load(&reg, &sc.device)?;
    let search = sc.search.as_ref().and_then(|s| s.config.clone()).unwrap_or_default();

    let mut jobs: Vec<(String, ExperimentSpec, bool, Vec<report::Expectation>)> = sc
        .experiments
        .iter()
        .map(|e| (e.name.clone(), sc.experiment_spec(e), e.telemetry, e.expect.clone()))
        .collect();
    if jobs.is_empty() {
        let (Some(regime), Some(model)) = (args.run.regime, args.run.model) else {
            return Err(Error::Config("no experiments: give --scenario or --regime and --model".into()).into());
        };
        let mut spec = ExperimentSpec::new(&sc.device, regime, model);
        spec.n_processes = args.processes;
        spec.seed = sc.seed;
        spec.agx_equivalence = args.equivalence;
        if let Some(f) = args.fixed_ims {
            spec.fixed_ims = FixedIms::Value(f);
        }
        let name = format!(
            "{}-{}-{}-x{}{}",
            sc.device,
            regime,
            model,
            args.processes,
            if args.equivalence { "-eq" } else { "" }
        );
        jobs.push((name, spec, args.telemetry, Vec::new()));
    }

    let mut failures = Vec::new();
    for (name, spec, telemetry, expect) in jobs {
        let exp: Experiment = bench::run_sweep(&spec, &platform, &search)?;
        let tele = if telemetry || args.telemetry {
            let top = exp.rows.len() - 1;
            Some(bench::run_point(&spec, &platform, exp.fixed_ims, exp.rows[top].adjusted_ims, top)?)
        } else {
            None
        };
        let files = report::write_experiment(&sc.out, &name, &exp, &expect, tele.as_ref())?;
        let top = exp.rows.last().expect("sweeps are non-empty");
        println!(
            "{name}: fixed_ims={} points={} top fixed timeout {:.2}%",
            exp.fixed_ims,
            exp.rows.len(),
            top.fixed_timeout_pct
        );
        for f in files {
            println!("  wrote {}", f.display());
        }
        failures.extend(expect.iter().flat_map(|e| e.check(&exp.rows)).map(|f| format!("{name}: {f}")));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectations(failures))
    }
}

fn cmd_impact(reg: &DeviceRegistry, args: &RunArgs, sizes: &[u32]) -> CmdResult {
    let sc = scenario_or_flags(args)?;
    let reg = scenario_registry(reg, &sc)?;
    let platform = Platform::load(&reg, &sc.device)?;
    let mut jobs: Vec<(Model, Regime, Vec<u32>)> = sc
        .impacts
        .iter()
        .map(|i| (i.model, i.regime, i.sizes.clone()))
        .collect();
    if jobs.is_empty() {
        let (Some(regime), Some(model)) = (args.regime, args.model) else {
            return Err(Error::Config("no impact runs: give --scenario or --regime and --model".into()).into());
        };
        jobs.push((model, regime, sizes.to_vec()));
    }
    std::fs::create_dir_all(&sc.out).map_err(Error::from)?;
    let opts = ImpactOptions {
        seed: sc.seed,
        ..ImpactOptions::default()
    };
    for (model, regime, mut sizes) in jobs {
        if sizes.is_empty() {
            sizes = default_sizes(&platform.gpu, regime)?;
        }
        let rows = bench::partition_impact_sweep(&platform, model, regime, &sizes, &opts)?;
        let path = sc.out.join(format!("impact-{}-{}-{}.csv", platform.gpu.name, regime, model));
        let csv = report::impact_csv(&rows);
        print!("{csv}");
        std::fs::write(&path, csv).map_err(Error::from)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn default_sizes(gpu: &GpuSpec, regime: Regime) -> gpushare::Result<Vec<u32>> {
    match regime {
        Regime::Mig => Ok(gpu.mig_sizes.clone()),
        Regime::Gc => gc_valid_sizes(gpu),
        Regime::StandAlone | Regime::Mps => Ok(vec![gpu.total_sms]),
    }
}

fn cmd_report(dir: &Path) -> CmdResult {
    let summary = report::summarize_dir(dir)?;
    print!("{}", summary.render());
    let fails: Vec<String> = summary.failures().map(|(n, f)| format!("{n}: {f}")).collect();
    if fails.is_empty() {
        Ok(())
    } else {
        Err(Failure::Expectations(fails))
    }
}
