//! Scenario files, result/metadata files and the summary built from them.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{Experiment, ExperimentSpec, FixedIms, ImpactRow, ResultRow};
use crate::error::{Error, Result};
use crate::partition::Regime;
use crate::search::SearchConfig;
use crate::sim::SimResult;
use crate::workload::Model;

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_inferences() -> u64 {
    1000
}

fn default_n() -> u32 {
    2
}

/// A TOML scenario: one device, optional searches, sweeps and impact runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub device: String,
    /// Extra `[[device]]` records, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devices_file: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSection>,
    #[serde(default, rename = "experiment", skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<ExperimentEntry>,
    #[serde(default, rename = "impact", skip_serializing_if = "Vec::is_empty")]
    pub impacts: Vec<ImpactEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Defaults to every model.
    #[serde(default)]
    pub models: Vec<Model>,
    pub regimes: Vec<Regime>,
    #[serde(default)]
    pub config: Option<SearchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEntry {
    pub name: String,
    pub regime: Regime,
    pub model: Model,
    #[serde(default = "default_n")]
    pub n_processes: u32,
    #[serde(default)]
    pub fixed_ims: FixedIms,
    #[serde(default)]
    pub adjusted_sweep: Option<Vec<u32>>,
    #[serde(default = "default_inferences")]
    pub inferences_per_point: u64,
    /// Overrides the scenario seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub agx_equivalence: bool,
    #[serde(default)]
    pub mig_residual_eps: Option<f64>,
    #[serde(default)]
    pub partitions: Option<Vec<u32>>,
    /// Also write the telemetry of the top sweep point.
    #[serde(default)]
    pub telemetry: bool,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactEntry {
    pub model: Model,
    pub regime: Regime,
    #[serde(default)]
    pub sizes: Vec<u32>,
}

impl Scenario {
    pub fn parse(src: &str, location: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(src).map_err(|e| Error::parse(location, e))?;
        sc.validate(location)?;
        Ok(sc)
    }

    /// Loads `path`; relative `out` and `devices_file` resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path)?;
        let mut sc = Self::parse(&src, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        if sc.out.is_relative() {
            sc.out = base.join(&sc.out);
        }
        if let Some(d) = &sc.devices_file {
            if d.is_relative() {
                sc.devices_file = Some(base.join(d));
            }
        }
        Ok(sc)
    }

    fn validate(&self, location: &str) -> Result<()> {
        let mut names: Vec<&str> = Vec::new();
        for (i, e) in self.experiments.iter().enumerate() {
            let at = format!("{location}: experiment[{i}]");
            if e.name.is_empty() || !e.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::parse(at, format!("name `{}` must be [A-Za-z0-9_-]+", e.name)));
            }
            if names.contains(&e.name.as_str()) {
                return Err(Error::parse(at, format!("duplicate experiment name `{}`", e.name)));
            }
            names.push(&e.name);
        }
        Ok(())
    }

    pub fn experiment_spec(&self, entry: &ExperimentEntry) -> ExperimentSpec {
        ExperimentSpec {
            platform: self.device.clone(),
            regime: entry.regime,
            model: entry.model,
            n_processes: entry.n_processes,
            fixed_ims: entry.fixed_ims,
            adjusted_sweep: entry.adjusted_sweep.clone(),
            inferences_per_point: entry.inferences_per_point,
            seed: entry.seed.unwrap_or(self.seed),
            agx_equivalence: entry.agx_equivalence,
            mig_residual_eps: entry.mig_residual_eps,
            partitions: entry.partitions.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FixedTimeoutPct,
    AdjustedTimeoutPct,
    AvgPowerW,
    ThrottleEvents,
    MeanFreqHz,
}

impl Metric {
    pub fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::FixedTimeoutPct => row.fixed_timeout_pct,
            Metric::AdjustedTimeoutPct => row.adjusted_timeout_pct,
            Metric::AvgPowerW => row.avg_power_w,
            Metric::ThrottleEvents => row.throttle_events as f64,
            Metric::MeanFreqHz => row.mean_freq_hz,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::FixedTimeoutPct => "fixed_timeout_pct",
            Metric::AdjustedTimeoutPct => "adjusted_timeout_pct",
            Metric::AvgPowerW => "avg_power_w",
            Metric::ThrottleEvents => "throttle_events",
            Metric::MeanFreqHz => "mean_freq_hz",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
}

impl Op {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Op::Lt => lhs < rhs,
            Op::Le => lhs <= rhs,
            Op::Gt => lhs > rhs,
            Op::Ge => lhs >= rhs,
            Op::Eq => lhs == rhs,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Eq => "==",
        })
    }
}

/// Which rows an expectation constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowSelector {
    #[default]
    All,
    Top,
    Ims(u32),
}

impl Serialize for RowSelector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RowSelector::All => s.serialize_str("all"),
            RowSelector::Top => s.serialize_str("top"),
            RowSelector::Ims(v) => s.serialize_u32(*v),
        }
    }
}

impl<'de> Deserialize<'de> for RowSelector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(RowSelector::Ims(v)),
            Raw::Text(t) if t == "all" => Ok(RowSelector::All),
            Raw::Text(t) if t == "top" => Ok(RowSelector::Top),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "rows must be \"all\", \"top\" or an adjusted IMS, got `{t}`"
            ))),
        }
    }
}

/// `metric op value` over the selected rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub metric: Metric,
    pub op: Op,
    pub value: f64,
    #[serde(default)]
    pub rows: RowSelector,
}

impl Expectation {
    /// One message per violating row; a selector matching nothing is a
    /// violation too.
    pub fn check(&self, rows: &[ResultRow]) -> Vec<String> {
        let selected: Vec<&ResultRow> = match self.rows {
            RowSelector::All => rows.iter().collect(),
            RowSelector::Top => rows.last().into_iter().collect(),
            RowSelector::Ims(v) => rows.iter().filter(|r| r.adjusted_ims == v).collect(),
        };
        if selected.is_empty() {
            return vec![format!("{self}: no matching row")];
        }
        selected
            .into_iter()
            .filter(|r| !self.op.holds(self.metric.of(r), self.value))
            .map(|r| {
                format!(
                    "{self}: row adjusted_ims={} has {}={}",
                    r.adjusted_ims,
                    self.metric,
                    self.metric.of(r)
                )
            })
            .collect()
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = match self.rows {
            RowSelector::All => "all".to_string(),
            RowSelector::Top => "top".to_string(),
            RowSelector::Ims(v) => format!("ims {v}"),
        };
        write!(f, "{} {} {} [{rows}]", self.metric, self.op, self.value)
    }
}

/// Companion of a results file. The timestamp lives only here so result
/// files stay byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMeta {
    pub name: String,
    pub spec: ExperimentSpec,
    pub fixed_ims: u32,
    pub results_file: String,
    #[serde(default)]
    pub telemetry_file: Option<String>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
    pub generated_unix_s: u64,
    pub tool_version: String,
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `<name>.csv`, `<name>.meta.json` and, when given, the telemetry
/// of one sweep point as `<name>.telemetry.csv`.
pub fn write_experiment(
    dir: &Path,
    name: &str,
    exp: &Experiment,
    expect: &[Expectation],
    telemetry: Option<&SimResult>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let results_file = format!("{name}.csv");
    let mut written = vec![dir.join(&results_file)];
    fs::write(&written[0], exp.to_csv())?;
    let telemetry_file = match telemetry {
        Some(r) => {
            let f = format!("{name}.telemetry.csv");
            fs::write(dir.join(&f), r.telemetry_csv())?;
            written.push(dir.join(&f));
            Some(f)
        }
        None => None,
    };
    let meta = ExperimentMeta {
        name: name.to_string(),
        spec: exp.spec.clone(),
        fixed_ims: exp.fixed_ims,
        results_file,
        telemetry_file,
        expect: expect.to_vec(),
        generated_unix_s: unix_now(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let meta_path = dir.join(format!("{name}.meta.json"));
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("metadata serializes"))?;
    written.push(meta_path);
    Ok(written)
}

pub fn parse_results_csv(src: &str, location: &str) -> Result<Vec<ResultRow>> {
    let mut lines = src.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ResultRow::HEADER => {}
        _ => return Err(Error::parse(location, "missing or unexpected header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| ResultRow::parse_csv_line(l).map_err(|m| Error::parse(format!("{location}:{}", i + 1), m)))
        .collect()
}

pub fn read_experiment(meta_path: &Path) -> Result<(ExperimentMeta, Vec<ResultRow>)> {
    let loc = meta_path.display().to_string();
    let src = fs::read_to_string(meta_path)?;
    let meta: ExperimentMeta = serde_json::from_str(&src).map_err(|e| Error::parse(&loc, e))?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let csv_path = dir.join(&meta.results_file);
    let csv = fs::read_to_string(&csv_path)
        .map_err(|e| Error::parse(csv_path.display().to_string(), e))?;
    let rows = parse_results_csv(&csv, &csv_path.display().to_string())?;
    // Printed percentages carry four decimals; counts are exact.
    let pct_ok = |pct: f64, t: u64, n: u64| {
        (0.0..=100.0).contains(&pct) && (n == 0 || (pct - 100.0 * t as f64 / n as f64).abs() <= 1e-3)
    };
    for r in &rows {
        if !pct_ok(r.fixed_timeout_pct, r.fixed_timeouts, r.fixed_issued)
            || !pct_ok(r.adjusted_timeout_pct, r.adjusted_timeouts, r.adjusted_issued)
        {
            return Err(Error::parse(
                csv_path.display().to_string(),
                format!("row adjusted_ims={} disagrees with its counts", r.adjusted_ims),
            ));
        }
    }
    Ok((meta, rows))
}

/// Search results file: one line per (model, regime).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub model: Model,
    pub platform: String,
    pub regime: Regime,
    pub final_ims: u32,
    pub cap_reached: bool,
}

impl SearchRecord {
    pub const HEADER: &'static str = "model,platform,regime,final_ims,cap_reached";
    pub const FILE: &'static str = "search.csv";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.model, self.platform, self.regime, self.final_ims, self.cap_reached
        )
    }

    pub fn summary_line(&self) -> String {
        let cap = if self.cap_reached { " (cap reached)" } else { "" };
        format!("{} {} {} {}{cap}", self.model, self.platform, self.regime, self.final_ims)
    }
}

pub fn search_csv(records: &[SearchRecord]) -> String {
    let mut out = format!("{}\n", SearchRecord::HEADER);
    for r in records {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_search_csv(src: &str, location: &str) -> Result<Vec<SearchRecord>> {
    let mut lines = src.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SearchRecord::HEADER => {}
        _ => return Err(Error::parse(location, "missing or unexpected header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let at = || format!("{location}:{}", i + 1);
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::parse(at(), format!("expected 5 columns, found {}", f.len())));
            }
            Ok(SearchRecord {
                model: f[0].parse().map_err(|e: Error| Error::parse(at(), e))?,
                platform: f[1].to_string(),
                regime: f[2].parse().map_err(|e: Error| Error::parse(at(), e))?,
                final_ims: f[3].parse().map_err(|_| Error::parse(at(), format!("bad IMS `{}`", f[3])))?,
                cap_reached: f[4].parse().map_err(|_| Error::parse(at(), format!("bad flag `{}`", f[4])))?,
            })
        })
        .collect()
}

pub fn impact_csv(rows: &[ImpactRow]) -> String {
    let mut out = format!("{}\n", ImpactRow::HEADER);
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Headline numbers of one sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Headline {
    pub name: String,
    pub platform: String,
    pub regime: Regime,
    pub model: Model,
    pub n_processes: u32,
    pub fixed_ims: u32,
    pub points: usize,
    pub max_fixed_timeout_pct: f64,
    /// Adjusted IMS of the row holding the maximum.
    pub max_at_ims: u32,
    pub top_fixed_timeout_pct: f64,
    pub throttle_events: u64,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Summary {
    pub searches: Vec<SearchRecord>,
    pub experiments: Vec<Headline>,
}

impl Summary {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.experiments
            .iter()
            .flat_map(|h| h.failures.iter().map(move |f| (h.name.as_str(), f.as_str())))
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.searches.is_empty() {
            out.push_str("search\n");
            for s in &self.searches {
                let _ = writeln!(out, "  {}", s.summary_line());
            }
        }
        for h in &self.experiments {
            let _ = writeln!(
                out,
                "{}: {} {} {} x{} fixed_ims={} points={}",
                h.name, h.platform, h.regime, h.model, h.n_processes, h.fixed_ims, h.points
            );
            let _ = writeln!(
                out,
                "  max fixed timeout {:.2}% (adjusted {}), top point {:.2}%, throttle events {}",
                h.max_fixed_timeout_pct, h.max_at_ims, h.top_fixed_timeout_pct, h.throttle_events
            );
            if h.failures.is_empty() {
                out.push_str("  expectations: ok\n");
            } else {
                for f in &h.failures {
                    let _ = writeln!(out, "  FAILED {f}");
                }
            }
        }
        out
    }
}

pub fn headline(meta: &ExperimentMeta, rows: &[ResultRow]) -> Headline {
    let (max_at_ims, max_fixed_timeout_pct) = rows
        .iter()
        .map(|r| (r.adjusted_ims, r.fixed_timeout_pct))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    Headline {
        name: meta.name.clone(),
        platform: meta.spec.platform.clone(),
        regime: meta.spec.regime,
        model: meta.spec.model,
        n_processes: meta.spec.n_processes,
        fixed_ims: meta.fixed_ims,
        points: rows.len(),
        max_fixed_timeout_pct: max_fixed_timeout_pct.max(0.0),
        max_at_ims,
        top_fixed_timeout_pct: rows.last().map_or(0.0, |r| r.fixed_timeout_pct),
        throttle_events: rows.iter().map(|r| r.throttle_events).sum(),
        failures: meta.expect.iter().flat_map(|e| e.check(rows)).collect(),
    }
}

/// Summarizes every `*.meta.json` (and `search.csv`) in `dir`, in file-name
/// order.
pub fn summarize_dir(dir: &Path) -> Result<Summary> {
    let entries = fs::read_dir(dir).map_err(|e| Error::parse(dir.display().to_string(), e))?;
    let mut metas: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".meta.json")))
        .collect();
    metas.sort();
    let mut summary = Summary::default();
    let search_path = dir.join(SearchRecord::FILE);
    if search_path.exists() {
        let src = fs::read_to_string(&search_path)?;
        summary.searches = parse_search_csv(&src, &search_path.display().to_string())?;
    }
    if metas.is_empty() && summary.searches.is_empty() {
        return Err(Error::parse(dir.display().to_string(), "no result files found"));
    }
    for m in metas {
        let (meta, rows) = read_experiment(&m)?;
        summary.experiments.push(headline(&meta, &rows));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO: &str = r#"
device = "a100"
seed = 3
out = "out"

[search]
regimes = ["standalone"]
models = ["resnet18"]

[[experiment]]
name = "mig-vit"
regime = "mig"
model = "vit-b-16"
adjusted_sweep = [1, 40, 76]
telemetry = true

[[experiment.expect]]
metric = "fixed_timeout_pct"
op = "<="
value = 0.5

[[impact]]
model = "convnext-large"
regime = "mig"
sizes = [1, 2, 3, 4, 7]
"#;

    #[test]
    fn scenario_parses() {
        let sc = Scenario::parse(SCENARIO, "inline").unwrap();
        assert_eq!(sc.device, "a100");
        assert_eq!(sc.experiments.len(), 1);
        let spec = sc.experiment_spec(&sc.experiments[0]);
        assert_eq!(spec.seed, 3);
        assert_eq!(spec.fixed_ims, FixedIms::Auto);
        assert_eq!(sc.experiments[0].expect[0].rows, RowSelector::All);
        assert_eq!(sc.impacts[0].sizes, vec![1, 2, 3, 4, 7]);
    }

    #[test]
    fn unknown_key_reports_location() {
        let bad = SCENARIO.replace("telemetry = true", "telemetry = true\nbogus = 1");
        match Scenario::parse(&bad, "scenario.toml") {
            Err(Error::Parse { location, message }) => {
                assert_eq!(location, "scenario.toml");
                assert!(message.contains("bogus"), "{message}");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let dup = format!(
            "{SCENARIO}\n[[experiment]]\nname = \"mig-vit\"\nregime = \"mps\"\nmodel = \"resnet18\"\n"
        );
        assert!(matches!(Scenario::parse(&dup, "x"), Err(Error::Parse { .. })));
    }

    fn row(ims: u32, pct: f64) -> ResultRow {
        ResultRow {
            adjusted_ims: ims,
            fixed_timeout_pct: pct,
            adjusted_timeout_pct: 0.0,
            avg_power_w: 100.0,
            throttle_events: 0,
            mean_freq_hz: 1.41e9,
            fixed_timeouts: (pct * 10.0) as u64,
            fixed_issued: 1000,
            adjusted_timeouts: 0,
            adjusted_issued: u64::from(ims),
        }
    }

    #[test]
    fn expectations() {
        let rows = vec![row(1, 0.0), row(2, 0.3), row(3, 0.9)];
        let e = |rows_sel, op, value| Expectation {
            metric: Metric::FixedTimeoutPct,
            op,
            value,
            rows: rows_sel,
        };
        assert_eq!(e(RowSelector::All, Op::Le, 0.5).check(&rows).len(), 1);
        assert!(e(RowSelector::All, Op::Le, 0.5).check(&rows)[0].contains("adjusted_ims=3"));
        assert!(e(RowSelector::Top, Op::Gt, 0.5).check(&rows).is_empty());
        assert!(e(RowSelector::Ims(2), Op::Lt, 0.31).check(&rows).is_empty());
        assert_eq!(e(RowSelector::Ims(9), Op::Lt, 1.0).check(&rows).len(), 1);
    }

    #[test]
    fn search_csv_round_trip() {
        let recs = vec![SearchRecord {
            model: Model::ResNet18,
            platform: "a100".into(),
            regime: Regime::StandAlone,
            final_ims: 129,
            cap_reached: false,
        }];
        let csv = search_csv(&recs);
        assert_eq!(parse_search_csv(&csv, "x").unwrap(), recs);
        assert!(parse_search_csv("nope\n", "x").is_err());
    }

    #[test]
    fn results_header_required() {
        assert!(parse_results_csv("a,b\n1,2\n", "f").is_err());
        let ok = format!("{}\n{}\n", ResultRow::HEADER, row(1, 0.0).to_csv_line());
        assert_eq!(parse_results_csv(&ok, "f").unwrap().len(), 1);
    }
}
