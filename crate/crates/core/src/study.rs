//! End-to-end studies: fleet, microgrid partition, scenarios, settlement,
//! daily grid-energy series, percolation thresholds, a holdout forecast and
//! the report bundle written to disk.
//!
//! Every random stream is derived from the study seed and the scenario name,
//! and all reductions are order independent, so a bundle is byte-identical
//! for a fixed config whatever the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::billing::{annual_summary, ScenarioSummary};
use crate::error::{Error, Result};
use crate::fleet::{
    ingest_fleet_file, synthesize_fleet, FleetLedger, FleetSynthesisConfig, TariffSchedule, DEFAULT_INTERVAL_HOURS,
};
use crate::forecast::{forecast_holdout, ForecastReport};
use crate::percolation::{percolation_curve_with, trial_seed, Normalization, PercolationCurve, DEFAULT_TRIALS};
use crate::svg;
use crate::topology::{
    neighboring_pairs, partition, scenario_set, FeederGraph, Scenario, ScenarioKind, ScenarioSelection,
};
use crate::visibility::build_visibility_fast;

pub const DEFAULT_TRAIN_LEN: usize = 300;
pub const DEFAULT_HOLDOUT_LEN: usize = 65;
pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FleetSource {
    Synthesize(FleetSynthesisConfig),
    File {
        path: PathBuf,
        #[serde(default = "default_interval_hours")]
        interval_hours: u32,
    },
}

fn default_interval_hours() -> u32 {
    DEFAULT_INTERVAL_HOURS
}

impl Default for FleetSource {
    /// The 516-house, five-microgrid fleet of the bundled feeder.
    fn default() -> Self {
        FleetSource::Synthesize(FleetSynthesisConfig {
            houses: 516,
            ..FleetSynthesisConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown format {other:?} (csv|json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    pub train_len: usize,
    pub holdout_len: usize,
    /// Scenario to forecast; the combined scenario (or the first selected
    /// one) when absent.
    pub scenario: Option<String>,
    /// Forecast the with-P2P series (otherwise the without-P2P one).
    pub p2p: bool,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            train_len: DEFAULT_TRAIN_LEN,
            holdout_len: DEFAULT_HOLDOUT_LEN,
            scenario: None,
            p2p: true,
        }
    }
}

/// Study configuration, read from JSON. Relative paths resolve against the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub fleet: FleetSource,
    /// Feeder JSON; the bundled 123-node feeder when absent.
    #[serde(default)]
    pub topology: Option<PathBuf>,
    /// Switches to open; the feeder's default set when absent.
    #[serde(default)]
    pub open_switches: Option<Vec<String>>,
    #[serde(default = "TariffSchedule::reference")]
    pub tariff: TariffSchedule,
    #[serde(default)]
    pub scenarios: ScenarioSelection,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub normalization: Normalization,
    /// Holdout forecast; `null` disables it.
    #[serde(default = "default_forecast")]
    pub forecast: Option<ForecastSettings>,
    /// Worker threads; the rayon default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_forecast() -> Option<ForecastSettings> {
    Some(ForecastSettings::default())
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("study-out")
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            fleet: FleetSource::default(),
            topology: None,
            open_switches: None,
            tariff: TariffSchedule::reference(),
            scenarios: ScenarioSelection::default(),
            trials: DEFAULT_TRIALS,
            seed: 0,
            normalization: Normalization::default(),
            forecast: default_forecast(),
            threads: None,
            output_dir: default_output_dir(),
            format: ReportFormat::default(),
        }
    }
}

impl StudyConfig {
    /// Parses a study config, or the config embedded in a study manifest.
    pub fn from_json(json: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("study config: {e}")))?;
        let value = match value.get("manifest_version") {
            Some(_) => value
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Config("manifest without a config".into()))?,
            None => value,
        };
        let config: Self = serde_json::from_value(value).map_err(|e| Error::Config(format!("study config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read study config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if let Some(f) = &self.forecast {
            if f.holdout_len == 0 || f.train_len < 50 {
                return Err(Error::Config(format!(
                    "forecast split needs train_len >= 50 and holdout_len >= 1 (got {} and {})",
                    f.train_len, f.holdout_len
                )));
            }
        }
        let paths = [
            self.topology.as_deref(),
            match &self.fleet {
                FleetSource::File { path, .. } => Some(path.as_path()),
                FleetSource::Synthesize(c) => {
                    c.validate()?;
                    None
                }
            },
        ];
        for path in paths.into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// One row of the per-scenario table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub houses: usize,
    pub cost_without_p2p: f64,
    pub cost_with_p2p: f64,
    pub savings: f64,
    pub savings_pct: f64,
    pub grid_without_p2p_kwh: f64,
    pub grid_with_p2p_kwh: f64,
    pub pt_without_p2p: f64,
    pub pt_with_p2p: f64,
}

/// Combined scenario against the sum of its microgrids run alone, all with
/// P2P sharing: grid energy `a` (sum of singles), `b` (combined), `c = a - b`
/// and cost savings `x` (combined), `y` (sum of singles), `z = x - y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub scenario: String,
    pub a_kwh: f64,
    pub b_kwh: f64,
    pub c_kwh: f64,
    pub x_usd: f64,
    pub y_usd: f64,
    pub z_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub summary: ScenarioSummary,
    pub curve_without_p2p: PercolationCurve,
    pub curve_with_p2p: PercolationCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSeeds {
    pub scenario: String,
    pub without_p2p: u64,
    pub with_p2p: u64,
}

/// Everything needed to reproduce a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub config: StudyConfig,
    pub fleet_seed: u64,
    pub scenario_seeds: Vec<ScenarioSeeds>,
    pub forecast_seed: Option<u64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<ScenarioRow>,
    pub pair_deltas: Vec<PairDelta>,
    pub scenarios: Vec<ScenarioResult>,
    pub forecast: Option<ForecastReport>,
    pub manifest: Manifest,
}

/// Seed of the percolation stream for one named series.
pub fn series_seed(study_seed: u64, label: &str) -> u64 {
    // FNV-1a keeps the label hash stable across platforms and releases.
    let hash = label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    trial_seed(study_seed, hash)
}

fn variant_label(scenario: &str, p2p: bool) -> String {
    format!("{scenario}/{}", if p2p { "with_p2p" } else { "without_p2p" })
}

/// File-name friendly form of a scenario name (`MG-I & II` -> `mg-i-ii`).
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

struct Prepared {
    tariff: TariffSchedule,
    ledger: FleetLedger,
    scenarios: Vec<Scenario>,
}

fn prepare(config: &StudyConfig) -> Result<Prepared> {
    let fleet = match &config.fleet {
        FleetSource::Synthesize(spec) => synthesize_fleet(spec, config.seed)?,
        FleetSource::File { path, interval_hours } => {
            ingest_fleet_file(path, *interval_hours).map_err(|e| e.context(format!("fleet {}", path.display())))?
        }
    };
    let feeder = match &config.topology {
        Some(path) => FeederGraph::load(path)?,
        None => FeederGraph::bundled(),
    };
    let state = match &config.open_switches {
        Some(open) => feeder.switch_state_with_open(open)?,
        None => feeder.default_switch_state(),
    };
    let part = partition(&feeder, &state)?;
    let pairs = neighboring_pairs(&feeder, &part);
    let scenarios = scenario_set(&part, &pairs);
    let ledger = FleetLedger::build(&fleet, &config.tariff)?;
    Ok(Prepared {
        tariff: config.tariff,
        ledger,
        scenarios,
    })
}

fn summarize(prepared: &Prepared, scenario: &Scenario) -> Result<ScenarioSummary> {
    annual_summary(&prepared.ledger, &prepared.tariff, scenario).map_err(|e| e.context(format!("scenario {}", scenario.name)))
}

fn curve(series: &[f64], config: &StudyConfig, label: &str) -> Result<PercolationCurve> {
    let graph = build_visibility_fast(series)?;
    percolation_curve_with(&graph, config.trials, series_seed(config.seed, label), config.normalization)
        .map_err(|e| e.context(label.to_string()))
}

fn forecast_target<'a>(config: &StudyConfig, settings: &ForecastSettings, prepared: &'a Prepared) -> Result<&'a Scenario> {
    let by_name = |name: &str| prepared.scenarios.iter().find(|s| s.name == name);
    match &settings.scenario {
        Some(name) => by_name(name).ok_or_else(|| Error::Config(format!("unknown forecast scenario {name:?}"))),
        None => prepared
            .scenarios
            .iter()
            .find(|s| s.kind == ScenarioKind::All)
            .or_else(|| prepared.scenarios.iter().find(|s| config.scenarios.includes(s.kind)))
            .ok_or_else(|| Error::Config("no scenario to forecast".into())),
    }
}

fn run_forecast(
    config: &StudyConfig,
    settings: &ForecastSettings,
    summary: &ScenarioSummary,
) -> Result<(ForecastReport, u64)> {
    let series = if settings.p2p {
        summary.grid_with_p2p.values()
    } else {
        summary.grid_without_p2p.values()
    };
    let label = format!("{}/forecast", variant_label(&summary.scenario, settings.p2p));
    let seed = series_seed(config.seed, &label);
    let mut report = forecast_holdout(series, settings.train_len, settings.holdout_len)
        .map_err(|e| e.context(format!("forecast of {}", summary.scenario)))?;
    let graph = build_visibility_fast(&report.predictions)?;
    let predicted = percolation_curve_with(&graph, config.trials, seed, config.normalization)?;
    report.predicted_threshold = Some(predicted.threshold);
    Ok((report, seed))
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
    }
}

/// Runs the study in memory without writing anything.
pub fn compute_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    with_threads(config.threads, || compute_inner(config))
}

fn compute_inner(config: &StudyConfig) -> Result<StudyReport> {
    let prepared = prepare(config)?;
    if let Some(f) = &config.forecast {
        if f.train_len + f.holdout_len > prepared.ledger.days() {
            return Err(Error::Input(format!(
                "forecast split {} + {} exceeds the {} days of the fleet",
                f.train_len,
                f.holdout_len,
                prepared.ledger.days()
            )));
        }
    }
    let selected: Vec<&Scenario> = prepared
        .scenarios
        .iter()
        .filter(|s| config.scenarios.includes(s.kind))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!("selection {} matches no scenario", config.scenarios)));
    }

    // Singles are settled whenever a combined row needs them.
    let needs_singles = selected.iter().any(|s| s.kind != ScenarioKind::Single);
    let settle: Vec<&Scenario> = prepared
        .scenarios
        .iter()
        .filter(|s| config.scenarios.includes(s.kind) || (needs_singles && s.kind == ScenarioKind::Single))
        .collect();
    let summaries: Vec<ScenarioSummary> = settle.par_iter().map(|s| summarize(&prepared, s)).collect::<Result<_>>()?;
    let by_name: BTreeMap<&str, &ScenarioSummary> = summaries.iter().map(|s| (s.scenario.as_str(), s)).collect();

    let results: Vec<ScenarioResult> = selected
        .par_iter()
        .map(|s| {
            let summary = by_name[s.name.as_str()].clone();
            let without = curve(summary.grid_without_p2p.values(), config, &variant_label(&s.name, false))?;
            let with = curve(summary.grid_with_p2p.values(), config, &variant_label(&s.name, true))?;
            Ok(ScenarioResult {
                summary,
                curve_without_p2p: without,
                curve_with_p2p: with,
            })
        })
        .collect::<Result<_>>()?;

    let rows = results
        .iter()
        .zip(&selected)
        .map(|(r, s)| {
            let m = &r.summary;
            ScenarioRow {
                scenario: s.name.clone(),
                kind: s.kind,
                houses: m.houses,
                cost_without_p2p: m.cost_without_p2p,
                cost_with_p2p: m.cost_with_p2p,
                savings: m.savings,
                savings_pct: m.savings_pct,
                grid_without_p2p_kwh: m.grid_without_p2p.total(),
                grid_with_p2p_kwh: m.grid_with_p2p.total(),
                pt_without_p2p: r.curve_without_p2p.threshold,
                pt_with_p2p: r.curve_with_p2p.threshold,
            }
        })
        .collect();

    let singles: Vec<&Scenario> = prepared
        .scenarios
        .iter()
        .filter(|s| s.kind == ScenarioKind::Single)
        .collect();
    let pair_deltas = selected
        .iter()
        .filter(|s| s.kind != ScenarioKind::Single)
        .map(|s| {
            let combined = by_name[s.name.as_str()];
            let parts = s.microgrids.iter().map(|&i| by_name[singles[i].name.as_str()]);
            let (a, y) = parts.fold((0.0, 0.0), |(a, y), p| (a + p.grid_with_p2p.total(), y + p.savings));
            let b = combined.grid_with_p2p.total();
            let x = combined.savings;
            PairDelta {
                scenario: s.name.clone(),
                a_kwh: a,
                b_kwh: b,
                c_kwh: a - b,
                x_usd: x,
                y_usd: y,
                z_usd: x - y,
            }
        })
        .collect();

    let (forecast, forecast_seed) = match &config.forecast {
        None => (None, None),
        Some(settings) => {
            let target = forecast_target(config, settings, &prepared)?;
            let summary = match by_name.get(target.name.as_str()) {
                Some(s) => (*s).clone(),
                None => summarize(&prepared, target)?,
            };
            let (report, seed) = run_forecast(config, settings, &summary)?;
            (Some(report), Some(seed))
        }
    };

    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        // Execution settings do not change results and are left out so
        // that bundles compare byte for byte.
        config: StudyConfig {
            threads: None,
            output_dir: default_output_dir(),
            ..config.clone()
        },
        fleet_seed: config.seed,
        scenario_seeds: selected
            .iter()
            .map(|s| ScenarioSeeds {
                scenario: s.name.clone(),
                without_p2p: series_seed(config.seed, &variant_label(&s.name, false)),
                with_p2p: series_seed(config.seed, &variant_label(&s.name, true)),
            })
            .collect(),
        forecast_seed,
        files: Vec::new(),
    };
    Ok(StudyReport {
        rows,
        pair_deltas,
        scenarios: results,
        forecast,
        manifest,
    })
}

/// Cost and grid-energy columns of one scenario, without percolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRow {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub houses: usize,
    pub cost_without_p2p: f64,
    pub cost_with_p2p: f64,
    pub savings: f64,
    pub savings_pct: f64,
    pub grid_without_p2p_kwh: f64,
    pub grid_with_p2p_kwh: f64,
}

pub const SETTLEMENT_HEADER: [&str; 9] = [
    "scenario",
    "kind",
    "houses",
    "cost_without_p2p",
    "cost_with_p2p",
    "savings",
    "savings_pct",
    "grid_without_p2p_kwh",
    "grid_with_p2p_kwh",
];

/// Settles every selected scenario over the whole year.
pub fn settle_study(config: &StudyConfig) -> Result<Vec<SettlementRow>> {
    config.validate()?;
    with_threads(config.threads, || {
        let prepared = prepare(config)?;
        let selected: Vec<&Scenario> = prepared
            .scenarios
            .iter()
            .filter(|s| config.scenarios.includes(s.kind))
            .collect();
        selected
            .par_iter()
            .map(|s| {
                let m = summarize(&prepared, s)?;
                Ok(SettlementRow {
                    scenario: s.name.clone(),
                    kind: s.kind,
                    houses: m.houses,
                    cost_without_p2p: m.cost_without_p2p,
                    cost_with_p2p: m.cost_with_p2p,
                    savings: m.savings,
                    savings_pct: m.savings_pct,
                    grid_without_p2p_kwh: m.grid_without_p2p.total(),
                    grid_with_p2p_kwh: m.grid_with_p2p.total(),
                })
            })
            .collect()
    })
}

/// Selects the forecast scenario, fits on its training prefix and scores
/// the holdout; also reports the percolation threshold of the predicted
/// window.
pub fn predict_grid_energy(config: &StudyConfig) -> Result<ForecastReport> {
    config.validate()?;
    let settings = config.forecast.clone().unwrap_or_default();
    with_threads(config.threads, || {
        let prepared = prepare(config)?;
        let target = forecast_target(config, &settings, &prepared)?;
        let summary = summarize(&prepared, target)?;
        Ok(run_forecast(config, &settings, &summary)?.0)
    })
}

/// Headed CSV text of serializable rows.
pub fn csv_string<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn grid_energy_csv(results: &[ScenarioResult]) -> String {
    let mut out = String::from("day_index");
    for r in results {
        let s = slug(&r.summary.scenario);
        out.push_str(&format!(",{s}_without_p2p_kwh,{s}_with_p2p_kwh"));
    }
    out.push('\n');
    let days = results.first().map_or(0, |r| r.summary.days);
    for d in 0..days {
        out.push_str(&d.to_string());
        for r in results {
            out.push_str(&format!(
                ",{},{}",
                r.summary.grid_without_p2p.values()[d],
                r.summary.grid_with_p2p.values()[d]
            ));
        }
        out.push('\n');
    }
    out
}

/// Renders the bundle as `(relative path, contents)` pairs, manifest last.
pub fn render_bundle(report: &StudyReport, format: ReportFormat) -> Result<Vec<(String, String)>> {
    let mut files: Vec<(String, String)> = Vec::new();
    match format {
        ReportFormat::Csv => {
            files.push((
                "scenarios.csv".into(),
                csv_string(
                    &report.rows,
                    &[
                        "scenario",
                        "kind",
                        "houses",
                        "cost_without_p2p",
                        "cost_with_p2p",
                        "savings",
                        "savings_pct",
                        "grid_without_p2p_kwh",
                        "grid_with_p2p_kwh",
                        "pt_without_p2p",
                        "pt_with_p2p",
                    ],
                )?,
            ));
            files.push((
                "pair_deltas.csv".into(),
                csv_string(
                    &report.pair_deltas,
                    &["scenario", "a_kwh", "b_kwh", "c_kwh", "x_usd", "y_usd", "z_usd"],
                )?,
            ));
            files.push(("grid_energy.csv".into(), grid_energy_csv(&report.scenarios)));
            for r in &report.scenarios {
                let s = slug(&r.summary.scenario);
                files.push((format!("curves/{s}_without_p2p.csv"), r.curve_without_p2p.to_csv()));
                files.push((format!("curves/{s}_with_p2p.csv"), r.curve_with_p2p.to_csv()));
            }
            if let Some(f) = &report.forecast {
                files.push(("forecast.csv".into(), f.to_csv()));
            }
        }
        ReportFormat::Json => {
            files.push(("report.json".into(), serde_json::to_string_pretty(&ReportJson::from(report))? + "\n"));
        }
    }

    let names: Vec<String> = report.rows.iter().map(|r| r.scenario.clone()).collect();
    let without: Vec<f64> = report.rows.iter().map(|r| r.pt_without_p2p).collect();
    let with: Vec<f64> = report.rows.iter().map(|r| r.pt_with_p2p).collect();
    files.push((
        "thresholds.svg".into(),
        svg::bar_chart(
            "Percolation threshold of daily grid energy",
            &names,
            &[("without P2P", &without), ("with P2P", &with)],
        ),
    ));
    if let Some(f) = &report.forecast {
        let days: Vec<f64> = (0..f.actual.len()).map(|i| (f.train_len + i) as f64).collect();
        files.push((
            "forecast.svg".into(),
            svg::line_chart(
                "Grid energy forecast (kWh)",
                &days,
                &[("actual", &f.actual), ("predicted", &f.predictions)],
            ),
        ));
    }

    let mut manifest = report.manifest.clone();
    manifest.files = files.iter().map(|(name, _)| name.clone()).collect();
    manifest.files.push(MANIFEST_FILE.into());
    manifest.files.sort();
    files.push((MANIFEST_FILE.into(), serde_json::to_string_pretty(&manifest)? + "\n"));
    Ok(files)
}

/// JSON report: the tables and forecast, curves reduced to their thresholds
/// and grid series.
#[derive(Serialize)]
struct ReportJson<'a> {
    rows: &'a [ScenarioRow],
    pair_deltas: &'a [PairDelta],
    series: Vec<SeriesJson<'a>>,
    forecast: Option<&'a ForecastReport>,
}

#[derive(Serialize)]
struct SeriesJson<'a> {
    scenario: &'a str,
    grid_without_p2p_kwh: &'a [f64],
    grid_with_p2p_kwh: &'a [f64],
    curve_without_p2p: &'a PercolationCurve,
    curve_with_p2p: &'a PercolationCurve,
}

impl<'a> From<&'a StudyReport> for ReportJson<'a> {
    fn from(r: &'a StudyReport) -> Self {
        Self {
            rows: &r.rows,
            pair_deltas: &r.pair_deltas,
            series: r
                .scenarios
                .iter()
                .map(|s| SeriesJson {
                    scenario: &s.summary.scenario,
                    grid_without_p2p_kwh: s.summary.grid_without_p2p.values(),
                    grid_with_p2p_kwh: s.summary.grid_with_p2p.values(),
                    curve_without_p2p: &s.curve_without_p2p,
                    curve_with_p2p: &s.curve_with_p2p,
                })
                .collect(),
            forecast: r.forecast.as_ref(),
        }
    }
}

/// Writes the bundle into `dir` as a whole: files go to a sibling staging
/// directory that is renamed into place on success and removed on failure.
/// An existing `dir` is replaced only when empty or holding a previous
/// bundle.
pub fn write_bundle(files: &[(String, String)], dir: &Path) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir)?.next().is_none();
        if !empty && !dir.join(MANIFEST_FILE).exists() {
            return Err(Error::Config(format!(
                "refusing to replace {}: not empty and not a study bundle",
                dir.display()
            )));
        }
    }
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output directory {}", dir.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    let written = (|| -> Result<()> {
        for (rel, contents) in files {
            let path = staging.join(rel);
            if let Some(p) = path.parent() {
                fs::create_dir_all(p)?;
            }
            fs::write(path, contents)?;
        }
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&staging, dir)?;
        Ok(())
    })();
    if written.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    written
}

/// Reads one numeric column of a headed CSV file (the first column when
/// `column` is `None`).
pub fn read_series<R: std::io::Read>(source: R, column: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    let index = match column {
        None => 0,
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("no column {name:?} in header {headers:?}")))?,
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(index).ok_or_else(|| Error::Parse {
            line,
            message: format!("missing column {index}"),
        })?;
        let value: f64 = field.parse().map_err(|_| Error::Parse {
            line,
            message: format!("not a number: {field:?}"),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Computes the study and writes its bundle to the configured directory.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    let report = compute_study(config)?;
    let files = render_bundle(&report, config.format)?;
    write_bundle(&files, &config.output_dir)?;
    Ok(report)
}
