//! `gridshare` command-line tool.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric/fit error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridshare::fleet::{synthesize_fleet, write_fleet_csv, FleetSynthesisConfig};
use gridshare::forecast::forecast_holdout;
use gridshare::percolation::{percolation_curve, DEFAULT_TRIALS};
use gridshare::study::{
    csv_string, predict_grid_energy, read_series, run_study, settle_study, ReportFormat, StudyConfig,
    DEFAULT_HOLDOUT_LEN, DEFAULT_TRAIN_LEN, SETTLEMENT_HEADER,
};
use gridshare::topology::{neighboring_pairs, partition, FeederGraph, ScenarioSelection};
use gridshare::visibility::build_visibility_fast;
use gridshare::{Error, Result};

#[derive(Parser)]
#[command(name = "gridshare", version, about = "P2P energy sharing, percolation resilience and grid-energy forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Study config plus the overrides shared by study-driven verbs.
#[derive(Args)]
struct StudyArgs {
    /// Study config JSON (or a study manifest); defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// singles | pairs | all | everything
    #[arg(long)]
    scenarios: Option<ScenarioSelection>,
    #[arg(long)]
    threads: Option<usize>,
}

impl StudyArgs {
    fn load(&self) -> Result<StudyConfig> {
        let mut config = match &self.config {
            Some(path) => StudyConfig::load(path)?,
            None => StudyConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        if let Some(s) = self.scenarios {
            config.scenarios = s;
        }
        if self.threads.is_some() {
            config.threads = self.threads;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a fleet and write it as fleet CSV.
    Synth {
        /// Fleet synthesis JSON; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        houses: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split a feeder into microgrids and list neighboring pairs.
    Partition {
        /// Feeder JSON; the bundled feeder when absent.
        #[arg(long)]
        topology: Option<PathBuf>,
        /// Comma-separated switches to open (default: the feeder's set).
        #[arg(long, value_delimiter = ',')]
        open: Option<Vec<String>>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Settle annual costs and grid energy per scenario.
    Settle {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percolation curve and threshold of a series' visibility graph.
    Resilience {
        /// Headed CSV holding the series.
        #[arg(long)]
        series: PathBuf,
        /// Column to read (default: the first).
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the visibility graph as an edge list.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Curve CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ARIMA holdout forecast of a series, or of a study scenario.
    Forecast {
        #[command(flatten)]
        study: StudyArgs,
        /// Headed CSV series to forecast instead of a study scenario.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long)]
        column: Option<String>,
        #[arg(long)]
        train_len: Option<usize>,
        #[arg(long)]
        holdout_len: Option<usize>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full study: settlement, percolation thresholds, pair deltas,
    /// forecast and manifest, written to an output directory.
    Study {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        format: Option<ReportFormat>,
        /// Output directory (replaces the config's).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            config,
            seed,
            houses,
            days,
            out,
        } => {
            let mut spec = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                    serde_json::from_str::<FleetSynthesisConfig>(&text)
                        .map_err(|e| Error::Config(format!("fleet synthesis config: {e}")))?
                }
                None => FleetSynthesisConfig {
                    houses: 516,
                    ..FleetSynthesisConfig::default()
                },
            };
            if let Some(h) = houses {
                spec.houses = h;
            }
            if let Some(d) = days {
                spec.days = d;
            }
            let fleet = synthesize_fleet(&spec, seed)?;
            let mut buf = Vec::new();
            write_fleet_csv(&mut buf, &fleet)?;
            emit(out.as_deref(), &String::from_utf8(buf).expect("csv output is utf-8"))
        }
        Command::Partition {
            topology,
            open,
            format,
            out,
        } => {
            let feeder = match topology {
                Some(path) => FeederGraph::load(path)?,
                None => FeederGraph::bundled(),
            };
            let state = match open {
                Some(open) => feeder.switch_state_with_open(&open)?,
                None => feeder.default_switch_state(),
            };
            let part = partition(&feeder, &state)?;
            let pairs = neighboring_pairs(&feeder, &part);
            let mgs = &part.microgrids;
            let text = match format {
                ReportFormat::Csv => {
                    let mut text = String::from("microgrid,nodes,houses,neighbors\n");
                    for (i, mg) in mgs.iter().enumerate() {
                        let neighbors: Vec<&str> = pairs
                            .iter()
                            .filter_map(|&(a, b)| match (a == i, b == i) {
                                (true, _) => Some(mgs[b].id.as_str()),
                                (_, true) => Some(mgs[a].id.as_str()),
                                _ => None,
                            })
                            .collect();
                        text.push_str(&format!(
                            "{},{},{},{}\n",
                            mg.name(),
                            mg.nodes.len(),
                            mg.houses.len(),
                            neighbors.join(";")
                        ));
                    }
                    text
                }
                ReportFormat::Json => {
                    let named: Vec<[String; 2]> = pairs.iter().map(|&(a, b)| [mgs[a].name(), mgs[b].name()]).collect();
                    let value = serde_json::json!({ "partition": part, "neighboring_pairs": named });
                    serde_json::to_string_pretty(&value)? + "\n"
                }
            };
            emit(out.as_deref(), &text)
        }
        Command::Settle { study, format, out } => {
            let rows = settle_study(&study.load()?)?;
            let text = match format {
                ReportFormat::Csv => csv_string(&rows, &SETTLEMENT_HEADER)?,
                ReportFormat::Json => serde_json::to_string_pretty(&rows)? + "\n",
            };
            emit(out.as_deref(), &text)
        }
        Command::Resilience {
            series,
            column,
            trials,
            seed,
            edges,
            out,
        } => {
            let file = fs::File::open(&series)
                .map_err(|e| Error::Input(format!("cannot open {}: {e}", series.display())))?;
            let values = read_series(file, column.as_deref())?;
            let graph = build_visibility_fast(&values)?;
            if let Some(path) = edges {
                graph.write_edge_list(fs::File::create(path)?)?;
            }
            let curve = percolation_curve(&graph, trials, seed)?;
            emit(out.as_deref(), &curve.to_csv())
        }
        Command::Forecast {
            study,
            series,
            column,
            train_len,
            holdout_len,
            format,
            out,
        } => {
            let report = match series {
                Some(path) => {
                    let file = fs::File::open(&path)
                        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
                    let values = read_series(file, column.as_deref())?;
                    forecast_holdout(
                        &values,
                        train_len.unwrap_or(DEFAULT_TRAIN_LEN),
                        holdout_len.unwrap_or(DEFAULT_HOLDOUT_LEN),
                    )?
                }
                None => {
                    let mut config = study.load()?;
                    let mut settings = config.forecast.clone().unwrap_or_default();
                    if let Some(t) = train_len {
                        settings.train_len = t;
                    }
                    if let Some(h) = holdout_len {
                        settings.holdout_len = h;
                    }
                    config.forecast = Some(settings);
                    predict_grid_energy(&config)?
                }
            };
            let text = match format {
                ReportFormat::Csv => report.to_csv(),
                ReportFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
            };
            emit(out.as_deref(), &text)
        }
        Command::Study { study, format, out } => {
            let mut config = study.load()?;
            if let Some(f) = format {
                config.format = f;
            }
            if let Some(dir) = out {
                config.output_dir = dir;
            }
            let report = run_study(&config)?;
            for row in &report.rows {
                println!(
                    "{:<12} savings {:>6.2}%  PT without {:.5}  with {:.5}",
                    row.scenario, row.savings_pct, row.pt_without_p2p, row.pt_with_p2p
                );
            }
            println!("wrote {}", config.output_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gridshare: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
