//! Command-line front end: train networks, generate attacks, extract
//! topological features, run detectors, and emit reports.
//!
//! Every subcommand takes `--config <file>` (a JSON `ExperimentConfig`,
//! partial files are filled with defaults) and `--seed`. Expensive artifacts
//! are cached under `$TOPODETECT_CACHE_DIR` when set. Exit codes: 0 success,
//! 2 validation error, 3 numeric failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use topodetect::detector::DetectionReport;
use topodetect::graph::SelectionCriterion;
use topodetect::nn::save_network;
use topodetect::pipeline::cache::Cache;
use topodetect::pipeline::data::subset;
use topodetect::pipeline::report::{
    report_csv_row, report_to_json, svg_histogram, svg_line_chart, REPORT_CSV_HEADER,
};
use topodetect::pipeline::{
    export_diagrams, export_vectors, prepare, prepare_network, run_detection,
    run_edge_comparison, run_pruning_sweep, DetectorMode, ExperimentConfig, FeatureKind,
};
use topodetect::{Error, Result};

#[derive(Parser)]
#[command(name = "topodetect", version, about = "Detect adversarial inputs from activation-graph topology")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration; missing fields use the toy defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment seed (overrides the config's seed).
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config: ExperimentConfig = match &self.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured network and save it as a weight file.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output weight file.
        #[arg(long, default_value = "network.nwc")]
        out: PathBuf,
    },
    /// Build the adversarial dataset for the configured attack.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Output adversarial dataset file.
        #[arg(long, default_value = "adversarial.adv")]
        out: PathBuf,
    },
    /// Extract per-input features (diagram CSVs or feature vectors).
    Extract {
        #[command(flatten)]
        common: Common,
        /// Feature kind: pd | rg | counts.
        #[arg(long)]
        feature: Option<String>,
        /// Fraction of edges kept per layer.
        #[arg(long)]
        q: Option<f64>,
        /// Selection criterion: mi | lf.
        #[arg(long)]
        criterion: Option<String>,
        /// Comma-separated parameterized-layer ordinals (default: all).
        #[arg(long)]
        layers: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "features")]
        out_dir: PathBuf,
    },
    /// Run the full detection pipeline and write a report.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Detector mode: unsup | sup.
        #[arg(long)]
        mode: Option<String>,
        /// Report JSON path.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Optional flat CSV row (header + one row).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Prune increasing fractions of under-optimized weights and re-attack.
    PruneSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated prune fractions.
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        fractions: String,
        /// Output CSV path.
        #[arg(long, default_value = "prune_sweep.csv")]
        out: PathBuf,
    },
    /// Run detection twice: under-optimized vs well-optimized edges.
    CompareEdges {
        #[command(flatten)]
        common: Common,
        /// Output directory for the two reports.
        #[arg(long, default_value = "edge_comparison")]
        out_dir: PathBuf,
    },
    /// Combine report JSONs into a CSV table and SVG charts.
    Report {
        /// Report JSON files produced by `detect`.
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "report_out")]
        out_dir: PathBuf,
    },
}

fn parse_feature(s: &str) -> Result<FeatureKind> {
    match s {
        "pd" => Ok(FeatureKind::Pd),
        "rg" => Ok(FeatureKind::Rg),
        "counts" => Ok(FeatureKind::PdCounts),
        other => Err(Error::Config(format!(
            "unknown feature {:?} (expected pd | rg | counts)",
            other
        ))),
    }
}

fn parse_criterion(s: &str) -> Result<SelectionCriterion> {
    match s {
        "mi" => Ok(SelectionCriterion::MagnitudeIncrease),
        "lf" => Ok(SelectionCriterion::LargeFinal),
        other => Err(Error::Config(format!(
            "unknown criterion {:?} (expected mi | lf)",
            other
        ))),
    }
}

fn parse_mode(s: &str) -> Result<DetectorMode> {
    match s {
        "unsup" => Ok(DetectorMode::Unsupervised),
        "sup" => Ok(DetectorMode::Supervised),
        other => Err(Error::Config(format!(
            "unknown mode {:?} (expected unsup | sup)",
            other
        ))),
    }
}

fn parse_float_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {:?}", p)))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let cache = Cache::from_env();
    match cli.command {
        Command::Train { common, out } => {
            let config = common.load()?;
            let (net, dataset, split) = prepare_network(&config, &cache)?;
            save_network(&net, &out)?;
            let test = subset(&dataset, &split.test);
            let acc = net.accuracy(&test.inputs, &test.labels)?;
            println!(
                "trained network saved to {} (test accuracy {:.4})",
                out.display(),
                acc
            );
        }
        Command::Attack { common, out } => {
            let config = common.load()?;
            let prepared = prepare(&config, &cache)?;
            topodetect::attack::save_adv_dataset(
                &prepared.adv,
                &prepared.network,
                &config.attack,
                &out,
            )?;
            println!(
                "adversarial dataset saved to {} ({} adversaries, success rate {:.4})",
                out.display(),
                prepared.adv.adv.len(),
                prepared.adv.success_rate
            );
        }
        Command::Extract {
            common,
            feature,
            q,
            criterion,
            layers,
            out_dir,
        } => {
            let mut config = common.load()?;
            if let Some(f) = feature.as_deref() {
                config.feature = parse_feature(f)?;
            }
            if let Some(q) = q {
                config.q = q;
            }
            if let Some(c) = criterion.as_deref() {
                config.criterion = parse_criterion(c)?;
            }
            if let Some(l) = layers.as_deref() {
                let idx: Vec<usize> = l
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| {
                        p.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Config(format!("bad layer index {:?}", p)))
                    })
                    .collect::<Result<_>>()?;
                config.layers = Some(idx);
            }
            config.validate()?;
            fs::create_dir_all(&out_dir)?;
            match config.feature {
                FeatureKind::Pd => {
                    let diagrams = export_diagrams(&config, &cache)?;
                    let n = diagrams.len();
                    for (name, csv) in diagrams {
                        fs::write(out_dir.join(format!("{}.csv", name)), csv)?;
                    }
                    println!("wrote {} diagram CSVs to {}", n, out_dir.display());
                }
                kind => {
                    let vectors = export_vectors(&config, &cache, kind)?;
                    let mut text = String::from("id,values...\n");
                    for (name, v) in &vectors {
                        let vals: Vec<String> =
                            v.iter().map(|x| format!("{:.16e}", x)).collect();
                        text.push_str(&format!("{},{}\n", name, vals.join(",")));
                    }
                    let path = out_dir.join("features.csv");
                    fs::write(&path, text)?;
                    println!("wrote {} feature rows to {}", vectors.len(), path.display());
                }
            }
        }
        Command::Detect {
            common,
            mode,
            out,
            csv,
        } => {
            let mut config = common.load()?;
            if let Some(m) = mode.as_deref() {
                config.mode = parse_mode(m)?;
            }
            let report = run_detection(&config, &cache)?;
            fs::write(&out, report_to_json(&report)?)?;
            if let Some(csv_path) = csv {
                fs::write(
                    &csv_path,
                    format!("{}\n{}\n", REPORT_CSV_HEADER, report_csv_row(&report)),
                )?;
            }
            println!(
                "auc {:.4} (80% ci [{:.4}, {:.4}]) -> {}",
                report.auc,
                report.ci_low,
                report.ci_high,
                out.display()
            );
        }
        Command::PruneSweep {
            common,
            fractions,
            out,
        } => {
            let config = common.load()?;
            let fractions = parse_float_list(&fractions)?;
            let rows = run_pruning_sweep(&config, &cache, &fractions)?;
            let mut text = String::from("fraction,clean_accuracy,adversarial_accuracy\n");
            for row in &rows {
                if row.degenerate {
                    eprintln!(
                        "warning: fraction {} zeroes every parameter; evaluated anyway",
                        row.fraction
                    );
                }
                text.push_str(&format!(
                    "{},{},{}\n",
                    row.fraction, row.clean_accuracy, row.adversarial_accuracy
                ));
                println!(
                    "prune {:.2}: clean {:.4}, adversarial {:.4}",
                    row.fraction, row.clean_accuracy, row.adversarial_accuracy
                );
            }
            fs::write(&out, text)?;
            println!("sweep written to {}", out.display());
        }
        Command::CompareEdges { common, out_dir } => {
            let config = common.load()?;
            let cmp = run_edge_comparison(&config, &cache)?;
            fs::create_dir_all(&out_dir)?;
            fs::write(
                out_dir.join("under_optimized.json"),
                report_to_json(&cmp.under_optimized)?,
            )?;
            fs::write(
                out_dir.join("well_optimized.json"),
                report_to_json(&cmp.well_optimized)?,
            )?;
            println!(
                "under-optimized auc {:.4} vs well-optimized auc {:.4} -> {}",
                cmp.under_optimized.auc,
                cmp.well_optimized.auc,
                out_dir.display()
            );
        }
        Command::Report { inputs, out_dir } => {
            fs::create_dir_all(&out_dir)?;
            let mut reports = Vec::new();
            for path in &inputs {
                let report: DetectionReport =
                    serde_json::from_str(&fs::read_to_string(path)?)?;
                reports.push(report);
            }
            let mut csv = String::from(REPORT_CSV_HEADER);
            csv.push('\n');
            for r in &reports {
                csv.push_str(&report_csv_row(r));
                csv.push('\n');
            }
            fs::write(out_dir.join("reports.csv"), csv)?;

            // AUC vs epsilon, one line per feature kind.
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for r in &reports {
                let feature = r
                    .config
                    .get("feature")
                    .and_then(|v| v.as_str())
                    .unwrap_or("?")
                    .to_string();
                let eps = r
                    .config
                    .get("epsilon")
                    .and_then(serde_json::Value::as_f64)
                    .unwrap_or(0.0);
                match series.iter_mut().find(|(name, _)| *name == feature) {
                    Some((_, pts)) => pts.push((eps, r.auc)),
                    None => series.push((feature, vec![(eps, r.auc)])),
                }
            }
            fs::write(
                out_dir.join("auc_vs_epsilon.svg"),
                svg_line_chart("detection AUC vs attack strength", "epsilon", "auc", &series),
            )?;

            // Score histogram from the first report.
            if let Some(first) = reports.first() {
                let clean: Vec<f64> = first
                    .scores
                    .iter()
                    .zip(&first.labels)
                    .filter(|(_, &l)| l)
                    .map(|(s, _)| *s)
                    .collect();
                let adv: Vec<f64> = first
                    .scores
                    .iter()
                    .zip(&first.labels)
                    .filter(|(_, &l)| !l)
                    .map(|(s, _)| *s)
                    .collect();
                fs::write(
                    out_dir.join("score_histogram.svg"),
                    svg_histogram(
                        "detector scores",
                        "decision value",
                        &[("clean".into(), clean), ("adversarial".into(), adv)],
                        24,
                    ),
                )?;
            }
            println!(
                "combined {} reports into {}",
                reports.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
