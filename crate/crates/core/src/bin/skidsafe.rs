//! Command-line front end: collect | train | simulate | metrics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use skidsafe::io::config::{ExperimentConfig, PRESETS};
use skidsafe::io::dataset::{self, Side};
use skidsafe::io::{model, summary, trace};
use skidsafe::lm::fit_inverse_model;
use skidsafe::metrics::metrics;
use skidsafe::scenario::run_scenario;
use skidsafe::Error;

#[derive(Parser)]
#[command(
    name = "skidsafe",
    version,
    about = "Wheel-speed control with a supervised adaptive fallback"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Source {
    /// Built-in experiment configuration.
    #[arg(long, conflicts_with = "config", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(name), None) => ExperimentConfig::preset(name)?,
            (None, Some(path)) => ExperimentConfig::load(path)?,
            _ => bail!("pass exactly one of --preset or --config"),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Sweep both plants open loop and write a dataset.
    Collect {
        #[command(flatten)]
        src: Source,
        /// Dataset CSV output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one side's inverse model from a dataset.
    Train {
        #[command(flatten)]
        src: Source,
        /// Dataset written by `collect`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "left")]
        side: Side,
        /// Model JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch training history (JSON).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run the closed-loop scenario.
    Simulate {
        #[command(flatten)]
        src: Source,
        /// Inverse model for the left side (dnn and hybrid modes).
        #[arg(long)]
        left_model: Option<PathBuf>,
        #[arg(long)]
        right_model: Option<PathBuf>,
        /// Trace CSV, one row per control step.
        #[arg(long)]
        trace: PathBuf,
        /// Summary JSON; printed to stdout when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Recompute the summary of a trace.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Cmd) -> anyhow::Result<u8> {
    match cmd {
        Cmd::Collect { src, out } => {
            let cfg = src.load()?;
            let data = dataset::collect(&cfg.scenario, &cfg.collect, cfg.seed)?;
            dataset::save(&out, &data)?;
            eprintln!(
                "wrote {} samples per side to {}",
                data.left.len(),
                out.display()
            );
            Ok(0)
        }
        Cmd::Train {
            src,
            dataset: path,
            side,
            out,
            history,
        } => {
            let cfg = src.load()?;
            let data = dataset::load(&path)?;
            let fitted = fit_inverse_model(data.side(side), &cfg.train);
            let (m, report) = match fitted {
                Ok(x) => x,
                Err(Error::TrainingDiverged { limit, history: h }) => {
                    let dump = serde_json::to_string_pretty(&h)?;
                    match &history {
                        Some(p) => write_text(p, &dump)?,
                        None => eprintln!("{dump}"),
                    }
                    bail!(
                        "training diverged after {} epochs: damping exceeded {limit:e}",
                        h.epochs.len()
                    );
                }
                Err(e) => return Err(e.into()),
            };
            model::save(&out, &m)?;
            if let Some(p) = &history {
                write_text(p, &serde_json::to_string_pretty(&report)?)?;
            }
            let h = &report.history;
            println!(
                "stop: {:?} after {} epochs (best epoch {})",
                h.stop_reason,
                h.epochs.len(),
                h.best_epoch
            );
            println!("normalised train MSE: {:e}", report.norm_train_mse);
            println!("MSE (raw scale, rpm^2):");
            println!(
                "  train {:.6e}  ({} samples)",
                report.raw_train_mse, report.train_samples
            );
            println!(
                "  val   {:.6e}  ({} samples)",
                report.raw_val_mse, report.val_samples
            );
            println!(
                "  test  {:.6e}  ({} samples)",
                report.raw_test_mse, report.test_samples
            );
            Ok(0)
        }
        Cmd::Simulate {
            src,
            left_model,
            right_model,
            trace: trace_path,
            summary: summary_path,
        } => {
            let cfg = src.load()?;
            let load = |p: &Option<PathBuf>| p.as_deref().map(model::load).transpose();
            let (l, r) = (load(&left_model)?, load(&right_model)?);
            let out = run_scenario(&cfg.scenario, l.as_ref(), r.as_ref())?;
            trace::save(&trace_path, &out.trace)?;
            match &summary_path {
                Some(p) => summary::save(p, &out.summary)?,
                None => print!("{}", summary::to_json(&out.summary)),
            }
            if let Some(t) = out.summary.shutdown_at_s {
                eprintln!("safety shutdown at t = {t} s");
            }
            Ok(out.status.code() as u8)
        }
        Cmd::Metrics {
            trace: trace_path,
            out,
        } => {
            let tr = trace::load_nonempty(&trace_path)?;
            let s = metrics(&tr)?;
            match out {
                Some(p) => summary::save(&p, &s)?,
                None => print!("{}", summary::to_json(&s)),
            }
            Ok(0)
        }
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut s = text.to_string();
    s.push('\n');
    skidsafe::io::write_atomic(path, s.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}
