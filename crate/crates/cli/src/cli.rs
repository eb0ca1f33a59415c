//! Argument parsing and dispatch.
//!
//! Settings resolve in this order, later wins: defaults, `--config` file,
//! `--set key=value` (in order given), then dedicated flags such as
//! `--seed`, `--duration` or `--threshold`.

use crate::commands;
use crate::config::{check_format_version, ConfigSource, RunConfig};
use crate::error::Result;
use crate::pipeline;
use crate::report::{self, FigureKind, FigureSpec};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "ionshelf", version, about = "Single-ion electron-shelving simulation and lifetime analysis")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Run config file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed (overrides `seed`).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// File format version to read and write; only the current one is accepted.
    #[arg(long, global = true, value_name = "N")]
    pub format_version: Option<u32>,
    /// Override any config key, e.g. `--set scheme.tau_p0=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the jump process; writes trajectory.jsonl (full) or intervals.csv (coarse).
    Simulate {
        /// Several seeds, simulated in parallel into `<out>/seed-<n>/`.
        #[arg(long, value_delimiter = ',', value_name = "U64,...")]
        seeds: Vec<u64>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, value_name = "SECONDS")]
        duration: Option<f64>,
    },
    /// Render binned photon counts from a trajectory or intervals file.
    Render {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "SECONDS")]
        bin_width: Option<f64>,
    },
    /// Detect dark periods in a bins file.
    Detect {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Counts per bin at or below which a bin is dark, or `auto`.
        #[arg(long)]
        threshold: Option<String>,
        #[arg(long, value_name = "SECONDS")]
        min_dark_duration: Option<f64>,
        #[arg(long, value_name = "BINS")]
        hysteresis_bins: Option<usize>,
    },
    /// Estimate the shelf lifetime from a dark-period file.
    Fit {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// mle (truncated mean), loglinear or weighted_average.
        #[arg(long)]
        method: Option<String>,
        /// Truncation threshold; defaults to the file's min_dark_duration.
        #[arg(long = "t-s", value_name = "SECONDS")]
        t_s: Option<f64>,
    },
    /// Run every stage into one directory with a manifest.
    Pipeline {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, value_name = "SECONDS")]
        duration: Option<f64>,
    },
    /// Draw a figure (SVG plus CSV of the plotted points).
    Report {
        /// telegraph or survival.
        #[arg(long)]
        kind: String,
        #[arg(long, value_name = "PATH")]
        bins: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        dark: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        fit: Option<PathBuf>,
    },
}

impl Common {
    /// Config after file, `--set` and the given flag overrides.
    pub fn resolve(&self, flags: Vec<String>) -> Result<(ConfigSource, RunConfig)> {
        let mut overrides = self.set.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(o) = &self.out {
            overrides.push(format!("output_dir={}", o.display()));
        }
        overrides.extend(flags);
        let source = ConfigSource::load(self.config.as_deref(), overrides)?;
        let cfg = source.resolve()?;
        Ok((source, cfg))
    }
}

fn flag<T: std::fmt::Display>(key: &str, v: &Option<T>) -> Option<String> {
    v.as_ref().map(|v| format!("{key}={v}"))
}

/// Runs one command and returns the lines to print.
pub fn run(cli: Cli) -> Result<Vec<String>> {
    check_format_version(cli.common.format_version)?;
    let common = &cli.common;
    let show = |p: &std::path::Path| format!("wrote {}", p.display());
    match &cli.command {
        Command::Simulate { seeds, mode, duration } => {
            let flags = [flag("mode", mode), flag("duration", duration)].into_iter().flatten().collect();
            let (_, cfg) = common.resolve(flags)?;
            let paths = if seeds.is_empty() {
                vec![commands::simulate(&cfg, &cfg.output_dir)?]
            } else {
                commands::simulate_seeds(&cfg, seeds, &cfg.output_dir)?
            };
            Ok(paths.iter().map(|p| show(p)).collect())
        }
        Command::Render { input, bin_width } => {
            let (_, cfg) = common.resolve(flag("detector.bin_width", bin_width).into_iter().collect())?;
            let path = commands::render(input, &cfg.detector, common.seed, &cfg.output_dir)?;
            Ok(vec![show(&path)])
        }
        Command::Detect {
            input,
            threshold,
            min_dark_duration,
            hysteresis_bins,
        } => {
            let flags = [
                flag("detection.threshold", threshold),
                flag("detection.min_dark_duration", min_dark_duration),
                flag("detection.hysteresis_bins", hysteresis_bins),
            ]
            .into_iter()
            .flatten()
            .collect();
            let (_, cfg) = common.resolve(flags)?;
            let out = commands::detect(input, &cfg.detection, &cfg.output_dir, false)?;
            Ok(vec![
                show(&out.path),
                format!(
                    "{} dark periods (threshold {})",
                    out.n_periods,
                    out.threshold.map_or("none".into(), |t| t.to_string())
                ),
            ])
        }
        Command::Fit { input, method, t_s } => {
            let (_, cfg) = common.resolve(flag("fit.method", method).into_iter().collect())?;
            let (path, r) = commands::fit(input, cfg.fit_method, *t_s, &cfg.output_dir)?;
            Ok(vec![
                show(&path),
                format!(
                    "tau_hat = {:.6} s +/- {:.6} s ({}, n = {})",
                    r.tau_hat_s, r.tau_stderr_s, r.method, r.n_events
                ),
            ])
        }
        Command::Pipeline { mode, duration } => {
            let flags = [flag("mode", mode), flag("duration", duration)].into_iter().flatten().collect();
            let (source, cfg) = common.resolve(flags)?;
            let r = pipeline::run(&source, &cfg, &cfg.output_dir)?;
            let m = &r.manifest;
            let mut lines = vec![show(&r.dir.join(pipeline::MANIFEST))];
            lines.push(match (m.tau_hat_s, m.tau_stderr_s) {
                (Some(t), Some(se)) => format!("{} dark periods, tau_hat = {t:.6} s +/- {se:.6} s", m.n_events),
                _ => "no dark periods detected (outcome no_events)".into(),
            });
            Ok(lines)
        }
        Command::Report { kind, bins, dark, fit } => {
            let kind: FigureKind = kind.parse().map_err(crate::error::CliError::Usage)?;
            let (_, cfg) = common.resolve(Vec::new())?;
            let fig = report::render_figure(&FigureSpec {
                kind,
                bins: bins.clone(),
                dark: dark.clone(),
                fit: fit.clone(),
                out: cfg.output_dir.clone(),
            })?;
            Ok(vec![show(&fig.svg), show(&fig.csv)])
        }
    }
}
