//! simulate -> render -> detect -> fit -> report in one run directory,
//! finished by `manifest.json` with a SHA-256 for every file.
//!
//! The manifest holds no timestamps or host details, so rerunning the same
//! config and seed reproduces the whole directory byte for byte.

use crate::commands::{self, create_dir, write_file, DetectOutcome, SimInput, BINS, INTERVALS, TRAJECTORY};
use crate::config::{ConfigSource, RunConfig, SimMode};
use crate::error::{CliError, Result};
use crate::report;
use ionshelf::formats::{self, FitReport, FORMAT_VERSION};
use ionshelf::rng::{stage_seed, RNG_ID};
use ionshelf::sim;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.txt";
pub const KIND_MANIFEST: &str = "ionshelf/manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    /// No complete dark period was detected; nothing was fitted.
    NoEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub tool: String,
    pub rng: String,
    pub seed: u64,
    pub render_seed: u64,
    pub mode: String,
    pub outcome: Outcome,
    pub threshold: Option<f64>,
    pub n_events: usize,
    pub tau_hat_s: Option<f64>,
    pub tau_stderr_s: Option<f64>,
    /// The config file exactly as read, if one was given.
    pub config_file: Option<String>,
    pub overrides: Vec<String>,
    /// Every key after overrides, in `config.txt` form.
    pub resolved_config: String,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub fit: Option<FitReport>,
    pub detect: DetectOutcome,
}

fn entry(dir: &Path, name: &str) -> Result<FileEntry> {
    let path = dir.join(name);
    let bytes = std::fs::metadata(&path).map_err(|e| CliError::io(&path, e))?.len();
    Ok(FileEntry {
        name: name.to_string(),
        bytes,
        sha256: commands::sha256_file(&path)?,
    })
}

/// Runs every stage for `cfg` into `dir`.
pub fn run(source: &ConfigSource, cfg: &RunConfig, dir: &Path) -> Result<PipelineResult> {
    cfg.validate()?;
    create_dir(dir)?;
    let mut written: Vec<&str> = vec![CONFIG];
    let resolved = cfg.to_text();
    write_file(&dir.join(CONFIG), |w| Ok(w.write_all(resolved.as_bytes())?))?;

    let sim_input = match cfg.mode {
        SimMode::Coarse => {
            let file = commands::coarse_intervals(cfg)?;
            write_file(&dir.join(INTERVALS), |w| formats::write_intervals(w, &file))?;
            written.push(INTERVALS);
            SimInput::Intervals(file)
        }
        SimMode::Full => {
            let traj = commands::full_trajectory(cfg)?;
            write_file(&dir.join(TRAJECTORY), |w| formats::write_trajectory(w, &traj))?;
            let extracted = formats::IntervalsFile::extracted(sim::extract_shelving(&traj), &traj);
            write_file(&dir.join(INTERVALS), |w| formats::write_intervals(w, &extracted))?;
            written.extend([TRAJECTORY, INTERVALS]);
            SimInput::Trajectory(traj)
        }
    };
    let source_name = if cfg.mode == SimMode::Full { TRAJECTORY } else { INTERVALS };

    let bins = commands::render_input(&sim_input, &cfg.detector, cfg.seed)?;
    drop(sim_input);
    let extra = vec![
        ("source".to_string(), source_name.to_string()),
        ("source_sha256".to_string(), commands::sha256_file(&dir.join(source_name))?),
        ("source_seed".to_string(), cfg.seed.to_string()),
    ];
    write_file(&dir.join(BINS), |w| formats::write_bins(w, &bins, &extra))?;
    written.push(BINS);

    let bins_sha = commands::sha256_file(&dir.join(BINS))?;
    let detection = commands::detect_bins(&bins, BINS, &bins_sha, &cfg.detection, true)?;
    let detect = commands::write_detection(&detection, dir)?;
    written.push(commands::DARK);

    report::telegraph_from(&bins, &detection.periods, dir)?;
    written.extend([report::TELEGRAPH_SVG, report::TELEGRAPH_CSV]);
    drop(bins);

    let (outcome, fit) = if detect.n_periods == 0 {
        (Outcome::NoEvents, None)
    } else {
        let (fit_path, fit) = commands::fit(&detect.path, cfg.fit_method, None, dir)?;
        written.push(commands::FIT);
        report::survival(&detect.path, Some(&fit_path), dir)?;
        written.extend([report::SURVIVAL_SVG, report::SURVIVAL_CSV]);
        (Outcome::Ok, Some(fit))
    };

    written.sort_unstable();
    let files = written
        .iter()
        .map(|name| entry(dir, name))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format: KIND_MANIFEST.into(),
        version: FORMAT_VERSION,
        tool: format!("ionshelf {}", env!("CARGO_PKG_VERSION")),
        rng: RNG_ID.into(),
        seed: cfg.seed,
        render_seed: stage_seed(cfg.seed, 1),
        mode: cfg.mode.as_str().into(),
        outcome,
        threshold: detect.threshold,
        n_events: detect.n_periods,
        tau_hat_s: fit.as_ref().map(|f| f.tau_hat_s),
        tau_stderr_s: fit.as_ref().map(|f| f.tau_stderr_s),
        config_file: source.file_text.clone(),
        overrides: source.overrides.clone(),
        resolved_config: resolved,
        files,
    };
    write_file(&dir.join(MANIFEST), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::from)?;
        Ok(writeln!(w)?)
    })?;
    Ok(PipelineResult {
        dir: dir.to_path_buf(),
        manifest,
        fit,
        detect,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let r = commands::open(path)?;
    let value: serde_json::Value = serde_json::from_reader(r).map_err(|e| CliError::BadInput {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        other => {
            return Err(CliError::SchemaVersion(format!(
                "{}: manifest version {other:?}, expected {FORMAT_VERSION}",
                path.display()
            )))
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::BadInput {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
