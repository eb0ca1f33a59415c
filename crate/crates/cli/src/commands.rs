//! The pipeline stages as library calls. Each reads its inputs from files,
//! writes its outputs into a directory and returns what it wrote.

use crate::config::{DetectionSettings, RunConfig, SimMode, Threshold};
use crate::error::{CliError, Result};
use ionshelf::detect::{self, DarkPeriod, DetectError};
use ionshelf::formats::{self, FitDiagnostics, FitReport, IntervalsFile, FORMAT_VERSION, KIND_FIT};
use ionshelf::photon::{self, BinnedCounts, DetectorParams, RenderMode};
use ionshelf::rng::stage_seed;
use ionshelf::sim::{self, ShelvingIntervals, Trajectory};
use ionshelf::stats::{self, DurationSample, FitMethod, DEFAULT_GRID_POINTS};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const TRAJECTORY: &str = "trajectory.jsonl";
pub const INTERVALS: &str = "intervals.csv";
pub const BINS: &str = "bins.csv";
pub const DARK: &str = "dark_periods.csv";
pub const FIT: &str = "fit_report.json";

/// Default truncation threshold when a dark-period file does not record one.
pub const DEFAULT_T_S: f64 = 0.070;

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Writes `path` through a buffered writer.
pub(crate) fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::result::Result<(), formats::FormatError>,
{
    let io_err = |e: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut w).map_err(|e| CliError::format(path, e))?;
    w.flush().map_err(io_err)
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut r = open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

// ------------------------------------------------------------------ simulate

/// Coarse two-state run at the scheme's effective shelving rate. A scheme
/// that can never shelve gives an all-bright record.
pub fn coarse_intervals(cfg: &RunConfig) -> Result<IntervalsFile> {
    let lambda = sim::effective_shelving_rate(&cfg.scheme).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let mu = 1.0 / cfg.scheme.tau_p0;
    let intervals = if lambda == 0.0 {
        ShelvingIntervals {
            duration: cfg.duration,
            intervals: Vec::new(),
        }
    } else {
        sim::simulate_telegraph(lambda, mu, cfg.duration, cfg.seed).map_err(|e| CliError::compute("simulate", e))?
    };
    Ok(IntervalsFile::coarse(intervals, &cfg.scheme, (lambda, mu), cfg.seed))
}

pub fn full_trajectory(cfg: &RunConfig) -> Result<Trajectory> {
    sim::simulate_full(&cfg.scheme, cfg.duration, cfg.seed).map_err(|e| CliError::compute("simulate", e))
}

/// Runs the simulator and writes `trajectory.jsonl` (full) or
/// `intervals.csv` (coarse) into `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    create_dir(out)?;
    match cfg.mode {
        SimMode::Full => {
            let traj = full_trajectory(cfg)?;
            let path = out.join(TRAJECTORY);
            write_file(&path, |w| formats::write_trajectory(w, &traj))?;
            Ok(path)
        }
        SimMode::Coarse => {
            let file = coarse_intervals(cfg)?;
            let path = out.join(INTERVALS);
            write_file(&path, |w| formats::write_intervals(w, &file))?;
            Ok(path)
        }
    }
}

/// Simulates several seeds in parallel, each into `out/seed-<seed>/`.
pub fn simulate_seeds(cfg: &RunConfig, seeds: &[u64], out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let results: Vec<Result<PathBuf>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = RunConfig { seed, ..cfg.clone() };
                let dir = out.join(format!("seed-{seed}"));
                s.spawn(move || simulate(&cfg, &dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

// -------------------------------------------------------------------- render

/// Simulator output read back from disk.
pub enum SimInput {
    Trajectory(Trajectory),
    Intervals(IntervalsFile),
}

impl SimInput {
    pub fn seed(&self) -> Result<u64> {
        match self {
            SimInput::Trajectory(t) => Ok(t.seed),
            SimInput::Intervals(f) => f
                .meta
                .parse("seed")
                .map_err(|e| CliError::BadInput {
                    path: PathBuf::new(),
                    msg: e.to_string(),
                }),
        }
    }
}

/// Reads a trajectory (JSON lines) or an intervals CSV, told apart by the
/// first byte.
pub fn read_sim_input(path: &Path) -> Result<SimInput> {
    let mut r = open(path)?;
    let first = r
        .fill_buf()
        .map_err(|e| CliError::io(path, e))?
        .first()
        .copied();
    match first {
        Some(b'{') => formats::read_trajectory(r)
            .map(SimInput::Trajectory)
            .map_err(|e| CliError::format(path, e)),
        Some(b'#') => formats::read_intervals(r)
            .map(SimInput::Intervals)
            .map_err(|e| CliError::format(path, e)),
        _ => Err(CliError::BadInput {
            path: path.to_path_buf(),
            msg: "neither a trajectory nor an intervals file".into(),
        }),
    }
}

/// Renders counts from simulator output. The render stream is seeded with
/// `stage_seed(base, 1)`, where `base` is `seed` or the input's own seed.
pub fn render_input(input: &SimInput, params: &DetectorParams, base_seed: u64) -> Result<BinnedCounts> {
    let seed = stage_seed(base_seed, 1);
    let rendered = match (input, params.mode) {
        (SimInput::Trajectory(t), RenderMode::PerPhoton) => photon::render_counts_per_photon(t, params, seed),
        (SimInput::Trajectory(t), RenderMode::RateModel) => {
            photon::render_counts(&sim::extract_shelving(t), params, seed)
        }
        (SimInput::Intervals(f), RenderMode::RateModel) => photon::render_counts(&f.intervals, params, seed),
        (SimInput::Intervals(_), RenderMode::PerPhoton) => {
            return Err(CliError::InvalidConfig(
                "per_photon rendering needs a full trajectory, got intervals".into(),
            ))
        }
    };
    rendered.map_err(|e| CliError::InvalidConfig(e.to_string()))
}

pub fn render(input: &Path, params: &DetectorParams, seed: Option<u64>, out: &Path) -> Result<PathBuf> {
    params.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let sim_input = read_sim_input(input)?;
    let base = match seed {
        Some(s) => s,
        None => sim_input.seed().map_err(|e| match e {
            CliError::BadInput { msg, .. } => CliError::BadInput {
                path: input.to_path_buf(),
                msg,
            },
            other => other,
        })?,
    };
    let bins = render_input(&sim_input, params, base)?;
    create_dir(out)?;
    let path = out.join(BINS);
    let extra = vec![
        ("source".to_string(), file_name(input)),
        ("source_sha256".to_string(), sha256_file(input)?),
        ("source_seed".to_string(), base.to_string()),
    ];
    write_file(&path, |w| formats::write_bins(w, &bins, &extra))?;
    Ok(path)
}

// -------------------------------------------------------------------- detect

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub path: PathBuf,
    /// `None` when an automatic threshold found no dark population.
    pub threshold: Option<f64>,
    pub n_periods: usize,
}

/// Dark periods found in binned counts, with the metadata they are written with.
#[derive(Debug, Clone)]
pub struct Detection {
    pub periods: Vec<DarkPeriod>,
    pub meta: formats::Metadata,
    /// `None` when an automatic threshold found no dark population.
    pub threshold: Option<f64>,
}

/// Detects dark periods in `bins` read from a file named `source`.
///
/// With `allow_unimodal`, an automatic threshold on a histogram without a
/// dark population gives an empty result instead of an error.
pub fn detect_bins(
    bins: &BinnedCounts,
    source: &str,
    source_sha: &str,
    settings: &DetectionSettings,
    allow_unimodal: bool,
) -> Result<Detection> {
    let threshold = match settings.threshold {
        Threshold::Fixed(t) => Some(t),
        Threshold::Auto => match detect::suggest_threshold(bins) {
            Ok(t) => Some(t),
            Err(DetectError::NotBimodal(_)) if allow_unimodal => None,
            Err(e) => return Err(CliError::compute(format!("detect {source}"), e)),
        },
    };
    let (periods, mut meta) = match threshold {
        Some(t) => {
            let cfg = settings.with_threshold(t);
            cfg.validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
            let periods = detect::detect(bins, &cfg).map_err(|e| CliError::compute(format!("detect {source}"), e))?;
            (periods, formats::dark_metadata(&cfg, source_sha))
        }
        None => {
            let mut meta = formats::dark_metadata(&settings.with_threshold(0.0), source_sha);
            meta.set("threshold", "none");
            (Vec::new(), meta)
        }
    };
    meta.set(
        "threshold_mode",
        match settings.threshold {
            Threshold::Auto => "auto",
            Threshold::Fixed(_) => "fixed",
        },
    );
    meta.set("source", source);
    meta.set("bin_width", bins.bin_width);
    meta.set("bin_count", bins.len());
    Ok(Detection {
        periods,
        meta,
        threshold,
    })
}

pub fn write_detection(det: &Detection, out: &Path) -> Result<DetectOutcome> {
    create_dir(out)?;
    let path = out.join(DARK);
    write_file(&path, |w| formats::write_dark_periods(w, &det.periods, &det.meta))?;
    Ok(DetectOutcome {
        path,
        threshold: det.threshold,
        n_periods: det.periods.len(),
    })
}

/// Detects dark periods in a bins file and writes `dark_periods.csv`.
pub fn detect(input: &Path, settings: &DetectionSettings, out: &Path, allow_unimodal: bool) -> Result<DetectOutcome> {
    let (bins, _) = formats::read_bins(open(input)?).map_err(|e| CliError::format(input, e))?;
    let det = detect_bins(&bins, &file_name(input), &sha256_file(input)?, settings, allow_unimodal)?;
    write_detection(&det, out)
}

// ----------------------------------------------------------------------- fit

/// Reads the complete dark-period durations and the truncation threshold
/// (`t_s` if given, else the file's `min_dark_duration`, else 70 ms).
pub fn read_sample(input: &Path, t_s: Option<f64>) -> Result<DurationSample> {
    let (periods, meta) = formats::read_dark_periods(open(input)?).map_err(|e| CliError::format(input, e))?;
    let t_s = match t_s {
        Some(t) => t,
        None => match meta.get("min_dark_duration") {
            Some(_) => meta.parse("min_dark_duration").map_err(|e| CliError::format(input, e))?,
            None => DEFAULT_T_S,
        },
    };
    DurationSample::new(periods.iter().map(|p| p.dt).collect(), t_s)
        .map_err(|e| CliError::compute(format!("fit {}", input.display()), stats_msg(&e)))
}

fn stats_msg(e: &stats::StatsError) -> String {
    let dbg = format!("{e:?}");
    let variant: String = dbg.chars().take_while(|c| c.is_alphanumeric()).collect();
    format!("{variant}: {e}")
}

/// Fits the sample and assembles the report (grid, KS, conservation).
pub fn fit_sample(sample: &DurationSample, method: FitMethod) -> std::result::Result<FitReport, stats::StatsError> {
    let grid = stats::default_grid(sample, DEFAULT_GRID_POINTS)?;
    let result = match method {
        FitMethod::TruncatedMean => stats::truncated_mean_estimator(sample)?,
        FitMethod::WeightedAverage => stats::weighted_average_lifetime(sample)?,
        FitMethod::Loglinear => stats::loglinear_fit(sample, &grid)?,
    };
    let counts = stats::survival_counts(sample, &grid)?;
    let conservation_ok = stats::conservation_check(&counts).all_ok();
    let ks_statistic = match stats::ks_exponential_test(sample, result.tau_hat) {
        Ok(ks) => Some(ks.statistic),
        Err(stats::StatsError::SampleTooSmall { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(FitReport {
        format: KIND_FIT.into(),
        version: FORMAT_VERSION,
        method: method.as_str().into(),
        tau_hat_s: result.tau_hat,
        tau_stderr_s: result.tau_stderr,
        n_events: sample.len(),
        t_s_s: sample.t_s(),
        grid,
        diagnostics: FitDiagnostics {
            ks_statistic,
            conservation_ok,
        },
    })
}

pub fn fit(input: &Path, method: FitMethod, t_s: Option<f64>, out: &Path) -> Result<(PathBuf, FitReport)> {
    let sample = read_sample(input, t_s)?;
    let report =
        fit_sample(&sample, method).map_err(|e| CliError::compute(format!("fit {}", input.display()), stats_msg(&e)))?;
    create_dir(out)?;
    let path = out.join(FIT);
    write_file(&path, |w| formats::write_fit_report(w, &report))?;
    Ok((path, report))
}

pub fn read_fit(path: &Path) -> Result<FitReport> {
    formats::read_fit_report(open(path)?).map_err(|e| CliError::format(path, e))
}
