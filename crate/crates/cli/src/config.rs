//! Run configuration: flat `key = value` text.
//!
//! ```text
//! # comments start with '#'
//! version = 1
//! duration = 30000
//! scheme.tau_p0 = 0.14
//! detection.threshold = auto
//! ```
//!
//! Every key is optional except `version`; missing keys take the defaults
//! of [`RunConfig::default`]. Unknown keys are errors. [`RunConfig::to_text`]
//! writes every key, and parsing that text gives back the same config.

use crate::error::{CliError, Result};
use ionshelf::detect::DetectorConfig;
use ionshelf::formats::FORMAT_VERSION;
use ionshelf::photon::{DetectorParams, RenderMode};
use ionshelf::sim::LevelScheme;
use ionshelf::stats::FitMethod;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Full,
    Coarse,
}

impl SimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SimMode::Full => "full",
            SimMode::Coarse => "coarse",
        }
    }
}

impl FromStr for SimMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(SimMode::Full),
            "coarse" => Ok(SimMode::Coarse),
            other => Err(format!("unknown mode {other:?} (expected full or coarse)")),
        }
    }
}

/// Fixed threshold, or one chosen from the count histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Auto,
    Fixed(f64),
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Auto => f.write_str("auto"),
            Threshold::Fixed(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Threshold::Auto);
        }
        s.parse::<f64>()
            .map(Threshold::Fixed)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionSettings {
    pub threshold: Threshold,
    pub min_dark_duration: f64,
    pub hysteresis_bins: usize,
}

impl DetectionSettings {
    pub fn with_threshold(&self, threshold: f64) -> DetectorConfig {
        DetectorConfig {
            threshold,
            min_dark_duration: self.min_dark_duration,
            hysteresis_bins: self.hysteresis_bins,
        }
    }
}

impl Default for DetectionSettings {
    fn default() -> Self {
        let d = DetectorConfig::new(0.0);
        Self {
            threshold: Threshold::Auto,
            min_dark_duration: d.min_dark_duration,
            hysteresis_bins: d.hysteresis_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: LevelScheme,
    pub detector: DetectorParams,
    pub detection: DetectionSettings,
    /// Simulated time, seconds.
    pub duration: f64,
    pub seed: u64,
    pub mode: SimMode,
    pub output_dir: PathBuf,
    pub fit_method: FitMethod,
}

impl Default for RunConfig {
    /// Default coarse run: about 150 dark periods survive the 70 ms cut.
    fn default() -> Self {
        Self {
            scheme: LevelScheme::default(),
            detector: DetectorParams::default(),
            detection: DetectionSettings::default(),
            duration: 30_000.0,
            seed: 42,
            mode: SimMode::Coarse,
            output_dir: PathBuf::from("run"),
            fit_method: FitMethod::TruncatedMean,
        }
    }
}

/// All keys in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "version",
    "mode",
    "duration",
    "seed",
    "output_dir",
    "scheme.tau_p1",
    "scheme.tau_p0",
    "scheme.branch_p1_to_p0",
    "scheme.excitation_rate",
    "scheme.direct_shelving_rate",
    "detector.bright_count_rate",
    "detector.dark_count_rate",
    "detector.bin_width",
    "detector.mode",
    "detector.efficiency",
    "detection.threshold",
    "detection.min_dark_duration",
    "detection.hysteresis_bins",
    "fit.method",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| CliError::InvalidConfig(format!("{key} = {raw}: {e}")))
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "version" => {
                let v: u32 = parse_value(key, raw)?;
                if v != CONFIG_VERSION {
                    return Err(CliError::SchemaVersion(format!(
                        "config version {v} is not supported (expected {CONFIG_VERSION})"
                    )));
                }
            }
            "mode" => self.mode = parse_value(key, raw)?,
            "duration" => self.duration = parse_value(key, raw)?,
            "seed" => self.seed = parse_value(key, raw)?,
            "output_dir" => self.output_dir = PathBuf::from(raw),
            "scheme.tau_p1" => self.scheme.tau_p1 = parse_value(key, raw)?,
            "scheme.tau_p0" => self.scheme.tau_p0 = parse_value(key, raw)?,
            "scheme.branch_p1_to_p0" => self.scheme.branch_p1_to_p0 = parse_value(key, raw)?,
            "scheme.excitation_rate" => self.scheme.excitation_rate = parse_value(key, raw)?,
            "scheme.direct_shelving_rate" => self.scheme.direct_shelving_rate = parse_value(key, raw)?,
            "detector.bright_count_rate" => self.detector.bright_count_rate = parse_value(key, raw)?,
            "detector.dark_count_rate" => self.detector.dark_count_rate = parse_value(key, raw)?,
            "detector.bin_width" => self.detector.bin_width = parse_value(key, raw)?,
            "detector.mode" => self.detector.mode = parse_value::<RenderMode>(key, raw)?,
            "detector.efficiency" => self.detector.efficiency = parse_value(key, raw)?,
            "detection.threshold" => self.detection.threshold = parse_value(key, raw)?,
            "detection.min_dark_duration" => self.detection.min_dark_duration = parse_value(key, raw)?,
            "detection.hysteresis_bins" => self.detection.hysteresis_bins = parse_value(key, raw)?,
            "fit.method" => self.fit_method = parse_value(key, raw)?,
            other => return Err(CliError::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen_version = false;
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::InvalidConfig(format!("line {}: expected `key = value`, got {line:?}", i + 1))
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::InvalidConfig(format!("line {}: duplicate key {key:?}", i + 1)));
            }
            seen_version |= key == "version";
            cfg.set(key, value).map_err(|e| match e {
                CliError::InvalidConfig(m) => CliError::InvalidConfig(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        if !seen_version {
            return Err(CliError::InvalidConfig("missing `version` key".into()));
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::InvalidConfig(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.scheme;
        let d = &self.detector;
        Some(match key {
            "version" => CONFIG_VERSION.to_string(),
            "mode" => self.mode.as_str().into(),
            "duration" => self.duration.to_string(),
            "seed" => self.seed.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "scheme.tau_p1" => s.tau_p1.to_string(),
            "scheme.tau_p0" => s.tau_p0.to_string(),
            "scheme.branch_p1_to_p0" => s.branch_p1_to_p0.to_string(),
            "scheme.excitation_rate" => s.excitation_rate.to_string(),
            "scheme.direct_shelving_rate" => s.direct_shelving_rate.to_string(),
            "detector.bright_count_rate" => d.bright_count_rate.to_string(),
            "detector.dark_count_rate" => d.dark_count_rate.to_string(),
            "detector.bin_width" => d.bin_width.to_string(),
            "detector.mode" => d.mode.as_str().into(),
            "detector.efficiency" => d.efficiency.to_string(),
            "detection.threshold" => self.detection.threshold.to_string(),
            "detection.min_dark_duration" => self.detection.min_dark_duration.to_string(),
            "detection.hysteresis_bins" => self.detection.hysteresis_bins.to_string(),
            "fit.method" => self.fit_method.as_str().into(),
            _ => return None,
        })
    }

    /// Full text form, one line per key.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# ionshelf run config\n");
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("known key")).unwrap();
        }
        out
    }

    /// Checks every component invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::InvalidConfig(m));
        self.scheme
            .validate()
            .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        self.detector
            .validate()
            .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        if let Threshold::Fixed(t) = self.detection.threshold {
            self.detection
                .with_threshold(t)
                .validate()
                .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        } else {
            self.detection
                .with_threshold(0.0)
                .validate()
                .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if self.mode == SimMode::Coarse && self.detector.mode == RenderMode::PerPhoton {
            return bad("detector.mode = per_photon needs mode = full".into());
        }
        Ok(())
    }
}

/// Text of a config file (or `None` for defaults) plus the overrides that
/// were applied on top. Both end up verbatim in the run manifest.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub file_text: Option<String>,
    pub overrides: Vec<String>,
}

impl ConfigSource {
    pub fn load(path: Option<&std::path::Path>, overrides: Vec<String>) -> Result<Self> {
        let file_text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
            None => None,
        };
        Ok(Self { file_text, overrides })
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.file_text {
            Some(t) => RunConfig::parse(t)?,
            None => RunConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

/// `--format-version` check: only the current version can be written.
pub fn check_format_version(requested: Option<u32>) -> Result<()> {
    match requested {
        Some(v) if v != FORMAT_VERSION => Err(CliError::SchemaVersion(format!(
            "format version {v} requested, this build reads and writes version {FORMAT_VERSION}"
        ))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_text_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert_eq!(RunConfig::parse(&text).unwrap().to_text(), text);
    }

    #[test]
    fn comments_blank_lines_and_partial_files() {
        let cfg = RunConfig::parse("# hi\n\nversion = 1\n  duration=12.5  \n# seed = 3\n").unwrap();
        assert_eq!(cfg.duration, 12.5);
        assert_eq!(cfg.seed, RunConfig::default().seed);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("duration = 1"), Err(CliError::InvalidConfig(_))));
        assert!(matches!(RunConfig::parse("version = 2"), Err(CliError::SchemaVersion(_))));
        assert!(matches!(RunConfig::parse("version = 1\nbogus = 3"), Err(CliError::InvalidConfig(_))));
        assert!(matches!(RunConfig::parse("version = 1\nseed = -1"), Err(CliError::InvalidConfig(_))));
        assert!(matches!(RunConfig::parse("version = 1\nseed"), Err(CliError::InvalidConfig(_))));
        assert!(matches!(
            RunConfig::parse("version = 1\nseed = 1\nseed = 2"),
            Err(CliError::InvalidConfig(_))
        ));
        let mut c = RunConfig::default();
        c.scheme.tau_p0 = -1.0;
        assert!(matches!(c.validate(), Err(CliError::InvalidConfig(_))));
        let mut c = RunConfig::default();
        c.detector.mode = RenderMode::PerPhoton;
        assert!(matches!(c.validate(), Err(CliError::InvalidConfig(_))));
    }

    #[test]
    fn overrides_win_over_file() {
        let src = ConfigSource {
            file_text: Some("version = 1\nseed = 5\nduration = 10".into()),
            overrides: vec!["seed=9".into(), "detection.threshold = 3.5".into()],
        };
        let cfg = src.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.duration, 10.0);
        assert_eq!(cfg.detection.threshold, Threshold::Fixed(3.5));
    }

    #[test]
    fn every_key_has_a_value() {
        let cfg = RunConfig::default();
        for k in KEYS {
            let v = cfg.get(k).unwrap();
            let mut c = RunConfig::default();
            c.set(k, &v).unwrap();
            assert_eq!(c, cfg, "{k}");
        }
    }

    proptest! {
        #[test]
        fn arbitrary_configs_round_trip(
            seed in any::<u64>(),
            duration in 1e-3f64..1e6,
            tau_p0 in 1e-3f64..10.0,
            branch in 0.0f64..=1.0,
            bin in 1e-4f64..1.0,
            thr in prop_oneof![Just(None), (0.0f64..100.0).prop_map(Some)],
            hyst in 1usize..10,
            full in any::<bool>(),
        ) {
            let mut cfg = RunConfig { seed, duration, ..RunConfig::default() };
            cfg.scheme.tau_p0 = tau_p0;
            cfg.scheme.branch_p1_to_p0 = branch;
            cfg.detector.bin_width = bin;
            cfg.detection.threshold = thr.map_or(Threshold::Auto, Threshold::Fixed);
            cfg.detection.hysteresis_bins = hyst;
            cfg.mode = if full { SimMode::Full } else { SimMode::Coarse };
            prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
