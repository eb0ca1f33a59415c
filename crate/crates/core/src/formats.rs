//! On-disk formats.
//!
//! | kind            | layout                                                    |
//! |-----------------|-----------------------------------------------------------|
//! | trajectory      | JSON lines: one header object, then one jump per line     |
//! | intervals       | CSV `t0,t_end,censored` after `# key=value` metadata      |
//! | bins            | CSV `t_start,counts` after `# key=value` metadata         |
//! | dark periods    | CSV `t0,t_end,dt` after `# key=value` metadata            |
//! | fit report      | one JSON object                                           |
//!
//! Every file carries `format` and `version`; readers reject any other
//! version with [`FormatError::SchemaVersionMismatch`]. Text is UTF-8 with
//! LF line endings. Floats are written with Rust's shortest round-trip
//! formatting except jump times, which use 17 significant digits.

use crate::detect::{DarkPeriod, DetectorConfig};
use crate::photon::{BinnedCounts, DetectorParams};
use crate::sim::{IonLevel, JumpRecord, LevelScheme, ShelvingInterval, ShelvingIntervals, Trajectory};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

pub const KIND_TRAJECTORY: &str = "ionshelf/trajectory";
pub const KIND_INTERVALS: &str = "ionshelf/intervals";
pub const KIND_BINS: &str = "ionshelf/bins";
pub const KIND_DARK: &str = "ionshelf/dark_periods";
pub const KIND_FIT: &str = "ionshelf/fit_report";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: u32 },
    #[error("expected a {expected} file, found {found:?}")]
    WrongKind { found: String, expected: &'static str },
    #[error("missing metadata key {0:?}")]
    MissingKey(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Ordered `key=value` metadata written as `# key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(kind: &str) -> Self {
        let mut m = Self::default();
        m.set("format", kind);
        m.set("version", FORMAT_VERSION);
        m
    }

    /// Sets `key`, replacing an existing entry in place.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!value.contains('\n') && !key.contains('='), "metadata must stay on one line");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| FormatError::MissingKey(key.to_string()))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| FormatError::Invalid(format!("metadata {key}={raw}: {e}")))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Checks `format` and `version` against what the reader expects.
    pub fn check(&self, kind: &'static str) -> Result<()> {
        check_header(self.get("format"), self.get("version"), kind)
    }

    fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }
}

fn check_header(format: Option<&str>, version: Option<&str>, kind: &'static str) -> Result<()> {
    let format = format.ok_or_else(|| FormatError::MissingKey("format".into()))?;
    if format != kind {
        return Err(FormatError::WrongKind {
            found: format.to_string(),
            expected: kind,
        });
    }
    let version = version.ok_or_else(|| FormatError::MissingKey("version".into()))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(FormatError::SchemaVersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// A parsed metadata CSV: metadata, column header and data rows.
struct CsvTable {
    meta: Metadata,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_csv(r: impl BufRead, kind: &'static str, header: &str) -> Result<CsvTable> {
    let mut meta = Metadata::default();
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            if seen_header {
                return Err(parse_err(lineno, "metadata after the column header"));
            }
            let rest = rest.trim_start();
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| parse_err(lineno, format!("metadata line without '=': {rest:?}")))?;
            meta.entries.push((k.trim().to_string(), v.to_string()));
        } else if !seen_header {
            meta.check(kind)?;
            if line != header {
                return Err(parse_err(lineno, format!("expected header {header:?}, got {line:?}")));
            }
            seen_header = true;
        } else if !line.is_empty() {
            rows.push((lineno, line.split(',').map(str::to_string).collect()));
        }
    }
    if !seen_header {
        meta.check(kind)?;
        return Err(parse_err(0, format!("missing column header {header:?}")));
    }
    Ok(CsvTable { meta, rows })
}

fn field<T: std::str::FromStr>(row: &(usize, Vec<String>), idx: usize, width: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let (lineno, cols) = row;
    if cols.len() != width {
        return Err(parse_err(*lineno, format!("expected {width} columns, got {}", cols.len())));
    }
    cols[idx]
        .parse()
        .map_err(|e| parse_err(*lineno, format!("column {}: {e}", idx + 1)))
}

fn scheme_meta(m: &mut Metadata, s: &LevelScheme) {
    m.set("scheme.tau_p1", s.tau_p1);
    m.set("scheme.tau_p0", s.tau_p0);
    m.set("scheme.branch_p1_to_p0", s.branch_p1_to_p0);
    m.set("scheme.excitation_rate", s.excitation_rate);
    m.set("scheme.direct_shelving_rate", s.direct_shelving_rate);
}

fn scheme_from_meta(m: &Metadata) -> Result<LevelScheme> {
    Ok(LevelScheme {
        tau_p1: m.parse("scheme.tau_p1")?,
        tau_p0: m.parse("scheme.tau_p0")?,
        branch_p1_to_p0: m.parse("scheme.branch_p1_to_p0")?,
        excitation_rate: m.parse("scheme.excitation_rate")?,
        direct_shelving_rate: m.parse("scheme.direct_shelving_rate")?,
    })
}

// ---------------------------------------------------------------- trajectory

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
    pub scheme: LevelScheme,
    pub duration: f64,
    pub seed: u64,
    pub initial_level: IonLevel,
    pub rng: String,
}

/// Writes the JSON-lines trajectory: header, then `{t, from, to, channel}` per jump.
pub fn write_trajectory(w: &mut impl Write, traj: &Trajectory) -> Result<()> {
    let header = TrajectoryHeader {
        format: KIND_TRAJECTORY.into(),
        version: FORMAT_VERSION,
        scheme: traj.scheme,
        duration: traj.duration,
        seed: traj.seed,
        initial_level: traj.initial_level,
        rng: crate::rng::RNG_ID.into(),
    };
    serde_json::to_writer(&mut *w, &header).map_err(std::io::Error::from)?;
    writeln!(w)?;
    for j in &traj.jumps {
        writeln!(
            w,
            r#"{{"t":{:.16e},"from":"{}","to":"{}","channel":"{}"}}"#,
            j.t,
            j.from,
            j.to,
            j.channel.as_str()
        )?;
    }
    Ok(())
}

pub fn read_trajectory(r: impl BufRead) -> Result<Trajectory> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let probe: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    let version = probe.get("version").map(|v| v.to_string());
    check_header(
        probe.get("format").and_then(|v| v.as_str()),
        version.as_deref(),
        KIND_TRAJECTORY,
    )?;
    let header: TrajectoryHeader =
        serde_json::from_value(probe).map_err(|e| parse_err(1, e.to_string()))?;
    let mut jumps = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: JumpRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(i + 2, e.to_string()))?;
        jumps.push(rec);
    }
    Trajectory::from_parts(header.scheme, header.duration, header.seed, header.initial_level, jumps)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

// ----------------------------------------------------------------- intervals

/// Shelving intervals plus the metadata they were written with.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalsFile {
    pub intervals: ShelvingIntervals,
    pub meta: Metadata,
}

impl IntervalsFile {
    /// Metadata for intervals from the coarse telegraph simulation.
    pub fn coarse(intervals: ShelvingIntervals, scheme: &LevelScheme, rates: (f64, f64), seed: u64) -> Self {
        let mut meta = Metadata::new(KIND_INTERVALS);
        meta.set("duration", intervals.duration);
        meta.set("seed", seed);
        meta.set("rng", crate::rng::RNG_ID);
        meta.set("mode", "coarse");
        meta.set("bright_to_dark_rate", rates.0);
        meta.set("dark_to_bright_rate", rates.1);
        scheme_meta(&mut meta, scheme);
        Self { intervals, meta }
    }

    /// Metadata for intervals extracted from a full trajectory.
    pub fn extracted(intervals: ShelvingIntervals, trajectory: &Trajectory) -> Self {
        let mut meta = Metadata::new(KIND_INTERVALS);
        meta.set("duration", intervals.duration);
        meta.set("seed", trajectory.seed);
        meta.set("rng", crate::rng::RNG_ID);
        meta.set("mode", "full");
        scheme_meta(&mut meta, &trajectory.scheme);
        Self { intervals, meta }
    }
}

pub fn write_intervals(w: &mut impl Write, file: &IntervalsFile) -> Result<()> {
    let mut meta = file.meta.clone();
    meta.set("duration", file.intervals.duration);
    meta.write(w)?;
    writeln!(w, "t0,t_end,censored")?;
    for iv in &file.intervals.intervals {
        writeln!(w, "{},{},{}", iv.t0, iv.t_end, u8::from(iv.censored))?;
    }
    Ok(())
}

pub fn read_intervals(r: impl BufRead) -> Result<IntervalsFile> {
    let table = read_csv(r, KIND_INTERVALS, "t0,t_end,censored")?;
    let duration: f64 = table.meta.parse("duration")?;
    let intervals = table
        .rows
        .iter()
        .map(|row| {
            let censored: u8 = field(row, 2, 3)?;
            Ok(ShelvingInterval {
                t0: field(row, 0, 3)?,
                t_end: field(row, 1, 3)?,
                censored: censored != 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let intervals = ShelvingIntervals { duration, intervals };
    intervals.check().map_err(FormatError::Invalid)?;
    Ok(IntervalsFile {
        intervals,
        meta: table.meta,
    })
}

/// Scheme recorded in an intervals or bins file, if present.
pub fn scheme_of(meta: &Metadata) -> Option<LevelScheme> {
    scheme_from_meta(meta).ok()
}

// ---------------------------------------------------------------------- bins

pub fn bins_metadata(bins: &BinnedCounts) -> Metadata {
    let mut m = Metadata::new(KIND_BINS);
    m.set("bin_width", bins.bin_width);
    m.set("t_start", bins.t_start);
    m.set("duration", bins.duration);
    m.set("seed", bins.seed);
    m.set("rng", crate::rng::RNG_ID);
    m.set("bright_count_rate", bins.params.bright_count_rate);
    m.set("dark_count_rate", bins.params.dark_count_rate);
    m.set("mode", bins.params.mode.as_str());
    m.set("efficiency", bins.params.efficiency);
    m
}

/// Writes binned counts; `extra` entries (e.g. source hashes) follow the
/// standard metadata.
pub fn write_bins(w: &mut impl Write, bins: &BinnedCounts, extra: &[(String, String)]) -> Result<()> {
    let mut m = bins_metadata(bins);
    for (k, v) in extra {
        m.set(k, v);
    }
    m.write(w)?;
    writeln!(w, "t_start,counts")?;
    for (k, c) in bins.counts.iter().enumerate() {
        writeln!(w, "{},{}", bins.bin_start(k), c)?;
    }
    Ok(())
}

pub fn read_bins(r: impl BufRead) -> Result<(BinnedCounts, Metadata)> {
    let table = read_csv(r, KIND_BINS, "t_start,counts")?;
    let m = &table.meta;
    let params = DetectorParams {
        bright_count_rate: m.parse("bright_count_rate")?,
        dark_count_rate: m.parse("dark_count_rate")?,
        bin_width: m.parse("bin_width")?,
        mode: m.parse("mode")?,
        efficiency: m.parse("efficiency")?,
    };
    let counts = table
        .rows
        .iter()
        .map(|row| field::<u64>(row, 1, 2))
        .collect::<Result<Vec<_>>>()?;
    let bins = BinnedCounts {
        t_start: m.parse("t_start")?,
        bin_width: params.bin_width,
        counts,
        duration: m.parse("duration")?,
        params,
        seed: m.parse("seed")?,
    };
    Ok((bins, table.meta))
}

// -------------------------------------------------------------- dark periods

pub fn dark_metadata(cfg: &DetectorConfig, source_sha256: &str) -> Metadata {
    let mut m = Metadata::new(KIND_DARK);
    m.set("threshold", cfg.threshold);
    m.set("min_dark_duration", cfg.min_dark_duration);
    m.set("hysteresis_bins", cfg.hysteresis_bins);
    m.set("source_sha256", source_sha256);
    m
}

pub fn write_dark_periods(w: &mut impl Write, periods: &[DarkPeriod], meta: &Metadata) -> Result<()> {
    meta.write(w)?;
    writeln!(w, "t0,t_end,dt")?;
    for p in periods {
        writeln!(w, "{},{},{}", p.t0, p.t_end, p.dt)?;
    }
    Ok(())
}

pub fn read_dark_periods(r: impl BufRead) -> Result<(Vec<DarkPeriod>, Metadata)> {
    let table = read_csv(r, KIND_DARK, "t0,t_end,dt")?;
    let periods = table
        .rows
        .iter()
        .map(|row| {
            Ok(DarkPeriod {
                t0: field(row, 0, 3)?,
                t_end: field(row, 1, 3)?,
                dt: field(row, 2, 3)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((periods, table.meta))
}

// ---------------------------------------------------------------- fit report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// KS statistic of the excesses against the fitted lifetime; `null`
    /// when the sample is too small for the test.
    pub ks_statistic: Option<f64>,
    pub conservation_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub tau_hat_s: f64,
    pub tau_stderr_s: f64,
    pub n_events: usize,
    pub t_s_s: f64,
    pub grid: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

pub fn write_fit_report(w: &mut impl Write, report: &FitReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, report).map_err(std::io::Error::from)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_fit_report(r: impl std::io::Read) -> Result<FitReport> {
    let value: serde_json::Value =
        serde_json::from_reader(r).map_err(|e| parse_err(0, e.to_string()))?;
    let version = value.get("version").map(|v| v.to_string());
    check_header(value.get("format").and_then(|v| v.as_str()), version.as_deref(), KIND_FIT)?;
    serde_json::from_value(value).map_err(|e| parse_err(0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon::render_counts;
    use crate::sim::{simulate_full, simulate_telegraph, Channel};
    use proptest::prelude::*;

    fn fast_scheme() -> LevelScheme {
        LevelScheme {
            branch_p1_to_p0: 0.05,
            ..LevelScheme::default()
        }
    }

    #[test]
    fn trajectory_round_trip_and_layout() {
        let traj = simulate_full(&fast_scheme(), 0.3, 8).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["format"], KIND_TRAJECTORY);
        assert_eq!(header["version"], 1);
        assert_eq!(header["seed"], 8);
        let rec: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        let keys: Vec<&str> = rec.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 4);
        for k in ["t", "from", "to", "channel"] {
            assert!(keys.contains(&k));
        }
        // At least 12 significant digits in the mantissa.
        let raw_t = text.lines().nth(1).unwrap().split(',').next().unwrap().trim_start_matches(r#"{"t":"#);
        let mantissa = raw_t.split('e').next().unwrap().replace('.', "");
        assert!(mantissa.len() >= 12, "{raw_t}");

        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back, traj);
        assert!(back.count(Channel::A2) > 0);
    }

    #[test]
    fn version_mismatch_rejected() {
        let traj = simulate_full(&fast_scheme(), 0.01, 1).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen(r#""version":1"#, r#""version":2"#, 1);
        assert!(matches!(
            read_trajectory(text.as_bytes()),
            Err(FormatError::SchemaVersionMismatch { .. })
        ));

        let iv = simulate_telegraph(1.0, 5.0, 10.0, 2).unwrap();
        let file = IntervalsFile::coarse(iv, &fast_scheme(), (1.0, 5.0), 2);
        let mut buf = Vec::new();
        write_intervals(&mut buf, &file).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("# version=1", "# version=0");
        assert!(matches!(
            read_intervals(text.as_bytes()),
            Err(FormatError::SchemaVersionMismatch { .. })
        ));
        assert!(matches!(read_bins(text.as_bytes()), Err(FormatError::WrongKind { .. })));
    }

    #[test]
    fn bins_csv_layout() {
        let iv = simulate_telegraph(2.0, 7.0, 1.0, 3).unwrap();
        let bins = render_counts(&iv, &DetectorParams::default(), 4).unwrap();
        let mut buf = Vec::new();
        write_bins(&mut buf, &bins, &[("source_sha256".into(), "abc".into())]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(!text.contains('\r'));
        let header_idx = text.lines().position(|l| l == "t_start,counts").unwrap();
        assert!(text.lines().take(header_idx).all(|l| l.starts_with('#')));
        assert_eq!(text.lines().count() - header_idx - 1, bins.len());
        let (back, meta) = read_bins(buf.as_slice()).unwrap();
        assert_eq!(back, bins);
        assert_eq!(meta.get("source_sha256"), Some("abc"));
    }

    #[test]
    fn dark_csv_round_trip() {
        let periods = vec![
            DarkPeriod { t0: 0.1, t_end: 0.2, dt: 0.1 },
            DarkPeriod { t0: 1.25, t_end: 1.5, dt: 0.25 },
        ];
        let meta = dark_metadata(&DetectorConfig::new(6.5), "deadbeef");
        let mut buf = Vec::new();
        write_dark_periods(&mut buf, &periods, &meta).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\nt0,t_end,dt\n0.1,0.2,0.1\n"));
        let (back, m) = read_dark_periods(buf.as_slice()).unwrap();
        assert_eq!(back, periods);
        assert_eq!(m.get("source_sha256"), Some("deadbeef"));
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "# format=ionshelf/dark_periods\n# version=1\nt0,t_end,dt\n0.1,0.2\n";
        match read_dark_periods(text.as_bytes()) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_report_field_names() {
        let report = FitReport {
            format: KIND_FIT.into(),
            version: FORMAT_VERSION,
            method: "truncated_mean".into(),
            tau_hat_s: 0.14,
            tau_stderr_s: 0.01,
            n_events: 150,
            t_s_s: 0.07,
            grid: vec![0.07, 0.1],
            diagnostics: FitDiagnostics { ks_statistic: Some(0.05), conservation_ok: true },
        };
        let mut buf = Vec::new();
        write_fit_report(&mut buf, &report).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for k in ["method", "tau_hat_s", "tau_stderr_s", "n_events", "t_s_s", "grid", "diagnostics"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["diagnostics"].get("ks_statistic").is_some());
        assert!(v["diagnostics"].get("conservation_ok").is_some());
        assert_eq!(read_fit_report(buf.as_slice()).unwrap(), report);
    }

    proptest! {
        #[test]
        fn intervals_round_trip(b2d in 0.1f64..10.0, d2b in 0.1f64..10.0, seed in any::<u64>()) {
            let iv = simulate_telegraph(b2d, d2b, 20.0, seed).unwrap();
            let file = IntervalsFile::coarse(iv, &LevelScheme::default(), (b2d, d2b), seed);
            let mut buf = Vec::new();
            write_intervals(&mut buf, &file).unwrap();
            let back = read_intervals(buf.as_slice()).unwrap();
            prop_assert_eq!(&back.intervals, &file.intervals);
            prop_assert_eq!(scheme_of(&back.meta), Some(LevelScheme::default()));
        }
    }
}
