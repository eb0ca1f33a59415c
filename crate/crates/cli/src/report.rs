//! Static SVG figures with the plotted data alongside as CSV.
//!
//! * telegraph: counts per bin against time, detected dark periods shaded.
//! * survival: `ln N(dt > t)` against `t` with the fitted exponential.

use crate::commands::{create_dir, open, read_fit, read_sample, write_file};
use crate::error::{CliError, Result};
use ionshelf::detect::DarkPeriod;
use ionshelf::formats;
use ionshelf::photon::BinnedCounts;
use ionshelf::stats::{self, DurationSample, DEFAULT_GRID_POINTS};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const TELEGRAPH_SVG: &str = "telegraph.svg";
pub const TELEGRAPH_CSV: &str = "telegraph.csv";
pub const SURVIVAL_SVG: &str = "survival.svg";
pub const SURVIVAL_CSV: &str = "survival.csv";

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 340.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Telegraph,
    Survival,
}

impl std::str::FromStr for FigureKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "telegraph" => Ok(FigureKind::Telegraph),
            "survival" | "survival_loglog" => Ok(FigureKind::Survival),
            other => Err(format!("unknown figure kind {other:?} (expected telegraph or survival)")),
        }
    }
}

/// What to draw and from which files.
#[derive(Debug, Clone)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub bins: Option<PathBuf>,
    pub dark: Option<PathBuf>,
    pub fit: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub svg: PathBuf,
    pub csv: PathBuf,
}

fn need(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = p
        .clone()
        .ok_or_else(|| CliError::Usage(format!("this figure needs --{what}")))?;
    if !p.exists() {
        return Err(CliError::MissingInput(p));
    }
    Ok(p)
}

pub fn render_figure(spec: &FigureSpec) -> Result<Figure> {
    match spec.kind {
        FigureKind::Telegraph => telegraph(&need(&spec.bins, "bins")?, &need(&spec.dark, "dark")?, &spec.out),
        FigureKind::Survival => {
            let fit = match &spec.fit {
                Some(_) => Some(need(&spec.fit, "fit")?),
                None => None,
            };
            survival(&need(&spec.dark, "dark")?, fit.as_deref(), &spec.out)
        }
    }
}

fn svg_header(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(title)).unwrap();
    writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map of `[lo, hi]` onto the plot area.
struct Axis {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px0: f64, px1: f64) -> Self {
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self { lo, hi, px0, px1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.px0 + (v - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)
    }
}

fn axes(out: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    writeln!(
        out,
        r#"<path d="M{x0},{y1}V{y0}H{x1}" fill="none" stroke="black" stroke-width="1"/>"#
    )
    .unwrap();
    for i in 0..=4 {
        let v = x.lo + (x.hi - x.lo) * i as f64 / 4.0;
        let px = x.map(v);
        writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 4.0,
            y0 + 18.0,
            tick(v)
        )
        .unwrap();
        let v = y.lo + (y.hi - y.lo) * i as f64 / 4.0;
        let py = y.map(v);
        writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            x0 - 7.0,
            py + 4.0,
            tick(v)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        escape(xlabel)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text transform="translate(16,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

// ----------------------------------------------------------------- telegraph

/// Per-bin rows `(t_start, counts, in_dark_period)`.
pub fn telegraph_rows(bins: &BinnedCounts, periods: &[DarkPeriod]) -> Vec<(f64, u64, bool)> {
    let mut dark = vec![false; bins.len()];
    for p in periods {
        let i = ((p.t0 - bins.t_start) / bins.bin_width).round().max(0.0) as usize;
        let j = (((p.t_end - bins.t_start) / bins.bin_width).round() as usize).min(bins.len());
        for d in dark.iter_mut().take(j).skip(i) {
            *d = true;
        }
    }
    bins.counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (bins.bin_start(k), c, dark[k]))
        .collect()
}

/// Counts as one vertical min-max stroke per pixel column.
pub fn telegraph_svg(bins: &BinnedCounts, periods: &[DarkPeriod]) -> String {
    let t_end = bins.bin_start(bins.len());
    let x = Axis::new(bins.t_start, t_end, LEFT, WIDTH - RIGHT);
    let cmax = bins.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let y = Axis::new(0.0, cmax, HEIGHT - BOTTOM, TOP);
    let mut out = String::new();
    svg_header(&mut out, "Fluorescence counts per bin");
    writeln!(out, r##"<g fill="#7fa7d9" fill-opacity="0.45">"##).unwrap();
    for p in periods {
        let x0 = x.map(p.t0);
        let w = (x.map(p.t_end) - x0).max(0.5);
        writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{TOP}" width="{w:.2}" height="{:.2}"/>"#,
            HEIGHT - BOTTOM - TOP
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();

    let n = bins.len();
    let columns = n.min((WIDTH - LEFT - RIGHT) as usize).max(1);
    let mut lo = vec![u64::MAX; columns];
    let mut hi = vec![0u64; columns];
    for (k, &c) in bins.counts.iter().enumerate() {
        let col = k * columns / n.max(1);
        lo[col] = lo[col].min(c);
        hi[col] = hi[col].max(c);
    }
    let mut d = String::new();
    for col in 0..columns {
        if lo[col] == u64::MAX {
            continue;
        }
        let k0 = col * n / columns;
        let k1 = ((col + 1) * n / columns).max(k0 + 1);
        let px = x.map((bins.bin_start(k0) + bins.bin_start(k1)) / 2.0);
        write!(d, "M{px:.2},{:.2}V{:.2}", y.map(lo[col] as f64), y.map(hi[col] as f64)).unwrap();
    }
    writeln!(
        out,
        r#"<path d="{d}" fill="none" stroke="black" stroke-width="1" stroke-linecap="square"/>"#
    )
    .unwrap();
    axes(&mut out, &x, &y, "time (s)", "counts per bin");
    out.push_str("</svg>\n");
    out
}

pub fn telegraph(bins_path: &Path, dark_path: &Path, out: &Path) -> Result<Figure> {
    let (bins, _) = formats::read_bins(open(bins_path)?).map_err(|e| CliError::format(bins_path, e))?;
    let (periods, _) =
        formats::read_dark_periods(open(dark_path)?).map_err(|e| CliError::format(dark_path, e))?;
    telegraph_from(&bins, &periods, out)
}

/// [`telegraph`] on data already in memory.
pub fn telegraph_from(bins: &BinnedCounts, periods: &[DarkPeriod], out: &Path) -> Result<Figure> {
    create_dir(out)?;
    let svg = out.join(TELEGRAPH_SVG);
    let csv = out.join(TELEGRAPH_CSV);
    let text = telegraph_svg(bins, periods);
    write_file(&svg, |w| Ok(w.write_all(text.as_bytes())?))?;
    let rows = telegraph_rows(bins, periods);
    write_file(&csv, |w| {
        writeln!(w, "t_start,counts,dark")?;
        for (t, c, dark) in &rows {
            writeln!(w, "{t},{c},{}", u8::from(*dark))?;
        }
        Ok(())
    })?;
    Ok(Figure { svg, csv })
}

// ------------------------------------------------------------------ survival

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalPoint {
    pub t: f64,
    pub n_dark_longer: u64,
    pub n_decayed: u64,
    /// `ln n_dark_longer`; points with no survivors are not plotted.
    pub ln_n: f64,
    /// `ln N_D - (t - t_s) / tau` for the fitted `tau`.
    pub model_ln: f64,
}

/// Survival counts on `grid` with the exponential model for `tau`.
pub fn survival_points(sample: &DurationSample, grid: &[f64], tau: f64) -> Result<Vec<SurvivalPoint>> {
    let counts = stats::survival_counts(sample, grid).map_err(|e| CliError::compute("survival plot", e))?;
    let ln_total = (counts.total as f64).ln();
    Ok(counts
        .grid
        .iter()
        .zip(counts.n_dark_longer.iter().zip(&counts.n_decayed))
        .filter(|(_, (&n, _))| n > 0)
        .map(|(&t, (&n, &d))| SurvivalPoint {
            t,
            n_dark_longer: n,
            n_decayed: d,
            ln_n: (n as f64).ln(),
            model_ln: ln_total - (t - sample.t_s()) / tau,
        })
        .collect())
}

pub fn survival_svg(points: &[SurvivalPoint], tau: f64) -> String {
    let t_lo = points.first().map_or(0.0, |p| p.t);
    let t_hi = points.last().map_or(1.0, |p| p.t);
    let y_hi = points.iter().map(|p| p.ln_n.max(p.model_ln)).fold(0.0, f64::max);
    let y_lo = points.iter().map(|p| p.ln_n.min(p.model_ln)).fold(0.0, f64::min);
    let x = Axis::new(t_lo, t_hi, LEFT, WIDTH - RIGHT);
    let y = Axis::new(y_lo, y_hi * 1.05, HEIGHT - BOTTOM, TOP);
    let mut out = String::new();
    svg_header(&mut out, "Dark periods longer than t");
    if let (Some(a), Some(b)) = (points.first(), points.last()) {
        writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c0392b" stroke-width="1.5"/>"##,
            x.map(a.t),
            y.map(a.model_ln),
            x.map(b.t),
            y.map(b.model_ln)
        )
        .unwrap();
    }
    writeln!(out, r#"<g fill="black">"#).unwrap();
    for p in points {
        writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, x.map(p.t), y.map(p.ln_n)).unwrap();
    }
    writeln!(out, "</g>").unwrap();
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">tau = {tau:.4} s</text>"#,
        WIDTH - RIGHT - 10.0,
        TOP + 16.0
    )
    .unwrap();
    axes(&mut out, &x, &y, "t (s)", "ln N(dt > t)");
    out.push_str("</svg>\n");
    out
}

/// Survival figure from a dark-period file. Grid and lifetime come from
/// the fit report when one is given, otherwise the default grid and the
/// truncated-mean lifetime are used.
pub fn survival(dark_path: &Path, fit_path: Option<&Path>, out: &Path) -> Result<Figure> {
    let fit = fit_path.map(read_fit).transpose()?;
    let sample = read_sample(dark_path, fit.as_ref().map(|f| f.t_s_s))?;
    let ctx = |e: stats::StatsError| CliError::compute(format!("survival plot {}", dark_path.display()), e);
    let (grid, tau) = match fit {
        Some(f) => (f.grid, f.tau_hat_s),
        None => (
            stats::default_grid(&sample, DEFAULT_GRID_POINTS).map_err(ctx)?,
            stats::truncated_mean_estimator(&sample).map_err(ctx)?.tau_hat,
        ),
    };
    let points = survival_points(&sample, &grid, tau)?;
    create_dir(out)?;
    let svg = out.join(SURVIVAL_SVG);
    let csv = out.join(SURVIVAL_CSV);
    let text = survival_svg(&points, tau);
    write_file(&svg, |w| Ok(w.write_all(text.as_bytes())?))?;
    write_file(&csv, |w| {
        writeln!(w, "t,n_dark_longer,n_decayed,ln_n_dark_longer,model_ln")?;
        for p in &points {
            writeln!(w, "{},{},{},{},{}", p.t, p.n_dark_longer, p.n_decayed, p.ln_n, p.model_ln)?;
        }
        Ok(())
    })?;
    Ok(Figure { svg, csv })
}
