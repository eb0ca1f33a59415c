//! Binned fluorescence counts: the observable telegraph signal.
//!
//! Two renderers:
//! - [`render_counts`] treats the bright signal as a rate and draws one
//!   Poisson count per bin from the exact bright fraction of that bin.
//! - [`render_counts_per_photon`] thins the individual `A1` decays of a full
//!   trajectory with the detection efficiency and adds Poisson background.

use crate::rng;
use crate::sim::{Channel, ShelvingIntervals, Trajectory};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("invalid detector parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, RenderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    RateModel,
    PerPhoton,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::RateModel => "rate_model",
            RenderMode::PerPhoton => "per_photon",
        }
    }
}

impl std::str::FromStr for RenderMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rate_model" => Ok(RenderMode::RateModel),
            "per_photon" => Ok(RenderMode::PerPhoton),
            other => Err(format!("unknown render mode {other:?} (expected rate_model or per_photon)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Detected counts per second while the ion cycles.
    pub bright_count_rate: f64,
    /// Background counts per second.
    pub dark_count_rate: f64,
    pub bin_width: f64,
    pub mode: RenderMode,
    /// Per-photon detection probability (`per_photon` mode only).
    pub efficiency: f64,
}

impl Default for DetectorParams {
    /// Synthetic defaults: 10 ms bins, 20 counts per bright bin, 0.4 per dark bin.
    fn default() -> Self {
        Self {
            bright_count_rate: 2000.0,
            dark_count_rate: 40.0,
            bin_width: 0.010,
            mode: RenderMode::RateModel,
            efficiency: 1e-3,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RenderError::InvalidParams(msg));
        if !(self.dark_count_rate >= 0.0 && self.dark_count_rate.is_finite()) {
            return bad(format!("dark_count_rate must be >= 0, got {}", self.dark_count_rate));
        }
        if !(self.bright_count_rate > self.dark_count_rate && self.bright_count_rate.is_finite()) {
            return bad(format!(
                "bright_count_rate ({}) must exceed dark_count_rate ({})",
                self.bright_count_rate, self.dark_count_rate
            ));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return bad(format!("bin_width must be > 0, got {}", self.bin_width));
        }
        // Zero efficiency is accepted: it is the trivial all-lost detector.
        if !(0.0..=1.0).contains(&self.efficiency) {
            return bad(format!("efficiency must be in [0, 1], got {}", self.efficiency));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCounts {
    pub t_start: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    /// Length of the underlying record; the last bin may extend past it.
    pub duration: f64,
    pub params: DetectorParams,
    pub seed: u64,
}

impl BinnedCounts {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Left edge of bin `k`.
    pub fn bin_start(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Number of bins covering `[0, duration)`: `ceil(duration / bin_width)`.
pub fn bin_count(duration: f64, bin_width: f64) -> usize {
    let ratio = duration / bin_width;
    let rounded = ratio.round();
    // Absorb the representation error of e.g. 1.0 / 0.01.
    if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Per-bin `(exposure, dark_time)` for `[0, duration)` cut into bins.
///
/// `exposure` is the part of the bin inside the record and `dark_time` its
/// exact overlap with shelving intervals.
pub fn bin_coverage(intervals: &ShelvingIntervals, bin_width: f64) -> Vec<(f64, f64)> {
    let n = bin_count(intervals.duration, bin_width);
    let mut out = Vec::with_capacity(n);
    let ivs = &intervals.intervals;
    let mut first = 0;
    for k in 0..n {
        let lo = k as f64 * bin_width;
        let hi = ((k + 1) as f64 * bin_width).min(intervals.duration);
        while first < ivs.len() && ivs[first].t_end <= lo {
            first += 1;
        }
        let mut dark = 0.0;
        for iv in &ivs[first..] {
            if iv.t0 >= hi {
                break;
            }
            dark += iv.t_end.min(hi) - iv.t0.max(lo);
        }
        let exposure = (hi - lo).max(0.0);
        out.push((exposure, dark.clamp(0.0, exposure)));
    }
    out
}

/// Reuses the sampler while consecutive bins share a mean (building one
/// draws no randomness, so the stream is unchanged).
#[derive(Default)]
struct PoissonCache {
    last: Option<(f64, Poisson<f64>)>,
}

impl PoissonCache {
    fn sample(&mut self, rng: &mut impl Rng, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        match &self.last {
            Some((m, d)) if *m == mean => d.sample(rng) as u64,
            _ => {
                // Poisson::new only fails for non-positive or non-finite means.
                let d = Poisson::new(mean).expect("finite positive mean");
                let x = d.sample(rng) as u64;
                self.last = Some((mean, d));
                x
            }
        }
    }
}

/// Rate-model rendering of shelving intervals.
///
/// Bin `k` gets a Poisson count with mean
/// `bright_count_rate * bright_time + dark_count_rate * exposure`, which for
/// a full bin is `bin_width * (bright_count_rate * f_bright + dark_count_rate)`.
pub fn render_counts(
    intervals: &ShelvingIntervals,
    params: &DetectorParams,
    seed: u64,
) -> Result<BinnedCounts> {
    params.validate()?;
    let mut rng = rng::seeded(seed);
    let mut sampler = PoissonCache::default();
    let counts = bin_coverage(intervals, params.bin_width)
        .into_iter()
        .map(|(exposure, dark)| {
            let mean = params.bright_count_rate * (exposure - dark) + params.dark_count_rate * exposure;
            sampler.sample(&mut rng, mean)
        })
        .collect();
    Ok(BinnedCounts {
        t_start: 0.0,
        bin_width: params.bin_width,
        counts,
        duration: intervals.duration,
        params: *params,
        seed,
    })
}

/// Photon-by-photon rendering of a full trajectory.
///
/// Every `A1` decay is detected with probability `efficiency` (one draw per
/// decay, in time order), then background is added bin by bin.
pub fn render_counts_per_photon(
    trajectory: &Trajectory,
    params: &DetectorParams,
    seed: u64,
) -> Result<BinnedCounts> {
    params.validate()?;
    if params.mode != RenderMode::PerPhoton {
        return Err(RenderError::InvalidParams(format!(
            "per-photon rendering needs mode per_photon, got {}",
            params.mode.as_str()
        )));
    }
    let mut rng = rng::seeded(seed);
    let n = bin_count(trajectory.duration, params.bin_width);
    let mut counts = vec![0u64; n];
    for j in trajectory.jumps.iter().filter(|j| j.channel == Channel::A1) {
        if rng.gen::<f64>() < params.efficiency {
            let k = ((j.t / params.bin_width) as usize).min(n.saturating_sub(1));
            counts[k] += 1;
        }
    }
    let mut sampler = PoissonCache::default();
    for (k, c) in counts.iter_mut().enumerate() {
        let lo = k as f64 * params.bin_width;
        let hi = ((k + 1) as f64 * params.bin_width).min(trajectory.duration);
        *c += sampler.sample(&mut rng, params.dark_count_rate * (hi - lo).max(0.0));
    }
    Ok(BinnedCounts {
        t_start: 0.0,
        bin_width: params.bin_width,
        counts,
        duration: trajectory.duration,
        params: *params,
        seed,
    })
}
