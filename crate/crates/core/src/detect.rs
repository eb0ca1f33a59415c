//! Dark-period detection on binned counts.
//!
//! A bin is "dark" when its count is at or below the threshold. A dark
//! period opens at the left edge of the first bin of a run of at least
//! `hysteresis_bins` dark bins and closes at the left edge of the first bin
//! of a run of at least `hysteresis_bins` bright bins. Shorter runs are
//! absorbed into the surrounding state. Periods that touch either end of
//! the record are censored and dropped, as are periods shorter than
//! `min_dark_duration`.

use crate::photon::BinnedCounts;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("no bins to analyse")]
    EmptyInput,
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("count histogram is not bimodal: {0}")]
    NotBimodal(String),
}

pub type Result<T> = std::result::Result<T, DetectError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Counts per bin at or below which a bin is dark.
    pub threshold: f64,
    pub min_dark_duration: f64,
    pub hysteresis_bins: usize,
}

impl DetectorConfig {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            min_dark_duration: 0.070,
            hysteresis_bins: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(DetectError::InvalidConfig(format!("threshold must be >= 0, got {}", self.threshold)));
        }
        if !(self.min_dark_duration >= 0.0 && self.min_dark_duration.is_finite()) {
            return Err(DetectError::InvalidConfig(format!(
                "min_dark_duration must be >= 0, got {}",
                self.min_dark_duration
            )));
        }
        if self.hysteresis_bins < 1 {
            return Err(DetectError::InvalidConfig("hysteresis_bins must be >= 1".into()));
        }
        Ok(())
    }
}

/// One detected shelving interval: onset `t0`, end `t_end`, `dt = t_end - t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkPeriod {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
}

/// Finds dark periods as `(first_dark_bin, first_bright_bin)` index pairs,
/// without the duration cut. Periods touching the record ends are dropped.
fn dark_runs(counts: &[u64], threshold: f64, hysteresis: usize) -> Vec<(usize, usize)> {
    let is_dark = |c: u64| (c as f64) <= threshold;
    let mut runs = Vec::new();
    let mut in_dark = false;
    let mut onset = 0;
    let mut k = 0;
    while k < counts.len() {
        // Length of the run of same-state bins starting at k.
        let state = is_dark(counts[k]);
        let mut end = k + 1;
        while end < counts.len() && is_dark(counts[end]) == state {
            end += 1;
        }
        let long_enough = end - k >= hysteresis;
        if state && !in_dark && long_enough {
            in_dark = true;
            onset = k;
        } else if !state && in_dark && long_enough {
            in_dark = false;
            if onset > 0 {
                runs.push((onset, k));
            }
        }
        k = end;
    }
    runs
}

pub fn detect(bins: &BinnedCounts, cfg: &DetectorConfig) -> Result<Vec<DarkPeriod>> {
    if bins.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    cfg.validate()?;
    Ok(dark_runs(&bins.counts, cfg.threshold, cfg.hysteresis_bins)
        .into_iter()
        .map(|(i, j)| DarkPeriod {
            t0: bins.bin_start(i),
            t_end: bins.bin_start(j),
            dt: (j - i) as f64 * bins.bin_width,
        })
        .filter(|p| p.dt >= cfg.min_dark_duration)
        .collect())
}

/// Threshold splitting a bimodal count histogram.
///
/// The histogram is first split at the integer cut `k` (dark: count <= k)
/// minimizing the Kittler-Illingworth error criterion
/// `P0 ln v0 + P1 ln v1 - 2 (P0 ln P0 + P1 ln P1)`, with class variances
/// floored by the integer quantization variance 1/12. Unlike a plain
/// between-class variance split, this stays on the true boundary when the
/// dark class holds only a fraction of a percent of the bins. The
/// threshold is then the middle of the lowest stretch of the histogram
/// between the modes of the two classes.
///
/// `NotBimodal` is returned when there is no dip between the modes (the
/// valley floor must be at most half the lower mode and lie more than
/// three Poisson standard deviations below it), or when the class means
/// are closer than twice the pooled within-class standard deviation.
pub fn suggest_threshold(bins: &BinnedCounts) -> Result<f64> {
    suggest_threshold_counts(&bins.counts)
}

/// [`suggest_threshold`] on a bare count slice.
pub fn suggest_threshold_counts(counts: &[u64]) -> Result<f64> {
    if counts.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    let max = *counts.iter().max().expect("non-empty") as usize;
    let mut hist = vec![0u64; max + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    let cut = min_error_cut(&hist).ok_or_else(|| DetectError::NotBimodal("all bins have the same count".into()))?;

    let argmax = |range: std::ops::RangeInclusive<usize>| {
        range.clone().fold(*range.start(), |best, k| if hist[k] > hist[best] { k } else { best })
    };
    let dark_mode = argmax(0..=cut);
    let bright_mode = argmax(cut + 1..=max);
    if bright_mode - dark_mode < 2 {
        return Err(DetectError::NotBimodal(format!("modes {dark_mode} and {bright_mode} are adjacent")));
    }
    let valley = dark_mode + 1..bright_mode;
    let floor = valley.clone().map(|k| hist[k]).min().expect("non-empty valley");
    let first = valley.clone().find(|&k| hist[k] == floor).expect("floor attained");
    let last = valley.rev().find(|&k| hist[k] == floor).expect("floor attained");
    let threshold = (first + last) as f64 / 2.0;

    let lower_mode = hist[dark_mode].min(hist[bright_mode]) as f64;
    let floor = floor as f64;
    if floor > 0.5 * lower_mode || lower_mode - floor <= 3.0 * lower_mode.sqrt() {
        return Err(DetectError::NotBimodal(format!(
            "no significant dip between modes {dark_mode} and {bright_mode}"
        )));
    }

    let (mut dark, mut bright) = (Vec::new(), Vec::new());
    for &c in counts {
        if c as f64 <= threshold {
            dark.push(c as f64)
        } else {
            bright.push(c as f64)
        }
    }
    let moments = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>())
    };
    let (mu0, ss0) = moments(&dark);
    let (mu1, ss1) = moments(&bright);
    let pooled_sd = ((ss0 + ss1) / counts.len() as f64).sqrt();
    if (mu1 - mu0) < 2.0 * pooled_sd {
        return Err(DetectError::NotBimodal(format!(
            "class means {mu0:.3} and {mu1:.3} are within 2 pooled sd ({pooled_sd:.3})"
        )));
    }
    Ok(threshold)
}

/// Smallest integer cut minimizing the minimum-error criterion, or `None`
/// when no cut leaves both classes non-empty.
fn min_error_cut(hist: &[u64]) -> Option<usize> {
    let n: u64 = hist.iter().sum();
    let (s_all, q_all) = hist.iter().enumerate().fold((0u128, 0u128), |(s, q), (k, &h)| {
        (s + (k as u128) * h as u128, q + (k as u128).pow(2) * h as u128)
    });
    let class = |m: u64, s: u128, q: u128| {
        let p = m as f64 / n as f64;
        let mean = s as f64 / m as f64;
        let var = (q as f64 / m as f64 - mean * mean).max(0.0) + 1.0 / 12.0;
        p * var.ln() - 2.0 * p * p.ln()
    };
    let mut best: Option<(f64, usize)> = None;
    let (mut n0, mut s0, mut q0) = (0u64, 0u128, 0u128);
    for k in 0..hist.len().saturating_sub(1) {
        n0 += hist[k];
        s0 += k as u128 * hist[k] as u128;
        q0 += (k as u128).pow(2) * hist[k] as u128;
        if n0 == 0 || n0 == n {
            continue;
        }
        let score = class(n0, s0, q0) + class(n - n0, s_all - s0, q_all - q0);
        if best.map_or(true, |(b, _)| score < b) {
            best = Some((score, k));
        }
    }
    best.map(|(_, k)| k)
}
