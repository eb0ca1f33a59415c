//! Lifetime statistics of dark-period durations.
//!
//! Durations are only observed above a detection floor `t_s`. Under the
//! exponential law `P(dt > t) = exp(-(t - t_s) / tau)` for `t >= t_s`, so
//! every estimator here works with the excess `dt - t_s`.
//!
//! Counting convention: "still dark" at `t` means `dt > t` (strict) and
//! "decayed" means `dt <= t`, so ties count as decayed and the two always
//! sum to the sample size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grid points with fewer surviving periods than this are left out of the
/// log-linear fit.
pub const GRID_FLOOR: u64 = 5;
/// Default number of points in the fit grid.
pub const DEFAULT_GRID_POINTS: usize = 20;
/// Asymptotic Kolmogorov critical value at significance 0.01.
pub const KS_CRITICAL_001: f64 = 1.627_62;
pub const KS_ALPHA: f64 = 0.01;
pub const KS_MIN_SAMPLE: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("grid must be strictly increasing")]
    UnsortedGrid,
    #[error("duration {duration} is below the truncation threshold t_s = {t_s}")]
    BelowTruncation { duration: f64, t_s: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("fitted slope {0} is not negative: sample does not decay")]
    NonDecayingSample(f64),
    #[error("mean excess duration {0} is not positive")]
    NonPositiveEstimate(f64),
    #[error("KS test needs at least {min} durations, got {got}")]
    SampleTooSmall { got: usize, min: usize },
    #[error("invalid lifetime {0}")]
    InvalidLifetime(f64),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Dark-period durations observed above the truncation threshold `t_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DurationSample {
    durations: Vec<f64>,
    t_s: f64,
}

impl DurationSample {
    pub fn new(durations: Vec<f64>, t_s: f64) -> Result<Self> {
        if !(t_s >= 0.0 && t_s.is_finite()) {
            return Err(StatsError::BelowTruncation { duration: f64::NAN, t_s });
        }
        if let Some(&d) = durations.iter().find(|&&d| !(d >= t_s && d.is_finite())) {
            return Err(StatsError::BelowTruncation { duration: d, t_s });
        }
        Ok(Self { durations, t_s })
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.durations.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(StatsError::EmptySample)
        } else {
            Ok(())
        }
    }

    /// Multiplies every duration and `t_s` by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.durations.iter().map(|d| d * c).collect(), self.t_s * c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCounts {
    pub grid: Vec<f64>,
    /// Periods with `dt > t_k`.
    pub n_dark_longer: Vec<u64>,
    /// Periods with `dt <= t_k`.
    pub n_decayed: Vec<u64>,
    pub total: u64,
}

impl SurvivalCounts {
    /// Empirical survival `n_dark_longer / total` at each grid point.
    pub fn ratios(&self) -> Vec<f64> {
        self.n_dark_longer
            .iter()
            .map(|&n| n as f64 / self.total as f64)
            .collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        Err(StatsError::UnsortedGrid)
    } else {
        Ok(())
    }
}

pub fn survival_counts(sample: &DurationSample, grid: &[f64]) -> Result<SurvivalCounts> {
    sample.require_nonempty()?;
    check_grid(grid)?;
    let sorted = sample.sorted();
    let mut n_dark_longer = Vec::with_capacity(grid.len());
    let mut n_decayed = Vec::with_capacity(grid.len());
    for &t in grid {
        n_decayed.push(sorted.partition_point(|&d| d <= t) as u64);
        n_dark_longer.push((sorted.len() - sorted.partition_point(|&d| !(d > t))) as u64);
    }
    Ok(SurvivalCounts {
        grid: grid.to_vec(),
        n_dark_longer,
        n_decayed,
        total: sorted.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub per_point: Vec<bool>,
}

impl ConservationReport {
    pub fn all_ok(&self) -> bool {
        self.per_point.iter().all(|&ok| ok)
    }

    pub fn failures(&self) -> Vec<usize> {
        self.per_point
            .iter()
            .enumerate()
            .filter(|(_, &ok)| !ok)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Checks `n_decayed + n_dark_longer == total` at every grid point.
pub fn conservation_check(counts: &SurvivalCounts) -> ConservationReport {
    let per_point = counts
        .n_dark_longer
        .iter()
        .zip(&counts.n_decayed)
        .map(|(&a, &b)| a.checked_add(b) == Some(counts.total))
        .collect();
    ConservationReport { per_point }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Loglinear,
    TruncatedMean,
    WeightedAverage,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Loglinear => "loglinear",
            FitMethod::TruncatedMean => "truncated_mean",
            FitMethod::WeightedAverage => "weighted_average",
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "loglinear" => Ok(FitMethod::Loglinear),
            "truncated_mean" | "mle" => Ok(FitMethod::TruncatedMean),
            "weighted_average" | "weighted" => Ok(FitMethod::WeightedAverage),
            other => Err(format!(
                "unknown fit method {other:?} (expected mle, loglinear or weighted_average)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub tau_hat: f64,
    pub tau_stderr: f64,
    /// Log-linear fit: `ln` of the surviving count extrapolated to `t = t_s`.
    /// Zero for the other methods.
    pub intercept: f64,
    pub n_points: usize,
    pub method: FitMethod,
}

/// `n` equally spaced points from `t_s` to the 90th-percentile duration.
pub fn default_grid(sample: &DurationSample, n: usize) -> Result<Vec<f64>> {
    sample.require_nonempty()?;
    let sorted = sample.sorted();
    // Nearest-rank percentile.
    let rank = ((0.9 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let hi = sorted[rank - 1];
    let lo = sample.t_s;
    if n < 2 || hi <= lo {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|k| lo + step * k as f64).collect())
}

/// Ordinary least squares of `ln N` on `t`. Returns `(slope, intercept, slope_se)`.
fn ols(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if points.len() > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, se)
}

/// Straight-line fit through `(t, ln N)` points; `tau_hat = -1 / slope`.
///
/// `intercept` is the fitted `ln N` at `t_ref`. With exactly two points the
/// standard error is reported as zero (no residual degrees of freedom).
pub fn loglinear_fit_points(points: &[(f64, f64)], t_ref: f64) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(StatsError::DegenerateFit(format!(
            "{} usable grid point(s), need at least 2",
            points.len()
        )));
    }
    let (slope, intercept, slope_se) = ols(points);
    if !slope.is_finite() {
        return Err(StatsError::DegenerateFit("grid points share one time".into()));
    }
    if slope >= 0.0 {
        return Err(StatsError::NonDecayingSample(slope));
    }
    Ok(FitResult {
        tau_hat: -1.0 / slope,
        tau_stderr: slope_se / (slope * slope),
        intercept: intercept + slope * t_ref,
        n_points: points.len(),
        method: FitMethod::Loglinear,
    })
}

/// Points `(t_k, ln N_D(dt > t_k))` kept by the log-linear fit.
pub fn loglinear_points(counts: &SurvivalCounts) -> Vec<(f64, f64)> {
    counts
        .grid
        .iter()
        .zip(&counts.n_dark_longer)
        .filter(|(_, &n)| n >= GRID_FLOOR)
        .map(|(&t, &n)| (t, (n as f64).ln()))
        .collect()
}

/// Log-linear fit of the surviving counts on `grid` (points with fewer
/// than [`GRID_FLOOR`] survivors are dropped).
pub fn loglinear_fit(sample: &DurationSample, grid: &[f64]) -> Result<FitResult> {
    let counts = survival_counts(sample, grid)?;
    loglinear_fit_points(&loglinear_points(&counts), sample.t_s)
}

/// Lifetime as the area under the empirical survival curve above `t_s`.
///
/// With sorted durations `d_1 <= ... <= d_n` and `d_0 = t_s`, this is
/// `sum_k (d_k - d_{k-1}) * (n - k + 1) / n`, a Riemann sum of the
/// counting ratio that equals `mean(d) - t_s`. The standard error is the
/// sample standard deviation over `sqrt(n)` (zero for a single duration).
pub fn weighted_average_lifetime(sample: &DurationSample) -> Result<FitResult> {
    sample.require_nonempty()?;
    let sorted = sample.sorted();
    let n = sorted.len();
    let mut prev = sample.t_s;
    let mut area = 0.0;
    for (k, &d) in sorted.iter().enumerate() {
        let surviving = (n - k) as f64 / n as f64;
        area += (d - prev) * surviving;
        prev = d;
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (sorted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(FitResult {
        tau_hat: area,
        tau_stderr: sd / (n as f64).sqrt(),
        intercept: 0.0,
        n_points: n,
        method: FitMethod::WeightedAverage,
    })
}

/// Maximum-likelihood lifetime of a left-truncated exponential:
/// `mean(dt) - t_s`, with standard error `tau_hat / sqrt(n)`.
pub fn truncated_mean_estimator(sample: &DurationSample) -> Result<FitResult> {
    sample.require_nonempty()?;
    let n = sample.len() as f64;
    let tau = sample.durations.iter().map(|d| d - sample.t_s).sum::<f64>() / n;
    if !(tau > 0.0) {
        return Err(StatsError::NonPositiveEstimate(tau));
    }
    Ok(FitResult {
        tau_hat: tau,
        tau_stderr: tau / n.sqrt(),
        intercept: 0.0,
        n_points: sample.len(),
        method: FitMethod::TruncatedMean,
    })
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // Alternating series converges too slowly here; the value is 1 to
        // double precision for x below ~0.3.
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
    pub pass: bool,
}

/// One-sample KS statistic of sorted data against a CDF.
pub fn ks_statistic_sorted<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS test of the excesses `dt - t_s` against `Exp(mean = tau)` at
/// significance 0.01, using the asymptotic critical value `1.62762 / sqrt(n)`.
pub fn ks_exponential_test(sample: &DurationSample, tau: f64) -> Result<KsResult> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(StatsError::InvalidLifetime(tau));
    }
    if sample.len() < KS_MIN_SAMPLE {
        return Err(StatsError::SampleTooSmall {
            got: sample.len(),
            min: KS_MIN_SAMPLE,
        });
    }
    let excess: Vec<f64> = sample.sorted().iter().map(|d| d - sample.t_s).collect();
    let d = ks_statistic_sorted(&excess, |x| 1.0 - (-x / tau).exp());
    let sqrt_n = (excess.len() as f64).sqrt();
    let critical = KS_CRITICAL_001 / sqrt_n;
    Ok(KsResult {
        statistic: d,
        critical_value: critical,
        p_value: kolmogorov_sf(sqrt_n * d),
        pass: d <= critical,
    })
}

/// Two-sample KS test at significance 0.01 with critical value
/// `1.62762 * sqrt((n + m) / (n m))`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    for s in [a, b] {
        if s.len() < KS_MIN_SAMPLE {
            return Err(StatsError::SampleTooSmall {
                got: s.len(),
                min: KS_MIN_SAMPLE,
            });
        }
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let scale = (n * m / (n + m)).sqrt();
    let critical = KS_CRITICAL_001 / scale;
    Ok(KsResult {
        statistic: d,
        critical_value: critical,
        p_value: kolmogorov_sf(scale * d),
        pass: d <= critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    const TAU: f64 = 0.14;
    const T_S: f64 = 0.070;

    fn truncated_draws(n: usize, seed: u64) -> DurationSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = Exp::new(1.0 / TAU).unwrap();
        DurationSample::new((0..n).map(|_| T_S + exp.sample(&mut rng)).collect(), T_S).unwrap()
    }

    #[test]
    fn survival_counts_small_example() {
        let s = DurationSample::new(vec![1.0, 2.0, 3.0], 0.0).unwrap();
        let c = survival_counts(&s, &[1.5]).unwrap();
        assert_eq!(c.n_dark_longer, vec![2]);
        assert_eq!(c.n_decayed, vec![1]);
        assert!((c.ratios()[0] - 2.0 / 3.0).abs() < 1e-15);
        let c = survival_counts(&s, &[0.5, 2.0]).unwrap();
        assert_eq!(c.n_dark_longer, vec![3, 1]);
        // Tie at 2.0 counts as decayed.
        assert_eq!(c.n_decayed, vec![0, 2]);
    }

    #[test]
    fn survival_counts_errors() {
        let empty = DurationSample::new(vec![], 0.0).unwrap();
        assert_eq!(survival_counts(&empty, &[1.0]), Err(StatsError::EmptySample));
        let s = DurationSample::new(vec![1.0], 0.0).unwrap();
        assert_eq!(survival_counts(&s, &[2.0, 1.0]), Err(StatsError::UnsortedGrid));
        assert_eq!(survival_counts(&s, &[1.0, 1.0]), Err(StatsError::UnsortedGrid));
        assert!(matches!(DurationSample::new(vec![0.05], T_S), Err(StatsError::BelowTruncation { .. })));
    }

    #[test]
    fn survival_ratio_one_e_fold_past_threshold() {
        // Oracle: direct empirical CDF count; binomial sd at p = 1/e.
        let s = truncated_draws(10_000, 1);
        let t = T_S + TAU;
        let direct = s.durations().iter().filter(|&&d| d > t).count() as f64 / 1e4;
        let ratio = survival_counts(&s, &[t]).unwrap().ratios()[0];
        assert_eq!(ratio, direct);
        let p = (-1.0f64).exp();
        assert!((ratio - p).abs() < 3.0 * (p * (1.0 - p) / 1e4).sqrt());
        assert_eq!(survival_counts(&s, &[T_S]).unwrap().ratios()[0], 1.0);
    }

    #[test]
    fn conservation_detects_corruption() {
        let s = truncated_draws(150, 2);
        let mut c = survival_counts(&s, &default_grid(&s, 20).unwrap()).unwrap();
        assert!(conservation_check(&c).all_ok());
        c.n_decayed[7] += 1;
        let report = conservation_check(&c);
        assert!(!report.all_ok());
        assert_eq!(report.failures(), vec![7]);
    }

    #[test]
    fn loglinear_two_point_example() {
        let pts = [(0.0, 100f64.ln()), (1.0, (100.0 / std::f64::consts::E).ln())];
        let fit = loglinear_fit_points(&pts, 0.0).unwrap();
        assert!((fit.tau_hat - 1.0).abs() < 1e-12);
        assert_eq!(fit.tau_stderr, 0.0);
        assert!((fit.intercept - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loglinear_rounded_counts() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|k| {
                let t = T_S + (0.5 - T_S) * k as f64 / 19.0;
                (t, (150.0 * (-(t - T_S) / TAU).exp()).round().ln())
            })
            .collect();
        let fit = loglinear_fit_points(&pts, T_S).unwrap();
        assert!((fit.tau_hat - TAU).abs() / TAU < 0.02, "{}", fit.tau_hat);
        assert!((fit.intercept - 150f64.ln()).abs() < 0.05);
    }

    #[test]
    fn loglinear_on_draws_matches_truncated_mean() {
        // Oracle: the closed-form truncated-mean estimate on the same draws.
        let s = truncated_draws(10_000, 3);
        let fit = loglinear_fit(&s, &default_grid(&s, DEFAULT_GRID_POINTS).unwrap()).unwrap();
        let oracle = s.durations().iter().map(|d| d - T_S).sum::<f64>() / 1e4;
        assert!((fit.tau_hat - oracle).abs() / oracle < 0.02, "{} vs {oracle}", fit.tau_hat);
    }

    #[test]
    fn loglinear_degenerate_cases() {
        let s = DurationSample::new(vec![1.0, 2.0], 0.0).unwrap();
        assert!(matches!(loglinear_fit(&s, &[0.5, 1.5]), Err(StatsError::DegenerateFit(_))));
        let flat = [(0.0, 2.0), (1.0, 2.0), (2.0, 2.5)];
        assert!(matches!(loglinear_fit_points(&flat, 0.0), Err(StatsError::NonDecayingSample(_))));
    }

    #[test]
    fn weighted_average_examples() {
        let s = DurationSample::new(vec![3.0, 1.0, 2.0], 0.0).unwrap();
        assert!((weighted_average_lifetime(&s).unwrap().tau_hat - 2.0).abs() < 1e-15);
        let s = DurationSample::new(vec![0.37], 0.0).unwrap();
        assert!((weighted_average_lifetime(&s).unwrap().tau_hat - 0.37).abs() < 1e-15);
        let empty = DurationSample::new(vec![], 0.0).unwrap();
        assert_eq!(weighted_average_lifetime(&empty), Err(StatsError::EmptySample));
    }

    #[test]
    fn weighted_average_on_truncated_draws() {
        // Oracle: arithmetic mean minus t_s.
        let s = truncated_draws(10_000, 4);
        let fit = weighted_average_lifetime(&s).unwrap();
        let oracle = s.durations().iter().sum::<f64>() / 1e4 - T_S;
        assert!((fit.tau_hat - oracle).abs() < 1e-9);
        assert!((fit.tau_hat - TAU).abs() < 3.0 * TAU / 100.0);
    }

    #[test]
    fn truncated_mean_examples() {
        let s = DurationSample::new(vec![T_S; 4], T_S).unwrap();
        assert!(matches!(truncated_mean_estimator(&s), Err(StatsError::NonPositiveEstimate(_))));
        let s = DurationSample::new(vec![T_S + TAU], T_S).unwrap();
        let fit = truncated_mean_estimator(&s).unwrap();
        assert!((fit.tau_hat - TAU).abs() < 1e-15);
        assert!((fit.tau_stderr - TAU).abs() < 1e-15);
    }

    #[test]
    fn truncated_mean_150_draws() {
        // Oracle: an independent running-sum mean.
        let s = truncated_draws(150, 5);
        let mut acc = 0.0;
        for (i, d) in s.durations().iter().enumerate() {
            acc += (d - T_S - acc) / (i + 1) as f64;
        }
        let fit = truncated_mean_estimator(&s).unwrap();
        assert!((fit.tau_hat - acc).abs() < 1e-12);
        assert!((fit.tau_hat - TAU).abs() < 3.0 * TAU / 150f64.sqrt());
    }

    #[test]
    fn ks_exponential_pass_and_fail() {
        let s = truncated_draws(10_000, 6);
        let good = ks_exponential_test(&s, TAU).unwrap();
        assert!(good.pass, "{good:?}");
        // scipy.stats.kstest(d - 0.07, "expon", args=(0, 0.14)) on these draws.
        assert!((good.statistic - 0.006_901_782_004_968_548).abs() < 1e-12, "{good:?}");
        // Asymptotic p-value: scipy.stats.kstwobign.sf(sqrt(n) * D).
        assert!((good.p_value - 0.727_517_688_432_204_5).abs() < 1e-12, "{good:?}");
        let bad = ks_exponential_test(&s, TAU / 10.0).unwrap();
        assert!(!bad.pass);
        assert!((bad.statistic - 0.693_254_510_944_421_6).abs() < 1e-12);
        assert!(bad.p_value < 1e-10);
        let small = DurationSample::new(vec![1.0; 19], 0.0).unwrap();
        assert!(matches!(ks_exponential_test(&small, 1.0), Err(StatsError::SampleTooSmall { .. })));
    }

    #[test]
    fn ks_statistic_on_quantile_points() {
        let n = 500;
        let pts: Vec<f64> = (0..n)
            .map(|i| T_S - TAU * (1.0 - (i as f64 + 0.5) / n as f64).ln())
            .collect();
        let s = DurationSample::new(pts, T_S).unwrap();
        let r = ks_exponential_test(&s, TAU).unwrap();
        assert!(r.statistic <= 1.0 / n as f64);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Tabulated: P(K > 1.36) = 0.0494, P(K > 1.62762) = 0.0100.
        assert!((kolmogorov_sf(1.358_099) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(KS_CRITICAL_001) - 0.01).abs() < 1e-5);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_two_sample_behaviour() {
        let a = truncated_draws(3000, 7);
        let b = truncated_draws(3000, 8);
        let same = ks_two_sample(a.durations(), b.durations()).unwrap();
        assert!(same.pass, "{same:?}");
        let shifted: Vec<f64> = b.durations().iter().map(|d| d * 1.3).collect();
        assert!(!ks_two_sample(a.durations(), &shifted).unwrap().pass);
        assert_eq!(ks_two_sample(a.durations(), a.durations()).unwrap().statistic, 0.0);
    }

    fn sample_strategy() -> impl Strategy<Value = DurationSample> {
        (0.0f64..1.0, prop::collection::vec(0.0f64..2.0, 1..200)).prop_map(|(t_s, excess)| {
            // Coarse rounding produces ties on purpose.
            DurationSample::new(excess.iter().map(|e| t_s + (e * 20.0).round() / 20.0).collect(), t_s).unwrap()
        })
    }

    proptest! {
        #[test]
        fn conservation_and_monotonicity(s in sample_strategy(), raw in prop::collection::vec(0.0f64..3.0, 1..60)) {
            let mut grid = raw;
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let c = survival_counts(&s, &grid).unwrap();
            prop_assert!(conservation_check(&c).all_ok());
            prop_assert!(c.n_dark_longer.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(c.n_decayed.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn survival_is_one_at_threshold(s in sample_strategy()) {
            let strictly_above: Vec<f64> = s.durations().iter().map(|d| d + 1e-9).collect();
            let s = DurationSample::new(strictly_above, s.t_s()).unwrap();
            prop_assert_eq!(survival_counts(&s, &[s.t_s()]).unwrap().ratios()[0], 1.0);
        }

        #[test]
        fn estimators_scale_equivariant(seed in any::<u64>(), c in 0.01f64..100.0, pow2 in -6i32..7) {
            let s = truncated_draws(200, seed);
            let sc = s.scaled(c).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
            prop_assert!(rel(truncated_mean_estimator(&sc).unwrap().tau_hat, c * truncated_mean_estimator(&s).unwrap().tau_hat));
            prop_assert!(rel(weighted_average_lifetime(&sc).unwrap().tau_hat, c * weighted_average_lifetime(&s).unwrap().tau_hat));
            // Power-of-two factors scale exactly, so grid/duration order is kept.
            let c2 = 2f64.powi(pow2);
            let s2 = s.scaled(c2).unwrap();
            let grid = default_grid(&s, DEFAULT_GRID_POINTS).unwrap();
            let sgrid: Vec<f64> = grid.iter().map(|t| t * c2).collect();
            let a = loglinear_fit(&s, &grid).unwrap();
            let b = loglinear_fit(&s2, &sgrid).unwrap();
            prop_assert!(rel(b.tau_hat, c2 * a.tau_hat));
        }
    }
}
