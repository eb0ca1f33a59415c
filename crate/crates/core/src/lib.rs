//! Single-ion electron shelving: quantum-jump simulation, fluorescence
//! rendering, dark-period detection and lifetime statistics.
//!
//! The modules build on each other in pipeline order:
//!
//! - [`gamow`]: exact forward-only evolution of a decaying state and Born
//!   probabilities; the reference the statistics are checked against.
//! - [`sim`]: seeded jump-process simulation of the three-level scheme, in
//!   full (every jump) and coarse (two-state telegraph) form.
//! - [`photon`]: binned photon counts from shelving intervals or trajectories.
//! - [`detect`]: threshold detection of dark periods in binned counts.
//! - [`stats`]: survival counts, lifetime estimators and KS tests.
//! - [`formats`]: versioned on-disk formats for all of the above.

pub mod detect;
pub mod formats;
pub mod gamow;
pub mod photon;
pub mod rng;
pub mod sim;
pub mod stats;

pub use detect::{detect, suggest_threshold, DarkPeriod, DetectError, DetectorConfig};
pub use gamow::{GamowError, GamowState};
pub use photon::{render_counts, render_counts_per_photon, BinnedCounts, DetectorParams, RenderMode};
pub use sim::{
    effective_shelving_rate, extract_shelving, simulate_full, simulate_telegraph, IonLevel,
    LevelScheme, ShelvingIntervals, Trajectory,
};
pub use stats::{DurationSample, FitMethod, FitResult, StatsError};
