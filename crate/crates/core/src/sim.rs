//! Continuous-time jump simulation of the three-level shelving scheme.
//!
//! Levels: the ground state `S0`, the short-lived cycling level `P1` and the
//! metastable shelf `P0`. The laser pumps `S0 -> P1`; `P1` decays back to
//! `S0` (fluorescence, `A1`) or, rarely, to the shelf (`A2`); the shelf
//! decays slowly to `S0` (`A0`). An optional direct `S0 -> P0` channel models
//! laser-induced shelving.
//!
//! [`simulate_full`] draws every jump. [`simulate_telegraph`] is the coarse
//! two-state reduction that only alternates bright and dark dwell times.

use crate::rng::{self, SimRng};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid level scheme: {0}")]
    InvalidScheme(String),
    #[error("rate must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("duration must be finite and > 0, got {0}")]
    InvalidDuration(f64),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IonLevel {
    S0,
    P1,
    /// Metastable shelf.
    P0,
}

impl fmt::Display for IonLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IonLevel::S0 => "S0",
            IonLevel::P1 => "P1",
            IonLevel::P0 => "P0",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    A1,
    A2,
    A0,
    #[serde(rename = "pump")]
    Pump,
    #[serde(rename = "direct_shelve")]
    DirectShelve,
}

impl Channel {
    /// Source and destination level of the channel.
    pub fn endpoints(self) -> (IonLevel, IonLevel) {
        match self {
            Channel::Pump => (IonLevel::S0, IonLevel::P1),
            Channel::A1 => (IonLevel::P1, IonLevel::S0),
            Channel::A2 => (IonLevel::P1, IonLevel::P0),
            Channel::A0 => (IonLevel::P0, IonLevel::S0),
            Channel::DirectShelve => (IonLevel::S0, IonLevel::P0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::A1 => "A1",
            Channel::A2 => "A2",
            Channel::A0 => "A0",
            Channel::Pump => "pump",
            Channel::DirectShelve => "direct_shelve",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub from: IonLevel,
    pub to: IonLevel,
    pub channel: Channel,
}

impl JumpRecord {
    pub fn new(t: f64, channel: Channel) -> Self {
        let (from, to) = channel.endpoints();
        Self { t, from, to, channel }
    }

    /// True when `(from, to, channel)` is one of the five legal transitions.
    pub fn is_legal(&self) -> bool {
        self.channel.endpoints() == (self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    /// Radiative lifetime of `P1`, seconds.
    pub tau_p1: f64,
    /// Effective lifetime of the shelf `P0`, seconds.
    pub tau_p0: f64,
    /// Probability that a `P1` decay goes to the shelf.
    pub branch_p1_to_p0: f64,
    /// Laser pumping rate `S0 -> P1`, 1/s.
    pub excitation_rate: f64,
    /// Laser-induced `S0 -> P0` rate, 1/s.
    pub direct_shelving_rate: f64,
}

impl Default for LevelScheme {
    /// In+ numbers: `tau(3P1) = 4e-7 s`, `tau(3P0) = 0.14 s`, branching
    /// `1e-8`. The pump rate is a synthetic choice at half saturation
    /// (`excitation_rate * tau_p1 = 0.5`).
    fn default() -> Self {
        Self {
            tau_p1: 4e-7,
            tau_p0: 0.14,
            branch_p1_to_p0: 1e-8,
            excitation_rate: 1.25e6,
            direct_shelving_rate: 0.0,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(SimError::InvalidScheme(format!("{name} must be finite and > 0, got {x}")))
    }
}

impl LevelScheme {
    pub fn validate(&self) -> Result<()> {
        positive("tau_p1", self.tau_p1)?;
        positive("tau_p0", self.tau_p0)?;
        positive("excitation_rate", self.excitation_rate)?;
        if !(0.0..=1.0).contains(&self.branch_p1_to_p0) {
            return Err(SimError::InvalidScheme(format!(
                "branch_p1_to_p0 must be in [0, 1], got {}",
                self.branch_p1_to_p0
            )));
        }
        if !(self.direct_shelving_rate >= 0.0 && self.direct_shelving_rate.is_finite()) {
            return Err(SimError::InvalidScheme(format!(
                "direct_shelving_rate must be finite and >= 0, got {}",
                self.direct_shelving_rate
            )));
        }
        Ok(())
    }

    /// Total outgoing rate of a level.
    pub fn exit_rate(&self, level: IonLevel) -> f64 {
        match level {
            IonLevel::S0 => self.excitation_rate + self.direct_shelving_rate,
            IonLevel::P1 => 1.0 / self.tau_p1,
            IonLevel::P0 => 1.0 / self.tau_p0,
        }
    }
}

/// Rate of entering the shelf from the bright (cycling) manifold.
///
/// The `S0 <-> P1` pair is replaced by its two-level steady state,
/// `p_P1 = R tau_p1 / (1 + R tau_p1)`, and the shelving rate is
/// `p_P1 * branch / tau_p1 + (1 - p_P1) * direct_shelving_rate`.
pub fn effective_shelving_rate(scheme: &LevelScheme) -> Result<f64> {
    scheme.validate()?;
    let saturation = scheme.excitation_rate * scheme.tau_p1;
    let p_p1 = saturation / (1.0 + saturation);
    let p_s0 = 1.0 - p_p1;
    Ok(p_p1 * scheme.branch_p1_to_p0 / scheme.tau_p1 + p_s0 * scheme.direct_shelving_rate)
}

/// A realized jump process. Only built by the simulator or [`Trajectory::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: LevelScheme,
    pub duration: f64,
    pub seed: u64,
    pub initial_level: IonLevel,
    pub jumps: Vec<JumpRecord>,
}

impl Trajectory {
    /// Assembles a trajectory and checks ordering, chaining and legality.
    pub fn from_parts(
        scheme: LevelScheme,
        duration: f64,
        seed: u64,
        initial_level: IonLevel,
        jumps: Vec<JumpRecord>,
    ) -> Result<Self> {
        let traj = Self {
            scheme,
            duration,
            seed,
            initial_level,
            jumps,
        };
        traj.check().map_err(SimError::InvalidScheme)?;
        Ok(traj)
    }

    /// Checks the trajectory invariants, returning a description of the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        let mut level = self.initial_level;
        let mut last_t = 0.0;
        for (k, j) in self.jumps.iter().enumerate() {
            if !j.is_legal() {
                return Err(format!("jump {k}: illegal transition {}->{} via {}", j.from, j.to, j.channel.as_str()));
            }
            if j.from != level {
                return Err(format!("jump {k}: starts in {} but ion is in {level}", j.from));
            }
            if !(j.t >= 0.0 && j.t <= self.duration) || (k > 0 && j.t <= last_t) {
                return Err(format!("jump {k}: time {} out of order or outside [0, {}]", j.t, self.duration));
            }
            last_t = j.t;
            level = j.to;
        }
        Ok(())
    }

    pub fn final_level(&self) -> IonLevel {
        self.jumps.last().map_or(self.initial_level, |j| j.to)
    }

    pub fn count(&self, channel: Channel) -> usize {
        self.jumps.iter().filter(|j| j.channel == channel).count()
    }
}

/// Simulates every jump of the three-level scheme, starting in `S0` at `t = 0`.
pub fn simulate_full(scheme: &LevelScheme, duration: f64, seed: u64) -> Result<Trajectory> {
    let mut jumps = Vec::new();
    simulate_full_with(scheme, duration, seed, |j| jumps.push(j))?;
    Ok(Trajectory {
        scheme: *scheme,
        duration,
        seed,
        initial_level: IonLevel::S0,
        jumps,
    })
}

/// Streaming form of [`simulate_full`]: jumps are handed to `sink` in time
/// order instead of being stored. Produces the same jumps for the same seed.
pub fn simulate_full_with<F: FnMut(JumpRecord)>(
    scheme: &LevelScheme,
    duration: f64,
    seed: u64,
    mut sink: F,
) -> Result<()> {
    scheme.validate()?;
    check_duration(duration)?;
    let mut rng = rng::seeded(seed);
    let rate_s0 = scheme.exit_rate(IonLevel::S0);
    let rate_p1 = scheme.exit_rate(IonLevel::P1);
    let rate_p0 = scheme.exit_rate(IonLevel::P0);
    let shelve_frac_s0 = scheme.direct_shelving_rate / rate_s0;

    let mut level = IonLevel::S0;
    let mut t = 0.0;
    loop {
        let rate = match level {
            IonLevel::S0 => rate_s0,
            IonLevel::P1 => rate_p1,
            IonLevel::P0 => rate_p0,
        };
        let wait: f64 = rng.sample::<f64, _>(Exp1) / rate;
        let next_t = t + wait;
        if next_t > duration {
            return Ok(());
        }
        // Strictly increasing times even if the wait underflows against t.
        if next_t <= t {
            continue;
        }
        t = next_t;
        let channel = match level {
            IonLevel::S0 => {
                if shelve_frac_s0 > 0.0 && rng.gen::<f64>() < shelve_frac_s0 {
                    Channel::DirectShelve
                } else {
                    Channel::Pump
                }
            }
            IonLevel::P1 => {
                if scheme.branch_p1_to_p0 > 0.0 && rng.gen::<f64>() < scheme.branch_p1_to_p0 {
                    Channel::A2
                } else {
                    Channel::A1
                }
            }
            IonLevel::P0 => Channel::A0,
        };
        let rec = JumpRecord::new(t, channel);
        level = rec.to;
        sink(rec);
    }
}

fn check_duration(duration: f64) -> Result<()> {
    if duration > 0.0 && duration.is_finite() {
        Ok(())
    } else {
        Err(SimError::InvalidDuration(duration))
    }
}

/// One stay on the shelf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShelvingInterval {
    pub t0: f64,
    pub t_end: f64,
    /// The interval was cut off by the end of the record.
    pub censored: bool,
}

impl ShelvingInterval {
    pub fn dt(&self) -> f64 {
        self.t_end - self.t0
    }
}

/// Shelf intervals of one record of length `duration`, sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShelvingIntervals {
    pub duration: f64,
    pub intervals: Vec<ShelvingInterval>,
}

impl ShelvingIntervals {
    /// Durations of complete dark intervals; censored ones only if asked.
    pub fn durations(&self, include_censored: bool) -> Vec<f64> {
        self.intervals
            .iter()
            .filter(|iv| include_censored || !iv.censored)
            .map(ShelvingInterval::dt)
            .collect()
    }

    /// Complete bright dwells: from `t = 0` or a shelf exit up to the next
    /// shelf entry. The trailing bright stretch is censored and left out.
    pub fn bright_dwells(&self) -> Vec<f64> {
        let mut start = 0.0;
        let mut out = Vec::with_capacity(self.intervals.len());
        for iv in &self.intervals {
            out.push(iv.t0 - start);
            start = iv.t_end;
        }
        out
    }

    /// Total time not spent on the shelf.
    pub fn bright_time(&self) -> f64 {
        self.duration - self.intervals.iter().map(ShelvingInterval::dt).sum::<f64>()
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        let mut prev_end = 0.0;
        for (k, iv) in self.intervals.iter().enumerate() {
            if !(iv.t0 >= prev_end && iv.t_end > iv.t0 && iv.t_end <= self.duration) {
                return Err(format!("interval {k} ({}, {}) overlaps, is empty or exceeds the record", iv.t0, iv.t_end));
            }
            if iv.censored && k + 1 != self.intervals.len() {
                return Err(format!("interval {k} is censored but not last"));
            }
            prev_end = iv.t_end;
        }
        Ok(())
    }
}

/// Incremental shelf-interval extraction from a jump stream.
#[derive(Debug, Clone)]
pub struct ShelvingTracker {
    duration: f64,
    open: Option<f64>,
    intervals: Vec<ShelvingInterval>,
}

impl ShelvingTracker {
    pub fn new(duration: f64, initial_level: IonLevel) -> Self {
        Self {
            duration,
            open: (initial_level == IonLevel::P0).then_some(0.0),
            intervals: Vec::new(),
        }
    }

    pub fn push(&mut self, jump: &JumpRecord) {
        if jump.to == IonLevel::P0 {
            self.open = Some(jump.t);
        } else if jump.from == IonLevel::P0 {
            if let Some(t0) = self.open.take() {
                self.intervals.push(ShelvingInterval {
                    t0,
                    t_end: jump.t,
                    censored: false,
                });
            }
        }
    }

    pub fn finish(mut self) -> ShelvingIntervals {
        if let Some(t0) = self.open.take() {
            if t0 < self.duration {
                self.intervals.push(ShelvingInterval {
                    t0,
                    t_end: self.duration,
                    censored: true,
                });
            }
        }
        ShelvingIntervals {
            duration: self.duration,
            intervals: self.intervals,
        }
    }
}

/// Maximal `P0` intervals of a trajectory; a trailing stay is marked censored.
pub fn extract_shelving(trajectory: &Trajectory) -> ShelvingIntervals {
    let mut tracker = ShelvingTracker::new(trajectory.duration, trajectory.initial_level);
    for j in &trajectory.jumps {
        tracker.push(j);
    }
    tracker.finish()
}

/// Two-state bright/dark telegraph process starting bright at `t = 0`.
///
/// Bright and dark dwells alternate and are drawn in that order from one
/// stream, so swapping the two rates swaps the dwell distributions but not
/// the individual draws.
pub fn simulate_telegraph(
    bright_to_dark_rate: f64,
    dark_to_bright_rate: f64,
    duration: f64,
    seed: u64,
) -> Result<ShelvingIntervals> {
    for r in [bright_to_dark_rate, dark_to_bright_rate] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(SimError::InvalidRate(r));
        }
    }
    check_duration(duration)?;
    let mut rng: SimRng = rng::seeded(seed);
    let mut intervals = Vec::new();
    let mut t = 0.0;
    loop {
        let bright: f64 = rng.sample::<f64, _>(Exp1) / bright_to_dark_rate;
        let t0 = t + bright;
        if t0 >= duration {
            break;
        }
        let dark: f64 = rng.sample::<f64, _>(Exp1) / dark_to_bright_rate;
        let t_end = t0 + dark;
        if t_end >= duration {
            intervals.push(ShelvingInterval {
                t0,
                t_end: duration,
                censored: true,
            });
            break;
        }
        intervals.push(ShelvingInterval {
            t0,
            t_end,
            censored: false,
        });
        t = t_end;
    }
    Ok(ShelvingIntervals {
        duration,
        intervals,
    })
}
