//! Semigroup evolution of a decaying (Gamow) state and Born probabilities.
//!
//! Units: ħ = 1. Energies and widths are angular frequencies in rad/s and
//! times are seconds, so the lifetime-width relation reads `tau * gamma = 1`.
//!
//! The Gamow state is carried as a single complex amplitude. Its evolution
//! `a(t) = a(0) * exp(-i E_R t) * exp(-Γ t / 2)` is only defined for
//! `t >= 0`; asking for a negative time is a [`GamowError::NegativeTime`],
//! never a clamp.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Tolerance for the density-operator checks (hermiticity, trace, spectrum).
pub const DENSITY_TOL: f64 = 1e-12;
/// Tolerance for `P^2 = P` when validating a projector.
pub const PROJECTOR_TOL: f64 = 1e-10;
/// Tolerance for "normalized" state vectors.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GamowError {
    /// The semigroup only runs forward from its preparation time.
    #[error("negative time {0} s: the decaying state is only defined for t >= 0")]
    NegativeTime(f64),
    #[error("rate or width must be finite and > 0, got {0}")]
    InvalidRate(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("observable is not a projector (max |P^2 - P| = {0:e})")]
    NotAProjector(f64),
    #[error("state is not a density operator: {0}")]
    NotADensity(String),
    #[error("vector is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("integration range t_max = {t_max} s is shorter than 20 lifetimes ({needed} s)")]
    InsufficientRange { t_max: f64, needed: f64 },
    #[error("quadrature needs at least {min} steps, got {got}")]
    TooFewSteps { got: usize, min: usize },
}

pub type Result<T> = std::result::Result<T, GamowError>;

fn check_time(t: f64) -> Result<()> {
    // NaN is rejected here too: it is not a point of the half-line.
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(GamowError::NegativeTime(t))
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(GamowError::InvalidRate(rate))
    }
}

/// A resonance with complex energy `z_R = E_R - iΓ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamowState {
    amplitude: Complex64,
    energy_er: f64,
    width_gamma: f64,
}

impl GamowState {
    pub fn new(amplitude: Complex64, energy_er: f64, width_gamma: f64) -> Result<Self> {
        check_rate(width_gamma)?;
        if !energy_er.is_finite() {
            return Err(GamowError::InvalidRate(energy_er));
        }
        Ok(Self {
            amplitude,
            energy_er,
            width_gamma,
        })
    }

    /// Unit-amplitude state with the given lifetime and resonance energy.
    pub fn with_lifetime(tau: f64, energy_er: f64) -> Result<Self> {
        Self::new(Complex64::new(1.0, 0.0), energy_er, width_from_lifetime(tau)?)
    }

    pub fn amplitude(&self) -> Complex64 {
        self.amplitude
    }

    pub fn energy_er(&self) -> f64 {
        self.energy_er
    }

    pub fn width_gamma(&self) -> f64 {
        self.width_gamma
    }

    /// Complex eigenvalue `E_R - iΓ/2`.
    pub fn complex_energy(&self) -> Complex64 {
        Complex64::new(self.energy_er, -self.width_gamma / 2.0)
    }

    pub fn lifetime(&self) -> f64 {
        1.0 / self.width_gamma
    }

    /// Evolves forward by `t` seconds. See [`evolve`].
    pub fn evolve(&self, t: f64) -> Result<Self> {
        evolve(self, t)
    }
}

/// Applies the forward semigroup `exp(-i z_R t)` for `t >= 0`.
pub fn evolve(state: &GamowState, t: f64) -> Result<GamowState> {
    check_time(t)?;
    let phase = Complex64::from_polar(1.0, -state.energy_er * t);
    let decay = (-state.width_gamma * t / 2.0).exp();
    Ok(GamowState {
        amplitude: state.amplitude * phase * decay,
        ..*state
    })
}

/// Exponential survival law `exp(-gamma t)`.
pub fn survival_probability(gamma: f64, t: f64) -> Result<f64> {
    check_rate(gamma)?;
    check_time(t)?;
    Ok((-gamma * t).exp())
}

pub fn lifetime_from_width(gamma: f64) -> Result<f64> {
    check_rate(gamma)?;
    Ok(1.0 / gamma)
}

pub fn width_from_lifetime(tau: f64) -> Result<f64> {
    check_rate(tau)?;
    Ok(1.0 / tau)
}

/// Composite Simpson quadrature of the survival law over `[0, t_max]`.
///
/// The result approximates the mean lifetime `1/gamma`. `t_max` must cover
/// at least 20 lifetimes so the dropped tail stays below `exp(-20)`, and at
/// least 1000 steps are required (odd step counts are rounded up).
pub fn mean_lifetime_integral(gamma: f64, t_max: f64, n_steps: usize) -> Result<f64> {
    check_rate(gamma)?;
    let needed = 20.0 / gamma;
    if !(t_max >= needed) {
        return Err(GamowError::InsufficientRange { t_max, needed });
    }
    if n_steps < 1000 {
        return Err(GamowError::TooFewSteps {
            got: n_steps,
            min: 1000,
        });
    }
    let n = n_steps + n_steps % 2;
    let h = t_max / n as f64;
    let f = |k: usize| (-gamma * h * k as f64).exp();
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..n {
        if k % 2 == 1 {
            odd += f(k);
        } else {
            even += f(k);
        }
    }
    Ok(h / 3.0 * (f(0) + 4.0 * odd + 2.0 * even + f(n)))
}

/// A finite-dimensional state or observable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    components: Vec<Complex64>,
}

impl StateVector {
    pub fn new(components: Vec<Complex64>) -> Self {
        Self { components }
    }

    pub fn from_real(components: &[f64]) -> Self {
        Self::new(components.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn components(&self) -> &[Complex64] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(GamowError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// The rank-one operator `|self><self|`.
    pub fn outer(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.components[i] * self.components[j].conj())
    }
}

/// `|<psi|phi>|^2` for a normalized observable vector `psi`.
pub fn born_probability_pure(observable: &StateVector, state: &StateVector) -> Result<f64> {
    if observable.dim() != state.dim() {
        return Err(GamowError::DimensionMismatch {
            left: observable.dim(),
            right: state.dim(),
        });
    }
    if !observable.is_normalized() {
        return Err(GamowError::NotNormalized(observable.norm_sqr()));
    }
    Ok(observable.inner(state)?.norm_sqr())
}

/// A validated density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GamowError::NotADensity(format!(
                "matrix is {}x{}, not square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm_err = (&matrix - matrix.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if herm_err > DENSITY_TOL {
            return Err(GamowError::NotADensity(format!(
                "not Hermitian (max deviation {herm_err:e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(GamowError::NotADensity(format!("trace is {trace}")));
        }
        let min_eig = matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -DENSITY_TOL {
            return Err(GamowError::NotADensity(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Pure state `|phi><phi|`; `phi` must be normalized.
    pub fn pure(phi: &StateVector) -> Result<Self> {
        if !phi.is_normalized() {
            return Err(GamowError::NotNormalized(phi.norm_sqr()));
        }
        Self::new(phi.outer())
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(weights[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `Tr(Λ W)` for a projector `Λ`, clamped to `[0, 1]`.
pub fn born_probability_mixed(
    projector: &DMatrix<Complex64>,
    state: &DensityOperator,
) -> Result<f64> {
    if !projector.is_square() || projector.nrows() != state.dim() {
        return Err(GamowError::DimensionMismatch {
            left: projector.nrows(),
            right: state.dim(),
        });
    }
    let idem_err = (projector * projector - projector)
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);
    if idem_err > PROJECTOR_TOL {
        return Err(GamowError::NotAProjector(idem_err));
    }
    let p = (projector * state.matrix()).trace().re;
    Ok(p.clamp(0.0, 1.0))
}
