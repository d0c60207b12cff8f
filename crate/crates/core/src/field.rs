//! Spectral modes, Planck energies and the stochastic (zero-point) baseline.
//!
//! Field amplitudes are kept in normalized units: the square of an amplitude
//! is an energy in joules, so a zero-point baseline at frequency `nu` has an
//! ensemble mean square of `h nu / 2`. Every conversion constant used for that
//! lives in this module.
//!
//! Integrals over frequency use the trapezoid rule on the supplied grid.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{interpolate_linear, trapezoid};
use crate::{BOLTZMANN_K, PLANCK_H};

/// Above this value of `h nu / k T` the thermal mode energy is returned as 0.
pub const PLANCK_EXPONENT_CUTOFF: f64 = 700.0;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("mode density is identically zero and cannot be normalized")]
    NotNormalizable,
    #[error("modes are sampled on different frequency grids")]
    GridMismatch,
    #[error("temperature must be finite and non-negative, got {0}")]
    InvalidTemperature(f64),
    #[error("frequency must be finite and positive, got {0}")]
    InvalidFrequency(f64),
    #[error("phase array has {phases} entries for a grid of {grid}")]
    PhaseLength { phases: usize, grid: usize },
    #[error("mode csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Tabulated spectral energy density `w(nu)` of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMode {
    frequency: Vec<f64>,
    density: Vec<f64>,
    normalized: bool,
}

impl SpectralMode {
    /// Builds an unnormalized mode after checking the grid and density.
    pub fn new(frequency: Vec<f64>, density: Vec<f64>) -> Result<Self, FieldError> {
        if frequency.len() != density.len() {
            return Err(FieldError::InvalidGrid(format!(
                "{} frequencies but {} density values",
                frequency.len(),
                density.len()
            )));
        }
        if frequency.len() < 2 {
            return Err(FieldError::InvalidGrid("need at least two grid points".into()));
        }
        if let Some(bad) = frequency.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(FieldError::InvalidGrid(format!(
                "frequencies must be positive and finite, got {bad}"
            )));
        }
        if frequency.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FieldError::InvalidGrid("frequencies must be strictly increasing".into()));
        }
        if let Some(bad) = density.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(FieldError::InvalidGrid(format!(
                "density must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self {
            frequency,
            density,
            normalized: false,
        })
    }

    pub fn frequency(&self) -> &[f64] {
        &self.frequency
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `∫ w(nu) dnu / nu` over the grid.
    pub fn action_integral(&self) -> f64 {
        let weighted: Vec<f64> = self
            .density
            .iter()
            .zip(&self.frequency)
            .map(|(w, nu)| w / nu)
            .collect();
        trapezoid(&self.frequency, &weighted)
    }

    /// Reads the two-column CSV form (`frequency_hz,density_j_per_hz`).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, FieldError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut frequency = Vec::new();
        let mut density = Vec::new();
        for row in rdr.deserialize() {
            let row: ModeRow = row?;
            frequency.push(row.frequency_hz);
            density.push(row.density_j_per_hz);
        }
        Self::new(frequency, density)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FieldError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (&frequency_hz, &density_j_per_hz) in self.frequency.iter().zip(&self.density) {
            wtr.serialize(ModeRow {
                frequency_hz,
                density_j_per_hz,
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModeRow {
    frequency_hz: f64,
    density_j_per_hz: f64,
}

/// Rescales a mode so that `∫ w(nu) dnu / nu = h`.
///
/// Returns the normalized mode together with the factor applied to the
/// density.
pub fn normalize_mode(mode: &SpectralMode) -> Result<(SpectralMode, f64), FieldError> {
    let integral = mode.action_integral();
    if !(integral > 0.0) {
        return Err(FieldError::NotNormalizable);
    }
    let scale = PLANCK_H / integral;
    let density = mode.density.iter().map(|w| w * scale).collect();
    Ok((
        SpectralMode {
            frequency: mode.frequency.clone(),
            density,
            normalized: true,
        },
        scale,
    ))
}

/// Total energy `∫ w(nu) dnu` of a mode.
pub fn mode_energy(mode: &SpectralMode) -> f64 {
    trapezoid(&mode.frequency, &mode.density)
}

/// A mode together with the phase of each spectral component.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedMode {
    mode: SpectralMode,
    phase: Vec<f64>,
}

impl PhasedMode {
    pub fn new(mode: SpectralMode, phase: Vec<f64>) -> Result<Self, FieldError> {
        if phase.len() != mode.frequency.len() {
            return Err(FieldError::PhaseLength {
                phases: phase.len(),
                grid: mode.frequency.len(),
            });
        }
        Ok(Self { mode, phase })
    }

    /// Every component at phase zero.
    pub fn in_phase(mode: SpectralMode) -> Self {
        let phase = vec![0.0; mode.frequency.len()];
        Self { mode, phase }
    }

    pub fn mode(&self) -> &SpectralMode {
        &self.mode
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn energy(&self) -> f64 {
        mode_energy(&self.mode)
    }

    /// Complex spectral amplitude `sqrt(w) e^{i phase}` at grid node `i`.
    fn amplitude(&self, i: usize) -> (f64, f64) {
        let magnitude = self.mode.density[i].sqrt();
        (magnitude * self.phase[i].cos(), magnitude * self.phase[i].sin())
    }

    /// Complex amplitudes on `grid`: real and imaginary parts are linearly
    /// interpolated, zero outside this mode's own grid.
    fn resampled(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        let own: Vec<(f64, f64)> = (0..self.phase.len()).map(|i| self.amplitude(i)).collect();
        if grid == self.mode.frequency.as_slice() {
            return own;
        }
        let (re, im): (Vec<f64>, Vec<f64>) = own.into_iter().unzip();
        let source = &self.mode.frequency;
        grid.iter()
            .map(|&nu| {
                match (
                    interpolate_linear(source, &re, nu),
                    interpolate_linear(source, &im, nu),
                ) {
                    (Some(r), Some(i)) => (r, i),
                    _ => (0.0, 0.0),
                }
            })
            .collect()
    }
}

/// How two modes on different grids are brought onto a common one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GridPolicy {
    /// Grids must be identical.
    Strict,
    /// Complex amplitudes are linearly interpolated onto the sorted union of
    /// both grids; a mode contributes zero outside its own grid.
    #[default]
    Union,
}

fn common_grid(a: &[f64], b: &[f64], policy: GridPolicy) -> Result<Vec<f64>, FieldError> {
    if a == b {
        return Ok(a.to_vec());
    }
    match policy {
        GridPolicy::Strict => Err(FieldError::GridMismatch),
        GridPolicy::Union => {
            let mut grid: Vec<f64> = a.iter().chain(b).copied().collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            Ok(grid)
        }
    }
}

fn from_amplitudes(grid: Vec<f64>, amplitudes: &[(f64, f64)]) -> Result<PhasedMode, FieldError> {
    let density = amplitudes.iter().map(|(re, im)| re * re + im * im).collect();
    let phase = amplitudes
        .iter()
        .map(|(re, im)| im.atan2(*re).rem_euclid(TAU))
        .collect();
    PhasedMode::new(SpectralMode::new(grid, density)?, phase)
}

/// Coherent sum of two modes: the complex spectral amplitudes add.
pub fn superpose(a: &PhasedMode, b: &PhasedMode, policy: GridPolicy) -> Result<PhasedMode, FieldError> {
    let grid = common_grid(&a.mode.frequency, &b.mode.frequency, policy)?;
    let (ra, rb) = (a.resampled(&grid), b.resampled(&grid));
    let sum: Vec<(f64, f64)> = ra
        .iter()
        .zip(&rb)
        .map(|(x, y)| (x.0 + y.0, x.1 + y.1))
        .collect();
    from_amplitudes(grid, &sum)
}

/// Two modes are orthogonal when the energy of their superposition is the
/// sum of their energies, up to `tol` relative to that sum.
///
/// All three energies are evaluated on the common grid.
pub fn is_orthogonal(
    a: &PhasedMode,
    b: &PhasedMode,
    tol: f64,
    policy: GridPolicy,
) -> Result<bool, FieldError> {
    let grid = common_grid(&a.mode.frequency, &b.mode.frequency, policy)?;
    let (ra, rb) = (a.resampled(&grid), b.resampled(&grid));
    let energy = |amps: &[(f64, f64)]| {
        let density: Vec<f64> = amps.iter().map(|(re, im)| re * re + im * im).collect();
        trapezoid(&grid, &density)
    };
    let sum: Vec<(f64, f64)> = ra
        .iter()
        .zip(&rb)
        .map(|(x, y)| (x.0 + y.0, x.1 + y.1))
        .collect();
    let (ea, eb, es) = (energy(&ra), energy(&rb), energy(&sum));
    Ok((es - ea - eb).abs() <= tol * (ea + eb))
}

/// Temperature of the thermal radiation a mode is in equilibrium with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    temperature: f64,
}

impl ThermalState {
    pub fn new(temperature: f64) -> Result<Self, FieldError> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(FieldError::InvalidTemperature(temperature));
        }
        Ok(Self { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// `k T` in joules.
    pub fn thermal_energy(&self) -> f64 {
        BOLTZMANN_K * self.temperature
    }
}

fn check_frequency(nu: f64) -> Result<(), FieldError> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(FieldError::InvalidFrequency(nu))
    }
}

/// Mean thermal energy of a mode without the zero-point term,
/// `h nu / (exp(h nu / k T) - 1)`.
///
/// Returns exactly 0 at `T = 0` and whenever `h nu / k T` exceeds
/// [`PLANCK_EXPONENT_CUTOFF`].
pub fn planck_mean_energy(nu: f64, state: &ThermalState) -> Result<f64, FieldError> {
    check_frequency(nu)?;
    let kt = state.thermal_energy();
    if kt == 0.0 {
        return Ok(0.0);
    }
    let quantum = PLANCK_H * nu;
    let x = quantum / kt;
    if x > PLANCK_EXPONENT_CUTOFF {
        return Ok(0.0);
    }
    Ok(quantum / x.exp_m1())
}

/// Mean energy including the zero-point term `h nu / 2`.
pub fn planck_mean_energy_with_zero_point(nu: f64, state: &ThermalState) -> Result<f64, FieldError> {
    Ok(planck_mean_energy(nu, state)? + zero_point_energy(nu)?)
}

/// `h nu / 2`.
pub fn zero_point_energy(nu: f64) -> Result<f64, FieldError> {
    check_frequency(nu)?;
    Ok(0.5 * PLANCK_H * nu)
}

/// Field sample decomposed as a stochastic baseline times an amplification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldAmplitude {
    pub baseline_e0: f64,
    pub amplification_beta: f64,
    pub phase: f64,
}

impl FieldAmplitude {
    /// Total amplitude `beta * E0`.
    pub fn magnitude(&self) -> f64 {
        self.amplification_beta * self.baseline_e0
    }

    /// Energy of the sample in normalized units (the squared magnitude).
    pub fn energy(&self) -> f64 {
        self.magnitude().powi(2)
    }

    pub fn amplified(self, beta: f64) -> Self {
        Self {
            amplification_beta: beta,
            ..self
        }
    }
}

/// Draws one zero-point field sample at frequency `nu`.
///
/// The complex amplitude is circular Gaussian: two independent normal
/// quadratures of variance `h nu / 4` each, so the mean squared magnitude is
/// `h nu / 2` and the phase is uniform on `[0, 2 pi)`.
pub fn sample_stochastic_amplitude<R: Rng + ?Sized>(
    rng: &mut R,
    nu: f64,
) -> Result<FieldAmplitude, FieldError> {
    let sigma = (zero_point_energy(nu)? / 2.0).sqrt();
    loop {
        let re: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let im: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let magnitude = re.hypot(im);
        if magnitude > 0.0 {
            return Ok(FieldAmplitude {
                baseline_e0: magnitude,
                amplification_beta: 1.0,
                phase: im.atan2(re).rem_euclid(TAU),
            });
        }
    }
}
