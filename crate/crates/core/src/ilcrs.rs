//! Coherent Raman frequency shift of incoherent light.
//!
//! Light made of pulses shorter than the collision time of a gas, crossing
//! molecules with a Raman transition whose beat period is also longer than
//! the pulse, is redshifted by parametric exchange with the gas. The relative
//! shift per unit column density is a constant `κ`:
//!
//! `d(ln ν) = -κ n(l) dl`, hence `1 + z = exp(κ ∫ n dl)`.
//!
//! `κ` has no microscopic formula here; it is calibrated from a density and
//! a reference shift rate supplied by the caller.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEED_OF_LIGHT;

/// Wavelength whose frequency anchors the dispersion law by default.
pub const DEFAULT_REFERENCE_WAVELENGTH_M: f64 = 550e-9;

#[derive(Debug, Error)]
pub enum IlcrsError {
    #[error("{field} must be positive and finite, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("sightline: {0}")]
    InvalidSightline(String),
    #[error("calibration needs a positive {field}, got {value}")]
    InvalidCalibration { field: &'static str, value: f64 },
    #[error("kappa must be nonnegative and finite, got {0}")]
    InvalidKappa(f64),
    #[error("redshift must exceed -1 at every line, got effective z = {0}")]
    InvalidRedshift(f64),
    #[error("spectral line {index}: wavelength must be positive and finite")]
    InvalidLine { index: usize },
    #[error("intensity must be nonnegative and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn positive(field: &'static str, value: f64) -> Result<f64, IlcrsError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(IlcrsError::NonPositive { field, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseModel {
    /// Seconds; natural incoherent light is around 1e-8 s.
    pub pulse_length: f64,
    /// Mean time between molecular collisions, seconds.
    pub collision_time: f64,
    /// Hz.
    pub raman_transition_frequency: f64,
    /// W/m², drives the stimulated shift.
    pub intensity: f64,
}

impl PulseModel {
    pub fn new(
        pulse_length: f64,
        collision_time: f64,
        raman_transition_frequency: f64,
        intensity: f64,
    ) -> Result<Self, IlcrsError> {
        Ok(Self {
            pulse_length: positive("pulse_length", pulse_length)?,
            collision_time: positive("collision_time", collision_time)?,
            raman_transition_frequency: positive("raman_transition_frequency", raman_transition_frequency)?,
            intensity: positive("intensity", intensity)?,
        })
    }

    pub fn beat_period(&self) -> f64 {
        1.0 / self.raman_transition_frequency
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UltrashortReport {
    pub collision_ok: bool,
    pub beat_ok: bool,
    pub overall: bool,
}

/// Both time constants must exceed `margin` pulse lengths (strictly).
pub fn ultrashort_check(pulse: &PulseModel, margin: f64) -> UltrashortReport {
    let limit = margin * pulse.pulse_length;
    let collision_ok = pulse.collision_time > limit;
    let beat_ok = pulse.beat_period() > limit;
    UltrashortReport {
        collision_ok,
        beat_ok,
        overall: collision_ok && beat_ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Each sample's density holds until the next position.
    PiecewiseConstant,
    #[default]
    PiecewiseLinear,
}

/// Number density sampled along a line of sight.
#[derive(Debug, Clone, PartialEq)]
pub struct Sightline {
    positions: Vec<f64>,
    densities: Vec<f64>,
    interpolation: Interpolation,
}

#[derive(Serialize, Deserialize)]
struct SightlineRow {
    position_m: f64,
    density_per_m3: f64,
}

impl Sightline {
    pub fn new(positions: Vec<f64>, densities: Vec<f64>, interpolation: Interpolation) -> Result<Self, IlcrsError> {
        if positions.len() != densities.len() {
            return Err(IlcrsError::InvalidSightline(format!(
                "{} positions but {} densities",
                positions.len(),
                densities.len()
            )));
        }
        if positions.len() < 2 {
            return Err(IlcrsError::InvalidSightline("need at least two samples".into()));
        }
        if positions.iter().any(|p| !p.is_finite()) || positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IlcrsError::InvalidSightline(
                "positions must be finite and strictly increasing".into(),
            ));
        }
        if let Some(i) = densities.iter().position(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(IlcrsError::InvalidSightline(format!(
                "density at sample {i} must be nonnegative, got {}",
                densities[i]
            )));
        }
        Ok(Self {
            positions,
            densities,
            interpolation,
        })
    }

    /// Constant density over `[0, length]`.
    pub fn uniform(density: f64, length: f64) -> Result<Self, IlcrsError> {
        Self::new(vec![0.0, length], vec![density, density], Interpolation::PiecewiseLinear)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn length(&self) -> f64 {
        self.positions[self.positions.len() - 1] - self.positions[0]
    }

    /// Samples `start..=end`, sharing the end samples with neighbours.
    pub fn segment(&self, start: usize, end: usize) -> Result<Self, IlcrsError> {
        if end >= self.positions.len() || start >= end {
            return Err(IlcrsError::InvalidSightline(format!("segment {start}..={end} is out of range")));
        }
        Self::new(
            self.positions[start..=end].to_vec(),
            self.densities[start..=end].to_vec(),
            self.interpolation,
        )
    }

    /// `∫ n dl`, exact for the declared interpolation.
    pub fn column_density(&self) -> f64 {
        self.positions
            .windows(2)
            .zip(self.densities.windows(2))
            .map(|(x, n)| {
                let dx = x[1] - x[0];
                match self.interpolation {
                    Interpolation::PiecewiseConstant => n[0] * dx,
                    Interpolation::PiecewiseLinear => 0.5 * (n[0] + n[1]) * dx,
                }
            })
            .sum()
    }

    pub fn read_csv<R: Read>(reader: R, interpolation: Interpolation) -> Result<Self, IlcrsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let (mut positions, mut densities) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: SightlineRow = row?;
            positions.push(row.position_m);
            densities.push(row.density_per_m3);
        }
        Self::new(positions, densities, interpolation)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IlcrsError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (&position_m, &density_per_m3) in self.positions.iter().zip(&self.densities) {
            wtr.serialize(SightlineRow {
                position_m,
                density_per_m3,
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftCoefficient {
    /// Relative frequency shift per unit column density, m² per molecule.
    pub kappa: f64,
    /// Slope of the effective redshift per decade of frequency; 0 gives a
    /// constant relative shift.
    pub dispersion: f64,
    /// Frequency at which the dispersion correction vanishes, Hz.
    pub reference_frequency: f64,
}

impl ShiftCoefficient {
    pub fn new(kappa: f64) -> Result<Self, IlcrsError> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(IlcrsError::InvalidKappa(kappa));
        }
        Ok(Self {
            kappa,
            dispersion: 0.0,
            reference_frequency: SPEED_OF_LIGHT / DEFAULT_REFERENCE_WAVELENGTH_M,
        })
    }

    pub fn with_dispersion(self, dispersion: f64) -> Self {
        Self { dispersion, ..self }
    }

    pub fn with_reference_frequency(self, reference_frequency: f64) -> Result<Self, IlcrsError> {
        Ok(Self {
            reference_frequency: positive("reference_frequency", reference_frequency)?,
            ..self
        })
    }

    /// `z · (1 + D log10(ν / ν_ref))`.
    pub fn effective_redshift(&self, z: f64, frequency: f64) -> f64 {
        if self.dispersion == 0.0 {
            z
        } else {
            z * (1.0 + self.dispersion * (frequency / self.reference_frequency).log10())
        }
    }
}

/// `κ = rate / density`: the coefficient for which a uniform
/// `reference_density` shifts by `reference_rate` per metre (small-shift limit
/// of `d(ln ν)/dl`).
pub fn calibrate_kappa(reference_density: f64, reference_rate: f64) -> Result<ShiftCoefficient, IlcrsError> {
    for (field, value) in [("reference_density", reference_density), ("reference_rate", reference_rate)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(IlcrsError::InvalidCalibration { field, value });
        }
    }
    ShiftCoefficient::new(reference_rate / reference_density)
}

/// `z = exp(κ ∫ n dl) - 1`.
pub fn redshift_along(sightline: &Sightline, coeff: &ShiftCoefficient) -> f64 {
    (coeff.kappa * sightline.column_density()).exp_m1()
}

/// Logarithmic shift rate `ln(1 + z) / L` of a sightline.
pub fn implied_rate(sightline: &Sightline, coeff: &ShiftCoefficient) -> f64 {
    redshift_along(sightline, coeff).ln_1p() / sightline.length()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub wavelength_nm: f64,
    pub amplitude: f64,
}

impl SpectralLine {
    pub fn frequency(&self) -> f64 {
        SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }
}

pub fn read_spectrum_csv<R: Read>(reader: R) -> Result<Vec<SpectralLine>, IlcrsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let lines = rdr.deserialize().collect::<Result<Vec<SpectralLine>, _>>()?;
    validate_spectrum(&lines)?;
    Ok(lines)
}

pub fn write_spectrum_csv<W: Write>(lines: &[SpectralLine], writer: W) -> Result<(), IlcrsError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for line in lines {
        wtr.serialize(line)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn validate_spectrum(lines: &[SpectralLine]) -> Result<(), IlcrsError> {
    match lines
        .iter()
        .position(|l| !(l.wavelength_nm.is_finite() && l.wavelength_nm > 0.0))
    {
        Some(index) => Err(IlcrsError::InvalidLine { index }),
        None => Ok(()),
    }
}

/// Divides each line frequency by `1 + z_eff` (wavelength multiplied).
/// Amplitudes and line order are untouched: the shift does not blur.
pub fn apply_redshift(
    lines: &[SpectralLine],
    z: f64,
    coeff: &ShiftCoefficient,
) -> Result<Vec<SpectralLine>, IlcrsError> {
    if !(z > -1.0 && z.is_finite()) {
        return Err(IlcrsError::InvalidRedshift(z));
    }
    validate_spectrum(lines)?;
    lines
        .iter()
        .map(|line| {
            let z_eff = coeff.effective_redshift(z, line.frequency());
            if !(z_eff > -1.0) {
                return Err(IlcrsError::InvalidRedshift(z_eff));
            }
            Ok(SpectralLine {
                wavelength_nm: line.wavelength_nm * (1.0 + z_eff),
                amplitude: line.amplitude,
            })
        })
        .collect()
}

/// Relative frequency shift `1 - ν'/ν` of a line.
pub fn relative_shift(before: &SpectralLine, after: &SpectralLine) -> f64 {
    1.0 - before.wavelength_nm / after.wavelength_nm
}

/// Relative intensity gain `κ_I · I` of the stimulated regime.
pub fn stimulated_shift(intensity: f64, proportionality: f64) -> Result<f64, IlcrsError> {
    if !(intensity.is_finite() && intensity >= 0.0) {
        return Err(IlcrsError::InvalidIntensity(intensity));
    }
    Ok(proportionality * intensity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineDeviation {
    pub wavelength_nm: f64,
    pub raman_shift: f64,
    pub doppler_shift: f64,
    /// `raman_shift - doppler_shift`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DopplerComparison {
    pub lines: Vec<LineDeviation>,
    /// Largest `|deviation|`; 0 for an empty spectrum.
    pub max_deviation: f64,
}

/// Per-line relative shift against an ideal Doppler shift `ν' = ν / (1 + z)`.
pub fn compare_to_doppler(
    lines: &[SpectralLine],
    z: f64,
    coeff: &ShiftCoefficient,
) -> Result<DopplerComparison, IlcrsError> {
    let shifted = apply_redshift(lines, z, coeff)?;
    let doppler_shift = 1.0 - 1.0 / (1.0 + z);
    let rows: Vec<LineDeviation> = lines
        .iter()
        .zip(&shifted)
        .map(|(before, after)| {
            let raman_shift = relative_shift(before, after);
            LineDeviation {
                wavelength_nm: before.wavelength_nm,
                raman_shift,
                doppler_shift,
                deviation: raman_shift - doppler_shift,
            }
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.deviation.abs()).fold(0.0, f64::max);
    Ok(DopplerComparison {
        lines: rows,
        max_deviation,
    })
}
