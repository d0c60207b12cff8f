//! Second-order interference of two incoherent sources seen by two detectors.
//!
//! Detector `j` sees the amplitude factor `cos(pi delta_j / lambda + phi / 2)`
//! where `phi` is the fast-varying relative phase of the sources. Coincidences
//! are the product of the two detector responses, averaged over `phi`.
//!
//! In the amplitude regime the signed product is averaged, which gives
//! `cos(pi Δ / lambda) / 2` with a true zero at `Δ = lambda / 2`. Visibility is
//! then taken over magnitudes. In the intensity regime the squared factors
//! give `1/4 + cos(2 pi Δ / lambda) / 8`.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{Photodetector, Regime};
use crate::numeric::{monte_carlo_mean as monte_carlo_mean_of, split_seed};

#[derive(Debug, Error)]
pub enum InterferenceError {
    #[error("wavelength must be positive and finite, got {0}")]
    InvalidWavelength(f64),
    #[error("path differences must be finite")]
    InvalidPath,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("fringe scan needs at least one path difference")]
    EmptyScan,
    #[error("visibility is undefined for a scan with no signal")]
    UndefinedVisibility,
    #[error("scan csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSourceSetup {
    wavelength: f64,
    delta1: f64,
    delta2: f64,
    regime: Regime,
    trials: u64,
}

impl TwoSourceSetup {
    pub fn new(
        wavelength: f64,
        delta1: f64,
        delta2: f64,
        regime: Regime,
        trials: u64,
    ) -> Result<Self, InterferenceError> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(InterferenceError::InvalidWavelength(wavelength));
        }
        if !(delta1.is_finite() && delta2.is_finite()) {
            return Err(InterferenceError::InvalidPath);
        }
        if trials == 0 {
            return Err(InterferenceError::NoTrials);
        }
        Ok(Self {
            wavelength,
            delta1,
            delta2,
            regime,
            trials,
        })
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Same setup with detector 1 at `delta1` and detector 2 at `delta2`.
    pub fn with_paths(self, delta1: f64, delta2: f64) -> Self {
        Self {
            delta1,
            delta2,
            ..self
        }
    }

    fn detector(&self) -> Photodetector {
        Photodetector::unit(self.regime)
    }
}

/// Coincidence signal for one value of the relative source phase.
pub fn coincidence_rate(setup: &TwoSourceSetup, phi: f64) -> f64 {
    let factor = |delta: f64| (PI * delta / setup.wavelength + 0.5 * phi).cos().clamp(-1.0, 1.0);
    let (c1, c2) = (factor(setup.delta1), factor(setup.delta2));
    let detector = setup.detector();
    // Factors are clamped to [-1, 1], so the response cannot fail.
    let r1 = detector.detection_response(c1).unwrap_or(0.0);
    let r2 = detector.detection_response(c2).unwrap_or(0.0);
    match setup.regime {
        Regime::Amplitude => (c1 * c2).signum() * r1 * r2,
        Regime::Intensity => r1 * r2,
    }
}

/// How the average over the relative phase is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Averaging {
    ClosedForm,
    /// `setup.trials` phases uniform on `[0, 2 pi)`; trial `i` draws from
    /// [`trial_rng`]`(seed, i)`.
    MonteCarlo { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCoincidence {
    pub mean: f64,
    /// Standard error of the mean; zero for the closed form.
    pub std_error: f64,
}

/// Closed-form phase average for path difference `Δ = delta1 - delta2`.
pub fn closed_form_mean(regime: Regime, path_difference: f64, wavelength: f64) -> f64 {
    match regime {
        Regime::Amplitude => 0.5 * (PI * path_difference / wavelength).cos(),
        Regime::Intensity => 0.25 + 0.125 * (TAU * path_difference / wavelength).cos(),
    }
}

pub fn mean_coincidence(setup: &TwoSourceSetup, averaging: Averaging) -> MeanCoincidence {
    match averaging {
        Averaging::ClosedForm => MeanCoincidence {
            mean: closed_form_mean(setup.regime, setup.delta1 - setup.delta2, setup.wavelength),
            std_error: 0.0,
        },
        Averaging::MonteCarlo { seed } => monte_carlo_mean(setup, seed),
    }
}

fn monte_carlo_mean(setup: &TwoSourceSetup, seed: u64) -> MeanCoincidence {
    let estimate = monte_carlo_mean_of(setup.trials, seed, |rng| coincidence_rate(setup, rng.random::<f64>() * TAU));
    MeanCoincidence {
        mean: estimate.mean,
        std_error: estimate.std_error,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeRow {
    pub delta_m: f64,
    pub mean_coincidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan {
    pub regime: Regime,
    pub rows: Vec<FringeRow>,
    /// Standard error per row (all zero for the closed form).
    pub std_errors: Vec<f64>,
}

impl FringeScan {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), InterferenceError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn value_at(&self, delta: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.delta_m == delta)
            .map(|r| r.mean_coincidence)
    }
}

/// Mean coincidence for each `Δ` in `deltas`, with detector 2 held at zero.
///
/// Monte-Carlo points use independent streams: point `i` averages with
/// master seed `split_seed(seed, i)`.
pub fn scan_fringes(
    setup: &TwoSourceSetup,
    deltas: &[f64],
    averaging: Averaging,
) -> Result<FringeScan, InterferenceError> {
    if deltas.is_empty() {
        return Err(InterferenceError::EmptyScan);
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(InterferenceError::InvalidPath);
    }
    let results: Vec<MeanCoincidence> = deltas
        .iter()
        .enumerate()
        .map(|(i, &delta)| {
            let point = setup.with_paths(delta, 0.0);
            let averaging = match averaging {
                Averaging::ClosedForm => Averaging::ClosedForm,
                Averaging::MonteCarlo { seed } => Averaging::MonteCarlo {
                    seed: split_seed(seed, i as u64),
                },
            };
            mean_coincidence(&point, averaging)
        })
        .collect();
    Ok(FringeScan {
        regime: setup.regime,
        rows: deltas
            .iter()
            .zip(&results)
            .map(|(&delta_m, r)| FringeRow {
                delta_m,
                mean_coincidence: r.mean,
            })
            .collect(),
        std_errors: results.iter().map(|r| r.std_error).collect(),
    })
}

/// `n` evenly spaced path differences covering `[start, end]`.
pub fn linear_range(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `(max - min) / (max + min)` over the magnitudes of the scan values.
///
/// The scan should span at least one full fringe period.
pub fn visibility(scan: &FringeScan) -> Result<f64, InterferenceError> {
    let magnitudes = scan.rows.iter().map(|r| r.mean_coincidence.abs());
    let (min, max) = magnitudes.fold((f64::INFINITY, 0.0_f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
    if !(max > 0.0) {
        return Err(InterferenceError::UndefinedVisibility);
    }
    Ok((max - min) / (max + min))
}
