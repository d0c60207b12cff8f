//! Photodetection at low light.
//!
//! A field `E = beta * E0` is a stochastic baseline `E0` amplified by a
//! source. Near darkness (`beta ≈ 1`) any smooth effect `f(E)` is linear in
//! `beta - 1`, and a photocell signal `E² - E0²` is linear in the amplitude
//! rather than the intensity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{poly_derivative, poly_eval};

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("amplitude factor {0} is outside [-1, 1]")]
    InvalidAmplitude(f64),
    #[error("baseline amplitude must be positive and finite, got {0}")]
    InvalidBaseline(f64),
    #[error("detector gain must be positive and finite, got {0}")]
    InvalidGain(f64),
    #[error("response curve needs at least one finite coefficient")]
    InvalidResponse,
}

/// Polynomial response `f(E) = c0 + c1 E + c2 E² + …` (ascending order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    coefficients: Vec<f64>,
}

impl ResponseCurve {
    pub fn new(coefficients: Vec<f64>) -> Result<Self, DetectionError> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(DetectionError::InvalidResponse);
        }
        Ok(Self { coefficients })
    }

    pub fn identity() -> Self {
        Self {
            coefficients: vec![0.0, 1.0],
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, e: f64) -> f64 {
        poly_eval(&self.coefficients, e)
    }

    pub fn derivative(&self, e: f64) -> f64 {
        poly_eval(&poly_derivative(&self.coefficients), e)
    }
}

/// Which first-order expansion to use for `f(E0 beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearization {
    /// `f(E0) + (beta - 1) E0 f'(E0)`, the chain-rule expansion in `beta`.
    #[default]
    ChainRule,
    /// `f(E0) + (beta - 1) f'(E0)`, which only matches the chain rule when
    /// `E0 = 1`.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedResponse {
    pub approx: f64,
    pub exact: f64,
    pub abs_error: f64,
}

pub fn linearized_response(
    f: &ResponseCurve,
    e0: f64,
    beta: f64,
    form: Linearization,
) -> Result<LinearizedResponse, DetectionError> {
    check_baseline(e0)?;
    let slope = match form {
        Linearization::ChainRule => e0 * f.derivative(e0),
        Linearization::Verbatim => f.derivative(e0),
    };
    let approx = f.eval(e0) + (beta - 1.0) * slope;
    let exact = f.eval(e0 * beta);
    Ok(LinearizedResponse {
        approx,
        exact,
        abs_error: (approx - exact).abs(),
    })
}

/// Whether a detector responds to the field amplitude or to its square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Low light: response proportional to the amplitude.
    Amplitude,
    /// High light: response proportional to the intensity.
    Intensity,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Amplitude => "amplitude",
            Regime::Intensity => "intensity",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "amplitude" => Ok(Regime::Amplitude),
            "intensity" => Ok(Regime::Intensity),
            other => Err(format!("unknown regime `{other}` (expected amplitude or intensity)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Photodetector {
    baseline_e0: f64,
    regime: Regime,
    gain: f64,
}

fn check_baseline(e0: f64) -> Result<(), DetectionError> {
    if e0.is_finite() && e0 > 0.0 {
        Ok(())
    } else {
        Err(DetectionError::InvalidBaseline(e0))
    }
}

impl Photodetector {
    pub fn new(baseline_e0: f64, regime: Regime, gain: f64) -> Result<Self, DetectionError> {
        check_baseline(baseline_e0)?;
        if !(gain.is_finite() && gain > 0.0) {
            return Err(DetectionError::InvalidGain(gain));
        }
        Ok(Self {
            baseline_e0,
            regime,
            gain,
        })
    }

    /// Unit baseline and unit gain.
    pub fn unit(regime: Regime) -> Self {
        Self {
            baseline_e0: 1.0,
            regime,
            gain: 1.0,
        }
    }

    pub fn baseline_e0(&self) -> f64 {
        self.baseline_e0
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Available energy above the restored baseline.
    ///
    /// The exact branch is `gain E0² (beta² - 1)`, the low-light branch
    /// `2 gain E0² (beta - 1)`. Negative values mean absorption below the
    /// baseline.
    pub fn photocell_signal(&self, beta: f64, low_light_approx: bool) -> f64 {
        let scale = self.gain * self.baseline_e0 * self.baseline_e0;
        let excess = beta - 1.0;
        if low_light_approx {
            2.0 * scale * excess
        } else {
            // (beta - 1)(beta + 1) keeps full relative precision near beta = 1.
            scale * excess * (beta + 1.0)
        }
    }

    /// Response to a normalized amplitude factor in `[-1, 1]`.
    pub fn detection_response(&self, amplitude_factor: f64) -> Result<f64, DetectionError> {
        if !(amplitude_factor.abs() <= 1.0) {
            return Err(DetectionError::InvalidAmplitude(amplitude_factor));
        }
        Ok(self.gain
            * match self.regime {
                Regime::Amplitude => amplitude_factor.abs(),
                Regime::Intensity => amplitude_factor * amplitude_factor,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_response_is_exact() {
        let f = ResponseCurve::identity();
        for beta in [0.0, 0.5, 1.0, 1.3, 7.0] {
            let r = linearized_response(&f, 2.0, beta, Linearization::ChainRule).unwrap();
            assert!(r.abs_error < 1e-15, "beta {beta}: {r:?}");
        }
    }

    #[test]
    fn expansion_point_is_exact() {
        let f = ResponseCurve::new(vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let r = linearized_response(&f, 1.7, 1.0, Linearization::ChainRule).unwrap();
        assert_eq!(r.approx, r.exact);
        assert_eq!(r.approx, f.eval(1.7));
    }

    #[test]
    fn square_response_near_unit_baseline() {
        let f = ResponseCurve::new(vec![0.0, 0.0, 1.0]).unwrap();
        let r = linearized_response(&f, 1.0, 1.001, Linearization::ChainRule).unwrap();
        assert!((r.approx - 1.002).abs() < 1e-15);
        assert!((r.exact - 1.002001).abs() < 1e-15);
        assert!((r.abs_error - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn verbatim_form_differs_off_unit_baseline() {
        let f = ResponseCurve::new(vec![0.0, 0.0, 1.0]).unwrap();
        let chain = linearized_response(&f, 2.0, 1.01, Linearization::ChainRule).unwrap();
        let verbatim = linearized_response(&f, 2.0, 1.01, Linearization::Verbatim).unwrap();
        // exact 4.0804; chain 4 + 0.01*8 = 4.08; verbatim 4 + 0.01*4 = 4.04
        assert!((chain.approx - 4.08).abs() < 1e-13);
        assert!((verbatim.approx - 4.04).abs() < 1e-13);
        let same_at_unit = linearized_response(&f, 1.0, 1.01, Linearization::Verbatim).unwrap();
        assert!((same_at_unit.approx - 1.02).abs() < 1e-15);
    }

    #[test]
    fn photocell_examples() {
        let d = Photodetector::unit(Regime::Amplitude);
        assert_eq!(d.photocell_signal(1.0, true), 0.0);
        assert_eq!(d.photocell_signal(1.0, false), 0.0);
        let exact = d.photocell_signal(1.01, false);
        let approx = d.photocell_signal(1.01, true);
        assert!((exact - 0.0201).abs() < 1e-15);
        assert!((approx - 0.02).abs() < 1e-15);
        assert!((exact - approx).abs() / exact < 0.005);
        let (exact, approx) = (d.photocell_signal(2.0, false), d.photocell_signal(2.0, true));
        assert_eq!((exact, approx), (3.0, 2.0));
        assert!(((exact - approx) / exact - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn detection_response_regimes() {
        let amp = Photodetector::new(1.0, Regime::Amplitude, 2.0).unwrap();
        let int = Photodetector::new(1.0, Regime::Intensity, 2.0).unwrap();
        assert_eq!(amp.detection_response(0.0).unwrap(), 0.0);
        assert_eq!(int.detection_response(0.0).unwrap(), 0.0);
        assert_eq!(amp.detection_response(1.0).unwrap(), 2.0);
        assert_eq!(int.detection_response(-1.0).unwrap(), 2.0);
        assert_eq!(amp.detection_response(0.5).unwrap(), 1.0);
        assert_eq!(int.detection_response(0.5).unwrap(), 0.5);
        assert_eq!(
            amp.detection_response(1.5),
            Err(DetectionError::InvalidAmplitude(1.5))
        );
        assert!(int.detection_response(f64::NAN).is_err());
    }

    #[test]
    fn constructor_validation() {
        assert!(Photodetector::new(0.0, Regime::Amplitude, 1.0).is_err());
        assert!(Photodetector::new(1.0, Regime::Amplitude, -1.0).is_err());
        assert!(ResponseCurve::new(vec![]).is_err());
        assert!(ResponseCurve::new(vec![f64::INFINITY]).is_err());
        assert!(linearized_response(&ResponseCurve::identity(), -1.0, 1.0, Linearization::ChainRule).is_err());
    }

    proptest! {
        #[test]
        fn linearization_error_is_second_order(
            coeffs in prop::collection::vec(-1.0f64..1.0, 3..=6),
            e0 in 0.5f64..1.0,
        ) {
            let f = ResponseCurve::new(coeffs).unwrap();
            let second = poly_derivative(&poly_derivative(f.coefficients()));
            let curvature = poly_eval(&second, e0);
            let third = poly_eval(&poly_derivative(&second), e0);
            // Stay in the asymptotic regime where the cubic term is negligible.
            prop_assume!(third.abs() * e0 * 4e-4 < 0.05 * curvature.abs());
            let err = |eps: f64| {
                linearized_response(&f, e0, 1.0 + eps, Linearization::ChainRule).unwrap().abs_error
            };
            let (e1, e2, e4) = (err(1e-4), err(2e-4), err(4e-4));
            prop_assert!((e2 / e1 / 4.0 - 1.0).abs() < 0.05, "doubling ratio {}", e2 / e1);
            prop_assert!((e4 / e1 / 16.0 - 1.0).abs() < 0.05, "quadrupling ratio {}", e4 / e1);
        }

        #[test]
        fn photocell_branches_differ_by_square(
            beta in 0.0f64..3.0, e0 in 0.1f64..3.0, gain in 0.1f64..5.0,
        ) {
            let d = Photodetector::new(e0, Regime::Amplitude, gain).unwrap();
            let gap = d.photocell_signal(beta, false) - d.photocell_signal(beta, true);
            let expected = gain * e0 * e0 * (beta - 1.0).powi(2);
            prop_assert!((gap - expected).abs() <= 1e-12 * (1.0 + expected));
            let sign = (beta - 1.0).signum();
            if beta != 1.0 {
                prop_assert_eq!(d.photocell_signal(beta, false).signum(), sign);
                prop_assert_eq!(d.photocell_signal(beta, true).signum(), sign);
            }
        }

        #[test]
        fn detection_response_is_even(x in -1.0f64..=1.0) {
            for regime in [Regime::Amplitude, Regime::Intensity] {
                let d = Photodetector::unit(regime);
                prop_assert_eq!(d.detection_response(x).unwrap(), d.detection_response(-x).unwrap());
            }
        }
    }
}
