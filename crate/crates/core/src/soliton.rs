//! Curved field filaments closing into a torus.
//!
//! A filament invariant under translations by multiples of a period `Λ` is
//! bent with tangent rotation `α` per unit arc. At transverse offset `ξ` the
//! arc length grows by `1 + ξα`, so the field per unit arc scales by the
//! second-order factor `1 - ξα`. The wave surfaces then rotate by `β(α)`,
//! and a self-consistent curved filament needs `f(α) = β(α)/α = 1` with
//! `df/dα < 0` for stability. Closing it into a torus requires a
//! circumference of `k` periods, which quantizes the radius.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{format_float, interpolate_linear, poly_derivative, poly_eval};

/// Search intervals must stay this far from `α = 0`, where `β/α` is 0/0.
pub const ALPHA_ZERO_CUTOFF: f64 = 1e-9;
/// Subintervals scanned for sign changes before refinement.
const SCAN_SUBINTERVALS: usize = 1000;

#[derive(Debug, Error)]
pub enum SolitonError {
    #[error("|xi * alpha| = {0} is outside the second-order region |xi * alpha| < 1")]
    OutOfValidityRegion(f64),
    #[error("rotation response: {0}")]
    InvalidResponse(String),
    #[error("search interval [{lo}, {hi}] is empty or reaches |alpha| <= {ALPHA_ZERO_CUTOFF}")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("f(alpha) = 1 has no root in the search interval")]
    NoSolution,
    #[error("every root of f(alpha) = 1 has df/dalpha >= 0: {roots:?}")]
    UnstableOnly { roots: Vec<f64> },
    #[error("{field} must be positive and finite, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("k_max must be at least 1")]
    InvalidWinding,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// `1 - ξα`, the field scale at offset `ξ` of a filament curved by `α`.
pub fn curl_correction(xi: f64, alpha: f64) -> Result<f64, SolitonError> {
    Ok(1.0 + curl_offset(xi, alpha)?)
}

/// `-ξα`, the departure of [`curl_correction`] from 1. Exactly odd in `ξ`.
pub fn curl_offset(xi: f64, alpha: f64) -> Result<f64, SolitonError> {
    let product = xi * alpha;
    if !(product.abs() < 1.0) {
        return Err(SolitonError::OutOfValidityRegion(product.abs()));
    }
    Ok(-product)
}

/// Wave-surface rotation `β` as a function of tangent rotation `α`.
#[derive(Debug, Clone, PartialEq)]
pub enum RotationResponse {
    /// Ascending coefficients of `β(α)`; the constant term is zero.
    Polynomial(Vec<f64>),
    /// Samples joined linearly.
    Tabulated { alpha: Vec<f64>, beta: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct ResponseRow {
    alpha_rad: f64,
    beta_rad: f64,
}

impl RotationResponse {
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self, SolitonError> {
        if coefficients.len() < 2 {
            return Err(SolitonError::InvalidResponse("polynomial needs a linear term".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SolitonError::InvalidResponse("coefficients must be finite".into()));
        }
        if coefficients[0] != 0.0 {
            return Err(SolitonError::InvalidResponse(format!(
                "beta(0) must be 0, constant term is {}",
                coefficients[0]
            )));
        }
        Ok(Self::Polynomial(coefficients))
    }

    pub fn tabulated(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, SolitonError> {
        if alpha.len() != beta.len() || alpha.len() < 2 {
            return Err(SolitonError::InvalidResponse(
                "need at least two (alpha, beta) samples of equal length".into(),
            ));
        }
        if alpha.iter().chain(&beta).any(|v| !v.is_finite()) || alpha.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SolitonError::InvalidResponse(
                "samples must be finite with strictly increasing alpha".into(),
            ));
        }
        let scale = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if let Some(at_zero) = interpolate_linear(&alpha, &beta, 0.0) {
            if at_zero.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(SolitonError::InvalidResponse(format!("beta(0) must be 0, table gives {at_zero}")));
            }
        }
        Ok(Self::Tabulated { alpha, beta })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SolitonError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: ResponseRow = row?;
            alpha.push(row.alpha_rad);
            beta.push(row.beta_rad);
        }
        Self::tabulated(alpha, beta)
    }

    pub fn write_csv<W: Write>(&self, alphas: &[f64], writer: W) -> Result<(), SolitonError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for &alpha_rad in alphas {
            wtr.serialize(ResponseRow {
                alpha_rad,
                beta_rad: self.beta(alpha_rad).unwrap_or(f64::NAN),
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `β(α)`; `None` outside a table.
    pub fn beta(&self, alpha: f64) -> Option<f64> {
        match self {
            Self::Polynomial(c) => Some(poly_eval(c, alpha)),
            Self::Tabulated { alpha: a, beta: b } => interpolate_linear(a, b, alpha),
        }
    }

    /// `f(α) = β(α)/α`. For polynomials the division is done on the
    /// coefficients, so `f` is smooth through 0.
    pub fn f(&self, alpha: f64) -> Option<f64> {
        match self {
            Self::Polynomial(c) => Some(poly_eval(&c[1..], alpha)),
            Self::Tabulated { .. } => self.beta(alpha).map(|b| b / alpha),
        }
    }

    /// `df/dα`: exact for polynomials; for tables a central difference with
    /// step `1e-6 · max(1, |α|)`, one-sided at the table ends.
    pub fn df(&self, alpha: f64) -> Option<f64> {
        match self {
            Self::Polynomial(c) => Some(poly_eval(&poly_derivative(&c[1..]), alpha)),
            Self::Tabulated { alpha: a, .. } => {
                let h = 1e-6 * alpha.abs().max(1.0);
                let lo = (alpha - h).max(a[0]);
                let hi = (alpha + h).min(a[a.len() - 1]);
                if hi <= lo {
                    return None;
                }
                Some((self.f(hi)? - self.f(lo)?) / (hi - lo))
            }
        }
    }
}

/// Root of `f(α) = 1` with its stability certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableRoot {
    pub alpha0: f64,
    pub f_value: f64,
    /// `df/dα` at `alpha0`, negative.
    pub slope: f64,
}

/// Finds the smallest `α0` in `[lo, hi]` with `|f(α0) - 1| <= tol` and
/// `df/dα(α0) < 0`.
///
/// The interval is scanned on 1000 subintervals; every sign change of
/// `f - 1` and every tangent touch within `tol` at a scan node is refined by
/// bisection with secant steps.
pub fn find_stable_alpha(response: &RotationResponse, interval: (f64, f64), tol: f64) -> Result<StableRoot, SolitonError> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || (lo <= ALPHA_ZERO_CUTOFF && hi >= -ALPHA_ZERO_CUTOFF) {
        return Err(SolitonError::InvalidInterval { lo, hi });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SolitonError::InvalidTolerance(tol));
    }
    let g = |alpha: f64| -> Result<f64, SolitonError> {
        response
            .f(alpha)
            .filter(|v| v.is_finite())
            .map(|v| v - 1.0)
            .ok_or_else(|| SolitonError::InvalidResponse(format!("not finite at alpha = {alpha}")))
    };

    let step = (hi - lo) / SCAN_SUBINTERVALS as f64;
    let nodes: Vec<f64> = (0..=SCAN_SUBINTERVALS)
        .map(|i| if i == SCAN_SUBINTERVALS { hi } else { lo + step * i as f64 })
        .collect();
    let values = nodes.iter().map(|&a| g(a)).collect::<Result<Vec<_>, _>>()?;

    let mut roots: Vec<f64> = Vec::new();
    for i in 0..nodes.len() {
        let v = values[i];
        if v == 0.0 {
            roots.push(nodes[i]);
            continue;
        }
        let left_min = i == 0 || values[i - 1].abs() >= v.abs();
        let right_min = i + 1 == nodes.len() || values[i + 1].abs() > v.abs();
        let no_crossing = (i == 0 || values[i - 1].signum() == v.signum())
            && (i + 1 == nodes.len() || values[i + 1].signum() == v.signum());
        if v.abs() <= tol && left_min && right_min && no_crossing {
            roots.push(nodes[i]);
        }
        if i + 1 < nodes.len() && values[i + 1] != 0.0 && v.signum() != values[i + 1].signum() {
            if let Some(root) = refine(&g, nodes[i], nodes[i + 1], v, values[i + 1], tol)? {
                roots.push(root);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * step);

    for &alpha0 in &roots {
        let slope = response.df(alpha0).unwrap_or(f64::NAN);
        if slope < 0.0 {
            return Ok(StableRoot {
                alpha0,
                f_value: g(alpha0)? + 1.0,
                slope,
            });
        }
    }
    if roots.is_empty() {
        Err(SolitonError::NoSolution)
    } else {
        Err(SolitonError::UnstableOnly { roots })
    }
}

/// Illinois regula falsi with a bisection fallback. Aims at `tol / 16` so the
/// result survives an independent recheck at a tighter tolerance.
fn refine(
    g: &impl Fn(f64) -> Result<f64, SolitonError>,
    mut a: f64,
    mut b: f64,
    mut ga: f64,
    mut gb: f64,
    tol: f64,
) -> Result<Option<f64>, SolitonError> {
    let target = tol / 16.0;
    let mut best = if ga.abs() < gb.abs() { (a, ga) } else { (b, gb) };
    let mut side = 0i8;
    for _ in 0..200 {
        if best.1.abs() <= target {
            break;
        }
        let secant = (a * gb - b * ga) / (gb - ga);
        let width = b - a;
        let c = if secant.is_finite() && secant > a && secant < b {
            secant
        } else {
            0.5 * (a + b)
        };
        let gc = g(c)?;
        if gc.abs() < best.1.abs() {
            best = (c, gc);
        }
        if gc == 0.0 {
            break;
        }
        if gc.signum() == ga.signum() {
            a = c;
            ga = gc;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            gb = gc;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        // Force progress when the secant stalls on one side.
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let gm = g(m)?;
            if gm.abs() < best.1.abs() {
                best = (m, gm);
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
                gb = gm;
            }
            side = 0;
        }
        if b - a <= 4.0 * f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
    }
    Ok((best.1.abs() <= tol).then_some(best.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilamentProfile {
    /// Translation period `Λ` along the filament, metres.
    pub period: f64,
    /// Radius `ρ` of the evanescent field around the filament, metres.
    pub evanescent_radius: f64,
    /// Energy flux held by a stable filament, watts.
    pub critical_flux: f64,
}

impl FilamentProfile {
    pub fn new(period: f64, evanescent_radius: f64, critical_flux: f64) -> Result<Self, SolitonError> {
        for (field, value) in [
            ("period", period),
            ("evanescent_radius", evanescent_radius),
            ("critical_flux", critical_flux),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(SolitonError::NonPositive { field, value });
            }
        }
        Ok(Self {
            period,
            evanescent_radius,
            critical_flux,
        })
    }

    /// `Λ / 2π`, the radius step between windings.
    pub fn radius_step(&self) -> f64 {
        self.period / TAU
    }

    pub fn candidate(&self, winding: u32) -> TorusCandidate {
        TorusCandidate {
            radius: winding as f64 * self.radius_step(),
            winding,
            alpha0: None,
        }
    }
}

/// Torus whose circumference holds `winding` periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusCandidate {
    pub radius: f64,
    pub winding: u32,
    /// Stable curvature angle, when a response was solved.
    pub alpha0: Option<f64>,
}

impl TorusCandidate {
    pub fn with_alpha0(self, alpha0: f64) -> Self {
        Self {
            alpha0: Some(alpha0),
            ..self
        }
    }
}

/// `R_k = kΛ/2π` for `k = 1..=k_max`, keeping those with `R_k > ρ`.
pub fn quantized_radii(profile: &FilamentProfile, k_max: u32) -> Result<Vec<TorusCandidate>, SolitonError> {
    if k_max == 0 {
        return Err(SolitonError::InvalidWinding);
    }
    Ok((1..=k_max)
        .map(|k| profile.candidate(k))
        .filter(|c| c.radius > profile.evanescent_radius)
        .collect())
}

/// Admissible torus whose radius is closest to `target`: `k = round(2πR/Λ)`,
/// raised to the smallest winding with `R_k > ρ` if needed.
pub fn nearest_admissible(profile: &FilamentProfile, target: f64) -> Result<TorusCandidate, SolitonError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(SolitonError::NonPositive {
            field: "target radius",
            value: target,
        });
    }
    let step = profile.radius_step();
    let smallest = (profile.evanescent_radius / step).floor() as u32 + 1;
    let nearest = (target / step).round().clamp(1.0, u32::MAX as f64) as u32;
    Ok(profile.candidate(nearest.max(smallest)))
}

pub fn write_candidates_csv<W: Write>(candidates: &[TorusCandidate], writer: W) -> Result<(), SolitonError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["winding", "radius_m", "alpha0_rad"])?;
    for c in candidates {
        wtr.write_record([
            c.winding.to_string(),
            format_float(c.radius),
            c.alpha0.map_or_else(String::new, format_float),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stable_family() -> RotationResponse {
        RotationResponse::polynomial(vec![0.0, 2.0, -1.0]).unwrap()
    }

    #[test]
    fn curl_correction_values() {
        assert_eq!(curl_correction(0.3, 0.0).unwrap(), 1.0);
        assert!((curl_correction(0.1, 1.0).unwrap() - 0.9).abs() < 1e-15);
        assert!(matches!(curl_correction(2.0, 0.5), Err(SolitonError::OutOfValidityRegion(_))));
        assert!(curl_correction(-1.0, 1.0).is_err());
    }

    #[test]
    fn curl_correction_is_odd() {
        for (xi, alpha) in [(0.125, 0.5), (0.3, 0.7), (-0.41, 1.3), (1e-5, 3.0)] {
            assert_eq!(curl_offset(xi, alpha).unwrap(), -curl_offset(-xi, alpha).unwrap());
            let plus = curl_correction(xi, alpha).unwrap() - 1.0;
            let minus = curl_correction(-xi, alpha).unwrap() - 1.0;
            assert!((plus + minus).abs() <= 2.0 * f64::EPSILON, "{plus} {minus}");
        }
        // Dyadic values are exact through the factor itself.
        assert_eq!(
            curl_correction(0.25, 0.5).unwrap() - 1.0,
            -(curl_correction(-0.25, 0.5).unwrap() - 1.0)
        );
    }

    #[test]
    fn curl_correction_inverts_arc_stretch() {
        for i in -20..=20 {
            for j in 1..=10 {
                let (xi, alpha) = (i as f64 * 0.02, j as f64 * 0.09);
                let f = curl_correction(xi, alpha).unwrap();
                let p = xi * alpha;
                assert!((f * (1.0 + p) - 1.0).abs() <= p * p * (1.0 + 1e-12) + 1e-15);
            }
        }
    }

    #[test]
    fn analytic_families() {
        let root = find_stable_alpha(&stable_family(), (0.1, 3.0), 1e-10).unwrap();
        assert!((root.alpha0 - 1.0).abs() < 1e-9);
        assert!((root.f_value - 1.0).abs() <= 1e-10);
        assert_eq!(root.slope, -1.0);

        let flat = RotationResponse::polynomial(vec![0.0, 0.5]).unwrap();
        assert!(matches!(find_stable_alpha(&flat, (0.1, 3.0), 1e-10), Err(SolitonError::NoSolution)));

        let rising = RotationResponse::polynomial(vec![0.0, 0.0, 1.0]).unwrap();
        match find_stable_alpha(&rising, (0.1, 3.0), 1e-10) {
            Err(SolitonError::UnstableOnly { roots }) => {
                assert_eq!(roots.len(), 1);
                assert!((roots[0] - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn smallest_stable_root_wins() {
        // f - 1 = -(α-1)(α-2)(α-3).
        // df/dα at 1, 2, 3 is -2, +1, -2; the answer is 1.
        // β = α·f = α(1 - (α³ - 6α² + 11α - 6)) = 7α - 11α² + 6α³ - α⁴.
        let response = RotationResponse::polynomial(vec![0.0, 7.0, -11.0, 6.0, -1.0]).unwrap();
        let root = find_stable_alpha(&response, (0.5, 3.5), 1e-12).unwrap();
        assert!((root.alpha0 - 1.0).abs() < 1e-10);
        let later = find_stable_alpha(&response, (1.5, 3.5), 1e-12).unwrap();
        assert!((later.alpha0 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn tabulated_response() {
        let alphas: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
        let betas: Vec<f64> = alphas.iter().map(|a| 2.0 * a - a * a).collect();
        let table = RotationResponse::tabulated(alphas.clone(), betas).unwrap();
        let root = find_stable_alpha(&table, (0.1, 2.9), 1e-10).unwrap();
        assert!((root.alpha0 - 1.0).abs() < 1e-8);
        assert!(root.slope < 0.0);

        let mut buf = Vec::new();
        table.write_csv(&alphas, &mut buf).unwrap();
        assert!(buf.starts_with(b"alpha_rad,beta_rad\n"));
        assert_eq!(RotationResponse::read_csv(buf.as_slice()).unwrap(), table);

        assert!(RotationResponse::tabulated(vec![-1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(RotationResponse::polynomial(vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn interval_rules() {
        let r = stable_family();
        assert!(matches!(find_stable_alpha(&r, (-1.0, 2.0), 1e-10), Err(SolitonError::InvalidInterval { .. })));
        assert!(matches!(find_stable_alpha(&r, (2.0, 1.0), 1e-10), Err(SolitonError::InvalidInterval { .. })));
        assert!(find_stable_alpha(&r, (0.5, 2.0), 0.0).is_err());
        // Negative side is allowed: f = 2 - α never reaches 1 there.
        assert!(matches!(find_stable_alpha(&r, (-3.0, -0.1), 1e-10), Err(SolitonError::NoSolution)));
    }

    #[test]
    fn radii() {
        let profile = FilamentProfile::new(TAU, 0.5, 1.0).unwrap();
        let c = quantized_radii(&profile, 5).unwrap();
        assert_eq!(c[0].radius, 1.0);
        assert_eq!(c.len(), 5);
        for w in c.windows(2) {
            assert_eq!(w[1].radius - w[0].radius, profile.radius_step());
            assert_eq!(w[1].winding, w[0].winding + 1);
        }
        let tight = FilamentProfile::new(TAU, 2.0, 1.0).unwrap();
        let windings: Vec<u32> = quantized_radii(&tight, 5).unwrap().iter().map(|c| c.winding).collect();
        assert_eq!(windings, vec![3, 4, 5]);
        assert!(quantized_radii(&profile, 0).is_err());
    }

    #[test]
    fn candidates_csv() {
        let profile = FilamentProfile::new(1e-6, 1e-8, 1.0).unwrap();
        let candidates: Vec<TorusCandidate> = quantized_radii(&profile, 3)
            .unwrap()
            .into_iter()
            .map(|c| c.with_alpha0(0.5))
            .collect();
        let mut buf = Vec::new();
        write_candidates_csv(&candidates, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("winding,radius_m,alpha0_rad\n"));
    }

    proptest! {
        #[test]
        fn nearest_matches_local_scan(period in 1e-3f64..10.0, rho_frac in 0.0f64..5.0, target_frac in 0.01f64..40.0) {
            let profile = FilamentProfile::new(period, (rho_frac * period / TAU).max(1e-12), 1.0).unwrap();
            let target = target_frac * period / TAU;
            let got = nearest_admissible(&profile, target).unwrap();
            prop_assert!(got.radius > profile.evanescent_radius);
            let k = got.winding as i64;
            for other in (k - 2).max(1)..=k + 2 {
                let cand = profile.candidate(other as u32);
                if cand.radius > profile.evanescent_radius {
                    prop_assert!((got.radius - target).abs() <= (cand.radius - target).abs() + 1e-12 * target);
                }
            }
        }

        #[test]
        fn radii_strictly_increasing_with_uniform_step(period in 1e-9f64..1e3, k_max in 1u32..200) {
            let profile = FilamentProfile::new(period, period * 1e-3, 1.0).unwrap();
            let c = quantized_radii(&profile, k_max).unwrap();
            let step = profile.radius_step();
            for w in c.windows(2) {
                prop_assert!(w[1].radius > w[0].radius);
                prop_assert!(((w[1].radius - w[0].radius) - step).abs() <= 4.0 * f64::EPSILON * w[1].radius);
            }
            for cand in &c {
                prop_assert_eq!(cand.radius, cand.winding as f64 * step);
            }
        }

        #[test]
        fn bracketed_roots_are_found(a in -3.0f64..3.0, b in 0.2f64..2.0, lo in 0.05f64..1.0, width in 0.1f64..3.0) {
            // f(α) = 1 + a(α - b) changes sign across b when b is inside.
            let response = RotationResponse::polynomial(vec![0.0, 1.0 - a * b, a]).unwrap();
            let hi = lo + width;
            let g = |x: f64| response.f(x).unwrap() - 1.0;
            let result = find_stable_alpha(&response, (lo, hi), 1e-10);
            if g(lo) * g(hi) < 0.0 {
                match result {
                    Ok(root) => {
                        prop_assert!(a < 0.0);
                        prop_assert!((response.f(root.alpha0).unwrap() - 1.0).abs() <= 1e-11);
                    }
                    Err(SolitonError::UnstableOnly { roots }) => prop_assert!(a > 0.0 && roots.len() == 1),
                    Err(e) => prop_assert!(false, "sign change missed: {e}"),
                }
            }
        }
    }
}
