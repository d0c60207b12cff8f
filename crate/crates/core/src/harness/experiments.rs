//! One runner per experiment. Each returns its files and headline metrics.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use nalgebra::{Rotation3, UnitQuaternion, Vector4};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::*;
use super::{Artifact, HarnessError, RunOutputs};
use crate::detection::Photodetector;
use crate::eckart::{
    bind_frame_with, resolve_permutation_with, symmetry_operations, AtomSet, EckartError, EquilibriumConfiguration,
    FrameOptions, PermutationOptions, Vec3,
};
use crate::field::{
    normalize_mode, planck_mean_energy, planck_mean_energy_with_zero_point, sample_stochastic_amplitude,
    zero_point_energy, SpectralMode, ThermalState,
};
use crate::ilcrs::{
    calibrate_kappa, compare_to_doppler, read_spectrum_csv, redshift_along, stimulated_shift, ultrashort_check,
    write_spectrum_csv, PulseModel, ShiftCoefficient, Sightline, SpectralLine,
};
use crate::interference::{linear_range, scan_fringes, visibility, Averaging, TwoSourceSetup};
use crate::numeric::{format_float as num, monte_carlo_mean, trial_rng, TrialRng};
use crate::soliton::{
    find_stable_alpha, nearest_admissible, quantized_radii, write_candidates_csv, FilamentProfile, RotationResponse,
};
use crate::{BOLTZMANN_K, PLANCK_H, SPEED_OF_LIGHT};

pub(super) fn dispatch(config: &ExperimentConfig) -> Result<RunOutputs, HarnessError> {
    let fail = |message: String| HarnessError::Runtime {
        experiment: config.experiment.clone(),
        message,
    };
    let result = match &config.params {
        Params::Planck(p) => planck(p),
        Params::Mode(p) => mode(config, p),
        Params::Detector(p) => detector(p),
        Params::Interference(p) => interference(config, p),
        Params::Eckart(p) => eckart(config, p),
        Params::Ilcrs(p) => ilcrs(p),
        Params::Soliton(p) => soliton(p),
    };
    result.map_err(fail)
}

type Outcome = Result<RunOutputs, String>;

/// Serializes rows under `header` into CSV bytes.
fn table<R: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: R) -> Result<Vec<u8>, String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).map_err(|e| e.to_string())?;
    for row in rows {
        wtr.write_record(&row).map_err(|e| e.to_string())?;
    }
    wtr.into_inner().map_err(|e| e.to_string())
}

fn summary(metrics: &BTreeMap<String, f64>) -> Result<Artifact, String> {
    Ok(Artifact {
        name: "summary.csv".into(),
        bytes: table(
            &["key", "value"],
            metrics.iter().map(|(k, v)| vec![k.clone(), num(*v)]),
        )?,
    })
}

fn artifact(name: &str, bytes: Vec<u8>) -> Artifact {
    Artifact {
        name: name.into(),
        bytes,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, String> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn finish(mut artifacts: Vec<Artifact>, metrics: BTreeMap<String, f64>) -> Outcome {
    artifacts.push(summary(&metrics)?);
    Ok(RunOutputs { artifacts, metrics })
}

fn planck(p: &PlanckParams) -> Outcome {
    let state = ThermalState::new(p.temperature_k).map_err(|e| e.to_string())?;
    let n = p.points as usize;
    let frequencies: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if p.log_spacing {
                p.freq_min_hz * (p.freq_max_hz / p.freq_min_hz).powf(t)
            } else {
                p.freq_min_hz + (p.freq_max_hz - p.freq_min_hz) * t
            }
        })
        .collect();
    let kt = BOLTZMANN_K * p.temperature_k;
    let mut rows = Vec::with_capacity(n);
    for &nu in &frequencies {
        let thermal = planck_mean_energy(nu, &state).map_err(|e| e.to_string())?;
        let total = planck_mean_energy_with_zero_point(nu, &state).map_err(|e| e.to_string())?;
        let zero_point = zero_point_energy(nu).map_err(|e| e.to_string())?;
        let x = if kt > 0.0 { PLANCK_H * nu / kt } else { f64::INFINITY };
        rows.push(vec![
            num(nu),
            num(x),
            num(thermal),
            num(zero_point),
            num(total),
        ]);
    }
    let bytes = table(
        &["frequency_hz", "h_nu_over_kt", "thermal_j", "zero_point_j", "total_j"],
        rows,
    )?;
    let metrics = BTreeMap::from([("kt_j".to_string(), kt), ("points".to_string(), n as f64)]);
    finish(vec![artifact("planck.csv", bytes)], metrics)
}

fn mode(config: &ExperimentConfig, p: &ModeParams) -> Outcome {
    let n = p.points as usize;
    let frequency = linear_range(p.freq_min_hz, p.freq_max_hz, n);
    let raw = SpectralMode::new(frequency, vec![1.0; n]).map_err(|e| e.to_string())?;
    let (normalized, scale) = normalize_mode(&raw).map_err(|e| e.to_string())?;
    let mut mode_csv = Vec::new();
    normalized.write_csv(&mut mode_csv).map_err(|e| e.to_string())?;

    let nu = p.sample_frequency_hz;
    let expected = zero_point_energy(nu).map_err(|e| e.to_string())?;
    let estimate = monte_carlo_mean(config.trials, config.master_seed, |rng| {
        sample_stochastic_amplitude(rng, nu).map_or(f64::NAN, |a| a.energy())
    });
    let samples = table(
        &["frequency_hz", "trials", "mean_energy_j", "std_error_j", "expected_j"],
        [vec![
            num(nu),
            config.trials.to_string(),
            num(estimate.mean),
            num(estimate.std_error),
            num(expected),
        ]],
    )?;
    let metrics = BTreeMap::from([
        ("action_integral_js".to_string(), normalized.action_integral()),
        ("normalization_scale".to_string(), scale),
        ("zero_point_mean_j".to_string(), estimate.mean),
        ("zero_point_expected_j".to_string(), expected),
    ]);
    finish(
        vec![artifact("mode.csv", mode_csv), artifact("zero_point.csv", samples)],
        metrics,
    )
}

fn detector(p: &DetectorParams) -> Outcome {
    let det = Photodetector::new(p.baseline_e0, p.regime, p.gain).map_err(|e| e.to_string())?;
    let scale = p.gain * p.baseline_e0 * p.baseline_e0;
    let mut worst = 0.0f64;
    let rows: Vec<Vec<String>> = p
        .beta_minus_one
        .iter()
        .map(|&excess| {
            let beta = 1.0 + excess;
            let exact = det.photocell_signal(beta, false);
            let approx = det.photocell_signal(beta, true);
            let error = (exact - approx).abs();
            let predicted = scale * excess * excess;
            worst = worst.max((error - predicted).abs());
            vec![
                num(beta),
                num(exact),
                num(approx),
                num(error),
                num(predicted),
            ]
        })
        .collect();
    let photocell = table(&["beta", "exact", "low_light", "abs_error", "predicted_error"], rows)?;
    let response_rows = linear_range(-1.0, 1.0, 21)
        .into_iter()
        .map(|f| {
            let r = det.detection_response(f).map_err(|e| e.to_string())?;
            Ok(vec![num(f), num(r)])
        })
        .collect::<Result<Vec<_>, String>>()?;
    let response = table(&["amplitude_factor", "response"], response_rows)?;
    let metrics = BTreeMap::from([("max_identity_deviation".to_string(), worst)]);
    finish(
        vec![artifact("photocell.csv", photocell), artifact("response.csv", response)],
        metrics,
    )
}

fn interference(config: &ExperimentConfig, p: &InterferenceParams) -> Outcome {
    let setup =
        TwoSourceSetup::new(p.wavelength_m, 0.0, 0.0, p.regime, config.trials).map_err(|e| e.to_string())?;
    let deltas = linear_range(0.0, p.span_wavelengths * p.wavelength_m, p.points as usize);
    let averaging = match p.method {
        Method::MonteCarlo => Averaging::MonteCarlo {
            seed: config.master_seed,
        },
        Method::ClosedForm => Averaging::ClosedForm,
    };
    let scan = scan_fringes(&setup, &deltas, averaging).map_err(|e| e.to_string())?;
    let mut fringes = Vec::new();
    scan.write_csv(&mut fringes).map_err(|e| e.to_string())?;
    let mut metrics = BTreeMap::from([("visibility".to_string(), visibility(&scan).map_err(|e| e.to_string())?)]);
    let half = p.wavelength_m / 2.0;
    if let Some(row) = scan
        .rows
        .iter()
        .min_by(|a, b| (a.delta_m - half).abs().total_cmp(&(b.delta_m - half).abs()))
    {
        metrics.insert("value_near_half_wavelength".into(), row.mean_coincidence);
    }
    let max_se = scan.std_errors.iter().copied().fold(0.0, f64::max);
    metrics.insert("max_std_error".into(), max_se);
    finish(vec![artifact("fringes.csv", fringes)], metrics)
}

fn uniform_rotation(rng: &mut TrialRng) -> Rotation3<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q)).to_rotation_matrix()
}

fn load_reference(p: &EckartParams) -> Result<EquilibriumConfiguration, String> {
    let atoms = if let Some(path) = &p.reference_xyz_path {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        AtomSet::from_xyz(&text, p.mass_tolerance)
    } else {
        let specs = p.reference.clone().unwrap_or_else(default_reference);
        AtomSet::with_mass_tolerance(
            specs.iter().map(|a| a.label.clone()).collect(),
            specs.iter().map(|a| a.mass_amu).collect(),
            specs.iter().map(|a| Vec3::from(a.position)).collect(),
            p.mass_tolerance,
        )
    }
    .map_err(|e| e.to_string())?;
    Ok(EquilibriumConfiguration::from_atoms(atoms))
}

/// Formaldehyde-like planar reference with one pair of equal atoms.
fn default_reference() -> Vec<AtomSpec> {
    let atom = |label: &str, mass_amu: f64, position: [f64; 3]| AtomSpec {
        label: label.into(),
        mass_amu,
        position,
    };
    vec![
        atom("C", 12.0, [0.0, 0.0, 0.0]),
        atom("O", 15.995, [0.0, 0.0, 1.205]),
        atom("H", 1.008, [0.0, 0.943, -0.587]),
        atom("H", 1.008, [0.0, -0.943, -0.587]),
    ]
}

/// Rigidly moved, distorted copy of `reference` with equal-mass atoms
/// shuffled.
fn random_molecule(reference: &EquilibriumConfiguration, p: &EckartParams, rng: &mut TrialRng) -> Result<AtomSet, EckartError> {
    let rotation = uniform_rotation(rng);
    let shift = Vec3::from_fn(|_, _| rng.random_range(-10.0..10.0));
    let amplitude = p.distortion_angstrom;
    let positions: Vec<Vec3> = reference
        .positions()
        .iter()
        .map(|a| {
            let noise = Vec3::from_fn(|_, _| if amplitude > 0.0 { rng.random_range(-amplitude..amplitude) } else { 0.0 });
            rotation * (a + noise) + shift
        })
        .collect();
    let atoms = AtomSet::with_mass_tolerance(
        reference.atoms().labels().to_vec(),
        reference.masses().to_vec(),
        positions,
        p.mass_tolerance,
    )?;
    if !p.resolve_permutation {
        return Ok(atoms);
    }
    let classes = reference.classes();
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    for class in 0..=classes.iter().copied().max().unwrap_or(0) {
        let members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == class).collect();
        let mut shuffled = members.clone();
        shuffled.shuffle(rng);
        for (&slot, &atom) in members.iter().zip(&shuffled) {
            order[slot] = atom;
        }
    }
    atoms.permuted(&order)
}

fn eckart(config: &ExperimentConfig, p: &EckartParams) -> Outcome {
    let reference = load_reference(p)?;
    let frame_options = FrameOptions {
        tolerance: p.frame_tolerance,
        ..FrameOptions::default()
    };
    let permutation_options = PermutationOptions {
        frame: frame_options,
        ..PermutationOptions::default()
    };
    let molecules: Vec<AtomSet> = match &p.molecule_xyz_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            vec![AtomSet::from_xyz(&text, p.mass_tolerance).map_err(|e| e.to_string())?]
        }
        None => (0..config.trials)
            .into_par_iter()
            .map(|i| random_molecule(&reference, p, &mut trial_rng(config.master_seed, i)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?,
    };

    let bound: Vec<(Vec<usize>, AtomSet, crate::eckart::EckartFrame)> = molecules
        .par_iter()
        .map(|molecule| {
            let order = if p.resolve_permutation {
                resolve_permutation_with(molecule, &reference, &permutation_options)?
            } else {
                (0..molecule.len()).collect()
            };
            let aligned = molecule.permuted(&order)?;
            let frame = bind_frame_with(&aligned, &reference, &frame_options)?;
            Ok((order, aligned, frame))
        })
        .collect::<Result<_, EckartError>>()
        .map_err(|e| e.to_string())?;

    let mut frame_header = vec!["molecule", "permutation", "origin_x", "origin_y", "origin_z"];
    frame_header.extend(["r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33"]);
    frame_header.extend(["translational_residual", "rotational_residual", "displacement_sum", "reduced"]);
    let mut worst_translational = 0.0f64;
    let mut worst_rotational = 0.0f64;
    let frame_rows: Vec<Vec<String>> = bound
        .iter()
        .enumerate()
        .map(|(i, (order, _, frame))| {
            worst_translational = worst_translational.max(frame.translational_residual);
            worst_rotational = worst_rotational.max(frame.rotational_residual);
            let mut row = vec![
                i.to_string(),
                order.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
            ];
            row.extend(frame.origin.iter().map(|v| num(*v)));
            let m = frame.rotation.matrix();
            for r in 0..3 {
                for c in 0..3 {
                    row.push(num(m[(r, c)]));
                }
            }
            row.push(num(frame.translational_residual));
            row.push(num(frame.rotational_residual));
            row.push(num(frame.displacement_sum()));
            row.push(frame.reduced.to_string());
            row
        })
        .collect();
    let frames = table(&frame_header, frame_rows)?;

    let displacement_rows = bound.iter().enumerate().flat_map(|(i, (_, atoms, frame))| {
        frame.displacements.iter().enumerate().map(move |(k, d)| {
            vec![
                i.to_string(),
                k.to_string(),
                atoms.labels()[k].clone(),
                num(d.x),
                num(d.y),
                num(d.z),
            ]
        })
    });
    let displacements = table(&["molecule", "atom", "label", "dx", "dy", "dz"], displacement_rows)?;

    let mut artifacts = vec![artifact("frames.csv", frames), artifact("displacements.csv", displacements)];
    let mut metrics = BTreeMap::from([
        ("molecules".to_string(), bound.len() as f64),
        ("max_translational_residual".to_string(), worst_translational),
        ("max_rotational_residual".to_string(), worst_rotational),
    ]);
    match symmetry_operations(&reference, 1e-6) {
        Ok(ops) => {
            metrics.insert("symmetry_order".into(), ops.len() as f64);
            let rows = ops.iter().enumerate().map(|(i, op)| {
                let mut row = vec![
                    i.to_string(),
                    op.determinant().round().to_string(),
                    op.permutation.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
                ];
                for r in 0..3 {
                    for c in 0..3 {
                        row.push(num(op.matrix[(r, c)]));
                    }
                }
                row
            });
            let header = [
                "operation", "determinant", "permutation", "q11", "q12", "q13", "q21", "q22", "q23", "q31", "q32", "q33",
            ];
            artifacts.push(artifact("symmetry.csv", table(&header, rows)?));
        }
        Err(EckartError::ContinuousAxis { .. }) => {}
        Err(e) => return Err(e.to_string()),
    }
    finish(artifacts, metrics)
}

fn ilcrs(p: &IlcrsParams) -> Outcome {
    let base = match (p.kappa, p.calibrate_density, p.calibrate_rate) {
        (Some(kappa), _, _) => ShiftCoefficient::new(kappa),
        (None, Some(density), Some(rate)) => calibrate_kappa(density, rate),
        _ => return Err("kappa or a calibration pair is required".into()),
    }
    .map_err(|e| e.to_string())?;
    let coeff = base
        .with_dispersion(p.dispersion)
        .with_reference_frequency(SPEED_OF_LIGHT / (p.reference_wavelength_nm * 1e-9))
        .map_err(|e| e.to_string())?;

    let sightline = match &p.sightline_path {
        Some(path) => Sightline::read_csv(open(path)?, p.interpolation),
        None => Sightline::uniform(p.uniform_density, p.path_length_m),
    }
    .map_err(|e| e.to_string())?;
    let integrated = redshift_along(&sightline, &coeff);
    let z = p.z.unwrap_or(integrated);

    let lines: Vec<SpectralLine> = match &p.spectrum_path {
        Some(path) => read_spectrum_csv(open(path)?).map_err(|e| e.to_string())?,
        None => p
            .lines_nm
            .iter()
            .map(|&wavelength_nm| SpectralLine {
                wavelength_nm,
                amplitude: 1.0,
            })
            .collect(),
    };
    let report = compare_to_doppler(&lines, z, &coeff).map_err(|e| e.to_string())?;
    let shifted = crate::ilcrs::apply_redshift(&lines, z, &coeff).map_err(|e| e.to_string())?;
    let mut spectrum = Vec::new();
    write_spectrum_csv(&shifted, &mut spectrum).map_err(|e| e.to_string())?;
    let doppler = table(
        &["wavelength_nm", "raman_shift", "doppler_shift", "deviation"],
        report.lines.iter().map(|l| {
            vec![
                num(l.wavelength_nm),
                num(l.raman_shift),
                num(l.doppler_shift),
                num(l.deviation),
            ]
        }),
    )?;

    let stimulated_rows = p
        .intensities
        .iter()
        .map(|&i| {
            let s = stimulated_shift(i, p.stimulated_proportionality).map_err(|e| e.to_string())?;
            Ok(vec![i.to_string(), num(s)])
        })
        .collect::<Result<Vec<_>, String>>()?;
    let stimulated = table(&["intensity_w_per_m2", "relative_shift"], stimulated_rows)?;

    let pulse = PulseModel::new(
        p.pulse_length_s,
        p.collision_time_s,
        p.raman_frequency_hz,
        p.intensities.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE),
    )
    .map_err(|e| e.to_string())?;
    let check = ultrashort_check(&pulse, p.margin);
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let metrics = BTreeMap::from([
        ("kappa_m2".to_string(), coeff.kappa),
        ("column_density_per_m2".to_string(), sightline.column_density()),
        ("z_integrated".to_string(), integrated),
        ("z_applied".to_string(), z),
        ("max_doppler_deviation".to_string(), report.max_deviation),
        ("collision_ok".to_string(), flag(check.collision_ok)),
        ("beat_ok".to_string(), flag(check.beat_ok)),
        ("ultrashort_ok".to_string(), flag(check.overall)),
    ]);
    finish(
        vec![
            artifact("spectrum.csv", spectrum),
            artifact("doppler.csv", doppler),
            artifact("stimulated.csv", stimulated),
        ],
        metrics,
    )
}

fn soliton(p: &SolitonParams) -> Outcome {
    let response = match (&p.polynomial, &p.response_path) {
        (_, Some(path)) => RotationResponse::read_csv(open(path)?),
        (Some(c), None) => RotationResponse::polynomial(c.clone()),
        (None, None) => return Err("a polynomial or response_path is required".into()),
    }
    .map_err(|e| e.to_string())?;
    let root = find_stable_alpha(&response, (p.alpha_min, p.alpha_max), p.tolerance).map_err(|e| e.to_string())?;
    let profile =
        FilamentProfile::new(p.period_m, p.evanescent_radius_m, p.critical_flux_w).map_err(|e| e.to_string())?;
    let candidates: Vec<_> = quantized_radii(&profile, p.k_max)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|c| c.with_alpha0(root.alpha0))
        .collect();
    let mut candidates_csv = Vec::new();
    write_candidates_csv(&candidates, &mut candidates_csv).map_err(|e| e.to_string())?;
    let root_csv = table(
        &["alpha0_rad", "f_value", "slope"],
        [vec![num(root.alpha0), num(root.f_value), num(root.slope)]],
    )?;
    let mut metrics = BTreeMap::from([
        ("alpha0_rad".to_string(), root.alpha0),
        ("f_residual".to_string(), (root.f_value - 1.0).abs()),
        ("radius_step_m".to_string(), profile.radius_step()),
        ("candidates".to_string(), candidates.len() as f64),
    ]);
    if let Some(target) = p.target_radius_m {
        let nearest = nearest_admissible(&profile, target).map_err(|e| e.to_string())?;
        metrics.insert("nearest_radius_m".into(), nearest.radius);
        metrics.insert("nearest_winding".into(), nearest.winding as f64);
    }
    finish(
        vec![artifact("candidates.csv", candidates_csv), artifact("root.csv", root_csv)],
        metrics,
    )
}
