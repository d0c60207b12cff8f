//! Eckart frames for semi-rigid molecules.
//!
//! A reference configuration (points `a, b, c, …` with their masses, centred
//! on their centre of mass) is bound to a distorted molecule (atoms
//! `A, B, C, …`) by an origin and a rotation. The origin is the molecular
//! centre of mass, which makes `Σ m·aA = 0`. The rotation is the one for which
//! `Σ Oa × m·aA = 0`.
//!
//! Lab positions decompose as `X_i = origin + R (a_i + d_i)` where `d_i` is the
//! displacement of atom `i` expressed in the bound frame.

mod assignment;
mod permutation;
mod symmetry;

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{Matrix3, Matrix4, Rotation3, SymmetricEigen, Unit, UnitQuaternion, Vector3};
use thiserror::Error;

pub use assignment::solve_assignment;
pub use permutation::{
    displacement_objective, resolve_permutation, resolve_permutation_with, PermutationOptions,
    PermutationStrategy,
};
pub use symmetry::{symmetry_operations, SymmetryOperation};

pub type Vec3 = Vector3<f64>;

/// Default relative tolerance for two masses to count as equal.
pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-6;
/// Default bound on the rotational residual `|Σ a × m d|`.
pub const DEFAULT_FRAME_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EckartError {
    #[error("atom set is empty")]
    Empty,
    #[error("atom {index}: mass must be positive and finite, got {mass}")]
    InvalidMass { index: usize, mass: f64 },
    #[error("atom {index}: coordinates must be finite")]
    InvalidPosition { index: usize },
    #[error("molecule has {molecule} atoms but the reference has {reference}")]
    CountMismatch { molecule: usize, reference: usize },
    #[error("atom {index}: molecule mass {molecule} does not match reference mass {reference}")]
    MassMismatch {
        index: usize,
        molecule: f64,
        reference: f64,
    },
    #[error("labels, masses and positions have different lengths")]
    LengthMismatch,
    #[error("no frame satisfies the rotational condition; best residual {residual:e}")]
    FrameNotFound { residual: f64 },
    #[error("configuration has a continuous rotation axis {axis:?}")]
    ContinuousAxis { axis: Option<[f64; 3]> },
    #[error("permutation of {len} atoms is invalid for this molecule")]
    InvalidPermutation { len: usize },
    #[error("class of {size} equivalent atoms exceeds the exhaustive search cap of {cap}")]
    ClassTooLarge { size: usize, cap: usize },
    #[error("xyz line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Assigns class ids so that atoms whose masses agree within `tolerance`
/// (relative) share a class. Ids are numbered in order of first appearance.
fn mass_classes(masses: &[f64], tolerance: f64) -> Vec<usize> {
    let mut representatives: Vec<f64> = Vec::new();
    masses
        .iter()
        .map(|&m| {
            match representatives
                .iter()
                .position(|&r| (r - m).abs() <= tolerance * r.max(m))
            {
                Some(class) => class,
                None => {
                    representatives.push(m);
                    representatives.len() - 1
                }
            }
        })
        .collect()
}

fn validate_atoms(labels: &[String], masses: &[f64], positions: &[Vec3]) -> Result<(), EckartError> {
    if masses.is_empty() {
        return Err(EckartError::Empty);
    }
    if labels.len() != masses.len() || positions.len() != masses.len() {
        return Err(EckartError::LengthMismatch);
    }
    for (index, &mass) in masses.iter().enumerate() {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(EckartError::InvalidMass { index, mass });
        }
    }
    if let Some(index) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(EckartError::InvalidPosition { index });
    }
    Ok(())
}

/// Atoms of a molecule in the lab frame (masses in amu, positions in Å).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    labels: Vec<String>,
    masses: Vec<f64>,
    positions: Vec<Vec3>,
    classes: Vec<usize>,
    mass_tolerance: f64,
}

impl AtomSet {
    pub fn new(labels: Vec<String>, masses: Vec<f64>, positions: Vec<Vec3>) -> Result<Self, EckartError> {
        Self::with_mass_tolerance(labels, masses, positions, DEFAULT_MASS_TOLERANCE)
    }

    pub fn with_mass_tolerance(
        labels: Vec<String>,
        masses: Vec<f64>,
        positions: Vec<Vec3>,
        mass_tolerance: f64,
    ) -> Result<Self, EckartError> {
        validate_atoms(&labels, &masses, &positions)?;
        let classes = mass_classes(&masses, mass_tolerance);
        Ok(Self {
            labels,
            masses,
            positions,
            classes,
            mass_tolerance,
        })
    }

    /// Unlabelled atoms, named after their index.
    pub fn from_masses(masses: Vec<f64>, positions: Vec<Vec3>) -> Result<Self, EckartError> {
        let labels = (0..masses.len()).map(|i| format!("X{i}")).collect();
        Self::new(labels, masses, positions)
    }

    /// Parses the extended XYZ form: atom count, comment, then
    /// `label mass_amu x y z` per atom.
    pub fn from_xyz(text: &str, mass_tolerance: f64) -> Result<Self, EckartError> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, message: String| EckartError::Parse {
            line: line + 1,
            message,
        };
        let (n_line, count_text) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing atom count".into()))?;
        let count: usize = count_text
            .trim()
            .parse()
            .map_err(|_| parse_err(n_line, format!("atom count `{}` is not an integer", count_text.trim())))?;
        lines.next().ok_or_else(|| parse_err(1, "missing comment line".into()))?;
        let mut labels = Vec::with_capacity(count);
        let mut masses = Vec::with_capacity(count);
        let mut positions = Vec::with_capacity(count);
        for (line_no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if labels.len() == count {
                return Err(parse_err(line_no, format!("more than {count} atom lines")));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(parse_err(
                    line_no,
                    format!("expected `label mass x y z`, found {} fields", fields.len()),
                ));
            }
            let mut numbers = [0.0; 4];
            for (slot, text) in numbers.iter_mut().zip(&fields[1..]) {
                *slot = text
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("`{text}` is not a number")))?;
            }
            labels.push(fields[0].to_string());
            masses.push(numbers[0]);
            positions.push(Vec3::new(numbers[1], numbers[2], numbers[3]));
        }
        if labels.len() != count {
            return Err(parse_err(
                text.lines().count().saturating_sub(1),
                format!("expected {count} atoms, found {}", labels.len()),
            ));
        }
        Self::with_mass_tolerance(labels, masses, positions, mass_tolerance)
    }

    pub fn to_xyz(&self, comment: &str) -> String {
        let mut out = format!("{}\n{}\n", self.len(), comment);
        for ((label, mass), p) in self.labels.iter().zip(&self.masses).zip(&self.positions) {
            let _ = writeln!(out, "{label} {mass} {} {} {}", p.x, p.y, p.z);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn mass_tolerance(&self) -> f64 {
        self.mass_tolerance
    }

    pub fn center_of_mass(&self) -> Vec3 {
        center_of_mass(&self.positions, &self.masses)
    }

    /// Reorders atoms: atom `i` of the result is atom `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self, EckartError> {
        if !is_permutation(order, self.len()) {
            return Err(EckartError::InvalidPermutation { len: order.len() });
        }
        let masses: Vec<f64> = order.iter().map(|&i| self.masses[i]).collect();
        Ok(Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            classes: mass_classes(&masses, self.mass_tolerance),
            masses,
            mass_tolerance: self.mass_tolerance,
        })
    }

    /// Applies the rigid motion `x -> rotation x + translation`.
    pub fn transformed(&self, rotation: &Rotation3<f64>, translation: &Vec3) -> Self {
        Self {
            positions: self.positions.iter().map(|p| rotation * p + translation).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn is_permutation(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// Reference configuration expressed in its own frame, centred on its
/// centre of mass.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumConfiguration {
    atoms: AtomSet,
}

impl EquilibriumConfiguration {
    /// Takes the atoms as given and recentres them on their centre of mass.
    pub fn from_atoms(atoms: AtomSet) -> Self {
        let com = atoms.center_of_mass();
        let positions = atoms.positions.iter().map(|p| p - com).collect();
        Self {
            atoms: AtomSet { positions, ..atoms },
        }
    }

    pub fn atoms(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.atoms.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.atoms.masses
    }

    pub fn classes(&self) -> &[usize] {
        &self.atoms.classes
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Mass-weighted centroid; zero up to round-off.
    pub fn centroid_residual(&self) -> f64 {
        self.atoms
            .positions
            .iter()
            .zip(&self.atoms.masses)
            .map(|(p, m)| p * *m)
            .sum::<Vec3>()
            .norm()
    }

    pub(crate) fn shape(&self) -> Shape {
        classify_shape(self.positions(), 1e-10)
    }
}

/// Mass-weighted mean of `points`.
pub fn center_of_mass(points: &[Vec3], masses: &[f64]) -> Vec3 {
    let total: f64 = masses.iter().sum();
    let weighted: Vec3 = points.iter().zip(masses).map(|(p, m)| p * *m).sum();
    weighted / total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Shape {
    /// All points at the origin.
    Point,
    /// All points on a line through the origin with this direction.
    Linear(Vec3),
    General,
}

/// Collinearity test: every point within `relative_tol * max |p|` of the
/// principal axis through the origin.
pub(crate) fn classify_shape(points: &[Vec3], relative_tol: f64) -> Shape {
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Shape::Point;
    }
    let scatter: Matrix3<f64> = points.iter().map(|p| p * p.transpose()).sum();
    let eigen = SymmetricEigen::new(scatter);
    let (axis_index, _) = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let mut axis: Vec3 = eigen.eigenvectors.column(axis_index).into_owned().normalize();
    // Orient the axis towards the first point off the origin.
    if let Some(p) = points.iter().find(|p| p.dot(&axis).abs() > relative_tol * scale) {
        if p.dot(&axis) < 0.0 {
            axis = -axis;
        }
    }
    let off_axis = points
        .iter()
        .map(|p| (p - axis * p.dot(&axis)).norm())
        .fold(0.0, f64::max);
    if off_axis <= relative_tol * scale {
        Shape::Linear(axis)
    } else {
        Shape::General
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOptions {
    /// Bound on `|Σ a × m d|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_FRAME_TOLERANCE,
            max_iterations: 50,
        }
    }
}

/// Reference configuration bound to a molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct EckartFrame {
    pub origin: Vec3,
    /// Maps bound-frame coordinates to lab directions.
    pub rotation: Rotation3<f64>,
    /// Displacement of each atom from its reference point, in the bound frame.
    pub displacements: Vec<Vec3>,
    /// `|Σ m d|`.
    pub translational_residual: f64,
    /// `|Σ a × m d|`.
    pub rotational_residual: f64,
    /// True for a collinear reference, where the axial component of the
    /// rotational condition is void and only two components are solved.
    pub reduced: bool,
}

impl EckartFrame {
    /// Displacements rotated into the lab frame.
    pub fn lab_displacements(&self) -> Vec<Vec3> {
        self.displacements.iter().map(|d| self.rotation * d).collect()
    }

    /// `Σ |d_i|`, the quantity minimized when resolving equal-mass atoms.
    pub fn displacement_sum(&self) -> f64 {
        self.displacements.iter().map(|d| d.norm()).sum()
    }

    /// One-row CSV: origin, row-major rotation matrix and residuals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EckartError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["origin_x", "origin_y", "origin_z"].map(String::from).to_vec();
        for r in 1..=3 {
            for c in 1..=3 {
                header.push(format!("r{r}{c}"));
            }
        }
        header.extend(["translational_residual", "rotational_residual", "reduced"].map(String::from));
        wtr.write_record(&header)?;
        let m = self.rotation.matrix();
        let mut row: Vec<String> = self.origin.iter().map(|v| v.to_string()).collect();
        for r in 0..3 {
            for c in 0..3 {
                row.push(m[(r, c)].to_string());
            }
        }
        row.push(self.translational_residual.to_string());
        row.push(self.rotational_residual.to_string());
        row.push(self.reduced.to_string());
        wtr.write_record(&row)?;
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Per-atom displacement table in the bound frame.
    pub fn write_displacements_csv<W: Write>(&self, atoms: &AtomSet, writer: W) -> Result<(), EckartError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["index", "label", "mass_amu", "dx", "dy", "dz"])?;
        for (i, d) in self.displacements.iter().enumerate() {
            wtr.write_record([
                i.to_string(),
                atoms.labels[i].clone(),
                atoms.masses[i].to_string(),
                d.x.to_string(),
                d.y.to_string(),
                d.z.to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn check_compatible(molecule: &AtomSet, reference: &EquilibriumConfiguration) -> Result<(), EckartError> {
    if molecule.len() != reference.len() {
        return Err(EckartError::CountMismatch {
            molecule: molecule.len(),
            reference: reference.len(),
        });
    }
    let tol = molecule.mass_tolerance;
    for (index, (&m, &r)) in molecule.masses.iter().zip(reference.masses()).enumerate() {
        if (m - r).abs() > tol * m.max(r) {
            return Err(EckartError::MassMismatch {
                index,
                molecule: m,
                reference: r,
            });
        }
    }
    Ok(())
}

pub fn bind_frame(molecule: &AtomSet, reference: &EquilibriumConfiguration) -> Result<EckartFrame, EckartError> {
    bind_frame_with(molecule, reference, &FrameOptions::default())
}

/// Binds `reference` to `molecule`, atom `i` to reference point `i`.
///
/// The rotation starts from the quaternion eigen-solution that maximizes
/// `Σ m y·R a` (equivalently minimizes the mass-weighted squared
/// displacement), which is a stationary point of the rotational condition,
/// and is then polished by Newton steps on `Σ a × m Rᵀ y = 0`.
pub fn bind_frame_with(
    molecule: &AtomSet,
    reference: &EquilibriumConfiguration,
    options: &FrameOptions,
) -> Result<EckartFrame, EckartError> {
    check_compatible(molecule, reference)?;
    let origin = molecule.center_of_mass();
    let relative: Vec<Vec3> = molecule.positions.iter().map(|x| x - origin).collect();
    let masses = reference.masses();
    let refs = reference.positions();

    let (rotation, reduced) = match reference.shape() {
        Shape::Point => (Rotation3::identity(), true),
        Shape::Linear(axis) => (collinear_rotation(&axis, refs, &relative, masses)?, true),
        Shape::General => {
            let start = quaternion_rotation(refs, &relative, masses);
            (newton_polish(start, refs, &relative, masses, options)?, false)
        }
    };
    Ok(assemble(origin, rotation, refs, &relative, masses, reduced))
}

fn assemble(
    origin: Vec3,
    rotation: Rotation3<f64>,
    refs: &[Vec3],
    relative: &[Vec3],
    masses: &[f64],
    reduced: bool,
) -> EckartFrame {
    let displacements: Vec<Vec3> = relative
        .iter()
        .zip(refs)
        .map(|(y, a)| rotation.inverse_transform_vector(y) - a)
        .collect();
    let translational_residual = displacements
        .iter()
        .zip(masses)
        .map(|(d, m)| d * *m)
        .sum::<Vec3>()
        .norm();
    let rotational_residual = rotational_condition(refs, &displacements, masses).norm();
    EckartFrame {
        origin,
        rotation,
        displacements,
        translational_residual,
        rotational_residual,
        reduced,
    }
}

fn rotational_condition(refs: &[Vec3], displacements: &[Vec3], masses: &[f64]) -> Vec3 {
    refs.iter()
        .zip(displacements)
        .zip(masses)
        .map(|((a, d), m)| a.cross(&(d * *m)))
        .sum()
}

/// Horn's quaternion solution for the rotation `R` maximizing `Σ m y·R a`.
fn quaternion_rotation(refs: &[Vec3], relative: &[Vec3], masses: &[f64]) -> Rotation3<f64> {
    // s[(i, j)] = Σ m a_i y_j
    let s: Matrix3<f64> = refs
        .iter()
        .zip(relative)
        .zip(masses)
        .map(|((a, y), m)| a * y.transpose() * *m)
        .sum();
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eigen = SymmetricEigen::new(n);
    let best = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let q = eigen.eigenvectors.column(best);
    let quaternion = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    quaternion.to_rotation_matrix()
}

/// Newton iteration on `g(R) = Σ a × m Rᵀ y` with updates `R <- R exp([w]x)`.
///
/// The linearization is `g(w) ≈ g - J w` with
/// `J = Σ m (a·z) I - Σ m z aᵀ`, `z = Rᵀ y`.
fn newton_polish(
    mut rotation: Rotation3<f64>,
    refs: &[Vec3],
    relative: &[Vec3],
    masses: &[f64],
    options: &FrameOptions,
) -> Result<Rotation3<f64>, EckartError> {
    let residual_of = |rotation: &Rotation3<f64>| -> (Vec3, Matrix3<f64>) {
        let mut g = Vec3::zeros();
        let mut j = Matrix3::zeros();
        for ((a, y), &m) in refs.iter().zip(relative).zip(masses) {
            let z = rotation.inverse_transform_vector(y);
            g += a.cross(&z) * m;
            j += Matrix3::identity() * (m * a.dot(&z)) - z * a.transpose() * m;
        }
        (g, j)
    };
    let (mut g, mut j) = residual_of(&rotation);
    let mut best = (g.norm(), rotation);
    for _ in 0..options.max_iterations {
        if g.norm() <= options.tolerance * 1e-2 {
            break;
        }
        let step = match j.svd(true, true).solve(&g, 1e-14 * j.norm().max(1.0)) {
            Ok(step) => step,
            Err(_) => break,
        };
        rotation *= Rotation3::new(step);
        (g, j) = residual_of(&rotation);
        if g.norm() < best.0 {
            best = (g.norm(), rotation);
        } else if step.norm() < 1e-15 {
            break;
        }
    }
    if best.0 <= options.tolerance {
        Ok(best.1)
    } else {
        Err(EckartError::FrameNotFound { residual: best.0 })
    }
}

/// Collinear reference along `axis`: only the axis direction is fixed, by
/// `R axis ∥ Σ m s_i y_i` with `s_i = a_i·axis`; spin about the axis is set
/// to the minimal rotation.
fn collinear_rotation(
    axis: &Vec3,
    refs: &[Vec3],
    relative: &[Vec3],
    masses: &[f64],
) -> Result<Rotation3<f64>, EckartError> {
    let target: Vec3 = refs
        .iter()
        .zip(relative)
        .zip(masses)
        .map(|((a, y), m)| y * (m * a.dot(axis)))
        .sum();
    let scale: f64 = refs
        .iter()
        .zip(relative)
        .zip(masses)
        .map(|((a, y), m)| m * a.norm() * y.norm())
        .sum();
    if target.norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return Err(EckartError::FrameNotFound { residual: f64::NAN });
    }
    let direction = target.normalize();
    Ok(Rotation3::rotation_between(axis, &direction).unwrap_or_else(|| {
        // Antiparallel: half turn about any axis perpendicular to `axis`.
        let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        Rotation3::from_axis_angle(&Unit::new_normalize(axis.cross(&helper)), std::f64::consts::PI)
    }))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        Rotation3::new(axis.normalize() * rng.random_range(0.0..std::f64::consts::PI))
    }

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn water() -> EquilibriumConfiguration {
        EquilibriumConfiguration::from_atoms(
            AtomSet::new(
                vec!["O".into(), "H".into(), "H".into()],
                vec![16.0, 1.0, 1.0],
                vec![
                    Vec3::new(0.0, 0.0, -0.0656),
                    Vec3::new(0.0, 0.757, 0.5205),
                    Vec3::new(0.0, -0.757, 0.5205),
                ],
            )
            .unwrap(),
        )
    }

    /// Distorts `reference`, then moves it rigidly into the lab.
    pub fn distorted(
        reference: &EquilibriumConfiguration,
        amplitude: f64,
        rng: &mut ChaCha8Rng,
    ) -> (AtomSet, Rotation3<f64>, Vec3) {
        let rotation = random_rotation(rng);
        let shift = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let positions = reference
            .positions()
            .iter()
            .map(|a| {
                let mut noise = || if amplitude > 0.0 { rng.random_range(-amplitude..amplitude) } else { 0.0 };
                let noise = Vec3::new(noise(), noise(), noise());
                rotation * (a + noise) + shift
            })
            .collect();
        let atoms = AtomSet::new(
            reference.atoms().labels().to_vec(),
            reference.masses().to_vec(),
            positions,
        )
        .unwrap();
        (atoms, rotation, shift)
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use num::{BigRational, ToPrimitive};
    use rand::Rng;

    #[test]
    fn center_of_mass_simple_cases() {
        let p = Vec3::new(1.5, -2.0, 3.0);
        assert_eq!(center_of_mass(&[p], &[7.0]), p);
        let pair = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert_eq!(center_of_mass(&pair, &[2.0, 2.0]), Vec3::zeros());
    }

    #[test]
    fn center_of_mass_matches_exact_rational_sum() {
        let mut rng = rng(4);
        for _ in 0..20 {
            let masses: Vec<f64> = (0..5).map(|_| rng.random_range(1.0..40.0)).collect();
            let points: Vec<Vec3> = (0..5)
                .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            let got = center_of_mass(&points, &masses);
            let total = masses
                .iter()
                .map(|m| BigRational::from_float(*m).unwrap())
                .fold(BigRational::from_integer(0.into()), |a, b| a + b);
            for axis in 0..3 {
                let weighted = points
                    .iter()
                    .zip(&masses)
                    .map(|(p, m)| BigRational::from_float(*m).unwrap() * BigRational::from_float(p[axis]).unwrap())
                    .fold(BigRational::from_integer(0.into()), |a, b| a + b);
                let exact = (weighted / total.clone()).to_f64().unwrap();
                let scale = points.iter().map(|p| p[axis].abs()).fold(0.0, f64::max);
                assert!((got[axis] - exact).abs() <= 1e-13 * scale, "{} vs {exact}", got[axis]);
            }
        }
    }

    #[test]
    fn rigid_motion_gives_zero_displacement() {
        let reference = water();
        let mut rng = rng(1);
        let (molecule, rotation, shift) = distorted(&reference, 0.0, &mut rng);
        let frame = bind_frame(&molecule, &reference).unwrap();
        assert!(frame.displacements.iter().all(|d| d.norm() < 1e-10));
        assert!((frame.origin - shift).norm() < 1e-12);
        // Water is C2v; the frame is the applied motion up to a symmetry element.
        let relative = rotation.inverse() * frame.rotation;
        let ops = symmetry_operations(&reference, 1e-8).unwrap();
        assert!(ops
            .iter()
            .any(|op| (op.matrix - relative.matrix()).norm() < 1e-9));
    }

    #[test]
    fn diatomic_stretch() {
        let reference = EquilibriumConfiguration::from_atoms(
            AtomSet::from_masses(vec![14.0, 14.0], vec![Vec3::new(-0.55, 0.0, 0.0), Vec3::new(0.55, 0.0, 0.0)]).unwrap(),
        );
        let molecule =
            AtomSet::from_masses(vec![14.0, 14.0], vec![Vec3::new(-0.6, 0.0, 0.0), Vec3::new(0.6, 0.0, 0.0)]).unwrap();
        let frame = bind_frame(&molecule, &reference).unwrap();
        assert!(frame.reduced);
        assert!((frame.rotation.matrix() - Matrix3::identity()).norm() < 1e-15);
        assert!((frame.displacements[0] - Vec3::new(-0.05, 0.0, 0.0)).norm() < 1e-15);
        assert!((frame.displacements[1] - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn collinear_reference_with_bent_molecule() {
        let reference = EquilibriumConfiguration::from_atoms(
            AtomSet::from_masses(
                vec![16.0, 12.0, 16.0],
                vec![Vec3::new(-1.16, 0.0, 0.0), Vec3::zeros(), Vec3::new(1.16, 0.0, 0.0)],
            )
            .unwrap(),
        );
        let mut rng = rng(8);
        for _ in 0..10 {
            let (molecule, _, _) = distorted(&reference, 0.05, &mut rng);
            let frame = bind_frame(&molecule, &reference).unwrap();
            assert!(frame.reduced);
            assert!(frame.translational_residual < 1e-10);
            assert!(frame.rotational_residual < 1e-10);
        }
    }

    #[test]
    fn bent_triatomic_satisfies_conditions() {
        let reference = water();
        let mut rng = rng(2);
        for _ in 0..50 {
            let (molecule, _, _) = distorted(&reference, 0.01, &mut rng);
            let frame = bind_frame(&molecule, &reference).unwrap();
            assert!(!frame.reduced);
            assert!(frame.translational_residual < 1e-10);
            assert!(frame.rotational_residual < 1e-10);
            // Reconstruct the lab positions.
            for ((x, a), d) in molecule.positions().iter().zip(reference.positions()).zip(&frame.displacements) {
                assert!((frame.origin + frame.rotation * (a + d) - x).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_inputs() {
        let reference = water();
        let two = AtomSet::from_masses(vec![16.0, 1.0], vec![Vec3::zeros(), Vec3::x()]).unwrap();
        assert!(matches!(bind_frame(&two, &reference), Err(EckartError::CountMismatch { .. })));
        let wrong = AtomSet::from_masses(vec![16.0, 1.0, 2.0], vec![Vec3::zeros(), Vec3::x(), Vec3::y()]).unwrap();
        assert!(matches!(
            bind_frame(&wrong, &reference),
            Err(EckartError::MassMismatch { index: 2, .. })
        ));
        assert!(AtomSet::from_masses(vec![0.0], vec![Vec3::zeros()]).is_err());
        assert!(AtomSet::from_masses(vec![], vec![]).is_err());
    }

    #[test]
    fn mass_classes_respect_tolerance() {
        assert_eq!(mass_classes(&[1.0, 16.0, 1.0 + 1e-9, 12.0, 16.0], 1e-6), vec![0, 1, 0, 2, 1]);
        assert_eq!(mass_classes(&[1.0, 1.001], 1e-6), vec![0, 1]);
        assert_eq!(mass_classes(&[1.0, 1.001], 1e-2), vec![0, 0]);
    }

    #[test]
    fn xyz_round_trip_and_errors() {
        let text = "3\nwater\nO 15.995 0 0 -0.0656\nH 1.008 0 0.757 0.5205\nH 1.008 0 -0.757 0.5205\n";
        let atoms = AtomSet::from_xyz(text, 1e-6).unwrap();
        assert_eq!(atoms.len(), 3);
        assert_eq!(atoms.classes(), &[0, 1, 1]);
        assert_eq!(atoms.labels()[0], "O");
        let again = AtomSet::from_xyz(&atoms.to_xyz("water"), 1e-6).unwrap();
        assert_eq!(again, atoms);
        assert!(matches!(AtomSet::from_xyz("x\n", 1e-6), Err(EckartError::Parse { line: 1, .. })));
        assert!(matches!(
            AtomSet::from_xyz("2\nc\nH 1 0 0 0\n", 1e-6),
            Err(EckartError::Parse { .. })
        ));
        assert!(matches!(
            AtomSet::from_xyz("1\nc\nH 1 0 zero 0\n", 1e-6),
            Err(EckartError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn frame_csv_layout() {
        let reference = water();
        let (molecule, _, _) = distorted(&reference, 0.01, &mut rng(3));
        let frame = bind_frame(&molecule, &reference).unwrap();
        let mut buf = Vec::new();
        frame.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("origin_x,origin_y,origin_z,r11,"));
        assert_eq!(text.lines().count(), 2);
        let mut buf = Vec::new();
        frame.write_displacements_csv(&molecule, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
