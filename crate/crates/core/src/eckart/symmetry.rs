//! Point-group operations of a reference configuration.
//!
//! An operation is an orthogonal matrix `Q` that maps every reference point
//! onto a point of the same mass class. Both proper rotations and
//! improper operations (reflections, rotoreflections) are reported.

use nalgebra::Matrix3;

use super::{EckartError, EquilibriumConfiguration, Shape, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryOperation {
    pub matrix: Matrix3<f64>,
    /// `permutation[i] = j` when `Q a_i ≈ a_j`.
    pub permutation: Vec<usize>,
}

impl SymmetryOperation {
    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn is_proper(&self) -> bool {
        self.determinant() > 0.0
    }

    /// Applies `self` first, then `other`.
    pub fn then(&self, other: &SymmetryOperation) -> SymmetryOperation {
        SymmetryOperation {
            matrix: other.matrix * self.matrix,
            permutation: self.permutation.iter().map(|&j| other.permutation[j]).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &j)| i == j)
            && (self.matrix - Matrix3::identity()).norm() < 1e-8
    }
}

/// Projects a near-orthogonal matrix onto O(3), keeping its determinant sign.
fn orthogonalize(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    Some(svd.u? * svd.v_t?)
}

/// Enumerates all operations with every point mapped within `tolerance`
/// (absolute, in position units). The identity comes first.
///
/// Linear and single-point references have continuous symmetry and are
/// rejected with [`EckartError::ContinuousAxis`].
pub fn symmetry_operations(
    reference: &EquilibriumConfiguration,
    tolerance: f64,
) -> Result<Vec<SymmetryOperation>, EckartError> {
    let points = reference.positions();
    let classes = reference.classes();
    match reference.shape() {
        Shape::Point => return Err(EckartError::ContinuousAxis { axis: None }),
        Shape::Linear(axis) => return Err(EckartError::ContinuousAxis { axis: Some([axis.x, axis.y, axis.z]) }),
        Shape::General => {}
    }

    // Two anchors spanning a plane: the farthest point and the one most
    // transverse to it.
    let norms: Vec<f64> = points.iter().map(|p| p.norm()).collect();
    let p1 = (0..points.len())
        .max_by(|&i, &j| norms[i].total_cmp(&norms[j]))
        .expect("non-empty");
    let p2 = (0..points.len())
        .max_by(|&i, &j| {
            points[p1]
                .cross(&points[i])
                .norm()
                .total_cmp(&points[p1].cross(&points[j]).norm())
        })
        .expect("non-empty");
    let (a1, a2) = (points[p1], points[p2]);
    let basis = Matrix3::from_columns(&[a1, a2, a1.cross(&a2)]);
    let basis_inverse = basis.try_inverse().ok_or(EckartError::ContinuousAxis { axis: None })?;

    let matches_anchor = |anchor: usize, candidate: usize| {
        classes[anchor] == classes[candidate] && (norms[anchor] - norms[candidate]).abs() <= tolerance
    };
    let dot = a1.dot(&a2);
    let length_scale = norms[p1].max(1.0);

    let mut operations: Vec<SymmetryOperation> = Vec::new();
    for q1 in (0..points.len()).filter(|&q| matches_anchor(p1, q)) {
        for q2 in (0..points.len()).filter(|&q| q != q1 && matches_anchor(p2, q)) {
            let (b1, b2) = (points[q1], points[q2]);
            if (b1.dot(&b2) - dot).abs() > 2.0 * tolerance * length_scale {
                continue;
            }
            for sign in [1.0, -1.0] {
                let image = Matrix3::from_columns(&[b1, b2, b1.cross(&b2) * sign]);
                let Some(q) = orthogonalize(&(image * basis_inverse)) else {
                    continue;
                };
                if let Some(permutation) = image_permutation(&q, points, classes, tolerance) {
                    if !operations.iter().any(|op| op.permutation == permutation && (op.matrix - q).norm() < 1e-6) {
                        operations.push(SymmetryOperation { matrix: q, permutation });
                    }
                }
            }
        }
    }
    operations.sort_by(|x, y| {
        x.permutation
            .cmp(&y.permutation)
            .then_with(|| y.is_proper().cmp(&x.is_proper()))
            .then_with(|| {
                x.matrix
                    .iter()
                    .zip(y.matrix.iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    Ok(operations)
}

/// Where `q` sends each point, if every image lands on a same-class point.
fn image_permutation(q: &Matrix3<f64>, points: &[Vec3], classes: &[usize], tolerance: f64) -> Option<Vec<usize>> {
    let mut taken = vec![false; points.len()];
    let mut permutation = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let image = q * p;
        let j = (0..points.len())
            .filter(|&j| !taken[j] && classes[j] == classes[i])
            .min_by(|&j, &k| (points[j] - image).norm().total_cmp(&(points[k] - image).norm()))?;
        if (points[j] - image).norm() > tolerance {
            return None;
        }
        taken[j] = true;
        permutation.push(j);
    }
    Some(permutation)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::water;
    use super::super::AtomSet;
    use super::*;

    fn config(masses: Vec<f64>, positions: Vec<Vec3>) -> EquilibriumConfiguration {
        EquilibriumConfiguration::from_atoms(AtomSet::from_masses(masses, positions).unwrap())
    }

    /// Independent count: class-preserving permutations that keep all
    /// pairwise distances and distances to the centre. Each such permutation
    /// fixes one orthogonal map for a 3-D reference and two (the map and its
    /// composition with the plane reflection) for a planar one.
    fn distance_oracle(reference: &EquilibriumConfiguration, tolerance: f64) -> usize {
        let points = reference.positions();
        let classes = reference.classes();
        let n = points.len();
        let mut count = 0;
        let mut perm: Vec<usize> = (0..n).collect();
        fn go(
            k: usize,
            perm: &mut Vec<usize>,
            points: &[Vec3],
            classes: &[usize],
            tolerance: f64,
            count: &mut usize,
        ) {
            let n = points.len();
            if k == n {
                *count += 1;
                return;
            }
            for c in k..n {
                perm.swap(k, c);
                let j = perm[k];
                let ok = classes[j] == classes[k]
                    && (points[j].norm() - points[k].norm()).abs() <= tolerance
                    && (0..k).all(|i| {
                        ((points[perm[i]] - points[j]).norm() - (points[i] - points[k]).norm()).abs() <= tolerance
                    });
                if ok {
                    go(k + 1, perm, points, classes, tolerance, count);
                }
                perm.swap(k, c);
            }
        }
        go(0, &mut perm, points, classes, tolerance, &mut count);
        let scatter: Matrix3<f64> = points.iter().map(|p| p * p.transpose()).sum();
        let smallest = scatter.symmetric_eigenvalues().min();
        let planar = smallest.abs() <= 1e-12 * scatter.norm();
        if planar {
            2 * count
        } else {
            count
        }
    }

    fn check_group(ops: &[SymmetryOperation]) {
        assert!(ops[0].is_identity());
        for a in ops {
            assert!((a.matrix.transpose() * a.matrix - Matrix3::identity()).norm() < 1e-9);
            for b in ops {
                let c = a.then(b);
                assert!(
                    ops.iter().any(|o| o.permutation == c.permutation && (o.matrix - c.matrix).norm() < 1e-6),
                    "not closed"
                );
            }
            assert!(ops.iter().any(|o| a.then(o).is_identity()), "no inverse");
        }
    }

    fn ammonia() -> EquilibriumConfiguration {
        let h = |angle: f64| Vec3::new(0.94 * angle.cos(), 0.94 * angle.sin(), -0.38);
        let third = 2.0 * std::f64::consts::PI / 3.0;
        config(
            vec![14.0, 1.0, 1.0, 1.0],
            vec![Vec3::zeros(), h(0.0), h(third), h(2.0 * third)],
        )
    }

    fn methane() -> EquilibriumConfiguration {
        let s = 0.63;
        config(
            vec![12.0, 1.0, 1.0, 1.0, 1.0],
            vec![
                Vec3::zeros(),
                Vec3::new(s, s, s),
                Vec3::new(s, -s, -s),
                Vec3::new(-s, s, -s),
                Vec3::new(-s, -s, s),
            ],
        )
    }

    fn octahedron() -> EquilibriumConfiguration {
        let d = 1.56;
        let mut positions = vec![Vec3::zeros()];
        for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
            positions.push(axis * d);
            positions.push(-axis * d);
        }
        config(vec![32.0, 19.0, 19.0, 19.0, 19.0, 19.0, 19.0], positions)
    }

    fn triangle() -> EquilibriumConfiguration {
        let third = 2.0 * std::f64::consts::PI / 3.0;
        config(
            vec![1.0; 3],
            (0..3)
                .map(|k| Vec3::new((k as f64 * third).cos(), (k as f64 * third).sin(), 0.0))
                .collect(),
        )
    }

    #[test]
    fn known_group_orders() {
        for (reference, order) in [(water(), 4), (ammonia(), 6), (methane(), 24), (octahedron(), 48), (triangle(), 12)] {
            let ops = symmetry_operations(&reference, 1e-8).unwrap();
            assert_eq!(ops.len(), order);
            assert_eq!(distance_oracle(&reference, 1e-8), order);
            check_group(&ops);
            assert_eq!(ops.iter().filter(|o| o.is_proper()).count() * 2, order);
        }
    }

    #[test]
    fn asymmetric_reference_has_only_identity() {
        let reference = config(
            vec![12.0, 16.0, 1.0, 1.0],
            vec![
                Vec3::zeros(),
                Vec3::new(1.2, 0.0, 0.0),
                Vec3::new(-0.6, 0.95, 0.0),
                Vec3::new(-0.5, -0.7, 0.6),
            ],
        );
        let ops = symmetry_operations(&reference, 1e-8).unwrap();
        assert_eq!(ops.len(), 1);
        assert_eq!(distance_oracle(&reference, 1e-8), 1);
    }

    #[test]
    fn continuous_cases_rejected() {
        let linear = config(vec![16.0, 12.0, 16.0], vec![Vec3::new(0.0, 0.0, -1.16), Vec3::zeros(), Vec3::new(0.0, 0.0, 1.16)]);
        match symmetry_operations(&linear, 1e-8) {
            Err(EckartError::ContinuousAxis { axis: Some(axis) }) => assert!((axis[2].abs() - 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let atom = config(vec![4.0], vec![Vec3::new(1.0, 2.0, 3.0)]);
        assert!(matches!(
            symmetry_operations(&atom, 1e-8),
            Err(EckartError::ContinuousAxis { axis: None })
        ));
    }
}
