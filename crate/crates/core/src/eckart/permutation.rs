//! Choice of which equal-mass atom goes to which reference point.
//!
//! Among atoms of one mass class the binding is ambiguous. The chosen order
//! minimizes the sum of the displacement moduli `Σ |d_i|` after the frame is
//! bound. A semi-rigid molecule keeps the order for a whole trajectory, so
//! callers resolve once and reuse the result.

use super::assignment::solve_assignment;
use super::{bind_frame_with, check_compatible, AtomSet, EckartError, EquilibriumConfiguration, FrameOptions, Vec3};

/// Objectives within this relative gap count as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationStrategy {
    /// Every within-class permutation; ties go to the lexicographically
    /// smallest order. Classes must not exceed the brute-force cap.
    Exhaustive,
    /// Hungarian assignment per class, alternated with frame binding until
    /// the order is stable.
    Assignment,
    /// Exhaustive when the search space is small, assignment otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOptions {
    pub strategy: PermutationStrategy,
    /// Largest class the exhaustive search accepts.
    pub brute_force_cap: usize,
    /// `Auto` searches exhaustively up to this many candidate orders.
    pub exhaustive_budget: usize,
    pub max_iterations: usize,
    pub frame: FrameOptions,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            strategy: PermutationStrategy::Auto,
            brute_force_cap: 6,
            exhaustive_budget: 5040,
            max_iterations: 50,
            frame: FrameOptions::default(),
        }
    }
}

/// `Σ |d_i|` after binding with atom `order[i]` on reference point `i`.
pub fn displacement_objective(
    molecule: &AtomSet,
    reference: &EquilibriumConfiguration,
    order: &[usize],
    frame: &FrameOptions,
) -> Result<f64, EckartError> {
    let permuted = molecule.permuted(order)?;
    Ok(bind_frame_with(&permuted, reference, frame)?.displacement_sum())
}

pub fn resolve_permutation(
    molecule: &AtomSet,
    reference: &EquilibriumConfiguration,
) -> Result<Vec<usize>, EckartError> {
    resolve_permutation_with(molecule, reference, &PermutationOptions::default())
}

/// Returns `order` such that atom `order[i]` of `molecule` is bound to
/// reference point `i`. Only atoms of equal mass are exchanged.
pub fn resolve_permutation_with(
    molecule: &AtomSet,
    reference: &EquilibriumConfiguration,
    options: &PermutationOptions,
) -> Result<Vec<usize>, EckartError> {
    check_compatible(molecule, reference)?;
    let classes = class_members(reference.classes());
    let search_space = classes
        .iter()
        .map(|c| factorial(c.len()))
        .try_fold(1usize, |acc, f| acc.checked_mul(f?));
    let strategy = match options.strategy {
        PermutationStrategy::Auto => {
            let small = classes.iter().all(|c| c.len() <= options.brute_force_cap)
                && search_space.is_some_and(|n| n <= options.exhaustive_budget);
            if small {
                PermutationStrategy::Exhaustive
            } else {
                PermutationStrategy::Assignment
            }
        }
        other => other,
    };
    match strategy {
        PermutationStrategy::Exhaustive => {
            if let Some(c) = classes.iter().find(|c| c.len() > options.brute_force_cap) {
                return Err(EckartError::ClassTooLarge {
                    size: c.len(),
                    cap: options.brute_force_cap,
                });
            }
            exhaustive(molecule, reference, &classes, &options.frame)
        }
        _ => assignment(molecule, reference, &classes, options),
    }
}

fn factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// Indices of each class, in class-id order.
fn class_members(classes: &[usize]) -> Vec<Vec<usize>> {
    let count = classes.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); count];
    for (i, &c) in classes.iter().enumerate() {
        members[c].push(i);
    }
    members
}

struct Best {
    objective: f64,
    order: Vec<usize>,
}

impl Best {
    fn offer(&mut self, objective: f64, order: &[usize]) {
        let gap = TIE_TOLERANCE * self.objective.abs().max(1.0);
        let better = !self.objective.is_finite()
            || objective < self.objective - gap
            || ((objective - self.objective).abs() <= gap && order < self.order.as_slice());
        if better {
            self.objective = objective;
            self.order = order.to_vec();
        }
    }
}

/// Advances `items` to the next lexicographic permutation.
fn next_permutation(items: &mut [usize]) -> bool {
    let Some(pivot) = items.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let successor = items.iter().rposition(|&x| x > items[pivot]).unwrap_or(pivot);
    items.swap(pivot, successor);
    items[pivot + 1..].reverse();
    true
}

fn exhaustive(
    molecule: &AtomSet,
    reference: &EquilibriumConfiguration,
    classes: &[Vec<usize>],
    frame: &FrameOptions,
) -> Result<Vec<usize>, EckartError> {
    let n = molecule.len();
    let mut best = Best {
        objective: f64::INFINITY,
        order: (0..n).collect(),
    };
    let mut current: Vec<Vec<usize>> = classes.to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        for (slots, images) in classes.iter().zip(&current) {
            for (&slot, &image) in slots.iter().zip(images) {
                order[slot] = image;
            }
        }
        if let Ok(objective) = displacement_objective(molecule, reference, &order, frame) {
            best.offer(objective, &order);
        }
        // Odometer over the classes, last class fastest.
        let mut advanced = false;
        for k in (0..current.len()).rev() {
            if next_permutation(&mut current[k]) {
                advanced = true;
                break;
            }
            current[k].sort_unstable();
        }
        if !advanced {
            break;
        }
    }
    if best.objective.is_finite() {
        Ok(best.order)
    } else {
        let residual = displacement_objective(molecule, reference, &best.order, frame)
            .err()
            .and_then(|e| match e {
                EckartError::FrameNotFound { residual } => Some(residual),
                _ => None,
            })
            .unwrap_or(f64::NAN);
        Err(EckartError::FrameNotFound { residual })
    }
}

/// Rotation-invariant fingerprint of each point: distance to the centre of
/// mass, then the sorted distances to the members of every class.
fn descriptors(points: &[Vec3], classes: &[Vec<usize>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d = vec![p.norm()];
            for members in classes {
                let mut distances: Vec<f64> = members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (points[j] - p).norm())
                    .collect();
                distances.sort_by(f64::total_cmp);
                d.extend(distances);
            }
            d
        })
        .collect()
}

fn assign_classes(classes: &[Vec<usize>], n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut order = vec![0; n];
    for members in classes {
        let costs: Vec<Vec<f64>> = members
            .iter()
            .map(|&slot| members.iter().map(|&atom| cost(slot, atom)).collect())
            .collect();
        for (row, col) in solve_assignment(&costs).into_iter().enumerate() {
            order[members[row]] = members[col];
        }
    }
    order
}

fn assignment(
    molecule: &AtomSet,
    reference: &EquilibriumConfiguration,
    classes: &[Vec<usize>],
    options: &PermutationOptions,
) -> Result<Vec<usize>, EckartError> {
    let n = molecule.len();
    let com = molecule.center_of_mass();
    let relative: Vec<Vec3> = molecule.positions().iter().map(|x| x - com).collect();
    let reference_descriptors = descriptors(reference.positions(), classes);
    let molecule_descriptors = descriptors(&relative, classes);
    let mut order = assign_classes(classes, n, |slot, atom| {
        reference_descriptors[slot]
            .iter()
            .zip(&molecule_descriptors[atom])
            .map(|(a, b)| (a - b).abs())
            .sum()
    });

    let identity: Vec<usize> = (0..n).collect();
    let mut best = Best {
        objective: f64::INFINITY,
        order: identity.clone(),
    };
    if let Ok(objective) = displacement_objective(molecule, reference, &identity, &options.frame) {
        best.offer(objective, &identity);
    }
    for _ in 0..options.max_iterations {
        let Ok(frame) = bind_frame_with(&molecule.permuted(&order)?, reference, &options.frame) else {
            break;
        };
        best.offer(frame.displacement_sum(), &order);
        let refs = reference.positions();
        let next = assign_classes(classes, n, |slot, atom| {
            (frame.rotation.inverse_transform_vector(&relative[atom]) - refs[slot]).norm()
        });
        if next == order {
            break;
        }
        order = next;
    }
    if best.objective.is_finite() {
        Ok(best.order)
    } else {
        Err(EckartError::FrameNotFound { residual: f64::NAN })
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn exhaustive_options() -> PermutationOptions {
        PermutationOptions {
            strategy: PermutationStrategy::Exhaustive,
            ..Default::default()
        }
    }

    fn assignment_options() -> PermutationOptions {
        PermutationOptions {
            strategy: PermutationStrategy::Assignment,
            ..Default::default()
        }
    }

    #[test]
    fn next_permutation_enumerates_all() {
        let mut items = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut items) {
            count += 1;
        }
        assert_eq!(count, 24);
        assert_eq!(items, vec![3, 2, 1, 0]);
    }

    #[test]
    fn distinct_masses_give_identity() {
        let reference = EquilibriumConfiguration::from_atoms(
            AtomSet::from_masses(
                vec![1.0, 12.0, 14.0, 16.0],
                vec![
                    Vec3::new(1.0, 0.1, 0.0),
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(-0.7, 0.9, 0.2),
                    Vec3::new(0.3, -0.8, 0.6),
                ],
            )
            .unwrap(),
        );
        let (molecule, _, _) = distorted(&reference, 0.05, &mut rng(1));
        assert_eq!(resolve_permutation(&molecule, &reference).unwrap(), vec![0, 1, 2, 3]);
    }

    fn asymmetric_with_pair() -> EquilibriumConfiguration {
        // C, O and two H that are not symmetry equivalent.
        EquilibriumConfiguration::from_atoms(
            AtomSet::from_masses(
                vec![12.0, 16.0, 1.0, 1.0],
                vec![
                    Vec3::new(0.0, 0.0, 0.0),
                    Vec3::new(1.2, 0.0, 0.0),
                    Vec3::new(-0.6, 0.95, 0.0),
                    Vec3::new(-0.5, -0.7, 0.6),
                ],
            )
            .unwrap(),
        )
    }

    #[test]
    fn swapped_pair_is_recovered() {
        let reference = asymmetric_with_pair();
        let (molecule, _, _) = distorted(&reference, 0.01, &mut rng(2));
        let swapped = molecule.permuted(&[0, 1, 3, 2]).unwrap();
        for options in [exhaustive_options(), assignment_options()] {
            assert_eq!(
                resolve_permutation_with(&swapped, &reference, &options).unwrap(),
                vec![0, 1, 3, 2]
            );
        }
    }

    #[test]
    fn symmetric_ties_choose_lexicographically_smallest() {
        // Water's hydrogens are exchanged by the C2 axis, so both orders bind
        // with the same displacements.
        let reference = water();
        let (molecule, _, _) = distorted(&reference, 0.0, &mut rng(3));
        let swapped = molecule.permuted(&[0, 2, 1]).unwrap();
        assert_eq!(
            resolve_permutation_with(&swapped, &reference, &exhaustive_options()).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn four_identical_atoms_match_exhaustive_search() {
        let mut r = rng(4);
        for _ in 0..20 {
            let masses = vec![12.0, 1.0, 1.0, 1.0, 1.0];
            let positions = (0..5)
                .map(|_| Vec3::new(r.random_range(-1.5..1.5), r.random_range(-1.5..1.5), r.random_range(-1.5..1.5)))
                .collect();
            let reference = EquilibriumConfiguration::from_atoms(AtomSet::from_masses(masses, positions).unwrap());
            let (molecule, _, _) = distorted(&reference, 0.02, &mut r);
            let mut shuffle: Vec<usize> = vec![1, 2, 3, 4];
            shuffle.shuffle(&mut r);
            let order: Vec<usize> = std::iter::once(0).chain(shuffle).collect();
            let scrambled = molecule.permuted(&order).unwrap();
            let fast = resolve_permutation_with(&scrambled, &reference, &assignment_options()).unwrap();
            let slow = resolve_permutation_with(&scrambled, &reference, &exhaustive_options()).unwrap();
            assert_eq!(fast, slow);
            let frame = FrameOptions::default();
            let identity = displacement_objective(&scrambled, &reference, &[0, 1, 2, 3, 4], &frame).unwrap();
            let chosen = displacement_objective(&scrambled, &reference, &fast, &frame).unwrap();
            assert!(chosen <= identity + 1e-12);
        }
    }

    #[test]
    fn oversized_class_needs_assignment() {
        let n = 8;
        let positions = (0..n)
            .map(|i| {
                let t = i as f64;
                Vec3::new(t.cos() * (1.0 + 0.1 * t), t.sin(), 0.1 * t * t - 1.0)
            })
            .collect();
        let reference = EquilibriumConfiguration::from_atoms(AtomSet::from_masses(vec![1.0; n], positions).unwrap());
        let (molecule, _, _) = distorted(&reference, 0.01, &mut rng(6));
        assert!(matches!(
            resolve_permutation_with(&molecule, &reference, &exhaustive_options()),
            Err(EckartError::ClassTooLarge { size: 8, cap: 6 })
        ));
        let order = resolve_permutation(&molecule, &reference).unwrap();
        assert_eq!(order, (0..n).collect::<Vec<_>>());
    }
}
