//! Small numerical utilities shared by the simulation modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Random source used for every Monte-Carlo trial.
pub type TrialRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` from a master seed.
///
/// The rule is `mix64(mix64(master) + (index + 1) * GOLDEN_GAMMA)`, so streams
/// depend only on `(master, index)` and never on scheduling.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Independent random source for trial `index` under `master`.
pub fn trial_rng(master: u64, index: u64) -> TrialRng {
    TrialRng::seed_from_u64(split_seed(master, index))
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Trials per block in [`monte_carlo_mean`]. Blocks are summed in index
/// order, so the result does not depend on the worker count.
const BLOCK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean; zero for a single trial.
    pub std_error: f64,
}

/// Mean of `sample` over `trials` independent streams, trial `i` drawing
/// from [`trial_rng`]`(seed, i)`. Runs on the current rayon pool.
pub fn monte_carlo_mean<F>(trials: u64, seed: u64, sample: F) -> MeanEstimate
where
    F: Fn(&mut TrialRng) -> f64 + Sync,
{
    let blocks: Vec<(f64, f64)> = (0..trials.div_ceil(BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut sum = CompensatedSum::new();
            let mut sum_sq = CompensatedSum::new();
            for trial in block * BLOCK..((block + 1) * BLOCK).min(trials) {
                let value = sample(&mut trial_rng(seed, trial));
                sum.add(value);
                sum_sq.add(value * value);
            }
            (sum.value(), sum_sq.value())
        })
        .collect();
    let sum: CompensatedSum = blocks.iter().map(|b| b.0).collect();
    let sum_sq: CompensatedSum = blocks.iter().map(|b| b.1).collect();
    let count = trials as f64;
    let mean = sum.value() / count;
    let std_error = if trials > 1 {
        let variance = ((sum_sq.value() - count * mean * mean) / (count - 1.0)).max(0.0);
        (variance / count).sqrt()
    } else {
        0.0
    };
    MeanEstimate { mean, std_error }
}

/// Shortest round-trip text for `x`, switching to exponent form outside
/// `[1e-4, 1e16)` so tiny and huge values stay readable.
pub fn format_float(x: f64) -> String {
    let magnitude = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&magnitude) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Trapezoid rule of `values` over the abscissae `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .collect::<CompensatedSum>()
        .value()
}

/// Linear interpolation on a strictly increasing grid; `None` outside it.
pub fn interpolate_linear(grid: &[f64], values: &[f64], x: f64) -> Option<f64> {
    let (first, last) = (*grid.first()?, *grid.last()?);
    if x < first || x > last {
        return None;
    }
    let upper = grid.partition_point(|&g| g < x);
    if upper == 0 {
        return Some(values[0]);
    }
    if grid[upper] == x {
        return Some(values[upper]);
    }
    let (x0, x1) = (grid[upper - 1], grid[upper]);
    let t = (x - x0) / (x1 - x0);
    Some(values[upper - 1] + t * (values[upper] - values[upper - 1]))
}

/// Ascending-order polynomial evaluated by Horner's rule.
pub fn poly_eval(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Coefficients of the derivative of an ascending-order polynomial.
pub fn poly_derivative(coefficients: &[f64]) -> Vec<f64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn float_text_round_trips() {
        for x in [0.0, -0.0, 1.0, 0.5, 1e-27, 2e26, -3.25e-5, 6.02214076e23, f64::MIN_POSITIVE, 123456.789] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(1e-27), "1e-27");
        assert_eq!(format_float(0.25), "0.25");
    }

    #[test]
    fn split_seed_is_deterministic_and_distinct() {
        assert_eq!(split_seed(7, 3), split_seed(7, 3));
        assert_ne!(split_seed(7, 3), split_seed(7, 4));
        assert_ne!(split_seed(7, 3), split_seed(8, 3));
        let a: f64 = trial_rng(1, 2).random();
        let b: f64 = trial_rng(1, 2).random();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let acc: CompensatedSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(acc.value(), 2.0);
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let grid = [0.0, 0.5, 2.0, 3.0];
        let values: Vec<f64> = grid.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&grid, &values) - 12.0).abs() < 1e-14);
    }

    #[test]
    fn interpolation_hits_nodes_and_rejects_outside() {
        let grid = [1.0, 2.0, 4.0];
        let values = [10.0, 20.0, 0.0];
        assert_eq!(interpolate_linear(&grid, &values, 1.0), Some(10.0));
        assert_eq!(interpolate_linear(&grid, &values, 4.0), Some(0.0));
        assert_eq!(interpolate_linear(&grid, &values, 3.0), Some(10.0));
        assert_eq!(interpolate_linear(&grid, &values, 0.5), None);
    }

    #[test]
    fn polynomial_helpers() {
        let p = [1.0, -2.0, 3.0];
        assert_eq!(poly_eval(&p, 2.0), 9.0);
        assert_eq!(poly_derivative(&p), vec![-2.0, 6.0]);
        assert!(poly_derivative(&[5.0]).is_empty());
        assert_eq!(poly_eval(&[], 3.0), 0.0);
    }
}
