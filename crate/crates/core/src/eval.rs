// SPDX-License-Identifier: MIT OR Apache-2.0

//! Metrics, synthetic covariate shift, and timing.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{KmmError, Result};
use crate::kernel::{kernel_matrix, kernel_row_sums, KernelConfig};

/// Mean squared difference of the two vectors after each is scaled to sum 1.
pub fn nmse(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(KmmError::DimensionMismatch { expected: truth.len(), found: estimated.len() });
    }
    if truth.is_empty() {
        return Err(KmmError::InvalidParameter("nmse of empty vectors".into()));
    }
    let normalizer = |v: &[f64], name: &str| {
        let s: f64 = v.iter().sum();
        if s == 0.0 || !s.is_finite() {
            Err(KmmError::InvalidParameter(format!("{name} weights sum to {s}; cannot normalize")))
        } else {
            Ok(s)
        }
    };
    let se = normalizer(estimated, "estimated")?;
    let st = normalizer(truth, "true")?;
    let sq: f64 = estimated.iter().zip(truth).map(|(e, t)| (e / se - t / st).powi(2)).sum();
    Ok(sq / truth.len() as f64)
}

/// Squared MMD between the `weights`-weighted matching mean embedding and
/// the reference mean embedding, including the reference-only constant.
pub fn mmd_squared(weights: &[f64], matching: &Dataset, reference: &Dataset, cfg: &KernelConfig) -> Result<f64> {
    if weights.len() != matching.n() {
        return Err(KmmError::DimensionMismatch { expected: matching.n(), found: weights.len() });
    }
    matching.check_same_dim(reference)?;
    let (n_m, n_r) = (matching.n() as f64, reference.n() as f64);
    let a = DVector::from_column_slice(weights);
    let kmm = kernel_matrix(matching, matching, cfg)?;
    let kmr_e = DVector::from_vec(kernel_row_sums(matching, reference, cfg)?);
    let krr: f64 = kernel_row_sums(reference, reference, cfg)?.iter().sum();
    let value = a.dot(&(&kmm * &a)) / (n_m * n_m) - 2.0 * a.dot(&kmr_e) / (n_m * n_r) + krr / (n_r * n_r);
    Ok(value.max(0.0))
}

/// Isotropic Gaussian matching and reference distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShiftSpec {
    pub d: usize,
    pub matching_mean: Vec<f64>,
    pub matching_sigma: f64,
    pub reference_mean: Vec<f64>,
    pub reference_sigma: f64,
    pub n_m: usize,
    pub n_r: usize,
    pub seed: u64,
}

impl SyntheticShiftSpec {
    /// Means given as scalars, broadcast across all `d` coordinates.
    pub fn isotropic(d: usize, matching: (f64, f64), reference: (f64, f64), n_m: usize, n_r: usize, seed: u64) -> Self {
        Self {
            d,
            matching_mean: vec![matching.0; d],
            matching_sigma: matching.1,
            reference_mean: vec![reference.0; d],
            reference_sigma: reference.1,
            n_m,
            n_r,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_m == 0 || self.n_r == 0 {
            return Err(KmmError::InvalidParameter("d, n_m and n_r must all be at least 1".into()));
        }
        if self.matching_mean.len() != self.d || self.reference_mean.len() != self.d {
            return Err(KmmError::DimensionMismatch {
                expected: self.d,
                found: if self.matching_mean.len() != self.d { self.matching_mean.len() } else { self.reference_mean.len() },
            });
        }
        for s in [self.matching_sigma, self.reference_sigma] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(KmmError::InvalidParameter(format!("standard deviations must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// `p_r(x) / p_m(x)` in closed form.
    pub fn true_ratio(&self, x: &[f64]) -> f64 {
        let (sm, sr) = (self.matching_sigma, self.reference_sigma);
        let dm: f64 = x.iter().zip(&self.matching_mean).map(|(a, b)| (a - b) * (a - b)).sum();
        let dr: f64 = x.iter().zip(&self.reference_mean).map(|(a, b)| (a - b) * (a - b)).sum();
        let log = self.d as f64 * (sm / sr).ln() - dr / (2.0 * sr * sr) + dm / (2.0 * sm * sm);
        log.exp()
    }
}

/// Samples from a [`SyntheticShiftSpec`] with the true ratio at each
/// matching point.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSample {
    pub matching: Dataset,
    pub reference: Dataset,
    pub true_weights: Vec<f64>,
}

/// Draws the matching rows first, then the reference rows, from one
/// generator seeded with `spec.seed`.
pub fn generate_shift(spec: &SyntheticShiftSpec) -> Result<ShiftSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |n: usize, mean: &[f64], sigma: f64| {
        let values: Vec<f64> = (0..n * spec.d)
            .map(|k| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean[k % spec.d] + sigma * z
            })
            .collect();
        Dataset::new(values, n, spec.d, format!("synthetic:seed={}", spec.seed))
    };
    let matching = draw(spec.n_m, &spec.matching_mean, spec.matching_sigma)?;
    let reference = draw(spec.n_r, &spec.reference_mean, spec.reference_sigma)?;
    let true_weights = matching.rows().map(|x| spec.true_ratio(x)).collect();
    Ok(ShiftSample { matching, reference, true_weights })
}

/// Where the true weights for NMSE came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMode {
    /// Closed-form density ratio of a synthetic shift.
    Analytic,
    /// Predictions of a standard KMM fit on the whole reference set.
    FullKmmOracle,
}

impl TruthMode {
    pub fn id(&self) -> &'static str {
        match self {
            TruthMode::Analytic => "analytic",
            TruthMode::FullKmmOracle => "full-kmm-oracle",
        }
    }
}

/// One output record. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: String,
    pub n_m: usize,
    pub n_r: usize,
    pub t: usize,
    pub n: usize,
    pub n_s: usize,
    pub n_h: usize,
    pub partitions: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub seed: u64,
    pub nmse: f64,
    pub mmd2: f64,
    pub wallclock_ms: f64,
    pub truth_mode: String,
}

impl ExperimentResult {
    pub const COLUMNS: [&'static str; 15] = [
        "method", "n_m", "n_r", "t", "n", "n_s", "n_h", "partitions", "lambda", "sigma", "seed", "nmse",
        "mmd2", "wallclock_ms", "truth_mode",
    ];
}

/// Runs `task` and returns its output with the elapsed wall-clock time in
/// milliseconds, measured on a monotonic clock.
pub fn time_run<T>(task: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = task();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nmse_examples() {
        assert_eq!(nmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(nmse(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0, epsilon = 1e-18);
        // (0.25, 0.75) vs (0.5, 0.5): (0.0625 + 0.0625) / 2
        assert_eq!(nmse(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.0625);
    }

    #[test]
    fn nmse_errors() {
        assert!(nmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(nmse(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(nmse(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(nmse(&[], &[]).is_err());
    }

    #[test]
    fn mmd_identical_sets_vanish() {
        let x = Dataset::new(vec![0.0, 0.3, 1.1, -0.5], 4, 1, "t").unwrap();
        let c = KernelConfig::fixed(0.8).unwrap();
        assert_abs_diff_eq!(mmd_squared(&[1.0; 4], &x, &x, &c).unwrap(), 0.0, epsilon = 1e-12);
        let r = Dataset::new(vec![0.2, 0.9], 2, 1, "t").unwrap();
        let v = mmd_squared(&[0.0; 4], &x, &r, &c).unwrap();
        let k = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * 0.64)).exp();
        assert_abs_diff_eq!(v, (2.0 + 2.0 * k(0.2, 0.9)) / 4.0, epsilon = 1e-15);
        assert!(mmd_squared(&[1.0; 3], &x, &r, &c).is_err());
    }

    #[test]
    fn shift_identical_distributions() {
        let spec = SyntheticShiftSpec::isotropic(3, (0.5, 1.2), (0.5, 1.2), 20, 30, 4);
        let s = generate_shift(&spec).unwrap();
        for w in &s.true_weights {
            assert_abs_diff_eq!(*w, 1.0, epsilon = 1e-12);
        }
        assert_eq!((s.matching.n(), s.reference.n(), s.matching.d()), (20, 30, 3));
    }

    #[test]
    fn shift_one_dimensional_ratio() {
        let spec = SyntheticShiftSpec::isotropic(1, (0.0, 1.0), (1.0, 1.0), 5, 5, 1);
        for x in [-2.0, -0.3, 0.0, 0.8, 2.5] {
            assert_abs_diff_eq!(spec.true_ratio(&[x]), (x - 0.5f64).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn shift_determinism_and_validation() {
        let spec = SyntheticShiftSpec::isotropic(2, (0.0, 1.0), (0.5, 0.7), 10, 12, 77);
        assert_eq!(generate_shift(&spec).unwrap(), generate_shift(&spec).unwrap());
        let bad = SyntheticShiftSpec { matching_sigma: 0.0, ..spec.clone() };
        assert!(generate_shift(&bad).is_err());
        let bad = SyntheticShiftSpec { reference_mean: vec![0.0], ..spec };
        assert!(generate_shift(&bad).is_err());
    }

    #[test]
    fn timing_is_nonnegative() {
        let ((), ms) = time_run(|| ());
        assert!(ms >= 0.0);
        let (v, _) = time_run(|| 2 + 2);
        assert_eq!(v, 4);
    }
}
