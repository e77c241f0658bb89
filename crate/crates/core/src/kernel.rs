// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gaussian kernels, bandwidth selection, and kernel-sum importance scores.
//!
//! The kernel is `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`. Importance
//! scores rank reference points by their kernel sum against a set of
//! reference points, either the whole set (self-importance) or a subset.
//! The same sums, at doubled variance, give the information potential of a
//! set and its Renyi quadratic entropy.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{KmmError, Result};

/// How the bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthPolicy {
    Fixed(f64),
    /// Median pairwise Euclidean distance of the data.
    Median,
}

/// A resolved Gaussian bandwidth together with the policy that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    sigma: f64,
    policy: BandwidthPolicy,
}

impl KernelConfig {
    pub fn fixed(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { sigma, policy: BandwidthPolicy::Fixed(sigma) })
    }

    pub fn resolve(policy: BandwidthPolicy, data: &Dataset) -> Result<Self> {
        match policy {
            BandwidthPolicy::Fixed(s) => Self::fixed(s),
            BandwidthPolicy::Median => {
                let sigma = median_heuristic(data)?;
                Ok(Self { sigma, policy })
            }
        }
    }

    /// Median heuristic on the rows of `a` and `b` stacked together. When
    /// the pool exceeds `max_rows`, every `ceil(total / max_rows)`-th row is
    /// used instead.
    pub fn median_pooled(a: &Dataset, b: &Dataset, max_rows: usize) -> Result<Self> {
        let pooled = a.concat(b)?;
        let stride = pooled.n().div_ceil(max_rows.max(2));
        let sample = if stride > 1 {
            let idx: Vec<usize> = (0..pooled.n()).step_by(stride).collect();
            pooled.select(&idx)?
        } else {
            pooled
        };
        Self::resolve(BandwidthPolicy::Median, &sample)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn policy(&self) -> BandwidthPolicy {
        self.policy
    }

    fn gaussian(&self) -> Gaussian {
        Gaussian::with_variance(self.sigma * self.sigma)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(KmmError::InvalidParameter(format!("bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

/// `exp(-||x - y||^2 * scale)` with `scale = 1 / (2 * variance)`.
#[derive(Clone, Copy)]
pub(crate) struct Gaussian {
    scale: f64,
}

impl Gaussian {
    fn with_variance(variance: f64) -> Self {
        Self { scale: 0.5 / variance }
    }

    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (-sq_dist(x, y) * self.scale).exp()
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(KmmError::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    check_sigma(sigma)?;
    Ok(Gaussian::with_variance(sigma * sigma).eval(x, y))
}

/// Gram matrix with entry `(i, j) = k(x_i, y_j)`. Passing the same dataset
/// twice yields an exactly symmetric matrix with unit diagonal.
pub fn kernel_matrix(x: &Dataset, y: &Dataset, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    x.check_same_dim(y)?;
    let g = cfg.gaussian();
    if std::ptr::eq(x, y) {
        let n = x.n();
        let mut k = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = g.eval(x.row(i), x.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        return Ok(k);
    }
    Ok(DMatrix::from_fn(x.n(), y.n(), |i, j| g.eval(x.row(i), y.row(j))))
}

/// `K_{x,y} e`: for each row of `x`, the kernel sum over all rows of `y`,
/// accumulated in row order of `y`. Never materializes the Gram matrix.
pub fn kernel_row_sums(x: &Dataset, y: &Dataset, cfg: &KernelConfig) -> Result<Vec<f64>> {
    x.check_same_dim(y)?;
    let g = cfg.gaussian();
    Ok(x.rows().map(|xi| y.rows().map(|yj| g.eval(xi, yj)).sum()).collect())
}

/// Median of the `n(n-1)/2` pairwise Euclidean distances; for an even
/// number of pairs, the mean of the two central values.
pub fn median_heuristic(x: &Dataset) -> Result<f64> {
    let n = x.n();
    if n < 2 {
        return Err(KmmError::InvalidShape(format!("median heuristic needs at least 2 rows, got {n}")));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    let m = dists.len();
    let mid = m / 2;
    let (lower, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if m % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    };
    if median <= 0.0 {
        return Err(KmmError::ZeroBandwidth);
    }
    Ok(median)
}

/// Kernel-sum scores of reference instances, raw and sum-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl ImportanceScores {
    fn from_raw(raw: Vec<f64>) -> Self {
        let total: f64 = raw.iter().sum();
        let normalized = raw.iter().map(|r| r / total).collect();
        Self { raw, normalized }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// `raw_i = sum_j k(x_i, x_j)` over the whole reference set.
pub fn self_importance(reference: &Dataset, cfg: &KernelConfig) -> ImportanceScores {
    let raw = kernel_row_sums(reference, reference, cfg).expect("same dataset has one dimensionality");
    ImportanceScores::from_raw(raw)
}

/// `raw_i = sum_{j in subset} k(x_i, x_j)` for every reference instance `i`.
pub fn subset_importance(
    reference: &Dataset,
    subset: &[usize],
    cfg: &KernelConfig,
) -> Result<ImportanceScores> {
    if subset.is_empty() {
        return Err(KmmError::InvalidParameter("importance subset is empty".into()));
    }
    let mut seen = vec![false; reference.n()];
    for &j in subset {
        match seen.get_mut(j) {
            None => {
                return Err(KmmError::InvalidParameter(format!(
                    "subset index {j} out of range for {} reference rows",
                    reference.n()
                )))
            }
            Some(true) => {
                return Err(KmmError::InvalidParameter(format!("subset index {j} repeated")))
            }
            Some(s) => *s = true,
        }
    }
    let g = cfg.gaussian();
    let raw = reference
        .rows()
        .map(|xi| subset.iter().map(|&j| g.eval(xi, reference.row(j))).sum())
        .collect();
    Ok(ImportanceScores::from_raw(raw))
}

/// Indices of the `k` highest normalized scores, best first. Equal scores
/// are ordered by lower index.
pub fn top_k_important(scores: &ImportanceScores, k: usize) -> Result<Vec<usize>> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(KmmError::InvalidParameter(format!("cannot select top {k} of {n} scores")));
    }
    let s = &scores.normalized;
    let by_score = |a: &usize, b: &usize| s[*b].total_cmp(&s[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, by_score);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_score);
    Ok(idx)
}

/// Mean pairwise affinity `(1/n^2) sum_ij G(x_i - x_j, 2 sigma^2)`, where
/// `G(u, s) = exp(-||u||^2 / (2 s))` has unit height.
pub fn information_potential(x: &Dataset, cfg: &KernelConfig) -> f64 {
    let g = Gaussian::with_variance(2.0 * cfg.sigma * cfg.sigma);
    let n = x.n();
    let mut off_diag = 0.0;
    for i in 0..n {
        for j in 0..i {
            off_diag += g.eval(x.row(i), x.row(j));
        }
    }
    (n as f64 + 2.0 * off_diag) / (n * n) as f64
}

/// Renyi quadratic entropy `-ln V` of the information potential `V`.
pub fn renyi_entropy(x: &Dataset, cfg: &KernelConfig) -> f64 {
    -information_potential(x, cfg).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(points: &[f64]) -> Dataset {
        Dataset::new(points.to_vec(), points.len(), 1, "line").unwrap()
    }

    fn cfg(sigma: f64) -> KernelConfig {
        KernelConfig::fixed(sigma).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[0.3, -2.0], &[0.3, -2.0], 0.7).unwrap(), 1.0);
        let s = 1.7;
        let v = gaussian_kernel(&[0.0], &[s * 2f64.sqrt()], s).unwrap();
        assert_abs_diff_eq!(v, (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(
            gaussian_kernel(&[1.0, 2.0], &[-0.5, 4.0], 0.9).unwrap(),
            gaussian_kernel(&[-0.5, 4.0], &[1.0, 2.0], 0.9).unwrap()
        );
    }

    #[test]
    fn kernel_errors() {
        assert!(matches!(gaussian_kernel(&[0.0], &[0.0, 1.0], 1.0), Err(KmmError::DimensionMismatch { .. })));
        assert!(gaussian_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(gaussian_kernel(&[0.0], &[1.0], -1.0).is_err());
        assert!(KernelConfig::fixed(f64::NAN).is_err());
    }

    #[test]
    fn gram_shapes() {
        let x = line(&[0.0, 1.0, 3.0]);
        let k = kernel_matrix(&x, &x, &cfg(1.0)).unwrap();
        for i in 0..3 {
            assert_eq!(k[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        let a = line(&[0.5]);
        let b = line(&[2.0]);
        let k = kernel_matrix(&a, &b, &cfg(0.8)).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert_eq!(k[(0, 0)], gaussian_kernel(&[0.5], &[2.0], 0.8).unwrap());

        let two_d = Dataset::new(vec![0.0, 0.0], 1, 2, "t").unwrap();
        assert!(kernel_matrix(&a, &two_d, &cfg(1.0)).is_err());
    }

    #[test]
    fn median_examples() {
        let two = Dataset::from_rows(&[vec![0.0, 0.0], vec![3.0, 0.0]], "t").unwrap();
        assert_eq!(median_heuristic(&two).unwrap(), 3.0);
        assert_eq!(median_heuristic(&line(&[0.0, 1.0, 2.0])).unwrap(), 1.0);
        // pairs {1, 2, 3, 1, 2, 1} -> sorted 1,1,1,2,2,3 -> (1 + 2) / 2
        assert_eq!(median_heuristic(&line(&[0.0, 1.0, 2.0, 3.0])).unwrap(), 1.5);
        assert!(matches!(median_heuristic(&line(&[4.0, 4.0, 4.0])), Err(KmmError::ZeroBandwidth)));
        assert!(median_heuristic(&line(&[4.0])).is_err());
    }

    #[test]
    fn self_importance_small_cases() {
        let s = self_importance(&line(&[2.5]), &cfg(1.0));
        assert_eq!(s.normalized, vec![1.0]);
        let s = self_importance(&line(&[1.0, 1.0]), &cfg(1.0));
        assert_eq!(s.normalized, vec![0.5, 0.5]);
    }

    #[test]
    fn self_importance_three_points() {
        let x = line(&[0.0, 1.0, 10.0]);
        let s = self_importance(&x, &cfg(1.0));
        let e = (-0.5f64).exp();
        let far = |d: f64| (-d * d / 2.0).exp();
        let raw = [1.0 + e + far(10.0), 1.0 + e + far(9.0), 1.0 + far(10.0) + far(9.0)];
        let total: f64 = raw.iter().sum();
        for i in 0..3 {
            assert_abs_diff_eq!(s.raw[i], raw[i], epsilon = 1e-15);
            assert_abs_diff_eq!(s.normalized[i], raw[i] / total, epsilon = 1e-15);
        }
        assert!(s.normalized[1] >= s.normalized[0] && s.normalized[0] > s.normalized[2]);
    }

    #[test]
    fn subset_importance_reductions() {
        let x = line(&[0.0, 0.4, 1.3, 2.2, 5.0]);
        let c = cfg(0.9);
        let all: Vec<usize> = (0..5).collect();
        assert_eq!(subset_importance(&x, &all, &c).unwrap(), self_importance(&x, &c));

        let single = subset_importance(&x, &[3], &c).unwrap();
        assert_eq!(top_k_important(&single, 1).unwrap(), vec![3]);

        assert!(subset_importance(&x, &[], &c).is_err());
        assert!(subset_importance(&x, &[5], &c).is_err());
        assert!(subset_importance(&x, &[1, 1], &c).is_err());
    }

    #[test]
    fn top_k_examples() {
        let s = ImportanceScores::from_raw(vec![0.2, 0.5, 0.3]);
        assert_eq!(top_k_important(&s, 2).unwrap(), vec![1, 2]);
        assert_eq!(top_k_important(&s, 3).unwrap(), vec![1, 2, 0]);
        let ties = ImportanceScores::from_raw(vec![1.0, 2.0, 1.0, 2.0]);
        assert_eq!(top_k_important(&ties, 3).unwrap(), vec![1, 3, 0]);
        assert!(top_k_important(&s, 0).is_err());
        assert!(top_k_important(&s, 4).is_err());
    }

    #[test]
    fn information_potential_examples() {
        let c = cfg(1.3);
        assert_eq!(information_potential(&line(&[0.7]), &c), 1.0);
        assert_eq!(information_potential(&line(&[0.7, 0.7, 0.7]), &c), 1.0);
        assert_eq!(renyi_entropy(&line(&[0.7, 0.7]), &c), 0.0);

        let two = line(&[0.0, 2.0 * 1.3]);
        let expected = (2.0 + 2.0 * (-1.0f64).exp()) / 4.0;
        assert_abs_diff_eq!(information_potential(&two, &c), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(renyi_entropy(&two, &c), -expected.ln(), epsilon = 1e-15);
        assert!(renyi_entropy(&line(&[0.0, 0.1, 0.3]), &c) > 0.0);
    }

    #[test]
    fn median_policy_resolves() {
        let x = line(&[0.0, 1.0, 2.0]);
        let c = KernelConfig::resolve(BandwidthPolicy::Median, &x).unwrap();
        assert_eq!(c.sigma(), 1.0);
        assert_eq!(c.policy(), BandwidthPolicy::Median);
    }
}
