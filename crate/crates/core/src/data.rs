// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset ingestion, standardization, and matching/reference splitting.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KmmError, Result};

/// Identifier of the generator behind every seeded draw in this crate.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed_from_u64";

/// Dense real-valued instances stored row-major, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    d: usize,
    feature_names: Option<Vec<String>>,
    source: String,
}

impl Dataset {
    /// Builds a dataset from row-major values. Rejects empty shapes and
    /// non-finite entries.
    pub fn new(values: Vec<f64>, n: usize, d: usize, source: impl Into<String>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(KmmError::InvalidShape(format!("dataset must be at least 1x1, got {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(KmmError::InvalidShape(format!(
                "{} values cannot fill a {n}x{d} dataset",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(KmmError::NonFinite { row: pos / d + 1, column: pos % d + 1 });
        }
        Ok(Self { values, n, d, feature_names: None, source: source.into() })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(KmmError::DimensionMismatch { expected: d, found: bad.len() });
        }
        Self::new(rows.concat(), rows.len(), d, source)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(KmmError::DimensionMismatch { expected: self.d, found: names.len() });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Number of instances.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimensionality of each instance.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Copies the given rows, in the given order, into a new dataset.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(KmmError::InvalidParameter(format!(
                    "row index {i} out of range for {} rows",
                    self.n
                )));
            }
            values.extend_from_slice(self.row(i));
        }
        let mut out = Dataset::new(values, indices.len(), self.d, self.source.clone())?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    /// Stacks `other` below `self`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if other.d != self.d {
            return Err(KmmError::DimensionMismatch { expected: self.d, found: other.d });
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        let mut out = Dataset::new(values, self.n + other.n, self.d, self.source.clone())?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    pub(crate) fn check_same_dim(&self, other: &Dataset) -> Result<()> {
        if self.d != other.d {
            return Err(KmmError::DimensionMismatch { expected: self.d, found: other.d });
        }
        Ok(())
    }
}

/// Reads a comma-separated numeric file. Rows and columns in errors are
/// 1-based positions in the file.
pub fn load_dataset(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| KmmError::Io { path: path.to_path_buf(), source })?;

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let names = if has_header {
        match lines.next() {
            Some((_, header)) => Some(header.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
            None => return Err(KmmError::EmptyFile { path: path.to_path_buf() }),
        }
    } else {
        None
    };

    let mut expected = names.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut n = 0;
    for (row, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let d = *expected.get_or_insert(fields.len());
        if fields.len() != d {
            return Err(KmmError::RaggedRow {
                path: path.to_path_buf(),
                row,
                expected: d,
                found: fields.len(),
            });
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| KmmError::NonNumeric {
                path: path.to_path_buf(),
                row,
                column: col + 1,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(KmmError::NonFinite { row, column: col + 1 });
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(KmmError::EmptyFile { path: path.to_path_buf() });
    }
    let d = expected.unwrap_or(0);
    let ds = Dataset::new(values, n, d, path.display().to_string())?;
    match names {
        Some(names) => ds.with_feature_names(names),
        None => Ok(ds),
    }
}

/// Centers every column and scales it to unit population standard deviation.
/// Constant columns become all zeros.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let (n, d) = (ds.n(), ds.d());
    if n < 2 {
        return Err(KmmError::InvalidShape(format!("standardize needs at least 2 rows, got {n}")));
    }
    let mut out = ds.values.clone();
    for c in 0..d {
        let mean = ds.rows().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = ds.rows().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        // Relative threshold: a column whose spread is rounding noise is constant.
        let constant = sd <= 1e-12 * mean.abs().max(1.0);
        for r in 0..n {
            let v = &mut out[r * d + c];
            *v = if constant { 0.0 } else { (*v - mean) / sd };
        }
    }
    let mut res = Dataset::new(out, n, d, ds.source.clone())?;
    res.feature_names = ds.feature_names.clone();
    Ok(res)
}

/// Sizes and seed for drawing disjoint matching and reference subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_matching: usize,
    pub n_reference: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, available: usize) -> Result<()> {
        if self.n_matching == 0 || self.n_reference == 0 {
            return Err(KmmError::InvalidParameter(
                "split sizes must both be at least 1".into(),
            ));
        }
        if self.n_matching + self.n_reference > available {
            return Err(KmmError::InvalidParameter(format!(
                "split of {} matching + {} reference rows exceeds the {available} available",
                self.n_matching, self.n_reference
            )));
        }
        Ok(())
    }
}

/// Draws `n_matching + n_reference` distinct rows without replacement; the
/// first `n_matching` draws form the matching set.
pub fn split_match_reference(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (matching, reference) = split_indices(ds.n(), spec)?;
    Ok((ds.select(&matching)?, ds.select(&reference)?))
}

/// Index form of [`split_match_reference`].
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut drawn = rand::seq::index::sample(&mut rng, n, spec.n_matching + spec.n_reference).into_vec();
    let reference = drawn.split_off(spec.n_matching);
    Ok((drawn, reference))
}

/// Reference data that grows by appended blocks.
#[derive(Debug, Clone, Default)]
pub struct ReferencePool {
    batches: Vec<Dataset>,
    total: usize,
}

impl ReferencePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn batches(&self) -> &[Dataset] {
        &self.batches
    }

    pub fn dim(&self) -> Option<usize> {
        self.batches.first().map(Dataset::d)
    }

    /// All blocks stacked in insertion order.
    pub fn flatten(&self) -> Option<Dataset> {
        let (first, rest) = self.batches.split_first()?;
        let mut values = Vec::with_capacity(self.total * first.d());
        values.extend_from_slice(first.values());
        for b in rest {
            values.extend_from_slice(b.values());
        }
        Dataset::new(values, self.total, first.d(), first.source().to_string()).ok()
    }
}

/// Returns a pool with `batch` stored as a new trailing block.
pub fn append_batch(pool: &ReferencePool, batch: Dataset) -> Result<ReferencePool> {
    if let Some(d) = pool.dim() {
        if d != batch.d() {
            return Err(KmmError::DimensionMismatch { expected: d, found: batch.d() });
        }
    }
    let mut batches = pool.batches.clone();
    let total = pool.total + batch.n();
    batches.push(batch);
    Ok(ReferencePool { batches, total })
}
