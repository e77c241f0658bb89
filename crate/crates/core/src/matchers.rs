// SPDX-License-Identifier: MIT OR Apache-2.0

//! The kernel mean matching estimators.
//!
//! Every estimator solves the same ridge-regularized system
//!
//! ```text
//! alpha = (n_m / n_ref) (K_mm + lambda I)^{-1} K_{m,ref} e
//! ```
//!
//! and differs only in which reference rows play the role of `ref`:
//!
//! * [`kmm_standard`]: all of them.
//! * [`glokmm`]: the `n_h` rows with the highest self-importance.
//! * [`amkm`]: per repetition, the `n_s` rows closest (in kernel sum) to a
//!   random draw of `n` rows; the repetitions are then scaled by a
//!   nonnegative QP and averaged.
//! * [`enskmm`]: each part of a random partition, combined by part size.
//!
//! Coefficient vectors always have one entry per matching instance, so
//! predictions are `w(x) = sum_i alpha_i k(x, x_i^m)` for every estimator.
//! Selected rows are used in ascending index order, which makes a selection
//! of every row reproduce the full-reference fit bit for bit.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{KmmError, Result};
use crate::kernel::{
    kernel_matrix, kernel_row_sums, self_importance, subset_importance, top_k_important, KernelConfig,
};
use crate::solvers::{nnqp_solve, NnqpProblem, RidgeSystem, NNQP_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmm,
    GloKmm,
    Amkm,
    EnsKmm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kmm, Method::GloKmm, Method::Amkm, Method::EnsKmm];

    pub fn id(&self) -> &'static str {
        match self {
            Method::Kmm => "kmm",
            Method::GloKmm => "glokmm",
            Method::Amkm => "amkm",
            Method::EnsKmm => "enskmm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = KmmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| KmmError::InvalidParameter(format!("unknown method {s:?}; expected kmm, glokmm, amkm or enskmm")))
    }
}

/// Shape of the fusion QP over repetition scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// One independent term per repetition: `H = diag(alpha_i^T K_mm alpha_i)`.
    #[default]
    Separable,
    /// The objective of the averaged predictor `(1/t) sum_i beta_i alpha_i`,
    /// including cross terms between repetitions.
    Coupled,
}

/// Reference rows used for the linear term of the fusion QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionReference {
    /// Each repetition's own selected rows, with ratio `n_m / n_s`.
    #[default]
    Subset,
    /// The whole reference set, with ratio `n_m / n_r`.
    Full,
}

/// Tuning knobs shared by the estimators. Each estimator reads only the
/// fields it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    /// Repetitions of the adaptive estimator.
    pub t: usize,
    /// Random draw size per repetition.
    pub n: usize,
    /// Refined subset size per repetition.
    pub n_s: usize,
    /// Reference rows kept by the global estimator.
    pub n_h: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Part count for the ensemble estimator.
    pub partitions: usize,
    pub fusion: FusionMode,
    pub fusion_reference: FusionReference,
    /// Repetitions drawn from each appended batch.
    pub batch_reps: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            t: 5,
            n: 50,
            n_s: 100,
            n_h: 100,
            lambda: 1e-3,
            seed: 0,
            partitions: 5,
            fusion: FusionMode::Separable,
            fusion_reference: FusionReference::Subset,
            batch_reps: 1,
        }
    }
}

impl MatchParams {
    /// Checks the fields `method` uses against a reference set of `n_r` rows.
    pub fn validate(&self, method: Method, n_r: usize) -> Result<()> {
        let bad = |msg: String| Err(KmmError::InvalidParameter(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        let in_range = |name: &str, v: usize| {
            if v == 0 || v > n_r {
                bad(format!("{name} = {v} must lie in 1..={n_r} (reference size)"))
            } else {
                Ok(())
            }
        };
        match method {
            Method::Kmm => Ok(()),
            Method::GloKmm => in_range("n_h", self.n_h),
            Method::Amkm => {
                if self.t == 0 {
                    return bad("t must be at least 1".into());
                }
                in_range("n", self.n)?;
                in_range("n_s", self.n_s)
            }
            Method::EnsKmm => in_range("partitions", self.partitions),
        }
    }
}

/// Anything that predicts importance through a kernel expansion on anchors.
pub trait ImportanceModel {
    fn anchors(&self) -> &Dataset;
    fn coefficients(&self) -> &DVector<f64>;
    fn kernel(&self) -> &KernelConfig;
}

/// Coefficients on the matching instances from one ridge solve.
#[derive(Debug, Clone)]
pub struct KmmModel {
    pub alpha: DVector<f64>,
    pub anchors: Dataset,
    pub cfg: KernelConfig,
    pub lambda: f64,
    /// Reference rows the solve was run against, when a subset was used.
    pub reference_indices: Option<Vec<usize>>,
}

impl ImportanceModel for KmmModel {
    fn anchors(&self) -> &Dataset {
        &self.anchors
    }

    fn coefficients(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn kernel(&self) -> &KernelConfig {
        &self.cfg
    }
}

/// Convergence record of the fusion QP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionReport {
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Repetition models fused by nonnegative scales `beta`.
#[derive(Clone)]
pub struct AmkmModel {
    pub reps: Vec<KmmModel>,
    /// Linear coefficient `c_i` of each repetition in the fusion QP, where
    /// the QP term is `1/2 a_i beta_i^2 - c_i beta_i`.
    pub linear_terms: Vec<f64>,
    pub beta: DVector<f64>,
    /// `(1/t) sum_i beta_i alpha_i`.
    pub combined_alpha: DVector<f64>,
    pub fusion: FusionReport,
    pub fusion_mode: FusionMode,
    system: Arc<RidgeSystem>,
}

impl fmt::Debug for AmkmModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AmkmModel")
            .field("reps", &self.reps.len())
            .field("beta", &self.beta.as_slice())
            .field("fusion", &self.fusion)
            .finish()
    }
}

impl AmkmModel {
    pub fn repetitions(&self) -> usize {
        self.reps.len()
    }

    /// Fusion objective `1/2 b^T H b + f^T b` of this model's QP at `beta`.
    pub fn fusion_objective(&self, beta: &DVector<f64>) -> Result<f64> {
        let p = fusion_problem(&self.system, &self.reps, &self.linear_terms, self.fusion_mode)?;
        Ok(p.objective(beta))
    }
}

impl ImportanceModel for AmkmModel {
    fn anchors(&self) -> &Dataset {
        &self.reps[0].anchors
    }

    fn coefficients(&self) -> &DVector<f64> {
        &self.combined_alpha
    }

    fn kernel(&self) -> &KernelConfig {
        &self.reps[0].cfg
    }
}

/// Either kind of fitted model, as returned by [`fit`].
#[derive(Debug, Clone)]
pub enum FittedModel {
    Single(KmmModel),
    Fused(AmkmModel),
}

impl ImportanceModel for FittedModel {
    fn anchors(&self) -> &Dataset {
        match self {
            FittedModel::Single(m) => m.anchors(),
            FittedModel::Fused(m) => m.anchors(),
        }
    }

    fn coefficients(&self) -> &DVector<f64> {
        match self {
            FittedModel::Single(m) => m.coefficients(),
            FittedModel::Fused(m) => m.coefficients(),
        }
    }

    fn kernel(&self) -> &KernelConfig {
        match self {
            FittedModel::Single(m) => m.kernel(),
            FittedModel::Fused(m) => m.kernel(),
        }
    }
}

/// Fits `method` with the given parameters.
pub fn fit(
    method: Method,
    matching: &Dataset,
    reference: &Dataset,
    params: &MatchParams,
    cfg: &KernelConfig,
) -> Result<FittedModel> {
    Ok(match method {
        Method::Kmm => FittedModel::Single(kmm_standard(matching, reference, cfg, params.lambda)?),
        Method::GloKmm => FittedModel::Single(glokmm(matching, reference, params, cfg)?),
        Method::Amkm => FittedModel::Fused(amkm(matching, reference, params, cfg)?),
        Method::EnsKmm => FittedModel::Single(enskmm(matching, reference, params, cfg)?),
    })
}

fn matching_system(matching: &Dataset, cfg: &KernelConfig, lambda: f64) -> Result<RidgeSystem> {
    RidgeSystem::new(kernel_matrix(matching, matching, cfg)?, lambda)
}

/// Solves against `reduced`, returning alpha and `K_{m,reduced} e`.
fn fit_against(
    system: &RidgeSystem,
    matching: &Dataset,
    reduced: &Dataset,
    cfg: &KernelConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let b = DVector::from_vec(kernel_row_sums(matching, reduced, cfg)?);
    let ratio = matching.n() as f64 / reduced.n() as f64;
    let alpha = system.solve(&b) * ratio;
    Ok((alpha, b))
}

fn model(alpha: DVector<f64>, matching: &Dataset, cfg: &KernelConfig, lambda: f64, idx: Option<Vec<usize>>) -> KmmModel {
    KmmModel { alpha, anchors: matching.clone(), cfg: *cfg, lambda, reference_indices: idx }
}

fn check_inputs(matching: &Dataset, reference: &Dataset) -> Result<()> {
    matching.check_same_dim(reference)
}

/// Closed-form KMM against the full reference set.
pub fn kmm_standard(matching: &Dataset, reference: &Dataset, cfg: &KernelConfig, lambda: f64) -> Result<KmmModel> {
    check_inputs(matching, reference)?;
    let system = matching_system(matching, cfg, lambda)?;
    let (alpha, _) = fit_against(&system, matching, reference, cfg)?;
    Ok(model(alpha, matching, cfg, lambda, None))
}

/// KMM against the `n_h` reference rows of highest self-importance.
pub fn glokmm(matching: &Dataset, reference: &Dataset, params: &MatchParams, cfg: &KernelConfig) -> Result<KmmModel> {
    check_inputs(matching, reference)?;
    params.validate(Method::GloKmm, reference.n())?;
    let scores = self_importance(reference, cfg);
    let mut keep = top_k_important(&scores, params.n_h)?;
    keep.sort_unstable();
    let reduced = reference.select(&keep)?;
    let system = matching_system(matching, cfg, params.lambda)?;
    let (alpha, _) = fit_against(&system, matching, &reduced, cfg)?;
    Ok(model(alpha, matching, cfg, params.lambda, Some(keep)))
}

/// Seed of repetition `i` under base seed `base`: the SplitMix64 finalizer
/// applied to `base + (i + 1) * 0x9E3779B97F4A7C15` (wrapping).
pub fn repetition_seed(base: u64, i: u64) -> u64 {
    let mut z = base.wrapping_add(i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One adaptive repetition: random draw, refinement, reduced solve.
/// Returns the model and its fusion linear coefficient.
fn refined_repetition(
    system: &RidgeSystem,
    matching: &Dataset,
    reference: &Dataset,
    params: &MatchParams,
    cfg: &KernelConfig,
    seed: u64,
    full_row_sums: Option<&DVector<f64>>,
) -> Result<(KmmModel, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = rand::seq::index::sample(&mut rng, reference.n(), params.n).into_vec();
    let scores = subset_importance(reference, &drawn, cfg)?;
    let mut keep = top_k_important(&scores, params.n_s)?;
    keep.sort_unstable();
    let reduced = reference.select(&keep)?;
    let (alpha, b) = fit_against(system, matching, &reduced, cfg)?;
    let n_m = matching.n() as f64;
    let linear = match full_row_sums {
        None => n_m / reduced.n() as f64 * alpha.dot(&b),
        Some(full) => n_m / reference.n() as f64 * alpha.dot(full),
    };
    Ok((model(alpha, matching, cfg, system.lambda(), Some(keep)), linear))
}

fn fusion_problem(
    system: &RidgeSystem,
    reps: &[KmmModel],
    linear: &[f64],
    mode: FusionMode,
) -> Result<NnqpProblem> {
    let t = reps.len();
    let k = system.gram();
    let k_alpha: Vec<DVector<f64>> = reps.iter().map(|r| k * &r.alpha).collect();
    let (h, f) = match mode {
        FusionMode::Separable => (
            DMatrix::from_fn(t, t, |i, l| if i == l { reps[i].alpha.dot(&k_alpha[i]) } else { 0.0 }),
            DVector::from_fn(t, |i, _| -linear[i]),
        ),
        FusionMode::Coupled => {
            let tt = t as f64;
            let mut h = DMatrix::zeros(t, t);
            for i in 0..t {
                for l in 0..=i {
                    let v = reps[i].alpha.dot(&k_alpha[l]) / (tt * tt);
                    h[(i, l)] = v;
                    h[(l, i)] = v;
                }
            }
            (h, DVector::from_fn(t, |i, _| -linear[i] / tt))
        }
    };
    NnqpProblem::new(h, f)
}

fn fuse(
    system: Arc<RidgeSystem>,
    reps: Vec<KmmModel>,
    linear_terms: Vec<f64>,
    mode: FusionMode,
) -> Result<AmkmModel> {
    let problem = fusion_problem(&system, &reps, &linear_terms, mode)?;
    let sol = nnqp_solve(&problem, NNQP_TOL, problem.default_max_iter());
    let t = reps.len() as f64;
    let mut combined = DVector::zeros(system.dim());
    for (rep, b) in reps.iter().zip(sol.beta.iter()) {
        combined.axpy(*b, &rep.alpha, 1.0);
    }
    combined /= t;
    Ok(AmkmModel {
        reps,
        linear_terms,
        beta: sol.beta,
        combined_alpha: combined,
        fusion: FusionReport {
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            converged: sol.converged,
        },
        fusion_mode: mode,
        system,
    })
}

/// Adaptive matching: `t` refined repetitions fused by a nonnegative QP.
/// A fusion QP that misses its tolerance is reported in
/// [`AmkmModel::fusion`] rather than as an error.
pub fn amkm(matching: &Dataset, reference: &Dataset, params: &MatchParams, cfg: &KernelConfig) -> Result<AmkmModel> {
    check_inputs(matching, reference)?;
    params.validate(Method::Amkm, reference.n())?;
    let system = Arc::new(matching_system(matching, cfg, params.lambda)?);
    let full = match params.fusion_reference {
        FusionReference::Subset => None,
        FusionReference::Full => Some(DVector::from_vec(kernel_row_sums(matching, reference, cfg)?)),
    };
    let mut reps = Vec::with_capacity(params.t);
    let mut linear = Vec::with_capacity(params.t);
    for i in 0..params.t {
        let seed = repetition_seed(params.seed, i as u64);
        let (m, c) = refined_repetition(&system, matching, reference, params, cfg, seed, full.as_ref())?;
        reps.push(m);
        linear.push(c);
    }
    fuse(system, reps, linear, params.fusion)
}

/// Extends `model` with `params.batch_reps` repetitions drawn from
/// `new_batch` alone and re-solves the fusion QP over all repetitions.
/// Existing coefficient vectors are carried over unchanged. Under
/// [`FusionReference::Full`] the new linear terms use the batch as their
/// reference set.
pub fn amkm_append(
    model: &AmkmModel,
    matching: &Dataset,
    new_batch: &Dataset,
    params: &MatchParams,
    cfg: &KernelConfig,
) -> Result<AmkmModel> {
    check_inputs(matching, new_batch)?;
    if model.anchors() != matching {
        return Err(KmmError::InvalidParameter("model was fit on a different matching set".into()));
    }
    if model.kernel().sigma() != cfg.sigma() {
        return Err(KmmError::InvalidParameter(format!(
            "model bandwidth {} differs from {}",
            model.kernel().sigma(),
            cfg.sigma()
        )));
    }
    if params.batch_reps == 0 {
        return Err(KmmError::InvalidParameter("batch_reps must be at least 1".into()));
    }
    params.validate(Method::Amkm, new_batch.n())?;
    let system = if model.system.lambda() == params.lambda {
        Arc::clone(&model.system)
    } else {
        Arc::new(matching_system(matching, cfg, params.lambda)?)
    };
    let full = match params.fusion_reference {
        FusionReference::Subset => None,
        FusionReference::Full => Some(DVector::from_vec(kernel_row_sums(matching, new_batch, cfg)?)),
    };
    let mut reps = model.reps.clone();
    let mut linear = model.linear_terms.clone();
    for j in 0..params.batch_reps {
        let seed = repetition_seed(params.seed, (model.reps.len() + j) as u64);
        let (m, c) = refined_repetition(&system, matching, new_batch, params, cfg, seed, full.as_ref())?;
        reps.push(m);
        linear.push(c);
    }
    fuse(system, reps, linear, params.fusion)
}

/// Ensemble KMM: random near-equal partition of the reference rows, one
/// solve per part, coefficients summed with weights `|part| / n_r`.
pub fn enskmm(matching: &Dataset, reference: &Dataset, params: &MatchParams, cfg: &KernelConfig) -> Result<KmmModel> {
    check_inputs(matching, reference)?;
    let n_r = reference.n();
    params.validate(Method::EnsKmm, n_r)?;
    let mut order: Vec<usize> = (0..n_r).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));

    let system = matching_system(matching, cfg, params.lambda)?;
    let (base, extra) = (n_r / params.partitions, n_r % params.partitions);
    let mut alpha = DVector::zeros(matching.n());
    let mut start = 0;
    for p in 0..params.partitions {
        let len = base + usize::from(p < extra);
        let mut part = order[start..start + len].to_vec();
        start += len;
        part.sort_unstable();
        let reduced = reference.select(&part)?;
        let (a, _) = fit_against(&system, matching, &reduced, cfg)?;
        alpha.axpy(len as f64 / n_r as f64, &a, 1.0);
    }
    Ok(model(alpha, matching, cfg, params.lambda, None))
}

/// `w(x) = sum_i a_i k(x, anchor_i)` for every row `x` of `x_eval`.
pub fn predict_importance<M: ImportanceModel + ?Sized>(model: &M, x_eval: &Dataset) -> Result<Vec<f64>> {
    let anchors = model.anchors();
    anchors.check_same_dim(x_eval)?;
    let k = kernel_matrix(x_eval, anchors, model.kernel())?;
    Ok((k * model.coefficients()).iter().copied().collect())
}
