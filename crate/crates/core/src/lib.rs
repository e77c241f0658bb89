// SPDX-License-Identifier: MIT OR Apache-2.0

//! Kernel mean matching (KMM) for density-ratio estimation under covariate shift.
//!
//! Given matching samples `x^m ~ p_m` and reference samples `x^r ~ p_r`, the
//! estimators here fit coefficients `alpha` so that the weighted kernel mean of
//! the matching set approaches the reference kernel mean. The importance
//! `w(x) = p_r(x) / p_m(x)` is then predicted as `sum_i alpha_i k(x, x_i^m)`.
//!
//! | Estimator | Reference data used per solve |
//! |-----------|-------------------------------|
//! | [`kmm_standard`] | the whole reference set |
//! | [`glokmm`] | the `n_h` most self-important reference points |
//! | [`amkm`] | `t` refined subsets of size `n_s`, fused by a nonnegative QP |
//! | [`enskmm`] | random partitions, size-weighted sum |
//!
//! [`amkm_append`] extends a fitted adaptive model with repetitions drawn from
//! newly arrived reference batches without touching prior repetitions.

pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod matchers;
pub mod solvers;

pub use data::{append_batch, load_dataset, split_match_reference, standardize, Dataset, ReferencePool, SplitSpec};
pub use error::{KmmError, Result};
pub use eval::{
    generate_shift, mmd_squared, nmse, time_run, ExperimentResult, ShiftSample, SyntheticShiftSpec,
    TruthMode,
};
pub use kernel::{
    gaussian_kernel, information_potential, kernel_matrix, median_heuristic, renyi_entropy,
    self_importance, subset_importance, top_k_important, BandwidthPolicy, ImportanceScores,
    KernelConfig,
};
pub use matchers::{
    amkm, amkm_append, enskmm, fit, glokmm, kmm_standard, predict_importance, AmkmModel, FittedModel,
    FusionMode, FusionReference, ImportanceModel, KmmModel, MatchParams, Method,
};
pub use solvers::{nnqp_solve, pinv_solve, ridge_solve, NnqpProblem, NnqpSolution, RidgeSystem};
