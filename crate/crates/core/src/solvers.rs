// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense solvers: SVD pseudoinverse, ridge systems, and a nonnegative QP.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU, SVD};

use crate::error::{KmmError, Result};

/// Default relative cutoff for singular values in [`pinv_solve`].
pub const PINV_TOL: f64 = 1e-12;
/// Default KKT tolerance for [`nnqp_solve`].
pub const NNQP_TOL: f64 = 1e-8;

const SVD_MAX_ITER: usize = 10_000;

/// `K^+ B` with `K^+ = V S^+ U^T`. Singular values at or below
/// `tol * s_max` are treated as zero.
pub fn pinv_solve(k: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !k.is_square() {
        return Err(KmmError::InvalidShape(format!("pinv_solve needs a square matrix, got {:?}", k.shape())));
    }
    if b.nrows() != k.nrows() {
        return Err(KmmError::DimensionMismatch { expected: k.nrows(), found: b.nrows() });
    }
    if tol < 0.0 || !tol.is_finite() {
        return Err(KmmError::InvalidParameter(format!("pinv tolerance must be nonnegative, got {tol}")));
    }
    let svd = SVD::try_new(k.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(KmmError::SvdNoConvergence)?;
    let (u, v_t) = match (&svd.u, &svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(KmmError::SvdNoConvergence),
    };
    let s_max = svd.singular_values.max();
    let cutoff = tol * s_max;
    // S^+ U^T B, row by row, then V.
    let mut tmp = u.transpose() * b;
    for (i, s) in svd.singular_values.iter().enumerate() {
        let inv = if *s > cutoff && *s > 0.0 { 1.0 / s } else { 0.0 };
        tmp.row_mut(i).scale_mut(inv);
    }
    Ok(v_t.transpose() * tmp)
}

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

/// A factorized `K + lambda I`, reusable across right-hand sides.
pub struct RidgeSystem {
    gram: DMatrix<f64>,
    lambda: f64,
    factor: Factor,
}

impl RidgeSystem {
    pub fn new(k: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !k.is_square() {
            return Err(KmmError::InvalidShape(format!("ridge system needs a square matrix, got {:?}", k.shape())));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(KmmError::InvalidParameter(format!("ridge penalty must be nonnegative, got {lambda}")));
        }
        let mut a = k.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let factor = match Cholesky::new(a.clone()) {
            Some(c) => Factor::Cholesky(c),
            None => {
                // Only reached when K + lambda I is not numerically positive definite.
                let lu = LU::new(a);
                if !lu.is_invertible() || lu.u().diagonal().iter().any(|p| p.abs() <= f64::EPSILON * k.norm()) {
                    return Err(KmmError::Singular(format!(
                        "K + {lambda} I is singular ({}x{})",
                        k.nrows(),
                        k.ncols()
                    )));
                }
                Factor::Lu(lu)
            }
        };
        Ok(Self { gram: k, lambda, factor })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The unpenalized matrix `K`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(b),
            Factor::Lu(lu) => lu.solve(b).expect("invertibility checked at construction"),
        }
    }
}

/// `(K + lambda I)^{-1} b`.
pub fn ridge_solve(k: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if b.len() != k.nrows() {
        return Err(KmmError::DimensionMismatch { expected: k.nrows(), found: b.len() });
    }
    Ok(RidgeSystem::new(k.clone(), lambda)?.solve(b))
}

/// `min 1/2 b^T H b + f^T b` subject to `b >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnqpProblem {
    h: DMatrix<f64>,
    f: DVector<f64>,
}

impl NnqpProblem {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let t = f.len();
        if t == 0 {
            return Err(KmmError::InvalidShape("QP needs at least one variable".into()));
        }
        if h.shape() != (t, t) {
            return Err(KmmError::InvalidShape(format!("H is {:?}, expected {t}x{t}", h.shape())));
        }
        if h.iter().chain(f.iter()).any(|v| !v.is_finite()) {
            return Err(KmmError::InvalidParameter("QP data must be finite".into()));
        }
        let scale = h.amax().max(1.0);
        for i in 0..t {
            for j in 0..i {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-10 * scale {
                    return Err(KmmError::InvalidParameter(format!("H is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { h, f })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        0.5 * beta.dot(&(&self.h * beta)) + self.f.dot(beta)
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.h * beta + &self.f
    }

    /// Largest violation of the KKT conditions at `beta`: `|g_i|` on
    /// positive coordinates, `max(0, -g_i)` on zero coordinates, and any
    /// negativity of `beta` itself.
    pub fn kkt_residual(&self, beta: &DVector<f64>) -> f64 {
        let g = self.gradient(beta);
        beta.iter()
            .zip(g.iter())
            .map(|(&b, &gi)| {
                if b > 0.0 {
                    gi.abs()
                } else if b == 0.0 {
                    (-gi).max(0.0)
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }

    /// Iteration budget used when the caller does not supply one.
    pub fn default_max_iter(&self) -> usize {
        10 * self.dim() * self.dim() + 1000
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnqpSolution {
    pub beta: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the nonnegative QP with a primal active-set method (the
/// Lawson-Hanson scheme generalized from least squares to a quadratic
/// objective). When `H` is rank deficient the free-set subproblem can be
/// unbounded and the active-set pass may stall; the solver then switches to
/// proximal-point iterations, each an active-set solve of the strictly
/// convex problem with `H + rho I` and linear term `f - rho beta_k`, whose
/// fixed points satisfy the original KKT conditions. Exceeding `max_iter`
/// total inner steps returns the current iterate with `converged = false`.
pub fn nnqp_solve(p: &NnqpProblem, tol: f64, max_iter: usize) -> NnqpSolution {
    let t = p.dim();
    let mut beta = DVector::zeros(t);
    // A nonsingular problem finishes in a few passes over the variables;
    // longer runs indicate cycling on a singular free set.
    let mut iterations = active_set(&p.h, &p.f, &mut beta, tol, max_iter.min(5 * t + 20));

    if p.kkt_residual(&beta) > tol {
        let rho = 1e-6 * p.h.amax().max(p.f.amax()).max(1.0);
        let mut h_reg = p.h.clone();
        for i in 0..t {
            h_reg[(i, i)] += rho;
        }
        while iterations < max_iter && p.kkt_residual(&beta) > tol {
            let shifted = &p.f - &beta * rho;
            iterations += active_set(&h_reg, &shifted, &mut beta, 0.1 * tol, max_iter - iterations).max(1);
        }
    }

    let kkt_residual = p.kkt_residual(&beta);
    NnqpSolution { converged: kkt_residual <= tol, beta, kkt_residual, iterations }
}

fn kkt(h: &DMatrix<f64>, f: &DVector<f64>, beta: &DVector<f64>) -> (DVector<f64>, f64) {
    let g = h * beta + f;
    let r = beta
        .iter()
        .zip(g.iter())
        .map(|(&b, &gi)| if b > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max);
    (g, r)
}

/// Active-set iterations from the feasible point `beta`, whose support is
/// taken as the initial free set. Returns the number of inner steps used.
fn active_set(h: &DMatrix<f64>, f: &DVector<f64>, beta: &mut DVector<f64>, tol: f64, budget: usize) -> usize {
    let t = f.len();
    let mut free: Vec<bool> = beta.iter().map(|&b| b > 0.0).collect();
    let mut steps = 0;

    'outer: loop {
        let (grad, residual) = kkt(h, f, beta);
        if residual <= tol {
            break;
        }
        // Free the bound variable with the most negative gradient; if every
        // bound variable is fine, the free set only needs re-solving.
        let entering = (0..t)
            .filter(|&i| !free[i] && grad[i] < -tol)
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        if let Some(j) = entering {
            free[j] = true;
        }

        loop {
            steps += 1;
            if steps > budget {
                break 'outer;
            }
            let idx: Vec<usize> = (0..t).filter(|&i| free[i]).collect();
            if idx.is_empty() {
                break;
            }
            let z = solve_free(h, f, &idx);
            if z.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    beta[i] = z[k];
                }
                if entering.is_none() && kkt(h, f, beta).1 > tol {
                    // Interior free-set solve that changes nothing: stalled.
                    break 'outer;
                }
                break;
            }
            // Step from beta toward z until the first free variable hits zero.
            let mut step = 1.0f64;
            for (k, &i) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let denom = beta[i] - z[k];
                    let s = if denom > 0.0 { beta[i] / denom } else { 0.0 };
                    step = step.min(s);
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                beta[i] += step * (z[k] - beta[i]);
            }
            let mut dropped = false;
            for (k, &i) in idx.iter().enumerate() {
                if beta[i] <= 0.0 || (z[k] <= 0.0 && beta[i] <= f64::EPSILON * (1.0 + z[k].abs())) {
                    beta[i] = 0.0;
                    free[i] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // Degenerate step; drop the most negative target coordinate.
                if let Some(k) = (0..idx.len()).filter(|&k| z[k] <= 0.0).min_by(|&a, &b| z[a].total_cmp(&z[b])) {
                    beta[idx[k]] = 0.0;
                    free[idx[k]] = false;
                }
            }
        }
    }
    steps
}

fn solve_free(h_full: &DMatrix<f64>, f_full: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let m = idx.len();
    let h = DMatrix::from_fn(m, m, |a, b| h_full[(idx[a], idx[b])]);
    let rhs = DVector::from_fn(m, |a, _| -f_full[idx[a]]);
    if let Some(c) = Cholesky::new(h.clone()) {
        let z = c.solve(&rhs);
        if z.iter().all(|v| v.is_finite()) {
            return z;
        }
    }
    let rhs = DMatrix::from_column_slice(m, 1, rhs.as_slice());
    match pinv_solve(&h, &rhs, PINV_TOL) {
        Ok(z) => DVector::from_column_slice(z.as_slice()),
        Err(_) => DVector::zeros(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn solve(h: DMatrix<f64>, f: &[f64]) -> NnqpSolution {
        let p = NnqpProblem::new(h, DVector::from_column_slice(f)).unwrap();
        let max_iter = p.default_max_iter();
        nnqp_solve(&p, NNQP_TOL, max_iter)
    }

    #[test]
    fn pinv_identity_and_diagonal() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = pinv_solve(&DMatrix::identity(3, 3), &b, PINV_TOL).unwrap();
        assert_abs_diff_eq!(x, b, epsilon = 1e-14);

        let x = pinv_solve(&diag(&[2.0, 0.0]), &DMatrix::from_column_slice(2, 1, &[2.0, 5.0]), PINV_TOL).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(x[(1, 0)], 0.0);
    }

    #[test]
    fn pinv_shape_errors() {
        let k = DMatrix::zeros(2, 3);
        assert!(pinv_solve(&k, &DMatrix::zeros(2, 1), PINV_TOL).is_err());
        assert!(pinv_solve(&DMatrix::identity(2, 2), &DMatrix::zeros(3, 1), PINV_TOL).is_err());
    }

    #[test]
    fn ridge_examples() {
        let x = ridge_solve(&DMatrix::identity(2, 2), &DVector::from_column_slice(&[2.0, 4.0]), 1.0).unwrap();
        assert_abs_diff_eq!(x, DVector::from_column_slice(&[1.0, 2.0]), epsilon = 1e-15);

        let b = DVector::from_column_slice(&[3.0, -1.0, 0.5]);
        let x = ridge_solve(&DMatrix::zeros(3, 3), &b, 1.0).unwrap();
        assert_abs_diff_eq!(x, b, epsilon = 1e-15);

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            ridge_solve(&singular, &DVector::from_column_slice(&[1.0, 2.0]), 0.0),
            Err(KmmError::Singular(_))
        ));
        assert!(ridge_solve(&singular, &DVector::zeros(2), -1.0).is_err());
    }

    #[test]
    fn nnqp_examples() {
        let s = solve(DMatrix::identity(2, 2), &[-1.0, -2.0]);
        assert!(s.converged);
        assert_abs_diff_eq!(s.beta, DVector::from_column_slice(&[1.0, 2.0]), epsilon = 1e-12);

        let s = solve(DMatrix::identity(2, 2), &[1.0, 1.0]);
        assert!(s.converged);
        assert_eq!(s.beta, DVector::zeros(2));

        let s = solve(diag(&[2.0, 2.0]), &[-2.0, 3.0]);
        assert!(s.converged);
        assert_abs_diff_eq!(s.beta[0], 1.0, epsilon = 1e-12);
        assert_eq!(s.beta[1], 0.0);
    }

    #[test]
    fn nnqp_coupled_active_constraint() {
        // Unconstrained optimum (2, -1) is infeasible; optimum on the face b1 = 0
        // is b0 = -f0 / H00 = 1.
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = solve(h, &[-2.0, 0.0]);
        assert!(s.converged, "{s:?}");
        assert_abs_diff_eq!(s.beta[0], 1.0, epsilon = 1e-12);
        assert_eq!(s.beta[1], 0.0);
    }

    #[test]
    fn nnqp_unbounded_reports_nonconvergence() {
        let s = solve(DMatrix::zeros(1, 1), &[-1.0]);
        assert!(!s.converged);
    }

    #[test]
    fn nnqp_problem_validation() {
        assert!(NnqpProblem::new(DMatrix::zeros(0, 0), DVector::zeros(0)).is_err());
        assert!(NnqpProblem::new(DMatrix::zeros(2, 2), DVector::zeros(3)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(NnqpProblem::new(asym, DVector::zeros(2)).is_err());
    }
}
