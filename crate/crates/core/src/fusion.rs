//! Outer Löwner-John fusion of predicted information matrices.
//!
//! The semidefinite program
//!
//! ```text
//! min  Tr(S⁻¹)   s.t.  0 ≺ S ⪯ Σ λ_j S_j,  Σ λ_j ≤ 1,  λ ≥ 0
//! ```
//!
//! attains its optimum on the equality manifold `S = Σ λ_j S_j` with the
//! weights summing to one, so it is solved here as the smooth convex program
//! `min_λ Tr((Σ λ_j S_j)⁻¹)` over the unit simplex. The solver is Frank-Wolfe
//! with away steps and an exact line search, which keeps iterates on the
//! simplex and reaches vertex solutions exactly through drop steps.

use crate::error::{Error, Result};
use crate::matkernel::{cholesky_psd, eigen_sym, vec_axpy, Cholesky, SymMatrix};

/// Stopping tolerance on the Frank-Wolfe gap, relative to `max(1, objective)`.
pub const GAP_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;
/// Inputs whose smallest eigenvalue is below this fraction of the largest
/// are rejected as not positive definite.
pub const PD_FLOOR: f64 = 1e-12;

/// Predicted information matrices entering the fusion at one node, own entry
/// first.
#[derive(Clone, Debug)]
pub struct FusionInput {
    dim: usize,
    ids: Vec<usize>,
    infos: Vec<SymMatrix>,
}

impl FusionInput {
    pub fn new(infos: Vec<(usize, SymMatrix)>) -> Result<Self> {
        let dim = infos
            .first()
            .map(|(_, s)| s.dim())
            .ok_or_else(|| Error::invalid("fusion input must not be empty"))?;
        let mut ids = Vec::with_capacity(infos.len());
        let mut mats = Vec::with_capacity(infos.len());
        for (id, s) in infos {
            if s.dim() != dim {
                return Err(Error::invalid("fusion inputs have mismatched dimensions"));
            }
            check_strictly_pd(&s)?;
            ids.push(id);
            mats.push(s);
        }
        Ok(Self {
            dim,
            ids,
            infos: mats,
        })
    }

    /// Convenience constructor numbering the matrices `0..len`.
    pub fn from_matrices(infos: Vec<SymMatrix>) -> Result<Self> {
        Self::new(infos.into_iter().enumerate().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn infos(&self) -> &[SymMatrix] {
        &self.infos
    }

    /// `Σ λ_j S_j`
    pub fn combine(&self, lambda: &[f64]) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.dim);
        for (w, s) in lambda.iter().zip(&self.infos) {
            if *w != 0.0 {
                m.axpy(*w, s);
            }
        }
        m
    }
}

fn check_strictly_pd(s: &SymMatrix) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::SingularMatrix {
            min_eigenvalue: f64::NAN,
        });
    }
    let eig = eigen_sym(s);
    let lmin = eig.values[0];
    let lmax = *eig.values.last().unwrap();
    if lmax <= 0.0 || lmin < PD_FLOOR * lmax {
        return Err(Error::SingularMatrix {
            min_eigenvalue: lmin,
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutcome {
    /// Fused information matrix `Σ λ*_j S_j`.
    pub s_star: SymMatrix,
    /// Optimal weights, aligned with [`FusionOutcome::ids`].
    pub lambda_star: Vec<f64>,
    pub ids: Vec<usize>,
    /// `Tr(s_star⁻¹)`
    pub objective: f64,
    pub iterations: usize,
    /// Final Frank-Wolfe gap, an upper bound on `objective - optimum`.
    pub gap: f64,
}

impl FusionOutcome {
    pub fn weight_of(&self, id: usize) -> Option<f64> {
        self.ids
            .iter()
            .position(|&i| i == id)
            .map(|k| self.lambda_star[k])
    }

    /// `‖S* − Σλ*_j S_j‖_F / ‖S*‖_F`
    pub fn consensus_residual(&self, input: &FusionInput) -> f64 {
        let recombined = input.combine(&self.lambda_star);
        (&self.s_star - &recombined).frobenius_norm() / self.s_star.frobenius_norm()
    }
}

/// Value `Tr(M⁻¹)` and gradient `−Tr(M⁻¹ S_j M⁻¹)` at `M = Σ λ_j S_j`.
pub fn lj_objective_and_gradient(lambda: &[f64], input: &FusionInput) -> Result<(f64, Vec<f64>)> {
    if lambda.len() != input.len() {
        return Err(Error::invalid("weight vector length does not match fusion input"));
    }
    let m = input.combine(lambda);
    let ch = factor(&m)?;
    Ok(value_and_gradient(&ch, input))
}

fn factor(m: &SymMatrix) -> Result<Cholesky> {
    cholesky_psd(m, 0.0).ok_or_else(|| Error::SingularMatrix {
        min_eigenvalue: m.min_eigenvalue(),
    })
}

fn value_and_gradient(ch: &Cholesky, input: &FusionInput) -> (f64, Vec<f64>) {
    let minv = ch.inverse();
    let minv_sq = SymMatrix::from_matrix(&minv.matmul(&minv)).expect("square");
    let grad = input
        .infos
        .iter()
        .map(|s| -s.trace_product(&minv_sq))
        .collect();
    (minv.trace(), grad)
}

/// Minimizes `Tr((Σ λ_j S_j)⁻¹)` over the unit simplex.
pub fn solve_lj(input: &FusionInput) -> Result<FusionOutcome> {
    let k = input.len();
    if k == 1 {
        let s = input.infos[0].clone();
        let objective = factor(&s)?.inverse().trace();
        return Ok(FusionOutcome {
            s_star: s,
            lambda_star: vec![1.0],
            ids: input.ids.clone(),
            objective,
            iterations: 0,
            gap: 0.0,
        });
    }

    let mut lambda = vec![1.0 / k as f64; k];
    let mut last_gap = f64::INFINITY;
    let mut last_obj = f64::NAN;

    for iter in 0..MAX_ITERATIONS {
        let m = input.combine(&lambda);
        let ch = factor(&m)?;
        let (obj, grad) = value_and_gradient(&ch, input);

        let lam_dot_g: f64 = lambda.iter().zip(&grad).map(|(l, g)| l * g).sum();
        let fw = argmin(&grad);
        let fw_gap = lam_dot_g - grad[fw];
        last_gap = fw_gap;
        last_obj = obj;
        if fw_gap <= GAP_TOL * obj.max(1.0) {
            return Ok(finish(input, lambda, obj, iter, fw_gap));
        }

        // away vertex: worst gradient among the active atoms
        let away = (0..k)
            .filter(|&j| lambda[j] > 0.0)
            .max_by(|&a, &b| grad[a].total_cmp(&grad[b]))
            .expect("simplex point has an active atom");
        let away_gap = grad[away] - lam_dot_g;

        let mut dir = vec![0.0; k];
        let (max_step, is_away) = if fw_gap >= away_gap || lambda[away] >= 1.0 {
            for (j, d) in dir.iter_mut().enumerate() {
                *d = -lambda[j];
            }
            dir[fw] += 1.0;
            (1.0, false)
        } else {
            dir.copy_from_slice(&lambda);
            dir[away] -= 1.0;
            (lambda[away] / (1.0 - lambda[away]), true)
        };

        let mut delta = SymMatrix::zeros(input.dim);
        for (d, s) in dir.iter().zip(&input.infos) {
            if *d != 0.0 {
                delta.axpy(*d, s);
            }
        }
        let step = exact_line_search(&ch, &delta, max_step);
        if step <= 0.0 {
            // no further decrease representable in floating point
            break;
        }
        vec_axpy(&mut lambda, step, &dir);
        if step >= max_step {
            if is_away {
                lambda[away] = 0.0;
            } else {
                lambda.iter_mut().for_each(|l| *l = 0.0);
                lambda[fw] = 1.0;
            }
        }
        for l in lambda.iter_mut() {
            if *l < 0.0 {
                *l = 0.0;
            }
        }
    }

    if last_gap <= GAP_TOL * last_obj.max(1.0) {
        return Ok(finish(input, lambda, last_obj, MAX_ITERATIONS, last_gap));
    }
    Err(Error::FusionNotConverged(Box::new(finish(
        input,
        lambda,
        last_obj,
        MAX_ITERATIONS,
        last_gap,
    ))))
}

fn finish(input: &FusionInput, lambda: Vec<f64>, objective: f64, iterations: usize, gap: f64) -> FusionOutcome {
    FusionOutcome {
        s_star: input.combine(&lambda),
        lambda_star: lambda,
        ids: input.ids.clone(),
        objective,
        iterations,
        gap,
    }
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty")
}

/// Minimizes `φ(γ) = Tr((M + γD)⁻¹)` on `[0, max_step]`.
///
/// With `M = L·Lᵀ` and `L⁻¹·D·L⁻ᵀ = V·diag(e)·Vᵀ`, `φ(γ) = Σ_k w_k / (1 + γ e_k)`
/// where `w_k = ‖L⁻ᵀ v_k‖²`; the derivative is available in closed form and
/// the root of `φ'` is bracketed and polished with safeguarded Newton.
fn exact_line_search(ch: &Cholesky, delta: &SymMatrix, max_step: f64) -> f64 {
    let n = ch.dim();
    // Y = L⁻¹·D column by column, then E = L⁻¹·Yᵀ (= L⁻¹·D·L⁻ᵀ since D is symmetric)
    let y_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| ch.solve_lower(&(0..n).map(|i| delta.get(i, j)).collect::<Vec<_>>()))
        .collect();
    let e_cols: Vec<Vec<f64>> = (0..n)
        .map(|i| ch.solve_lower(&(0..n).map(|j| y_cols[j][i]).collect::<Vec<_>>()))
        .collect();
    let e = SymMatrix::from_fn(n, |i, j| 0.5 * (e_cols[i][j] + e_cols[j][i]));
    let eig = eigen_sym(&e);
    let weights: Vec<f64> = (0..n)
        .map(|k| {
            let u = ch.solve_upper(&eig.vector(k));
            u.iter().map(|x| x * x).sum()
        })
        .collect();
    let vals = &eig.values;

    let dphi = |g: f64| -> f64 {
        -(0..n)
            .map(|k| weights[k] * vals[k] / (1.0 + g * vals[k]).powi(2))
            .sum::<f64>()
    };
    let d2phi = |g: f64| -> f64 {
        2.0 * (0..n)
            .map(|k| weights[k] * vals[k] * vals[k] / (1.0 + g * vals[k]).powi(3))
            .sum::<f64>()
    };

    if dphi(0.0) >= 0.0 {
        return 0.0;
    }
    if dphi(max_step) <= 0.0 {
        return max_step;
    }
    let (mut lo, mut hi) = (0.0, max_step);
    let mut g = 0.5 * max_step;
    for _ in 0..200 {
        let d = dphi(g);
        if d < 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        if hi - lo <= 1e-15 * max_step.max(1e-300) {
            break;
        }
        let curv = d2phi(g);
        let newton = g - d / curv;
        g = if curv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if d == 0.0 {
            break;
        }
    }
    g
}

/// Fused prediction `x̄* = (S*)⁻¹ Σ λ*_j s̄_j` and covariance `P̄* = (S*)⁻¹`.
pub fn fuse_mean(outcome: &FusionOutcome, info_vectors: &[Vec<f64>]) -> Result<(Vec<f64>, SymMatrix)> {
    if info_vectors.len() != outcome.lambda_star.len() {
        return Err(Error::invalid("information vectors do not match the fusion weights"));
    }
    let n = outcome.s_star.dim();
    let ch = factor(&outcome.s_star)?;
    let mut acc = vec![0.0; n];
    for (w, s) in outcome.lambda_star.iter().zip(info_vectors) {
        if s.len() != n {
            return Err(Error::invalid("information vector has the wrong dimension"));
        }
        vec_axpy(&mut acc, *w, s);
    }
    Ok((ch.solve(&acc), ch.inverse()))
}
