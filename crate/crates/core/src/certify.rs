//! Optimality certificate for the fused information matrix.
//!
//! The rank-one trace problem `max Tr(X) s.t. X ⪰ 0, Tr(X·S_j) ≤ 1, rank X = 1`
//! is NP-hard; dropping the rank constraint gives a small SDP whose solution
//! `X*` yields the certificate `(rank X*, Tr(X*)·λ_min(S*))`. When both equal
//! one, the fused matrix solves the original problem.
//!
//! The SDP is solved with a primal log-barrier path-following method. Newton
//! steps are taken in the coordinates `X = L·W·Lᵀ` (with `X = L·Lᵀ`), where the
//! log-det Hessian is the identity and the constraint terms are a rank-`|J|`
//! update. The iterate is kept in factored form
//! and slacks are updated multiplicatively, so accuracy holds up as `X`
//! approaches the boundary of the cone.

use crate::error::{Error, Result};
use crate::matkernel::{
    cholesky_psd, dot, eigen_sym, numerical_rank, qr_r, vec_axpy, vec_scale, Matrix, SymMatrix,
};

/// Relative tolerance for the rank of `X*`.
pub const RANK_TOL: f64 = 1e-6;
/// Allowed deviation of `ρ` from one for a positive certificate.
pub const RHO_TOL: f64 = 1e-3;
/// Required duality gap, relative to `max(1, Tr X*)`.
pub const GAP_TOL: f64 = 1e-7;

/// Barrier parameter shrink factor per outer iteration.
const MU_FACTOR: f64 = 0.2;
/// The path is followed past `GAP_TOL` so that the rank of `X*` is resolved
/// cleanly; stagnation ends the loop earlier.
const TARGET_REL_GAP: f64 = 1e-10;
const CENTERING_TOL: f64 = 1e-14;
const MAX_NEWTON_STEPS: usize = 5_000;
const MAX_CENTERING_STEPS: usize = 200;
/// Consecutive outer rounds that fail to halve the gap before giving up. Many
/// constraints slow the early rounds, so one slow round is not a stall.
const STALL_ROUNDS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationSolution {
    pub x_star: SymMatrix,
    pub trace_x: f64,
    /// Duality gap `Σμ_j − Tr X*` against the dual point below.
    pub gap: f64,
    /// Dual multipliers with `Σ μ_j S_j ⪰ I`.
    pub dual: Vec<f64>,
    pub newton_steps: usize,
}

/// Solves `max Tr(X) s.t. X ⪰ 0, Tr(X·S_j) ≤ 1`.
pub fn solve_trace_relaxation(infos: &[SymMatrix]) -> Result<RelaxationSolution> {
    let first = infos
        .first()
        .ok_or_else(|| Error::invalid("trace relaxation needs at least one constraint"))?;
    let n = first.dim();
    if infos.iter().any(|s| s.dim() != n) {
        return Err(Error::invalid("constraint matrices have mismatched dimensions"));
    }
    for s in infos {
        if cholesky_psd(s, 0.0).is_none() {
            return Err(Error::SingularMatrix {
                min_eigenvalue: s.min_eigenvalue(),
            });
        }
    }

    let max_trace = infos.iter().map(SymMatrix::trace).fold(0.0, f64::max);
    let c = 0.5 / max_trace;
    let mut l = Matrix::from_fn(n, n, |i, j| if i == j { c.sqrt() } else { 0.0 });
    let mut slack: Vec<f64> = infos.iter().map(|s| 1.0 - c * s.trace()).collect();
    let mut t = 1.0 / c;

    let mut steps = 0;
    let mut best: Option<(f64, Vec<f64>, Matrix)> = None;
    let mut slow = 0;
    loop {
        let taken = center(infos, &mut l, &mut slack, t)?;
        steps += taken;
        let trace_x = l.frobenius_norm().powi(2);
        let (gap, dual) = dual_bound(infos, &slack, t, trace_x);
        let first = best.is_none();
        let prev_gap = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if gap < prev_gap {
            best = Some((gap, dual, l.clone()));
        }
        // once t is large the Newton system loses precision and progress stops;
        // the starting point itself may already be centred
        slow = if !first && gap >= 0.5 * prev_gap { slow + 1 } else { 0 };
        let stalled = !first && (taken == 0 || slow >= STALL_ROUNDS);
        if gap <= TARGET_REL_GAP * trace_x || stalled || steps >= MAX_NEWTON_STEPS {
            break;
        }
        t /= MU_FACTOR;
    }

    let (gap, dual, l) = best.expect("at least one outer iteration");
    let x_star = l.congruence(&SymMatrix::identity(n));
    let trace_x = x_star.trace();
    if !(gap <= GAP_TOL * trace_x.max(1.0)) {
        return Err(Error::RelaxationNotConverged {
            iterations: steps,
            gap,
        });
    }
    Ok(RelaxationSolution {
        x_star,
        trace_x,
        gap,
        dual,
        newton_steps: steps,
    })
}

/// Symmetric matrix as a vector whose dot product is the Frobenius product.
fn svec(m: &SymMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in 0..=i {
            let f = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            v.push(f * m.get(i, j));
        }
    }
    v
}

fn unsvec(v: &[f64], n: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            let f = if i == j { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };
            m.set(i, j, f * v[k]);
            k += 1;
        }
    }
    m
}

/// Solves `RᵀR·w = b` for upper-triangular `R`.
fn solve_normal(r: &Matrix, b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let acc: f64 = (0..i).map(|k| r.get(k, i) * y[k]).sum();
        y[i] = (b[i] - acc) / r.get(i, i);
    }
    let mut w = vec![0.0; d];
    for i in (0..d).rev() {
        let acc: f64 = (i + 1..d).map(|k| r.get(i, k) * w[k]).sum();
        w[i] = (y[i] - acc) / r.get(i, i);
    }
    w
}

/// Damped Newton centering for barrier parameter `t`; returns steps taken.
///
/// With `B_j = LᵀS_jL / s_j` the Hessian in `W` is `I + Σ b_j b_jᵀ` (`b_j` the
/// svec of `B_j`). The `b_j` grow like `t` and turn nearly parallel near a
/// rank-one optimum, so the Hessian is factored through a QR of
/// `[I | b_1 … b_J]ᵀ` instead of forming any Gram matrix.
fn center(infos: &[SymMatrix], l: &mut Matrix, slack: &mut [f64], t: f64) -> Result<usize> {
    let n = l.rows();
    let d = n * (n + 1) / 2;
    let k = infos.len();
    let not_converged = |steps| Error::RelaxationNotConverged {
        iterations: steps,
        gap: f64::NAN,
    };
    let mut steps = 0;
    while steps < MAX_CENTERING_STEPS {
        let lt = l.transpose();
        let b: Vec<Vec<f64>> = infos
            .iter()
            .zip(slack.iter())
            .map(|(s, sj)| svec(&lt.congruence(s).scale(1.0 / sj)))
            .collect();
        // gradient −t·LᵀL − I + Σ B_j
        let mut g = lt.congruence(&SymMatrix::identity(n)).scale(-t);
        g.axpy(-1.0, &SymMatrix::identity(n));
        let mut g = svec(&g);
        for bj in &b {
            vec_axpy(&mut g, 1.0, bj);
        }

        let ct = Matrix::from_fn(d + k, d, |i, c| {
            if i < d {
                if i == c { 1.0 } else { 0.0 }
            } else {
                b[i - d][c]
            }
        });
        let r = qr_r(&ct);
        let w = solve_normal(&r, &vec_scale(&g, -1.0));
        let decrement_sq = -dot(&g, &w);
        if !decrement_sq.is_finite() {
            return Err(not_converged(steps));
        }
        if decrement_sq <= CENTERING_TOL {
            break;
        }
        let bw: Vec<f64> = b.iter().map(|bj| dot(bj, &w)).collect();
        let w = unsvec(&w, n);

        let delta = decrement_sq.sqrt();
        let mut alpha = if delta < 0.25 { 1.0 } else { 1.0 / (1.0 + delta) };
        let factor = loop {
            let mut step = SymMatrix::identity(n);
            step.axpy(alpha, &w);
            let slack_ok = bw.iter().all(|v| 1.0 - alpha * v > 0.0);
            match cholesky_psd(&step, 0.0) {
                Some(f) if slack_ok => break f,
                _ => {
                    alpha *= 0.5;
                    if alpha < 1e-12 {
                        return Err(not_converged(steps));
                    }
                }
            }
        };
        *l = l.matmul(factor.factor());
        for (sj, v) in slack.iter_mut().zip(&bw) {
            *sj *= 1.0 - alpha * v;
        }
        steps += 1;
    }
    Ok(steps)
}

/// Dual point `μ_j ∝ 1/(t·s_j)` scaled so that `λ_min(Σ μ_j S_j) = 1`, and the
/// resulting gap.
fn dual_bound(infos: &[SymMatrix], slack: &[f64], t: f64, trace_x: f64) -> (f64, Vec<f64>) {
    let mut mu: Vec<f64> = slack.iter().map(|s| 1.0 / (t * s)).collect();
    let mut z = SymMatrix::zeros(infos[0].dim());
    for (m, s) in mu.iter().zip(infos) {
        z.axpy(*m, s);
    }
    let zmin = eigen_sym(&z).values[0];
    // any positive rescaling keeps the direction; 1/λ_min is the tightest feasible one
    if zmin > 0.0 {
        mu.iter_mut().for_each(|m| *m /= zmin);
    }
    let total: f64 = mu.iter().sum();
    ((total - trace_x).max(0.0), mu)
}

/// Outcome of the optimality test for one fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub x_star: SymMatrix,
    pub trace_x: f64,
    /// Numerical rank of `X*`.
    pub rank: usize,
    /// `Tr(X*)·λ_min(S*)`, unclamped.
    pub rho: f64,
    pub certified: bool,
    pub gap: f64,
}

impl Certificate {
    /// `ρ` clamped to `[0, 1]` for reporting.
    pub fn rho_clamped(&self) -> f64 {
        self.rho.clamp(0.0, 1.0)
    }
}

/// Evaluates the rank and `ρ` tests for the fused information matrix `s_star`.
pub fn evaluate_certificate(relaxation: &RelaxationSolution, s_star: &SymMatrix) -> Certificate {
    let rank = numerical_rank(&relaxation.x_star, RANK_TOL);
    let rho = relaxation.trace_x * s_star.min_eigenvalue();
    Certificate {
        x_star: relaxation.x_star.clone(),
        trace_x: relaxation.trace_x,
        rank,
        rho,
        certified: rank == 1 && (rho - 1.0).abs() <= RHO_TOL,
        gap: relaxation.gap,
    }
}

/// Solves the relaxation over `infos` and certifies `s_star` against it.
pub fn certify(infos: &[SymMatrix], s_star: &SymMatrix) -> Result<Certificate> {
    let relaxation = solve_trace_relaxation(infos)?;
    Ok(evaluate_certificate(&relaxation, s_star))
}

/// Rank-one optimum of the trace problem in two dimensions by sweeping unit
/// directions `v(θ)`, `θ ∈ [0, π)`: each direction admits `X = r·v·vᵀ` with
/// `r = 1 / max_j vᵀ S_j v`.
pub fn brute_force_rank1(infos: &[SymMatrix], angle_steps: usize) -> Result<f64> {
    if infos.is_empty() || infos.iter().any(|s| s.dim() != 2) {
        return Err(Error::invalid("brute-force rank-one oracle requires 2×2 matrices"));
    }
    if angle_steps == 0 {
        return Err(Error::invalid("angle_steps must be positive"));
    }
    let mut best = 0.0_f64;
    for k in 0..angle_steps {
        let theta = std::f64::consts::PI * k as f64 / angle_steps as f64;
        let v = [theta.cos(), theta.sin()];
        let worst = infos
            .iter()
            .map(|s| s.quad_form(&v))
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.max(1.0 / worst);
    }
    Ok(best)
}
