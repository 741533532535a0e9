//! Brute-force checks of the fusion and certificate solvers on random 2×2
//! instances.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::certify::{brute_force_rank1, certify};
use crate::error::{Error, Result};
use crate::fusion::{solve_lj, FusionInput};
use crate::matkernel::{Matrix, SymMatrix};
use crate::rng::{stream, Stream};

/// `R(θ) diag(e) R(θ)ᵀ` with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_spd2<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> SymMatrix {
    let e = [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)];
    Matrix::rotation(rng.gen_range(0.0..PI)).congruence(&SymMatrix::from_diag(&e))
}

/// `J ∈ {2, 3, 4}` matrices with eigenvalues in `[0.1, 10]`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> Vec<SymMatrix> {
    let j = rng.gen_range(2..=4);
    (0..j).map(|_| random_spd2(rng, 0.1, 10.0)).collect()
}

fn inv_trace(a: f64, b: f64, c: f64) -> f64 {
    (a + c) / (a * c - b * b)
}

/// Minimum of `Tr((Σ λ_j S_j)⁻¹)` over the simplex grid `λ_j ∈ step·ℕ`, for
/// 2×2 inputs.
///
/// The leading `J − 2` weights are enumerated; along the remaining edge the
/// objective is convex in the grid index, so its minimum is found by bisecting
/// on the sign of the forward difference.
pub fn simplex_grid_min(infos: &[SymMatrix], step: f64) -> Result<f64> {
    if infos.is_empty() || infos.iter().any(|s| s.dim() != 2) {
        return Err(Error::invalid("grid oracle needs at least one 2×2 matrix"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("grid step {step} outside (0, 1]")));
    }
    let m = (1.0 / step).round() as usize;
    let coef: Vec<[f64; 3]> = infos.iter().map(|s| [s.get(0, 0), s.get(0, 1), s.get(1, 1)]).collect();
    if coef.len() == 1 {
        return Ok(inv_trace(coef[0][0], coef[0][1], coef[0][2]));
    }
    let (head, tail) = coef.split_at(coef.len() - 2);
    let (p, q) = (tail[0], tail[1]);
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; head.len()];
    loop {
        let used: usize = idx.iter().sum();
        if used <= m {
            let mut base = [0.0; 3];
            for (i, c) in idx.iter().zip(head) {
                let w = *i as f64 / m as f64;
                for t in 0..3 {
                    base[t] += w * c[t];
                }
            }
            let rest = m - used;
            // f(i): weight i/m on p, (rest − i)/m on q
            let f = |i: usize| {
                let (wp, wq) = (i as f64 / m as f64, (rest - i) as f64 / m as f64);
                let a = base[0] + wp * p[0] + wq * q[0];
                let b = base[1] + wp * p[1] + wq * q[1];
                let c = base[2] + wp * p[2] + wq * q[2];
                inv_trace(a, b, c)
            };
            let (mut lo, mut hi) = (0usize, rest);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if f(mid + 1) < f(mid) {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            best = best.min(f(lo));
        }
        // odometer over the leading weights
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(best);
            }
            idx[pos] += 1;
            if idx.iter().sum::<usize>() <= m {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// One pass/fail line of [`run_certify_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub const GRID_STEP: f64 = 1e-3;
pub const BRUTE_FORCE_ANGLES: usize = 10_000;

/// Fusion-vs-grid and certificate-vs-brute-force comparisons on `instances`
/// random problems drawn from `seed`.
pub fn run_certify_check(instances: usize, seed: u64) -> Result<Vec<CheckLine>> {
    if instances == 0 {
        return Err(Error::invalid("at least one instance is required"));
    }
    let mut rng: ChaCha8Rng = stream(seed, Stream::Scenario);
    let (mut above, mut below, mut worst_excess, mut worst_deficit) = (0, 0, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut lemma3_bad, mut worst_lemma3) = (0, 0.0f64);
    let (mut certified, mut unsound, mut worst_cert_err) = (0, 0, 0.0f64);
    let (mut rho_bad, mut rho_lo, mut rho_hi) = (0, f64::INFINITY, f64::NEG_INFINITY);

    for _ in 0..instances {
        let infos = random_instance(&mut rng);
        let input = FusionInput::from_matrices(infos.clone())?;
        let outcome = solve_lj(&input)?;
        let grid = simplex_grid_min(&infos, GRID_STEP)?;
        let excess = outcome.objective - grid;
        worst_excess = worst_excess.max(excess);
        worst_deficit = worst_deficit.max(-excess);
        above += usize::from(excess > 1e-8);
        below += usize::from(excess < -1e-3);
        let r = outcome.consensus_residual(&input);
        worst_lemma3 = worst_lemma3.max(r);
        lemma3_bad += usize::from(r > 1e-9 || (outcome.lambda_star.iter().sum::<f64>() - 1.0).abs() > 1e-9);

        let cert = certify(&infos, &outcome.s_star)?;
        rho_lo = rho_lo.min(cert.rho);
        rho_hi = rho_hi.max(cert.rho);
        rho_bad += usize::from(!(-1e-6..=1.0 + 1e-6).contains(&cert.rho));
        if cert.certified {
            certified += 1;
            let brute = brute_force_rank1(&infos, BRUTE_FORCE_ANGLES)?;
            let err = (cert.trace_x - brute).abs();
            worst_cert_err = worst_cert_err.max(err);
            unsound += usize::from(err > 1e-3);
        }
    }

    Ok(vec![
        CheckLine {
            name: "fusion-grid-oracle",
            passed: above == 0 && below == 0,
            detail: format!(
                "{instances} instances, {above} above grid+1e-8, {below} below grid-1e-3 (max excess {worst_excess:.3e}, max deficit {worst_deficit:.3e})"
            ),
        },
        CheckLine {
            name: "fusion-lemma3",
            passed: lemma3_bad == 0,
            detail: format!("{lemma3_bad} violations, max relative residual {worst_lemma3:.3e}"),
        },
        CheckLine {
            name: "certificate-soundness",
            passed: unsound == 0,
            detail: format!(
                "{certified}/{instances} certified, {unsound} off brute force by >1e-3 (max {worst_cert_err:.3e})"
            ),
        },
        CheckLine {
            name: "rho-range",
            passed: rho_bad == 0,
            detail: format!("{rho_bad} outside [-1e-6, 1+1e-6], observed [{rho_lo:.6}, {rho_hi:.6}]"),
        },
    ])
}
