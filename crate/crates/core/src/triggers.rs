//! Broadcast rules deciding `g_i(k)` from a node's own previous-step state.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::function::beta::ln_beta;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::matkernel::{sym_inverse, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TriggerRule {
    /// `#O`: broadcast every instant.
    TimeTriggered,
    /// `#C`: λ-rule, an isolated node always broadcasts.
    Connected,
    /// `#D`: λ-rule, an isolated node never broadcasts.
    Disconnected,
    /// `#S`: λ-rule, an isolated node broadcasts with a beta-binomial probability
    /// that grows with its silence.
    Stochastic { alpha: f64, beta: f64, n_bb: u32 },
    /// `#J`: send-on-delta on the divergence of the fused information matrix.
    JensenShannon { tau: f64 },
}

impl TriggerRule {
    pub const DEFAULT_STOCHASTIC: TriggerRule = TriggerRule::Stochastic {
        alpha: 5.0,
        beta: 1.0,
        n_bb: 10,
    };
    pub const DEFAULT_JENSEN_SHANNON: TriggerRule = TriggerRule::JensenShannon { tau: 100.0 };

    pub fn label(&self) -> &'static str {
        match self {
            TriggerRule::TimeTriggered => "O",
            TriggerRule::Connected => "C",
            TriggerRule::Disconnected => "D",
            TriggerRule::Stochastic { .. } => "S",
            TriggerRule::JensenShannon { .. } => "J",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TriggerRule::Stochastic { alpha, beta, n_bb } => {
                if !(alpha > 0.0 && beta > 0.0) || n_bb == 0 {
                    return Err(Error::invalid(format!(
                        "beta-binomial shape needs alpha, beta > 0 and n >= 1 (got {alpha}, {beta}, {n_bb})"
                    )));
                }
            }
            TriggerRule::JensenShannon { tau } if !(tau > 0.0) => {
                return Err(Error::invalid(format!("tau must be positive, got {tau}")));
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for TriggerRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.label())
    }
}

/// Parses a label (`O`, `C`, `D`, `S`, `J`, optionally prefixed by `#`) with
/// default parameters.
impl FromStr for TriggerRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches('#') {
            "O" | "o" => Ok(TriggerRule::TimeTriggered),
            "C" | "c" => Ok(TriggerRule::Connected),
            "D" | "d" => Ok(TriggerRule::Disconnected),
            "S" | "s" => Ok(TriggerRule::DEFAULT_STOCHASTIC),
            "J" | "j" => Ok(TriggerRule::DEFAULT_JENSEN_SHANNON),
            other => Err(Error::invalid(format!("unknown trigger rule '{other}'"))),
        }
    }
}

/// What a node knows when deciding whether to broadcast at step `k`.
#[derive(Clone, Copy, Debug)]
pub struct TriggerContext<'a> {
    /// `λ*_ii(k−1)`.
    pub lambda_self: f64,
    /// `max_j λ*_ij(k−1)`, self included.
    pub lambda_max: f64,
    /// Whether any message arrived at `k−1`.
    pub had_neighbors_prev: bool,
    /// Consecutive silent instants right before `k`.
    pub k_l: usize,
    /// Fused information matrix at the node's last broadcast, if any.
    pub s_at_last_broadcast: Option<&'a SymMatrix>,
    /// Fused information matrix at `k−1`, if any.
    pub s_current: Option<&'a SymMatrix>,
}

impl TriggerContext<'_> {
    /// Context of a node that has not run yet: `λ₀` puts all weight on self.
    pub fn initial() -> Self {
        TriggerContext {
            lambda_self: 1.0,
            lambda_max: 1.0,
            had_neighbors_prev: true,
            k_l: 0,
            s_at_last_broadcast: None,
            s_current: None,
        }
    }
}

/// A node that heard someone at `k−1` broadcasts iff it carried the largest
/// fusion weight (ties count as self). An isolated node's weight is trivially
/// all on itself, so the coin with probability `p` decides instead.
fn lambda_rule<R: Rng + ?Sized>(ctx: &TriggerContext, p: f64, rng: &mut R) -> bool {
    if ctx.had_neighbors_prev {
        ctx.lambda_self >= ctx.lambda_max
    } else if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.gen::<f64>() < p
    }
}

pub fn decide<R: Rng + ?Sized>(rule: &TriggerRule, ctx: &TriggerContext, rng: &mut R) -> Result<bool> {
    match *rule {
        TriggerRule::TimeTriggered => Ok(true),
        TriggerRule::Connected => Ok(lambda_rule(ctx, 1.0, rng)),
        TriggerRule::Disconnected => Ok(lambda_rule(ctx, 0.0, rng)),
        TriggerRule::Stochastic { alpha, beta, n_bb } => {
            let p = beta_binomial_p(alpha, beta, n_bb, ctx.k_l)?;
            Ok(lambda_rule(ctx, p, rng))
        }
        TriggerRule::JensenShannon { tau } => match (ctx.s_current, ctx.s_at_last_broadcast) {
            (Some(current), Some(reference)) => Ok(js_divergence(current, reference)? > tau),
            _ => Ok(true),
        },
    }
}

/// Beta-binomial CDF at `min(k_l, n_bb)`; exactly 1 once `k_l ≥ n_bb`.
pub fn beta_binomial_p(alpha: f64, beta: f64, n_bb: u32, k_l: usize) -> Result<f64> {
    TriggerRule::Stochastic { alpha, beta, n_bb }.validate()?;
    if k_l >= n_bb as usize {
        return Ok(1.0);
    }
    let n = n_bb as u64;
    let ln_norm = ln_beta(alpha, beta);
    let cdf: f64 = (0..=k_l as u64)
        .map(|m| {
            (ln_binomial(n, m) + ln_beta(m as f64 + alpha, (n - m) as f64 + beta) - ln_norm).exp()
        })
        .sum();
    Ok(cdf.clamp(0.0, 1.0))
}

/// Symmetrized KL divergence between zero-mean Gaussians with covariances
/// `S_a⁻¹` and `S_b⁻¹`.
pub fn js_divergence(s_a: &SymMatrix, s_b: &SymMatrix) -> Result<f64> {
    if s_a.dim() != s_b.dim() {
        return Err(Error::invalid("divergence arguments differ in dimension"));
    }
    let inv_a = sym_inverse(s_a)?;
    let inv_b = sym_inverse(s_b)?;
    let n = s_a.dim() as f64;
    let d = 0.25 * (s_b.trace_product(&inv_a) + s_a.trace_product(&inv_b) - 2.0 * n);
    Ok(d.max(0.0))
}
