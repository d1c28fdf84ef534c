//! Per-subcarrier rate, power and bid formulas.
//!
//! Rates are in nats. `mu` prices an SU's secrecy rate, `lam` prices power.
//! Every power formula here returns the maximizer over `p >= 0` of the
//! corresponding priced payoff, and every `h_*` returns the maximum itself.

use crate::channel::ColumnStats;
use crate::config::{DualState, ProblemConfig};
use crate::error::{invalid, Result};

fn check_power(p: f64) -> Result<()> {
    if !(p >= 0.0) {
        return invalid(format!("power must be non-negative, got {p}"));
    }
    Ok(())
}

fn check_price(lam: f64) -> Result<()> {
    if !(lam > 0.0) {
        return invalid(format!("power price must be positive, got {lam}"));
    }
    Ok(())
}

/// `[ln(1 + p*alpha) - ln(1 + p*beta)]^+`.
pub fn secrecy_rate(p: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_power(p)?;
    Ok(secrecy_rate_raw(p, alpha, beta))
}

#[inline]
pub(crate) fn secrecy_rate_raw(p: f64, alpha: f64, beta: f64) -> f64 {
    if p == 0.0 || alpha <= beta {
        return 0.0;
    }
    ((p * alpha).ln_1p() - (p * beta).ln_1p()).max(0.0)
}

/// `ln(1 + p*alpha)`.
pub fn info_rate(p: f64, alpha: f64) -> Result<f64> {
    check_power(p)?;
    Ok((p * alpha).ln_1p())
}

/// Optimal SU power on a subcarrier with main CNR `alpha` and strongest
/// eavesdropper CNR `beta`. Positive exactly when `alpha - beta > lam / mu`.
pub fn su_power(alpha: f64, beta: f64, mu: f64, lam: f64) -> Result<f64> {
    check_price(lam)?;
    if mu < 0.0 {
        return invalid("secrecy multiplier must be non-negative");
    }
    Ok(su_power_raw(alpha, beta, mu, lam))
}

#[inline]
pub(crate) fn su_power_raw(alpha: f64, beta: f64, mu: f64, lam: f64) -> f64 {
    // Threshold test in the form mu*(alpha-beta) > lam keeps the boundary
    // exact; the closed form below is rearranged to avoid cancellation.
    let excess = mu * (alpha - beta) - lam;
    if !(excess > 0.0) {
        return 0.0;
    }
    let ia = 1.0 / alpha;
    let ib = 1.0 / beta;
    let d = ia - ib;
    let x = d * d + 4.0 * (mu / lam) * (ib - ia);
    2.0 * excess / (lam * alpha * beta * (x.sqrt() + ia + ib))
}

/// Water-filling NU power `[omega/lam - 1/alpha]^+`.
pub fn nu_power(alpha: f64, omega: f64, lam: f64) -> Result<f64> {
    check_price(lam)?;
    Ok(nu_power_raw(alpha, omega, lam))
}

#[inline]
pub(crate) fn nu_power_raw(alpha: f64, omega: f64, lam: f64) -> f64 {
    (omega / lam - 1.0 / alpha).max(0.0)
}

/// Maximized SU payoff `mu * secrecy_rate(p*) - lam * p*`.
pub fn h_su(alpha: f64, beta: f64, mu: f64, lam: f64) -> Result<f64> {
    let p = su_power(alpha, beta, mu, lam)?;
    Ok(h_su_at(p, alpha, beta, mu, lam))
}

#[inline]
pub(crate) fn h_su_at(p: f64, alpha: f64, beta: f64, mu: f64, lam: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    (mu * ((p * alpha).ln_1p() - (p * beta).ln_1p()) - lam * p).max(0.0)
}

/// Maximized NU payoff `omega * [ln(omega*alpha/lam)]^+ - [omega - lam/alpha]^+`.
pub fn h_nu(alpha: f64, omega: f64, lam: f64) -> Result<f64> {
    check_price(lam)?;
    Ok(h_nu_raw(alpha, omega, lam))
}

#[inline]
pub(crate) fn h_nu_raw(alpha: f64, omega: f64, lam: f64) -> f64 {
    let ratio = omega * alpha / lam;
    if ratio <= 1.0 {
        return 0.0;
    }
    (omega * ratio.ln() - (omega - lam / alpha)).max(0.0)
}

/// Winner of one subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    /// `None` when every bid is zero.
    pub owner: Option<usize>,
    pub power: f64,
    /// Winning bid `max_k H_k`.
    pub value: f64,
    /// Secrecy rate for an SU owner, information rate for an NU owner.
    pub rate: f64,
}

impl Assignment {
    pub const IDLE: Assignment = Assignment {
        owner: None,
        power: 0.0,
        value: 0.0,
        rate: 0.0,
    };
}

/// Bid-based assignment of one subcarrier. `alpha(u)` returns user `u`'s CNR.
/// NU bids win ties against SU bids; ties within a type go to the lower index.
#[inline]
pub(crate) fn assign_with<F: Fn(usize) -> f64>(
    alpha: F,
    stats: &ColumnStats,
    mu: &[f64],
    weights: &[f64],
    lam: f64,
) -> Assignment {
    let k1 = mu.len();
    let mut best = Assignment::IDLE;
    for (j, &w) in weights.iter().enumerate() {
        let a = alpha(k1 + j);
        let h = h_nu_raw(a, w, lam);
        if h > best.value {
            let p = nu_power_raw(a, w, lam);
            best = Assignment {
                owner: Some(k1 + j),
                power: p,
                value: h,
                rate: (p * a).ln_1p(),
            };
        }
    }
    // Only the strongest user can have a positive secrecy bid.
    let u = stats.best_user;
    if u < k1 {
        let (a, b) = (stats.nu1, stats.nu2);
        let p = su_power_raw(a, b, mu[u], lam);
        let h = h_su_at(p, a, b, mu[u], lam);
        if h > best.value {
            best = Assignment {
                owner: Some(u),
                power: p,
                value: h,
                rate: secrecy_rate_raw(p, a, b),
            };
        }
    }
    best
}

/// Assigns one subcarrier given every user's CNR on it.
pub fn assign_subcarrier(
    column: &[f64],
    duals: &DualState,
    config: &ProblemConfig,
    lam: f64,
) -> Result<Assignment> {
    check_price(lam)?;
    if column.len() != config.k {
        return invalid(format!(
            "column has {} entries, expected K={}",
            column.len(),
            config.k
        ));
    }
    if duals.mu.len() != config.k1 {
        return invalid(format!(
            "expected {} multipliers, got {}",
            config.k1,
            duals.mu.len()
        ));
    }
    if duals.mu.iter().any(|m| *m < 0.0) {
        return invalid("secrecy multipliers must be non-negative");
    }
    let stats = ColumnStats::from_column(column)?;
    Ok(assign_with(
        |u| column[u],
        &stats,
        &duals.mu,
        &config.weights,
        lam,
    ))
}
