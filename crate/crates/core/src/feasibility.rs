//! Infinite-power ceiling on an SU's average secrecy rate.
//!
//! With i.i.d. exponential CNRs an SU is the strongest user on a subcarrier
//! with probability `1/K`, and with unbounded power its secrecy rate there
//! tends to `ln(nu1/nu2)`, the log-ratio of the two largest of `K` draws.
//! Hence the ceiling `(N/K) E[ln(nu1/nu2)]`.
//!
//! Given the second largest `nu2`, the largest is `nu2 + e` with `e`
//! exponential (memorylessness), and `E[ln(1 + e/nu2)] = e^x E1(x)` at
//! `x = nu2/rho`. The remaining one-dimensional integral over `nu2` uses the
//! order-statistic density
//! `K(K-1) (1 - e^{-v/rho})^{K-2} e^{-v/rho}/rho * e^{-v/rho}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{invalid, Result};
use crate::quadrature::{integrate_pieces, scaled_e1, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum BoundMethod {
    Quadrature,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub method: BoundMethod,
    pub tolerance: Tolerance,
    /// Probability mass of the truncated tail.
    pub tail_mass: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            method: BoundMethod::Quadrature,
            tolerance: Tolerance::default(),
            tail_mass: 1e-9,
        }
    }
}

/// `E[ln(nu1/nu2)]` for the top two of `k` i.i.d. exponential(mean `rho`).
pub fn expected_log_ratio(k: usize, rho: f64, opts: &BoundOptions) -> Result<f64> {
    if k < 2 {
        return invalid("the bound needs at least two users");
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return invalid("rho must be positive and finite");
    }
    match opts.method {
        BoundMethod::Quadrature => log_ratio_quadrature(k, rho, opts),
        BoundMethod::MonteCarlo { samples, seed } => log_ratio_monte_carlo(k, rho, samples, seed),
    }
}

fn log_ratio_quadrature(k: usize, rho: f64, opts: &BoundOptions) -> Result<f64> {
    let kf = k as f64;
    let pairs = kf * (kf - 1.0);
    let density = move |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let x = v / rho;
        let below = (-(-x).exp_m1()).powi(k as i32 - 2);
        // e^{-x} e^{-x} e^{x} E1(x) = e^{-x} E1(x) written stably
        pairs * below * (-x).exp() * scaled_e1(x) * (-x).exp() / rho
    };
    // Beyond u the integrand is below K(K-1) e^{-2u}, so the tail is under
    // K(K-1) e^{-2u} / 2 in units of rho.
    let u_max = 0.5 * (pairs / opts.tail_mass.max(f64::MIN_POSITIVE)).ln() + 1.0;
    // Geometric breakpoints resolve the log singularity at zero.
    let mut pts = vec![0.0];
    let mut p = 1e-12;
    while p < 1.0 {
        pts.push(p * rho);
        p *= 10.0;
    }
    let mut p = 1.0;
    while p < u_max {
        pts.push(p * rho);
        p += 1.0;
    }
    pts.push(u_max * rho);
    integrate_pieces(density, &pts, opts.tolerance)
}

fn log_ratio_monte_carlo(k: usize, rho: f64, samples: u64, seed: u64) -> Result<f64> {
    if samples == 0 {
        return invalid("Monte Carlo needs at least one sample");
    }
    let exp =
        Exp::new(1.0 / rho).map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..samples {
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for _ in 0..k {
            let x: f64 = exp.sample(&mut rng);
            if x > a {
                b = a;
                a = x;
            } else if x > b {
                b = x;
            }
        }
        sum += (a / b).ln();
    }
    Ok(sum / samples as f64)
}

/// Ceiling `(N/K) E[ln(nu1/nu2)]` in nat per OFDM symbol.
pub fn secrecy_rate_upper_bound(n: usize, k: usize, rho: f64, opts: &BoundOptions) -> Result<f64> {
    if n == 0 {
        return invalid("N must be positive");
    }
    Ok(n as f64 / k as f64 * expected_log_ratio(k, rho, opts)?)
}

/// Targets within this fraction below the bound are flagged.
pub const NEAR_BOUNDARY: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetVerdict {
    pub user: usize,
    pub target: f64,
    pub feasible_hint: bool,
    pub near_boundary: bool,
}

/// Per-SU comparison against the ceiling. A feasible hint is necessary but
/// not sufficient: with finite power the reachable region is smaller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCheck {
    pub bound: f64,
    pub verdicts: Vec<TargetVerdict>,
    pub feasible_hint: bool,
    /// Always true; the bound ignores the power budget.
    pub hint_only: bool,
}

pub fn check_feasibility(config: &ProblemConfig) -> Result<FeasibilityCheck> {
    config.validate()?;
    let bound = secrecy_rate_upper_bound(config.n, config.k, config.rho, &BoundOptions::default())?;
    let verdicts: Vec<TargetVerdict> = config
        .secrecy_targets
        .iter()
        .enumerate()
        .map(|(user, &target)| {
            let feasible_hint = target < bound;
            TargetVerdict {
                user,
                target,
                feasible_hint,
                near_boundary: feasible_hint && target >= bound * (1.0 - NEAR_BOUNDARY),
            }
        })
        .collect();
    Ok(FeasibilityCheck {
        bound,
        feasible_hint: verdicts.iter().all(|v| v.feasible_hint),
        verdicts,
        hint_only: true,
    })
}
