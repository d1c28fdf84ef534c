//! Problem configuration and dual variables.
//!
//! Users `0..k1` are secure users (SU), users `k1..k` are normal users (NU).
//! Indices are zero-based throughout the library; the CLI prints them as-is.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which total power constraint the base station is subject to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    /// Long-term average of the per-frame total power is bounded.
    #[default]
    Average,
    /// Every frame's total power is bounded.
    Peak,
}

/// Static description of one allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Number of subcarriers.
    pub n: usize,
    /// Number of users.
    pub k: usize,
    /// Number of secure users; they occupy indices `0..k1`.
    pub k1: usize,
    /// Average secrecy-rate targets, nat per OFDM symbol, one per SU.
    pub secrecy_targets: Vec<f64>,
    /// Rate weights, one per NU.
    pub weights: Vec<f64>,
    /// Total power budget (linear, unit noise).
    pub power: f64,
    pub mode: PowerMode,
    /// Mean CNR of every user-subcarrier link.
    pub rho: f64,
}

impl ProblemConfig {
    /// Config with `k1` SUs sharing target `c`, unit NU weights and a budget
    /// given as total transmit SNR in dB.
    pub fn uniform(n: usize, k: usize, k1: usize, c: f64, snr_db: f64) -> Result<Self> {
        let cfg = ProblemConfig {
            n,
            k,
            k1,
            secrecy_targets: vec![c; k1],
            weights: vec![1.0; k.saturating_sub(k1)],
            power: db_to_linear(snr_db),
            mode: PowerMode::Average,
            rho: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: PowerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_targets(mut self, c: f64) -> Self {
        self.secrecy_targets = vec![c; self.k1];
        self
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.power = db_to_linear(snr_db);
        self
    }

    pub fn num_nu(&self) -> usize {
        self.k - self.k1
    }

    pub fn is_su(&self, user: usize) -> bool {
        user < self.k1
    }

    /// Weight of NU `user` (global index).
    pub fn weight(&self, user: usize) -> f64 {
        self.weights[user - self.k1]
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.power.log10()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("N must be at least 1");
        }
        if self.k1 == 0 || self.k1 >= self.k {
            return invalid(format!("need 1 <= K1 < K, got K1={} K={}", self.k1, self.k));
        }
        if self.secrecy_targets.len() != self.k1 {
            return invalid(format!(
                "expected {} secrecy targets, got {}",
                self.k1,
                self.secrecy_targets.len()
            ));
        }
        if self.weights.len() != self.k - self.k1 {
            return invalid(format!(
                "expected {} NU weights, got {}",
                self.k - self.k1,
                self.weights.len()
            ));
        }
        if self
            .secrecy_targets
            .iter()
            .any(|c| !(c.is_finite() && *c >= 0.0))
        {
            return invalid("secrecy targets must be finite and non-negative");
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return invalid("NU weights must be finite and positive");
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return invalid("power budget must be positive");
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return invalid("rho must be positive");
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Lagrange multipliers of the secrecy constraints (`mu`) and of the power
/// constraint (`lambda`). `lambda` is `None` in peak mode, where the power
/// price is resolved per realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub mu: Vec<f64>,
    pub lambda: Option<f64>,
}

impl DualState {
    pub fn new(mu: Vec<f64>, lambda: Option<f64>) -> Result<Self> {
        if mu.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid("secrecy multipliers must be finite and non-negative");
        }
        if let Some(l) = lambda {
            if !(l.is_finite() && l >= 0.0) {
                return invalid("power multiplier must be finite and non-negative");
            }
        }
        Ok(DualState { mu, lambda })
    }

    pub fn zeros(k1: usize, lambda: f64) -> Self {
        DualState {
            mu: vec![0.0; k1],
            lambda: Some(lambda),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_config_matches_reference_setup() {
        let cfg = ProblemConfig::uniform(64, 8, 4, 0.4, 30.0).unwrap();
        assert_eq!(cfg.num_nu(), 4);
        assert!((cfg.power - 1000.0).abs() < 1e-9);
        assert!((cfg.snr_db() - 30.0).abs() < 1e-12);
        assert!(cfg.is_su(3) && !cfg.is_su(4));
    }

    #[test]
    fn rejects_bad_user_split() {
        assert!(ProblemConfig::uniform(64, 4, 4, 0.4, 30.0).is_err());
        assert!(ProblemConfig::uniform(64, 4, 0, 0.4, 30.0).is_err());
        assert!(ProblemConfig::uniform(0, 4, 2, 0.4, 30.0).is_err());
        assert!(ProblemConfig::uniform(8, 4, 2, -0.1, 30.0).is_err());
    }

    #[test]
    fn negative_multipliers_rejected() {
        assert!(DualState::new(vec![-1.0], Some(1.0)).is_err());
        assert!(DualState::new(vec![1.0], Some(-1.0)).is_err());
        assert!(DualState::new(vec![0.0, 2.0], None).is_ok());
    }
}
