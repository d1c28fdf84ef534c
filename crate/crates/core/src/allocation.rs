//! Per-realization allocation decisions.

use crate::channel::ChannelRealization;
use crate::config::ProblemConfig;
use crate::error::{invalid, Result};
use crate::math::{secrecy_rate_raw, Assignment};

/// Subcarrier owners and powers for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationDecision {
    /// Owner of each subcarrier, `None` if unpowered.
    pub owner: Vec<Option<usize>>,
    /// Row-major `[user][subcarrier]` power matrix.
    pub power: Vec<f64>,
    /// Realized secrecy rate of each SU.
    pub su_secrecy: Vec<f64>,
    /// Realized information rate of each NU.
    pub nu_rate: Vec<f64>,
    pub total_power: f64,
    k: usize,
    n: usize,
}

impl AllocationDecision {
    /// An allocation that powers nothing.
    pub fn idle(config: &ProblemConfig) -> Self {
        AllocationDecision {
            owner: vec![None; config.n],
            power: vec![0.0; config.k * config.n],
            su_secrecy: vec![0.0; config.k1],
            nu_rate: vec![0.0; config.num_nu()],
            total_power: 0.0,
            k: config.k,
            n: config.n,
        }
    }

    /// Builds a decision from one [`Assignment`] per subcarrier.
    pub fn from_assignments(
        real: &ChannelRealization,
        config: &ProblemConfig,
        assignments: &[Assignment],
    ) -> Self {
        let mut d = Self::idle(config);
        for (sub, a) in assignments.iter().enumerate() {
            if let Some(u) = a.owner {
                d.set(real, config, sub, u, a.power);
            }
        }
        d
    }

    /// Powers `sub` for `user`. The subcarrier must be unowned.
    pub(crate) fn set(
        &mut self,
        real: &ChannelRealization,
        config: &ProblemConfig,
        sub: usize,
        user: usize,
        p: f64,
    ) {
        debug_assert!(self.owner[sub].is_none());
        if p <= 0.0 {
            return;
        }
        self.owner[sub] = Some(user);
        self.power[user * self.n + sub] = p;
        self.total_power += p;
        let a = real.alpha(user, sub);
        if config.is_su(user) {
            self.su_secrecy[user] += secrecy_rate_raw(p, a, real.beta(user, sub));
        } else {
            self.nu_rate[user - config.k1] += (p * a).ln_1p();
        }
    }

    pub fn num_users(&self) -> usize {
        self.k
    }

    pub fn num_subcarriers(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn power_of(&self, user: usize, sub: usize) -> f64 {
        self.power[user * self.n + sub]
    }

    /// Total power on SU-owned subcarriers.
    pub fn su_power(&self, config: &ProblemConfig) -> f64 {
        (0..config.k1)
            .flat_map(|u| self.power[u * self.n..(u + 1) * self.n].iter())
            .sum()
    }

    /// Number of subcarriers owned by SUs.
    pub fn su_subcarriers(&self, config: &ProblemConfig) -> usize {
        self.owner
            .iter()
            .filter(|o| matches!(o, Some(u) if *u < config.k1))
            .count()
    }

    pub fn weighted_nu_rate(&self, config: &ProblemConfig) -> f64 {
        self.nu_rate
            .iter()
            .zip(&config.weights)
            .map(|(r, w)| w * r)
            .sum()
    }

    /// Verifies at most one powered user per subcarrier, agreeing with `owner`,
    /// and that `total_power` matches the matrix.
    pub fn check_exclusive(&self) -> Result<()> {
        for sub in 0..self.n {
            let powered: Vec<usize> = (0..self.k)
                .filter(|&u| self.power_of(u, sub) > 0.0)
                .collect();
            match (self.owner[sub], powered.as_slice()) {
                (None, []) => {}
                (Some(u), [v]) if u == *v => {}
                (o, p) => {
                    return invalid(format!(
                        "subcarrier {sub}: owner {o:?} but powered users {p:?}"
                    ))
                }
            }
        }
        if self.power.iter().any(|p| *p < 0.0) {
            return invalid("negative power entry");
        }
        let sum: f64 = self.power.iter().sum();
        if (sum - self.total_power).abs() > 1e-9 * (1.0 + sum) {
            return invalid(format!("total_power {} != sum {}", self.total_power, sum));
        }
        Ok(())
    }

    /// Recomputes `(su_secrecy, nu_rate)` from the power matrix and channel.
    pub fn recompute_rates(
        &self,
        real: &ChannelRealization,
        config: &ProblemConfig,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut su = vec![0.0; config.k1];
        let mut nu = vec![0.0; config.num_nu()];
        for sub in 0..self.n {
            for u in 0..self.k {
                let p = self.power_of(u, sub);
                if p <= 0.0 {
                    continue;
                }
                let a = real.alpha(u, sub);
                if config.is_su(u) {
                    su[u] += secrecy_rate_raw(p, a, real.beta(u, sub));
                } else {
                    nu[u - config.k1] += (p * a).ln_1p();
                }
            }
        }
        (su, nu)
    }
}
