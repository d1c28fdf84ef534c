//! Ensemble-averaged performance metrics.

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationDecision;
use crate::channel::ChannelEnsemble;
use crate::config::ProblemConfig;
use crate::error::{invalid, Result};

/// Time averages over an ensemble of per-realization decisions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Average weighted sum of NU information rates.
    pub r_nu_total: f64,
    /// Average secrecy rate of each SU.
    pub r_su: Vec<f64>,
    /// Average total transmit power.
    pub avg_power: f64,
    /// Average power spent on SU-owned subcarriers.
    pub su_power: f64,
    /// Average number of SU-owned subcarriers.
    pub su_subcarriers: f64,
    pub realizations_used: usize,
}

impl EvaluationReport {
    pub fn min_su_rate(&self) -> f64 {
        self.r_su.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_su_rate(&self) -> f64 {
        if self.r_su.is_empty() {
            0.0
        } else {
            self.r_su.iter().sum::<f64>() / self.r_su.len() as f64
        }
    }
}

/// Averages `decisions` (one per realization of `ensemble`) in realization
/// order.
pub fn evaluate(
    decisions: &[AllocationDecision],
    ensemble: &ChannelEnsemble,
    config: &ProblemConfig,
) -> Result<EvaluationReport> {
    ensemble.check_against(config)?;
    if decisions.len() != ensemble.len() {
        return invalid(format!(
            "{} decisions for {} realizations",
            decisions.len(),
            ensemble.len()
        ));
    }
    if decisions
        .iter()
        .any(|d| d.num_users() != config.k || d.num_subcarriers() != config.n)
    {
        return invalid("decision dimensions do not match config");
    }
    let m = decisions.len() as f64;
    let mut rep = EvaluationReport {
        r_su: vec![0.0; config.k1],
        realizations_used: decisions.len(),
        ..Default::default()
    };
    for d in decisions {
        rep.r_nu_total += d.weighted_nu_rate(config);
        for (acc, r) in rep.r_su.iter_mut().zip(&d.su_secrecy) {
            *acc += r;
        }
        rep.avg_power += d.total_power;
        rep.su_power += d.su_power(config);
        rep.su_subcarriers += d.su_subcarriers(config) as f64;
    }
    rep.r_nu_total /= m;
    rep.r_su.iter_mut().for_each(|r| *r /= m);
    rep.avg_power /= m;
    rep.su_power /= m;
    rep.su_subcarriers /= m;
    Ok(rep)
}
