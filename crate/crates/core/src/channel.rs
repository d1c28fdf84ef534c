//! Rayleigh-fading channel ensembles.
//!
//! Each realization is a K x N matrix of channel-to-noise ratios (CNR). Under
//! Rayleigh fading the CNR is exponential with mean `rho`, so entries are
//! drawn directly from that distribution. Realization `i` of an ensemble is
//! generated from its own ChaCha stream keyed by `(seed, i)`, which keeps the
//! output identical no matter how generation is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::ProblemConfig;
use crate::error::{invalid, Error, Result};

/// Largest and second-largest CNR on one subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    /// Index of the strongest user (lowest index on ties).
    pub best_user: usize,
    pub nu1: f64,
    pub nu2: f64,
}

impl ColumnStats {
    /// Strongest eavesdropper CNR seen by `user`.
    #[inline]
    pub fn beta(&self, user: usize) -> f64 {
        if user == self.best_user {
            self.nu2
        } else {
            self.nu1
        }
    }

    pub fn from_column(column: &[f64]) -> Result<Self> {
        if column.len() < 2 {
            return invalid("order statistics need at least two users");
        }
        let mut best_user = 0;
        let mut nu1 = column[0];
        let mut nu2 = f64::NEG_INFINITY;
        for (k, &a) in column.iter().enumerate().skip(1) {
            if a > nu1 {
                nu2 = nu1;
                nu1 = a;
                best_user = k;
            } else if a > nu2 {
                nu2 = a;
            }
        }
        Ok(ColumnStats {
            best_user,
            nu1,
            nu2,
        })
    }
}

/// CNR matrix of one frame, row-major `[user][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    k: usize,
    n: usize,
    alpha: Vec<f64>,
    stats: Vec<ColumnStats>,
}

impl ChannelRealization {
    /// Builds a realization from row-major data. Requires `k >= 2`.
    pub fn new(k: usize, n: usize, alpha: Vec<f64>) -> Result<Self> {
        if k < 2 || n == 0 {
            return invalid(format!(
                "realization needs K >= 2 and N >= 1, got K={k} N={n}"
            ));
        }
        if alpha.len() != k * n {
            return invalid(format!(
                "expected {} CNR values, got {}",
                k * n,
                alpha.len()
            ));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return invalid("CNR values must be positive and finite");
        }
        let mut column = vec![0.0; k];
        let stats = (0..n)
            .map(|j| {
                for (u, c) in column.iter_mut().enumerate() {
                    *c = alpha[u * n + j];
                }
                ColumnStats::from_column(&column)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelRealization { k, n, alpha, stats })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return invalid("ragged CNR matrix");
        }
        Self::new(k, n, rows.concat())
    }

    pub fn num_users(&self) -> usize {
        self.k
    }

    pub fn num_subcarriers(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn alpha(&self, user: usize, sub: usize) -> f64 {
        self.alpha[user * self.n + sub]
    }

    /// Row-major CNR values.
    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    /// CNRs of every user on subcarrier `sub`.
    pub fn column(&self, sub: usize) -> Vec<f64> {
        (0..self.k).map(|u| self.alpha(u, sub)).collect()
    }

    pub fn column_stats(&self, sub: usize) -> &ColumnStats {
        &self.stats[sub]
    }

    pub fn all_stats(&self) -> &[ColumnStats] {
        &self.stats
    }

    pub fn beta(&self, user: usize, sub: usize) -> f64 {
        self.stats[sub].beta(user)
    }
}

/// Order statistics of subcarrier `sub` (zero-based).
pub fn order_stats(real: &ChannelRealization, sub: usize) -> Result<ColumnStats> {
    if sub >= real.n {
        return invalid(format!("subcarrier {sub} out of range 0..{}", real.n));
    }
    Ok(real.stats[sub])
}

/// Immutable collection of realizations standing in for the fading
/// distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    realizations: Vec<ChannelRealization>,
    seed: u64,
    rho: f64,
}

impl ChannelEnsemble {
    pub fn from_realizations(
        realizations: Vec<ChannelRealization>,
        seed: u64,
        rho: f64,
    ) -> Result<Self> {
        if let Some(first) = realizations.first() {
            let (k, n) = (first.k, first.n);
            if realizations.iter().any(|r| r.k != k || r.n != n) {
                return invalid("realizations have mismatched dimensions");
            }
        }
        Ok(ChannelEnsemble {
            realizations,
            seed,
            rho,
        })
    }

    pub fn realizations(&self) -> &[ChannelRealization] {
        &self.realizations
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `(K, N)` of the stored matrices, `None` for an empty ensemble.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.realizations.first().map(|r| (r.k, r.n))
    }

    /// Checks the ensemble is non-empty and shaped for `config`.
    pub fn check_against(&self, config: &ProblemConfig) -> Result<()> {
        match self.dims() {
            None => invalid("ensemble is empty"),
            Some((k, n)) if k == config.k && n == config.n => Ok(()),
            Some((k, n)) => invalid(format!(
                "ensemble is {k}x{n} but config expects {}x{}",
                config.k, config.n
            )),
        }
    }

    /// Splits off the realizations in `range` into their own ensemble.
    pub fn slice(&self, range: std::ops::Range<usize>) -> ChannelEnsemble {
        ChannelEnsemble {
            realizations: self.realizations[range].to_vec(),
            seed: self.seed,
            rho: self.rho,
        }
    }

    /// SHA-256 over dimensions and every CNR bit pattern.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        if let Some((k, n)) = self.dims() {
            h.update((k as u64).to_le_bytes());
            h.update((n as u64).to_le_bytes());
        }
        h.update((self.len() as u64).to_le_bytes());
        for r in &self.realizations {
            for a in &r.alpha {
                h.update(a.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Draws one realization from the stream of `(seed, index)`.
pub fn generate_realization(
    k: usize,
    n: usize,
    rho: f64,
    seed: u64,
    index: u64,
) -> Result<ChannelRealization> {
    if !(rho.is_finite() && rho > 0.0) {
        return invalid("rho must be positive");
    }
    let exp = Exp::new(1.0 / rho).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let alpha = (0..k * n)
        .map(|_| {
            // Exp can return exactly 0 with negligible probability.
            let mut a = exp.sample(&mut rng);
            while a <= 0.0 {
                a = exp.sample(&mut rng);
            }
            a
        })
        .collect();
    ChannelRealization::new(k, n, alpha)
}

/// Generates `count` i.i.d. Rayleigh realizations shaped for `config`.
pub fn generate_ensemble(
    config: &ProblemConfig,
    count: usize,
    seed: u64,
) -> Result<ChannelEnsemble> {
    generate_with_dims(config.k, config.n, config.rho, count, seed)
}

pub fn generate_with_dims(
    k: usize,
    n: usize,
    rho: f64,
    count: usize,
    seed: u64,
) -> Result<ChannelEnsemble> {
    if count == 0 {
        return invalid("ensemble size must be positive");
    }
    if !(rho.is_finite() && rho > 0.0) {
        return invalid("rho must be positive");
    }
    let realizations = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_realization(k, n, rho, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelEnsemble {
        realizations,
        seed,
        rho,
    })
}
