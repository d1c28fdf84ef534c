//! Fixed-subcarrier-assignment baselines.
//!
//! Each user owns a fixed contiguous block of subcarriers; only power adapts.
//! SU power follows the threshold rule of the two-phase allocator restricted
//! to the SU's block (the SU must still be the strongest user on a
//! subcarrier to get any secrecy there), NU power is water-filling on the
//! NU's own block.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelEnsemble;
use crate::config::ProblemConfig;
use crate::error::{invalid, Result};
use crate::solution::SolveResult;
use crate::suboptimal::{gap_percentile, two_phase, NuSlots, SuCandidates};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FsaScheme {
    /// Every user gets `N/K` subcarriers.
    Fsa1,
    /// SUs share `3N/4`, NUs share `N/4`.
    Fsa2,
}

impl std::str::FromStr for FsaScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fsa1" => Ok(FsaScheme::Fsa1),
            "fsa2" => Ok(FsaScheme::Fsa2),
            other => Err(format!("unknown scheme {other:?}, expected fsa1 or fsa2")),
        }
    }
}

impl std::fmt::Display for FsaScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FsaScheme::Fsa1 => "fsa1",
            FsaScheme::Fsa2 => "fsa2",
        })
    }
}

/// Contiguous block of subcarriers owned by each user, in user order.
pub fn fsa_partition(scheme: FsaScheme, config: &ProblemConfig) -> Result<Vec<Range<usize>>> {
    config.validate()?;
    let (n, k, k1) = (config.n, config.k, config.k1);
    let sizes: Vec<usize> = match scheme {
        FsaScheme::Fsa1 => {
            if n % k != 0 {
                return invalid(format!("fsa1 needs N divisible by K (N={n}, K={k})"));
            }
            vec![n / k; k]
        }
        FsaScheme::Fsa2 => {
            if n % 4 != 0 {
                return invalid(format!("fsa2 needs N divisible by 4 (N={n})"));
            }
            let (su_total, nu_total) = (3 * n / 4, n / 4);
            let k2 = k - k1;
            if k1 > 0 && su_total % k1 != 0 {
                return invalid(format!(
                    "fsa2 needs 3N/4 divisible by K1 (3N/4={su_total}, K1={k1})"
                ));
            }
            if k2 > 0 && nu_total % k2 != 0 {
                return invalid(format!(
                    "fsa2 needs N/4 divisible by K-K1 (N/4={nu_total}, K-K1={k2})"
                ));
            }
            if k1 == 0 || k2 == 0 {
                return invalid("fsa2 needs at least one SU and one NU");
            }
            let mut s = vec![su_total / k1; k1];
            s.extend(std::iter::repeat(nu_total / k2).take(k2));
            s
        }
    };
    let mut start = 0;
    Ok(sizes
        .into_iter()
        .map(|len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

fn block_candidates(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    blocks: &[Range<usize>],
) -> Vec<SuCandidates> {
    let mut out = vec![SuCandidates::default(); config.k1];
    for (f, real) in ens.realizations().iter().enumerate() {
        for (k, block) in blocks.iter().take(config.k1).enumerate() {
            for sub in block.clone() {
                let s = real.column_stats(sub);
                if s.best_user == k && s.nu1 > s.nu2 {
                    out[k].push(f, sub, s.nu1, s.nu2);
                }
            }
        }
    }
    out
}

fn block_slots(ens: &ChannelEnsemble, config: &ProblemConfig, blocks: &[Range<usize>]) -> NuSlots {
    let mut s = NuSlots::default();
    for (f, real) in ens.realizations().iter().enumerate() {
        for (u, block) in blocks.iter().enumerate().skip(config.k1) {
            for sub in block.clone() {
                s.begin(f, sub);
                s.add(u, real.alpha(u, sub), config.weight(u));
                s.end();
            }
        }
    }
    s
}

/// Fixed-assignment allocation under the average power constraint.
pub fn solve_fsa(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    scheme: FsaScheme,
    eps: f64,
) -> Result<SolveResult> {
    let blocks = fsa_partition(scheme, config)?;
    ens.check_against(config)?;
    let cands = block_candidates(ens, config, &blocks);
    let slots = block_slots(ens, config, &blocks);
    two_phase(ens, config, eps, cands, gap_percentile(ens, 0.999), |_| {
        slots.clone()
    })
}

/// Search settings for [`max_feasible_target`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierSearch {
    /// Largest target tried.
    pub upper: f64,
    /// Absolute resolution on the target.
    pub resolution: f64,
}

impl Default for FrontierSearch {
    fn default() -> Self {
        FrontierSearch {
            upper: 5.0,
            resolution: 1e-3,
        }
    }
}

/// Largest common SU target the solver still meets, by bisection on the
/// target. `solve` returns whether a run is feasible; feasibility must be
/// monotone in the target.
pub fn max_feasible_target(
    config: &ProblemConfig,
    search: FrontierSearch,
    mut solve: impl FnMut(&ProblemConfig) -> Result<bool>,
) -> Result<f64> {
    if !(search.upper > 0.0 && search.resolution > 0.0) {
        return invalid("frontier search needs a positive upper end and resolution");
    }
    let (mut lo, mut hi) = (0.0, search.upper);
    if solve(&config.clone().with_targets(hi))? {
        return Ok(hi);
    }
    while hi - lo > search.resolution {
        let mid = 0.5 * (lo + hi);
        if solve(&config.clone().with_targets(mid))? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Largest common target an FSA scheme meets on `ens`.
pub fn fsa_frontier(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    scheme: FsaScheme,
    eps: f64,
) -> Result<f64> {
    max_feasible_target(config, FrontierSearch::default(), |c| {
        Ok(!solve_fsa(ens, c, scheme, eps)?.infeasible)
    })
}
