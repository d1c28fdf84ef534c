//! Two-phase low-complexity allocator.
//!
//! Phase one serves the SUs as if every NU were only an eavesdropper: SU `k`
//! takes subcarrier `n` when its CNR beats everyone else's by more than a
//! threshold `nu_k`, and the threshold is found by bisection so the average
//! secrecy rate meets `C_k`. Since only the strongest user can qualify, the
//! SU sets are disjoint and the K1 searches are independent.
//!
//! Phase two water-fills the leftover power over the leftover subcarriers,
//! NU `k` using level `omega_k * L0`, with `L0` found by bisection.
//!
//! SU power uses the optimal-policy formula with `lambda / mu_k` replaced by
//! `nu_k`; that formula depends on the multipliers only through their ratio,
//! so the substitution fixes it completely.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::AllocationDecision;
use crate::channel::ChannelEnsemble;
use crate::config::{DualState, ProblemConfig};
use crate::error::{invalid, Error, Result};
use crate::math::{h_nu_raw, nu_power_raw, secrecy_rate_raw, su_power_raw};
use crate::report::evaluate;
use crate::solution::SolveResult;

/// Thresholds and water level found by the two-phase allocators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuboptimalState {
    /// Per-SU CNR-gap thresholds `nu_k`.
    pub nu_thresholds: Vec<f64>,
    /// Base water level `L0`; NU `k` fills to `omega_k * L0`.
    pub water_level: f64,
}

impl SuboptimalState {
    pub fn nu_levels(&self, config: &ProblemConfig) -> Vec<f64> {
        config
            .weights
            .iter()
            .map(|w| w * self.water_level)
            .collect()
    }
}

/// SU power at threshold `nu` (`mu/lambda = 1/nu`). At `nu = 0` power is
/// unbounded, which only the rate limit below handles.
#[inline]
pub(crate) fn threshold_power(alpha: f64, beta: f64, nu: f64) -> f64 {
    if nu <= 0.0 {
        return if alpha > beta { f64::INFINITY } else { 0.0 };
    }
    su_power_raw(alpha, beta, 1.0, nu)
}

/// Secrecy rate at threshold `nu`; at `nu = 0` the infinite-power limit
/// `ln(alpha / beta)`.
#[inline]
pub(crate) fn threshold_rate(alpha: f64, beta: f64, nu: f64) -> f64 {
    if nu <= 0.0 {
        return if alpha > beta {
            (alpha / beta).ln()
        } else {
            0.0
        };
    }
    secrecy_rate_raw(threshold_power(alpha, beta, nu), alpha, beta)
}

/// Subcarriers an SU may use, as `(realization, subcarrier, alpha, beta)`
/// with `alpha > beta`.
#[derive(Debug, Clone, Default)]
pub(crate) struct SuCandidates {
    pub frame: Vec<u32>,
    pub sub: Vec<u32>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl SuCandidates {
    pub(crate) fn push(&mut self, frame: usize, sub: usize, alpha: f64, beta: f64) {
        self.frame.push(frame as u32);
        self.sub.push(sub as u32);
        self.alpha.push(alpha);
        self.beta.push(beta);
    }

    fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a - b)
    }

    /// `(sum of secrecy rates, sum of powers)` at threshold `nu`.
    fn totals(&self, nu: f64) -> (f64, f64) {
        let (mut r, mut p) = (0.0, 0.0);
        for i in 0..self.alpha.len() {
            let (a, b) = (self.alpha[i], self.beta[i]);
            if a - b > nu {
                r += threshold_rate(a, b, nu);
                p += threshold_power(a, b, nu);
            }
        }
        (r, p)
    }
}

/// Candidates of every SU over all subcarriers (it must be the strongest user).
pub(crate) fn su_candidates(ens: &ChannelEnsemble, config: &ProblemConfig) -> Vec<SuCandidates> {
    let mut out = vec![SuCandidates::default(); config.k1];
    for (f, real) in ens.realizations().iter().enumerate() {
        for (sub, s) in real.all_stats().iter().enumerate() {
            if s.best_user < config.k1 && s.nu1 > s.nu2 {
                out[s.best_user].push(f, sub, s.nu1, s.nu2);
            }
        }
    }
    out
}

/// One threshold bisection, with its bracket history.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub nu: f64,
    /// Average secrecy rate at `nu`.
    pub rate: f64,
    /// Average SU power at `nu`.
    pub power: f64,
    pub iterations: usize,
    /// `(nu_lb, nu_ub)` after every step.
    pub brackets: Vec<(f64, f64)>,
    pub converged: bool,
}

/// Relative bracket width at which a bisection stops regardless of the
/// rate tolerance.
pub const BRACKET_RESOLUTION: f64 = 1e-9;

/// Bisection on `nu` in `[0, nu_ub]` for average secrecy `target` over `m`
/// realizations. Fails with [`Error::Infeasible`] (user field = `user`) when
/// the target exceeds the `nu = 0` rate.
pub(crate) fn threshold_search(
    cand: &SuCandidates,
    m: usize,
    target: f64,
    eps: f64,
    nu_ub: f64,
    user: usize,
) -> Result<ThresholdSearch> {
    let m = m as f64;
    let rate_at = |nu: f64| cand.totals(nu).0 / m;
    let max_gap = cand.gaps().fold(0.0f64, f64::max);
    if target == 0.0 {
        // Empty set: the threshold sits at the largest gap.
        let nu = nu_ub.max(max_gap);
        return Ok(ThresholdSearch {
            nu,
            rate: 0.0,
            power: 0.0,
            iterations: 0,
            brackets: vec![(0.0, nu)],
            converged: true,
        });
    }
    let best = rate_at(0.0);
    if best < target {
        return Err(Error::Infeasible {
            user,
            achievable: best,
            target,
        });
    }
    let mut lb = 0.0;
    let mut ub = nu_ub.max(f64::MIN_POSITIVE);
    // Widen until the upper end is below target; past max_gap the rate is 0.
    let mut widen = 0;
    while rate_at(ub) > target && ub < max_gap {
        lb = ub;
        ub *= 2.0;
        widen += 1;
    }
    let mut brackets = vec![(lb, ub)];
    let mut iterations = widen;
    let width0 = ub - lb;
    let mut nu = 0.5 * (lb + ub);
    let mut converged = false;
    loop {
        let r = rate_at(nu);
        iterations += 1;
        if (r - target).abs() <= eps * target {
            converged = true;
            break;
        }
        if r > target {
            lb = nu;
        } else {
            ub = nu;
        }
        brackets.push((lb, ub));
        if ub - lb <= BRACKET_RESOLUTION * width0 {
            // Continuous in nu, so this only triggers for eps ~ 0; take the
            // side that meets the target.
            nu = lb;
            break;
        }
        nu = 0.5 * (lb + ub);
    }
    let (r, p) = cand.totals(nu);
    Ok(ThresholdSearch {
        nu,
        rate: r / m,
        power: p / m,
        iterations,
        brackets,
        converged,
    })
}

/// Outcome of the SU phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SuPhase {
    pub nu_thresholds: Vec<f64>,
    /// Average secrecy rate of each SU.
    pub secrecy: Vec<f64>,
    /// Average power of each SU.
    pub su_power: Vec<f64>,
    /// Total average SU power.
    pub total_power: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Upper threshold bracket: the 99.9th percentile of CNR gaps between the
/// two strongest users across the ensemble.
pub fn gap_percentile(ens: &ChannelEnsemble, q: f64) -> f64 {
    let mut gaps: Vec<f64> = ens
        .realizations()
        .iter()
        .flat_map(|r| r.all_stats().iter().map(|s| s.nu1 - s.nu2))
        .collect();
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(f64::total_cmp);
    let idx = ((q * (gaps.len() - 1) as f64).round() as usize).min(gaps.len() - 1);
    gaps[idx]
}

pub(crate) fn run_su_phase(
    cands: &[SuCandidates],
    m: usize,
    config: &ProblemConfig,
    eps: f64,
    nu_ub: f64,
) -> Result<(SuPhase, Vec<ThresholdSearch>)> {
    let searches = cands
        .par_iter()
        .zip(config.secrecy_targets.par_iter())
        .enumerate()
        .map(|(k, (c, &target))| threshold_search(c, m, target, eps, nu_ub, k))
        .collect::<Result<Vec<_>>>()?;
    let phase = SuPhase {
        nu_thresholds: searches.iter().map(|s| s.nu).collect(),
        secrecy: searches.iter().map(|s| s.rate).collect(),
        su_power: searches.iter().map(|s| s.power).collect(),
        total_power: searches.iter().map(|s| s.power).sum(),
        iterations: searches.iter().map(|s| s.iterations).sum(),
        converged: searches.iter().all(|s| s.converged),
    };
    Ok((phase, searches))
}

/// SU phase: per-SU threshold searches against all other users.
pub fn su_phase(ens: &ChannelEnsemble, config: &ProblemConfig, eps: f64) -> Result<SuPhase> {
    config.validate()?;
    ens.check_against(config)?;
    let cands = su_candidates(ens, config);
    let nu_ub = gap_percentile(ens, 0.999);
    Ok(run_su_phase(&cands, ens.len(), config, eps, nu_ub)?.0)
}

/// Per-realization mask of subcarriers already taken by SUs.
pub type Occupancy = Vec<Vec<bool>>;

/// Subcarriers taken by SUs at the given thresholds.
pub(crate) fn occupancy(cands: &[SuCandidates], nu: &[f64], m: usize, n: usize) -> Occupancy {
    let mut occ = vec![vec![false; n]; m];
    for (c, &v) in cands.iter().zip(nu) {
        for i in 0..c.alpha.len() {
            if c.alpha[i] - c.beta[i] > v {
                occ[c.frame[i] as usize][c.sub[i] as usize] = true;
            }
        }
    }
    occ
}

/// Free subcarrier with the NUs allowed to use it, as `(frame, sub, alpha,
/// weight, user)` rows; the caller picks the best bid.
#[derive(Debug, Clone, Default)]
pub(crate) struct NuSlots {
    /// `(frame, sub)` per slot.
    pub slot: Vec<(u32, u32)>,
    /// Offsets into `user/alpha` per slot (len = slots + 1).
    pub offsets: Vec<usize>,
    pub user: Vec<u32>,
    pub alpha: Vec<f64>,
    pub weight: Vec<f64>,
}

impl NuSlots {
    pub(crate) fn begin(&mut self, frame: usize, sub: usize) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.slot.push((frame as u32, sub as u32));
    }

    pub(crate) fn add(&mut self, user: usize, alpha: f64, weight: f64) {
        self.user.push(user as u32);
        self.alpha.push(alpha);
        self.weight.push(weight);
    }

    pub(crate) fn end(&mut self) {
        self.offsets.push(self.user.len());
    }

    fn len(&self) -> usize {
        self.slot.len()
    }

    /// Winning NU of slot `i` at level `l0`: `(local index, power, rate)`.
    #[inline]
    fn winner(&self, i: usize, l0: f64) -> Option<(usize, f64, f64)> {
        let lam = 1.0 / l0;
        let mut best: Option<(usize, f64)> = None;
        for j in self.offsets[i]..self.offsets[i + 1] {
            let h = h_nu_raw(self.alpha[j], self.weight[j], lam);
            if h > best.map_or(0.0, |b| b.1) {
                best = Some((j, h));
            }
        }
        best.map(|(j, _)| {
            let p = nu_power_raw(self.alpha[j], self.weight[j], lam);
            (j, p, (p * self.alpha[j]).ln_1p())
        })
    }

    /// `(sum of NU power, sum of weighted NU rate)` at level `l0`.
    fn totals(&self, l0: f64) -> (f64, f64) {
        if l0 <= 0.0 {
            return (0.0, 0.0);
        }
        let (mut p, mut r) = (0.0, 0.0);
        for i in 0..self.len() {
            if let Some((j, pj, rj)) = self.winner(i, l0) {
                p += pj;
                r += self.weight[j] * rj;
            }
        }
        (p, r)
    }
}

pub(crate) fn free_slots(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    occupied: &Occupancy,
) -> NuSlots {
    let mut s = NuSlots::default();
    for (f, real) in ens.realizations().iter().enumerate() {
        for sub in 0..config.n {
            if occupied[f][sub] {
                continue;
            }
            s.begin(f, sub);
            for u in config.k1..config.k {
                s.add(u, real.alpha(u, sub), config.weight(u));
            }
            s.end();
        }
    }
    s
}

/// Outcome of the NU phase.
#[derive(Debug, Clone, PartialEq)]
pub struct NuPhase {
    pub water_level: f64,
    /// Average NU power.
    pub nu_power: f64,
    /// Average weighted NU rate.
    pub r_nu_total: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when no power was left for NUs.
    pub budget_exhausted: bool,
}

/// Bisection on `L0` so average NU power matches `residual`, stopping once
/// `|P_SU + P_NU - P| < eps * P` (equivalently `|P_NU - residual| < eps * P`).
pub(crate) fn water_level_search(
    slots: &NuSlots,
    m: usize,
    residual: f64,
    budget: f64,
    eps: f64,
) -> NuPhase {
    let m = m as f64;
    if residual <= 0.0 {
        return NuPhase {
            water_level: 0.0,
            nu_power: 0.0,
            r_nu_total: 0.0,
            iterations: 0,
            converged: residual.abs() < eps * budget,
            budget_exhausted: true,
        };
    }
    let power_at = |l0: f64| slots.totals(l0).0 / m;
    let mut iterations = 0;
    let mut ub = budget;
    while power_at(ub) <= residual && iterations < 200 {
        ub *= 2.0;
        iterations += 1;
    }
    if iterations == 200 {
        // No free subcarrier anywhere: NUs cannot spend anything.
        return NuPhase {
            water_level: ub,
            nu_power: 0.0,
            r_nu_total: 0.0,
            iterations,
            converged: false,
            budget_exhausted: false,
        };
    }
    let mut lb = 0.0;
    let width0 = ub;
    let mut l0 = 0.5 * (lb + ub);
    let mut converged = false;
    loop {
        let p = power_at(l0);
        iterations += 1;
        if (p - residual).abs() < eps * budget {
            converged = true;
            break;
        }
        if p > residual {
            ub = l0;
        } else {
            lb = l0;
        }
        if ub - lb <= BRACKET_RESOLUTION * width0 {
            l0 = lb;
            break;
        }
        l0 = 0.5 * (lb + ub);
    }
    let (p, r) = slots.totals(l0);
    NuPhase {
        water_level: l0,
        nu_power: p / m,
        r_nu_total: r / m,
        iterations,
        converged,
        budget_exhausted: false,
    }
}

/// NU phase over the subcarriers not in `occupied`.
pub fn nu_phase(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    residual: f64,
    occupied: &Occupancy,
    eps: f64,
) -> Result<NuPhase> {
    config.validate()?;
    ens.check_against(config)?;
    if occupied.len() != ens.len() || occupied.iter().any(|o| o.len() != config.n) {
        return invalid("occupancy mask does not match the ensemble");
    }
    let slots = free_slots(ens, config, occupied);
    Ok(water_level_search(
        &slots,
        ens.len(),
        residual,
        config.power,
        eps,
    ))
}

/// Builds per-realization decisions from thresholds and water level.
pub(crate) fn build_decisions(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    cands: &[SuCandidates],
    nu: &[f64],
    slots: &NuSlots,
    l0: f64,
) -> Vec<AllocationDecision> {
    let mut ds: Vec<AllocationDecision> = (0..ens.len())
        .map(|_| AllocationDecision::idle(config))
        .collect();
    let reals = ens.realizations();
    for (k, (c, &v)) in cands.iter().zip(nu).enumerate() {
        for i in 0..c.alpha.len() {
            if c.alpha[i] - c.beta[i] > v {
                let (f, s) = (c.frame[i] as usize, c.sub[i] as usize);
                let p = threshold_power(c.alpha[i], c.beta[i], v);
                ds[f].set(&reals[f], config, s, k, p);
            }
        }
    }
    if l0 > 0.0 {
        for i in 0..slots.len() {
            if let Some((j, p, _)) = slots.winner(i, l0) {
                let (f, s) = slots.slot[i];
                ds[f as usize].set(
                    &reals[f as usize],
                    config,
                    s as usize,
                    slots.user[j] as usize,
                    p,
                );
            }
        }
    }
    ds
}

/// Equivalent multipliers: `lambda = 1/L0`, `mu_k = lambda / nu_k`.
pub(crate) fn equivalent_duals(nu: &[f64], l0: f64) -> DualState {
    let lam = if l0 > 0.0 { 1.0 / l0 } else { f64::INFINITY };
    let mu = nu
        .iter()
        .map(|&v| {
            if v > 0.0 && lam.is_finite() {
                lam / v
            } else {
                0.0
            }
        })
        .collect();
    DualState {
        mu,
        lambda: lam.is_finite().then_some(lam),
    }
}

/// Shared driver for the two-phase allocators: SU candidates and NU slot
/// construction differ between the adaptive and fixed-assignment variants.
pub(crate) fn two_phase(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    eps: f64,
    cands: Vec<SuCandidates>,
    nu_ub: f64,
    slots_for: impl Fn(&[f64]) -> NuSlots,
) -> Result<SolveResult> {
    let m = ens.len();
    let (su, _) = match run_su_phase(&cands, m, config, eps, nu_ub) {
        Ok(v) => v,
        Err(Error::Infeasible {
            user,
            achievable,
            target,
        }) => {
            let why = format!(
                "SU {user} reaches at most {achievable:.4} nat/symbol on average (target {target:.4})"
            );
            return Ok(SolveResult::infeasible(
                DualState::zeros(config.k1, 0.0),
                0,
                why,
            ));
        }
        Err(e) => return Err(e),
    };
    let slots = slots_for(&su.nu_thresholds);
    let residual = config.power - su.total_power;
    let nu = water_level_search(&slots, m, residual, config.power, eps);
    let decisions = build_decisions(
        ens,
        config,
        &cands,
        &su.nu_thresholds,
        &slots,
        nu.water_level,
    );
    let report = evaluate(&decisions, ens, config)?;
    let over_budget = su.total_power > config.power * (1.0 + eps);
    let state = SuboptimalState {
        nu_thresholds: su.nu_thresholds.clone(),
        water_level: nu.water_level,
    };
    let diagnostics = if over_budget {
        Some(format!(
            "SUs need {:.4} average power to meet their targets, budget is {:.4}",
            su.total_power, config.power
        ))
    } else if !(su.converged && nu.converged) {
        Some("threshold or water-level search stopped at bracket resolution".to_string())
    } else {
        None
    };
    Ok(SolveResult {
        duals: equivalent_duals(&su.nu_thresholds, nu.water_level),
        report,
        iterations: su.iterations + nu.iterations,
        converged: su.converged && nu.converged && !over_budget,
        infeasible: over_budget,
        diagnostics,
        decisions,
        dual_objective: None,
        dual_trace: Vec::new(),
        frame_lambdas: Vec::new(),
        thresholds: Some(state),
    })
}

/// Two-phase suboptimal allocation under the average power constraint.
pub fn solve_suboptimal(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    eps: f64,
) -> Result<SolveResult> {
    config.validate()?;
    ens.check_against(config)?;
    let cands = su_candidates(ens, config);
    let nu_ub = gap_percentile(ens, 0.999);
    two_phase(ens, config, eps, cands.clone(), nu_ub, |nu| {
        let occ = occupancy(&cands, nu, ens.len(), config.n);
        free_slots(ens, config, &occ)
    })
}
