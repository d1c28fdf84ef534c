//! Dual-decomposition allocator.
//!
//! For fixed multipliers the priced problem splits into one auction per
//! subcarrier (see [`crate::math::assign_subcarrier`]). The multipliers are
//! then driven to satisfy the ensemble-averaged constraints. In average mode
//! the power price `lambda` is a single scalar; in peak mode it is resolved
//! per realization so that every frame spends at most the budget.
//!
//! Ensemble averages are always reduced in realization order, so results do
//! not depend on the rayon thread count.

use rayon::prelude::*;

use crate::allocation::AllocationDecision;
use crate::channel::{ChannelEnsemble, ChannelRealization};
use crate::config::{DualState, PowerMode, ProblemConfig};
use crate::ellipsoid::Ellipsoid;
use crate::error::{invalid, Result};
use crate::math::{
    assign_with, h_nu_raw, h_su_at, nu_power_raw, secrecy_rate_raw, su_power_raw, Assignment,
};
use crate::recovery::{polish_owners_peak, refine_average, refine_peak};
use crate::report::{evaluate, EvaluationReport};
use crate::solution::{DualMethod, SolveResult, SolverOptions};

/// Per-realization sums, added up across an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FrameTotals {
    pub su_secrecy: Vec<f64>,
    pub weighted_nu: f64,
    pub power: f64,
    /// Sum over subcarriers of the winning bid.
    pub bid_sum: f64,
    /// `lambda(alpha) * P` in peak mode, zero otherwise.
    pub price_term: f64,
}

impl FrameTotals {
    pub fn zeros(k1: usize) -> Self {
        FrameTotals {
            su_secrecy: vec![0.0; k1],
            weighted_nu: 0.0,
            power: 0.0,
            bid_sum: 0.0,
            price_term: 0.0,
        }
    }

    fn add(&mut self, o: &FrameTotals) {
        for (a, b) in self.su_secrecy.iter_mut().zip(&o.su_secrecy) {
            *a += b;
        }
        self.weighted_nu += o.weighted_nu;
        self.power += o.power;
        self.bid_sum += o.bid_sum;
        self.price_term += o.price_term;
    }

    fn scale(&mut self, s: f64) {
        self.su_secrecy.iter_mut().for_each(|x| *x *= s);
        self.weighted_nu *= s;
        self.power *= s;
        self.bid_sum *= s;
        self.price_term *= s;
    }

    fn push(&mut self, a: &Assignment, config: &ProblemConfig) {
        if let Some(u) = a.owner {
            self.power += a.power;
            if config.is_su(u) {
                self.su_secrecy[u] += a.rate;
            } else {
                self.weighted_nu += config.weight(u) * a.rate;
            }
        }
        self.bid_sum += a.value;
    }
}

/// Ensemble mean of `f` over realizations, reduced in order.
pub(crate) fn ensemble_mean<F>(ens: &ChannelEnsemble, k1: usize, f: F) -> FrameTotals
where
    F: Fn(&ChannelRealization) -> FrameTotals + Sync,
{
    let frames: Vec<FrameTotals> = ens.realizations().par_iter().map(|r| f(r)).collect();
    let mut total = FrameTotals::zeros(k1);
    for fr in &frames {
        total.add(fr);
    }
    total.scale(1.0 / ens.len() as f64);
    total
}

#[inline]
fn assign_at(
    real: &ChannelRealization,
    sub: usize,
    mu: &[f64],
    weights: &[f64],
    lam: f64,
) -> Assignment {
    assign_with(
        |u| real.alpha(u, sub),
        real.column_stats(sub),
        mu,
        weights,
        lam,
    )
}

fn frame_totals(
    real: &ChannelRealization,
    config: &ProblemConfig,
    mu: &[f64],
    lam: f64,
) -> FrameTotals {
    let mut t = FrameTotals::zeros(config.k1);
    for sub in 0..real.num_subcarriers() {
        t.push(&assign_at(real, sub, mu, &config.weights, lam), config);
    }
    t
}

fn frame_power(real: &ChannelRealization, mu: &[f64], weights: &[f64], lam: f64) -> f64 {
    (0..real.num_subcarriers())
        .map(|sub| assign_at(real, sub, mu, weights, lam).power)
        .sum()
}

fn check_inputs(real: &ChannelRealization, mu: &[f64], config: &ProblemConfig) -> Result<()> {
    if real.num_users() != config.k || real.num_subcarriers() != config.n {
        return invalid("realization dimensions do not match config");
    }
    if mu.len() != config.k1 {
        return invalid(format!(
            "expected {} multipliers, got {}",
            config.k1,
            mu.len()
        ));
    }
    if mu.iter().any(|m| !(*m >= 0.0)) {
        return invalid("secrecy multipliers must be non-negative");
    }
    Ok(())
}

/// Allocation of one realization at fixed multipliers (average-power mode).
pub fn allocate_realization_avg(
    real: &ChannelRealization,
    duals: &DualState,
    config: &ProblemConfig,
) -> Result<AllocationDecision> {
    check_inputs(real, &duals.mu, config)?;
    let lam = match duals.lambda {
        Some(l) if l > 0.0 => l,
        other => {
            return invalid(format!(
                "average mode needs a positive power price, got {other:?}"
            ))
        }
    };
    Ok(decide(real, config, &duals.mu, lam))
}

fn decide(
    real: &ChannelRealization,
    config: &ProblemConfig,
    mu: &[f64],
    lam: f64,
) -> AllocationDecision {
    let a: Vec<Assignment> = (0..config.n)
        .map(|sub| assign_at(real, sub, mu, &config.weights, lam))
        .collect();
    AllocationDecision::from_assignments(real, config, &a)
}

/// Dual function value and its subgradient at given multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    /// `g(mu, lambda)`.
    pub value: f64,
    /// `E[secrecy_k] - C_k` for each SU.
    pub grad_mu: Vec<f64>,
    /// `P - E[total power]`; zero in peak mode.
    pub grad_lambda: f64,
    /// Average weighted NU rate of the maximizing allocation.
    pub primal: f64,
    pub mean_secrecy: Vec<f64>,
    pub mean_power: f64,
}

fn dual_from_totals(
    t: &FrameTotals,
    config: &ProblemConfig,
    mu: &[f64],
    lam: Option<f64>,
) -> DualEvaluation {
    let penalty: f64 = mu
        .iter()
        .zip(&config.secrecy_targets)
        .map(|(m, c)| m * c)
        .sum();
    let value = match lam {
        Some(l) => t.bid_sum - penalty + l * config.power,
        None => t.bid_sum - penalty + t.price_term,
    };
    DualEvaluation {
        value,
        grad_mu: t
            .su_secrecy
            .iter()
            .zip(&config.secrecy_targets)
            .map(|(r, c)| r - c)
            .collect(),
        grad_lambda: lam.map_or(0.0, |_| config.power - t.power),
        primal: t.weighted_nu,
        mean_secrecy: t.su_secrecy.clone(),
        mean_power: t.power,
    }
}

/// Evaluates the average-mode dual function over `ens` at `duals`.
pub fn dual_evaluation(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    duals: &DualState,
) -> Result<DualEvaluation> {
    config.validate()?;
    ens.check_against(config)?;
    if duals.mu.len() != config.k1 {
        return invalid("multiplier count does not match K1");
    }
    let lam = match duals.lambda {
        Some(l) if l > 0.0 => l,
        _ => return invalid("dual evaluation needs a positive power price"),
    };
    let t = ensemble_mean(ens, config.k1, |r| frame_totals(r, config, &duals.mu, lam));
    Ok(dual_from_totals(&t, config, &duals.mu, Some(lam)))
}

/// Power price at which nothing in `real` is worth powering.
fn silent_price(real: &ChannelRealization, mu: &[f64], weights: &[f64]) -> f64 {
    let k1 = mu.len();
    let mut hi: f64 = 0.0;
    for sub in 0..real.num_subcarriers() {
        let s = real.column_stats(sub);
        for (j, w) in weights.iter().enumerate() {
            hi = hi.max(w * real.alpha(k1 + j, sub));
        }
        if s.best_user < k1 {
            hi = hi.max(mu[s.best_user] * (s.nu1 - s.nu2));
        }
    }
    hi
}

/// Resolves the per-frame power price so the frame spends the budget.
/// Returns `(lambda, power)` with `power <= budget`.
fn frame_price(
    real: &ChannelRealization,
    mu: &[f64],
    weights: &[f64],
    budget: f64,
    tol: f64,
    floor: f64,
) -> (f64, f64) {
    let hi0 = silent_price(real, mu, weights);
    if hi0 <= floor {
        return (floor, frame_power(real, mu, weights, floor));
    }
    let p_floor = frame_power(real, mu, weights, floor);
    if p_floor <= budget {
        return (floor, p_floor);
    }
    // Illinois regula falsi on f(t) = power(exp(t)) - budget, bracketed.
    let (mut t_lo, mut f_lo) = (floor.ln(), p_floor - budget);
    let (mut t_hi, mut f_hi) = (hi0.ln(), -budget);
    let mut p_hi = 0.0;
    let mut side = 0i8;
    for _ in 0..200 {
        if -f_hi <= tol * budget || t_hi - t_lo < 1e-14 {
            break;
        }
        let mut t = (t_lo * f_hi - t_hi * f_lo) / (f_hi - f_lo);
        if !(t > t_lo && t < t_hi) || (t_hi - t_lo) > 8.0 {
            t = 0.5 * (t_lo + t_hi);
        }
        let p = frame_power(real, mu, weights, t.exp());
        let f = p - budget;
        if f > 0.0 {
            t_lo = t;
            f_lo = f;
            if side == 1 {
                f_hi *= 0.5;
            }
            side = 1;
        } else {
            t_hi = t;
            f_hi = f;
            p_hi = p;
            if side == -1 {
                f_lo *= 0.5;
            }
            side = -1;
        }
    }
    (t_hi.exp(), p_hi)
}

/// Peak-mode allocation of one realization: finds the frame price
/// `lambda(alpha)` by bracketed search so the frame uses the whole budget
/// (or less, with the price at its floor).
pub fn allocate_realization_peak(
    real: &ChannelRealization,
    mu: &[f64],
    config: &ProblemConfig,
) -> Result<(AllocationDecision, f64)> {
    allocate_realization_peak_with(
        real,
        mu,
        config,
        1e-9,
        SolverOptions::default().lambda_floor,
    )
}

pub fn allocate_realization_peak_with(
    real: &ChannelRealization,
    mu: &[f64],
    config: &ProblemConfig,
    tol: f64,
    floor: f64,
) -> Result<(AllocationDecision, f64)> {
    check_inputs(real, mu, config)?;
    let (lam, _) = frame_price(real, mu, &config.weights, config.power, tol, floor);
    Ok((decide(real, config, mu, lam), lam))
}

fn frame_totals_peak(
    real: &ChannelRealization,
    config: &ProblemConfig,
    mu: &[f64],
    opts: &SolverOptions,
) -> (FrameTotals, f64) {
    let (lam, _) = frame_price(
        real,
        mu,
        &config.weights,
        config.power,
        opts.frame_tolerance,
        opts.lambda_floor,
    );
    let mut t = frame_totals(real, config, mu, lam);
    t.price_term = lam * config.power;
    (t, lam)
}

fn peak_evaluation(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    mu: &[f64],
    opts: &SolverOptions,
) -> DualEvaluation {
    let t = ensemble_mean(ens, config.k1, |r| frame_totals_peak(r, config, mu, opts).0);
    dual_from_totals(&t, config, mu, None)
}

/// Secrecy tolerance used in the convergence test.
fn secrecy_tol(c: f64, eps: f64) -> f64 {
    eps * c.max(1.0)
}

/// `true` when every SU constraint holds to tolerance (with complementary
/// slackness for zero multipliers).
fn secrecy_met(config: &ProblemConfig, mu: &[f64], secrecy: &[f64], eps: f64) -> bool {
    mu.iter()
        .zip(secrecy)
        .zip(&config.secrecy_targets)
        .all(|((&m, &r), &c)| {
            let tight = (r - c).abs() <= secrecy_tol(c, eps);
            let slack = m == 0.0 && r >= c;
            (tight || slack) && r >= c * (1.0 - eps)
        })
}

fn power_met(config: &ProblemConfig, lam: f64, power: f64, opts: &SolverOptions) -> bool {
    let p = config.power;
    (power - p).abs() <= opts.epsilon * p || (lam <= opts.lambda_floor && power <= p)
}

/// Starting power price: a water level spreading `P` evenly over the
/// strongest users.
fn initial_lambda(ens: &ChannelEnsemble, config: &ProblemConfig) -> f64 {
    let mut inv = 0.0;
    for r in ens.realizations() {
        for s in r.all_stats() {
            inv += 1.0 / s.nu1;
        }
    }
    let inv = inv / ens.len() as f64;
    let w = config.weights.iter().sum::<f64>() / config.weights.len() as f64;
    w * config.n as f64 / (config.power + inv)
}

fn failing_users(config: &ProblemConfig, secrecy: &[f64], eps: f64) -> Vec<usize> {
    secrecy
        .iter()
        .zip(&config.secrecy_targets)
        .enumerate()
        .filter(|(_, (r, c))| **r < **c * (1.0 - eps))
        .map(|(k, _)| k)
        .collect()
}

/// Solves with the power constraint named by `config.mode`.
pub fn solve_optimal(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    match config.mode {
        PowerMode::Average => solve_average(ens, config, opts),
        PowerMode::Peak => solve_peak(ens, config, opts),
    }
}

/// Solves the average-power problem over `ens`.
pub fn solve_average(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    config.validate()?;
    ens.check_against(config)?;
    if config.mode != PowerMode::Average {
        return invalid("solve_average needs an average-power config");
    }
    let run = match opts.method {
        DualMethod::Bisection => bisection_average(ens, config, opts),
        DualMethod::Subgradient | DualMethod::Ellipsoid => descent_average(ens, config, opts),
    };
    finish_average(ens, config, run, opts)
}

/// Raw outcome of a multiplier search before the final allocation pass.
struct DualRun {
    mu: Vec<f64>,
    lambda: f64,
    iterations: usize,
    converged: bool,
    infeasible: bool,
    diagnostics: Option<String>,
    trace: Vec<f64>,
}

fn finish_average(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    run: DualRun,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let mut decisions: Vec<AllocationDecision> = ens
        .realizations()
        .par_iter()
        .map(|r| decide(r, config, &run.mu, run.lambda))
        .collect();
    let mut report = evaluate(&decisions, ens, config)?;
    let mut converged = run.converged;
    if opts.refine_powers && !run.infeasible {
        if let Some(ds) = refine_average(ens, config, &decisions) {
            let rep = evaluate(&ds, ens, config)?;
            let met = failing_users(config, &rep.r_su, opts.epsilon).is_empty()
                && rep.avg_power <= config.power * (1.0 + opts.epsilon);
            let current_met = failing_users(config, &report.r_su, opts.epsilon).is_empty();
            if met && (!current_met || rep.r_nu_total >= report.r_nu_total) {
                decisions = ds;
                report = rep;
                converged = true;
            }
        }
    }
    let duals = DualState::new(run.mu, Some(run.lambda))?;
    let dual = dual_evaluation(ens, config, &duals)?;
    Ok(SolveResult {
        duals,
        report,
        iterations: run.iterations,
        converged: converged && !run.infeasible,
        infeasible: run.infeasible,
        diagnostics: run.diagnostics,
        decisions,
        dual_objective: Some(dual.value),
        dual_trace: run.trace,
        frame_lambdas: Vec::new(),
        thresholds: None,
    })
}

fn push_best(trace: &mut Vec<f64>, v: f64) {
    let best = trace.last().map_or(v, |b: &f64| b.min(v));
    trace.push(best);
}

/// Subcarriers on which one SU is the strongest user, with the competing
/// best-NU bid at the current power price.
#[derive(Default)]
struct SuMarket {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    nu_bid: Vec<f64>,
    nu_power: Vec<f64>,
    nu_rate: Vec<f64>,
    max_gap: f64,
}

struct MarketResponse {
    secrecy: f64,
    power: f64,
    weighted_nu: f64,
    bid_sum: f64,
}

impl SuMarket {
    fn response(&self, mu: f64, lam: f64) -> MarketResponse {
        let mut out = MarketResponse {
            secrecy: 0.0,
            power: 0.0,
            weighted_nu: 0.0,
            bid_sum: 0.0,
        };
        for i in 0..self.alpha.len() {
            let (a, b) = (self.alpha[i], self.beta[i]);
            let p = su_power_raw(a, b, mu, lam);
            let h = h_su_at(p, a, b, mu, lam);
            if h > self.nu_bid[i] {
                out.secrecy += secrecy_rate_raw(p, a, b);
                out.power += p;
                out.bid_sum += h;
            } else {
                out.power += self.nu_power[i];
                out.weighted_nu += self.nu_rate[i];
                out.bid_sum += self.nu_bid[i];
            }
        }
        out
    }
}

/// State of the inner problem at one power price.
struct PricePoint {
    lambda: f64,
    mu: Vec<f64>,
    secrecy: Vec<f64>,
    power: f64,
    dual: f64,
    failed: Vec<usize>,
}

fn price_point(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    lam: f64,
    opts: &SolverOptions,
) -> PricePoint {
    let k1 = config.k1;
    let m = ens.len() as f64;
    let mut markets: Vec<SuMarket> = (0..k1).map(|_| SuMarket::default()).collect();
    let (mut fixed_power, mut fixed_bid) = (0.0, 0.0);
    for real in ens.realizations() {
        for sub in 0..real.num_subcarriers() {
            let s = real.column_stats(sub);
            let mut best = (0.0, 0.0, 0.0);
            for (j, &w) in config.weights.iter().enumerate() {
                let a = real.alpha(k1 + j, sub);
                let h = h_nu_raw(a, w, lam);
                if h > best.0 {
                    let p = nu_power_raw(a, w, lam);
                    best = (h, p, w * (p * a).ln_1p());
                }
            }
            if s.best_user < k1 {
                let mk = &mut markets[s.best_user];
                mk.alpha.push(s.nu1);
                mk.beta.push(s.nu2);
                mk.nu_bid.push(best.0);
                mk.nu_power.push(best.1);
                mk.nu_rate.push(best.2);
                mk.max_gap = mk.max_gap.max(s.nu1 - s.nu2);
            } else {
                fixed_bid += best.0;
                fixed_power += best.1;
            }
        }
    }

    let solved: Vec<(f64, MarketResponse, bool)> = markets
        .par_iter()
        .zip(config.secrecy_targets.par_iter())
        .map(|(mk, &c)| solve_market(mk, c, m, lam, opts))
        .collect();

    let mut power = fixed_power;
    let mut bid = fixed_bid;
    let mut mu = Vec::with_capacity(k1);
    let mut secrecy = Vec::with_capacity(k1);
    let mut failed = Vec::new();
    for (k, (muk, resp, ok)) in solved.into_iter().enumerate() {
        power += resp.power;
        bid += resp.bid_sum;
        mu.push(muk);
        secrecy.push(resp.secrecy / m);
        if !ok {
            failed.push(k);
        }
    }
    let power = power / m;
    let penalty: f64 = mu
        .iter()
        .zip(&config.secrecy_targets)
        .map(|(a, c)| a * c)
        .sum();
    PricePoint {
        lambda: lam,
        dual: bid / m - penalty + lam * config.power,
        mu,
        secrecy,
        power,
        failed,
    }
}

/// Smallest multiplier (to bisection precision) meeting target `c` in one
/// SU market. Returns `(mu, response, met)`.
fn solve_market(
    mk: &SuMarket,
    c: f64,
    m: f64,
    lam: f64,
    opts: &SolverOptions,
) -> (f64, MarketResponse, bool) {
    if c == 0.0 {
        return (0.0, mk.response(0.0, lam), true);
    }
    let ceiling = opts.multiplier_ceiling;
    let top = mk.response(ceiling, lam);
    if top.secrecy / m < c || mk.max_gap <= 0.0 {
        return (ceiling, top, false);
    }
    let target_hi = c * (1.0 + 0.25 * opts.epsilon);
    // Below lam / max_gap the SU never has a positive bid.
    let mut lo = (lam / mk.max_gap).min(ceiling);
    let mut hi = ceiling;
    let mut hi_resp = top;
    for _ in 0..200 {
        if hi_resp.secrecy / m <= target_hi || hi / lo - 1.0 < 1e-13 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let r = mk.response(mid, lam);
        if r.secrecy / m >= c {
            hi = mid;
            hi_resp = r;
        } else {
            lo = mid;
        }
    }
    (hi, hi_resp, true)
}

fn bisection_average(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    opts: &SolverOptions,
) -> DualRun {
    let budget = config.power;
    let eps = opts.epsilon;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let eval = |lam: f64, trace: &mut Vec<f64>| {
        let pt = price_point(ens, config, lam, opts);
        push_best(trace, pt.dual);
        pt
    };
    let lowers = |pt: &PricePoint| !pt.failed.is_empty() || pt.power <= budget;

    let floor_pt = eval(opts.lambda_floor, &mut trace);
    iterations += 1;
    if floor_pt.failed.is_empty() && floor_pt.power <= budget {
        return run_from(floor_pt, iterations, true, false, None, trace);
    }

    let mut hi = ens
        .realizations()
        .iter()
        .map(|r| silent_price(r, &vec![0.0; config.k1], &config.weights))
        .fold(opts.lambda_floor, f64::max);
    let mut hi_pt = eval(hi, &mut trace);
    iterations += 1;
    while !lowers(&hi_pt) && hi < 1e15 && iterations < opts.max_iterations {
        hi *= 4.0;
        hi_pt = eval(hi, &mut trace);
        iterations += 1;
    }
    let mut lo_pt = floor_pt;
    while iterations < opts.max_iterations {
        let power_ok = hi_pt.failed.is_empty()
            && hi_pt.power <= budget
            && hi_pt.power >= budget * (1.0 - 0.25 * eps);
        if power_ok || hi_pt.lambda / lo_pt.lambda - 1.0 < 1e-12 {
            break;
        }
        let mid = (lo_pt.lambda * hi_pt.lambda).sqrt();
        let pt = eval(mid, &mut trace);
        iterations += 1;
        if lowers(&pt) {
            hi_pt = pt;
        } else {
            lo_pt = pt;
        }
    }

    if hi_pt.failed.is_empty() {
        let met = secrecy_met(config, &hi_pt.mu, &hi_pt.secrecy, eps)
            && power_met(config, hi_pt.lambda, hi_pt.power, opts);
        run_from(hi_pt, iterations, met, false, None, trace)
    } else if hi_pt.lambda / lo_pt.lambda - 1.0 < 1e-12 {
        // No price both meets the secrecy targets and stays within budget.
        let why = format!(
            "secrecy targets unreachable within power budget: SUs {:?} fall short at price {:.3e} (best secrecy {:?}, power needed {:.4} > {:.4})",
            hi_pt.failed, hi_pt.lambda, hi_pt.secrecy, lo_pt.power, budget
        );
        run_from(hi_pt, iterations, false, true, Some(why), trace)
    } else {
        run_from(
            hi_pt,
            iterations,
            false,
            false,
            Some("price search did not converge".into()),
            trace,
        )
    }
}

fn run_from(
    pt: PricePoint,
    iterations: usize,
    converged: bool,
    infeasible: bool,
    diagnostics: Option<String>,
    trace: Vec<f64>,
) -> DualRun {
    DualRun {
        mu: pt.mu,
        lambda: pt.lambda,
        iterations,
        converged,
        infeasible,
        diagnostics,
        trace,
    }
}

fn mu_scale(config: &ProblemConfig) -> f64 {
    config.weights.iter().sum::<f64>() / config.weights.len() as f64
}

/// Subgradient or ellipsoid search over `(mu, lambda)`.
fn descent_average(ens: &ChannelEnsemble, config: &ProblemConfig, opts: &SolverOptions) -> DualRun {
    let k1 = config.k1;
    let lam0 = initial_lambda(ens, config);
    let ms = mu_scale(config);
    let eval = |mu: &[f64], lam: f64| {
        let t = ensemble_mean(ens, k1, |r| frame_totals(r, config, mu, lam));
        dual_from_totals(&t, config, mu, Some(lam))
    };
    let check = |mu: &[f64], lam: f64, ev: &DualEvaluation| {
        secrecy_met(config, mu, &ev.mean_secrecy, opts.epsilon)
            && power_met(config, lam, ev.mean_power, opts)
    };

    let mut trace = Vec::new();
    let mut mu = vec![0.0; k1];
    let mut lam = lam0;
    match opts.method {
        DualMethod::Ellipsoid => {
            // Scaled coordinates: mu / ms and lambda / lam0.
            let mut radii = vec![100.0; k1];
            radii.push(20.0);
            let mut center = vec![0.0; k1];
            center.push(1.0);
            let mut ell = Ellipsoid::new(center, &radii);
            for it in 1..=opts.max_iterations {
                let x = ell.center().to_vec();
                let floor = opts.lambda_floor / lam0;
                if let Some(i) = (0..=k1).find(|&i| x[i] < if i == k1 { floor } else { 0.0 }) {
                    let mut g = vec![0.0; k1 + 1];
                    g[i] = -1.0;
                    ell.cut(&g);
                    continue;
                }
                mu = x[..k1].iter().map(|v| v * ms).collect();
                lam = x[k1] * lam0;
                let ev = eval(&mu, lam);
                push_best(&mut trace, ev.value);
                if check(&mu, lam, &ev) {
                    return DualRun {
                        mu,
                        lambda: lam,
                        iterations: it,
                        converged: true,
                        infeasible: false,
                        diagnostics: None,
                        trace,
                    };
                }
                let mut g: Vec<f64> = ev.grad_mu.iter().map(|d| d * ms).collect();
                g.push(ev.grad_lambda * lam0);
                if !ell.cut(&g) || ell.width() < 1e-10 {
                    let stuck = failing_users(config, &ev.mean_secrecy, opts.epsilon);
                    let infeasible = !stuck.is_empty();
                    let why = if infeasible {
                        format!("ellipsoid collapsed with SUs {stuck:?} below target")
                    } else {
                        "ellipsoid collapsed before constraints were met".to_string()
                    };
                    return DualRun {
                        mu,
                        lambda: lam,
                        iterations: it,
                        converged: false,
                        infeasible,
                        diagnostics: Some(why),
                        trace,
                    };
                }
            }
        }
        _ => {
            for t in 1..=opts.max_iterations {
                let ev = eval(&mu, lam);
                push_best(&mut trace, ev.value);
                if check(&mu, lam, &ev) {
                    return DualRun {
                        mu,
                        lambda: lam,
                        iterations: t,
                        converged: true,
                        infeasible: false,
                        diagnostics: None,
                        trace,
                    };
                }
                if let Some(k) =
                    (0..k1).find(|&k| mu[k] >= opts.multiplier_ceiling && ev.grad_mu[k] < 0.0)
                {
                    let why = format!(
                        "multiplier of SU {k} exceeded {:.1e} with secrecy {:.4} < {:.4}",
                        opts.multiplier_ceiling, ev.mean_secrecy[k], config.secrecy_targets[k]
                    );
                    return DualRun {
                        mu,
                        lambda: lam,
                        iterations: t,
                        converged: false,
                        infeasible: true,
                        diagnostics: Some(why),
                        trace,
                    };
                }
                let step = opts.step_scale / (t as f64).sqrt();
                for k in 0..k1 {
                    let c = config.secrecy_targets[k].max(1.0);
                    mu[k] = (mu[k] - step * ms * ev.grad_mu[k] / c).max(0.0);
                }
                lam = (lam - step * lam0 * ev.grad_lambda / config.power).max(opts.lambda_floor);
            }
        }
    }
    let ev = eval(&mu, lam);
    let stuck = failing_users(config, &ev.mean_secrecy, opts.epsilon);
    DualRun {
        mu,
        lambda: lam,
        iterations: opts.max_iterations,
        converged: false,
        infeasible: !stuck.is_empty(),
        diagnostics: Some(format!(
            "iteration cap reached; SUs below target: {stuck:?}"
        )),
        trace,
    }
}

/// Solves the peak-power problem: outer search on `mu`, inner per-frame
/// price resolution.
pub fn solve_peak(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    config.validate()?;
    ens.check_against(config)?;
    if config.mode != PowerMode::Peak {
        return invalid("solve_peak needs a peak-power config");
    }
    let k1 = config.k1;
    let eps = opts.epsilon;
    let mut trace = Vec::new();
    let eval = |mu: &[f64], trace: &mut Vec<f64>| {
        let ev = peak_evaluation(ens, config, mu, opts);
        push_best(trace, ev.value);
        ev
    };
    let (mu, iterations, converged, infeasible, diagnostics) = match opts.method {
        DualMethod::Bisection => peak_bracket_search(ens, config, opts, &mut trace, &eval),
        DualMethod::Subgradient => {
            let ms = mu_scale(config);
            let mut mu = vec![0.0; k1];
            let mut out = None;
            for t in 1..=opts.max_iterations {
                let ev = eval(&mu, &mut trace);
                if secrecy_met(config, &mu, &ev.mean_secrecy, eps) {
                    out = Some((mu.clone(), t, true, false, None));
                    break;
                }
                if let Some(k) =
                    (0..k1).find(|&k| mu[k] >= opts.multiplier_ceiling && ev.grad_mu[k] < 0.0)
                {
                    out = Some((
                        mu.clone(),
                        t,
                        false,
                        true,
                        Some(format!("multiplier of SU {k} exceeded ceiling")),
                    ));
                    break;
                }
                let step = opts.step_scale / (t as f64).sqrt();
                for k in 0..k1 {
                    let c = config.secrecy_targets[k].max(1.0);
                    mu[k] = (mu[k] - step * ms * ev.grad_mu[k] / c).max(0.0);
                }
            }
            out.unwrap_or((
                mu,
                opts.max_iterations,
                false,
                false,
                Some("iteration cap reached".into()),
            ))
        }
        DualMethod::Ellipsoid => {
            let ms = mu_scale(config);
            let mut ell = Ellipsoid::new(vec![0.0; k1], &vec![100.0; k1]);
            let mut out = None;
            for it in 1..=opts.max_iterations {
                let x = ell.center().to_vec();
                if let Some(i) = (0..k1).find(|&i| x[i] < 0.0) {
                    let mut g = vec![0.0; k1];
                    g[i] = -1.0;
                    ell.cut(&g);
                    continue;
                }
                let mu: Vec<f64> = x.iter().map(|v| v * ms).collect();
                let ev = eval(&mu, &mut trace);
                if secrecy_met(config, &mu, &ev.mean_secrecy, eps) {
                    out = Some((mu, it, true, false, None));
                    break;
                }
                let g: Vec<f64> = ev.grad_mu.iter().map(|d| d * ms).collect();
                if !ell.cut(&g) || ell.width() < 1e-10 {
                    let stuck = failing_users(config, &ev.mean_secrecy, eps);
                    let inf = !stuck.is_empty();
                    out = Some((
                        mu,
                        it,
                        false,
                        inf,
                        Some(format!("ellipsoid collapsed; SUs below target: {stuck:?}")),
                    ));
                    break;
                }
            }
            out.unwrap_or((
                vec![0.0; k1],
                opts.max_iterations,
                false,
                false,
                Some("iteration cap reached".into()),
            ))
        }
    };

    let owners_at = |mu: &[f64]| -> Vec<(AllocationDecision, f64)> {
        ens.realizations()
            .par_iter()
            .map(|r| {
                let (lam, _) = frame_price(
                    r,
                    mu,
                    &config.weights,
                    config.power,
                    opts.frame_tolerance,
                    opts.lambda_floor,
                );
                (decide(r, config, mu, lam), lam)
            })
            .collect()
    };
    let (mut decisions, mut frame_lambdas): (Vec<_>, Vec<_>) = owners_at(&mu).into_iter().unzip();
    let mut report = evaluate(&decisions, ens, config)?;
    let mut converged = converged;
    if opts.refine_powers && !infeasible {
        // A collapsed bracket sits on an owner switch; the map just below it
        // is also tried.
        let mut starts = vec![decisions.clone()];
        if !converged {
            let below: Vec<f64> = mu.iter().map(|m| m * (1.0 - 1e-6)).collect();
            starts.push(owners_at(&below).into_iter().map(|(d, _)| d).collect());
        }
        let mut best: Option<(Vec<AllocationDecision>, EvaluationReport, Vec<f64>)> = None;
        for start in &starts {
            if let Some((ds, lams)) = refine_peak(ens, config, start, &mu, eps) {
                let rep = evaluate(&ds, ens, config)?;
                if best
                    .as_ref()
                    .map_or(true, |b| rep.r_nu_total > b.1.r_nu_total)
                {
                    best = Some((ds, rep, lams));
                }
            }
        }
        if let Some((ds, rep, lams)) = best {
            let met = failing_users(config, &rep.r_su, eps).is_empty();
            let current_met = failing_users(config, &report.r_su, eps).is_empty();
            if met && (!current_met || rep.r_nu_total >= report.r_nu_total) {
                decisions = ds;
                report = rep;
                converged = true;
                for (l, r) in frame_lambdas.iter_mut().zip(lams) {
                    if r.is_finite() {
                        *l = r;
                    }
                }
            }
        }
    }
    if opts.refine_powers
        && !infeasible
        && ens.len() <= opts.owner_search_frames
        && failing_users(config, &report.r_su, eps).is_empty()
    {
        if let Some((ds, lams)) = polish_owners_peak(ens, config, &decisions, &mu, eps, 8) {
            let rep = evaluate(&ds, ens, config)?;
            if rep.r_nu_total > report.r_nu_total
                && failing_users(config, &rep.r_su, eps).is_empty()
            {
                decisions = ds;
                report = rep;
                converged = true;
                for (l, r) in frame_lambdas.iter_mut().zip(lams) {
                    if r.is_finite() {
                        *l = r;
                    }
                }
            }
        }
    }
    let dual = peak_evaluation(ens, config, &mu, opts);
    // Running out of iterations with a target still missed counts as infeasible.
    let infeasible =
        infeasible || (!converged && !failing_users(config, &report.r_su, eps).is_empty());
    Ok(SolveResult {
        duals: DualState::new(mu, None)?,
        report,
        iterations,
        converged: converged && !infeasible,
        infeasible,
        diagnostics,
        decisions,
        dual_objective: Some(dual.value),
        dual_trace: trace,
        frame_lambdas,
        thresholds: None,
    })
}

type PeakOutcome = (Vec<f64>, usize, bool, bool, Option<String>);

/// Simultaneous per-SU bracketed searches on `mu`. SUs interact only weakly
/// (through the frame prices), so each keeps its own bracket and a bracket
/// that collapses without meeting its target is reopened.
fn peak_bracket_search(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    opts: &SolverOptions,
    trace: &mut Vec<f64>,
    eval: &dyn Fn(&[f64], &mut Vec<f64>) -> DualEvaluation,
) -> PeakOutcome {
    let k1 = config.k1;
    let eps = opts.epsilon;
    let ceiling = opts.multiplier_ceiling;
    let targets = &config.secrecy_targets;

    // Warm start from the average-power multipliers.
    let avg_cfg = config.clone().with_mode(PowerMode::Average);
    let warm = bisection_average(ens, &avg_cfg, opts);
    let mut mu: Vec<f64> = (0..k1)
        .map(|k| {
            if targets[k] == 0.0 {
                0.0
            } else {
                warm.mu[k].clamp(1e-6, ceiling)
            }
        })
        .collect();
    let mut lo = vec![0.0; k1];
    let mut hi: Vec<Option<f64>> = vec![None; k1];
    // Bracket collapsed onto a jump of the rate: keep the side meeting the
    // target unless other SUs push it back under.
    let mut settled = vec![false; k1];

    let cap = opts.max_iterations.min(400);
    for it in 1..=cap {
        let ev = eval(&mu, trace);
        let mut done = true;
        let mut failed = Vec::new();
        for k in 0..k1 {
            let (r, c) = (ev.mean_secrecy[k], targets[k]);
            if c == 0.0 {
                continue;
            }
            if r >= c && (settled[k] || r <= c * (1.0 + 0.25 * eps)) {
                continue;
            }
            if r < c && mu[k] >= ceiling {
                failed.push(k);
                continue;
            }
            done = false;
            if settled[k] {
                settled[k] = false;
                lo[k] /= 2.0;
                hi[k] = Some(mu[k] * 2.0);
            } else if r >= c {
                hi[k] = Some(mu[k]);
            } else {
                lo[k] = mu[k];
            }
            if let Some(h) = hi[k] {
                if lo[k] > 0.0 && h / lo[k] - 1.0 < 1e-10 {
                    if r >= c || h > mu[k] {
                        mu[k] = h;
                        settled[k] = true;
                        continue;
                    }
                    // Stale bracket from other SUs moving: reopen it.
                    lo[k] /= 2.0;
                    hi[k] = Some(h * 2.0);
                }
            }
            mu[k] = match hi[k] {
                None => (mu[k] * 4.0).min(ceiling),
                Some(h) if lo[k] > 0.0 => (lo[k] * h).sqrt(),
                Some(h) => h / 4.0,
            };
        }
        if !failed.is_empty() && done {
            let why = format!("SUs {failed:?} miss their targets with multipliers at the ceiling");
            return (mu, it, false, true, Some(why));
        }
        if done {
            let ok = secrecy_met(config, &mu, &ev.mean_secrecy, eps);
            return (mu, it, ok, false, None);
        }
    }
    (
        mu,
        cap,
        false,
        false,
        Some("multiplier search hit the iteration cap".into()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_ensemble;
    use crate::math::{info_rate, secrecy_rate};

    fn cfg(n: usize, k: usize, k1: usize, c: f64, snr: f64) -> ProblemConfig {
        ProblemConfig::uniform(n, k, k1, c, snr).unwrap()
    }

    #[test]
    fn zero_mu_is_pure_water_filling() {
        let c = cfg(16, 4, 2, 0.0, 10.0);
        let ens = generate_ensemble(&c, 3, 5).unwrap();
        let duals = DualState::new(vec![0.0, 0.0], Some(0.3)).unwrap();
        for r in ens.realizations() {
            let d = allocate_realization_avg(r, &duals, &c).unwrap();
            for sub in 0..c.n {
                let best_nu = (2..4)
                    .max_by(|&a, &b| r.alpha(a, sub).total_cmp(&r.alpha(b, sub)))
                    .unwrap();
                let p = (1.0 / 0.3 - 1.0 / r.alpha(best_nu, sub)).max(0.0);
                if p > 0.0 {
                    assert_eq!(d.owner[sub], Some(best_nu));
                    assert!((d.power_of(best_nu, sub) - p).abs() < 1e-12);
                } else {
                    assert_eq!(d.owner[sub], None);
                }
            }
        }
    }

    #[test]
    fn huge_price_powers_nothing() {
        let c = cfg(16, 4, 2, 0.0, 10.0);
        let ens = generate_ensemble(&c, 3, 5).unwrap();
        let duals = DualState::new(vec![5.0, 5.0], Some(1e6)).unwrap();
        for r in ens.realizations() {
            let d = allocate_realization_avg(r, &duals, &c).unwrap();
            assert_eq!(d.total_power, 0.0);
            assert!(d.owner.iter().all(Option::is_none));
        }
    }

    #[test]
    fn avg_allocation_needs_positive_price() {
        let c = cfg(4, 3, 1, 0.0, 10.0);
        let ens = generate_ensemble(&c, 1, 5).unwrap();
        let d = DualState::new(vec![1.0], None).unwrap();
        assert!(allocate_realization_avg(&ens.realizations()[0], &d, &c).is_err());
        let d = DualState::new(vec![1.0], Some(0.0)).unwrap();
        assert!(allocate_realization_avg(&ens.realizations()[0], &d, &c).is_err());
    }

    #[test]
    fn peak_single_nu_closed_form() {
        let mut c = cfg(1, 2, 1, 0.0, 10.0);
        c.mode = PowerMode::Peak;
        for &(alpha, p) in &[(0.7, 10.0), (3.0, 0.5), (1.0, 100.0)] {
            c.power = p;
            // SU's CNR is below the NU's so the SU never bids.
            let r = ChannelRealization::new(2, 1, vec![0.1, alpha]).unwrap();
            let (d, lam) = allocate_realization_peak(&r, &[0.0], &c).unwrap();
            let expect = 1.0 / (p + 1.0 / alpha);
            assert!((lam - expect).abs() <= 1e-6 * expect, "{lam} vs {expect}");
            assert!((d.total_power - p).abs() <= 1e-6 * p);
            assert!(d.total_power <= p * (1.0 + 1e-6));
        }
    }

    #[test]
    fn peak_power_monotone_in_price() {
        let c = cfg(16, 4, 2, 0.0, 10.0);
        let ens = generate_ensemble(&c, 20, 8).unwrap();
        let mu = [2.0, 7.0];
        for r in ens.realizations() {
            let mut last = f64::INFINITY;
            for i in 0..60 {
                let lam = 1e-3 * 1.25f64.powi(i);
                let p = frame_power(r, &mu, &c.weights, lam);
                assert!(p <= last + 1e-12);
                last = p;
            }
        }
    }

    #[test]
    fn rates_recompute_exactly() {
        let c = cfg(16, 4, 2, 0.0, 10.0);
        let ens = generate_ensemble(&c, 10, 2).unwrap();
        let duals = DualState::new(vec![3.0, 0.5], Some(0.2)).unwrap();
        for r in ens.realizations() {
            let d = allocate_realization_avg(r, &duals, &c).unwrap();
            d.check_exclusive().unwrap();
            let (su, nu) = d.recompute_rates(r, &c);
            for (a, b) in su.iter().zip(&d.su_secrecy) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in nu.iter().zip(&d.nu_rate) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Exhaustive owner search with 1-D golden-section power per subcarrier.
    fn brute_force_objective(
        r: &ChannelRealization,
        c: &ProblemConfig,
        mu: &[f64],
        lam: f64,
    ) -> f64 {
        let mut total = 0.0;
        for sub in 0..c.n {
            let mut best: f64 = 0.0;
            for u in 0..c.k {
                let a = r.alpha(u, sub);
                let f = |p: f64| {
                    if c.is_su(u) {
                        mu[u] * secrecy_rate(p, a, r.beta(u, sub)).unwrap() - lam * p
                    } else {
                        c.weight(u) * info_rate(p, a).unwrap() - lam * p
                    }
                };
                let (_, v) = golden(f, 200.0);
                best = best.max(v);
            }
            total += best;
        }
        total
    }

    fn golden(f: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, hi);
        while b - a > 1e-10 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let x = 0.5 * (a + b);
        if f(x) > f(0.0) {
            (x, f(x))
        } else {
            (0.0, f(0.0))
        }
    }

    #[test]
    fn priced_allocation_matches_exhaustive_search() {
        let c = cfg(2, 2, 1, 0.0, 10.0);
        let ens = generate_ensemble(&c, 30, 77).unwrap();
        for (mu, lam) in [(3.0, 0.5), (10.0, 0.2), (0.5, 1.5)] {
            let duals = DualState::new(vec![mu], Some(lam)).unwrap();
            for r in ens.realizations() {
                let t = frame_totals(r, &c, &[mu], lam);
                let brute = brute_force_objective(r, &c, &[mu], lam);
                assert!(
                    (t.bid_sum - brute).abs() < 1e-5,
                    "{} vs {}",
                    t.bid_sum,
                    brute
                );
                let d = allocate_realization_avg(r, &duals, &c).unwrap();
                let j = d.weighted_nu_rate(&c) + mu * d.su_secrecy[0] - lam * d.total_power;
                assert!((j - brute).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn su_owner_satisfies_threshold() {
        let c = cfg(32, 6, 3, 0.0, 10.0);
        let ens = generate_ensemble(&c, 20, 3).unwrap();
        let mu = vec![2.0, 8.0, 30.0];
        let lam = 0.25;
        let duals = DualState::new(mu.clone(), Some(lam)).unwrap();
        for r in ens.realizations() {
            let d = allocate_realization_avg(r, &duals, &c).unwrap();
            for (sub, o) in d.owner.iter().enumerate() {
                if let Some(u) = *o {
                    if u < c.k1 {
                        let s = r.column_stats(sub);
                        assert_eq!(s.best_user, u);
                        assert!(s.nu1 - s.nu2 > lam / mu[u]);
                    }
                }
            }
        }
    }

    #[test]
    fn bisection_solver_meets_constraints() {
        let c = cfg(16, 4, 2, 0.6, 15.0);
        let ens = generate_ensemble(&c, 200, 21).unwrap();
        let res = solve_average(&ens, &c, &SolverOptions::default()).unwrap();
        assert!(res.converged, "{:?}", res.diagnostics);
        for &r in &res.report.r_su {
            assert!(r >= 0.6 * 0.99);
        }
        assert!((res.report.avg_power - c.power).abs() <= 0.01 * c.power);
        // best-so-far dual trace is non-increasing
        assert!(res.dual_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn subgradient_and_ellipsoid_agree_with_bisection() {
        let c = cfg(8, 3, 1, 0.5, 10.0);
        let ens = generate_ensemble(&c, 100, 4).unwrap();
        let base = solve_average(&ens, &c, &SolverOptions::default()).unwrap();
        assert!(base.converged);
        for method in [DualMethod::Subgradient, DualMethod::Ellipsoid] {
            let opts = SolverOptions::default().with_method(method);
            let res = solve_average(&ens, &c, &opts).unwrap();
            assert!(res.converged, "{method:?}: {:?}", res.diagnostics);
            assert!(res.report.r_su[0] >= 0.5 * 0.99);
            let rel =
                (res.report.r_nu_total - base.report.r_nu_total).abs() / base.report.r_nu_total;
            assert!(
                rel < 0.03,
                "{method:?}: {} vs {}",
                res.report.r_nu_total,
                base.report.r_nu_total
            );
        }
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        // The infinite-power ceiling for N=8, K=3 is far below 5 nats.
        let c = cfg(8, 3, 1, 5.0, 20.0);
        let ens = generate_ensemble(&c, 100, 4).unwrap();
        let res = solve_average(&ens, &c, &SolverOptions::default()).unwrap();
        assert!(res.infeasible && !res.converged);
        assert!(res.diagnostics.is_some());
    }

    #[test]
    fn peak_solver_respects_frame_budget() {
        let c = cfg(16, 4, 2, 0.5, 15.0).with_mode(PowerMode::Peak);
        let ens = generate_ensemble(&c, 60, 13).unwrap();
        let res = solve_peak(&ens, &c, &SolverOptions::default()).unwrap();
        assert!(res.converged, "{:?}", res.diagnostics);
        for d in &res.decisions {
            assert!(d.total_power <= c.power * (1.0 + 1e-6));
            d.check_exclusive().unwrap();
        }
        for &r in &res.report.r_su {
            assert!(r >= 0.5 * 0.99);
        }
        assert_eq!(res.frame_lambdas.len(), 60);
    }

    #[test]
    fn wrong_mode_rejected() {
        let c = cfg(8, 3, 1, 0.5, 10.0);
        let ens = generate_ensemble(&c, 5, 4).unwrap();
        assert!(solve_peak(&ens, &c, &SolverOptions::default()).is_err());
        let p = c.clone().with_mode(PowerMode::Peak);
        assert!(solve_average(&ens, &p, &SolverOptions::default()).is_err());
        let empty = ChannelEnsemble::from_realizations(vec![], 0, 1.0).unwrap();
        assert!(solve_average(&empty, &c, &SolverOptions::default()).is_err());
    }
}
