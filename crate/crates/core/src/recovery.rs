//! Power refinement with subcarrier owners held fixed. With owners frozen
//! the power problem is convex and each SU's rate is continuous in its
//! multiplier, so targets are met exactly instead of overshot.

use rayon::prelude::*;

use crate::allocation::AllocationDecision;
use crate::channel::ChannelEnsemble;
use crate::config::ProblemConfig;
use crate::math::{nu_power_raw, secrecy_rate_raw, su_power_raw};

/// A powered subcarrier: `b` is the eavesdropper CNR for an SU, the weight
/// for an NU.
#[derive(Debug, Clone, Copy)]
struct Link {
    sub: usize,
    user: usize,
    a: f64,
    b: f64,
}

fn frame_links(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    decisions: &[AllocationDecision],
) -> Vec<Vec<Link>> {
    ens.realizations()
        .iter()
        .zip(decisions)
        .map(|(real, d)| {
            d.owner
                .iter()
                .enumerate()
                .filter_map(|(sub, o)| {
                    o.map(|user| Link {
                        sub,
                        user,
                        a: real.alpha(user, sub),
                        b: if config.is_su(user) {
                            real.beta(user, sub)
                        } else {
                            config.weight(user)
                        },
                    })
                })
                .collect()
        })
        .collect()
}

#[inline]
fn link_power(l: &Link, k1: usize, mu: &[f64], lam: f64) -> f64 {
    if l.user < k1 {
        su_power_raw(l.a, l.b, mu[l.user], lam)
    } else {
        nu_power_raw(l.a, l.b, lam)
    }
}

fn build(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    links: &[Vec<Link>],
    power: impl Fn(usize, &Link) -> f64,
) -> Vec<AllocationDecision> {
    ens.realizations()
        .iter()
        .zip(links)
        .enumerate()
        .map(|(f, (real, ls))| {
            let mut d = AllocationDecision::idle(config);
            for l in ls {
                d.set(real, config, l.sub, l.user, power(f, l));
            }
            d
        })
        .collect()
}

/// Root of a function increasing in `t = ln x` on `[lo, hi]`, where
/// `f(lo) < 0 <= f(hi)`; returns the `hi` side. Illinois regula falsi.
fn increasing_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let (mut flo, mut fhi) = (f(lo), f(hi));
    let mut side = 0i8;
    for _ in 0..200 {
        if fhi <= tol || hi - lo < 1e-14 {
            break;
        }
        let mut t = (lo * fhi - hi * flo) / (fhi - flo);
        if !(t > lo && t < hi) || hi - lo > 8.0 {
            t = 0.5 * (lo + hi);
        }
        let v = f(t);
        if v < 0.0 {
            lo = t;
            flo = v;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fhi = v;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    hi
}

/// Average-power refinement. SU power depends on the multipliers only
/// through `mu_k / lambda`, so each SU's ratio is solved on its own, then the
/// NUs water-fill what is left. `None` if the frozen owners cannot meet the
/// targets within the budget.
pub(crate) fn refine_average(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    decisions: &[AllocationDecision],
) -> Option<Vec<AllocationDecision>> {
    let m = ens.len() as f64;
    let k1 = config.k1;
    let links = frame_links(ens, config, decisions);
    let mut su: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k1];
    let mut nu: Vec<(f64, f64)> = Vec::new();
    for l in links.iter().flatten() {
        if l.user < k1 {
            su[l.user].push((l.a, l.b));
        } else {
            nu.push((l.a, l.b));
        }
    }
    let mut ratio = vec![0.0; k1];
    let mut su_power = 0.0;
    for k in 0..k1 {
        let c = config.secrecy_targets[k];
        if c == 0.0 {
            continue;
        }
        let rate = |r: f64| {
            su[k]
                .iter()
                .map(|&(a, b)| secrecy_rate_raw(su_power_raw(a, b, r, 1.0), a, b))
                .sum::<f64>()
                / m
        };
        let ceiling: f64 = su[k].iter().map(|&(a, b)| (a / b).ln()).sum::<f64>() / m;
        if ceiling <= c {
            return None;
        }
        let gap = su[k].iter().map(|&(a, b)| a - b).fold(0.0, f64::max);
        let lo = (1.0 / gap).ln();
        let mut hi = lo + 1.0;
        while rate(hi.exp()) < c {
            hi += 1.0;
            if hi > lo + 200.0 {
                return None;
            }
        }
        let r = increasing_root(|t| rate(t.exp()) - c, lo, hi, 1e-12 * c).exp();
        ratio[k] = r;
        su_power += su[k]
            .iter()
            .map(|&(a, b)| su_power_raw(a, b, r, 1.0))
            .sum::<f64>()
            / m;
    }
    let residual = config.power - su_power;
    if residual < 0.0 {
        return None;
    }
    let nu_spend = |lam: f64| {
        nu.iter()
            .map(|&(a, w)| nu_power_raw(a, w, lam))
            .sum::<f64>()
            / m
    };
    let lam = if nu.is_empty() || residual == 0.0 {
        f64::INFINITY
    } else {
        // nu_spend decreases in lambda; root of residual - spend in ln lambda.
        let top = nu.iter().map(|&(a, w)| a * w).fold(0.0, f64::max);
        let hi = top.ln();
        let mut lo = hi - 1.0;
        while nu_spend(lo.exp()) < residual {
            lo -= 1.0;
        }
        let t = increasing_root(|t| residual - nu_spend(t.exp()), lo, hi, 1e-12 * residual);
        t.exp()
    };
    Some(build(ens, config, &links, |_, l| {
        if l.user < k1 {
            su_power_raw(l.a, l.b, ratio[l.user], 1.0)
        } else if lam.is_finite() {
            nu_power_raw(l.a, l.b, lam)
        } else {
            0.0
        }
    }))
}

/// Frame price with `mu` fixed: the budget is spent exactly unless nothing
/// in the frame wants power.
fn frame_lambda(links: &[Link], k1: usize, mu: &[f64], budget: f64) -> f64 {
    let top = links
        .iter()
        .map(|l| {
            if l.user < k1 {
                mu[l.user] * (l.a - l.b)
            } else {
                l.a * l.b
            }
        })
        .fold(0.0, f64::max);
    if top <= 0.0 {
        return f64::INFINITY;
    }
    let spend = |lam: f64| {
        links
            .iter()
            .map(|l| link_power(l, k1, mu, lam))
            .sum::<f64>()
    };
    let hi = top.ln();
    let mut lo = hi - 1.0;
    while spend(lo.exp()) < budget {
        lo -= 1.0;
    }
    increasing_root(|t| budget - spend(t.exp()), lo, hi, 1e-12 * budget).exp()
}

/// Peak-power refinement: per-frame prices spend the budget, each SU
/// multiplier is matched to its target in turn until all targets hold.
pub(crate) fn refine_peak(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    decisions: &[AllocationDecision],
    mu0: &[f64],
    eps: f64,
) -> Option<(Vec<AllocationDecision>, Vec<f64>)> {
    let m = ens.len() as f64;
    let k1 = config.k1;
    let budget = config.power;
    let links = frame_links(ens, config, decisions);
    let mut mu: Vec<f64> = mu0.to_vec();
    for k in 0..k1 {
        if config.secrecy_targets[k] == 0.0 {
            mu[k] = 0.0;
        }
    }
    // Frames in which each SU owns something.
    let frames_of: Vec<Vec<usize>> = (0..k1)
        .map(|k| {
            (0..links.len())
                .filter(|&f| links[f].iter().any(|l| l.user == k))
                .collect()
        })
        .collect();
    let rate_of = |k: usize, mu: &[f64]| -> f64 {
        frames_of[k]
            .par_iter()
            .map(|&f| {
                let lam = frame_lambda(&links[f], k1, mu, budget);
                links[f]
                    .iter()
                    .filter(|l| l.user == k)
                    .map(|l| secrecy_rate_raw(su_power_raw(l.a, l.b, mu[k], lam), l.a, l.b))
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum::<f64>()
            / m
    };
    for _sweep in 0..20 {
        let mut worst = 0.0f64;
        for k in 0..k1 {
            let c = config.secrecy_targets[k];
            if c == 0.0 {
                continue;
            }
            let r = rate_of(k, &mu);
            worst = worst.max((r - c).abs() / c);
            if (r - c).abs() <= 1e-6 * c && r >= c {
                continue;
            }
            let mut probe = mu.clone();
            let f = |t: f64, probe: &mut Vec<f64>| {
                probe[k] = t.exp();
                rate_of(k, probe) - c
            };
            let start = mu[k].max(1e-12).ln();
            let (mut lo, mut hi) = (start, start);
            if r < c {
                while f(hi, &mut probe) < 0.0 {
                    hi += 1.0;
                    if hi > start + 60.0 {
                        return None;
                    }
                }
            } else {
                while f(lo, &mut probe) >= 0.0 {
                    lo -= 1.0;
                    if lo < start - 60.0 {
                        return None;
                    }
                }
            }
            let t = increasing_root(|t| f(t, &mut probe.clone()), lo, hi, 1e-9 * c);
            mu[k] = t.exp();
        }
        if worst <= 1e-4 * eps {
            break;
        }
    }
    for k in 0..k1 {
        let c = config.secrecy_targets[k];
        if c > 0.0 && rate_of(k, &mu) < c * (1.0 - eps) {
            return None;
        }
    }
    let lams: Vec<f64> = links
        .par_iter()
        .map(|ls| frame_lambda(ls, k1, &mu, budget))
        .collect();
    let ds = build(ens, config, &links, |f, l| {
        if lams[f].is_finite() {
            link_power(l, k1, &mu, lams[f])
        } else {
            0.0
        }
    });
    Some((ds, lams))
}

/// Owner moves for small ensembles: each subcarrier is handed to every other
/// user or left dark, and each pair of subcarriers in a frame swaps owners.
/// Powers are re-solved by [`refine_peak`] and a move is kept when the NU
/// objective rises. Stops after a sweep without improvement or `passes`
/// sweeps.
pub(crate) fn polish_owners_peak(
    ens: &ChannelEnsemble,
    config: &ProblemConfig,
    decisions: &[AllocationDecision],
    mu: &[f64],
    eps: f64,
    passes: usize,
) -> Option<(Vec<AllocationDecision>, Vec<f64>)> {
    let value = |ds: &[AllocationDecision]| {
        crate::report::evaluate(ds, ens, config)
            .ok()
            .map(|r| r.r_nu_total)
    };
    let mut best = refine_peak(ens, config, decisions, mu, eps)?;
    let mut best_value = value(&best.0)?;
    let choices: Vec<Option<usize>> = std::iter::once(None)
        .chain((0..config.k).map(Some))
        .collect();
    let n = config.n;
    for _ in 0..passes {
        let mut improved = false;
        for f in 0..best.0.len() {
            let mut moves: Vec<Vec<(usize, Option<usize>)>> = Vec::new();
            for s in 0..n {
                for &o in &choices {
                    if best.0[f].owner[s] != o {
                        moves.push(vec![(s, o)]);
                    }
                }
                for t in s + 1..n {
                    let (a, b) = (best.0[f].owner[s], best.0[f].owner[t]);
                    if a != b {
                        moves.push(vec![(s, b), (t, a)]);
                    }
                }
            }
            for mv in moves {
                let mut trial = best.0.clone();
                for &(s, o) in &mv {
                    trial[f].owner[s] = o;
                }
                let Some(cand) = refine_peak(ens, config, &trial, mu, eps) else {
                    continue;
                };
                let Some(v) = value(&cand.0) else {
                    continue;
                };
                if v > best_value * (1.0 + 1e-12) {
                    best = cand;
                    best_value = v;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Some(best)
}
