//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

/// Maximizer and maximum of a unimodal `f` on `[0, hi]` by golden-section
/// search, with the endpoint `0` also considered.
pub fn golden_max(f: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a < 1e-13 * (1.0 + b) {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let (fx, f0) = (f(x), f(0.0));
    if f0 >= fx {
        (0.0, f0)
    } else {
        (x, fx)
    }
}

/// Maximizer on `[0, hi]` of a concave function with derivative `df`,
/// by bisection on the sign of `df`.
pub fn stationary_point(df: impl Fn(f64) -> f64, hi: f64) -> f64 {
    if df(0.0) <= 0.0 {
        return 0.0;
    }
    if df(hi) >= 0.0 {
        return hi;
    }
    let (mut lo, mut up) = (0.0, hi);
    for _ in 0..200 {
        let m = 0.5 * (lo + up);
        if df(m) > 0.0 {
            lo = m;
        } else {
            up = m;
        }
    }
    0.5 * (lo + up)
}

/// Root of an increasing `f` on `[lo, hi]` by plain bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let m = 0.5 * (lo + hi);
        if f(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Water-filling `p_i = (L w_i - 1/a_i)^+` with `sum p = budget`; returns
/// the weighted rate `sum w_i ln(1 + p_i a_i)`.
pub fn water_fill(alphas: &[f64], weights: &[f64], budget: f64) -> f64 {
    if alphas.is_empty() || budget <= 0.0 {
        return 0.0;
    }
    let spent = |l: f64| -> f64 {
        alphas
            .iter()
            .zip(weights)
            .map(|(a, w)| (l * w - 1.0 / a).max(0.0))
            .sum::<f64>()
    };
    let mut hi = 1.0;
    while spent(hi) < budget {
        hi *= 2.0;
    }
    let l = bisect(|l| spent(l) - budget, 0.0, hi);
    alphas
        .iter()
        .zip(weights)
        .map(|(a, w)| w * ((l * w - 1.0 / a).max(0.0) * a).ln_1p())
        .sum()
}

pub fn secrecy(p: f64, a: f64, b: f64) -> f64 {
    ((1.0 + p * a).ln() - (1.0 + p * b).ln()).max(0.0)
}

/// Least total power reaching total secrecy `target` on links `(a, b)`,
/// each link's power from a 1-D search of `secrecy - t p` and the price `t`
/// by bisection. `None` if the target exceeds the power-`cap` ceiling.
pub fn min_secrecy_power(links: &[(f64, f64)], target: f64, cap: f64) -> Option<f64> {
    if target <= 0.0 {
        return Some(0.0);
    }
    let at = |t: f64| -> (f64, f64) {
        links.iter().fold((0.0, 0.0), |(r, p), &(a, b)| {
            if a <= b {
                return (r, p);
            }
            let (x, _) = golden_max(|q| secrecy(q, a, b) - t * q, cap);
            (r + secrecy(x, a, b), p + x)
        })
    };
    let ceiling: f64 = links.iter().map(|&(a, b)| secrecy(cap, a, b)).sum();
    if ceiling < target {
        return None;
    }
    // rate is decreasing in t
    let mut hi = 1.0;
    while at(hi).0 > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if at(m).0 >= target {
            lo = m;
        } else {
            hi = m;
        }
    }
    let (r, p) = at(lo);
    if r + 1e-9 < target {
        return None;
    }
    Some(p)
}
