//! Adaptive Gauss-Kronrod (7, 15) quadrature and the exponential integral.

use crate::error::{invalid, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and error (|Kronrod - Gauss|) on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_depth: u32,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-10,
            max_depth: 40,
        }
    }
}

/// Integral of `f` over `[a, b]` by recursive bisection; the result of each
/// panel is accepted when its error estimate is below the panel's share of
/// the tolerance. Panels are summed left to right.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return invalid("integration bounds must be finite with a <= b");
    }
    let (whole, _) = gk15(&f, a, b);
    let target = tol.abs.max(tol.rel * whole.abs());
    Ok(adapt(&f, a, b, target, tol.max_depth))
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || b - a <= 1e-15 * (1.0 + a.abs()) {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Integral over consecutive intervals between `points`.
pub fn integrate_pieces(f: impl Fn(f64) -> f64, points: &[f64], tol: Tolerance) -> Result<f64> {
    let mut total = 0.0;
    for w in points.windows(2) {
        total += integrate(&f, w[0], w[1], tol)?;
    }
    Ok(total)
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = int_x^inf e^-t / t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x < 1.0 {
        // -gamma - ln x + sum (-1)^(k+1) x^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let t = -term / k as f64;
            sum += t;
            if t.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return -EULER_GAMMA - x.ln() + sum;
    }
    // Continued fraction, modified Lentz.
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..300 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// `e^x E1(x)`, finite for large `x`.
pub fn scaled_e1(x: f64) -> f64 {
    if x < 1.0 {
        return x.exp() * exp_integral_e1(x);
    }
    exp_integral_e1(x) * x.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, Tolerance::default()).unwrap();
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn log_singularity() {
        // int_0^1 ln x dx = -1
        let v = integrate(
            |x| if x > 0.0 { x.ln() } else { 0.0 },
            0.0,
            1.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v + 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn e1_reference_values() {
        // Abramowitz & Stegun table 5.1
        for &(x, e) in &[
            (0.1, 1.822_923_958_419_390_7),
            (0.5, 0.559_773_594_776_160_8),
            (1.0, 0.219_383_934_395_520_3),
            (2.0, 0.048_900_510_708_061_1),
            (5.0, 0.001_148_295_591_275_3),
        ] {
            assert!((exp_integral_e1(x) - e).abs() < 1e-13 * e.max(1.0), "{x}");
        }
    }

    #[test]
    fn e1_matches_direct_integral() {
        for &x in &[0.01, 0.3, 0.99, 1.01, 3.0, 20.0] {
            let direct = integrate(|t| (-t).exp() / t, x, x + 60.0, Tolerance::default()).unwrap();
            assert!(
                (exp_integral_e1(x) - direct).abs() < 1e-10 * direct.max(1e-30) + 1e-25,
                "{x}"
            );
        }
        assert!(scaled_e1(700.0).is_finite());
        assert!((scaled_e1(700.0) - 1.0 / 701.0).abs() < 1e-6);
    }
}
