//! Double-exponential (tanh-sinh) quadrature for integrands with
//! integrable endpoint singularities, used by the Gaussian moment oracles.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const T_MAX: f64 = 6.5;
const MAX_LEVEL: usize = 12;

/// `int_a^b f`, where `f(x, x - a, b - x)` receives both endpoint distances
/// computed without cancellation.
pub fn tanh_sinh_dist<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64, f64, f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return Err(Error::Quadrature(format!("reversed interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let ch = u.cosh();
        let w = FRAC_PI_2 * t.cosh() / (ch * ch);
        // distance from the nearer endpoint, 1 - tanh|u| = e^{-|u|} / cosh u
        let d = half * (-u.abs()).exp() / ch;
        if d <= 0.0 {
            return 0.0;
        }
        let (x, da, db) = if t >= 0.0 { (b - d, b - a - d, d) } else { (a + d, d, b - a - d) };
        let v = f(x, da, db);
        if v.is_finite() {
            v * w
        } else {
            0.0
        }
    };
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut prev = sum * h * half;
    for _ in 0..MAX_LEVEL {
        h *= 0.5;
        // only the new odd nodes
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            sum += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        let cur = sum * h * half;
        if (cur - prev).abs() <= rel_tol * cur.abs().max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("tanh-sinh on [{a}, {b}] did not reach {rel_tol:e}")))
}

/// `int_a^b f` for integrands whose singularities, if any, sit at `a` or `b`.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    tanh_sinh_dist(|x, _, _| f(x), a, b, rel_tol)
}

/// `int_a^inf f` via `u = a / v`, for `a > 0` and algebraically decaying `f`.
pub fn tail_integral<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> Result<f64> {
    tanh_sinh_dist(|_, v, _| if v > 0.0 { f(a / v) * a / (v * v) } else { 0.0 }, 0.0, 1.0, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_and_singular() {
        let v = tanh_sinh(|x| x.exp(), 0.0, 1.0, 1e-13).unwrap();
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-12);
        // int_0^1 x^{-0.8} dx = 5
        let v = tanh_sinh_dist(|_, da, _| da.powf(-0.8), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 5.0).abs() < 1e-9, "{v}");
        // singularity at the right end
        let v = tanh_sinh_dist(|_, _, db| db.powf(-0.6), 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 2f64.powf(0.4) / 0.4).abs() < 1e-9, "{v}");
    }

    #[test]
    fn tail() {
        // int_2^inf u^{-3} du = 1/8
        let v = tail_integral(|u| u.powi(-3), 2.0, 1e-12).unwrap();
        assert!((v - 0.125).abs() < 1e-12);
    }
}
