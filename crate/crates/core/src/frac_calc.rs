//! Discrete Riemann-Liouville fractional integrals and derivatives on
//! uniform grids anchored at `t = 0`.
//!
//! Both operators use product integration: the input is replaced by its
//! piecewise-linear interpolant and the kernel `(t - s)^(alpha - 1) / Gamma(alpha)`
//! is integrated against it in closed form on every subinterval. The
//! derivative `I^{-alpha} f = d/dt I^{1-alpha} f` is the exact derivative of
//! that closed form (the "L1" weights), so no finite difference of a computed
//! quantity is taken. Both schemes are causal: node `k` only reads nodes
//! `0..=k`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{Grid, SampledFunction};

/// Order of a fractional operator, `alpha` in `(-1, 1)`; negative orders are
/// derivatives, zero is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > -1.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Order(alpha))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `m^p - (m-1)^p` for `m >= 1`, without cancellation for large `m`.
pub(crate) fn pow_first_diff(m: usize, p: f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if m == 1 {
        return 1.0;
    }
    let mf = m as f64;
    -mf.powf(p) * (p * (-1.0 / mf).ln_1p()).exp_m1()
}

/// Dot product with four independent accumulators, which lets the
/// compiler vectorize it.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, ra) = a.split_at(a.len() & !3);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `(m+1)^p - 2 m^p + (m-1)^p` for `m >= 1`, without cancellation.
fn pow_second_diff(m: usize, p: f64) -> f64 {
    let mf = m as f64;
    let x = 1.0 / mf;
    mf.powf(p) * ((p * x.ln_1p()).exp_m1() + (p * (-x).ln_1p()).exp_m1())
}

/// Precomputed weights for repeatedly applying one operator on grids with
/// the same step and node count.
#[derive(Debug, Clone)]
pub struct FracPlan {
    n_steps: usize,
    kind: PlanKind,
}

#[derive(Debug, Clone)]
enum PlanKind {
    Identity,
    /// Toeplitz weights are stored reversed, `rev[i] = w[n - i]`, so every
    /// node is one contiguous dot product.
    Integral { scale: f64, start: Vec<f64>, rev: Vec<f64> },
    Derivative { scale: f64, rev: Vec<f64> },
}

impl FracPlan {
    pub fn new(grid: &Grid, order: FracOrder) -> Self {
        let alpha = order.value();
        let n = grid.n_steps();
        let dt = grid.dt();
        let kind = if alpha == 0.0 {
            PlanKind::Identity
        } else if alpha > 0.0 {
            let p = alpha + 1.0;
            let scale = dt.powf(alpha) / gamma(alpha + 2.0);
            let mut start = vec![0.0; n + 1];
            for (k, w) in start.iter_mut().enumerate().skip(1) {
                let kf = k as f64;
                // (k-1)^p - (k - alpha - 1) k^alpha, rearranged as
                // [k^p - (k-1)^p] ... kept in the direct form for small k.
                *w = if k < 64 {
                    (kf - 1.0).powf(p) - (kf - alpha - 1.0) * kf.powf(alpha)
                } else {
                    // (k-1)^p - k^p + (alpha+1) k^alpha
                    -pow_first_diff(k, p) + p * kf.powf(alpha)
                };
            }
            let mut toeplitz = vec![0.0; n + 1];
            toeplitz[0] = 1.0;
            for (m, w) in toeplitz.iter_mut().enumerate().skip(1) {
                *w = pow_second_diff(m, p);
            }
            toeplitz.reverse();
            PlanKind::Integral { scale, start, rev: toeplitz }
        } else {
            let beta = -alpha;
            let q = 1.0 - beta;
            let scale = dt.powf(-beta) / gamma(2.0 - beta);
            let mut toeplitz = vec![0.0; n + 1];
            for (m, w) in toeplitz.iter_mut().enumerate().skip(1) {
                *w = pow_first_diff(m, q);
            }
            toeplitz.reverse();
            PlanKind::Derivative { scale, rev: toeplitz }
        };
        Self { n_steps: n, kind }
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Apply to one scalar series of length `n_steps + 1`.
    pub fn apply_scalar(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.n_steps + 1);
        debug_assert_eq!(out.len(), self.n_steps + 1);
        match &self.kind {
            PlanKind::Identity => out.copy_from_slice(f),
            PlanKind::Integral { scale, start, rev } => {
                let n = self.n_steps;
                out[0] = 0.0;
                for k in 1..=n {
                    out[k] = scale * (start[k] * f[0] + dot(&rev[n - k + 1..=n], &f[1..=k]));
                }
            }
            PlanKind::Derivative { scale, rev } => {
                let n = self.n_steps;
                let df: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
                out[0] = 0.0;
                for k in 1..=n {
                    out[k] = scale * dot(&rev[n - k..n], &df[..k]);
                }
            }
        }
    }

    /// Apply componentwise to a node-major `dim`-vector series.
    pub fn apply_strided(&self, f: &[f64], dim: usize, out: &mut [f64]) {
        let nn = self.n_steps + 1;
        if dim == 1 {
            self.apply_scalar(f, out);
            return;
        }
        let mut col = vec![0.0; nn];
        let mut res = vec![0.0; nn];
        for i in 0..dim {
            for k in 0..nn {
                col[k] = f[k * dim + i];
            }
            self.apply_scalar(&col, &mut res);
            for k in 0..nn {
                out[k * dim + i] = res[k];
            }
        }
    }
}

fn check_anchor(f: &SampledFunction) -> Result<()> {
    if f.values().is_empty() {
        return Err(Error::Empty);
    }
    if !f.grid().starts_at_zero() {
        return Err(Error::Grid(format!(
            "fractional operators are anchored at t = 0, grid starts at {}",
            f.grid().t0()
        )));
    }
    Ok(())
}

/// Riemann-Liouville integral of order `alpha` in `(0, 1)`.
pub fn rl_integral(f: &SampledFunction, alpha: f64) -> Result<SampledFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Order(alpha));
    }
    check_anchor(f)?;
    let plan = FracPlan::new(f.grid(), FracOrder::new(alpha)?);
    let mut out = vec![0.0; f.values().len()];
    plan.apply_strided(f.values(), f.dim(), &mut out);
    SampledFunction::new(*f.grid(), f.dim(), out)
}

/// Tolerance on `|f(0)|` accepted by [`rl_derivative`].
pub fn vanishing_start_tolerance(f: &SampledFunction) -> f64 {
    1e-9 * (1.0 + f.sup_norm())
}

/// Riemann-Liouville derivative of order `alpha` in `(0, 1)`; requires
/// `f(0) = 0` (the offset is reported, never subtracted). The node-0 value
/// is the scheme's limit from the first subinterval, which is `0`.
pub fn rl_derivative(f: &SampledFunction, alpha: f64) -> Result<SampledFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Order(alpha));
    }
    check_anchor(f)?;
    let tol = vanishing_start_tolerance(f);
    if let Some(v) = f.at(0).iter().copied().find(|v| v.abs() > tol) {
        return Err(Error::NonVanishingStart { value: v.abs(), tol });
    }
    let plan = FracPlan::new(f.grid(), FracOrder::new(-alpha)?);
    let mut out = vec![0.0; f.values().len()];
    plan.apply_strided(f.values(), f.dim(), &mut out);
    SampledFunction::new(*f.grid(), f.dim(), out)
}

/// Dispatch on the sign of the order; the identity at zero.
pub fn frac_op(f: &SampledFunction, order: FracOrder) -> Result<SampledFunction> {
    let a = order.value();
    if a > 0.0 {
        rl_integral(f, a)
    } else if a < 0.0 {
        rl_derivative(f, -a)
    } else {
        check_anchor(f)?;
        Ok(f.clone())
    }
}

/// Exact RL derivative of order `alpha` of the constant 1: `t^-alpha / Gamma(1 - alpha)`.
pub fn derivative_of_unit_constant(alpha: f64, t: f64) -> f64 {
    t.powf(-alpha) / gamma(1.0 - alpha)
}

/// Average of `t^-alpha / Gamma(1 - alpha)` over `[a, b]`.
pub fn derivative_of_unit_constant_avg(alpha: f64, a: f64, b: f64) -> f64 {
    (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / ((b - a) * gamma(2.0 - alpha))
}

/// Average of `(t^-alpha / Gamma(1 - alpha))^2` over `[a, b]`, `alpha < 1/2`.
pub fn derivative_of_unit_constant_sq_avg(alpha: f64, a: f64, b: f64) -> f64 {
    let e = 1.0 - 2.0 * alpha;
    let g = gamma(1.0 - alpha);
    (b.powf(e) - a.powf(e)) / (e * (b - a) * g * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid {
        Grid::uniform(1.0, n).unwrap()
    }

    #[test]
    fn order_range() {
        assert!(FracOrder::new(1.0).is_err());
        assert!(FracOrder::new(-1.0).is_err());
        assert!(FracOrder::new(f64::NAN).is_err());
        assert!(FracOrder::new(0.99).is_ok());
    }

    #[test]
    fn zero_function_maps_to_zero() {
        let f = SampledFunction::zeros(grid(50), 1);
        assert!(rl_integral(&f, 0.5).unwrap().values().iter().all(|v| *v == 0.0));
        assert!(rl_derivative(&f, 0.5).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn integral_of_constant_and_ramp_is_exact() {
        // piecewise-linear inputs are integrated exactly by the scheme
        let one = SampledFunction::from_fn(grid(40), |_| 1.0);
        let r = rl_integral(&one, 0.5).unwrap();
        assert!((r.last()[0] - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-9);
        let ramp = SampledFunction::from_fn(grid(40), |t| t);
        let r = rl_integral(&ramp, 0.5).unwrap();
        assert!((r.last()[0] - 0.752_252_778_1).abs() < 1e-9);
    }

    #[test]
    fn derivative_of_ramp_is_exact() {
        let ramp = SampledFunction::from_fn(grid(40), |t| t);
        let d = rl_derivative(&ramp, 0.5).unwrap();
        assert!((d.last()[0] - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-9);
        assert_eq!(d.at(0)[0], 0.0);
    }

    #[test]
    fn derivative_rejects_offset() {
        let f = SampledFunction::from_fn(grid(10), |t| 1.0 + t);
        assert!(matches!(rl_derivative(&f, 0.3), Err(Error::NonVanishingStart { .. })));
    }

    #[test]
    fn errors_on_bad_inputs() {
        let f = SampledFunction::from_fn(grid(10), |t| t);
        assert!(rl_integral(&f, 0.0).is_err());
        assert!(rl_integral(&f, 1.0).is_err());
        assert!(rl_derivative(&f, -0.2).is_err());
        let shifted = SampledFunction::from_fn(Grid::new(1.0, 0.1, 10).unwrap(), |t| t);
        assert!(rl_integral(&shifted, 0.4).is_err());
    }

    #[test]
    fn dispatch() {
        let f = SampledFunction::from_fn(grid(20), |t| t * t);
        assert_eq!(frac_op(&f, FracOrder::new(0.0).unwrap()).unwrap(), f);
        assert_eq!(frac_op(&f, FracOrder::new(0.3).unwrap()).unwrap(), rl_integral(&f, 0.3).unwrap());
        assert_eq!(frac_op(&f, FracOrder::new(-0.3).unwrap()).unwrap(), rl_derivative(&f, 0.3).unwrap());
    }

    #[test]
    fn inverts_half_order_power() {
        // D^{1/2} [t^{1/2} / Gamma(3/2)] = 1 away from the origin
        let f = SampledFunction::from_fn(grid(2000), |t| t.sqrt() / gamma(1.5));
        let d = rl_derivative(&f, 0.5).unwrap();
        for k in 200..=2000 {
            assert!((d.at(k)[0] - 1.0).abs() < 1e-2, "k={k} {}", d.at(k)[0]);
        }
    }

    #[test]
    fn causality_is_bitwise() {
        let g = grid(64);
        let f = SampledFunction::from_fn(g, |t| (3.0 * t).sin());
        let mut h = f.clone();
        h.at_mut(40)[0] += 1.0;
        for alpha in [0.3, -0.3] {
            let a = frac_op(&f, FracOrder::new(alpha).unwrap()).unwrap();
            let b = frac_op(&h, FracOrder::new(alpha).unwrap()).unwrap();
            for k in 0..40 {
                assert_eq!(a.at(k)[0].to_bits(), b.at(k)[0].to_bits());
            }
            assert_ne!(a.at(40)[0], b.at(40)[0]);
        }
    }

    #[test]
    fn stable_differences_match_naive() {
        for &p in &[0.3, 1.2, 1.7] {
            for m in 1..50usize {
                let naive = (m as f64).powf(p) - (m as f64 - 1.0).powf(p);
                assert!((pow_first_diff(m, p) - naive).abs() < 1e-11 * naive.abs().max(1.0));
                let naive2 = (m as f64 + 1.0).powf(p) - 2.0 * (m as f64).powf(p) + (m as f64 - 1.0).powf(p);
                assert!((pow_second_diff(m, p) - naive2).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, alpha in -0.9f64..0.9,
                     c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
            let g = grid(32);
            let f = SampledFunction::from_fn(g, |t| c1 * t + (2.0 * t).sin());
            let h = SampledFunction::from_fn(g, |t| c2 * t * t);
            let order = FracOrder::new(alpha).unwrap();
            let lhs = frac_op(&f.lin_comb(a, &h, b).unwrap(), order).unwrap();
            let rhs = frac_op(&f, order).unwrap().lin_comb(a, &frac_op(&h, order).unwrap(), b).unwrap();
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
