//! Drift catalog, Euler schemes for the additive-noise SDE and for the
//! conditional evolution around a path, the off-diagonal contraction
//! checker and the slow-fast system.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::grid::SampledPath;
use crate::noise::check_hurst;
use crate::rng::{normal, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    /// `b(y) = -L y`, `L` row-major `n x n`.
    Linear { matrix: Vec<f64> },
    /// `b(y) = -y + a tanh(y)` componentwise.
    TanhWell { a: f64 },
    /// `b(y) = -scale sign(y)` componentwise, `sign(0) = 0`.
    Sign { scale: f64 },
    /// `b(lambda, y) = -lambda_i y_i`; `lambda` has one entry or `n`.
    ParametricLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub dim: usize,
}

impl DriftSpec {
    pub fn zero(dim: usize) -> Self {
        Self { kind: DriftKind::Zero, dim }
    }

    /// `b(y) = -rate * y`.
    pub fn linear_scalar(rate: f64, dim: usize) -> Self {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = rate;
        }
        Self { kind: DriftKind::Linear { matrix: m }, dim }
    }

    pub fn linear(matrix: Vec<f64>, dim: usize) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(param("drift.matrix", format!("expected {} entries", dim * dim)));
        }
        Ok(Self { kind: DriftKind::Linear { matrix }, dim })
    }

    pub fn tanh_well(a: f64, dim: usize) -> Self {
        Self { kind: DriftKind::TanhWell { a }, dim }
    }

    pub fn sign(scale: f64, dim: usize) -> Self {
        Self { kind: DriftKind::Sign { scale }, dim }
    }

    pub fn parametric_linear(dim: usize) -> Self {
        Self { kind: DriftKind::ParametricLinear, dim }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DriftKind::Zero => "zero",
            DriftKind::Linear { .. } => "linear",
            DriftKind::TanhWell { .. } => "tanh_well",
            DriftKind::Sign { .. } => "sign",
            DriftKind::ParametricLinear => "parametric_linear",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Zero)
    }

    /// Fix the parameter, if the drift has one.
    pub fn bind(&self, lambda: Option<&[f64]>) -> Result<BoundDrift> {
        let n = self.dim;
        Ok(match &self.kind {
            DriftKind::Zero => BoundDrift::Zero,
            DriftKind::Linear { matrix } => BoundDrift::Linear(matrix.clone(), n),
            DriftKind::TanhWell { a } => BoundDrift::TanhWell(*a),
            DriftKind::Sign { scale } => BoundDrift::Sign(*scale),
            DriftKind::ParametricLinear => {
                let l = lambda.ok_or_else(|| param("lambda", "parametric drift needs a parameter"))?;
                let rates = match l.len() {
                    1 => vec![l[0]; n],
                    m if m == n => l.to_vec(),
                    m => return Err(param("lambda", format!("expected 1 or {n} rates, got {m}"))),
                };
                BoundDrift::Diagonal(rates)
            }
        })
    }

    /// `C` with `|b(y)| <= C (1 + |y|)` for every `y`.
    pub fn linear_growth_constant(&self, lambda: Option<&[f64]>) -> Result<f64> {
        let n = self.dim as f64;
        Ok(match self.bind(lambda)? {
            BoundDrift::Zero => 0.0,
            BoundDrift::Linear(m, d) => DMatrix::from_row_slice(d, d, &m).singular_values().max(),
            BoundDrift::TanhWell(a) => 1f64.max(a.abs() * n.sqrt()),
            BoundDrift::Sign(s) => s.abs() * n.sqrt(),
            BoundDrift::Diagonal(r) => r.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
    }
}

/// A drift with its parameter fixed; evaluation cannot fail.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundDrift {
    Zero,
    Linear(Vec<f64>, usize),
    TanhWell(f64),
    Sign(f64),
    Diagonal(Vec<f64>),
}

impl BoundDrift {
    #[inline]
    pub fn eval(&self, y: &[f64], out: &mut [f64]) {
        match self {
            BoundDrift::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            BoundDrift::Linear(m, n) => {
                for i in 0..*n {
                    let mut acc = 0.0;
                    for j in 0..*n {
                        acc += m[i * n + j] * y[j];
                    }
                    out[i] = -acc;
                }
            }
            BoundDrift::TanhWell(a) => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = -v + a * v.tanh();
                }
            }
            BoundDrift::Sign(s) => {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = if *v > 0.0 {
                        -s
                    } else if *v < 0.0 {
                        *s
                    } else {
                        0.0
                    };
                }
            }
            BoundDrift::Diagonal(r) => {
                for ((o, v), l) in out.iter_mut().zip(y).zip(r) {
                    *o = -l * v;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BoundDrift::Zero)
    }
}

pub fn drift_eval(d: &DriftSpec, lambda: Option<&[f64]>, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != d.dim {
        return Err(param("y", format!("expected dimension {}", d.dim)));
    }
    let mut out = vec![0.0; d.dim];
    d.bind(lambda)?.eval(y, &mut out);
    Ok(out)
}

/// Drift, non-degenerate diffusion matrix and Hurst parameter.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub drift: DriftSpec,
    pub sigma: DMatrix<f64>,
    pub hurst: f64,
    pub dim: usize,
    sigma_inv: DMatrix<f64>,
    sigma_det: f64,
}

impl ModelSpec {
    pub fn new(drift: DriftSpec, sigma: DMatrix<f64>, hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        let dim = drift.dim;
        if dim == 0 {
            return Err(Error::Empty);
        }
        if sigma.nrows() != dim || sigma.ncols() != dim {
            return Err(param("sigma", format!("must be {dim} x {dim}")));
        }
        let sigma_inv = sigma.clone().try_inverse().ok_or(Error::SingularSigma)?;
        let sigma_det = sigma.determinant();
        if sigma_det == 0.0 || !sigma_det.is_finite() {
            return Err(Error::SingularSigma);
        }
        Ok(Self { drift, sigma, hurst, dim, sigma_inv, sigma_det })
    }

    /// One-dimensional model with scalar `sigma`.
    pub fn scalar(drift: DriftSpec, sigma: f64, hurst: f64) -> Result<Self> {
        Self::new(drift, DMatrix::from_element(1, 1, sigma), hurst)
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    pub fn sigma_det(&self) -> f64 {
        self.sigma_det
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.sigma.singular_values();
        sv.max() / sv.min()
    }
}

#[inline]
pub(crate) fn mat_vec_add(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = m.nrows();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..m.ncols() {
            acc += m[(i, j)] * x[j];
        }
        out[i] += acc;
    }
}

fn guard(v: &[f64], step: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

/// Explicit Euler for `dY = b(Y) dt + sigma dB` with a given driving path.
pub fn euler_solve(m: &ModelSpec, lambda: Option<&[f64]>, driving: &SampledPath, y0: &[f64]) -> Result<SampledPath> {
    let b = m.drift.bind(lambda)?;
    euler_core(&b, &m.sigma, None, driving, y0)
}

fn euler_core(
    b: &BoundDrift,
    sigma: &DMatrix<f64>,
    ell: Option<&SampledPath>,
    driving: &SampledPath,
    y0: &[f64],
) -> Result<SampledPath> {
    let n = y0.len();
    if driving.dim() != n {
        return Err(Error::GridMismatch("driving path dimension differs from the model".into()));
    }
    let grid = *driving.grid();
    let dt = grid.dt();
    let mut out = vec![0.0; grid.n_nodes() * n];
    out[..n].copy_from_slice(y0);
    let mut bv = vec![0.0; n];
    let mut inc = vec![0.0; n];
    let mut step = vec![0.0; n];
    for k in 0..grid.n_steps() {
        let (cur, next) = out.split_at_mut((k + 1) * n);
        let y = &cur[k * n..];
        b.eval(y, &mut bv);
        for i in 0..n {
            step[i] = y[i] + bv[i] * dt;
        }
        if let Some(l) = ell {
            for i in 0..n {
                step[i] += l.at(k + 1)[i] - l.at(k)[i];
            }
        }
        for i in 0..n {
            inc[i] = driving.at(k + 1)[i] - driving.at(k)[i];
        }
        mat_vec_add(sigma, &inc, &mut step);
        next[..n].copy_from_slice(&step);
        guard(&step, k + 1)?;
    }
    SampledPath::new(grid, n, out)
}

/// Euler scheme for `Phi_t = ell(t) + int_0^t b(Phi_s) ds + sigma B~_t`.
pub fn conditional_evolution(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    ell: &SampledPath,
    liouville: &SampledPath,
) -> Result<SampledPath> {
    ell.check_same_shape(liouville)?;
    let b = m.drift.bind(lambda)?;
    euler_core(&b, &m.sigma, Some(ell), liouville, ell.at(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub c_est: f64,
    pub kappa_est: f64,
    /// Pairs violating a claimed `(C, kappa)`, when one was given.
    pub violations: Option<usize>,
    pub sample_count: usize,
    pub radius: f64,
    /// `kappa_est > 0`, i.e. the sample is consistent with the condition.
    pub contracting: bool,
}

fn uniform_in_ball(rng: &mut StreamRng, dim: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    v.iter_mut().for_each(|x| *x *= r / norm);
    v
}

/// Fit `<b(y) - b(z), y - z> <= C - kappa |y - z|^2` on random pairs in a
/// ball. `kappa` comes from the far pairs (`|y - z|^2` at least half the
/// largest sampled), where the constant `C` matters least; `C` is then the
/// smallest constant making every sampled pair satisfy the bound.
pub fn check_off_diagonal_contraction(
    d: &DriftSpec,
    lambda: Option<&[f64]>,
    sample_count: usize,
    radius: f64,
    claimed: Option<(f64, f64)>,
    rng: &mut StreamRng,
) -> Result<ContractionReport> {
    if sample_count == 0 {
        return Err(param("sample_count", "must be at least 1"));
    }
    let b = d.bind(lambda)?;
    let n = d.dim;
    let mut qs = Vec::with_capacity(sample_count);
    let (mut by, mut bz) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..sample_count {
        let y = uniform_in_ball(rng, n, radius);
        let z = uniform_in_ball(rng, n, radius);
        b.eval(&y, &mut by);
        b.eval(&z, &mut bz);
        let mut q = 0.0;
        let mut r = 0.0;
        for i in 0..n {
            q += (by[i] - bz[i]) * (y[i] - z[i]);
            r += (y[i] - z[i]).powi(2);
        }
        qs.push((q, r));
    }
    let r_max = qs.iter().fold(0.0f64, |m, p| m.max(p.1));
    let kappa = qs
        .iter()
        .filter(|(_, r)| *r >= 0.5 * r_max && *r > 0.0)
        .map(|(q, r)| -q / r)
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let kappa = if kappa.is_finite() { kappa } else { 0.0 };
    let c = qs.iter().map(|(q, r)| q + kappa * r).fold(0.0f64, f64::max);
    let violations = claimed.map(|(cc, kk)| qs.iter().filter(|(q, r)| *q > cc - kk * r + 1e-12 * (1.0 + r)).count());
    Ok(ContractionReport { c_est: c, kappa_est: kappa, violations, sample_count, radius, contracting: kappa > 0.0 })
}

/// Slow drift `f(x, y) = ax x + ay y + ayy y^2 + c` and slow diffusion
/// `g(x) = g0 + gx x`, with scalar slow and fast variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlowSpec {
    pub ax: f64,
    pub ay: f64,
    pub ayy: f64,
    pub c: f64,
    pub g0: f64,
    pub gx: f64,
}

impl SlowSpec {
    #[inline]
    pub fn f(&self, x: f64, y: f64) -> f64 {
        self.ax * x + self.ay * y + self.ayy * y * y + self.c
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        self.g0 + self.gx * x
    }
}

/// Joint Euler / left-point Young scheme for the slow-fast system
/// `dX = f(X, Y) dt + g(X) dB`, `dY = b(Y)/eps dt + sigma dB^/eps^H^`,
/// with both noises given on the same slow-time grid.
pub fn slow_fast_solve(
    slow: &SlowSpec,
    fast: &ModelSpec,
    lambda: Option<&[f64]>,
    eps: f64,
    slow_noise: &SampledPath,
    fast_noise: &SampledPath,
    x0: f64,
    y0: f64,
) -> Result<(SampledPath, SampledPath)> {
    if !(eps > 0.0) {
        return Err(param("eps", "must be positive"));
    }
    if fast.dim != 1 || slow_noise.dim() != 1 || fast_noise.dim() != 1 {
        return Err(param("dim", "the slow-fast solver is scalar"));
    }
    if !slow_noise.grid().compatible(fast_noise.grid()) {
        return Err(Error::GridMismatch("slow and fast noises on different grids".into()));
    }
    let b = fast.drift.bind(lambda)?;
    let grid = *slow_noise.grid();
    let dt = grid.dt();
    let sig = fast.sigma[(0, 0)];
    let noise_scale = eps.powf(-fast.hurst);
    let n = grid.n_steps();
    let (mut xs, mut ys) = (vec![x0; n + 1], vec![y0; n + 1]);
    let mut bv = [0.0];
    for k in 0..n {
        let (x, y) = (xs[k], ys[k]);
        let db = slow_noise.at(k + 1)[0] - slow_noise.at(k)[0];
        let dbh = fast_noise.at(k + 1)[0] - fast_noise.at(k)[0];
        xs[k + 1] = x + slow.f(x, y) * dt + slow.g(x) * db;
        b.eval(&[y], &mut bv);
        ys[k + 1] = y + bv[0] / eps * dt + sig * noise_scale * dbh;
        if !xs[k + 1].is_finite() || !ys[k + 1].is_finite() {
            return Err(Error::NonFinite { step: k + 1 });
        }
    }
    Ok((SampledPath::new(grid, 1, xs)?, SampledPath::new(grid, 1, ys)?))
}

/// Euler / left-point scheme for the averaged equation
/// `dX = fbar(X) dt + gbar(X) dB`, with coefficients tabulated on `x_grid`
/// and interpolated linearly (extrapolated linearly outside).
pub fn averaged_solve(
    x_grid: &[f64],
    fbar: &[f64],
    gbar: &[f64],
    slow_noise: &SampledPath,
    x0: f64,
) -> Result<SampledPath> {
    if x_grid.len() < 2 || fbar.len() != x_grid.len() || gbar.len() != x_grid.len() {
        return Err(param("x_grid", "need at least two tabulated points"));
    }
    let grid = *slow_noise.grid();
    let dt = grid.dt();
    let mut xs = vec![x0; grid.n_nodes()];
    for k in 0..grid.n_steps() {
        let x = xs[k];
        let db = slow_noise.at(k + 1)[0] - slow_noise.at(k)[0];
        xs[k + 1] = x + interp(x_grid, fbar, x) * dt + interp(x_grid, gbar, x) * db;
    }
    SampledPath::new(grid, 1, xs)
}

/// Piecewise-linear interpolation on a sorted abscissa.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = match xs.partition_point(|v| *v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    };
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Validate a slow-fast configuration against the solver's preconditions.
pub fn check_slow_noise_hurst(h: f64) -> Result<()> {
    check_hurst(h)?;
    if h <= 0.5 {
        return Err(param("slow_hurst", "the slow noise needs H > 1/2 (Young regime)"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::rng::stream_rng;

    #[test]
    fn catalog_values() {
        assert_eq!(drift_eval(&DriftSpec::zero(2), None, &[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(drift_eval(&DriftSpec::linear_scalar(1.0, 2), None, &[2.0, 0.0]).unwrap(), vec![-2.0, 0.0]);
        assert_eq!(drift_eval(&DriftSpec::tanh_well(2.0, 1), None, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(drift_eval(&DriftSpec::sign(1.5, 3), None, &[2.0, 0.0, -1.0]).unwrap(), vec![-1.5, 0.0, 1.5]);
        assert!(drift_eval(&DriftSpec::parametric_linear(1), None, &[1.0]).is_err());
        assert_eq!(drift_eval(&DriftSpec::parametric_linear(2), Some(&[2.0]), &[1.0, -1.0]).unwrap(), vec![-2.0, 2.0]);
    }

    #[test]
    fn contraction_fits() {
        let mut rng = stream_rng(1, 0);
        let lin = check_off_diagonal_contraction(&DriftSpec::linear_scalar(1.0, 2), None, 2000, 5.0, Some((0.0, 1.0)), &mut rng).unwrap();
        assert!(lin.kappa_est >= 1.0 - 1e-9 && lin.c_est < 1e-9, "{lin:?}");
        assert_eq!(lin.violations, Some(0));
        let zero = check_off_diagonal_contraction(&DriftSpec::zero(1), None, 100, 5.0, None, &mut rng).unwrap();
        assert_eq!(zero.kappa_est, 0.0);
        assert!(!zero.contracting);
        let tw = check_off_diagonal_contraction(&DriftSpec::tanh_well(2.0, 1), None, 5000, 200.0, None, &mut rng).unwrap();
        assert!(tw.c_est > 0.0 && (tw.kappa_est - 1.0).abs() < 0.1, "{tw:?}");
    }

    #[test]
    fn linear_growth() {
        for d in [DriftSpec::zero(2), DriftSpec::linear_scalar(2.0, 2), DriftSpec::tanh_well(3.0, 2), DriftSpec::sign(1.0, 2)] {
            let c = d.linear_growth_constant(None).unwrap();
            let mut rng = stream_rng(3, 0);
            for _ in 0..500 {
                let y = uniform_in_ball(&mut rng, 2, 20.0);
                let b = drift_eval(&d, None, &y).unwrap();
                let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(nb <= c * (1.0 + ny) + 1e-12);
            }
        }
    }

    #[test]
    fn euler_zero_drift_and_linear() {
        let g = Grid::uniform(1.0, 10).unwrap();
        let drv = SampledPath::from_fn(g, |t| (5.0 * t).sin());
        let m = ModelSpec::scalar(DriftSpec::zero(1), 1.0, 0.3).unwrap();
        let y = euler_solve(&m, None, &drv, &[0.5]).unwrap();
        for k in 0..=10 {
            assert!((y.at(k)[0] - (0.5 + drv.at(k)[0])).abs() < 1e-14);
        }
        let m = ModelSpec::scalar(DriftSpec::linear_scalar(2.0, 1), 1.0, 0.3).unwrap();
        let y = euler_solve(&m, None, &SampledPath::zeros(g, 1), &[1.0]).unwrap();
        for k in 0..=10 {
            assert!((y.at(k)[0] - 0.8f64.powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn conditional_evolution_matches_euler() {
        let g = Grid::uniform(1.0, 50).unwrap();
        let lv = SampledPath::from_fn(g, |t| (7.0 * t).cos() - 1.0);
        let m = ModelSpec::scalar(DriftSpec::tanh_well(2.0, 1), 0.7, 0.3).unwrap();
        let ell = SampledPath::constant(g, &[0.4]);
        let a = conditional_evolution(&m, None, &ell, &lv).unwrap();
        let b = euler_solve(&m, None, &lv, &[0.4]).unwrap();
        assert_eq!(a, b);
        let z = ModelSpec::scalar(DriftSpec::zero(1), 0.7, 0.3).unwrap();
        let ell = SampledPath::from_fn(g, |t| t * t);
        let phi = conditional_evolution(&z, None, &ell, &lv).unwrap();
        for k in 0..=50 {
            assert!((phi.at(k)[0] - (ell.at(k)[0] + 0.7 * lv.at(k)[0])).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_sigma_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(ModelSpec::new(DriftSpec::zero(2), s, 0.5).is_err());
        assert!(ModelSpec::scalar(DriftSpec::zero(1), 1.0, 1.2).is_err());
    }

    #[test]
    fn slow_fast_trivial_cases() {
        let g = Grid::uniform(1.0, 20).unwrap();
        let b = SampledPath::from_fn(g, |t| t.sqrt());
        let bh = SampledPath::from_fn(g, |t| -t);
        let fast = ModelSpec::scalar(DriftSpec::linear_scalar(1.0, 1), 1.0, 0.5).unwrap();
        let slow = SlowSpec { ax: 0.0, ay: 0.0, ayy: 0.0, c: 0.0, g0: 1.0, gx: 0.0 };
        let (x, _) = slow_fast_solve(&slow, &fast, None, 0.1, &b, &bh, 0.3, 0.0).unwrap();
        for k in 0..=20 {
            assert!((x.at(k)[0] - (0.3 + b.at(k)[0])).abs() < 1e-14);
        }
        assert!(slow_fast_solve(&slow, &fast, None, 0.0, &b, &bh, 0.3, 0.0).is_err());
        assert!(check_slow_noise_hurst(0.5).is_err());
    }

    #[test]
    fn interpolation() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 2.0, 6.0];
        assert_eq!(interp(&xs, &ys, 0.5), 1.0);
        assert_eq!(interp(&xs, &ys, 1.5), 4.0);
        assert_eq!(interp(&xs, &ys, 3.0), 10.0);
        assert_eq!(interp(&xs, &ys, -1.0), -2.0);
    }
}
