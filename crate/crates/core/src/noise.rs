//! Gaussian noise: two-sided Wiener paths, the Mandelbrot-van Ness fBm and
//! its history/innovation split, an exact-covariance fBm sampler, and
//! closed-form or quadrature moments of fractional Ornstein-Uhlenbeck
//! processes.
//!
//! Kernels are discretized by exact cell averages: the Wiener increment over
//! cell `j` multiplies the mean of `(t - u)^(H - 1/2)` over that cell, so the
//! `u -> t` singularity for `H < 1/2` never gets evaluated pointwise.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::function::gamma::gamma;

use crate::error::{param, Error, Result};
use crate::frac_calc::pow_first_diff;
use crate::grid::{steps_for, Grid, SampledPath};
use crate::quad::{tail_integral, tanh_sinh, tanh_sinh_dist};
use crate::rng::{fill_normal, normal, stream_rng};

const QUAD_TOL: f64 = 1e-12;

pub fn check_hurst(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Hurst(h))
    }
}

/// Mandelbrot-van Ness normalization, exactly 1 at `H = 1/2`.
pub fn alpha_h(h: f64) -> Result<f64> {
    check_hurst(h)?;
    if h == 0.5 {
        return Ok(1.0);
    }
    Ok((2.0 * h * gamma(1.5 - h) / (gamma(h + 0.5) * gamma(2.0 - 2.0 * h))).sqrt())
}

/// The single constant family used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstConstants {
    pub hurst: f64,
    pub alpha_h: f64,
    /// Coefficient of the Liouville kernel `(t - u)^(H - 1/2)`.
    pub kernel_coeff: f64,
    /// `Var(B~_T) / T^(2H)`.
    pub endpoint_var_coeff: f64,
}

impl HurstConstants {
    pub fn new(h: f64) -> Result<Self> {
        let a = alpha_h(h)?;
        Ok(Self { hurst: h, alpha_h: a, kernel_coeff: a, endpoint_var_coeff: a * a / (2.0 * h) })
    }

    /// Per-component variance of the Liouville process at time `t`.
    pub fn liouville_variance(&self, t: f64) -> f64 {
        self.endpoint_var_coeff * t.powf(2.0 * self.hurst)
    }

    /// `alpha_H * Gamma(H + 1/2)`, so that `B~ = kappa * I^(H - 1/2) W`.
    pub fn kappa(&self) -> f64 {
        if self.hurst == 0.5 {
            1.0
        } else {
            self.alpha_h * gamma(self.hurst + 0.5)
        }
    }
}

/// Mean of `s^(H - 1/2)` over `[(m - 1) dt, m dt]`, `m >= 1`.
pub fn kernel_average(h: f64, dt: f64, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if h == 0.5 {
        return 1.0;
    }
    let p = h + 0.5;
    dt.powf(h - 0.5) * pow_first_diff(m, p) / p
}

/// `alpha_H` times the kernel averages for `m = 0..=len` (entry 0 is 0).
pub fn liouville_weights(h: f64, dt: f64, len: usize) -> Result<Vec<f64>> {
    let a = alpha_h(h)?;
    let mut w = vec![0.0; len + 1];
    for (m, v) in w.iter_mut().enumerate().skip(1) {
        *v = a * kernel_average(h, dt, m);
    }
    Ok(w)
}

type KernelKey = (u64, u64);

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static KERNEL: RefCell<Option<(KernelKey, Arc<Vec<f64>>)>> = const { RefCell::new(None) };
}

/// [`liouville_weights`] with a per-thread cache of the longest table built
/// for the current `(H, dt)`; long pasts make the table itself costly.
fn cached_weights(h: f64, dt: f64, len: usize) -> Result<Arc<Vec<f64>>> {
    let key = (h.to_bits(), dt.to_bits());
    if let Some(w) = KERNEL.with(|c| {
        c.borrow().as_ref().and_then(|(k, w)| (*k == key && w.len() > len).then(|| w.clone()))
    }) {
        return Ok(w);
    }
    let w = Arc::new(liouville_weights(h, dt, len)?);
    KERNEL.with(|c| *c.borrow_mut() = Some((key, w.clone())));
    Ok(w)
}

/// `out[j - lo] = sum_{g < min(j, x.len())} kern[j - g] * x[g]` for `j` in
/// `lo..=hi`, with `kern[0]` ignored. Direct sums for small problems, FFT
/// otherwise.
pub fn causal_conv(kern: &[f64], x: &[f64], lo: usize, hi: usize) -> Vec<f64> {
    assert!(kern.len() > hi, "kernel too short");
    assert!(lo <= hi);
    let n_out = hi - lo + 1;
    let direct_cost = (n_out as f64) * (x.len().min(hi) as f64);
    let size = (x.len() + hi + 1).next_power_of_two();
    let fft_cost = 15.0 * size as f64 * (size as f64).log2();
    if direct_cost <= fft_cost || x.is_empty() {
        conv_direct(kern, x, lo, hi)
    } else {
        conv_fft(kern, x, lo, hi, size)
    }
}

fn conv_direct(kern: &[f64], x: &[f64], lo: usize, hi: usize) -> Vec<f64> {
    (lo..=hi)
        .map(|j| {
            let top = j.min(x.len());
            let mut acc = 0.0;
            for g in 0..top {
                acc += kern[j - g] * x[g];
            }
            acc
        })
        .collect()
}

fn conv_fft(kern: &[f64], x: &[f64], lo: usize, hi: usize, size: usize) -> Vec<f64> {
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    let mut kb = vec![Complex::new(0.0, 0.0); size];
    for m in 1..=hi {
        kb[m].re = kern[m];
    }
    let mut xb = vec![Complex::new(0.0, 0.0); size];
    for (g, v) in x.iter().enumerate() {
        xb[g].re = *v;
    }
    fwd.process(&mut kb);
    fwd.process(&mut xb);
    for (a, b) in xb.iter_mut().zip(&kb) {
        *a *= *b;
    }
    inv.process(&mut xb);
    let s = 1.0 / size as f64;
    (lo..=hi).map(|j| xb[j].re * s).collect()
}

/// Wiener increments on `[-T_past, T_hor]`, cell-major with `dim`
/// components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSidedWienerPath {
    dt: f64,
    dim: usize,
    n_past: usize,
    n_future: usize,
    increments: Vec<f64>,
    seed: u64,
    stream: u64,
}

impl TwoSidedWienerPath {
    /// Wrap given increments (e.g. deterministic ones in tests).
    pub fn from_increments(
        dt: f64,
        dim: usize,
        n_past: usize,
        n_future: usize,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if !(dt > 0.0) || dim == 0 || n_future == 0 {
            return Err(Error::Grid("need dt > 0, dim >= 1 and a non-empty future".into()));
        }
        if increments.len() != (n_past + n_future) * dim {
            return Err(Error::GridMismatch("increment count does not match the grids".into()));
        }
        Ok(Self { dt, dim, n_past, n_future, increments, seed: 0, stream: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_past(&self) -> usize {
        self.n_past
    }
    pub fn n_future(&self) -> usize {
        self.n_future
    }
    pub fn t_past(&self) -> f64 {
        self.n_past as f64 * self.dt
    }
    pub fn seed(&self) -> (u64, u64) {
        (self.seed, self.stream)
    }

    /// Grid over `[-T_past, 0]`, if there is a past.
    pub fn past_grid(&self) -> Option<Grid> {
        (self.n_past > 0).then(|| Grid::new(-self.t_past(), self.dt, self.n_past).unwrap())
    }

    pub fn future_grid(&self) -> Grid {
        Grid::new(0.0, self.dt, self.n_future).unwrap()
    }

    /// All increments, oldest first.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn past_increments(&self) -> &[f64] {
        &self.increments[..self.n_past * self.dim]
    }

    pub fn future_increments(&self) -> &[f64] {
        &self.increments[self.n_past * self.dim..]
    }

    /// `W` on `[0, T_hor]` as running sums of the future increments.
    pub fn future_path(&self) -> SampledPath {
        let d = self.dim;
        let inc = self.future_increments();
        let mut v = vec![0.0; (self.n_future + 1) * d];
        for k in 0..self.n_future {
            for i in 0..d {
                v[(k + 1) * d + i] = v[k * d + i] + inc[k * d + i];
            }
        }
        SampledPath::new(self.future_grid(), d, v).unwrap()
    }

    fn component(&self, i: usize, upto: usize) -> Vec<f64> {
        self.increments[..upto * self.dim].iter().skip(i).step_by(self.dim).copied().collect()
    }
}

/// Draw a two-sided Wiener path; a pure function of `(seed, stream)`.
pub fn sample_two_sided_wiener(
    t_past: f64,
    t_hor: f64,
    dt: f64,
    dim: usize,
    seed: u64,
    stream: u64,
) -> Result<TwoSidedWienerPath> {
    if t_past < 0.0 {
        return Err(param("t_past", "must be non-negative"));
    }
    if !(t_hor > 0.0) {
        return Err(param("t_hor", "must be positive"));
    }
    let n_past = steps_for(t_past, dt)?;
    let n_future = steps_for(t_hor, dt)?;
    let mut inc = vec![0.0; (n_past + n_future) * dim];
    fill_normal(&mut stream_rng(seed, stream), dt, &mut inc);
    let mut w = TwoSidedWienerPath::from_increments(dt, dim, n_past, n_future, inc)?;
    w.seed = seed;
    w.stream = stream;
    Ok(w)
}

fn path_increments(w: &SampledPath) -> Vec<f64> {
    let d = w.dim();
    let v = w.values();
    (0..w.grid().n_steps() * d).map(|idx| v[idx + d] - v[idx]).collect()
}

/// Liouville process `B~_t = alpha_H int_0^t (t-u)^(H-1/2) dW_u` from a
/// Wiener path on `[0, T]`.
pub fn liouville_from_wiener(w: &SampledPath, h: f64) -> Result<SampledPath> {
    check_hurst(h)?;
    if !w.grid().starts_at_zero() {
        return Err(Error::Grid("Wiener path must start at t = 0".into()));
    }
    let inc = path_increments(w);
    liouville_from_increments(&inc, w.dim(), *w.grid(), h)
}

/// As [`liouville_from_wiener`], from node-major increments.
pub fn liouville_from_increments(inc: &[f64], dim: usize, grid: Grid, h: f64) -> Result<SampledPath> {
    let n = grid.n_steps();
    if inc.len() != n * dim {
        return Err(Error::GridMismatch("increment count does not match grid".into()));
    }
    let mut out = vec![0.0; (n + 1) * dim];
    if h == 0.5 {
        for k in 0..n {
            for i in 0..dim {
                out[(k + 1) * dim + i] = out[k * dim + i] + inc[k * dim + i];
            }
        }
        return SampledPath::new(grid, dim, out);
    }
    let kern = liouville_weights(h, grid.dt(), n)?;
    for i in 0..dim {
        let x: Vec<f64> = inc.iter().skip(i).step_by(dim).copied().collect();
        let c = causal_conv(&kern, &x, 0, n);
        for (k, v) in c.into_iter().enumerate() {
            out[k * dim + i] = v;
        }
    }
    SampledPath::new(grid, dim, out)
}

fn base_index(w: &TwoSidedWienerPath, t_base: f64) -> Result<usize> {
    let r = (t_base + w.t_past()) / w.dt;
    let m = r.round();
    if m < 0.0 || m > (w.n_past + w.n_future) as f64 || (r - m).abs() > 1e-8 * r.abs().max(1.0) {
        return Err(param("t_base", format!("{t_base} is not a node inside the Wiener path")));
    }
    Ok(m as usize)
}


/// History `B^t_h` for `h` on `h_grid`, driven by the increments before
/// `t_base`; the infinite past is cut at `-T_past`.
pub fn history_process(w: &TwoSidedWienerPath, h: f64, t_base: f64, h_grid: &Grid) -> Result<SampledPath> {
    check_hurst(h)?;
    if !h_grid.starts_at_zero() || (h_grid.dt() - w.dt).abs() > 1e-12 * w.dt {
        return Err(Error::GridMismatch("history grid must start at 0 with the Wiener step".into()));
    }
    let m = base_index(w, t_base)?;
    history_at(w, h, m, *h_grid)
}

fn history_at(w: &TwoSidedWienerPath, h: f64, m: usize, grid: Grid) -> Result<SampledPath> {
    let d = w.dim;
    let n_h = grid.n_steps();
    let mut out = vec![0.0; (n_h + 1) * d];
    if h != 0.5 && m > 0 {
        let kern = cached_weights(h, w.dt, m + n_h)?;
        for i in 0..d {
            let c = causal_conv(&kern, &w.component(i, m), m, m + n_h);
            for k in 1..=n_h {
                out[k * d + i] = c[k] - c[0];
            }
        }
    }
    SampledPath::new(grid, d, out)
}

/// The operator `P^H`: history at `t = 0` of a Wiener past.
pub fn p_h_operator(w_past: &TwoSidedWienerPath, h: f64, grid: &Grid) -> Result<SampledPath> {
    history_process(w_past, h, 0.0, grid)
}

/// fBm sample path on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub path: SampledPath,
    pub hurst: f64,
}

/// Mandelbrot-van Ness fBm on the future grid of `w`.
pub fn fbm_mandelbrot(w: &TwoSidedWienerPath, h: f64) -> Result<FbmPath> {
    let (b, _) = fbm_with_history(w, h, w.n_future, 0)?;
    Ok(b)
}

/// fBm on `[0, n_fbm dt]` together with the history `B^t` at
/// `t = n_fbm dt` on `n_hist` further steps, sharing one convolution.
pub fn fbm_with_history(
    w: &TwoSidedWienerPath,
    h: f64,
    n_fbm: usize,
    n_hist: usize,
) -> Result<(FbmPath, SampledPath)> {
    check_hurst(h)?;
    if n_fbm == 0 || n_fbm > w.n_future {
        return Err(param("n_fbm", format!("must lie in 1..={}", w.n_future)));
    }
    let d = w.dim;
    let p = w.n_past;
    let m = p + n_fbm;
    let fgrid = Grid::new(0.0, w.dt, n_fbm)?;
    let hgrid = Grid::new(0.0, w.dt, n_hist.max(1))?;
    let mut b = vec![0.0; (n_fbm + 1) * d];
    let mut hist = vec![0.0; (n_hist.max(1) + 1) * d];
    if h == 0.5 {
        let inc = w.future_increments();
        for k in 0..n_fbm {
            for i in 0..d {
                b[(k + 1) * d + i] = b[k * d + i] + inc[k * d + i];
            }
        }
    } else {
        let kern = cached_weights(h, w.dt, m + n_hist)?;
        for i in 0..d {
            let c = causal_conv(&kern, &w.component(i, m), p, m + n_hist);
            for k in 1..=n_fbm {
                b[k * d + i] = c[k] - c[0];
            }
            for k in 1..=n_hist {
                hist[k * d + i] = c[n_fbm + k] - c[n_fbm];
            }
        }
    }
    let fbm = FbmPath { path: SampledPath::new(fgrid, d, b)?, hurst: h };
    Ok((fbm, SampledPath::new(hgrid, d, hist)?))
}

/// Exact variance of the discretized, truncated Mandelbrot-van Ness value
/// at node `k` of the future grid; compare with `(k dt)^(2H)` for the bias.
pub fn mandelbrot_discrete_variance(h: f64, dt: f64, n_past: usize, k: usize) -> Result<f64> {
    let a = liouville_weights(h, dt, n_past + k)?;
    let mut s = 0.0;
    for g in 0..n_past + k {
        let mut v = a[n_past + k - g];
        if g < n_past {
            v -= a[n_past - g];
        }
        s += v * v;
    }
    Ok(dt * s)
}

/// Exact variance of the discretized Liouville value after `n` steps.
pub fn liouville_discrete_variance(h: f64, dt: f64, n: usize) -> Result<f64> {
    let a = liouville_weights(h, dt, n)?;
    Ok(dt * a.iter().map(|v| v * v).sum::<f64>())
}

/// `(1 + v)^p - v^p` without cancellation.
fn pow_shift_diff(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        return 1.0;
    }
    v.powf(p) * (p * (1.0 / v).ln_1p()).exp_m1()
}

/// Variance of an increment over `horizon` contributed by the Wiener past
/// beyond `-t_past`, i.e. what the truncation drops.
pub fn truncation_tail_variance(h: f64, horizon: f64, t_past: f64) -> Result<f64> {
    let a = alpha_h(h)?;
    if h == 0.5 {
        return Ok(0.0);
    }
    if !(t_past > 0.0) {
        return Err(param("t_past", "must be positive"));
    }
    let p = h - 0.5;
    let f = |u: f64| {
        let d = horizon.powf(p) * pow_shift_diff(u / horizon, p);
        d * d
    };
    Ok(a * a * tail_integral(f, t_past, QUAD_TOL)?)
}

/// Samples fBm with the exact grid covariance through a dense Cholesky
/// factor, built once per `(grid, H)`.
#[derive(Debug, Clone)]
pub struct FbmExactSampler {
    grid: Grid,
    hurst: f64,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    jitter: f64,
}

impl FbmExactSampler {
    pub fn new(grid: Grid, h: f64) -> Result<Self> {
        check_hurst(h)?;
        if !grid.starts_at_zero() {
            return Err(Error::Grid("fBm grid must start at 0".into()));
        }
        let n = grid.n_steps();
        let cov = DMatrix::from_fn(n, n, |r, c| {
            let (s, t) = (grid.node(r + 1), grid.node(c + 1));
            fbm_covariance(h, s, t)
        });
        let (chol, jitter) = cholesky_with_jitter(&cov)?;
        Ok(Self { grid, hurst: h, cov, chol, jitter })
    }

    /// Covariance of the non-zero nodes `t_1..t_N`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Covariance of all components stacked component-major; coordinates
    /// are independent, so the off-diagonal blocks are zero.
    pub fn full_covariance(&self, dim: usize) -> DMatrix<f64> {
        let n = self.cov.nrows();
        let mut m = DMatrix::zeros(n * dim, n * dim);
        for i in 0..dim {
            m.view_mut((i * n, i * n), (n, n)).copy_from(&self.cov);
        }
        m
    }

    /// Diagonal jitter that was needed for the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, dim: usize, seed: u64, stream: u64) -> FbmPath {
        let n = self.grid.n_steps();
        let mut rng = stream_rng(seed, stream);
        let mut vals = vec![0.0; (n + 1) * dim];
        let mut z = vec![0.0; n];
        for i in 0..dim {
            for v in z.iter_mut() {
                *v = normal(&mut rng);
            }
            for r in 0..n {
                let row = self.chol.row(r);
                let mut acc = 0.0;
                for c in 0..=r {
                    acc += row[c] * z[c];
                }
                vals[(r + 1) * dim + i] = acc;
            }
        }
        FbmPath { path: SampledPath::new(self.grid, dim, vals).unwrap(), hurst: self.hurst }
    }
}

/// `Cov(B_s, B_t)` for standard fBm.
pub fn fbm_covariance(h: f64, s: f64, t: f64) -> f64 {
    if h == 0.5 {
        return s.min(t);
    }
    let e = 2.0 * h;
    0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e))
}

/// Lower Cholesky factor, retrying with `1e-12 * trace / N` (times 10 per
/// retry, at most 5 retries) on the diagonal when the matrix is not
/// numerically positive definite.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if let Some(c) = m.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let n = m.nrows().max(1);
    let mut jitter = 1e-12 * m.trace() / n as f64;
    for _ in 0..5 {
        let mut mj = m.clone();
        for i in 0..m.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = mj.cholesky() {
            log::warn!("covariance factorization needed jitter {jitter:e}");
            return Ok((c.l(), jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!("{n}x{n} matrix, last jitter {jitter:e}")))
}

/// Exact-covariance fBm on `grid` for one `(seed, stream)`.
pub fn fbm_exact(grid: Grid, h: f64, dim: usize, seed: u64, stream: u64) -> Result<FbmPath> {
    Ok(FbmExactSampler::new(grid, h)?.sample(dim, seed, stream))
}

/// Per-unit variance of `Z_t = int_0^t e^{-lambda (t-s)} dB_s` for fBm `B`.
///
/// Integrating by parts reduces the double integral against the fBm
/// covariance to four one-dimensional integrals with endpoint singularities
/// only, evaluated by tanh-sinh quadrature.
pub fn fou_variance(lambda: f64, h: f64, t: f64) -> Result<f64> {
    check_hurst(h)?;
    if !(lambda > 0.0) {
        return Err(param("lambda", "must be positive"));
    }
    if t < 0.0 {
        return Err(param("t", "must be non-negative"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let e = 2.0 * h;
    let te = t.powf(e);
    let a = tanh_sinh_dist(
        |_, s, ts| (-lambda * ts).exp() * 0.5 * (te + s.powf(e) - ts.powf(e)),
        0.0,
        t,
        QUAD_TOL,
    )?;
    let a2 = tanh_sinh_dist(|_, s, ts| (-lambda * ts).exp() * s.powf(e), 0.0, t, QUAD_TOL)?;
    let ee = -(-lambda * t).exp_m1() / lambda;
    let d = tanh_sinh_dist(
        |_, u, tu| u.powf(e) * (-lambda * u).exp() * -(-2.0 * lambda * tu).exp_m1() / lambda,
        0.0,
        t,
        QUAD_TOL,
    )?;
    Ok(te - 2.0 * lambda * a + lambda * lambda * (a2 * ee - 0.5 * d))
}

/// Moments of `dZ = -lambda Z dt + sigma dB^H`: `E Z_t = mean_factor * z0`
/// and `Cov Z_t = cov`.
pub fn fou_exact_moments(lambda: f64, sigma: &DMatrix<f64>, h: f64, t: f64) -> Result<(f64, DMatrix<f64>)> {
    let v = fou_variance(lambda, h, t)?;
    Ok(((-lambda * t).exp(), sigma * sigma.transpose() * v))
}

/// Stationary per-unit fOU variance: [`fou_variance`] at doubling horizons
/// from `t = 20 / lambda` until successive values differ by less than 1e-8.
pub fn fou_stationary_scalar(lambda: f64, h: f64) -> Result<f64> {
    let mut t = 20.0 / lambda;
    let mut prev = fou_variance(lambda, h, t)?;
    for _ in 0..8 {
        t *= 2.0;
        let cur = fou_variance(lambda, h, t)?;
        if (cur - prev).abs() < 1e-8 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("stationary fOU variance did not settle (lambda = {lambda}, H = {h})")))
}

pub fn fou_stationary_variance(lambda: f64, sigma: &DMatrix<f64>, h: f64) -> Result<DMatrix<f64>> {
    Ok(sigma * sigma.transpose() * fou_stationary_scalar(lambda, h)?)
}

/// Per-unit variance at `T` of the linear SDE `dZ = -lambda Z dt + dB~`
/// driven by the Liouville process: `alpha_H^2 int_0^T k(r)^2 dr` with
/// `k(r) = r^(H-1/2) - lambda int_0^r e^{-lambda (r-v)} v^(H-1/2) dv`.
pub fn liouville_ou_variance(lambda: f64, h: f64, t: f64) -> Result<f64> {
    let a = alpha_h(h)?;
    if !(lambda > 0.0) {
        return Err(param("lambda", "must be positive"));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    let p = h - 0.5;
    let k = |r: f64| -> f64 {
        let inner = tanh_sinh_dist(|_, v, rv| (-lambda * rv).exp() * v.powf(p), 0.0, r, 1e-13)
            .unwrap_or(f64::NAN);
        r.powf(p) - lambda * inner
    };
    let v = tanh_sinh(|r| k(r).powi(2), 0.0, t, 1e-11)?;
    if !v.is_finite() {
        return Err(Error::Quadrature("inner kernel integral failed".into()));
    }
    Ok(a * a * v)
}

/// Mean at `T` of the same linear SDE around a conditioning path `ell`
/// (one component, trapezoid rule): `ell(T) - lambda int e^{-lambda (T-s)} ell(s) ds`.
pub fn liouville_ou_mean(lambda: f64, ell: &[f64], dt: f64) -> f64 {
    let n = ell.len() - 1;
    let t = n as f64 * dt;
    let f = |k: usize| (-lambda * (t - k as f64 * dt)).exp() * ell[k];
    let mut s = 0.5 * (f(0) + f(n));
    for k in 1..n {
        s += f(k);
    }
    ell[n] - lambda * s * dt
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_half_is_one() {
        assert_eq!(alpha_h(0.5).unwrap(), 1.0);
        assert!(alpha_h(0.0).is_err());
        assert!(alpha_h(1.0).is_err());
    }

    #[test]
    fn alpha_matches_kernel_second_moment() {
        // int_0^inf ((1+v)^{H-1/2} - v^{H-1/2})^2 dv + 1/(2H) = alpha_H^{-2}
        for h in [0.25, 0.75, 0.4] {
            let p = h - 0.5;
            let f = |v: f64| pow_shift_diff(v, p).powi(2);
            let near = tanh_sinh(f, 0.0, 1.0, 1e-13).unwrap();
            let far = tail_integral(f, 1.0, 1e-13).unwrap();
            let lhs = near + far + 1.0 / (2.0 * h);
            let a = alpha_h(h).unwrap();
            assert!((lhs - a.powi(-2)).abs() < 1e-6, "H={h}: {lhs} vs {}", a.powi(-2));
        }
    }

    #[test]
    fn wiener_shape_and_determinism() {
        let w = sample_two_sided_wiener(0.0, 1.0, 0.25, 2, 5, 0).unwrap();
        assert_eq!(w.future_increments().len(), 8);
        assert!(w.past_grid().is_none());
        let w2 = sample_two_sided_wiener(0.0, 1.0, 0.25, 2, 5, 0).unwrap();
        assert_eq!(w, w2);
        assert!(sample_two_sided_wiener(0.3, 1.0, 0.25, 1, 5, 0).is_err());
    }

    #[test]
    fn half_hurst_degenerates_to_wiener() {
        let w = sample_two_sided_wiener(2.0, 1.0, 0.01, 1, 3, 1).unwrap();
        let lv = liouville_from_increments(w.future_increments(), 1, w.future_grid(), 0.5).unwrap();
        assert_eq!(lv, w.future_path());
        assert_eq!(fbm_mandelbrot(&w, 0.5).unwrap().path, w.future_path());
        let hist = history_process(&w, 0.5, 0.0, &Grid::uniform(1.0, 100).unwrap()).unwrap();
        assert!(hist.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fft_and_direct_convolutions_agree() {
        let kern = liouville_weights(0.3, 0.01, 3000).unwrap();
        let w = sample_two_sided_wiener(20.0, 10.0, 0.01, 1, 9, 0).unwrap();
        let x = w.component(0, 2500);
        let d = conv_direct(&kern, &x, 2000, 3000);
        let f = conv_fft(&kern, &x, 2000, 3000, 8192);
        for (a, b) in d.iter().zip(&f) {
            assert!((a - b).abs() < 1e-11, "{a} {b}");
        }
    }

    #[test]
    fn decomposition_identity() {
        let h = 0.7;
        let w = sample_two_sided_wiener(5.0, 2.0, 0.01, 2, 11, 4).unwrap();
        let b = fbm_mandelbrot(&w, h).unwrap().path;
        let t_base = 0.5;
        let hg = Grid::uniform(1.5, 150).unwrap();
        let hist = history_process(&w, h, t_base, &hg).unwrap();
        let fresh = &w.future_increments()[50 * 2..];
        let innov = liouville_from_increments(fresh, 2, hg, h).unwrap();
        for k in 0..=150 {
            for i in 0..2 {
                let lhs = b.at(50 + k)[i] - b.at(50)[i];
                let rhs = hist.at(k)[i] + innov.at(k)[i];
                assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
            }
        }
        let (f2, h2) = fbm_with_history(&w, h, 50, 150).unwrap();
        for k in 0..=150 {
            assert!((h2.at(k)[0] - hist.at(k)[0]).abs() < 1e-12);
        }
        assert_eq!(f2.path.at(50), b.at(50));
    }

    #[test]
    fn p_h_is_history_at_zero() {
        let w = sample_two_sided_wiener(3.0, 1.0, 0.01, 1, 2, 2).unwrap();
        let g = Grid::uniform(1.0, 100).unwrap();
        let a = p_h_operator(&w, 0.3, &g).unwrap();
        let b = history_process(&w, 0.3, 0.0, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.at(0)[0], 0.0);
    }

    #[test]
    fn exact_fbm_covariance() {
        let g = Grid::uniform(1.0, 10).unwrap();
        let s = FbmExactSampler::new(g, 0.5).unwrap();
        for r in 0..10 {
            for c in 0..10 {
                assert_eq!(s.covariance()[(r, c)], g.node(r.min(c) + 1));
            }
        }
        let full = FbmExactSampler::new(g, 0.3).unwrap().full_covariance(2);
        assert_eq!(full[(0, 10)], 0.0);
        assert_eq!(full[(3, 17)], 0.0);
        assert_eq!(full[(12, 12)], full[(2, 2)]);
    }

    #[test]
    fn liouville_variance_self_similar() {
        let c = HurstConstants::new(0.3).unwrap();
        let r = c.liouville_variance(3.0) / c.liouville_variance(1.0);
        assert!((r - 3f64.powf(0.6)).abs() < 1e-12);
    }

    #[test]
    fn fou_classical_and_zero_time() {
        for t in [0.3, 1.0, 4.0] {
            let v = fou_variance(1.0, 0.5, t).unwrap();
            assert!((v - 0.5 * (1.0 - (-2.0 * t).exp())).abs() < 1e-10);
        }
        let (m, c) = fou_exact_moments(1.0, &DMatrix::identity(1, 1), 0.7, 0.0).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(c[(0, 0)], 0.0);
    }

    #[test]
    fn liouville_ou_half_is_classical() {
        let v = liouville_ou_variance(1.0, 0.5, 1.0).unwrap();
        assert!((v - 0.5 * (1.0 - (-2.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn truncation_tail_small_and_decreasing() {
        let a = truncation_tail_variance(0.75, 1.0, 100.0).unwrap();
        let b = truncation_tail_variance(0.75, 1.0, 400.0).unwrap();
        assert!(a > b && b > 0.0);
        // leading-order tail alpha^2 (H-1/2)^2 P^(2H-2) / (2 - 2H)
        let approx = alpha_h(0.75).unwrap().powi(2) * 0.0625 * 100f64.powf(-0.5) / 0.5;
        assert!((a / approx - 1.0).abs() < 0.05, "{a} {approx}");
    }

    #[test]
    fn fou_matches_cosh_form_at_unit_rate() {
        // 2H e^{-t} int_0^t s^{2H-1} cosh(t-s) ds
        for h in [0.3, 0.7] {
            let t = 1.0;
            let q = tanh_sinh(|s| s.powf(2.0 * h - 1.0) * (t - s).cosh(), 0.0, t, 1e-13).unwrap();
            let cosh_form = 2.0 * h * (-t).exp() * q;
            let v = fou_variance(1.0, h, t).unwrap();
            assert!((v - cosh_form).abs() < 1e-6, "H={h}: {v} vs {cosh_form}");
        }
        assert!((fou_variance(1.0, 0.7, 1.0).unwrap() - 0.414_900_725_802_370_4).abs() < 1e-9);
    }

    #[test]
    fn fou_stationary_against_closed_form() {
        // sigma^2 Gamma(2H+1) / (2 lambda^{2H})
        for h in [0.3, 0.5, 0.7] {
            for lambda in [0.5, 1.0, 2.0] {
                let v = fou_stationary_scalar(lambda, h).unwrap();
                let exact = gamma(2.0 * h + 1.0) / (2.0 * lambda.powf(2.0 * h));
                assert!((v - exact).abs() < 1e-7, "H={h} lambda={lambda}: {v} vs {exact}");
            }
        }
        let a = fou_stationary_scalar(1.0, 0.7).unwrap();
        let b = fou_stationary_scalar(2.0, 0.7).unwrap();
        assert!((b / a - 2f64.powf(-1.4)).abs() < 1e-7);
    }
}
