//! Monte Carlo densities through Wiener-Liouville bridges.
//!
//! The conditional evolution `Phi = ell + int b(Phi) ds + sigma B~` on
//! `[0, T]` has, at `y`, the density of `ell(T) + sigma B~_T` times the mean
//! of a Girsanov weight over bridges `X` with Liouville endpoint
//! `x = sigma^-1 (y - ell(T))`. The weight is
//! `exp(int <L, dX> - 1/2 int |L|^2 dt)` with
//! `L = kappa^-1 sigma^-1 I^(1/2-H)[b(ell + sigma kappa I^(H-1/2) X)]`,
//! where `B~ = kappa I^(H-1/2) W`.
//!
//! Transition and stationary densities average conditional densities over
//! the history contributed by the Wiener past.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::bridge::{BridgeMethod, BridgePath, ExactBridgeSampler, SdeBridgeSampler};
use crate::error::{param, Error, Result};
use crate::frac_calc::{
    derivative_of_unit_constant, derivative_of_unit_constant_avg, derivative_of_unit_constant_sq_avg, dot, FracOrder,
    FracPlan,
};
use crate::grid::{Grid, SampledPath};
use crate::noise::{
    fbm_with_history, fou_stationary_scalar, liouville_weights, p_h_operator, sample_two_sided_wiener, HurstConstants,
};
use crate::rng::{Purpose, SeedSpace};
use crate::sde::{euler_solve, BoundDrift, ModelSpec, SlowSpec};
use crate::stats::{mean_stderr, trapezoid};

/// Log-weights above this are clamped.
pub const LOG_WEIGHT_CAP: f64 = 700.0;
/// Estimates with a smaller effective sample size are flagged.
pub const LOW_ESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EllOrigin {
    Constant,
    HistoryAugmented,
}

/// Conditioning path `ell` on the estimator's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningPath {
    pub ell: SampledPath,
    pub origin: EllOrigin,
}

impl ConditioningPath {
    pub fn new(ell: SampledPath, origin: EllOrigin) -> Result<Self> {
        if !ell.grid().starts_at_zero() {
            return Err(Error::Grid("conditioning path must start at 0".into()));
        }
        if !ell.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Self { ell, origin })
    }

    pub fn constant(grid: Grid, y0: &[f64]) -> Self {
        Self { ell: SampledPath::constant(grid, y0), origin: EllOrigin::Constant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub weight_ess: f64,
    pub max_weight_share: f64,
    /// Some log-weight exceeded [`LOG_WEIGHT_CAP`].
    pub clamped: bool,
    /// `weight_ess` below [`LOW_ESS`].
    pub low_ess: bool,
}

impl Diagnostics {
    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.clamped {
            f.push("clamped");
        }
        if self.low_ess {
            f.push("low_ess");
        }
        if f.is_empty() {
            "-".into()
        } else {
            f.join("|")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub diagnostics: Diagnostics,
}

/// Running sums of the per-path contributions `prefactor * weight`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct WeightStats {
    sum: f64,
    sum_sq: f64,
    max: f64,
    n: usize,
    clamped: bool,
}

impl WeightStats {
    fn merge(&mut self, o: &WeightStats) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.max = self.max.max(o.max);
        self.n += o.n;
        self.clamped |= o.clamped;
    }

    fn diagnostics(&self) -> Diagnostics {
        let (ess, share) = if self.sum > 0.0 {
            ((self.sum * self.sum / self.sum_sq).min(self.n as f64), self.max / self.sum)
        } else {
            (0.0, 1.0)
        };
        Diagnostics { weight_ess: ess, max_weight_share: share, clamped: self.clamped, low_ess: ess < LOW_ESS }
    }
}

/// One conditional estimate before it is turned into a [`DensityEstimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RawEstimate {
    value: f64,
    stderr: f64,
    stats: WeightStats,
}

impl RawEstimate {
    fn finish(self) -> DensityEstimate {
        DensityEstimate {
            value: self.value,
            stderr: self.stderr,
            n_paths: self.stats.n,
            diagnostics: self.stats.diagnostics(),
        }
    }
}

pub(crate) fn nested(raws: &[RawEstimate]) -> DensityEstimate {
    let vals: Vec<f64> = raws.iter().map(|r| r.value).collect();
    let (value, stderr) = mean_stderr(&vals);
    let mut stats = WeightStats::default();
    for r in raws {
        stats.merge(&r.stats);
    }
    DensityEstimate { value, stderr, n_paths: stats.n, diagnostics: stats.diagnostics() }
}

/// Bridge sampler settings shared by all estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeParams {
    /// Steps of the bridge grid on `[0, T]`.
    pub n_steps: usize,
    pub n_paths: usize,
    pub method: BridgeMethod,
}

impl BridgeParams {
    pub fn new(n_steps: usize, n_paths: usize, method: BridgeMethod) -> Result<Self> {
        if n_steps < 2 {
            return Err(param("n_steps", "must be at least 2"));
        }
        if n_paths < 2 {
            return Err(param("n_paths", "must be at least 2"));
        }
        Ok(Self { n_steps, n_paths, method })
    }
}

/// Density of `ell_T + sigma B~_T`, i.e. `N(ell_T, V_T sigma sigma^T)` at `y`.
pub fn liouville_endpoint_density(ell_t: &[f64], y: &[f64], t: f64, m: &ModelSpec) -> Result<f64> {
    if !(t > 0.0) {
        return Err(param("T", "must be positive"));
    }
    if ell_t.len() != m.dim || y.len() != m.dim {
        return Err(param("y", format!("expected dimension {}", m.dim)));
    }
    let (_, q) = endpoint_and_quadratic(ell_t, y, m);
    let v = HurstConstants::new(m.hurst)?.liouville_variance(t);
    Ok(gaussian_prefactor(q, v, m))
}

fn endpoint_and_quadratic(ell_t: &[f64], y: &[f64], m: &ModelSpec) -> (Vec<f64>, f64) {
    let si = m.sigma_inv();
    let n = m.dim;
    let mut x = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            x[i] += si[(i, j)] * (y[j] - ell_t[j]);
        }
    }
    let q = x.iter().map(|v| v * v).sum();
    (x, q)
}

fn gaussian_prefactor(q: f64, v: f64, m: &ModelSpec) -> f64 {
    let n = m.dim as f64;
    (-q / (2.0 * v)).exp() / ((2.0 * std::f64::consts::PI * v).powf(0.5 * n) * m.sigma_det().abs())
}

/// Part of `L` carried by `b(Phi_0)` for `H > 1/2`: the fractional
/// derivative of a constant, `t^-beta / Gamma(1 - beta)`, handled exactly
/// because its singularity at 0 defeats the grid scheme.
#[derive(Debug, Clone)]
struct Singular {
    /// Cell means of `u(t) = t^-beta / Gamma(1 - beta)`.
    avg: Vec<f64>,
    /// Cell means of `u^2`.
    sq_avg: Vec<f64>,
    /// `u` at the nodes, with the cell mean at node 0.
    node: Vec<f64>,
}

/// Precomputed pieces of the weight for one `(model, lambda, grid)`.
#[derive(Debug, Clone)]
pub struct WeightEngine {
    grid: Grid,
    dim: usize,
    drift: BoundDrift,
    sigma: DMatrix<f64>,
    /// `kappa^-1 sigma^-1`.
    scaled_inv: DMatrix<f64>,
    /// Liouville cell weights reversed: `lift_rev[i]` multiplies an
    /// increment `n - i` cells back.
    lift_rev: Vec<f64>,
    outer: FracPlan,
    singular: Option<Singular>,
}

impl WeightEngine {
    pub fn new(m: &ModelSpec, lambda: Option<&[f64]>, grid: Grid) -> Result<Self> {
        if !grid.starts_at_zero() {
            return Err(Error::Grid("estimator grid must start at 0".into()));
        }
        let h = m.hurst;
        let n = grid.n_steps();
        let dt = grid.dt();
        let kappa = HurstConstants::new(h)?.kappa();
        let lift_w = liouville_weights(h, dt, n)?;
        let lift_rev: Vec<f64> = (0..n).map(|i| lift_w[n - i]).collect();
        let outer = FracPlan::new(&grid, FracOrder::new(0.5 - h)?);
        let singular = (h > 0.5).then(|| {
            let beta = h - 0.5;
            let avg: Vec<f64> = (0..n)
                .map(|i| derivative_of_unit_constant_avg(beta, grid.node(i), grid.node(i + 1)))
                .collect();
            let sq_avg = (0..n)
                .map(|i| derivative_of_unit_constant_sq_avg(beta, grid.node(i), grid.node(i + 1)))
                .collect();
            let mut node: Vec<f64> = (0..=n).map(|k| derivative_of_unit_constant(beta, grid.node(k))).collect();
            node[0] = avg[0];
            Singular { avg, sq_avg, node }
        });
        Ok(Self {
            grid,
            dim: m.dim,
            drift: m.drift.bind(lambda)?,
            sigma: m.sigma.clone(),
            scaled_inv: m.sigma_inv() / kappa,
            lift_rev,
            outer,
            singular,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn drift_is_zero(&self) -> bool {
        self.drift.is_zero()
    }

    fn check(&self, ell: &SampledPath, x: &SampledPath) -> Result<()> {
        if !ell.grid().compatible(&self.grid) || !x.grid().compatible(&self.grid) {
            return Err(Error::GridMismatch("conditioning path, bridge and estimator grids differ".into()));
        }
        if ell.dim() != self.dim || x.dim() != self.dim {
            return Err(Error::GridMismatch("path dimension differs from the model".into()));
        }
        Ok(())
    }

    /// Regular part `R` of `L` at the nodes (node-major) and the constant
    /// vector `S` multiplying the singular profile (zero for `H <= 1/2`).
    fn parts(&self, ell: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let n = self.grid.n_steps();
        let nn = n + 1;
        // component-major increments and lift
        let mut dx = vec![0.0; d * n];
        for j in 0..n {
            for i in 0..d {
                dx[i * n + j] = x[(j + 1) * d + i] - x[j * d + i];
            }
        }
        let mut lift = vec![0.0; d * nn];
        for i in 0..d {
            let dxi = &dx[i * n..(i + 1) * n];
            for k in 1..=n {
                lift[i * nn + k] = dot(&self.lift_rev[n - k..n], &dxi[..k]);
            }
        }
        let mut phi = vec![0.0; d];
        let mut gk = vec![0.0; d];
        let mut g = vec![0.0; d * nn];
        for k in 0..=n {
            for i in 0..d {
                let mut acc = ell[k * d + i];
                for l in 0..d {
                    acc += self.sigma[(i, l)] * lift[l * nn + k];
                }
                phi[i] = acc;
            }
            self.drift.eval(&phi, &mut gk);
            for i in 0..d {
                g[i * nn + k] = gk[i];
            }
        }
        let mut r = vec![0.0; d * nn];
        for i in 0..d {
            self.outer.apply_scalar(&g[i * nn..(i + 1) * nn], &mut r[i * nn..(i + 1) * nn]);
        }
        let mut out = vec![0.0; nn * d];
        for k in 0..=n {
            for i in 0..d {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += self.scaled_inv[(i, l)] * r[l * nn + k];
                }
                out[k * d + i] = acc;
            }
        }
        let mut s = vec![0.0; d];
        if self.singular.is_some() {
            for i in 0..d {
                for l in 0..d {
                    s[i] += self.scaled_inv[(i, l)] * g[l * nn];
                }
            }
        }
        (out, s)
    }

    /// `L` at the grid nodes.
    pub fn frak_l(&self, ell: &SampledPath, x: &SampledPath) -> Result<SampledPath> {
        self.check(ell, x)?;
        let (mut r, s) = self.parts(ell.values(), x.values());
        if let Some(sg) = &self.singular {
            let d = self.dim;
            for (k, u) in sg.node.iter().enumerate() {
                for i in 0..d {
                    r[k * d + i] += s[i] * u;
                }
            }
        }
        let out = SampledPath::new(self.grid, self.dim, r)?;
        if !out.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(out)
    }

    /// `sum_i <L_i, dX_i> - 1/2 sum_i |L_i|^2 dt`, left-point; the singular
    /// profile enters through its exact cell means.
    pub fn log_weight_raw(&self, ell: &[f64], x: &[f64]) -> f64 {
        if self.drift.is_zero() {
            return 0.0;
        }
        let d = self.dim;
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        let (r, s) = self.parts(ell, x);
        let mut lin = 0.0;
        let mut quad = 0.0;
        for k in 0..n {
            for i in 0..d {
                let dx = x[(k + 1) * d + i] - x[k * d + i];
                let ri = r[k * d + i];
                lin += ri * dx;
                quad += ri * ri;
            }
        }
        quad *= dt;
        if let Some(sg) = &self.singular {
            let s2: f64 = s.iter().map(|v| v * v).sum();
            for k in 0..n {
                let mut sdx = 0.0;
                let mut sr = 0.0;
                for i in 0..d {
                    sdx += s[i] * (x[(k + 1) * d + i] - x[k * d + i]);
                    sr += s[i] * r[k * d + i];
                }
                lin += sg.avg[k] * sdx;
                quad += (2.0 * sr * sg.avg[k] + s2 * sg.sq_avg[k]) * dt;
            }
        }
        lin - 0.5 * quad
    }

    /// Log-weight, clamped at [`LOG_WEIGHT_CAP`]; the flag reports clamping.
    pub fn log_weight(&self, ell: &SampledPath, x: &SampledPath) -> Result<(f64, bool)> {
        self.check(ell, x)?;
        let lw = self.log_weight_raw(ell.values(), x.values());
        if lw.is_nan() {
            return Err(Error::NonFinite { step: self.grid.n_steps() });
        }
        Ok(clamp_log(lw))
    }
}

fn clamp_log(lw: f64) -> (f64, bool) {
    if lw > LOG_WEIGHT_CAP {
        (LOG_WEIGHT_CAP, true)
    } else {
        (lw, false)
    }
}

/// `L` along a bridge.
pub fn frak_l(m: &ModelSpec, lambda: Option<&[f64]>, ell: &SampledPath, bridge: &BridgePath) -> Result<SampledPath> {
    WeightEngine::new(m, lambda, *ell.grid())?.frak_l(ell, &bridge.x_values)
}

/// Girsanov weight along a bridge, clamped at `exp(700)` (logged).
pub fn girsanov_weight(m: &ModelSpec, lambda: Option<&[f64]>, ell: &SampledPath, bridge: &BridgePath) -> Result<f64> {
    let (lw, clamped) = WeightEngine::new(m, lambda, *ell.grid())?.log_weight(ell, &bridge.x_values)?;
    if clamped {
        log::warn!("Girsanov weight clamped at exp({LOG_WEIGHT_CAP})");
    }
    Ok(lw.exp())
}

/// `exp(sum <L_i, dX_i> - 1/2 sum |L_i|^2 dt)` for a given `L`.
pub fn weight_from_l(l: &SampledPath, x: &SampledPath) -> Result<f64> {
    l.check_same_shape(x)?;
    let d = l.dim();
    let dt = l.grid().dt();
    let (lv, xv) = (l.values(), x.values());
    let mut e = 0.0;
    for k in 0..l.grid().n_steps() {
        for i in 0..d {
            let li = lv[k * d + i];
            e += li * (xv[(k + 1) * d + i] - xv[k * d + i]) - 0.5 * li * li * dt;
        }
    }
    Ok(e.exp())
}

enum Sampler {
    Exact(ExactBridgeSampler),
    Sde(SdeBridgeSampler),
}

/// Conditional-density estimator for one `(model, lambda, grid, sampler)`.
pub struct ConditionalEstimator<'a> {
    model: &'a ModelSpec,
    engine: WeightEngine,
    sampler: Sampler,
    v_end: f64,
}

impl<'a> ConditionalEstimator<'a> {
    pub fn new(model: &'a ModelSpec, lambda: Option<&[f64]>, grid: Grid, method: BridgeMethod) -> Result<Self> {
        let engine = WeightEngine::new(model, lambda, grid)?;
        let sampler = match method {
            BridgeMethod::ExactConditioning => Sampler::Exact(ExactBridgeSampler::new(grid, model.hurst)?),
            BridgeMethod::Sde => Sampler::Sde(SdeBridgeSampler::new(grid, model.hurst)?),
        };
        let v_end = HurstConstants::new(model.hurst)?.liouville_variance(grid.t_end());
        Ok(Self { model, engine, sampler, v_end })
    }

    pub fn grid(&self) -> &Grid {
        self.engine.grid()
    }

    pub(crate) fn raw(&self, ell: &SampledPath, ys: &[Vec<f64>], n_paths: usize, seeds: SeedSpace) -> Result<Vec<RawEstimate>> {
        if !ell.grid().compatible(self.grid()) || ell.dim() != self.model.dim {
            return Err(Error::GridMismatch("conditioning path does not match the estimator grid".into()));
        }
        if n_paths < 2 {
            return Err(param("n_paths", "must be at least 2"));
        }
        let ell_t = ell.last();
        let mut xs = Vec::with_capacity(ys.len());
        let mut prefs = Vec::with_capacity(ys.len());
        for y in ys {
            if y.len() != self.model.dim {
                return Err(param("y", format!("expected dimension {}", self.model.dim)));
            }
            let (x, q) = endpoint_and_quadratic(ell_t, y, self.model);
            prefs.push(gaussian_prefactor(q, self.v_end, self.model));
            xs.push(x);
        }
        if self.engine.drift_is_zero() {
            let n = n_paths as f64;
            return Ok(prefs
                .iter()
                .map(|&p| RawEstimate {
                    value: p,
                    stderr: 0.0,
                    stats: WeightStats { sum: p * n, sum_sq: p * p * n, max: p, n: n_paths, clamped: false },
                })
                .collect());
        }
        let per_path: Vec<Vec<(f64, bool)>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| self.path_log_weights(ell, &xs, seeds, i))
            .collect();
        let mut out = Vec::with_capacity(ys.len());
        for (yi, &pref) in prefs.iter().enumerate() {
            let mut stats = WeightStats::default();
            let mut w = Vec::with_capacity(n_paths);
            for pw in &per_path {
                let (lw, c) = pw[yi];
                let wi = lw.exp();
                w.push(wi);
                stats.sum += pref * wi;
                stats.sum_sq += (pref * wi).powi(2);
                stats.max = stats.max.max(pref * wi);
                stats.clamped |= c;
            }
            stats.n = n_paths;
            if stats.clamped {
                log::warn!("Girsanov weights clamped at exp({LOG_WEIGHT_CAP}) for y = {:?}", ys[yi]);
            }
            let (mw, sw) = mean_stderr(&w);
            out.push(RawEstimate { value: pref * mw, stderr: pref * sw, stats });
        }
        Ok(out)
    }

    /// Log-weights of path `i` for every endpoint; the same random numbers
    /// serve all endpoints.
    fn path_log_weights(&self, ell: &SampledPath, xs: &[Vec<f64>], seeds: SeedSpace, i: u64) -> Vec<(f64, bool)> {
        let d = self.model.dim;
        match &self.sampler {
            Sampler::Exact(s) => {
                let free = s.draw_free(d, &mut seeds.rng(Purpose::Bridge, i));
                xs.iter()
                    .map(|x| {
                        let b = s.condition(&free, x);
                        clamp_log(self.engine.log_weight_raw(ell.values(), b.x_values.values()))
                    })
                    .collect()
            }
            Sampler::Sde(s) => xs
                .iter()
                .map(|x| {
                    let b = s.sample(x, &mut seeds.rng(Purpose::Bridge, i));
                    clamp_log(self.engine.log_weight_raw(ell.values(), b.x_values.values()))
                })
                .collect(),
        }
    }

    /// Densities of `Phi_T(ell)` at every `y`, sharing bridge draws.
    pub fn estimate(&self, ell: &SampledPath, ys: &[Vec<f64>], n_paths: usize, seed: u64) -> Result<Vec<DensityEstimate>> {
        Ok(self.raw(ell, ys, n_paths, SeedSpace::new(seed))?.into_iter().map(RawEstimate::finish).collect())
    }
}

/// Density of `Phi_T(ell)` at `y`; `T` must be the end of `ell`'s grid.
pub fn conditional_density(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    ell: &ConditioningPath,
    y: &[f64],
    t: f64,
    n_paths: usize,
    method: BridgeMethod,
    seed: u64,
) -> Result<DensityEstimate> {
    Ok(conditional_density_many(m, lambda, ell, &[y.to_vec()], t, n_paths, method, seed)?.remove(0))
}

pub fn conditional_density_many(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    ell: &ConditioningPath,
    ys: &[Vec<f64>],
    t: f64,
    n_paths: usize,
    method: BridgeMethod,
    seed: u64,
) -> Result<Vec<DensityEstimate>> {
    let g = *ell.ell.grid();
    if !(t > 0.0) || (g.t_end() - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::GridMismatch(format!("conditioning path ends at {}, expected T = {t}", g.t_end())));
    }
    ConditionalEstimator::new(m, lambda, g, method)?.estimate(&ell.ell, ys, n_paths, seed)
}

/// `ell = base + sigma * hist`.
pub fn shifted(base: &[f64], sigma: &DMatrix<f64>, hist: &SampledPath) -> SampledPath {
    let d = base.len();
    let mut v = vec![0.0; hist.values().len()];
    for k in 0..hist.grid().n_nodes() {
        let hk = hist.at(k);
        for i in 0..d {
            let mut acc = base[i];
            for l in 0..d {
                acc += sigma[(i, l)] * hk[l];
            }
            v[k * d + i] = acc;
        }
    }
    SampledPath::new(*hist.grid(), d, v).unwrap()
}

/// Outer/inner sample sizes and the past truncation for nested estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NestedParams {
    pub n_outer: usize,
    pub n_inner: usize,
    pub t_past: f64,
    pub n_steps: usize,
    pub method: BridgeMethod,
}

impl NestedParams {
    fn validate(&self) -> Result<()> {
        if self.n_outer < 2 {
            return Err(param("n_outer", "must be at least 2"));
        }
        if self.n_inner < 2 {
            return Err(param("n_inner", "must be at least 2"));
        }
        if self.n_steps < 2 {
            return Err(param("n_steps", "must be at least 2"));
        }
        if !(self.t_past >= 0.0) {
            return Err(param("t_past", "must be non-negative"));
        }
        Ok(())
    }
}

/// History of a fresh Wiener past on `grid`, or zeros at `H = 1/2`.
fn fresh_history(h: f64, dim: usize, grid: &Grid, t_past: f64, coords: (u64, u64)) -> Result<SampledPath> {
    if h == 0.5 || t_past == 0.0 {
        return Ok(SampledPath::zeros(*grid, dim));
    }
    let dt = grid.dt();
    let w = sample_two_sided_wiener(snap(t_past, dt), dt, dt, dim, coords.0, coords.1)?;
    p_h_operator(&w, h, grid)
}

/// Round a span to a whole number of steps.
pub(crate) fn snap(span: f64, dt: f64) -> f64 {
    (span / dt).round().max(1.0) * dt
}

/// Transition density `p_t(y0; y)` of the SDE from `y0` with a Wiener past.
pub fn transition_density(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    y0: &[f64],
    y: &[f64],
    t: f64,
    params: &NestedParams,
    seed: u64,
) -> Result<DensityEstimate> {
    Ok(transition_density_many(m, lambda, y0, &[y.to_vec()], t, params, seed)?.remove(0))
}

pub fn transition_density_many(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    y0: &[f64],
    ys: &[Vec<f64>],
    t: f64,
    params: &NestedParams,
    seed: u64,
) -> Result<Vec<DensityEstimate>> {
    params.validate()?;
    if y0.len() != m.dim {
        return Err(param("y0", format!("expected dimension {}", m.dim)));
    }
    let grid = Grid::uniform(t, params.n_steps)?;
    let est = ConditionalEstimator::new(m, lambda, grid, params.method)?;
    let seeds = SeedSpace::new(seed);
    let raws: Vec<Vec<RawEstimate>> = (0..params.n_outer as u64)
        .into_par_iter()
        .map(|o| {
            let hist = fresh_history(m.hurst, m.dim, &grid, params.t_past, seeds.coords(Purpose::Wiener, o))?;
            let ell = shifted(y0, &m.sigma, &hist);
            est.raw(&ell, ys, params.n_inner, seeds.child(Purpose::Outer, o))
        })
        .collect::<Result<_>>()?;
    Ok(transpose_nested(&raws, ys.len()))
}

fn transpose_nested(raws: &[Vec<RawEstimate>], ny: usize) -> Vec<DensityEstimate> {
    (0..ny)
        .map(|yi| nested(&raws.iter().map(|r| r[yi]).collect::<Vec<_>>()))
        .collect()
}

/// Settings of the stationary estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryParams {
    /// Horizon of the conditional densities.
    pub t0: f64,
    pub t_burn: f64,
    pub n_replicas: usize,
    pub n_inner: usize,
    /// Wiener past kept before the start of the burn-in.
    pub t_past: f64,
    /// Steps on `[0, T0]`; the burn-in uses the same step.
    pub n_steps: usize,
    pub method: BridgeMethod,
}

impl StationaryParams {
    fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(param("t0", "must be positive"));
        }
        if !(self.t_burn > 0.0) {
            return Err(param("t_burn", "must be positive"));
        }
        if self.n_replicas < 2 {
            return Err(param("n_replicas", "must be at least 2"));
        }
        if self.n_inner < 2 {
            return Err(param("n_inner", "must be at least 2"));
        }
        if self.n_steps < 2 {
            return Err(param("n_steps", "must be at least 2"));
        }
        if !(self.t_past >= 0.0) {
            return Err(param("t_past", "must be non-negative"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t0 / self.n_steps as f64
    }

    pub fn n_burn(&self) -> usize {
        (self.t_burn / self.dt()).round().max(1.0) as usize
    }
}

/// Mean and variance of the first component of `Y` across replicas at a
/// burn-in checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurnInPoint {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryResult {
    pub estimates: Vec<DensityEstimate>,
    pub burn_in: Vec<BurnInPoint>,
}

const BURN_CHECKPOINTS: usize = 10;

/// One replica: burn-in path and the conditioning path it leaves behind.
struct Replica {
    ell: SampledPath,
    checkpoints: Vec<f64>,
}

fn replica(m: &ModelSpec, lambda: Option<&[f64]>, p: &StationaryParams, coords: (u64, u64)) -> Result<Replica> {
    let dt = p.dt();
    let n_burn = p.n_burn();
    let w = sample_two_sided_wiener(if p.t_past > 0.0 { snap(p.t_past, dt) } else { 0.0 }, n_burn as f64 * dt, dt, m.dim, coords.0, coords.1)?;
    replica_from_wiener(m, lambda, p, &w)
}

fn replica_from_wiener(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    p: &StationaryParams,
    w: &crate::noise::TwoSidedWienerPath,
) -> Result<Replica> {
    let (fbm, hist) = fbm_with_history(w, m.hurst, p.n_burn(), p.n_steps)?;
    replica_from_noise(m, lambda, p, &fbm.path, &hist)
}

fn replica_from_noise(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    p: &StationaryParams,
    fbm: &SampledPath,
    hist: &SampledPath,
) -> Result<Replica> {
    let n_burn = p.n_burn();
    let y = euler_solve(m, lambda, fbm, &vec![0.0; m.dim])?;
    let ell = shifted(y.last(), &m.sigma, hist);
    let checkpoints = (1..=BURN_CHECKPOINTS).map(|c| y.at(c * n_burn / BURN_CHECKPOINTS)[0]).collect();
    Ok(Replica { ell, checkpoints })
}

fn burn_summary(p: &StationaryParams, cps: &[Vec<f64>]) -> Vec<BurnInPoint> {
    let n_burn = p.n_burn();
    (0..BURN_CHECKPOINTS)
        .map(|c| {
            let v: Vec<f64> = cps.iter().map(|r| r[c]).collect();
            let (mean, _) = mean_stderr(&v);
            BurnInPoint { t: ((c + 1) * n_burn / BURN_CHECKPOINTS) as f64 * p.dt(), mean, variance: crate::stats::variance(&v) }
        })
        .collect()
}

/// Stationary density at `y`.
pub fn stationary_density(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    y: &[f64],
    params: &StationaryParams,
    seed: u64,
) -> Result<DensityEstimate> {
    Ok(stationary_density_many(m, lambda, &[y.to_vec()], params, seed)?.estimates.remove(0))
}

/// Stationary density at every `y`: per replica, burn in from 0, then
/// average conditional densities around the state plus its history.
pub fn stationary_density_many(
    m: &ModelSpec,
    lambda: Option<&[f64]>,
    ys: &[Vec<f64>],
    params: &StationaryParams,
    seed: u64,
) -> Result<StationaryResult> {
    params.validate()?;
    let grid = Grid::uniform(params.t0, params.n_steps)?;
    let est = ConditionalEstimator::new(m, lambda, grid, params.method)?;
    let seeds = SeedSpace::new(seed);
    let per: Vec<(Vec<RawEstimate>, Vec<f64>)> = (0..params.n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let rep = replica(m, lambda, params, seeds.coords(Purpose::Replica, r))?;
            let raw = est.raw(&rep.ell, ys, params.n_inner, seeds.child(Purpose::Outer, r))?;
            Ok((raw, rep.checkpoints))
        })
        .collect::<Result<_>>()?;
    let (raws, cps): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    Ok(StationaryResult { estimates: transpose_nested(&raws, ys.len()), burn_in: burn_summary(params, &cps) })
}

/// Finite-difference row of a parametric sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdRow {
    pub lambda: f64,
    pub y: Vec<f64>,
    pub derivative: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub lambdas: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    /// `table[j][k]`: estimate at `lambdas[j]`, `ys[k]`.
    pub table: Vec<Vec<DensityEstimate>>,
    /// Central differences at the interior `lambdas`.
    pub fd: Vec<FdRow>,
    /// `diffs_from_first[j][k]`: paired difference `p(lambda_j) - p(lambda_0)`
    /// at `ys[k]`, with its stderr.
    pub diffs_from_first: Vec<Vec<(f64, f64)>>,
    /// `per_replica[j][k][r]`: replica means, for other paired contrasts.
    pub per_replica: Vec<Vec<Vec<f64>>>,
}

/// Stationary densities over a scalar parameter grid (each value is used
/// for every rate of a parametric drift) with common random numbers:
/// replica `r` uses the same Wiener path and bridge draws for every
/// `lambda`, so differences in `lambda` are paired.
pub fn parametric_stationary_sweep(
    m: &ModelSpec,
    lambdas: &[f64],
    ys: &[Vec<f64>],
    params: &StationaryParams,
    seed: u64,
) -> Result<SweepResult> {
    params.validate()?;
    if lambdas.is_empty() {
        return Err(param("lambda_grid", "must not be empty"));
    }
    let grid = Grid::uniform(params.t0, params.n_steps)?;
    let ests: Vec<ConditionalEstimator> = lambdas
        .iter()
        .map(|l| ConditionalEstimator::new(m, Some(std::slice::from_ref(l)), grid, params.method))
        .collect::<Result<_>>()?;
    let seeds = SeedSpace::new(seed);
    let dt = params.dt();
    // per replica: [lambda][y]
    let per: Vec<Vec<Vec<RawEstimate>>> = (0..params.n_replicas as u64)
        .into_par_iter()
        .map(|r| {
            let (s, k) = seeds.coords(Purpose::Replica, r);
            let w = sample_two_sided_wiener(
                if params.t_past > 0.0 { snap(params.t_past, dt) } else { 0.0 },
                params.n_burn() as f64 * dt,
                dt,
                m.dim,
                s,
                k,
            )?;
            let (fbm, hist) = fbm_with_history(&w, m.hurst, params.n_burn(), params.n_steps)?;
            lambdas
                .iter()
                .zip(&ests)
                .map(|(l, est)| {
                    let rep = replica_from_noise(m, Some(std::slice::from_ref(l)), params, &fbm.path, &hist)?;
                    est.raw(&rep.ell, ys, params.n_inner, seeds.child(Purpose::Outer, r))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let nl = lambdas.len();
    let ny = ys.len();
    let table: Vec<Vec<DensityEstimate>> = (0..nl)
        .map(|j| (0..ny).map(|k| nested(&per.iter().map(|r| r[j][k]).collect::<Vec<_>>())).collect())
        .collect();
    let mut fd = Vec::new();
    for j in 1..nl.saturating_sub(1) {
        let h = lambdas[j + 1] - lambdas[j - 1];
        for (k, y) in ys.iter().enumerate() {
            let d: Vec<f64> = per.iter().map(|r| (r[j + 1][k].value - r[j - 1][k].value) / h).collect();
            let (derivative, stderr) = mean_stderr(&d);
            fd.push(FdRow { lambda: lambdas[j], y: y.clone(), derivative, stderr });
        }
    }
    let diffs_from_first = (0..nl)
        .map(|j| {
            (0..ny)
                .map(|k| mean_stderr(&per.iter().map(|r| r[j][k].value - r[0][k].value).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    let per_replica =
        (0..nl).map(|j| (0..ny).map(|k| per.iter().map(|r| r[j][k].value).collect()).collect()).collect();
    Ok(SweepResult { lambdas: lambdas.to_vec(), ys: ys.to_vec(), table, fd, diffs_from_first, per_replica })
}

/// Exact variance of the discretized fOU scheme used by the stationary
/// estimator: Euler steps `Y_{k+1} = (1 - lambda dt) Y_k + dB_k` from
/// `Y_0 = 0`, with `dB` the cell-averaged Mandelbrot-van Ness increments
/// whose Wiener past is cut `n_past` cells before 0, after `n` steps.
///
/// `Y_n` is linear in the Wiener increments, `Y_n = sum_g A_{n_past+n-1-g} dW_g`
/// with `A_s = sum_{r < min(n, s+1)} rho^r dk[s - r]`, `rho = 1 - lambda dt`
/// and `dk[m] = kern[m+1] - kern[m]`; `A` obeys a first-order recursion.
pub fn fou_scheme_variance(lambda: f64, h: f64, dt: f64, n_past: usize, n: usize) -> Result<f64> {
    if !(lambda > 0.0) || !(dt > 0.0) || lambda * dt >= 1.0 {
        return Err(param("lambda", "need 0 < lambda dt < 1"));
    }
    let len = n_past + n;
    let kern = liouville_weights(h, dt, len)?;
    let dk = |m: usize| kern[m + 1] - kern[m];
    let rho = 1.0 - lambda * dt;
    let rho_n = rho.powi(n as i32);
    let mut a = 0.0;
    let mut sum = 0.0;
    for s in 0..len {
        a = dk(s) + rho * a;
        if s >= n {
            a -= rho_n * dk(s - n);
        }
        sum += a * a;
    }
    Ok(sum * dt)
}

/// Bias of the stationary estimator for the fOU model with `sigma = 1`:
/// the exact stationary variance against the exact variance of the
/// discretized, truncated scheme over burn-in plus horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBudget {
    pub exact_variance: f64,
    pub scheme_variance: f64,
}

impl BiasBudget {
    pub fn fou(lambda: f64, h: f64, p: &StationaryParams) -> Result<Self> {
        let dt = p.dt();
        let n_past = if p.t_past > 0.0 { (p.t_past / dt).round() as usize } else { 0 };
        Ok(Self {
            exact_variance: fou_stationary_scalar(lambda, h)?,
            scheme_variance: fou_scheme_variance(lambda, h, dt, n_past, p.n_burn() + p.n_steps)?,
        })
    }

    pub fn relative(&self) -> f64 {
        self.scheme_variance / self.exact_variance - 1.0
    }

    /// `|N(y; 0, v_scheme) - N(y; 0, v_exact)|`.
    pub fn density_bias(&self, y: f64) -> f64 {
        let p = |v: f64| (-y * y / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        (p(self.scheme_variance) - p(self.exact_variance)).abs()
    }
}

/// Tabulated averaged slow coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedTable {
    pub x: Vec<f64>,
    pub fbar: Vec<f64>,
    pub gbar: Vec<f64>,
    /// Quadrature mass of the estimated fast stationary density.
    pub mass: f64,
    pub y_grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// `fbar(x) = int f(x, y) p(y) dy / mass`, with `p` the estimated
/// stationary density of the (x-independent, scalar) fast model on `y_grid`.
/// The diffusion does not depend on `y`, so `gbar = g`.
pub fn averaged_coefficients(
    slow: &SlowSpec,
    fast: &ModelSpec,
    lambda: Option<&[f64]>,
    x_grid: &[f64],
    y_grid: &[f64],
    params: &StationaryParams,
    seed: u64,
) -> Result<AveragedTable> {
    if fast.dim != 1 {
        return Err(param("fast.dim", "averaging is implemented for a scalar fast variable"));
    }
    if y_grid.len() < 3 || x_grid.is_empty() {
        return Err(param("y_grid", "need at least three y points and one x point"));
    }
    let mut ys = y_grid.to_vec();
    for attempt in 0..2 {
        let pts: Vec<Vec<f64>> = ys.iter().map(|y| vec![*y]).collect();
        let dens: Vec<f64> =
            stationary_density_many(fast, lambda, &pts, params, seed)?.estimates.iter().map(|e| e.value).collect();
        let mass = trapezoid(&ys, &dens);
        if (mass - 1.0).abs() <= 0.05 {
            let m1 = trapezoid(&ys, &ys.iter().zip(&dens).map(|(y, p)| y * p).collect::<Vec<_>>()) / mass;
            let m2 = trapezoid(&ys, &ys.iter().zip(&dens).map(|(y, p)| y * y * p).collect::<Vec<_>>()) / mass;
            let fbar = x_grid.iter().map(|&x| slow.ax * x + slow.c + slow.ay * m1 + slow.ayy * m2).collect();
            let gbar = x_grid.iter().map(|&x| slow.g(x)).collect();
            return Ok(AveragedTable { x: x_grid.to_vec(), fbar, gbar, mass, y_grid: ys, density: dens });
        }
        if attempt == 0 {
            log::warn!("stationary mass {mass:.4} off by more than 5%; widening the y-grid");
            ys.iter_mut().for_each(|y| *y *= 1.5);
        } else {
            return Err(Error::Estimator(format!("stationary density mass {mass:.4} deviates from 1 by more than 5%")));
        }
    }
    unreachable!()
}

/// CSV header matching [`csv_row`].
pub fn csv_header(dim: usize) -> String {
    let ys: Vec<String> = (1..=dim).map(|i| format!("y{i}")).collect();
    format!("hurst,drift,lambda,{},t,value,stderr,n_paths,ess,max_share,flags", ys.join(","))
}

pub fn csv_row(h: f64, drift: &str, lambda: Option<&[f64]>, y: &[f64], t: f64, e: &DensityEstimate) -> String {
    let lam = lambda.map(|l| l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")).unwrap_or_else(|| "-".into());
    let ys: Vec<String> = y.iter().map(|v| v.to_string()).collect();
    format!(
        "{h},{drift},{lam},{},{t},{:e},{:e},{},{},{},{}",
        ys.join(","),
        e.value,
        e.stderr,
        e.n_paths,
        e.diagnostics.weight_ess,
        e.diagnostics.max_weight_share,
        e.diagnostics.flags()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::BridgeMethod::ExactConditioning;
    use crate::sde::DriftSpec;

    fn fou(h: f64) -> ModelSpec {
        ModelSpec::scalar(DriftSpec::linear_scalar(1.0, 1), 1.0, h).unwrap()
    }

    #[test]
    fn endpoint_density_examples() {
        let m = ModelSpec::scalar(DriftSpec::zero(1), 1.0, 0.5).unwrap();
        let p = liouville_endpoint_density(&[0.3], &[1.3], 1.0, &m).unwrap();
        assert!((p - (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
        let m = ModelSpec::scalar(DriftSpec::zero(1), 1.0, 0.3).unwrap();
        let v = HurstConstants::new(0.3).unwrap().liouville_variance(2.0);
        let p = liouville_endpoint_density(&[0.0], &[0.0], 2.0, &m).unwrap();
        assert!((p - 1.0 / (2.0 * std::f64::consts::PI * v).sqrt()).abs() < 1e-14);
        // normalization, trapezoid over +/- 10 sd
        let ys: Vec<f64> = (0..=4000).map(|i| -10.0 * v.sqrt() + i as f64 * 5e-3 * v.sqrt()).collect();
        let ps: Vec<f64> = ys.iter().map(|y| liouville_endpoint_density(&[0.0], &[*y], 2.0, &m).unwrap()).collect();
        assert!((trapezoid(&ys, &ps) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zero_drift_is_exact() {
        let m = ModelSpec::scalar(DriftSpec::zero(1), 0.8, 0.3).unwrap();
        let g = Grid::uniform(1.0, 20).unwrap();
        let ell = ConditioningPath::constant(g, &[0.2]);
        let e = conditional_density(&m, None, &ell, &[0.7], 1.0, 100, ExactConditioning, 1).unwrap();
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.value, liouville_endpoint_density(&[0.2], &[0.7], 1.0, &m).unwrap());
        assert_eq!(e.diagnostics.weight_ess, 100.0);
    }

    #[test]
    fn frak_l_at_half_is_drift_along_path() {
        let m = ModelSpec::scalar(DriftSpec::tanh_well(2.0, 1), 0.5, 0.5).unwrap();
        let g = Grid::uniform(1.0, 30).unwrap();
        let ell = SampledPath::from_fn(g, |t| 1.0 - t);
        let x = SampledPath::from_fn(g, |t| (3.0 * t).sin());
        let l = WeightEngine::new(&m, None, g).unwrap().frak_l(&ell, &x).unwrap();
        for k in 0..=30 {
            let phi = ell.at(k)[0] + 0.5 * x.at(k)[0];
            let want = (-phi + 2.0 * phi.tanh()) / 0.5;
            assert!((l.at(k)[0] - want).abs() < 1e-13);
        }
    }

    /// For `b(y) = -y`, `ell = 0`, `sigma = 1` the composed operators cancel
    /// in the continuum and `L = -X`.
    #[test]
    fn frak_l_linear_cancellation() {
        for h in [0.3, 0.7] {
            let m = fou(h);
            let mut errs = Vec::new();
            for n in [100, 400] {
                let g = Grid::uniform(1.0, n).unwrap();
                let x = SampledPath::from_fn(g, |t| t.sin() + t * t);
                let l = WeightEngine::new(&m, None, g).unwrap().frak_l(&SampledPath::zeros(g, 1), &x).unwrap();
                // skip the first nodes, where the grid cannot resolve t^-beta
                let e = (n / 10..=n).map(|k| (l.at(k)[0] + x.at(k)[0]).abs()).fold(0.0, f64::max);
                errs.push(e);
            }
            assert!(errs[1] < 1e-2, "H = {h}: {errs:?}");
            assert!(errs[1] < errs[0], "H = {h}: {errs:?}");
        }
    }

    #[test]
    fn weight_closed_form_for_constant_l() {
        // sign drift far from 0 gives constant L = -s at H = 1/2
        let s = 0.7;
        let m = ModelSpec::scalar(DriftSpec::sign(s, 1), 1.0, 0.5).unwrap();
        let g = Grid::uniform(2.0, 40).unwrap();
        let ell = SampledPath::constant(g, &[100.0]);
        let x = SampledPath::from_fn(g, |t| 0.3 * t - 0.1 * t * t);
        let bp = BridgePath { x_values: x.clone(), dw_increments: None, method: ExactConditioning };
        let w = girsanov_weight(&m, None, &ell, &bp).unwrap();
        let want = (-s * x.last()[0] - 0.5 * s * s * 2.0).exp();
        assert!((w / want - 1.0).abs() < 1e-13);
        let l = frak_l(&m, None, &ell, &bp).unwrap();
        assert!((weight_from_l(&l, &x).unwrap() / want - 1.0).abs() < 1e-13);
    }

    #[test]
    fn zero_drift_weight_is_one() {
        let m = ModelSpec::scalar(DriftSpec::zero(1), 1.0, 0.7).unwrap();
        let g = Grid::uniform(1.0, 10).unwrap();
        let x = SampledPath::from_fn(g, |t| t);
        let bp = BridgePath { x_values: x, dw_increments: None, method: ExactConditioning };
        assert_eq!(girsanov_weight(&m, None, &SampledPath::zeros(g, 1), &bp).unwrap(), 1.0);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let m = fou(0.3);
        let g = Grid::uniform(1.0, 10).unwrap();
        let g2 = Grid::uniform(1.0, 12).unwrap();
        let bp = BridgePath { x_values: SampledPath::zeros(g2, 1), dw_increments: None, method: ExactConditioning };
        assert!(frak_l(&m, None, &SampledPath::zeros(g, 1), &bp).is_err());
    }

    #[test]
    fn estimates_are_deterministic_and_positive() {
        let m = ModelSpec::scalar(DriftSpec::tanh_well(2.0, 1), 1.0, 0.3).unwrap();
        let g = Grid::uniform(1.0, 20).unwrap();
        let ell = ConditioningPath::constant(g, &[0.0]);
        let ys: Vec<Vec<f64>> = vec![vec![-1.0], vec![0.0], vec![1.5]];
        let a = conditional_density_many(&m, None, &ell, &ys, 1.0, 200, ExactConditioning, 9).unwrap();
        let b = conditional_density_many(&m, None, &ell, &ys, 1.0, 200, ExactConditioning, 9).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert!(e.value > 0.0 && e.stderr > 0.0);
            assert!(e.diagnostics.weight_ess > 0.0 && e.diagnostics.weight_ess <= 200.0);
        }
    }

    #[test]
    fn scheme_variance_oracles() {
        // H = 1/2: Euler OU, sum of rho^(2k) dt
        let (l, dt, n) = (1.0, 0.01, 300);
        let rho: f64 = 1.0 - l * dt;
        let want = dt * (1.0 - rho.powi(2 * n as i32)) / (1.0 - rho * rho);
        let got = fou_scheme_variance(l, 0.5, dt, 50, n).unwrap();
        assert!((got / want - 1.0).abs() < 1e-12);
        // direct double sum for H = 0.3
        let (h, np, n) = (0.3, 40, 25);
        let kern = liouville_weights(h, dt, np + n).unwrap();
        let mut v = 0.0;
        for g in 0..np + n {
            let mut c = 0.0;
            for k in 0..n {
                let hi = np + k + 1;
                let lo = np + k;
                let kk = |m: isize| if m <= 0 { 0.0 } else { kern[m as usize] };
                c += rho.powi((n - 1 - k) as i32) * (kk(hi as isize - g as isize) - kk(lo as isize - g as isize));
            }
            v += c * c * dt;
        }
        let got = fou_scheme_variance(l, h, dt, np, n).unwrap();
        assert!((got / v - 1.0).abs() < 1e-12, "{got} {v}");
    }
}
