//! Wiener-Liouville bridges: the Wiener path on `[0, T]` conditioned on the
//! Liouville endpoint `B~_T = x`.
//!
//! Two samplers are provided. [`ExactBridgeSampler`] conditions the joint
//! Gaussian law of the grid values and `B~_T` directly. Because the
//! conditioning variable is scalar per component, the conditional law is a
//! rank-one correction of an unconditioned draw, so no matrix factorization
//! is needed. [`SdeBridgeSampler`] integrates the bridge SDE with a pinned
//! final step and serves as an independent cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::{param, Error, Result};
use crate::grid::{Grid, SampledPath};
use crate::noise::{check_hurst, liouville_weights, HurstConstants};
use crate::rng::{normal, stream_rng, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeEndpoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl BridgeEndpoint {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(param("T", "bridge horizon must be positive"));
        }
        if x.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self { x, t })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeMethod {
    ExactConditioning,
    Sde,
}

impl BridgeMethod {
    pub fn name(self) -> &'static str {
        match self {
            BridgeMethod::ExactConditioning => "exact_conditioning",
            BridgeMethod::Sde => "sde",
        }
    }
}

impl std::str::FromStr for BridgeMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_conditioning" => Ok(Self::ExactConditioning),
            "sde" => Ok(Self::Sde),
            _ => Err(param("bridge", format!("unknown sampler `{s}` (exact_conditioning | sde)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    pub x_values: SampledPath,
    /// Driving increments, node-major; only the SDE sampler has them.
    pub dw_increments: Option<Vec<f64>>,
    pub method: BridgeMethod,
}

impl BridgePath {
    pub fn grid(&self) -> &Grid {
        self.x_values.grid()
    }

    pub fn dim(&self) -> usize {
        self.x_values.dim()
    }
}

fn check_grid(grid: &Grid, t: f64) -> Result<()> {
    if !grid.starts_at_zero() || (grid.t_end() - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "bridge grid must span [0, {t}], got [{}, {}]",
            grid.t0(),
            grid.t_end()
        )));
    }
    Ok(())
}

/// `alpha_H int_0^t (T - u)^(H - 1/2) du`, the covariance of `W_t` and `B~_T`.
pub fn endpoint_cross_cov(c: &HurstConstants, t_end: f64, t: f64) -> f64 {
    let p = c.hurst + 0.5;
    let s = (t / t_end).min(1.0);
    // T^p (1 - (1 - s)^p) with the difference taken stably
    c.alpha_h * t_end.powf(p) * -(p * (-s).ln_1p()).exp_m1() / p
}

/// Exact-conditioning sampler for one `(grid, H, T)`.
#[derive(Debug, Clone)]
pub struct ExactBridgeSampler {
    grid: Grid,
    consts: HurstConstants,
    /// `Cov(W_{t_k}, B~_T)`, `k = 0..=N`.
    cross: Vec<f64>,
    /// `alpha_H` times the cell averages of `(T - u)^(H - 1/2)`, per cell.
    cell_w: Vec<f64>,
    var_end: f64,
    resid_sd: f64,
}

/// An unconditioned draw `(W', B~'_T)` from the joint law; conditioning on
/// any endpoint is then an affine shift.
#[derive(Debug, Clone)]
pub struct FreeDraw {
    w: Vec<f64>,
    b_end: Vec<f64>,
    dim: usize,
}

impl ExactBridgeSampler {
    pub fn new(grid: Grid, h: f64) -> Result<Self> {
        check_hurst(h)?;
        if !grid.starts_at_zero() {
            return Err(Error::Grid("bridge grid must start at 0".into()));
        }
        let consts = HurstConstants::new(h)?;
        let n = grid.n_steps();
        let t = grid.t_end();
        let wts = liouville_weights(h, grid.dt(), n)?;
        let cell_w: Vec<f64> = (0..n).map(|j| wts[n - j]).collect();
        let cross = (0..=n).map(|k| if k == n { consts.alpha_h * t.powf(h + 0.5) / (h + 0.5) } else { endpoint_cross_cov(&consts, t, grid.node(k)) }).collect();
        let var_end = consts.liouville_variance(t);
        let explained = grid.dt() * cell_w.iter().map(|v| v * v).sum::<f64>();
        let resid_sd = (var_end - explained).max(0.0).sqrt();
        Ok(Self { grid, consts, cross, cell_w, var_end, resid_sd })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn endpoint_variance(&self) -> f64 {
        self.var_end
    }

    /// Standard deviation of the part of `B~_T` not explained by the grid
    /// increments.
    pub fn residual_sd(&self) -> f64 {
        self.resid_sd
    }

    pub fn draw_free(&self, dim: usize, rng: &mut StreamRng) -> FreeDraw {
        let n = self.grid.n_steps();
        let sd = self.grid.dt().sqrt();
        let mut w = vec![0.0; (n + 1) * dim];
        let mut b_end = vec![0.0; dim];
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..n {
                let dw = sd * normal(rng);
                w[(j + 1) * dim + i] = w[j * dim + i] + dw;
                acc += self.cell_w[j] * dw;
            }
            b_end[i] = acc + self.resid_sd * normal(rng);
        }
        FreeDraw { w, b_end, dim }
    }

    /// Bridge to `x` from a free draw: `W_t = W'_t - c(t) (B~'_T - x) / V`.
    pub fn condition(&self, free: &FreeDraw, x: &[f64]) -> BridgePath {
        let d = free.dim;
        let mut v = free.w.clone();
        let shift: Vec<f64> = (0..d).map(|i| (free.b_end[i] - x[i]) / self.var_end).collect();
        for k in 0..=self.grid.n_steps() {
            for i in 0..d {
                v[k * d + i] -= self.cross[k] * shift[i];
            }
        }
        BridgePath {
            x_values: SampledPath::new(self.grid, d, v).unwrap(),
            dw_increments: None,
            method: BridgeMethod::ExactConditioning,
        }
    }

    pub fn sample(&self, x: &[f64], rng: &mut StreamRng) -> BridgePath {
        let free = self.draw_free(x.len(), rng);
        self.condition(&free, x)
    }

    /// Conditional mean path, linear in `x`.
    pub fn mean(&self, x: &[f64]) -> SampledPath {
        let d = x.len();
        let mut v = vec![0.0; (self.grid.n_nodes()) * d];
        for k in 0..self.grid.n_nodes() {
            for i in 0..d {
                v[k * d + i] = self.cross[k] * x[i] / self.var_end;
            }
        }
        SampledPath::new(self.grid, d, v).unwrap()
    }

    /// Conditional covariance of `(W_{t_1}, ..., W_{t_N})` per component.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.grid.n_steps();
        DMatrix::from_fn(n, n, |r, c| {
            let s = self.grid.node(r + 1).min(self.grid.node(c + 1));
            s - self.cross[r + 1] * self.cross[c + 1] / self.var_end
        })
    }

    pub fn hurst(&self) -> f64 {
        self.consts.hurst
    }
}

impl FreeDraw {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Conditional mean of the bridge, asserted against dense algebra in tests.
pub fn conditional_mean(ep: &BridgeEndpoint, grid: &Grid, h: f64) -> Result<SampledPath> {
    check_grid(grid, ep.t)?;
    Ok(ExactBridgeSampler::new(*grid, h)?.mean(&ep.x))
}

pub fn conditional_cov(grid: &Grid, h: f64) -> Result<DMatrix<f64>> {
    Ok(ExactBridgeSampler::new(*grid, h)?.covariance())
}

/// Joint covariance of `(W_{t_1}, ..., W_{t_N}, B~_T)` for one component.
pub fn joint_covariance(grid: &Grid, h: f64) -> Result<DMatrix<f64>> {
    let s = ExactBridgeSampler::new(*grid, h)?;
    let n = grid.n_steps();
    Ok(DMatrix::from_fn(n + 1, n + 1, |r, c| match (r < n, c < n) {
        (true, true) => grid.node(r.min(c) + 1),
        (true, false) => s.cross[r + 1],
        (false, true) => s.cross[c + 1],
        (false, false) => s.var_end,
    }))
}

/// Gaussian conditioning of the first `N` coordinates on the last, by a
/// general linear solve (test oracle for [`ExactBridgeSampler::mean`]).
pub fn conditional_mean_dense(grid: &Grid, h: f64, x: f64) -> Result<DVector<f64>> {
    let j = joint_covariance(grid, h)?;
    let n = grid.n_steps();
    let s22 = j.view((n, n), (1, 1)).into_owned();
    let s12 = j.view((0, n), (n, 1)).into_owned();
    let sol = s22.lu().solve(&DVector::from_element(1, x)).ok_or(Error::SingularSigma)?;
    Ok(s12 * sol)
}

pub fn sample_bridge_exact(ep: &BridgeEndpoint, grid: &Grid, h: f64, seed: u64, stream: u64) -> Result<BridgePath> {
    check_grid(grid, ep.t)?;
    let s = ExactBridgeSampler::new(*grid, h)?;
    Ok(s.sample(&ep.x, &mut stream_rng(seed, stream)))
}

/// Euler scheme for the bridge SDE
/// `dX = (2H/alpha)(T-t)^(H-1/2) (x/T^(2H) - alpha int_0^t (T-s)^(-H-1/2) dW_s) dt + dW`,
/// with the last increment solved so the endpoint functional equals `x`.
#[derive(Debug, Clone)]
pub struct SdeBridgeSampler {
    grid: Grid,
    consts: HurstConstants,
    /// `int_cell (T - s)^(H - 1/2) ds`.
    drift_int: Vec<f64>,
    /// Cell averages of `(T - s)^(-H - 1/2)`, finite for cells before the last.
    inner_avg: Vec<f64>,
    /// Endpoint-functional weight of each cell.
    cell_w: Vec<f64>,
}

impl SdeBridgeSampler {
    pub fn new(grid: Grid, h: f64) -> Result<Self> {
        check_hurst(h)?;
        if !grid.starts_at_zero() {
            return Err(Error::Grid("bridge grid must start at 0".into()));
        }
        let n = grid.n_steps();
        if n < 2 {
            return Err(Error::Grid("the bridge SDE needs at least two steps".into()));
        }
        let consts = HurstConstants::new(h)?;
        let dt = grid.dt();
        let wts = liouville_weights(h, dt, n)?;
        let cell_w: Vec<f64> = (0..n).map(|j| wts[n - j]).collect();
        let drift_int = cell_w.iter().map(|w| w * dt / consts.alpha_h).collect();
        let q = 0.5 - h;
        let inner_avg = (0..n)
            .map(|j| {
                let m = (n - j - 1) as f64;
                if m == 0.0 {
                    f64::INFINITY
                } else if h == 0.5 {
                    (1.0 / m).ln_1p() / dt
                } else {
                    // (d2^q - d1^q) / (q dt), d1 = m dt, d2 = (m+1) dt
                    dt.powf(q - 1.0) * m.powf(q) * (q * (1.0 / m).ln_1p()).exp_m1() / q
                }
            })
            .collect();
        Ok(Self { grid, consts, drift_int, inner_avg, cell_w })
    }

    /// Finite-variation part `K` given the driving increments.
    pub fn drift_part(&self, x: &[f64], dw: &[f64]) -> Vec<f64> {
        let n = self.grid.n_steps();
        let d = x.len();
        let h = self.consts.hurst;
        let a = self.consts.alpha_h;
        let t = self.grid.t_end();
        let t2h = t.powf(2.0 * h);
        let mut k_vals = vec![0.0; (n + 1) * d];
        for i in 0..d {
            let mut j_int = 0.0;
            // running endpoint functional of X over completed cells
            let mut ef = 0.0;
            let mut w_prev = 0.0;
            for k in 0..n - 1 {
                let m = x[i] / t2h - a * j_int;
                let dk = (2.0 * h / a) * m * self.drift_int[k];
                let kk = k_vals[k * d + i] + dk;
                k_vals[(k + 1) * d + i] = kk;
                let dwk = dw[k * d + i];
                j_int += dwk * self.inner_avg[k];
                let w_next = w_prev + dwk;
                ef += self.cell_w[k] * ((kk + w_next) - (k_vals[k * d + i] + w_prev));
                w_prev = w_next;
            }
            let dx_last = (x[i] - ef) / self.cell_w[n - 1];
            let dw_last = dw[(n - 1) * d + i];
            k_vals[n * d + i] = k_vals[(n - 1) * d + i] + (dx_last - dw_last);
        }
        k_vals
    }

    pub fn sample(&self, x: &[f64], rng: &mut StreamRng) -> BridgePath {
        let n = self.grid.n_steps();
        let d = x.len();
        let sd = self.grid.dt().sqrt();
        let mut dw = vec![0.0; n * d];
        for i in 0..d {
            for k in 0..n {
                dw[k * d + i] = sd * normal(rng);
            }
        }
        self.assemble(x, dw)
    }

    fn assemble(&self, x: &[f64], dw: Vec<f64>) -> BridgePath {
        let n = self.grid.n_steps();
        let d = x.len();
        let k_vals = self.drift_part(x, &dw);
        let w = running_sum(&dw, d, n);
        let v = k_vals.iter().zip(&w).map(|(k, w)| k + w).collect();
        BridgePath {
            x_values: SampledPath::new(self.grid, d, v).unwrap(),
            dw_increments: Some(dw),
            method: BridgeMethod::Sde,
        }
    }
}

fn running_sum(inc: &[f64], d: usize, n: usize) -> Vec<f64> {
    let mut w = vec![0.0; (n + 1) * d];
    for k in 0..n {
        for i in 0..d {
            w[(k + 1) * d + i] = w[k * d + i] + inc[k * d + i];
        }
    }
    w
}

pub fn sample_bridge_sde(ep: &BridgeEndpoint, grid: &Grid, h: f64, seed: u64, stream: u64) -> Result<BridgePath> {
    check_grid(grid, ep.t)?;
    let s = SdeBridgeSampler::new(*grid, h)?;
    Ok(s.sample(&ep.x, &mut stream_rng(seed, stream)))
}

/// SDE bridge driven by given increments (node-major, `N * dim` values).
pub fn bridge_sde_from_increments(ep: &BridgeEndpoint, grid: &Grid, h: f64, dw: Vec<f64>) -> Result<BridgePath> {
    check_grid(grid, ep.t)?;
    if dw.len() != grid.n_steps() * ep.x.len() {
        return Err(Error::GridMismatch("increment count does not match grid".into()));
    }
    Ok(SdeBridgeSampler::new(*grid, h)?.assemble(&ep.x, dw))
}

/// `alpha_H sum_i avg_i (T - s)^(H - 1/2) dX_i`, the discrete Liouville
/// endpoint of a path.
pub fn endpoint_functional(p: &BridgePath, h: f64) -> Result<Vec<f64>> {
    endpoint_of(&p.x_values, h)
}

pub fn endpoint_of(x: &SampledPath, h: f64) -> Result<Vec<f64>> {
    let n = x.grid().n_steps();
    let d = x.dim();
    let w = liouville_weights(h, x.grid().dt(), n)?;
    let v = x.values();
    let mut out = vec![0.0; d];
    for j in 0..n {
        for i in 0..d {
            out[i] += w[n - j] * (v[(j + 1) * d + i] - v[j * d + i]);
        }
    }
    Ok(out)
}

/// Finite-variation part `K^x` of an SDE bridge from its driving increments.
pub fn bridge_drift_k(ep: &BridgeEndpoint, grid: &Grid, dw: Option<&[f64]>, h: f64) -> Result<SampledPath> {
    let dw = dw.ok_or(Error::NoIncrements)?;
    check_grid(grid, ep.t)?;
    if dw.len() != grid.n_steps() * ep.x.len() {
        return Err(Error::GridMismatch("increment count does not match grid".into()));
    }
    let k = SdeBridgeSampler::new(*grid, h)?.drift_part(&ep.x, dw);
    SampledPath::new(*grid, ep.x.len(), k)
}

/// Mean of `K^x_T`: `(2H/alpha) int_0^T (T-s)^(H-1/2) ds * x / T^(2H)`.
pub fn expected_drift_end(x: f64, t: f64, h: f64) -> Result<f64> {
    let a = HurstConstants::new(h)?.alpha_h;
    Ok(2.0 * h / a * t.powf(h + 0.5) / (h + 0.5) * x / t.powf(2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::uniform(1.0, n).unwrap()
    }

    #[test]
    fn brownian_bridge_covariance() {
        let g = grid(8);
        let c = conditional_cov(&g, 0.5).unwrap();
        for r in 0..8 {
            for k in 0..8 {
                let (s, t) = (g.node(r + 1), g.node(k + 1));
                assert!((c[(r, k)] - (s.min(t) - s * t)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mean_matches_dense_solve_and_is_linear() {
        for h in [0.3, 0.7] {
            let g = grid(20);
            let ep = BridgeEndpoint::new(vec![0.8], 1.0).unwrap();
            let m = conditional_mean(&ep, &g, h).unwrap();
            let dense = conditional_mean_dense(&g, h, 0.8).unwrap();
            for k in 0..20 {
                assert!((m.at(k + 1)[0] - dense[k]).abs() < 1e-12);
            }
            let m2 = conditional_mean(&BridgeEndpoint::new(vec![1.6], 1.0).unwrap(), &g, h).unwrap();
            for k in 0..=20 {
                assert!((m2.at(k)[0] - 2.0 * m.at(k)[0]).abs() < 1e-14);
            }
            let z = conditional_mean(&BridgeEndpoint::new(vec![0.0], 1.0).unwrap(), &g, h).unwrap();
            assert!(z.values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn sde_pins_endpoint() {
        for h in [0.3, 0.5, 0.7] {
            let g = grid(50);
            let ep = BridgeEndpoint::new(vec![0.7, -1.2], 1.0).unwrap();
            let p = sample_bridge_sde(&ep, &g, h, 4, 2).unwrap();
            let e = endpoint_functional(&p, h).unwrap();
            for i in 0..2 {
                assert!((e[i] - ep.x[i]).abs() < 1e-12, "H={h}: {} vs {}", e[i], ep.x[i]);
            }
            let k = bridge_drift_k(&ep, &g, p.dw_increments.as_deref(), h).unwrap();
            let w = running_sum(p.dw_increments.as_ref().unwrap(), 2, 50);
            for (idx, v) in p.x_values.values().iter().enumerate() {
                assert_eq!(v.to_bits(), (k.values()[idx] + w[idx]).to_bits());
            }
        }
    }

    #[test]
    fn sde_mid_time_moments() {
        // Var(W_t | int_0^T (T-s)^(H-1/2) dW = c) = t - (int_0^t k)^2 / int_0^T k^2
        for h in [0.3, 0.7] {
            let g = grid(200);
            let s = SdeBridgeSampler::new(g, h).unwrap();
            let mut rng = stream_rng(9, 0);
            let xs: Vec<f64> = (0..4000).map(|_| s.sample(&[0.7], &mut rng).x_values.at(100)[0]).collect();
            let p = h + 0.5;
            let a = (1.0 - 0.5f64.powf(p)) / p;
            let b = 1.0 / (2.0 * h);
            let var = 0.5 - a * a / b;
            let mean = 0.7 * a / (HurstConstants::new(h).unwrap().alpha_h * b);
            let (m, ms) = crate::stats::mean_stderr(&xs);
            let (v, vs) = crate::stats::variance_stderr(&xs);
            assert!((m - mean).abs() < 4.0 * ms, "H={h}: mean {m} vs {mean}");
            assert!((v - var).abs() < 4.0 * vs, "H={h}: var {v} vs {var}");
        }
    }

    #[test]
    fn drift_only_path() {
        let g = grid(40);
        let ep = BridgeEndpoint::new(vec![0.5], 1.0).unwrap();
        let p = bridge_sde_from_increments(&ep, &g, 0.3, vec![0.0; 40]).unwrap();
        assert!((endpoint_functional(&p, 0.3).unwrap()[0] - 0.5).abs() < 1e-13);
        let z = BridgeEndpoint::new(vec![0.0], 1.0).unwrap();
        let k = bridge_drift_k(&z, &g, Some(&[0.0; 40]), 0.3).unwrap();
        assert!(k.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exact_path_has_no_increments() {
        let g = grid(10);
        let ep = BridgeEndpoint::new(vec![0.5], 1.0).unwrap();
        let p = sample_bridge_exact(&ep, &g, 0.3, 1, 1).unwrap();
        assert_eq!(p.x_values.at(0)[0], 0.0);
        assert!(matches!(bridge_drift_k(&ep, &g, p.dw_increments.as_deref(), 0.3), Err(Error::NoIncrements)));
    }

    #[test]
    fn straight_line_at_half() {
        let g = grid(10);
        let p = BridgePath {
            x_values: SampledPath::from_fn(g, |t| 1.5 * t),
            dw_increments: None,
            method: BridgeMethod::ExactConditioning,
        };
        assert!((endpoint_functional(&p, 0.5).unwrap()[0] - 1.5).abs() < 1e-14);
    }
}
