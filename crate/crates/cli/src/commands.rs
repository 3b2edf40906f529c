//! Subcommands: build models and estimator settings from the configuration,
//! run them and write CSV / JSON outputs carrying the configuration echo.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;

use fracdens::bridge::BridgeMethod;
use fracdens::density::{
    conditional_density_many, csv_header, csv_row, parametric_stationary_sweep, stationary_density_many,
    transition_density_many, averaged_coefficients, shifted, ConditioningPath, EllOrigin, NestedParams, StationaryParams,
};
use fracdens::grid::{Grid, SampledPath};
use fracdens::noise::{fbm_exact, fbm_mandelbrot, fou_stationary_scalar, p_h_operator, sample_two_sided_wiener};
use fracdens::rng::{Purpose, SeedSpace};
use fracdens::sde::{averaged_solve, euler_solve, slow_fast_solve, DriftKind, DriftSpec, ModelSpec, SlowSpec};
use fracdens::validate::{self as v, ExperimentReport, Verdict};

use crate::config::{parse_range, Config};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const EXPERIMENTS: &[&str] = &[
    "averaging",
    "bridge",
    "chapman_kolmogorov",
    "conditional_fou",
    "frac_inversion",
    "gaussian_bounds",
    "noise_calibration",
    "nonstationary_bounds",
    "parameter_smoothness",
    "stationary_fou",
    "transition_fou",
    "tv_convergence",
    "zero_drift",
];

/// Output directory plus the files written so far.
pub struct Output {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// CSV with `#` lines for the schema and the configuration echo.
    pub fn csv(&mut self, name: &str, schema: &str, cfg: &Config, body: &str) -> Result<PathBuf> {
        let mut s = format!("# schema: fracdens.{schema}/{CSV_SCHEMA_VERSION}\n");
        for (k, v) in cfg.echo() {
            let _ = writeln!(s, "# config: {k} = {v}");
        }
        s.push_str(body);
        self.write(name, &s)
    }

    pub fn config_echo(&mut self, cfg: &Config) -> Result<PathBuf> {
        self.write("config.txt", &cfg.echo_text())
    }

    pub fn json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }
}

// ------------------------------------------------------------ model

pub fn seed(c: &Config) -> Result<u64> {
    c.num("seed", 1u64)
}

pub fn hurst(c: &Config) -> Result<f64> {
    let h: f64 = c.num("hurst", 0.7)?;
    if !(h > 0.0 && h < 1.0) {
        bail!("invalid value {h} for `hurst`: must lie in (0, 1)");
    }
    Ok(h)
}

fn positive(c: &Config, key: &str, default: f64) -> Result<f64> {
    let v: f64 = c.num(key, default)?;
    if !(v > 0.0) || !v.is_finite() {
        bail!("invalid value {v} for `{key}`: must be positive");
    }
    Ok(v)
}

fn count(c: &Config, key: &str, default: usize, min: usize) -> Result<usize> {
    let v: usize = c.num(key, default)?;
    if v < min {
        bail!("invalid value {v} for `{key}`: must be at least {min}");
    }
    Ok(v)
}

fn non_negative(c: &Config, key: &str, default: f64) -> Result<f64> {
    let v: f64 = c.num(key, default)?;
    if !(v >= 0.0) {
        bail!("invalid value {v} for `{key}`: must be non-negative");
    }
    Ok(v)
}

/// Model from `dim`, `drift` (+ parameters), `lambda`, `sigma`, `hurst`.
pub fn model(c: &Config) -> Result<(ModelSpec, Option<Vec<f64>>)> {
    let dim = count(c, "dim", 1, 1)?;
    let h = hurst(c)?;
    let kind = c.str_or("drift", "linear");
    let drift = match kind.as_str() {
        "zero" => DriftSpec::zero(dim),
        "linear" => {
            if c.has("drift.matrix") {
                DriftSpec::linear(c.vec_or("drift.matrix", "")?, dim).map_err(|e| anyhow!("field `drift.matrix`: {e}"))?
            } else {
                DriftSpec::linear_scalar(c.num("drift.rate", 1.0)?, dim)
            }
        }
        "tanh_well" => DriftSpec::tanh_well(c.num("drift.a", 2.0)?, dim),
        "sign" => DriftSpec::sign(c.num("drift.scale", 1.0)?, dim),
        "parametric_linear" => DriftSpec::parametric_linear(dim),
        other => bail!("invalid value `{other}` for `drift`; known: zero, linear, tanh_well, sign, parametric_linear"),
    };
    let lambda = if matches!(drift.kind, DriftKind::ParametricLinear) {
        let l = c.vec_or("lambda", "1")?;
        if l.len() != 1 && l.len() != dim {
            bail!("invalid `lambda`: expected 1 or {dim} entries");
        }
        Some(l)
    } else {
        None
    };
    let s = c.vec_or("sigma", "1")?;
    let sigma = if s.len() == 1 {
        DMatrix::identity(dim, dim) * s[0]
    } else if s.len() == dim * dim {
        DMatrix::from_row_slice(dim, dim, &s)
    } else {
        bail!("invalid `sigma`: expected 1 or {} entries", dim * dim);
    };
    let m = ModelSpec::new(drift, sigma, h).map_err(|e| anyhow!("model: {e}"))?;
    Ok((m, lambda))
}

fn method(c: &Config) -> Result<BridgeMethod> {
    let s = c.str_or("method", "exact_conditioning");
    s.parse().map_err(|e| anyhow!("invalid value `{s}` for `method`: {e}"))
}

fn point(c: &Config, key: &str, default: &str, dim: usize) -> Result<Vec<f64>> {
    let v = c.vec_or(key, default)?;
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => bail!("invalid `{key}`: {n} components for dimension {dim}"),
    }
}

/// Evaluation points from `ys` (`;`-separated points) or, for scalar
/// models, `y_range = lo,hi,n`.
fn ys(c: &Config, dim: usize) -> Result<Vec<Vec<f64>>> {
    let pts = if !c.has("ys") && c.has("y_range") {
        parse_range(&c.req_str("y_range")?).context("field `y_range`")?.into_iter().map(|y| vec![y]).collect()
    } else {
        c.points("ys")?
    };
    if let Some(p) = pts.iter().find(|p| p.len() != dim) {
        bail!("invalid `ys`: point {p:?} does not have dimension {dim}");
    }
    Ok(pts)
}

fn snap(span: f64, dt: f64) -> f64 {
    (span / dt).round() * dt
}

fn stationary_params(c: &Config) -> Result<StationaryParams> {
    Ok(StationaryParams {
        t0: positive(c, "t0", 1.0)?,
        t_burn: positive(c, "t_burn", 20.0)?,
        n_replicas: count(c, "n_replicas", 200, 2)?,
        n_inner: count(c, "n_inner", 100, 2)?,
        t_past: non_negative(c, "t_past", 300.0)?,
        n_steps: count(c, "n_steps", 100, 2)?,
        method: method(c)?,
    })
}

fn nested_params(c: &Config) -> Result<NestedParams> {
    Ok(NestedParams {
        n_outer: count(c, "n_outer", 100, 2)?,
        n_inner: count(c, "n_inner", 100, 2)?,
        t_past: non_negative(c, "t_past", 100.0)?,
        n_steps: count(c, "n_steps", 100, 2)?,
        method: method(c)?,
    })
}

fn vec_cells(y: &[f64]) -> String {
    y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

// ------------------------------------------------------------ commands

pub fn simulate(c: &Config, out: &mut Output) -> Result<()> {
    let (m, lambda) = model(c)?;
    let seed = seed(c)?;
    let what = c.str_or("what", "sde");
    if what != "sde" && what != "fbm" {
        bail!("invalid value `{what}` for `what`; known: sde, fbm");
    }
    let noise = c.str_or("noise", "mandelbrot");
    if noise != "mandelbrot" && noise != "exact" {
        bail!("invalid value `{noise}` for `noise`; known: mandelbrot, exact");
    }
    let t = positive(c, "t", 1.0)?;
    let n = count(c, "n_steps", 100, 1)?;
    let paths = count(c, "paths", 1, 1)?;
    let t_past = non_negative(c, "t_past", 100.0)?;
    let y0 = if what == "sde" { point(c, "y0", "0", m.dim)? } else { vec![] };
    let grid = Grid::uniform(t, n)?;
    let seeds = SeedSpace::new(seed);
    let sims: Vec<SampledPath> = (0..paths as u64)
        .into_par_iter()
        .map(|p| -> Result<SampledPath> {
            let b = if noise == "exact" {
                let (s, k) = seeds.coords(Purpose::FbmExact, p);
                fbm_exact(grid, m.hurst, m.dim, s, k)?
            } else {
                let (s, k) = seeds.coords(Purpose::Wiener, p);
                let w = sample_two_sided_wiener(snap(t_past, grid.dt()), t, grid.dt(), m.dim, s, k)?;
                fbm_mandelbrot(&w, m.hurst)?
            };
            Ok(if what == "sde" { euler_solve(&m, lambda.as_deref(), &b.path, &y0)? } else { b.path })
        })
        .collect::<Result<_>>()?;
    let prefix = if what == "sde" { "y" } else { "b" };
    let body = if paths == 1 {
        let mut buf = Vec::new();
        sims[0].write_csv(&mut buf, prefix)?;
        String::from_utf8(buf)?
    } else {
        let cols: Vec<String> = (1..=m.dim).map(|i| format!("{prefix}{i}")).collect();
        let mut body = format!("path,t,{}\n", cols.join(","));
        for (p, s) in sims.iter().enumerate() {
            for k in 0..s.grid().n_nodes() {
                body.line(format!("{p},{},{}", s.grid().node(k), vec_cells(s.at(k))));
            }
        }
        body
    };
    out.csv("paths.csv", "paths", c, &body)?;
    Ok(())
}

trait WriteLn {
    fn line(&mut self, s: String);
}

impl WriteLn for String {
    fn line(&mut self, s: String) {
        self.push_str(&s);
        self.push('\n');
    }
}

pub fn density(c: &Config, out: &mut Output) -> Result<()> {
    let (m, lambda) = model(c)?;
    let seed = seed(c)?;
    let t = positive(c, "t", 1.0)?;
    let n = count(c, "n_steps", 100, 2)?;
    let n_paths = count(c, "n_paths", 10_000, 2)?;
    let meth = method(c)?;
    let y0 = point(c, "y0", "0", m.dim)?;
    let ys = ys(c, m.dim)?;
    let grid = Grid::uniform(t, n)?;
    let mode = c.str_or("ell", "constant");
    let ell = match mode.as_str() {
        "constant" => ConditioningPath::constant(grid, &y0),
        "history" => {
            let t_past = positive(c, "t_past", 100.0)?;
            let (s, k) = SeedSpace::new(seed).coords(Purpose::Wiener, 0);
            let w = sample_two_sided_wiener(snap(t_past, grid.dt()), grid.dt(), grid.dt(), m.dim, s, k)?;
            let hist = p_h_operator(&w, m.hurst, &grid)?;
            ConditioningPath::new(shifted(&y0, &m.sigma, &hist), EllOrigin::HistoryAugmented)?
        }
        other => bail!("invalid value `{other}` for `ell`; known: constant, history"),
    };
    let est = conditional_density_many(&m, lambda.as_deref(), &ell, &ys, t, n_paths, meth, seed.wrapping_add(1))?;
    let mut body = csv_header(m.dim);
    body.push('\n');
    for (y, e) in ys.iter().zip(&est) {
        body.line(csv_row(m.hurst, m.drift.name(), lambda.as_deref(), y, t, e));
    }
    out.csv("density.csv", "density", c, &body)?;
    Ok(())
}

pub fn transition(c: &Config, out: &mut Output) -> Result<()> {
    let (m, lambda) = model(c)?;
    let seed = seed(c)?;
    let t = positive(c, "t", 1.0)?;
    let y0 = point(c, "y0", "0", m.dim)?;
    let ys = ys(c, m.dim)?;
    let p = nested_params(c)?;
    let est = transition_density_many(&m, lambda.as_deref(), &y0, &ys, t, &p, seed)?;
    let mut body = csv_header(m.dim);
    body.push('\n');
    for (y, e) in ys.iter().zip(&est) {
        body.line(csv_row(m.hurst, m.drift.name(), lambda.as_deref(), y, t, e));
    }
    out.csv("transition.csv", "density", c, &body)?;
    Ok(())
}

pub fn stationary(c: &Config, out: &mut Output) -> Result<()> {
    let (m, lambda) = model(c)?;
    let seed = seed(c)?;
    let ys = ys(c, m.dim)?;
    let p = stationary_params(c)?;
    let res = stationary_density_many(&m, lambda.as_deref(), &ys, &p, seed)?;
    let mut body = csv_header(m.dim);
    body.push('\n');
    for (y, e) in ys.iter().zip(&res.estimates) {
        body.line(csv_row(m.hurst, m.drift.name(), lambda.as_deref(), y, p.t0, e));
    }
    out.csv("stationary.csv", "density", c, &body)?;
    let mut burn = String::from("t,mean,variance\n");
    for b in &res.burn_in {
        burn.line(format!("{},{},{}", b.t, b.mean, b.variance));
    }
    out.csv("burn_in.csv", "burn_in", c, &burn)?;
    Ok(())
}

pub fn sweep(c: &Config, out: &mut Output) -> Result<()> {
    let (m, _) = model(c)?;
    if !matches!(m.drift.kind, DriftKind::ParametricLinear) {
        bail!("invalid value `{}` for `drift`: the sweep needs parametric_linear", m.drift.name());
    }
    let seed = seed(c)?;
    let lambdas = c.list_or("lambda_grid", "0.8;0.9;1;1.1;1.2")?;
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        bail!("invalid `lambda_grid`: rates must be positive");
    }
    let ys = ys(c, m.dim)?;
    let p = stationary_params(c)?;
    let res = parametric_stationary_sweep(&m, &lambdas, &ys, &p, seed)?;
    let yc: Vec<String> = (1..=m.dim).map(|i| format!("y{i}")).collect();
    let mut body = format!("lambda,{},value,stderr,paired_diff,paired_diff_stderr\n", yc.join(","));
    for (j, l) in lambdas.iter().enumerate() {
        for (k, y) in ys.iter().enumerate() {
            let e = &res.table[j][k];
            let (d, ds) = res.diffs_from_first[j][k];
            body.line(format!("{l},{},{:e},{:e},{:e},{:e}", vec_cells(y), e.value, e.stderr, d, ds));
        }
    }
    out.csv("sweep.csv", "sweep", c, &body)?;
    let mut fd = format!("lambda,{},derivative,stderr\n", yc.join(","));
    for r in &res.fd {
        fd.line(format!("{},{},{:e},{:e}", r.lambda, vec_cells(&r.y), r.derivative, r.stderr));
    }
    out.csv("sweep_fd.csv", "sweep_fd", c, &fd)?;
    Ok(())
}

fn slow_spec(c: &Config) -> Result<SlowSpec> {
    Ok(SlowSpec {
        ax: c.num("slow.ax", -1.0)?,
        ay: c.num("slow.ay", 1.0)?,
        ayy: c.num("slow.ayy", 0.0)?,
        c: c.num("slow.c", 0.0)?,
        g0: c.num("slow.g0", 1.0)?,
        gx: c.num("slow.gx", 0.0)?,
    })
}

const AVERAGING_PRESET: &[(&str, &str)] = &[
    ("drift", "linear"),
    ("hurst", "0.6"),
    ("n_steps", "50"),
    ("n_replicas", "100"),
    ("n_inner", "50"),
    ("t_past", "100"),
];

struct AveragingSetup {
    slow: SlowSpec,
    fast: ModelSpec,
    lambda: Option<Vec<f64>>,
    eps: Vec<f64>,
    params: v::AveragingParams,
}

fn averaging_setup(c: &Config) -> Result<AveragingSetup> {
    let (fast, lambda) = model(c)?;
    let x_grid = parse_range(&c.str_or("x_grid", "-5,5,41")).context("field `x_grid`")?;
    let y_grid = parse_range(&c.str_or("y_grid", "-6,6,49")).context("field `y_grid`")?;
    let params = v::AveragingParams {
        horizon: positive(c, "horizon", 1.0)?,
        dt: positive(c, "dt", 0.001)?,
        n_realizations: count(c, "n_realizations", 100, 2)?,
        x0: c.num("x0", 0.5)?,
        y0: c.num("fast_y0", 1.0)?,
        slow_hurst: c.num("slow_hurst", 0.75)?,
        alphas: c.list_or("alphas", "0.5;0.6")?,
        x_grid,
        y_grid,
        stationary: stationary_params(c)?,
    };
    Ok(AveragingSetup { slow: slow_spec(c)?, fast, lambda, eps: c.list_or("eps_list", "1;0.1;0.03;0.01")?, params })
}

/// Averaged coefficients and one realization of `X^eps` and the averaged
/// path for every `eps`.
pub fn averaging(c: &mut Config, out: &mut Output) -> Result<()> {
    c.preset(AVERAGING_PRESET);
    let s = averaging_setup(c)?;
    let seed = seed(c)?;
    let realization: u64 = c.num("realization", 0)?;
    fracdens::sde::check_slow_noise_hurst(s.params.slow_hurst)?;
    let seeds = SeedSpace::new(seed);
    let p = &s.params;
    let tab = averaged_coefficients(
        &s.slow,
        &s.fast,
        s.lambda.as_deref(),
        &p.x_grid,
        &p.y_grid,
        &p.stationary,
        seeds.child(Purpose::Direct, 0).seed(),
    )?;
    let n = fracdens::grid::steps_for(p.horizon, p.dt)?;
    let grid = Grid::uniform(p.horizon, n)?;
    let b = fbm_exact(grid, p.slow_hurst, 1, seeds.child(Purpose::SlowNoise, 0).seed(), realization)?.path;
    let bh = fbm_exact(grid, s.fast.hurst, 1, seeds.child(Purpose::FastNoise, 0).seed(), realization)?.path;
    let xbar = averaged_solve(&tab.x, &tab.fbar, &tab.gbar, &b, p.x0)?;
    let xs: Vec<SampledPath> = s
        .eps
        .iter()
        .map(|&e| Ok(slow_fast_solve(&s.slow, &s.fast, s.lambda.as_deref(), e, &b, &bh, p.x0, p.y0)?.0))
        .collect::<Result<_>>()?;
    let mut coef = String::from("x,fbar,gbar\n");
    for k in 0..tab.x.len() {
        coef.line(format!("{},{},{}", tab.x[k], tab.fbar[k], tab.gbar[k]));
    }
    out.csv("averaged_coefficients.csv", "averaged_coefficients", c, &coef)?;
    let cols: Vec<String> = s.eps.iter().map(|e| format!("x_eps_{e}")).collect();
    let mut body = format!("t,xbar,{}\n", cols.join(","));
    for k in 0..grid.n_nodes() {
        let row: Vec<String> = xs.iter().map(|x| x.at(k)[0].to_string()).collect();
        body.line(format!("{},{},{}", grid.node(k), xbar.at(k)[0], row.join(",")));
    }
    out.csv("averaging_paths.csv", "averaging_paths", c, &body)?;
    Ok(())
}

// ------------------------------------------------------------ validate

fn experiment_preset(name: &str) -> &'static [(&'static str, &'static str)] {
    match name {
        "conditional_fou" => &[("hurst", "0.7"), ("y0", "0.5"), ("ys", "-2;-1;0;1;2"), ("n_steps", "1000"), ("n_paths", "10000")],
        "transition_fou" => &[("hurst", "0.7"), ("y0", "0.5"), ("ys", "-2;-1;0;1;2"), ("n_steps", "1000"), ("t_past", "100")],
        "stationary_fou" => &[("hurst", "0.7"), ("n_steps", "200")],
        "gaussian_bounds" => &[("drift", "linear"), ("hurst", "0.7")],
        "nonstationary_bounds" => &[("drift", "linear"), ("hurst", "0.7")],
        "chapman_kolmogorov" => &[
            ("drift", "linear"),
            ("hurst", "0.5"),
            ("y0", "0.5"),
            ("ys", "-1.5;-0.75;0;0.75;1.5"),
            ("n_outer", "1000"),
            ("n_inner", "100"),
            ("t_past", "100"),
        ],
        "tv_convergence" => &[("drift", "linear"), ("hurst", "0.7")],
        "averaging" => AVERAGING_PRESET,
        _ => &[],
    }
}

fn z_max(c: &Config) -> Result<f64> {
    positive(c, "z_max", 3.0)
}

pub fn run_experiment(name: &str, c: &mut Config) -> Result<ExperimentReport> {
    if !EXPERIMENTS.contains(&name) {
        return Err(v::unknown_experiment(name, EXPERIMENTS).into());
    }
    c.preset(experiment_preset(name));
    let seed = seed(c)?;
    let rate = |c: &Config| positive(c, "drift.rate", 1.0);
    let r = match name {
        "frac_inversion" => v::check_frac_inversion(&v::FracInversionParams {
            alphas: c.list_or("alphas", "0.2;0.5;0.8")?,
            n_steps: c.list_or("n_steps_list", "250;500;1000")?.into_iter().map(|n| n as usize).collect(),
            tol: positive(c, "tol", 5e-3)?,
            min_order: positive(c, "min_order", 1.0)?,
        })?,
        "noise_calibration" => v::check_noise_calibration(
            &v::NoiseCalibrationParams {
                hursts: c.list_or("hursts", "0.25;0.5;0.75")?,
                t_past: positive(c, "t_past", 100.0)?,
                dt: positive(c, "dt", 0.02)?,
                n_draws: count(c, "n_draws", 100_000, 2)?,
                n_exact: count(c, "n_exact", 10_000, 2)?,
                z_max: z_max(c)?,
                ks_p_min: positive(c, "ks_p_min", 0.01)?,
            },
            seed,
        )?,
        "bridge" => v::check_bridge(
            &v::BridgeCheckParams {
                hursts: c.list_or("hursts", "0.3;0.5;0.7")?,
                x: c.num("x", 0.7)?,
                t: positive(c, "t", 1.0)?,
                n_steps: count(c, "n_steps", 200, 2)?,
                n_paths: count(c, "n_paths", 10_000, 2)?,
                rate_steps: c.list_or("rate_steps", "25;50;100;200;400")?.into_iter().map(|n| n as usize).collect(),
                rate_paths: count(c, "rate_paths", 2000, 2)?,
                rate_fraction: positive(c, "rate_fraction", 0.9)?,
                z_max: z_max(c)?,
            },
            seed,
        )?,
        "zero_drift" => v::check_zero_drift(
            &v::ZeroDriftParams {
                hursts: c.list_or("hursts", "0.3;0.5;0.7")?,
                sigma: positive(c, "sigma", 1.0)?,
                t: positive(c, "t", 1.0)?,
                y0: c.num("y0", 0.5)?,
                n_steps: count(c, "n_steps", 100, 2)?,
                n_paths: count(c, "n_paths", 100, 2)?,
                width_sd: positive(c, "width_sd", 10.0)?,
                n_grid: count(c, "n_grid", 4001, 3)?,
                mass_tol: positive(c, "mass_tol", 1e-4)?,
            },
            seed,
        )?,
        "conditional_fou" => v::check_conditional_fou(
            &v::FouConditionalParams {
                hurst: hurst(c)?,
                lambda: rate(c)?,
                sigma: positive(c, "sigma", 1.0)?,
                t: positive(c, "t", 1.0)?,
                y0: c.num("y0", 0.5)?,
                ys: c.list_or("ys", "-2;-1;0;1;2")?,
                n_steps: count(c, "n_steps", 1000, 2)?,
                n_paths: count(c, "n_paths", 10_000, 2)?,
                method: method(c)?,
                z_max: z_max(c)?,
                mode_rel_tol: positive(c, "mode_rel_tol", 0.05)?,
            },
            seed,
        )?,
        "transition_fou" => v::check_transition_fou(
            &v::FouTransitionParams {
                hurst: hurst(c)?,
                lambda: rate(c)?,
                sigma: positive(c, "sigma", 1.0)?,
                t: positive(c, "t", 1.0)?,
                y0: c.num("y0", 0.5)?,
                ys: c.list_or("ys", "-2;-1;0;1;2")?,
                nested: nested_params(c)?,
                z_max: z_max(c)?,
            },
            seed,
        )?,
        "stationary_fou" => v::check_stationary_fou(
            &v::FouStationaryParams {
                hurst: hurst(c)?,
                lambda: rate(c)?,
                ys_sd: c.list_or("ys_sd", "-2;-1;0;1;2")?,
                stationary: stationary_params(c)?,
                z_max: z_max(c)?,
            },
            seed,
        )?,
        "gaussian_bounds" => {
            let (m, lambda) = model(c)?;
            let oracle = match v::fou_rate(&m, lambda.as_deref()) {
                Some(l) => Some(m.sigma[(0, 0)].powi(2) * fou_stationary_scalar(l, m.hurst)?),
                None => None,
            };
            let ys = if c.has("ys") || c.has("y_range") {
                ys(c, m.dim)?
            } else {
                // points in units of the stationary spread
                let scale: f64 = c.num("y_scale", oracle.map_or(1.5, f64::sqrt))?;
                let k = c.list_or("ys_sd", "-3;-2.25;-1.5;-0.75;0;0.75;1.5;2.25;3")?;
                k.iter().map(|k| vec![k * scale; m.dim]).collect()
            };
            let p = v::BoundsParams {
                stationary: stationary_params(c)?,
                slack: positive(c, "slack", 3.0)?,
                c_floor: positive(c, "c_floor", 1e-3)?,
                contraction_samples: count(c, "contraction_samples", 4000, 1)?,
                contraction_radius: positive(c, "contraction_radius", 10.0)?,
                rate_rel_tol: positive(c, "rate_rel_tol", 0.15)?,
            };
            v::check_gaussian_bounds_stationary(&m, lambda.as_deref(), &ys, &p, oracle, seed)?
        }
        "nonstationary_bounds" => {
            let (m, lambda) = model(c)?;
            let y0s = c.points_or("y0s", "-1;0;1")?;
            let y0s: Vec<Vec<f64>> = y0s.into_iter().map(|p| if p.len() == 1 { vec![p[0]; m.dim] } else { p }).collect();
            let p = v::NonstationaryParams {
                n_outer: count(c, "n_outer", 100, 2)?,
                n_inner: count(c, "n_inner", 100, 2)?,
                dt: positive(c, "dt", 0.01)?,
                t_past: non_negative(c, "t_past", 100.0)?,
                method: method(c)?,
                slack: positive(c, "slack", 3.0)?,
                c_floor: positive(c, "c_floor", 1e-3)?,
            };
            v::check_nonstationary_bounds(
                &m,
                lambda.as_deref(),
                &y0s,
                &c.list_or("ts", "0.25;0.5;1")?,
                &c.list_or("us", "-2;-1;0;1;2")?,
                &p,
                seed,
            )?
        }
        "chapman_kolmogorov" => {
            let (m, lambda) = model(c)?;
            let y0 = point(c, "y0", "0.5", m.dim)?;
            let ys = ys(c, m.dim)?;
            let p = v::CkParams {
                n_outer: count(c, "n_outer", 1000, 2)?,
                n_inner: count(c, "n_inner", 100, 2)?,
                dt: positive(c, "dt", 0.01)?,
                t_past: non_negative(c, "t_past", 100.0)?,
                method: method(c)?,
                z_max: z_max(c)?,
            };
            v::check_chapman_kolmogorov(&m, lambda.as_deref(), &y0, positive(c, "t", 0.5)?, positive(c, "s", 0.5)?, &ys, &p, seed)?
        }
        "tv_convergence" => {
            let (m, lambda) = model(c)?;
            let p = v::TvParams {
                n_paths: c.num("n_paths", 0usize)?,
                dt: positive(c, "dt", 0.01)?,
                t_past: non_negative(c, "t_past", 100.0)?,
                bins: count(c, "bins", 256, 2)?,
                width_sd: positive(c, "width_sd", 6.0)?,
            };
            v::check_tv_convergence(&m, lambda.as_deref(), c.num("y0", 2.0)?, &c.list_or("ts", "1;2;4;8")?, &p, seed)?
        }
        "averaging" => {
            let s = averaging_setup(c)?;
            v::check_averaging(&s.slow, &s.fast, s.lambda.as_deref(), &s.eps, &s.params, seed)?
        }
        "parameter_smoothness" => v::check_parameter_smoothness(
            &v::SmoothnessParams {
                hurst: hurst(c)?,
                lambda0: positive(c, "lambda0", 1.0)?,
                fd_step: positive(c, "fd_step", 0.1)?,
                trend_steps: c.list_or("trend_steps", "0.2;0.1;0.05")?,
                y: c.num("y", 0.0)?,
                stationary: stationary_params(c)?,
                z_max: z_max(c)?,
            },
            seed,
        )?,
        _ => unreachable!(),
    };
    Ok(r)
}

/// Run an experiment, write its report and tables; the verdict decides the
/// exit code (0 pass or warn, 1 fail).
pub fn validate(name: &str, c: &mut Config, out: &mut Output) -> Result<i32> {
    let mut r = run_experiment(name, c)?;
    r.name = name.to_string();
    for (k, val) in c.echo() {
        r.inputs.insert(format!("config.{k}"), val);
    }
    let tables = std::mem::take(&mut r.tables);
    for (k, t) in &tables {
        let file = format!("{name}.{k}.csv");
        r.artifacts.push(file.clone());
        out.csv(&file, &format!("{name}.{k}"), c, &t.to_csv())?;
    }
    r.tables = tables;
    out.json(&format!("{name}.json"), &r)?;
    println!("{}", r.summary_line());
    for n in &r.notes {
        println!("  {n}");
    }
    Ok(if r.verdict == Verdict::Fail { 1 } else { 0 })
}
