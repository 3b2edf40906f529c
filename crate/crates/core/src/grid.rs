//! Uniform time grids and vector-valued functions sampled on them.

use std::io::Write;

use crate::error::{Error, Result};

/// Uniform grid `t0, t0 + dt, ..., t0 + n_steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    t0: f64,
    dt: f64,
    n_steps: usize,
}

impl Grid {
    pub fn new(t0: f64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Grid(format!("dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::Grid("at least one step required".into()));
        }
        if !t0.is_finite() {
            return Err(Error::Grid(format!("t0 must be finite, got {t0}")));
        }
        Ok(Self { t0, dt, n_steps })
    }

    /// Grid on `[0, horizon]` with step `dt`; `dt` must divide `horizon`.
    pub fn on_interval(horizon: f64, dt: f64) -> Result<Self> {
        let n = steps_for(horizon, dt)?;
        Self::new(0.0, dt, n)
    }

    /// Grid on `[0, horizon]` with `n_steps` equal steps.
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::Grid("at least one step required".into()));
        }
        Self::new(0.0, horizon / n_steps as f64, n_steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn node(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.node(self.n_steps)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Same step and node count, within a relative tolerance on `dt` and `t0`.
    pub fn compatible(&self, other: &Grid) -> bool {
        self.n_steps == other.n_steps
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-12 * (1.0 + self.t0.abs())
    }

    pub fn starts_at_zero(&self) -> bool {
        self.t0.abs() <= 1e-12 * self.dt
    }
}

/// Number of steps of size `dt` covering `span`, erroring unless `dt` divides it.
pub fn steps_for(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("dt must be positive, got {dt}")));
    }
    if span < 0.0 {
        return Err(Error::Grid(format!("negative span {span}")));
    }
    let r = span / dt;
    let n = r.round();
    if (r - n).abs() > 1e-8 * r.max(1.0) {
        return Err(Error::Grid(format!("dt = {dt} does not divide {span}")));
    }
    Ok(n as usize)
}

/// An `R^dim`-valued function on a grid, stored node-major
/// (`values[k * dim + i]` is component `i` at node `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
}

/// The fractional-calculus modules speak of sampled functions; same type.
pub type SampledFunction = SampledPath;

impl SampledPath {
    pub fn new(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty);
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(Error::GridMismatch(format!(
                "expected {} values for {} nodes x {} components, got {}",
                grid.n_nodes() * dim,
                grid.n_nodes(),
                dim,
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self { grid, dim, values: vec![0.0; grid.n_nodes() * dim] }
    }

    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        let dim = value.len();
        let mut values = Vec::with_capacity(grid.n_nodes() * dim);
        for _ in 0..grid.n_nodes() {
            values.extend_from_slice(value);
        }
        Self { grid, dim, values }
    }

    /// Scalar path from a closure of time.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, dim: 1, values }
    }

    /// Build from per-component series of equal length `grid.n_nodes()`.
    pub fn from_components(grid: Grid, comps: &[Vec<f64>]) -> Result<Self> {
        let dim = comps.len();
        if dim == 0 {
            return Err(Error::Empty);
        }
        let nn = grid.n_nodes();
        if comps.iter().any(|c| c.len() != nn) {
            return Err(Error::GridMismatch("component length differs from node count".into()));
        }
        let mut values = vec![0.0; nn * dim];
        for (i, c) in comps.iter().enumerate() {
            for (k, v) in c.iter().enumerate() {
                values[k * dim + i] = *v;
            }
        }
        Ok(Self { grid, dim, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.at(self.grid.n_steps())
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.dim).copied().collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Componentwise `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &SampledPath, b: f64) -> Result<SampledPath> {
        self.check_same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(SampledPath { grid: self.grid, dim: self.dim, values })
    }

    /// CSV with header `t,{prefix}1,...,{prefix}n` and one row per node.
    pub fn write_csv<W: Write>(&self, out: &mut W, prefix: &str) -> std::io::Result<()> {
        write!(out, "t")?;
        for i in 1..=self.dim {
            write!(out, ",{prefix}{i}")?;
        }
        writeln!(out)?;
        for k in 0..self.grid.n_nodes() {
            write!(out, "{}", self.grid.node(k))?;
            for v in self.at(k) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &SampledPath) -> Result<()> {
        if self.dim != other.dim || !self.grid.compatible(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "paths differ in shape ({} x {} vs {} x {})",
                self.grid.n_nodes(),
                self.dim,
                other.grid.n_nodes(),
                other.dim
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(Grid::new(0.0, 0.0, 3).is_err());
        assert!(Grid::new(0.0, -1.0, 3).is_err());
        assert!(Grid::new(0.0, 0.1, 0).is_err());
        let g = Grid::on_interval(1.0, 0.25).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.node(4), 1.0);
        assert!(Grid::on_interval(1.0, 0.3).is_err());
    }

    #[test]
    fn path_layout() {
        let g = Grid::uniform(1.0, 2).unwrap();
        let p = SampledPath::from_components(g, &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(p.at(1), &[2.0, 5.0]);
        assert_eq!(p.component(1), vec![4.0, 5.0, 6.0]);
        assert!(SampledPath::new(g, 1, vec![0.0; 2]).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = Grid::uniform(1.0, 2).unwrap();
        let p = SampledPath::from_fn(g, |t| 2.0 * t);
        let mut buf = Vec::new();
        p.write_csv(&mut buf, "y").unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,y1\n0,0\n0.5,1\n1,2\n");
    }
}
