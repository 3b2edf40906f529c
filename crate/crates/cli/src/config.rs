//! Flat `key = value` configuration with command-line overrides.
//!
//! Every key a command reads is recorded together with the value it
//! resolved to (including defaults), so the echo written next to the
//! outputs reproduces the run when fed back through `--config`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    defaults: BTreeMap<String, String>,
    used: RefCell<BTreeMap<String, String>>,
}

fn parse_line(line: &str) -> Result<Option<(String, String)>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("expected `key = value`, got `{line}`"))?;
    let k = k.trim();
    if k.is_empty() {
        bail!("empty key in `{line}`");
    }
    Ok(Some((k.to_string(), v.trim().to_string())))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (i, line) in text.lines().enumerate() {
            if let Some((k, v)) = parse_line(line).with_context(|| format!("config line {}", i + 1))? {
                c.values.insert(k, v);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Apply a `key=value` override.
    pub fn set(&mut self, kv: &str) -> Result<()> {
        let (k, v) = parse_line(kv)?.ok_or_else(|| anyhow!("empty override"))?;
        self.values.insert(k, v);
        Ok(())
    }

    pub fn insert(&mut self, k: &str, v: impl ToString) {
        self.values.insert(k.to_string(), v.to_string());
    }

    /// Defaults of a preset; explicit values still win.
    pub fn preset(&mut self, pairs: &[(&str, &str)]) {
        for (k, v) in pairs {
            self.defaults.insert(k.to_string(), v.to_string());
        }
    }

    fn raw(&self, key: &str, default: Option<&str>) -> Option<String> {
        let v = self
            .values
            .get(key)
            .or_else(|| self.defaults.get(key))
            .cloned()
            .or_else(|| default.map(str::to_string))?;
        self.used.borrow_mut().insert(key.to_string(), v.clone());
        Some(v)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key) || self.defaults.contains_key(key)
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.raw(key, Some(default)).unwrap()
    }

    pub fn req_str(&self, key: &str) -> Result<String> {
        self.raw(key, None).ok_or_else(|| anyhow!("missing required field `{key}`"))
    }

    /// Typed value with the default recorded in the echo.
    pub fn num<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key, Some(&default.to_string())).unwrap();
        v.parse().map_err(|e| anyhow!("invalid value `{v}` for `{key}`: {e}"))
    }

    /// Comma-separated reals.
    pub fn vec_or(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        parse_vec(&self.str_or(key, default)).with_context(|| format!("field `{key}`"))
    }

    /// `;`-separated list of reals.
    pub fn list_or(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        parse_list(&self.str_or(key, default)).with_context(|| format!("field `{key}`"))
    }

    /// `;`-separated points with `,`-separated components.
    pub fn points(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        let s = self.req_str(key)?;
        s.split(';').map(parse_vec).collect::<Result<_>>().with_context(|| format!("field `{key}`"))
    }

    pub fn points_or(&self, key: &str, default: &str) -> Result<Vec<Vec<f64>>> {
        let s = self.str_or(key, default);
        s.split(';').map(parse_vec).collect::<Result<_>>().with_context(|| format!("field `{key}`"))
    }

    /// Resolved configuration, sorted by key.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.used.borrow().clone()
    }

    /// Keys set explicitly but never read.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains_key(*k)).cloned().collect()
    }

    pub fn echo_text(&self) -> String {
        self.echo().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn parse_vec(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        bail!("empty list");
    }
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("`{}`: {e}", p.trim()))).collect()
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        bail!("empty list");
    }
    s.split(';').map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("`{}`: {e}", p.trim()))).collect()
}

/// `lo,hi,n` to `n` equally spaced values.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let v = parse_vec(s)?;
    if v.len() != 3 || v[2] < 2.0 || v[2].fract() != 0.0 || !(v[1] > v[0]) {
        bail!("expected `lo,hi,n` with lo < hi and integer n >= 2, got `{s}`");
    }
    let n = v[2] as usize;
    Ok((0..n).map(|k| v[0] + (v[1] - v[0]) * k as f64 / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut c = Config::parse("# comment\nhurst = 0.3\n\nys = -1; 0 ;1\n").unwrap();
        c.set("hurst=0.4").unwrap();
        assert_eq!(c.num("hurst", 0.5).unwrap(), 0.4);
        assert_eq!(c.num("n_steps", 100usize).unwrap(), 100);
        assert_eq!(c.points("ys").unwrap(), vec![vec![-1.0], vec![0.0], vec![1.0]]);
        let e = c.echo();
        assert_eq!(e["hurst"], "0.4");
        assert_eq!(e["n_steps"], "100");
        assert!(c.unused().is_empty());
    }

    #[test]
    fn preset_below_explicit() {
        let mut c = Config::parse("t = 2").unwrap();
        c.preset(&[("t", "1"), ("s", "0.5")]);
        assert_eq!(c.num("t", 0.0).unwrap(), 2.0);
        assert_eq!(c.num("s", 0.0).unwrap(), 0.5);
    }

    #[test]
    fn errors_name_the_field() {
        let c = Config::parse("hurst = abc").unwrap();
        let e = c.num("hurst", 0.5f64).unwrap_err().to_string();
        assert!(e.contains("hurst"), "{e}");
        assert!(c.req_str("ys").unwrap_err().to_string().contains("ys"));
        assert!(Config::parse("novalue").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-1,1,3").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(parse_range("1,0,3").is_err());
    }
}
