//! `key = value` run configuration. Flags override the file; `run.meta` is written in the
//! same format, so it can be fed back with `--config`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use signflip_core::eig;
use signflip_core::experiments::DEFAULT_BRACKET;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub delta: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub grid_points: usize,
    pub k: usize,
    pub n_radial: usize,
    pub n_angular_minus: usize,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: u64,
    pub window: f64,
    pub n: u32,
    pub n_max: u32,
    pub bracket: f64,
    pub branches: Vec<i64>,
    pub dense: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma_plus: 1.0,
            sigma_minus: -0.9999,
            delta: 0.5,
            delta_min: (-2.5f64).exp(),
            delta_max: (-0.1f64).exp(),
            grid_points: 400,
            k: 10,
            n_radial: 32,
            n_angular_minus: 16,
            tol: eig::DEFAULT_TOL,
            out: None,
            threads: None,
            seed: eig::DEFAULT_SEED,
            window: 2.0,
            n: 3,
            n_max: 3,
            bracket: DEFAULT_BRACKET,
            branches: vec![-1, 0],
            dense: false,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("invalid value for {key}: {value:?}")))
}

fn parse_branches(value: &str) -> Result<Vec<i64>, ConfigError> {
    value
        .split(',')
        .map(|s| parse::<i64>("branches", s.trim()))
        .collect()
}

impl RunConfig {
    /// Set one key; `-` and `_` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "sigma_plus" => self.sigma_plus = parse(&key, value)?,
            "sigma_minus" => self.sigma_minus = parse(&key, value)?,
            "delta" => self.delta = parse(&key, value)?,
            "delta_min" => self.delta_min = parse(&key, value)?,
            "delta_max" => self.delta_max = parse(&key, value)?,
            "grid_points" => self.grid_points = parse(&key, value)?,
            "k" => self.k = parse(&key, value)?,
            "n_radial" => self.n_radial = parse(&key, value)?,
            "n_angular_minus" => self.n_angular_minus = parse(&key, value)?,
            "tol" => self.tol = parse(&key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "threads" => self.threads = Some(parse(&key, value)?),
            "seed" => self.seed = parse(&key, value)?,
            "window" => self.window = parse(&key, value)?,
            "n" => self.n = parse(&key, value)?,
            "n_max" => self.n_max = parse(&key, value)?,
            "bracket" => self.bracket = parse(&key, value)?,
            "branches" => self.branches = parse_branches(value)?,
            "dense" => self.dense = parse(&key, value)?,
            _ => return Err(ConfigError(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a config file on top of `self`.
    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.load_str(&text)
    }

    pub fn load_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError(format!("config line {}: expected `key = value`", no + 1)));
            };
            self.set(k, v)
                .map_err(|e| ConfigError(format!("config line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    /// Every key, one `key = value` line each, floats at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f = |v: f64| format!("{v:.16e}");
        let _ = writeln!(s, "sigma_plus = {}", f(self.sigma_plus));
        let _ = writeln!(s, "sigma_minus = {}", f(self.sigma_minus));
        let _ = writeln!(s, "delta = {}", f(self.delta));
        let _ = writeln!(s, "delta_min = {}", f(self.delta_min));
        let _ = writeln!(s, "delta_max = {}", f(self.delta_max));
        let _ = writeln!(s, "grid_points = {}", self.grid_points);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "n_radial = {}", self.n_radial);
        let _ = writeln!(s, "n_angular_minus = {}", self.n_angular_minus);
        let _ = writeln!(s, "tol = {}", f(self.tol));
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        if let Some(t) = self.threads {
            let _ = writeln!(s, "threads = {t}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "window = {}", f(self.window));
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "bracket = {}", f(self.bracket));
        let branches: Vec<String> = self.branches.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "branches = {}", branches.join(","));
        let _ = writeln!(s, "dense = {}", self.dense);
        s
    }
}
