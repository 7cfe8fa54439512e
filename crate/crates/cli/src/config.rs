//! Run configuration.
//!
//! The config file is flat `key = value` text. Blank lines and text after
//! `#` are ignored; list values are comma separated. Unknown keys are an
//! error. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::Serialize;

use secular3bp::averaging::QuadratureGrid;
use secular3bp::elements::Normalization;
use secular3bp::potential::KernelKind;

use crate::CliError;

/// The figure levels `R₀ … R₇` for `a = 0.1`, `e_J = 0.3`.
pub const DEFAULT_LEVELS: [f64; 8] =
    [1.002872548, 1.002872843, 1.002873713, 1.002875125, 1.002878129, 1.002879903, 1.002881952, 1.002885001];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub a: f64,
    pub e_j: f64,
    pub grid_e: usize,
    pub grid_ej: usize,
    pub levels: Vec<f64>,
    /// Shell inclinations for the apsidal portrait and the oracle audit.
    pub inclinations: Vec<f64>,
    /// Inclination at which portrait quadratic forms are evaluated.
    pub portrait_inclination: f64,
    /// `(Θ, e)` samples per level set in the general-inclination portraits.
    pub portrait_samples: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Kernel used by the shell oracle.
    pub kernel: KernelKind,
    /// Shell normalization for oracle recovery and portraits.
    pub normalization: Normalization,
    pub sweep_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            a: 0.1,
            e_j: 0.3,
            grid_e: 256,
            grid_ej: 256,
            levels: DEFAULT_LEVELS.to_vec(),
            inclinations: vec![0.4, 0.2, 0.1, 0.05],
            portrait_inclination: 0.5,
            portrait_samples: 8,
            out_dir: PathBuf::from("out"),
            seed: 1,
            kernel: KernelKind::LegendreTruncated,
            normalization: Normalization::Delaunay,
            sweep_points: 10_000,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.trim().parse().map_err(|_| CliError::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim().parse().map_err(|_| CliError::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(key, s)).collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "a" => self.a = parse_f64(key, value)?,
            "e_j" => self.e_j = parse_f64(key, value)?,
            "grid_e" => self.grid_e = parse_usize(key, value)?,
            "grid_ej" => self.grid_ej = parse_usize(key, value)?,
            "levels" => self.levels = parse_list(key, value)?,
            "inclinations" => self.inclinations = parse_list(key, value)?,
            "portrait_inclination" => self.portrait_inclination = parse_f64(key, value)?,
            "portrait_samples" => self.portrait_samples = parse_usize(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "seed" => {
                self.seed = value.trim().parse().map_err(|_| CliError::Config(format!("seed: '{value}' is not an integer")))?
            }
            "kernel" => self.kernel = value.parse().map_err(|e| CliError::Config(format!("kernel: {e}")))?,
            "normalization" => {
                self.normalization = value.parse().map_err(|e| CliError::Config(format!("normalization: {e}")))?
            }
            "sweep_points" => self.sweep_points = parse_usize(key, value)?,
            other => return Err(CliError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    pub fn grid(&self) -> QuadratureGrid {
        QuadratureGrid::new(self.grid_e, self.grid_ej).expect("validated")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.a > 0.0 && self.a < 1.0) {
            return bad(format!("a = {} must lie in (0, 1)", self.a));
        }
        if !(0.0..1.0).contains(&self.e_j) {
            return bad(format!("e_j = {} must lie in [0, 1)", self.e_j));
        }
        if let Err(e) = QuadratureGrid::new(self.grid_e, self.grid_ej) {
            return bad(e.to_string());
        }
        if self.levels.iter().any(|l| !l.is_finite()) {
            return bad("levels must be finite".into());
        }
        let prograde = |i: f64| i > 0.0 && i < std::f64::consts::FRAC_PI_2;
        if self.inclinations.len() < 2 || !self.inclinations.iter().all(|&i| prograde(i)) {
            return bad("inclinations needs at least two values in (0, π/2)".into());
        }
        if !prograde(self.portrait_inclination) {
            return bad(format!("portrait_inclination = {} must lie in (0, π/2)", self.portrait_inclination));
        }
        if self.portrait_samples == 0 {
            return bad("portrait_samples must be positive".into());
        }
        if self.sweep_points == 0 {
            return bad("sweep_points must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_grammar() {
        let cfg = RunConfig::parse(
            "# comment\n a = 0.05 \n\nlevels = 1.0, 1.1,\nkernel = exact # trailing\nnormalization = paper\nout_dir = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(cfg.a, 0.05);
        assert_eq!(cfg.levels, vec![1.0, 1.1]);
        assert_eq!(cfg.kernel, KernelKind::Exact);
        assert_eq!(cfg.normalization, Normalization::Paper);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.e_j, 0.3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("a 0.1").is_err());
        assert!(RunConfig::parse("b = 1").is_err());
        assert!(RunConfig::parse("a = x").is_err());
        let cfg = RunConfig::parse("a = 1.5").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse("grid_e = 7").unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
