use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::descent::SolverOptions;
use crate::error::{invalid, Error, Result};
use crate::eps::Sample;
use crate::exact::Coef;
use crate::integrand::BorelVariant;

/// Grid caps: cell grids and Ω grids above these are refused.
pub const MAX_CELLS_1D: usize = 1 << 16;
pub const MAX_CELLS_2D: usize = 1024;
pub const MAX_ZGRID_COUNT: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cell,
    Iterate,
    Joint,
    Eps,
    Gamma,
    Counterexample,
    Young,
    Audit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGridConfig {
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub cells: usize,
    #[serde(default)]
    pub z: Option<Vec<f64>>,
    #[serde(default)]
    pub sample: Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsConfig {
    pub y_bins: usize,
    pub z_bins: usize,
    pub z_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub count: usize,
    pub z_radius: f64,
}

/// A run description. Every field is optional in the file; command-line
/// flags override the integrand path, output directory and counterexample
/// settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub integrand: Option<PathBuf>,
    /// macroscopic point at which `x` is frozen
    pub x: Option<Vec<f64>>,
    /// gradients for cell and joint solves and table queries
    pub z: Option<Vec<Vec<f64>>>,
    /// cells per axis of the grid of each fast variable, slowest first
    pub grids: Option<Vec<usize>>,
    pub zgrid: Option<ZGridConfig>,
    pub kappa: Option<f64>,
    pub domain: Option<DomainConfig>,
    /// exponents of `ρ_k = ε^{α_k}`; defaults to `1, 2, …, n`
    pub scales: Option<Vec<Coef>>,
    /// `ε = 1/h` for each entry
    pub eps_inverse: Option<Vec<u64>>,
    pub eps: Option<Vec<f64>>,
    /// midpoint x-samples per axis for x-dependent references
    pub x_samples: Option<usize>,
    pub variant: Option<BorelVariant>,
    pub h: Option<Vec<i64>>,
    pub p: Option<f64>,
    pub m_min: Option<u64>,
    pub bins: Option<BinsConfig>,
    pub sampling: Option<SamplingConfig>,
    pub solver: Option<SolverOptions>,
    pub output: Option<PathBuf>,
    /// recorded in the manifest; no computation here is randomized
    pub seed: Option<u64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::parse(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn integrand_path(&self) -> Result<PathBuf> {
        let p = self.integrand.as_ref().ok_or_else(|| Error::Invalid("no integrand file given".into()))?;
        let p = self.resolve(p);
        if !p.exists() {
            return invalid(format!("integrand file {} does not exist", p.display()));
        }
        Ok(p)
    }

    pub fn solver(&self) -> Result<SolverOptions> {
        let s = self.solver.unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn check_caps(&self, dim: usize) -> Result<()> {
        let cap = if dim == 1 { MAX_CELLS_1D } else { MAX_CELLS_2D };
        let mut sizes: Vec<usize> = self.grids.clone().unwrap_or_default();
        if let Some(d) = &self.domain {
            sizes.push(d.cells);
        }
        if let Some(n) = sizes.iter().find(|n| **n > cap) {
            return invalid(format!("grid size {n} exceeds the cap {cap} for dimension {dim}"));
        }
        if let Some(z) = &self.zgrid {
            if z.count > MAX_ZGRID_COUNT {
                return invalid(format!("z-grid count {} exceeds the cap {MAX_ZGRID_COUNT}", z.count));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected_with_position() {
        let e = RunConfig::parse("{\n  \"grids\": [8],\n  \"gird\": 3\n}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn full_config_parses() {
        let c = RunConfig::parse(
            r#"{"command": "gamma", "integrand": "f.json", "grids": [16, 16], "zgrid": {"radius": 1, "count": 41},
                "domain": {"cells": 2048, "z": [1.0]}, "eps_inverse": [4, 8], "scales": [1, 2],
                "solver": {"tol_grad": 1e-9}, "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(c.command, Some(Command::Gamma));
        assert_eq!(c.solver().unwrap().tol_grad, 1e-9);
        assert!(c.check_caps(1).is_ok());
        assert!(c.check_caps(2).is_err());
    }
}
