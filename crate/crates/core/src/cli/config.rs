//! JSON run configuration, schema version 1.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::grid::{build_domain, GridDomain, Point, Shape};
use crate::partition::PartitionProblem;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub domain: DomainConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    /// Check names for `verify`.
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// `disk`, `rectangle`, `square`, `l_shape` or `disk_minus_ball`.
    pub shape: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub k: usize,
    pub r: f64,
    pub r_values: Option<Vec<f64>>,
    pub seed: u64,
    pub sites: Option<Vec<Point>>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig { k: 2, r: 0.0, r_values: None, seed: 0, sites: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceConfig {
    pub eig: f64,
    pub outer: f64,
    pub max_outer: usize,
    pub support_threshold: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig { eig: 1e-8, outer: 1e-6, max_outer: 200, support_threshold: 1e-3 }
    }
}

/// Parameters of the `verify` checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Dimension of the 1-D reference checks (`cap`, `psi`, `gamma`, `radial`).
    pub dim: usize,
    pub r_bar: f64,
    pub samples: usize,
    /// Ball center of the lattice checks; each check has its own default.
    pub center: Option<Point>,
    /// Random fields per radius in the `poincare` check.
    pub poincare_fields: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { dim: 3, r_bar: 1.0, samples: 1024, center: None, poincare_fields: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths resolve against the directory of the config file.
    pub dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(SegError::invalid(format!("unsupported schema {} (expected {SCHEMA_VERSION})", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn shape(&self) -> Result<Shape> {
        let p = &self.domain.params;
        let need = |n: usize| -> Result<()> {
            if p.len() == n {
                Ok(())
            } else {
                Err(SegError::invalid(format!("shape {} takes {n} parameters, got {}", self.domain.shape, p.len())))
            }
        };
        match self.domain.shape.as_str() {
            "disk" => need(1).map(|_| Shape::Disk { radius: p[0] }),
            "rectangle" => need(2).map(|_| Shape::Rectangle { a: p[0], b: p[1] }),
            "square" => need(1).map(|_| Shape::Square { a: p[0] }),
            "l_shape" => need(1).map(|_| Shape::LShape { a: p[0] }),
            "disk_minus_ball" => need(2).map(|_| Shape::DiskMinusBall { radius: p[0], inner: p[1] }),
            other => Err(SegError::invalid(format!("unknown shape {other:?}"))),
        }
    }

    pub fn build_domain(&self) -> Result<Arc<GridDomain>> {
        build_domain(self.shape()?, self.grid.n)
    }

    pub fn problem(&self, domain: &Arc<GridDomain>) -> PartitionProblem {
        let mut p = PartitionProblem::new(domain, self.problem.k, self.problem.r);
        p.seed = self.problem.seed;
        p.tol_eig = self.tolerances.eig;
        p.tol_outer = self.tolerances.outer;
        p.max_outer = self.tolerances.max_outer;
        p.support_threshold = self.tolerances.support_threshold;
        p.sites = self.problem.sites.clone();
        p
    }

    /// Output directory, resolved against `base` when relative.
    pub fn output_dir(&self, base: &Path) -> PathBuf {
        if self.output.dir.is_absolute() {
            self.output.dir.clone()
        } else {
            base.join(&self.output.dir)
        }
    }
}
