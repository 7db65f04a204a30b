//! Run configuration. Values come from built-in defaults, then the TOML file,
//! then command-line flags, each layer overriding the previous one.

use std::path::{Path, PathBuf};

use critdrift_core::lab::DEFAULT_SEED;
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub domain: String,
    pub fields: Vec<String>,
    pub exponents: Exponents,
    pub grid: GridParams,
    pub solver: SolverParams,
    pub lab: LabParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    /// Second Lorentz index; absent means `q = ∞`.
    pub q: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub h: f64,
    /// Spacings of a refinement sweep; empty means `[h]`.
    pub refinements: Vec<f64>,
    /// Radial spacings for one-dimensional probes.
    pub radial: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// `primal` or `dual`.
    pub kind: String,
    /// Field spec of the volume data, or `zero`.
    pub rhs: String,
    pub steps: usize,
    pub sigma: bool,
    pub upwind_blend: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabParams {
    /// Small-scale radius, ladder radii or lattice scales depending on the experiment.
    pub radii: Vec<f64>,
    pub m_values: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub scales: Vec<f64>,
    pub centers: Vec<[f64; 3]>,
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: "norm".into(),
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("critdrift-out"),
            domain: "ball:R=1".into(),
            fields: vec![],
            exponents: Exponents::default(),
            grid: GridParams::default(),
            solver: SolverParams::default(),
            lab: LabParams::default(),
        }
    }
}

impl Default for Exponents {
    fn default() -> Self {
        Exponents { p: 3.0, q: None }
    }
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams { h: 1.0 / 16.0, refinements: vec![], radial: vec![] }
    }
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { kind: "primal".into(), rhs: "const:v=1".into(), steps: 10, sigma: false, upwind_blend: true }
    }
}

impl Default for LabParams {
    fn default() -> Self {
        LabParams { radii: vec![], m_values: vec![], lambdas: vec![1.0], scales: vec![2.0, 4.0], centers: vec![], alpha: 0.5 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// The refinement sweep, defaulting to the single spacing `h`.
    pub fn spacings(&self) -> Vec<f64> {
        if self.grid.refinements.is_empty() {
            vec![self.grid.h]
        } else {
            self.grid.refinements.clone()
        }
    }
}
