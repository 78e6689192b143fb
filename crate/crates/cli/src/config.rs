//! Experiment configuration: a JSON file plus command-line overrides.

use crate::CliError;
use crkit::geometry::CRManifold;
use crkit::models::deformation::Recipe;
use crkit::models::{heisenberg, nilmanifold, sphere, SphereOptions};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Invariants,
    ConformalCheck,
    Yamabe,
    Green,
    Deform,
    Norms,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Invariants => "invariants",
            Task::ConformalCheck => "conformal-check",
            Task::Yamabe => "yamabe",
            Task::Green => "green",
            Task::Deform => "deform",
            Task::Norms => "norms",
        }
    }
}

/// Which model manifold to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Heisenberg {
        #[serde(default = "one")]
        n: usize,
        #[serde(default = "one_f")]
        half_width: f64,
        #[serde(default = "one_f")]
        t_half_width: f64,
        #[serde(default = "heisenberg_grid")]
        grid: Vec<usize>,
    },
    Nilmanifold {
        #[serde(default = "one")]
        n: usize,
        #[serde(default = "one_f")]
        scale: f64,
        #[serde(default = "nil_grid")]
        grid: Vec<usize>,
    },
    /// The round three-sphere in Hopf coordinates.
    Sphere {
        #[serde(default = "sphere_grid")]
        grid: Vec<usize>,
    },
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn heisenberg_grid() -> Vec<usize> {
    vec![9, 9, 9]
}
fn nil_grid() -> Vec<usize> {
    vec![16, 16, 16]
}
fn sphere_grid() -> Vec<usize> {
    vec![48, 33, 33]
}

impl ModelConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ModelConfig::Heisenberg { .. } => "heisenberg",
            ModelConfig::Nilmanifold { .. } => "nilmanifold",
            ModelConfig::Sphere { .. } => "sphere",
        }
    }

    /// Flat models have vanishing curvature and torsion.
    pub fn is_flat(&self) -> bool {
        !matches!(self, ModelConfig::Sphere { .. })
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self, ModelConfig::Heisenberg { .. })
    }

    pub fn set_grid(&mut self, shape: Vec<usize>) {
        match self {
            ModelConfig::Heisenberg { grid, .. } | ModelConfig::Nilmanifold { grid, .. } | ModelConfig::Sphere { grid } => *grid = shape,
        }
    }

    pub fn build(&self) -> Result<CRManifold, CliError> {
        Ok(match self {
            ModelConfig::Heisenberg { n, half_width, t_half_width, grid } => heisenberg(*n, *half_width, *t_half_width, grid)?,
            ModelConfig::Nilmanifold { n, scale, grid } => nilmanifold(*n, *scale, grid)?,
            ModelConfig::Sphere { grid } => {
                let shape: [usize; 3] = grid.as_slice().try_into().map_err(|_| CliError::Config("sphere grid needs 3 axes".into()))?;
                sphere(1, &SphereOptions { hopf_shape: shape, ..Default::default() })?.quadrature()?.clone()
            }
        })
    }
}

/// How to choose the conformal factor `f` in `θ̃ = e^{2f}θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldConfig {
    Zero,
    Constant { value: f64 },
    /// Seeded random trigonometric polynomials.
    Trig {
        #[serde(default = "three")]
        terms: usize,
        #[serde(default = "two")]
        max_k: i32,
        #[serde(default = "bound")]
        bound: f64,
    },
}

fn three() -> usize {
    3
}
fn two() -> i32 {
    2
}
fn bound() -> f64 {
    0.3
}

/// Task parameters; each task reads the fields it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    /// Sample points (nodes) for pointwise checks.
    pub points: Option<usize>,
    /// Conformal factor for `conformal-check`.
    pub field: Option<FieldConfig>,
    /// Number of seeded fields for `conformal-check`.
    pub fields: Option<usize>,
    /// Finite-difference steps `[h, h/2]` for the contraction check.
    pub fd_steps: Option<Vec<f64>>,
    /// `random` (default) or `constant` initial density for `yamabe`.
    pub init: Option<String>,
    /// Pole grid index for `green`.
    pub pole: Option<Vec<usize>>,
    pub recipe: Option<Recipe>,
    pub schedule: Option<Vec<f64>>,
    /// Battery size for the subelliptic probe.
    pub battery: Option<usize>,
    pub p: Option<f64>,
    pub k: Option<usize>,
    pub s: Option<Vec<f64>>,
    pub pair_cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub task: Task,
    #[serde(default)]
    pub params: TaskParams,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the task's primary tolerance.
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_out() -> PathBuf {
    PathBuf::from("crkit-out")
}

impl ExperimentConfig {
    /// A ready-to-run configuration for `task` on its natural model.
    pub fn default_for(task: Task) -> ExperimentConfig {
        let model = match task {
            Task::Green => ModelConfig::Sphere { grid: sphere_grid() },
            Task::Yamabe => ModelConfig::Nilmanifold { n: 1, scale: 1.0, grid: vec![32, 32, 32] },
            _ => ModelConfig::Nilmanifold { n: 1, scale: 1.0, grid: nil_grid() },
        };
        ExperimentConfig { model, task, params: TaskParams::default(), out: default_out(), seed: 0, threshold: None }
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(t) = self.threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("threshold {t} must be finite and nonnegative")));
            }
        }
        let grid = match &self.model {
            ModelConfig::Heisenberg { grid, .. } | ModelConfig::Nilmanifold { grid, .. } | ModelConfig::Sphere { grid } => grid,
        };
        if grid.iter().any(|&k| k < 2) {
            return Err(CliError::Config(format!("grid {grid:?} needs at least 2 nodes per axis")));
        }
        Ok(())
    }
}

/// Parses `NxNxN` (any number of axes).
pub fn parse_grid(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>().map_err(|_| CliError::Config(format!("bad grid '{s}', expected NxNxN"))))
        .collect()
}
