//! TOML run configuration.
//!
//! ```toml
//! q = 1.5
//! statistics = "fermi"
//! deterministic_reduction = true
//!
//! [levels]
//! count = 8
//! spacing = 1.0
//! degeneracy = 1.0            # or a list, one entry per level
//!
//! [initial]
//! kind = "random"             # or kind = "explicit", occupations = [...]
//! seed = 7
//! n_target = 3.0
//!
//! [kernel]
//! kind = "random"             # or kind = "constant", rate = 1.0
//! seed = 11
//! min = 0.5
//! max = 1.5
//!
//! [integrator]
//! dt = 0.01
//! t_end = 200.0
//! sample_every = 10
//!
//! [output]
//! prefix = "out/fermi-q15"
//!
//! [equilibrium]               # optional; defaults to the initial state's N and E
//! n_target = 3.0
//! e_target = 6.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, Reduction};
use crate::entropy::PhiGrid;
use crate::error::{Error, Result};
use crate::gas::{moments, random_state_with_margin, GasState, LevelGrid, Statistics, DEFAULT_INTERIOR_MARGIN};
use crate::kernel::{build_kernel, CollisionKernel, RateSpec};
use crate::qmath::QIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub q: f64,
    pub statistics: Statistics,
    #[serde(default = "default_true")]
    pub deterministic_reduction: bool,
    pub levels: LevelsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumTargets>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsConfig {
    pub count: usize,
    pub spacing: f64,
    pub degeneracy: Degeneracy,
    /// Integer lattice positions; defaults to `0, 1, ..., count - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Degeneracy {
    Constant(f64),
    PerLevel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    Random {
        seed: u64,
        n_target: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        margin: Option<f64>,
    },
    Explicit {
        occupations: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Constant { rate: f64 },
    Random { seed: u64, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_max_halvings")]
    pub max_halvings: u32,
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    #[serde(default = "default_convergence_samples")]
    pub convergence_samples: usize,
}

fn default_sample_every() -> usize {
    1
}
fn default_max_halvings() -> u32 {
    30
}
fn default_convergence_tol() -> f64 {
    1e-12
}
fn default_convergence_samples() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub prefix: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumTargets {
    pub n_target: f64,
    pub e_target: f64,
}

/// `[scan]` document read by `qkin scan-phi --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanDocument {
    pub scan: ScanSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub q_star: f64,
    pub min: f64,
    pub max: f64,
    pub step: f64,
    #[serde(default)]
    pub assert_positive: bool,
}

fn field_error(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {e}"))
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing section [{section}]"))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

impl RunConfig {
    /// Parses and validates every section that is present.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_file(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.q_index()?;
        let grid = self.grid()?;
        if self.initial.is_some() {
            self.initial_state_on(&grid)?;
        }
        if self.kernel.is_some() {
            self.kernel_on(&grid)?;
        }
        if self.integrator.is_some() {
            self.integrator()?;
        }
        if let Some(t) = &self.equilibrium {
            if !(t.n_target.is_finite() && t.n_target > 0.0) {
                return Err(field_error("equilibrium.n_target", format!("must be positive, got {}", t.n_target)));
            }
            if !t.e_target.is_finite() {
                return Err(field_error("equilibrium.e_target", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn q_index(&self) -> Result<QIndex<f64>> {
        QIndex::new(self.q).map_err(|e| field_error("q", e))
    }

    pub fn reduction(&self) -> Reduction {
        if self.deterministic_reduction {
            Reduction::Canonical
        } else {
            Reduction::Parallel
        }
    }

    pub fn grid(&self) -> Result<LevelGrid<f64>> {
        let l = &self.levels;
        if l.count == 0 {
            return Err(field_error("levels.count", "must be at least 1"));
        }
        let lattice = match &l.lattice {
            Some(v) if v.len() != l.count => {
                return Err(field_error(
                    "levels.lattice",
                    format!("has {} entries but levels.count = {}", v.len(), l.count),
                ))
            }
            Some(v) => v.clone(),
            None => (0..l.count as u32).collect(),
        };
        let degeneracies = match &l.degeneracy {
            Degeneracy::Constant(g) => vec![*g; l.count],
            Degeneracy::PerLevel(v) if v.len() != l.count => {
                return Err(field_error(
                    "levels.degeneracy",
                    format!("has {} entries but levels.count = {}", v.len(), l.count),
                ))
            }
            Degeneracy::PerLevel(v) => v.clone(),
        };
        if !(l.spacing.is_finite() && l.spacing > 0.0) {
            return Err(field_error("levels.spacing", format!("must be positive, got {}", l.spacing)));
        }
        if let Some(g) = degeneracies.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(field_error("levels.degeneracy", format!("must be positive, got {g}")));
        }
        LevelGrid::new(lattice, l.spacing, degeneracies).map_err(|e| field_error("levels", e))
    }

    fn initial_state_on(&self, grid: &LevelGrid<f64>) -> Result<GasState<f64>> {
        match self.initial.as_ref().ok_or_else(|| missing("initial"))? {
            InitialConfig::Random { seed, n_target, margin } => {
                let margin = margin.unwrap_or(DEFAULT_INTERIOR_MARGIN);
                random_state_with_margin(grid, *n_target, *seed, self.statistics, margin)
                    .map_err(|e| field_error("initial", e))
            }
            InitialConfig::Explicit { occupations } => {
                if occupations.len() != grid.len() {
                    return Err(field_error(
                        "initial.occupations",
                        format!("has {} entries but levels.count = {}", occupations.len(), grid.len()),
                    ));
                }
                grid.state(occupations, self.statistics)
                    .map_err(|e| field_error("initial.occupations", e))
            }
        }
    }

    pub fn initial_state(&self) -> Result<GasState<f64>> {
        self.initial_state_on(&self.grid()?)
    }

    fn kernel_on(&self, grid: &LevelGrid<f64>) -> Result<CollisionKernel<f64>> {
        let spec = match self.kernel.as_ref().ok_or_else(|| missing("kernel"))? {
            KernelConfig::Constant { rate } => RateSpec::Constant(*rate),
            KernelConfig::Random { seed, min, max } => RateSpec::Random {
                seed: *seed,
                min: *min,
                max: *max,
            },
        };
        build_kernel(grid.lattice(), spec).map_err(|e| field_error("kernel", e))
    }

    pub fn kernel(&self) -> Result<CollisionKernel<f64>> {
        self.kernel_on(&self.grid()?)
    }

    pub fn integrator(&self) -> Result<IntegratorConfig<f64>> {
        let s = self.integrator.as_ref().ok_or_else(|| missing("integrator"))?;
        if !(s.dt.is_finite() && s.dt > 0.0) {
            return Err(field_error("integrator.dt", format!("must be positive, got {}", s.dt)));
        }
        if !(s.t_end.is_finite() && s.t_end >= 0.0) {
            return Err(field_error("integrator.t_end", format!("must be nonnegative, got {}", s.t_end)));
        }
        if s.sample_every == 0 {
            return Err(field_error("integrator.sample_every", "must be at least 1"));
        }
        if s.max_halvings > 60 {
            return Err(field_error("integrator.max_halvings", format!("must be at most 60, got {}", s.max_halvings)));
        }
        if !(s.convergence_tol >= 0.0) {
            return Err(field_error("integrator.convergence_tol", "must be nonnegative"));
        }
        if s.convergence_samples == 0 {
            return Err(field_error("integrator.convergence_samples", "must be at least 1"));
        }
        let cfg = IntegratorConfig {
            dt: s.dt,
            t_end: s.t_end,
            sample_every: s.sample_every,
            max_halvings: s.max_halvings,
            convergence_tol: s.convergence_tol,
            convergence_samples: s.convergence_samples,
            reduction: self.reduction(),
        };
        cfg.validate().map_err(|e| field_error("integrator", e))?;
        Ok(cfg)
    }

    /// `(N, E)` from `[equilibrium]`, else from the initial state.
    pub fn equilibrium_targets(&self) -> Result<(f64, f64)> {
        if let Some(t) = &self.equilibrium {
            return Ok((t.n_target, t.e_target));
        }
        if self.initial.is_some() {
            return Ok(moments(&self.initial_state()?));
        }
        Err(Error::Config(
            "need [equilibrium] n_target and e_target, or an [initial] section to take them from".into(),
        ))
    }

    pub fn output_prefix(&self) -> Option<&Path> {
        self.output.as_ref().map(|o| o.prefix.as_path())
    }
}

impl ScanDocument {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        doc.scan.grid().validate().map_err(|e| field_error("scan", e))?;
        Ok(doc)
    }
}

impl ScanSection {
    pub fn grid(&self) -> PhiGrid<f64> {
        PhiGrid {
            min: self.min,
            max: self.max,
            step: self.step,
        }
    }
}
