//! Declarative experiment configuration (TOML) with test-case-1 defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{read_control_csv, AnalyticControl, ControlFunction, ControlGrid, Degree};
use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::fem::space::TaylorHoodSpace;
use crate::functional::{FunctionalSpec, GradientRoute, GradientToggle, TrackingTarget, Variant};
use crate::optimizer::OptimizerConfig;
use crate::par::Execution;

/// Starting control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InitialControl {
    Flat,
    Parabolic,
    Sinusoidal,
    /// `x,q` file read at the grid's Lagrange nodes.
    Csv(PathBuf),
}

impl InitialControl {
    pub fn build(&self, grid: &ControlGrid, degree: Degree) -> Result<ControlFunction> {
        match self {
            InitialControl::Flat => Ok(AnalyticControl::flat().interpolate(grid, degree)),
            InitialControl::Parabolic => Ok(AnalyticControl::parabolic().interpolate(grid, degree)),
            InitialControl::Sinusoidal => Ok(AnalyticControl::sinusoidal().interpolate(grid, degree)),
            InitialControl::Csv(path) => read_control_csv(path, grid, degree),
        }
    }

    pub fn name(&self) -> String {
        match self {
            InitialControl::Flat => "flat".into(),
            InitialControl::Parabolic => "parabolic".into(),
            InitialControl::Sinusoidal => "sinusoidal".into(),
            InitialControl::Csv(p) => p.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

/// Problem data selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum DataPreset {
    /// Parabolic inflow, ν = 1, η = 0.
    Channel,
    /// Zero inflow.
    Quiescent,
    /// Parabolic inflow with constant `η`.
    Brinkman { eta: f64 },
}

impl DataPreset {
    pub fn build(self) -> ProblemData {
        match self {
            DataPreset::Channel => ProblemData::default(),
            DataPreset::Quiescent => ProblemData::quiescent(),
            DataPreset::Brinkman { eta } => ProblemData::brinkman(eta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct FunctionalSection {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    /// Target area; absent means 0.7 times the area of the parabolic preset
    /// on the run's control grid.
    pub v_bar: Option<f64>,
}

impl Default for FunctionalSection {
    fn default() -> Self {
        Self {
            variant: Variant::PerimeterEnergy,
            alpha: 10.0,
            beta: 10_000.0,
            v_bar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub epsilon_hat: f64,
    pub epsilon_min: f64,
    pub max_iters: usize,
    pub gradient_tolerance: Option<f64>,
    pub toggle: GradientToggle,
    /// Absent: boundary density for energy variants, volumetric for tracking.
    pub route: Option<GradientRoute>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            epsilon_hat: 0.1,
            epsilon_min: 1e-8,
            max_iters: 100,
            gradient_tolerance: None,
            toggle: GradientToggle::GradientCorrected,
            route: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub alphas: Vec<f64>,
    /// A level counts as saturated once the error drops by less than this
    /// factor from the previous one.
    pub min_ratio: f64,
    pub assumed_order: f64,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.01, 0.1, 1.0],
            min_ratio: 1.5,
            assumed_order: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 10.0, 1000.0],
            betas: vec![0.0],
        }
    }
}

/// Whole experiment description. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh_sizes: Vec<usize>,
    /// Control cells per level; empty ties the control grid to the mesh.
    pub control_cells: Vec<usize>,
    pub degree: Degree,
    pub initial_control: InitialControl,
    pub data: DataPreset,
    pub output_dir: PathBuf,
    pub execution: Execution,
    /// Also write solutions at mapped (physical) coordinates.
    pub physical_export: bool,
    pub functional: FunctionalSection,
    pub optimizer: OptimizerSection,
    pub converge: ConvergeSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh_sizes: vec![32],
            control_cells: Vec::new(),
            degree: Degree::Linear,
            initial_control: InitialControl::Parabolic,
            data: DataPreset::Channel,
            output_dir: PathBuf::from("out"),
            execution: Execution::Parallel,
            physical_export: true,
            functional: FunctionalSection::default(),
            optimizer: OptimizerSection::default(),
            converge: ConvergeSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative CSV paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let InitialControl::Csv(p) = &mut cfg.initial_control {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_sizes.is_empty() {
            return Err(Error::Config("mesh_sizes is empty".into()));
        }
        if self.mesh_sizes.windows(2).any(|w| w[0] >= w[1]) || self.mesh_sizes[0] == 0 {
            return Err(Error::Config("mesh_sizes must be positive and strictly ascending".into()));
        }
        if !self.control_cells.is_empty() && self.control_cells.len() != self.mesh_sizes.len() {
            return Err(Error::Config("control_cells must be empty or match mesh_sizes".into()));
        }
        let f = &self.functional;
        if !(f.alpha >= 0.0 && f.beta >= 0.0) {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        let o = &self.optimizer;
        if !(0.0 < o.epsilon_min && o.epsilon_min < o.epsilon_hat) || o.max_iters == 0 {
            return Err(Error::Config("need 0 < epsilon_min < epsilon_hat and max_iters > 0".into()));
        }
        Ok(())
    }

    /// Control grid at level `i`: `σ = h` unless `control_cells` is set.
    pub fn grid(&self, level: usize) -> Result<ControlGrid> {
        let cells = self.control_cells.get(level).copied().unwrap_or(self.mesh_sizes[level]);
        ControlGrid::uniform(cells)
    }

    pub fn space(&self, level: usize) -> Result<TaylorHoodSpace> {
        Ok(TaylorHoodSpace::with_defaults(self.mesh_sizes[level])?.with_execution(self.execution))
    }

    pub fn v_bar(&self, grid: &ControlGrid) -> f64 {
        self.functional
            .v_bar
            .unwrap_or_else(|| 0.7 * AnalyticControl::parabolic().interpolate(grid, self.degree).integral())
    }

    /// Functional on level `level`; the tracking target is solved there.
    pub fn spec(&self, alpha: f64, beta: f64, grid: &ControlGrid, space: &TaylorHoodSpace) -> Result<FunctionalSpec> {
        let f = &self.functional;
        match f.variant {
            Variant::PerimeterTracking => {
                let target = TrackingTarget::solve(&AnalyticControl::tracking_target(), &self.data.build(), space)?;
                Ok(FunctionalSpec::tracking(alpha, target))
            }
            v => Ok(FunctionalSpec::energy(v, alpha, beta, self.v_bar(grid))),
        }
    }

    pub fn optimizer(&self, spec: FunctionalSpec) -> OptimizerConfig {
        let o = &self.optimizer;
        let mut cfg = OptimizerConfig::new(spec);
        cfg.epsilon_hat = o.epsilon_hat;
        cfg.epsilon_min = o.epsilon_min;
        cfg.max_iters = o.max_iters;
        cfg.gradient_tolerance = o.gradient_tolerance;
        cfg.toggle = o.toggle;
        cfg.route = o.route;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.functional.alpha, 10.0);
        assert_eq!(cfg.optimizer.epsilon_min, 1e-8);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.initial_control = InitialControl::Csv("start.csv".into());
        cfg.data = DataPreset::Brinkman { eta: 2.0 };
        cfg.functional.v_bar = Some(0.1);
        cfg.optimizer.route = Some(GradientRoute::Volumetric);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_sections() {
        let cfg = ExperimentConfig::from_toml(
            "mesh_sizes = [8, 16]\ninitial_control = \"sinusoidal\"\n[functional]\nvariant = \"perimeterTracking\"\nalpha = 0.0\n",
        )
        .unwrap();
        assert_eq!(cfg.mesh_sizes, vec![8, 16]);
        assert_eq!(cfg.functional.variant, Variant::PerimeterTracking);
        assert_eq!(cfg.functional.beta, 10_000.0);
        assert_eq!(cfg.initial_control, InitialControl::Sinusoidal);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml("mesh_sizes = [16, 8]").is_err());
        assert!(ExperimentConfig::from_toml("mesh_sizes = []").is_err());
        assert!(ExperimentConfig::from_toml("unknown = 1").is_err());
        assert!(ExperimentConfig::from_toml("[optimizer]\nepsilon_min = 1.0").is_err());
    }

    #[test]
    fn default_volume_target() {
        let cfg = ExperimentConfig::default();
        let grid = ControlGrid::uniform(64).unwrap();
        assert!((cfg.v_bar(&grid) - 0.7 * 0.2 * 2.0 / 3.0).abs() < 1e-3);
    }
}
