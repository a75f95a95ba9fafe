//! Scenario configuration: strict JSON schema, defaulting, validation, and
//! conversion into the core problem types.

use std::fmt;
use std::fs;
use std::path::Path;

use baroflux_core::eos::PressureLaw;
use baroflux_core::geometry::{Grid, PotentialField, RigidMotion};
use baroflux_core::solver::{RunConfig, SnapshotPolicy, SolverParams};
use baroflux_core::Problem;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridSpec,
    pub law: LawSpec,
    #[serde(default)]
    pub motion: MotionSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub equilibrium: EquilibriumSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub solver: SolverSpec,
    pub t_end: f64,
    /// Cadence of the time series; defaults to t_end / 200.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub snapshots: SnapshotSpec,
    /// Overrides the output location for this scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "lowercase", deny_unknown_fields)]
pub enum LawSpec {
    Gamma { a: f64, gamma: f64 },
    Isothermal { a: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    #[serde(default)]
    pub translation: [f64; 2],
    #[serde(default)]
    pub omega: f64,
}

impl Default for MotionSpec {
    fn default() -> Self {
        MotionSpec { translation: [0.0, 0.0], omega: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { c: f64 },
    Linear { g: [f64; 2] },
    Radial { center: [f64; 2], coeffs: Vec<f64> },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Constant { c: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "from", rename_all = "lowercase", deny_unknown_fields)]
pub enum EquilibriumSpec {
    /// Fix the constant from the total mass.
    Mass { m0: f64 },
    /// Fix the constant from prescribed inflow densities.
    Inflow { rho_b: InflowDensitySpec },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum InflowDensitySpec {
    /// One density value for every inflow face.
    Value(f64),
    /// The stationary trace belonging to the given constant, evaluated at
    /// the inflow face centers (the natural profile when the effective
    /// potential varies along the inflow part).
    Trace { trace_of: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// Start exactly at the discrete stationary state.
    Equilibrium,
    /// Seeded perturbation of the stationary state.
    Perturbation {
        perturbation: PerturbationKind,
        amplitude: f64,
        /// Lower density clip applied after perturbing; keeps runs over
        /// vacuum equilibria strictly positive.
        #[serde(default)]
        floor: f64,
    },
    /// Load a snapshot file as the initial state.
    File { path: String },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Equilibrium
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// Gaussian bump on the density, mass-renormalized when the scenario
    /// has no open boundary.
    DensityBump,
    /// Divergence-free velocity perturbation (a plain wave in 1D).
    VelocityShear,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub mu: f64,
    pub lambda: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_floor_guard")]
    pub rho_floor_guard: f64,
}

fn default_cfl() -> f64 {
    0.4
}

fn default_floor_guard() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotSpec {
    None,
    #[default]
    Final,
    All,
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(serde_json::Error),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "config parse error: {e}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Read, parse, and validate one scenario file. Unknown keys are rejected
/// by the strict schema with the offending name and position.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(ConfigError::Io)?;
    let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
    cfg.validate().map_err(ConfigError::Invalid)?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("name: must not be empty".into());
        }
        let dim = self.grid.dim;
        if dim != 1 && dim != 2 {
            return Err(format!("grid.dim: must be 1 or 2, got {dim}"));
        }
        if self.grid.extent.len() != dim {
            return Err(format!(
                "grid.extent: expected {dim} entries, got {}",
                self.grid.extent.len()
            ));
        }
        if self.grid.cells.len() != dim {
            return Err(format!("grid.cells: expected {dim} entries, got {}", self.grid.cells.len()));
        }
        if self.grid.extent.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err("grid.extent: entries must be positive and finite".into());
        }
        if dim == 1 {
            if self.motion.translation[1] != 0.0 || self.motion.omega != 0.0 {
                return Err(
                    "motion: a one-dimensional domain admits only horizontal translation".into(),
                );
            }
            if let PotentialSpec::Linear { g } = &self.potential {
                if g[1] != 0.0 {
                    return Err("potential.g: no transverse component in one dimension".into());
                }
            }
        }
        match &self.law {
            LawSpec::Gamma { a, gamma } => {
                if !(*a > 0.0) || !(*gamma > 1.0) {
                    return Err("law: requires a > 0 and gamma > 1".into());
                }
            }
            LawSpec::Isothermal { a } => {
                if !(*a > 0.0) {
                    return Err("law: requires a > 0".into());
                }
            }
        }
        if !(self.solver.mu > 0.0) {
            return Err("solver.mu: must be positive".into());
        }
        if !(self.solver.lambda >= 0.0) {
            return Err("solver.lambda: must be nonnegative".into());
        }
        if dim == 1 && !(self.solver.lambda > 0.0) {
            return Err("solver.lambda: effective 1D viscosity must be positive".into());
        }
        if !(self.solver.cfl > 0.0 && self.solver.cfl < 1.0) {
            return Err("solver.cfl: must lie in (0, 1)".into());
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err("t_end: must be finite and nonnegative".into());
        }
        if let Some(ri) = self.record_interval {
            if !(ri > 0.0) {
                return Err("record_interval: must be positive".into());
            }
        }
        match &self.equilibrium {
            EquilibriumSpec::Mass { m0 } => {
                if !(*m0 > 0.0) {
                    return Err("equilibrium.m0: must be positive".into());
                }
            }
            EquilibriumSpec::Inflow { rho_b: InflowDensitySpec::Value(v) } => {
                if !(*v > 0.0) {
                    return Err("equilibrium.rho_b: must be positive".into());
                }
            }
            EquilibriumSpec::Inflow { rho_b: InflowDensitySpec::Trace { trace_of } } => {
                if !trace_of.is_finite() {
                    return Err("equilibrium.rho_b.trace_of: must be finite".into());
                }
            }
        }
        match &self.initial {
            InitialSpec::Perturbation { amplitude, floor, .. } => {
                if !(*amplitude >= 0.0) || !amplitude.is_finite() {
                    return Err("initial.amplitude: must be nonnegative and finite".into());
                }
                if !(*floor >= 0.0) {
                    return Err("initial.floor: must be nonnegative".into());
                }
            }
            InitialSpec::File { path } => {
                if !Path::new(path).exists() {
                    return Err(format!("initial.path: file not found: {path}"));
                }
            }
            InitialSpec::Equilibrium => {}
        }
        Ok(())
    }

    /// Record cadence with the default filled in.
    pub fn record_interval(&self) -> f64 {
        self.record_interval.unwrap_or(self.t_end / 200.0)
    }

    pub fn law(&self) -> PressureLaw {
        match self.law {
            LawSpec::Gamma { a, gamma } => PressureLaw::gamma_law(a, gamma).expect("validated"),
            LawSpec::Isothermal { a } => PressureLaw::isothermal(a).expect("validated"),
        }
    }

    pub fn grid(&self) -> Result<Grid, String> {
        let g = match self.grid.dim {
            1 => Grid::new_1d(self.grid.extent[0], self.grid.cells[0]),
            _ => Grid::new_2d(
                [self.grid.extent[0], self.grid.extent[1]],
                [self.grid.cells[0], self.grid.cells[1]],
            ),
        };
        g.map_err(|e| format!("grid: {e}"))
    }

    pub fn motion(&self) -> RigidMotion {
        RigidMotion { translation: self.motion.translation, omega: self.motion.omega }
    }

    pub fn potential(&self) -> PotentialField {
        match &self.potential {
            PotentialSpec::Constant { c } => PotentialField::Constant { c: *c },
            PotentialSpec::Linear { g } => PotentialField::Linear { g: *g },
            PotentialSpec::Radial { center, coeffs } => {
                PotentialField::Radial { center: *center, coeffs: coeffs.clone() }
            }
        }
    }

    pub fn problem(&self) -> Result<Problem, String> {
        Ok(Problem {
            grid: self.grid()?,
            law: self.law(),
            motion: self.motion(),
            potential: self.potential(),
        })
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            mu: self.solver.mu,
            lambda: self.solver.lambda,
            cfl: self.solver.cfl,
            rho_floor_guard: self.solver.rho_floor_guard,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            t_end: self.t_end,
            record_interval: self.record_interval(),
            snapshots: match self.snapshots {
                SnapshotSpec::All => SnapshotPolicy::EveryRecord,
                _ => SnapshotPolicy::None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "name": "demo",
            "grid": {"dim": 1, "extent": [1.0], "cells": [64]},
            "law": {"law": "gamma", "a": 1.0, "gamma": 2.0},
            "motion": {"translation": [1.0, 0.0], "omega": 0.0},
            "equilibrium": {"from": "inflow", "rho_b": 1.0},
            "solver": {"mu": 0.01, "lambda": 0.1},
            "t_end": 2.0
        }"#
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: ScenarioConfig = serde_json::from_str(minimal()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.solver.cfl, 0.4);
        assert_eq!(cfg.solver.rho_floor_guard, 1e-10);
        assert_eq!(cfg.record_interval(), 2.0 / 200.0);
        assert_eq!(cfg.initial, InitialSpec::Equilibrium);
        assert_eq!(cfg.snapshots, SnapshotSpec::Final);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_offender_named() {
        let text = minimal().replace("\"mu\"", "\"viscocity\"");
        let err = serde_json::from_str::<ScenarioConfig>(&text).unwrap_err().to_string();
        assert!(err.contains("viscocity"), "{err}");
        assert!(err.contains("expected"), "the error suggests valid keys: {err}");
    }

    #[test]
    fn one_dimensional_runs_need_bulk_viscosity() {
        let text = minimal().replace("\"lambda\": 0.1", "\"lambda\": 0.0");
        let cfg: ScenarioConfig = serde_json::from_str(&text).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.contains("effective 1D viscosity must be positive"), "{err}");
    }

    #[test]
    fn law_and_potential_tags_parse() {
        let text = r#"{
            "name": "tagged",
            "grid": {"dim": 2, "extent": [1.0, 1.0], "cells": [16, 16]},
            "law": {"law": "isothermal", "a": 1.0},
            "potential": {"kind": "linear", "g": [0.0, -1.0]},
            "equilibrium": {"from": "mass", "m0": 1.0},
            "initial": {"kind": "perturbation", "perturbation": "density-bump", "amplitude": 0.2},
            "solver": {"mu": 0.05, "lambda": 0.0, "cfl": 0.3},
            "t_end": 1.0,
            "seed": 7
        }"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.law(), PressureLaw::isothermal(1.0).unwrap());
        assert!(matches!(cfg.potential(), PotentialField::Linear { g: [0.0, -1.0] }));
        assert!(matches!(
            cfg.initial,
            InitialSpec::Perturbation { perturbation: PerturbationKind::DensityBump, .. }
        ));
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn trace_inflow_spec_parses() {
        let text = minimal().replace("\"rho_b\": 1.0", "\"rho_b\": {\"trace_of\": -1.5}");
        let cfg: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(
            cfg.equilibrium,
            EquilibriumSpec::Inflow { rho_b: InflowDensitySpec::Trace { trace_of: -1.5 } }
        );
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg: ScenarioConfig = serde_json::from_str(minimal()).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rotation_is_rejected_in_one_dimension() {
        let text = minimal().replace("\"omega\": 0.0", "\"omega\": 1.0");
        let cfg: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }
}
