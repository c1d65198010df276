//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::linalg::Matrix;
use crate::neural::Activation;
use crate::phs::{BoxRegion, Hamiltonian, PortHamiltonianSystem, StructureMatrix};
use crate::train::{AdamSettings, Reduction};

use super::systems::builtin_system;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    fn from_json(e: serde_json::Error) -> Self {
        ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// A structure matrix entry: a number or an expression in the state
/// variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    #[serde(default = "default_inline_name")]
    pub name: String,
    pub variables: Vec<String>,
    pub hamiltonian: String,
    pub j: Vec<Vec<Entry>>,
    pub r: Vec<Vec<Entry>>,
    pub g: Vec<Vec<Entry>>,
    pub region: RegionSpec,
}

fn default_inline_name() -> String {
    "inline".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Builtin(String),
    File { file: PathBuf },
    Inline { inline: InlineSystem },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LossSpec {
    Parameterized,
    Grid {
        #[serde(default = "default_per_axis")]
        per_axis: usize,
        #[serde(default)]
        margin: f64,
        #[serde(default)]
        reduction: Reduction,
    },
}

fn default_per_axis() -> usize {
    9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CasimirKind {
    /// Kernel-basis parameterization.
    #[default]
    Kernel,
    /// Unconstrained network, for the grid cost.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub hc_widths: Vec<usize>,
    pub k_widths: Vec<usize>,
    pub beta_widths: Option<Vec<usize>>,
    pub casimir: CasimirKind,
    pub free_widths: Vec<usize>,
    /// Widths of a `2 -> 1` composition network; `None` means `V = H + H_c + C`.
    pub phi_widths: Option<Vec<usize>>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            hc_widths: vec![1, 32, 1],
            k_widths: vec![1, 64, 1],
            beta_widths: None,
            casimir: CasimirKind::Kernel,
            free_widths: vec![3, 16, 1],
            phi_widths: None,
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoaSpec {
    pub gamma: f64,
    pub samples: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub seed: u64,
}

/// A gain given as a scalar (times identity) or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl GainSpec {
    pub fn to_matrix(&self, m: usize) -> Result<Matrix, ConfigError> {
        match self {
            GainSpec::Scalar(d) => Ok(Matrix::identity(m).scale(*d)),
            GainSpec::Matrix(rows) => {
                let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(ConfigError::Invalid(format!("gain matrix must be {m}x{m}")));
                }
                Ok(Matrix::from_rows(&refs))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub d: GainSpec,
    pub dc: GainSpec,
}

impl Default for GainsSpec {
    fn default() -> Self {
        Self { d: GainSpec::Scalar(5.0), dc: GainSpec::Scalar(6.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub dt: f64,
    pub horizon: f64,
    pub trajectories: usize,
    /// Initial states are uniform in `[lo, hi]^N`.
    pub init_box: [f64; 2],
    pub seed: u64,
    pub tol: f64,
    pub tail_fraction: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self { dt: 0.01, horizon: 50.0, trajectories: 10, init_box: [-2.0, 2.0], seed: 0, tol: 0.05, tail_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub width: usize,
    pub height: usize,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self { width: 101, height: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub system: SystemSpec,
    /// Desired plant equilibrium `x*`.
    pub target: Vec<f64>,
    #[serde(default = "default_loss")]
    pub loss: LossSpec,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub networks: NetworkSpec,
    #[serde(default)]
    pub optimizer: AdamSettings,
    /// Initial `ξ*`; zeros when absent.
    #[serde(default)]
    pub xi_init: Option<Vec<f64>>,
    #[serde(default)]
    pub roa: Option<RoaSpec>,
    #[serde(default)]
    pub gains: GainsSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default = "default_sweep")]
    pub sweep: Vec<f64>,
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_loss() -> LossSpec {
    LossSpec::Parameterized
}

fn default_margin() -> f64 {
    0.5
}

fn default_sweep() -> Vec<f64> {
    vec![0.1, 0.25, 0.5, 0.75, 1.0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// The pendulum set-point problem at `q* = π/4`. The controller state
    /// starts at the target angle so the Casimir argument vanishes at `z*`.
    pub fn pendulum_default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system: SystemSpec::Builtin("pendulum".into()),
            target: vec![std::f64::consts::FRAC_PI_4, 0.0],
            loss: default_loss(),
            margin: default_margin(),
            networks: NetworkSpec::default(),
            optimizer: AdamSettings::default(),
            xi_init: Some(vec![std::f64::consts::FRAC_PI_4]),
            roa: None,
            gains: GainsSpec::default(),
            simulation: SimulationSpec::default(),
            sweep: default_sweep(),
            surface: SurfaceSpec::default(),
            output_dir: default_output_dir(),
        }
    }

    /// Parses and validates; relative system files resolve against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(ConfigError::from_json)?;
        if let (SystemSpec::File { file }, Some(base)) = (&mut cfg.system, base) {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text, path.parent())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if !(self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if let LossSpec::Grid { per_axis, margin, .. } = self.loss {
            if per_axis == 0 || !(margin >= 0.0) {
                return bad("grid needs per_axis >= 1 and margin >= 0".into());
            }
        }
        if self.optimizer.validate().is_err() {
            return bad("optimizer needs step_size > 0, betas in [0, 1), epsilon > 0, decay in (0, 1], epochs >= 1".into());
        }
        let s = &self.simulation;
        if !(s.dt > 0.0) || !(s.horizon >= s.dt) {
            return bad(format!("simulation needs dt > 0 and horizon >= dt, got dt = {}, horizon = {}", s.dt, s.horizon));
        }
        if !(s.init_box[0] < s.init_box[1]) || !(s.tol > 0.0) || !(s.tail_fraction > 0.0 && s.tail_fraction <= 1.0) {
            return bad("simulation needs init_box lo < hi, tol > 0 and tail_fraction in (0, 1]".into());
        }
        if self.sweep.iter().any(|a| !(*a > 0.0)) {
            return bad("sweep values must be positive".into());
        }
        if self.surface.width < 2 || self.surface.height < 2 {
            return bad("surface grid needs at least 2x2 points".into());
        }
        if let Some(roa) = &self.roa {
            if !(roa.gamma > 0.0) || roa.samples == 0 || !(roa.lo < roa.hi) {
                return bad("roa needs gamma > 0, samples >= 1 and lo < hi".into());
            }
        }
        let sys = self.plant()?;
        if self.target.len() != sys.state_dim {
            return bad(format!("target has length {}, system has dimension {}", self.target.len(), sys.state_dim));
        }
        if let Some(xi) = &self.xi_init {
            if xi.len() != sys.input_dim {
                return bad(format!("xi_init has length {}, controller has dimension {}", xi.len(), sys.input_dim));
            }
        }
        if self.networks.hc_widths.first() != Some(&sys.input_dim) {
            return bad(format!("hc_widths must start with the controller dimension {}", sys.input_dim));
        }
        Ok(())
    }

    /// Resolves the plant.
    pub fn plant(&self) -> Result<PortHamiltonianSystem, ConfigError> {
        match &self.system {
            SystemSpec::Builtin(id) => builtin_system(id).ok_or_else(|| ConfigError::Invalid(format!("unknown builtin system '{id}'"))),
            SystemSpec::Inline { inline } => inline.build(),
            SystemSpec::File { file } => {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| ConfigError::Io { path: file.display().to_string(), message: e.to_string() })?;
                let inline: InlineSystem = serde_json::from_str(&text).map_err(ConfigError::from_json)?;
                inline.build()
            }
        }
    }
}

impl InlineSystem {
    pub fn build(&self) -> Result<PortHamiltonianSystem, ConfigError> {
        let vars: Vec<&str> = self.variables.iter().map(String::as_str).collect();
        let n = vars.len();
        let invalid = |m: String| ConfigError::Invalid(format!("system '{}': {m}", self.name));
        let parse = |src: &str| Expr::parse(src, &vars).map_err(|e| invalid(format!("'{src}': {e}")));
        let matrix = |name: &str, rows: &[Vec<Entry>]| -> Result<StructureMatrix, ConfigError> {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(invalid(format!("{name} has ragged rows")));
            }
            let entries = rows
                .iter()
                .flatten()
                .map(|e| match e {
                    Entry::Number(x) => Ok(Expr::Const(*x)),
                    Entry::Expr(s) => parse(s),
                })
                .collect::<Result<Vec<_>, _>>()?;
            StructureMatrix::from_entries(rows.len(), cols, entries).map_err(|e| invalid(e.to_string()))
        };
        let g = matrix("G", &self.g)?;
        let sys = PortHamiltonianSystem {
            name: self.name.clone(),
            state_dim: n,
            input_dim: g.cols(),
            j: matrix("J", &self.j)?,
            r: matrix("R", &self.r)?,
            g,
            hamiltonian: Hamiltonian::Expr(parse(&self.hamiltonian)?),
            region: BoxRegion::new(self.region.lo.clone(), self.region.hi.clone()),
        };
        if self.region.lo.len() != self.region.hi.len() {
            return Err(invalid("region bounds differ in length".into()));
        }
        sys.check_shapes().map_err(|e| invalid(e.to_string()))?;
        Ok(sys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::pendulum_default();
        let back = ExperimentConfig::from_json(&cfg.to_json(), None).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"schema_version": 1, "system": "pendulum", "target": [0.7853981633974483, 0]}"#, None).unwrap();
        assert_eq!(cfg.margin, 0.5);
        assert_eq!(cfg.optimizer.epochs, 2000);
        assert_eq!(cfg.networks.k_widths, vec![1, 64, 1]);
        assert_eq!(cfg.sweep.len(), 5);
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = ExperimentConfig::from_json("{\n  \"schema_version\": 1,\n  \"system\" \"pendulum\"\n}", None).unwrap_err();
        match err {
            ConfigError::Parse { line, column, .. } => assert_eq!((line, column), (3, 12)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = ExperimentConfig::pendulum_default();
        cfg.margin = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::pendulum_default();
        cfg.simulation.dt = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::pendulum_default();
        cfg.target = vec![0.0];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::pendulum_default();
        cfg.system = SystemSpec::Builtin("nope".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn inline_system_matches_builtin() {
        let text = r#"{
            "schema_version": 1,
            "system": {"inline": {
                "variables": ["q", "p"],
                "hamiltonian": "0.5*p^2 + 1 - cos(q)",
                "j": [[0, 1], [-1, 0]],
                "r": [[0, 0], [0, 0]],
                "g": [[0], [1]],
                "region": {"lo": [-2, -2], "hi": [2, 2]}
            }},
            "target": [0.5, 0]
        }"#;
        let cfg = ExperimentConfig::from_json(text, None).unwrap();
        let sys = cfg.plant().unwrap();
        let x = [0.4, -0.3];
        let builtin = crate::bench::systems::pendulum_system();
        assert_eq!(sys.vector_field(&[], &x, &[0.2]).unwrap(), builtin.vector_field(&[], &x, &[0.2]).unwrap());
    }

    #[test]
    fn state_dependent_entries_parse() {
        let s = InlineSystem {
            name: "sd".into(),
            variables: vec!["x".into()],
            hamiltonian: "0.5*x^2".into(),
            j: vec![vec![Entry::Number(0.0)]],
            r: vec![vec![Entry::Expr("x^2".into())]],
            g: vec![vec![Entry::Number(1.0)]],
            region: RegionSpec { lo: vec![-1.0], hi: vec![1.0] },
        };
        let sys = s.build().unwrap();
        assert!(!sys.is_constant_structure());
        assert!(s.build().is_ok());
    }
}
