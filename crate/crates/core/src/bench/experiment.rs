//! Controller assembly from a configuration and the full reproduction
//! pipeline: training, minimum search, bound check, simulation, surface
//! export and the margin sweep.

use std::collections::BTreeMap;
use std::path::Path;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{CasimirKind, ConfigError, ExperimentConfig, LossSpec};
use super::systems::{integrator, model_stationarity, Stationarity};
use crate::casimir::{build_parameterization, ScalarMap};
use crate::neural::{Mlp, NetFile, NeuralError, ParamVector};
use crate::phs::{interconnect, Hamiltonian, PhsError};
use crate::sim::{
    simulate, verify_bound, verify_lyapunov_decrease, verify_stabilization, BoundReport, DampingGains, DecreaseReport,
    SimError, StabilizationReport,
};
use crate::train::{
    adam_train, find_minimum, CasimirModel, Composition, LossKind, LyapunovComposition, Minimum, RoaSettings,
    TrainError, TrainProblem, TrainReport,
};

/// Trust radius of the post-training minimum search around `z*`.
pub const MINIMUM_RADIUS: f64 = 1.0;

/// Allowed distance between the surface grid minimum and the plant target.
pub const SURFACE_ARGMIN_TOL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("model file does not match the configuration: {0}")]
    Model(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ExperimentError {
    /// Process exit code: 1 for a failed verification, 2 for bad
    /// configuration or files, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) | ExperimentError::Model(_) | ExperimentError::Io { .. } => 2,
            ExperimentError::Train(t) | ExperimentError::Sim(SimError::Train(t)) => train_exit_code(t),
            ExperimentError::Sim(SimError::Gain { .. } | SimError::Dimension(_) | SimError::Settings(_)) => 2,
            ExperimentError::Sim(_) => 3,
        }
    }
}

fn train_exit_code(e: &TrainError) -> i32 {
    match e {
        TrainError::BoundUndefined { .. } => 1,
        TrainError::InvalidProblem(_) => 2,
        _ => 3,
    }
}

impl From<PhsError> for ExperimentError {
    fn from(e: PhsError) -> Self {
        ExperimentError::Train(e.into())
    }
}

impl From<NeuralError> for ExperimentError {
    fn from(e: NeuralError) -> Self {
        ExperimentError::Train(e.into())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// A trainable controller: problem, parameters and damping gains.
#[derive(Debug, Clone)]
pub struct Controller {
    pub problem: TrainProblem,
    pub params: ParamVector,
    pub gains: DampingGains,
}

/// Uniform samples in `[lo, hi]^dim` from xoshiro256++.
pub fn uniform_samples(seed: u64, count: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

impl Controller {
    /// Builds the controller of `cfg` with Hessian margin `margin`.
    ///
    /// With network seed `s`: `H_c` is seeded `s`, `K` (or the free
    /// Casimir network) `s + 1`, `β_i` `s + 2 + i` and `Φ` `s + 1000`.
    pub fn build(cfg: &ExperimentConfig, margin: f64) -> Result<Self, ExperimentError> {
        let net = &cfg.networks;
        let plant = cfg.plant()?;
        let m = plant.input_dim;
        let mut pv = ParamVector::new();
        let hc = Mlp::new(&net.hc_widths, net.activation, net.seed, &mut pv, "hc")?;
        let cl = interconnect(plant, integrator(Hamiltonian::Net(hc), m))?;
        let casimir = match net.casimir {
            CasimirKind::Kernel => CasimirModel::Kernel(
                build_parameterization(&cl, &mut pv, &net.k_widths, net.beta_widths.as_deref(), net.activation, net.seed + 1)
                    .map_err(TrainError::from)?,
            ),
            CasimirKind::Free => {
                if net.free_widths.first() != Some(&cl.dim()) {
                    return Err(ConfigError::Invalid(format!("free_widths must start with the closed-loop dimension {}", cl.dim())).into());
                }
                CasimirModel::Free(Mlp::new(&net.free_widths, net.activation, net.seed + 1, &mut pv, "c")?)
            }
        };
        let mode = match &net.phi_widths {
            None => Composition::FixedSum,
            Some(w) => {
                if w.first() != Some(&2) {
                    return Err(ConfigError::Invalid("phi_widths must start with 2".into()).into());
                }
                Composition::NeuralPhi(Mlp::new(w, net.activation, net.seed + 1000, &mut pv, "phi")?)
            }
        };
        let xi_segment = pv.register("xi_star", m)?;
        if let Some(xi) = &cfg.xi_init {
            pv.slice_mut(&xi_segment).copy_from_slice(xi);
        }
        let loss = match cfg.loss {
            LossSpec::Parameterized => LossKind::Parameterized,
            LossSpec::Grid { per_axis, margin, reduction } => LossKind::Grid { points: cl.region().grid(per_axis), margin, reduction },
        };
        let roa = cfg.roa.as_ref().map(|r| RoaSettings {
            gamma: r.gamma,
            samples: uniform_samples(r.seed, r.samples, cl.dim(), r.lo, r.hi),
        });
        let gains = DampingGains::new(cfg.gains.d.to_matrix(m)?, cfg.gains.dc.to_matrix(m)?)?;
        let problem = TrainProblem {
            lyapunov: LyapunovComposition { closed_loop: cl, casimir, mode },
            x_star: cfg.target.clone(),
            xi_segment,
            margin,
            loss,
            roa,
            optimizer: cfg.optimizer.clone(),
        };
        problem.validate()?;
        Ok(Self { problem, params: pv, gains })
    }

    pub fn lyapunov(&self) -> &LyapunovComposition {
        &self.problem.lyapunov
    }

    pub fn train(&mut self) -> Result<TrainReport, ExperimentError> {
        Ok(adam_train(&self.problem, &mut self.params)?)
    }

    pub fn z_star(&self) -> Vec<f64> {
        self.problem.z_star(self.params.values())
    }

    pub fn find_minimum(&self) -> Result<Minimum, ExperimentError> {
        Ok(find_minimum(self.lyapunov(), self.params.values(), &self.z_star(), MINIMUM_RADIUS)?)
    }

    /// Every network of the controller with its segment name.
    pub fn networks(&self) -> Vec<(String, &Mlp)> {
        let l = self.lyapunov();
        let mut out = Vec::new();
        if let Some(n) = l.closed_loop.controller.hamiltonian.as_net() {
            out.push(("hc".to_string(), n));
        }
        match &l.casimir {
            CasimirModel::Kernel(c) => {
                if let Some(n) = c.outer().as_net() {
                    out.push(("k".into(), n));
                }
                for (i, b) in c.inner().iter().enumerate() {
                    if let ScalarMap::Net(n) = b {
                        out.push((format!("beta_{i}"), n));
                    }
                }
            }
            CasimirModel::Free(n) => out.push(("c".into(), n)),
            CasimirModel::Zero | CasimirModel::Expr(_) => {}
        }
        if let Composition::NeuralPhi(n) = &l.mode {
            out.push(("phi".into(), n));
        }
        out
    }

    pub fn bundle(&self, cfg: &ExperimentConfig) -> ModelBundle {
        ModelBundle {
            schema_version: super::config::SCHEMA_VERSION,
            margin: self.problem.margin,
            config: cfg.clone(),
            networks: self.networks().into_iter().map(|(name, n)| (name, n.to_file(self.params.values()))).collect(),
            xi_star: self.params.slice(&self.problem.xi_segment).iter().map(|v| format!("{v:?}")).collect(),
        }
    }

    pub fn from_bundle(bundle: &ModelBundle) -> Result<Self, ExperimentError> {
        let mut c = Self::build(&bundle.config, bundle.margin)?;
        let nets: Vec<(String, Mlp)> = c.networks().into_iter().map(|(s, n)| (s, n.clone())).collect();
        if nets.len() != bundle.networks.len() {
            return Err(ExperimentError::Model(format!("expected {} networks, file has {}", nets.len(), bundle.networks.len())));
        }
        for (name, net) in &nets {
            let file = bundle.networks.get(name).ok_or_else(|| ExperimentError::Model(format!("missing network '{name}'")))?;
            net.load_into(file, &mut c.params).map_err(|e| ExperimentError::Model(format!("{name}: {e}")))?;
        }
        let xi: Vec<f64> = bundle
            .xi_star
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| ExperimentError::Model(format!("bad ξ* literal '{s}'"))))
            .collect::<Result<_, _>>()?;
        if xi.len() != c.problem.xi_segment.len {
            return Err(ExperimentError::Model("ξ* has the wrong length".into()));
        }
        let seg = c.problem.xi_segment.clone();
        c.params.slice_mut(&seg).copy_from_slice(&xi);
        Ok(c)
    }

    /// Pendulum stationarity conditions evaluated on the trained networks.
    pub fn stationarity(&self) -> Option<Stationarity> {
        let l = self.lyapunov();
        let CasimirModel::Kernel(c) = &l.casimir else { return None };
        if l.closed_loop.plant.name != "pendulum" || !matches!(l.mode, Composition::FixedSum) {
            return None;
        }
        let z = self.z_star();
        model_stationarity(c, &l.closed_loop.controller.hamiltonian, self.params.values(), z[2], z[0]).ok()
    }
}

/// Trained networks plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub margin: f64,
    pub config: ExperimentConfig,
    pub networks: BTreeMap<String, NetFile>,
    pub xi_star: Vec<String>,
}

impl ModelBundle {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() }.into()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub initial_state: Vec<f64>,
    pub stabilization: StabilizationReport,
    pub decrease: DecreaseReport,
}

impl TrajectoryOutcome {
    pub fn pass(&self) -> bool {
        self.stabilization.pass && self.decrease.pass
    }
}

/// Simulates `cfg.simulation.trajectories` damped runs from seeded uniform
/// initial states and checks convergence to `z_bar`. Each trajectory is
/// handed to `sink` with its index.
pub fn simulate_controller(
    c: &Controller,
    cfg: &ExperimentConfig,
    z_bar: &[f64],
    mut sink: impl FnMut(usize, &crate::sim::Trajectory) -> Result<(), ExperimentError>,
) -> Result<Vec<TrajectoryOutcome>, ExperimentError> {
    let s = &cfg.simulation;
    let starts = uniform_samples(s.seed, s.trajectories, c.lyapunov().dim(), s.init_box[0], s.init_box[1]);
    let mut out = Vec::with_capacity(starts.len());
    for (i, z0) in starts.into_iter().enumerate() {
        let tr = simulate(c.lyapunov(), Some(&c.gains), c.params.values(), &z0, s.dt, s.horizon)?;
        sink(i, &tr)?;
        out.push(TrajectoryOutcome {
            stabilization: verify_stabilization(&tr, z_bar, s.tol, s.tail_fraction),
            decrease: verify_lyapunov_decrease(&tr),
            initial_state: z0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub q: f64,
    pub p: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

/// `V` over the first two plant coordinates on a `width x height` grid of
/// the plant region, other coordinates held at `z*`.
pub fn lyapunov_surface(c: &Controller, width: usize, height: usize) -> Result<Vec<SurfacePoint>, ExperimentError> {
    let l = c.lyapunov();
    let region = &l.closed_loop.plant.region;
    if region.dim() < 2 || width < 2 || height < 2 {
        return Err(ConfigError::Invalid("surface needs a plant of dimension >= 2 and a grid of at least 2x2".into()).into());
    }
    let mut z = c.z_star();
    let mut out = Vec::with_capacity(width * height);
    for i in 0..width {
        let q = region.lo[0] + (region.hi[0] - region.lo[0]) * i as f64 / (width - 1) as f64;
        for j in 0..height {
            let p = region.lo[1] + (region.hi[1] - region.lo[1]) * j as f64 / (height - 1) as f64;
            z[0] = q;
            z[1] = p;
            out.push(SurfacePoint { q, p, v: l.value(c.params.values(), &z)? });
        }
    }
    Ok(out)
}

pub fn surface_argmin(points: &[SurfacePoint]) -> Option<&SurfacePoint> {
    points.iter().min_by(|a, b| a.v.total_cmp(&b.v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub epsilon: f64,
    pub bound: Option<f64>,
    pub error: Option<f64>,
    pub pass: bool,
}

/// Retrains the configured controller for every margin and checks the
/// bound on each.
pub fn sweep_margins(cfg: &ExperimentConfig, values: &[f64]) -> Result<Vec<SweepRow>, ExperimentError> {
    values
        .iter()
        .map(|&a| {
            let mut c = Controller::build(cfg, a)?;
            let report = c.train()?;
            let (error, pass) = match (report.bound, c.find_minimum()) {
                (Some(_), Ok(m)) => {
                    let b = verify_bound(&report, &m.z)?;
                    (Some(b.distance), b.pass)
                }
                (_, Ok(m)) => (Some(crate::linalg::norm(&crate::linalg::sub(&m.z, &report.z_star))), false),
                (_, Err(_)) => (None, false),
            };
            Ok(SweepRow { a, epsilon: report.epsilon, bound: report.bound, error, pass })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

/// Serializes rows as CSV (header from field names) or a JSON array.
pub fn table_bytes<T: Serialize>(rows: &[T], format: TableFormat) -> Result<Vec<u8>, ExperimentError> {
    match format {
        TableFormat::Json => Ok(serde_json::to_vec_pretty(rows).expect("rows serialize")),
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| ExperimentError::Io { path: "<csv>".into(), message: e.to_string() })?;
            }
            w.into_inner().map_err(|e| ExperimentError::Io { path: "<csv>".into(), message: e.to_string() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub epsilon: f64,
    pub final_loss: f64,
    pub xi_star: Vec<f64>,
    pub z_star: Vec<f64>,
    pub z_bar: Option<Vec<f64>>,
    pub bound: Option<BoundReport>,
    pub stationarity: Option<StationaritySummary>,
    pub trajectories: Vec<TrajectoryOutcome>,
    pub surface_argmin: Option<(f64, f64)>,
    pub sweep: Vec<SweepRow>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaritySummary {
    pub r1: f64,
    pub r2: f64,
    pub min_eig: f64,
}

impl ExperimentSummary {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Trains, locates `z̄`, checks the bound, simulates, exports the surface
/// and runs the margin sweep, writing every artifact under `out_dir`.
pub fn run_paper_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    format: TableFormat,
) -> Result<(ExperimentSummary, TrainReport), ExperimentError> {
    let ext = format.extension();
    let mut c = Controller::build(cfg, cfg.margin)?;
    let report = c.train()?;
    write_file(&out_dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report").as_bytes())?;
    write_file(&out_dir.join(format!("history.{ext}")), &table_bytes(&report.history, format)?)?;
    write_file(&out_dir.join("model.json"), c.bundle(cfg).to_json().as_bytes())?;

    let mut failures = Vec::new();
    let minimum = c.find_minimum();
    let z_bar = match &minimum {
        Ok(m) => Some(m.z.clone()),
        Err(e) => {
            failures.push(format!("minimum search: {e}"));
            None
        }
    };
    let bound = match (&z_bar, verify_bound(&report, z_bar.as_deref().unwrap_or(&report.z_star))) {
        (Some(_), Ok(b)) => {
            if !b.pass {
                failures.push(format!("bound: ‖z̄ − z*‖ = {:e} exceeds 1.1 · {:e}", b.distance, b.bound));
            }
            Some(b)
        }
        (_, Err(e)) => {
            failures.push(format!("bound: {e}"));
            None
        }
        (None, Ok(_)) => None,
    };

    let trajectories = match &z_bar {
        Some(zb) => {
            let outcomes = simulate_controller(&c, cfg, zb, |i, tr| {
                let path = out_dir.join("trajectories").join(format!("trajectory_{i:02}.csv"));
                let mut buf = Vec::new();
                tr.write_csv(&mut buf).map_err(|e| io_err(&path, e))?;
                write_file(&path, &buf)
            })?;
            for (i, o) in outcomes.iter().enumerate() {
                if !o.pass() {
                    failures.push(format!(
                        "trajectory {i}: tail distance {:e}, max V increase {:e}",
                        o.stabilization.max_tail_distance, o.decrease.max_increase
                    ));
                }
            }
            outcomes
        }
        None => Vec::new(),
    };

    let surface = lyapunov_surface(&c, cfg.surface.width, cfg.surface.height)?;
    write_file(&out_dir.join(format!("surface.{ext}")), &table_bytes(&surface, format)?)?;
    let argmin = surface_argmin(&surface).map(|p| (p.q, p.p));
    if let Some((q, p)) = argmin {
        let d = ((q - cfg.target[0]).powi(2) + (p - cfg.target[1]).powi(2)).sqrt();
        if d > SURFACE_ARGMIN_TOL {
            failures.push(format!("surface minimum at ({q}, {p}) is {d:e} from the target"));
        }
    }

    let sweep = sweep_margins(cfg, &cfg.sweep)?;
    write_file(&out_dir.join(format!("sweep.{ext}")), &table_bytes(&sweep, format)?)?;
    for r in sweep.iter().filter(|r| !r.pass) {
        failures.push(format!("sweep a = {}: bound check failed", r.a));
    }

    let stationarity = c.stationarity().map(|s| StationaritySummary { r1: s.r1, r2: s.r2, min_eig: s.min_eig });
    let summary = ExperimentSummary {
        epsilon: report.epsilon,
        final_loss: report.final_loss,
        xi_star: report.xi_star.clone(),
        z_star: report.z_star.clone(),
        z_bar,
        bound,
        stationarity,
        trajectories,
        surface_argmin: argmin,
        sweep,
        failures,
    };
    write_file(&out_dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("summary").as_bytes())?;
    Ok((summary, report))
}
