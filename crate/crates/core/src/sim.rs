//! Damping-injected closed-loop simulation and trajectory checks.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, symmetric_eig, LinalgError, Matrix, SYMMETRY_TOL};
use crate::phs::PhsError;
use crate::train::{error_bound, LyapunovComposition, TrainError, TrainReport};

/// Slack factor on `ε / (a − ε)` for neglected higher-order terms.
pub const BOUND_SLACK: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid damping gain {name}: {reason}")]
    Gain { name: &'static str, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid integration settings: {0}")]
    Settings(String),
    #[error("non-finite state at t = {time}; {} samples kept", partial.len())]
    NonFinite { time: f64, partial: Box<Trajectory> },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Phs(#[from] PhsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Symmetric positive-definite damping gains `D` (plant port) and `D_c`
/// (controller port).
#[derive(Debug, Clone, PartialEq)]
pub struct DampingGains {
    d: Matrix,
    dc: Matrix,
}

impl DampingGains {
    pub fn new(d: Matrix, dc: Matrix) -> Result<Self, SimError> {
        for (name, m) in [("D", &d), ("D_c", &dc)] {
            let bad = |reason: String| Err(SimError::Gain { name, reason });
            if !m.is_square() {
                return bad(format!("{}x{} is not square", m.rows(), m.cols()));
            }
            if m.skew_residual() > SYMMETRY_TOL {
                return bad("not symmetric".into());
            }
            let lam = symmetric_eig(m)?.min();
            if !(lam > 0.0) {
                return bad(format!("not positive definite (min eigenvalue {lam})"));
            }
        }
        Ok(Self { d, dc })
    }

    /// Scalar gains for single-input ports.
    pub fn scalar(d: f64, dc: f64) -> Result<Self, SimError> {
        Self::new(Matrix::from_diag(&[d]), Matrix::from_diag(&[dc]))
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    pub fn dc(&self) -> &Matrix {
        &self.dc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldEval {
    pub zdot: Vec<f64>,
    pub v: Vec<f64>,
    pub v_c: Vec<f64>,
}

/// `ż = (J_cl − R_cl) ∂(H + H_c)/∂z + diag(G, G_c) (v, v_c)` with
/// `v = −D G^T ∂V/∂x`, `v_c = −D_c G_c^T ∂V/∂ξ`.
pub fn controlled_field(
    lyapunov: &LyapunovComposition,
    gains: &DampingGains,
    params: &[f64],
    z: &[f64],
) -> Result<FieldEval, SimError> {
    damped_field(lyapunov, &gains.d, &gains.dc, params, z)
}

/// [`controlled_field`] with unchecked gain matrices, e.g. sign-flipped
/// ones.
pub fn damped_field(
    lyapunov: &LyapunovComposition,
    d: &Matrix,
    dc: &Matrix,
    params: &[f64],
    z: &[f64],
) -> Result<FieldEval, SimError> {
    let cl = &lyapunov.closed_loop;
    if z.len() != cl.dim() {
        return Err(SimError::Dimension(format!("state has length {}, expected {}", z.len(), cl.dim())));
    }
    let m = cl.input_dim();
    if d.rows() != m || d.cols() != m || dc.rows() != m || dc.cols() != m {
        return Err(SimError::Dimension(format!("gains must be {m}x{m}")));
    }
    let dv = lyapunov.grad(params, z)?;
    let (x, xi) = cl.split(z);
    let (dvx, dvxi) = dv.split_at(x.len());
    let v: Vec<f64> = d.matvec(&cl.plant.g.at(x)?.vecmat(dvx)?)?.iter().map(|a| -a).collect();
    let v_c: Vec<f64> = dc.matvec(&cl.controller.g.at(xi)?.vecmat(dvxi)?)?.iter().map(|a| -a).collect();
    let mut zdot = cl.drift(params, z)?;
    let aux: Vec<f64> = v.iter().chain(&v_c).copied().collect();
    let inj = cl.input_matrix_at(z)?.matvec(&aux)?;
    zdot.iter_mut().zip(inj).for_each(|(a, b)| *a += b);
    Ok(FieldEval { zdot, v, v_c })
}

/// Number of fixed steps covering `[0, horizon]`: `⌈horizon / dt⌉`.
pub fn step_count(dt: f64, horizon: f64) -> Result<usize, SimError> {
    if !(dt > 0.0) || !(horizon >= dt) || !horizon.is_finite() {
        return Err(SimError::Settings(format!("need dt > 0 and T >= dt, got dt = {dt}, T = {horizon}")));
    }
    // guard against 10 / 0.01 = 1000.0000000000001 style round-up
    Ok((horizon / dt * (1.0 - 1e-12)).ceil() as usize)
}

/// Sample times and states.
pub type Samples = (Vec<f64>, Vec<Vec<f64>>);

/// Classic fixed-step fourth-order Runge-Kutta. Returns the sample times
/// and states; on a non-finite state the samples so far are returned as
/// the error payload.
pub fn rk4_integrate<E>(
    mut field: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    z0: &[f64],
    dt: f64,
    horizon: f64,
) -> Result<Samples, Rk4Error<E>> {
    let steps = step_count(dt, horizon).map_err(Rk4Error::Settings)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(z0.to_vec());
    let axpy = |z: &[f64], k: &[f64], h: f64| -> Vec<f64> { z.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    for k in 1..=steps {
        let z = states.last().unwrap();
        let k1 = field(z).map_err(Rk4Error::Field)?;
        let k2 = field(&axpy(z, &k1, 0.5 * dt)).map_err(Rk4Error::Field)?;
        let k3 = field(&axpy(z, &k2, 0.5 * dt)).map_err(Rk4Error::Field)?;
        let k4 = field(&axpy(z, &k3, dt)).map_err(Rk4Error::Field)?;
        let next: Vec<f64> = (0..z.len()).map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        let t = k as f64 * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Rk4Error::NonFinite { time: t, times, states });
        }
        times.push(t);
        states.push(next);
    }
    Ok((times, states))
}

#[derive(Debug)]
pub enum Rk4Error<E> {
    Settings(SimError),
    Field(E),
    NonFinite { time: f64, times: Vec<f64>, states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    pub hamiltonian: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub v_c: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Header `t, z_1..z_N, V, H_total, v.., v_c..` and one row per sample.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("z_{i}")));
        header.push("V".into());
        header.push("H_total".into());
        let aux = |prefix: &str, k: usize| -> Vec<String> {
            if k == 1 {
                vec![prefix.to_string()]
            } else {
                (1..=k).map(|i| format!("{prefix}_{i}")).collect()
            }
        };
        header.extend(aux("v", self.v.first().map_or(0, Vec::len)));
        header.extend(aux("v_c", self.v_c.first().map_or(0, Vec::len)));
        out.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            row.extend(&self.states[k]);
            row.push(self.lyapunov[k]);
            row.push(self.hamiltonian[k]);
            row.extend(&self.v[k]);
            row.extend(&self.v_c[k]);
            out.write_record(row.iter().map(|x| format!("{x:?}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Simulates the damped closed loop, or the unforced one when `gains` is
/// `None`, recording `V`, `H + H_c` and the auxiliary inputs per sample.
pub fn simulate(
    lyapunov: &LyapunovComposition,
    gains: Option<&DampingGains>,
    params: &[f64],
    z0: &[f64],
    dt: f64,
    horizon: f64,
) -> Result<Trajectory, SimError> {
    let cl = &lyapunov.closed_loop;
    let m = cl.input_dim();
    let eval = |z: &[f64]| -> Result<FieldEval, SimError> {
        match gains {
            Some(g) => controlled_field(lyapunov, g, params, z),
            None => Ok(FieldEval { zdot: cl.drift(params, z)?, v: vec![0.0; m], v_c: vec![0.0; m] }),
        }
    };
    let record = |times: Vec<f64>, states: Vec<Vec<f64>>| -> Result<Trajectory, SimError> {
        let mut tr = Trajectory { times, ..Default::default() };
        for z in &states {
            let f = eval(z)?;
            tr.lyapunov.push(lyapunov.value(params, z)?);
            tr.hamiltonian.push(cl.hamiltonian(params, z)?);
            tr.v.push(f.v);
            tr.v_c.push(f.v_c);
        }
        tr.states = states;
        Ok(tr)
    };
    match rk4_integrate(|z| eval(z).map(|f| f.zdot), z0, dt, horizon) {
        Ok((times, states)) => record(times, states),
        Err(Rk4Error::Settings(e)) | Err(Rk4Error::Field(e)) => Err(e),
        Err(Rk4Error::NonFinite { time, times, states }) => {
            let partial = record(times, states)?;
            Err(SimError::NonFinite { time, partial: Box::new(partial) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub pass: bool,
    /// Largest `‖z(t) − z̄‖` over the tail window.
    pub max_tail_distance: f64,
    pub tail_samples: usize,
    pub tol: f64,
}

/// Passes iff every sample in the last `tail_fraction` of the trajectory is
/// within `tol` of `z_bar`.
pub fn verify_stabilization(traj: &Trajectory, z_bar: &[f64], tol: f64, tail_fraction: f64) -> StabilizationReport {
    let n = traj.len();
    let tail = ((n as f64 * tail_fraction).ceil() as usize).clamp(1.min(n), n);
    let max_tail_distance = traj.states[n - tail..]
        .iter()
        .map(|z| linalg::norm(&linalg::sub(z, z_bar)))
        .fold(0.0, f64::max);
    StabilizationReport { pass: n > 0 && max_tail_distance <= tol, max_tail_distance, tail_samples: tail, tol }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecreaseReport {
    pub pass: bool,
    /// Largest `V(t_{k+1}) − V(t_k)` seen.
    pub max_increase: f64,
    /// Sample index `k + 1` of the first violation.
    pub first_violation: Option<usize>,
}

/// Passes iff `V(t_{k+1}) ≤ V(t_k) + 1e−8 (1 + |V(t_k)|)` for all `k`.
pub fn verify_lyapunov_decrease(traj: &Trajectory) -> DecreaseReport {
    let mut max_increase = f64::NEG_INFINITY;
    let mut first_violation = None;
    for (k, w) in traj.lyapunov.windows(2).enumerate() {
        let inc = w[1] - w[0];
        max_increase = max_increase.max(inc);
        if first_violation.is_none() && !(inc <= 1e-8 * (1.0 + w[0].abs())) {
            first_violation = Some(k + 1);
        }
    }
    DecreaseReport { pass: first_violation.is_none(), max_increase: max_increase.max(0.0), first_violation }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub margin: f64,
    pub distance: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Compares `‖z̄ − z*‖` against `ε / (a − ε)` with [`BOUND_SLACK`].
pub fn verify_bound(report: &TrainReport, z_bar: &[f64]) -> Result<BoundReport, SimError> {
    let bound = error_bound(report.epsilon, report.margin)?;
    if z_bar.len() != report.z_star.len() {
        return Err(SimError::Dimension(format!("z̄ has length {}, z* has {}", z_bar.len(), report.z_star.len())));
    }
    let distance = linalg::norm(&linalg::sub(z_bar, &report.z_star));
    Ok(BoundReport { epsilon: report.epsilon, margin: report.margin, distance, bound, pass: distance <= BOUND_SLACK * bound })
}
