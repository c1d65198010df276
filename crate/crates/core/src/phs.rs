//! Input-state-output port-Hamiltonian systems
//! `ẋ = (J(x) − R(x)) ∂H/∂x + G(x) u`, `y = G(x)^T ∂H/∂x`,
//! and their negative-feedback interconnection.

use thiserror::Error;

use crate::autodiff::{AdError, Dual, Real};
use crate::expr::Expr;
use crate::linalg::{self, symmetric_eig, LinalgError, Matrix};
use crate::neural::{Mlp, NeuralError};

/// Tolerance for skewness, PSD and rank checks in [`ValidationReport`].
pub const STRUCTURE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("port mismatch: plant has {plant} inputs, controller has {controller}")]
    PortMismatch { plant: usize, controller: usize },
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl From<NeuralError> for PhsError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Ad(a) => PhsError::Ad(a),
            NeuralError::InputDim { expected, got } => {
                PhsError::Dimension(format!("network expects {expected} inputs, got {got}"))
            }
            other => PhsError::Ad(AdError::Structural(other.to_string())),
        }
    }
}

/// A structure matrix that is either constant or given entry-wise by
/// expressions in the state.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureMatrix {
    Constant(Matrix),
    StateDependent { rows: usize, cols: usize, entries: Vec<Expr> },
}

impl StructureMatrix {
    pub fn rows(&self) -> usize {
        match self {
            StructureMatrix::Constant(m) => m.rows(),
            StructureMatrix::StateDependent { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            StructureMatrix::Constant(m) => m.cols(),
            StructureMatrix::StateDependent { cols, .. } => *cols,
        }
    }

    pub fn as_constant(&self) -> Option<&Matrix> {
        match self {
            StructureMatrix::Constant(m) => Some(m),
            StructureMatrix::StateDependent { .. } => None,
        }
    }

    /// Entry expressions that turn out constant collapse to `Constant`.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Expr>) -> Result<Self, PhsError> {
        if entries.len() != rows * cols {
            return Err(PhsError::Dimension(format!("{} entries for a {rows}x{cols} matrix", entries.len())));
        }
        if entries.iter().all(|e| e.as_const().is_some()) {
            let data = entries.iter().map(|e| e.as_const().unwrap()).collect();
            return Ok(StructureMatrix::Constant(Matrix::new(rows, cols, data)?));
        }
        Ok(StructureMatrix::StateDependent { rows, cols, entries })
    }

    pub fn at(&self, x: &[f64]) -> Result<Matrix, PhsError> {
        match self {
            StructureMatrix::Constant(m) => Ok(m.clone()),
            StructureMatrix::StateDependent { rows, cols, entries } => {
                let data = entries.iter().map(|e| e.eval_f64(x)).collect::<Result<Vec<_>, _>>()?;
                Ok(Matrix::new(*rows, *cols, data)?)
            }
        }
    }
}

impl From<Matrix> for StructureMatrix {
    fn from(m: Matrix) -> Self {
        StructureMatrix::Constant(m)
    }
}

/// Energy function: closed-form or a neural network.
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Expr(Expr),
    Net(Mlp),
}

impl Hamiltonian {
    pub fn eval<S: Real>(&self, params: &[S::Base], x: &[S]) -> Result<S, PhsError> {
        match self {
            Hamiltonian::Expr(e) => Ok(e.eval(x)?),
            Hamiltonian::Net(net) => Ok(net.forward(params, x)?),
        }
    }

    pub fn grad(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>, PhsError> {
        Ok(self.eval(params, &Dual::variables(x))?.g)
    }

    pub fn as_net(&self) -> Option<&Mlp> {
        match self {
            Hamiltonian::Net(n) => Some(n),
            Hamiltonian::Expr(_) => None,
        }
    }
}

/// Axis-aligned box, the region of interest of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn product(&self, other: &BoxRegion) -> BoxRegion {
        BoxRegion {
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(self.lo.iter().zip(&self.hi)).map(|(t, (l, h))| l + t * (h - l)).collect()
    }

    /// Tensor grid with `per_axis` points on every axis (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let axis = |k: usize, i: usize| -> f64 {
            if per_axis == 1 {
                0.5 * (self.lo[k] + self.hi[k])
            } else {
                self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.pow(n as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = vec![0.0; n];
                for k in (0..n).rev() {
                    p[k] = axis(k, idx % per_axis);
                    idx /= per_axis;
                }
                p
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortHamiltonianSystem {
    pub name: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub j: StructureMatrix,
    pub r: StructureMatrix,
    pub g: StructureMatrix,
    pub hamiltonian: Hamiltonian,
    pub region: BoxRegion,
}

/// Outcome of pointwise structure checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    /// max ‖J + J^T‖_F
    pub max_skewness: f64,
    pub min_r_eigenvalue: f64,
    pub min_g_singular_value: f64,
    pub findings: Vec<String>,
    pub pass: bool,
}

fn check_structure(
    samples: &[Vec<f64>],
    mut at: impl FnMut(&[f64]) -> Result<(Matrix, Matrix, Matrix), PhsError>,
) -> Result<ValidationReport, PhsError> {
    let mut max_skew: f64 = 0.0;
    let mut min_r = f64::INFINITY;
    let mut min_g = f64::INFINITY;
    for x in samples {
        let (j, r, g) = at(x)?;
        max_skew = max_skew.max(j.skewness());
        let asym = r.skew_residual();
        // an asymmetric R is reported through its symmetric part plus the
        // asymmetry as a negative finding
        let r_min = symmetric_eig(&r.symmetrized())?.min() - asym;
        min_r = min_r.min(r_min);
        let gtg = g.transpose().matmul(&g)?;
        min_g = min_g.min(symmetric_eig(&gtg)?.min().max(0.0).sqrt());
    }
    let mut findings = Vec::new();
    if max_skew > STRUCTURE_TOL {
        findings.push(format!("J is not skew-symmetric (max ‖J+J^T‖ = {max_skew:e})"));
    }
    if min_r < -STRUCTURE_TOL {
        findings.push(format!("R is not positive semidefinite (min eigenvalue {min_r:e})"));
    }
    if min_g < STRUCTURE_TOL {
        findings.push(format!("G is rank deficient (min singular value {min_g:e})"));
    }
    Ok(ValidationReport {
        samples: samples.len(),
        max_skewness: max_skew,
        min_r_eigenvalue: min_r,
        min_g_singular_value: min_g,
        pass: findings.is_empty(),
        findings,
    })
}

impl PortHamiltonianSystem {
    fn check_state(&self, x: &[f64]) -> Result<(), PhsError> {
        if x.len() != self.state_dim {
            return Err(PhsError::Dimension(format!("state has length {}, expected {}", x.len(), self.state_dim)));
        }
        Ok(())
    }

    fn check_input(&self, u: &[f64]) -> Result<(), PhsError> {
        if u.len() != self.input_dim {
            return Err(PhsError::Dimension(format!("input has length {}, expected {}", u.len(), self.input_dim)));
        }
        Ok(())
    }

    /// Checks that matrix shapes agree with the declared dimensions.
    pub fn check_shapes(&self) -> Result<(), PhsError> {
        let n = self.state_dim;
        let m = self.input_dim;
        for (name, mat, rows, cols) in [("J", &self.j, n, n), ("R", &self.r, n, n), ("G", &self.g, n, m)] {
            if mat.rows() != rows || mat.cols() != cols {
                return Err(PhsError::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    mat.rows(),
                    mat.cols()
                )));
            }
        }
        if self.region.dim() != n {
            return Err(PhsError::Dimension(format!("region has dimension {}, expected {n}", self.region.dim())));
        }
        Ok(())
    }

    pub fn is_constant_structure(&self) -> bool {
        self.j.as_constant().is_some() && self.r.as_constant().is_some() && self.g.as_constant().is_some()
    }

    pub fn validate_structure(&self, samples: &[Vec<f64>]) -> Result<ValidationReport, PhsError> {
        self.check_shapes()?;
        check_structure(samples, |x| {
            self.check_state(x)?;
            Ok((self.j.at(x)?, self.r.at(x)?, self.g.at(x)?))
        })
    }

    pub fn hamiltonian_value(&self, params: &[f64], x: &[f64]) -> Result<f64, PhsError> {
        self.check_state(x)?;
        self.hamiltonian.eval(params, x)
    }

    pub fn hamiltonian_grad(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>, PhsError> {
        self.check_state(x)?;
        self.hamiltonian.grad(params, x)
    }

    /// `(J(x) − R(x)) ∂H/∂x + G(x) u`
    pub fn vector_field(&self, params: &[f64], x: &[f64], u: &[f64]) -> Result<Vec<f64>, PhsError> {
        self.check_input(u)?;
        let dh = self.hamiltonian_grad(params, x)?;
        let jr = self.j.at(x)?.sub(&self.r.at(x)?)?;
        let mut f = jr.matvec(&dh)?;
        let gu = self.g.at(x)?.matvec(u)?;
        f.iter_mut().zip(gu).for_each(|(a, b)| *a += b);
        Ok(f)
    }

    /// `G(x)^T ∂H/∂x`
    pub fn output(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>, PhsError> {
        let dh = self.hamiltonian_grad(params, x)?;
        Ok(self.g.at(x)?.vecmat(&dh)?)
    }

    /// `dH/dt − y^T u`, which equals `−(∂H/∂x)^T R (∂H/∂x) ≤ 0` for a valid
    /// system.
    pub fn passivity_residual(&self, params: &[f64], x: &[f64], u: &[f64]) -> Result<f64, PhsError> {
        let dh = self.hamiltonian_grad(params, x)?;
        let xdot = self.vector_field(params, x, u)?;
        let y = self.output(params, x)?;
        Ok(linalg::dot(&dh, &xdot) - linalg::dot(&y, u))
    }
}

/// Plant and controller joined by `u = −y_c + v`, `u_c = y + v_c`, with
/// composite state `z = (x, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSystem {
    pub plant: PortHamiltonianSystem,
    pub controller: PortHamiltonianSystem,
}

pub fn interconnect(plant: PortHamiltonianSystem, controller: PortHamiltonianSystem) -> Result<ClosedLoopSystem, PhsError> {
    if plant.input_dim != controller.input_dim {
        return Err(PhsError::PortMismatch { plant: plant.input_dim, controller: controller.input_dim });
    }
    plant.check_shapes()?;
    controller.check_shapes()?;
    Ok(ClosedLoopSystem { plant, controller })
}

impl ClosedLoopSystem {
    pub fn plant_dim(&self) -> usize {
        self.plant.state_dim
    }

    pub fn controller_dim(&self) -> usize {
        self.controller.state_dim
    }

    pub fn dim(&self) -> usize {
        self.plant.state_dim + self.controller.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.plant.input_dim
    }

    pub fn region(&self) -> BoxRegion {
        self.plant.region.product(&self.controller.region)
    }

    fn check(&self, z: &[f64]) -> Result<(), PhsError> {
        if z.len() != self.dim() {
            return Err(PhsError::Dimension(format!("closed-loop state has length {}, expected {}", z.len(), self.dim())));
        }
        Ok(())
    }

    pub fn split<'a, T>(&self, z: &'a [T]) -> (&'a [T], &'a [T]) {
        z.split_at(self.plant.state_dim)
    }

    fn assemble(j: &Matrix, r: &Matrix, g: &Matrix, jc: &Matrix, rc: &Matrix, gc: &Matrix) -> Result<(Matrix, Matrix), PhsError> {
        let upper = g.matmul(&gc.transpose())?.scale(-1.0);
        let lower = gc.matmul(&g.transpose())?;
        let jcl = Matrix::block2(j, &upper, &lower, jc)?;
        let rcl = Matrix::block_diag(r, rc);
        Ok((jcl, rcl))
    }

    /// `(J_cl(z), R_cl(z))` with
    /// `J_cl = [[J, −G G_c^T], [G_c G^T, J_c]]`, `R_cl = diag(R, R_c)`.
    pub fn structure_at(&self, z: &[f64]) -> Result<(Matrix, Matrix), PhsError> {
        self.check(z)?;
        let (x, xi) = self.split(z);
        let p = &self.plant;
        let c = &self.controller;
        Self::assemble(&p.j.at(x)?, &p.r.at(x)?, &p.g.at(x)?, &c.j.at(xi)?, &c.r.at(xi)?, &c.g.at(xi)?)
    }

    /// `diag(G(x), G_c(ξ))`, the map from auxiliary inputs `(v, v_c)`.
    pub fn input_matrix_at(&self, z: &[f64]) -> Result<Matrix, PhsError> {
        self.check(z)?;
        let (x, xi) = self.split(z);
        Ok(Matrix::block_diag(&self.plant.g.at(x)?, &self.controller.g.at(xi)?))
    }

    /// `Some((J_cl, R_cl))` when neither plant nor controller structure
    /// depends on the state.
    pub fn constant_structure(&self) -> Option<(Matrix, Matrix)> {
        if !(self.plant.is_constant_structure() && self.controller.is_constant_structure()) {
            return None;
        }
        let p = &self.plant;
        let c = &self.controller;
        let k = |s: &StructureMatrix| s.as_constant().unwrap().clone();
        Self::assemble(&k(&p.j), &k(&p.r), &k(&p.g), &k(&c.j), &k(&c.r), &k(&c.g)).ok()
    }

    /// `H(x) + H_c(ξ)`
    pub fn hamiltonian<S: Real>(&self, params: &[S::Base], z: &[S]) -> Result<S, PhsError> {
        let (x, xi) = self.split(z);
        Ok(self.plant.hamiltonian.eval(params, x)?.add(&self.controller.hamiltonian.eval(params, xi)?))
    }

    pub fn hamiltonian_grad(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>, PhsError> {
        self.check(z)?;
        Ok(self.hamiltonian(params, &Dual::variables(z))?.g)
    }

    /// Unforced closed-loop drift `(J_cl − R_cl) ∂(H + H_c)/∂z`.
    pub fn drift(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>, PhsError> {
        let (j, r) = self.structure_at(z)?;
        Ok(j.sub(&r)?.matvec(&self.hamiltonian_grad(params, z)?)?)
    }

    pub fn validate_structure(&self, samples: &[Vec<f64>]) -> Result<ValidationReport, PhsError> {
        check_structure(samples, |z| {
            let (j, r) = self.structure_at(z)?;
            Ok((j, r, self.input_matrix_at(z)?))
        })
    }
}
