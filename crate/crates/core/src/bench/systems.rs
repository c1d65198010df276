//! Builtin benchmark systems and the classical stationarity conditions of
//! the pendulum set-point problem.

use crate::autodiff::{Jet, Real};
use crate::casimir::CasimirParameterization;
use crate::expr::Expr;
use crate::linalg::{symmetric_eig, LinalgError, Matrix};
use crate::neural::Mlp;
use crate::phs::{BoxRegion, Hamiltonian, PhsError, PortHamiltonianSystem};

/// Pendulum `H = ½p² + (1 − cos q)`, `J = [[0, 1], [−1, 0]]`, `R = 0`,
/// `G = [0, 1]^T`, region `[−2, 2]²`.
pub fn pendulum_system() -> PortHamiltonianSystem {
    PortHamiltonianSystem {
        name: "pendulum".into(),
        state_dim: 2,
        input_dim: 1,
        j: Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).into(),
        r: Matrix::zeros(2, 2).into(),
        g: Matrix::from_rows(&[&[0.0], &[1.0]]).into(),
        hamiltonian: Hamiltonian::Expr(Expr::parse("0.5*p^2 + (1 - cos(q))", &["q", "p"]).unwrap()),
        region: BoxRegion::cube(2, -2.0, 2.0),
    }
}

/// Linear mass-spring-damper with unit mass and stiffness and damping 0.5.
/// Not part of the pendulum experiment; it has closed-form behaviour and is
/// used for smoke tests.
pub fn mass_spring_damper() -> PortHamiltonianSystem {
    PortHamiltonianSystem {
        name: "mass-spring-damper".into(),
        state_dim: 2,
        input_dim: 1,
        j: Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).into(),
        r: Matrix::from_rows(&[&[0.0, 0.0], &[0.0, 0.5]]).into(),
        g: Matrix::from_rows(&[&[0.0], &[1.0]]).into(),
        hamiltonian: Hamiltonian::Expr(Expr::parse("0.5*q^2 + 0.5*p^2", &["q", "p"]).unwrap()),
        region: BoxRegion::cube(2, -2.0, 2.0),
    }
}

/// Integrator controller `ξ̇ = u_c`, `y_c = ∂H_c/∂ξ` (`J_c = 0`, `R_c = 0`,
/// `G_c = 1`) with a neural `H_c`.
pub fn integrator_controller(hc: Mlp) -> PortHamiltonianSystem {
    integrator_controller_with(Hamiltonian::Net(hc))
}

pub fn integrator_controller_with(hc: Hamiltonian) -> PortHamiltonianSystem {
    integrator(hc, 1)
}

/// `m` decoupled integrators, one per port, over `[−2, 2]^m`.
pub fn integrator(hc: Hamiltonian, m: usize) -> PortHamiltonianSystem {
    PortHamiltonianSystem {
        name: "integrator".into(),
        state_dim: m,
        input_dim: m,
        j: Matrix::zeros(m, m).into(),
        r: Matrix::zeros(m, m).into(),
        g: Matrix::identity(m).into(),
        hamiltonian: hc,
        region: BoxRegion::cube(m, -2.0, 2.0),
    }
}

pub fn builtin_system(id: &str) -> Option<PortHamiltonianSystem> {
    match id {
        "pendulum" => Some(pendulum_system()),
        "mass-spring-damper" | "msd" => Some(mass_spring_damper()),
        _ => None,
    }
}

/// Residuals of the pendulum equilibrium conditions for `V = H + H_c +
/// K(q − ξ)` at `(q*, 0, ξ*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stationarity {
    /// `sin q* + K'(q* − ξ*)`
    pub r1: f64,
    /// `−K'(q* − ξ*) + H_c'(ξ*)`
    pub r2: f64,
    /// The Hessian of `V` at the equilibrium.
    pub m: Matrix,
    pub min_eig: f64,
}

/// `k` and `hc` return `(f', f'')` at their argument.
pub fn stationarity_residual(
    k: &dyn Fn(f64) -> (f64, f64),
    hc: &dyn Fn(f64) -> (f64, f64),
    xi_star: f64,
    q_star: f64,
) -> Result<Stationarity, LinalgError> {
    let (dk, ddk) = k(q_star - xi_star);
    let (dh, ddh) = hc(xi_star);
    let m = Matrix::from_rows(&[
        &[q_star.cos() + ddk, 0.0, -ddk],
        &[0.0, 1.0, 0.0],
        &[-ddk, 0.0, ddk + ddh],
    ]);
    let min_eig = symmetric_eig(&m)?.min();
    Ok(Stationarity { r1: q_star.sin() + dk, r2: -dk + dh, m, min_eig })
}

/// Stationarity of a trained pendulum controller. The Casimir is read back
/// in the unnormalized argument `u = q − ξ`: with orthonormal `v` the stored
/// inner argument is `z^T v = u · v_q`, so `K_paper(u) = C(u, 0, 0)`.
pub fn model_stationarity(
    casimir: &CasimirParameterization,
    hc: &Hamiltonian,
    params: &[f64],
    xi_star: f64,
    q_star: f64,
) -> Result<Stationarity, PhsError> {
    let k = |u: f64| -> (f64, f64) {
        let x = Jet { v: u, g: vec![1.0], h: vec![0.0] };
        let z = [x.clone(), x.constant(0.0), x.constant(0.0)];
        match casimir.eval(params, &z) {
            Ok(j) => (j.g[0], j.h[0]),
            Err(_) => (f64::NAN, f64::NAN),
        }
    };
    let h = |xi: f64| -> (f64, f64) {
        let x = Jet { v: xi, g: vec![1.0], h: vec![0.0] };
        match hc.eval(params, &[x]) {
            Ok(j) => (j.g[0], j.h[0]),
            Err(_) => (f64::NAN, f64::NAN),
        }
    };
    Ok(stationarity_residual(&k, &h, xi_star, q_star)?)
}
