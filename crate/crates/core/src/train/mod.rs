//! Shaped Lyapunov functions, the training losses and the ADAM loop.

mod adam;
mod minimum;

pub use adam::{adam_train, AdamSettings, EpochRecord, ReportMetadata, TrainReport};
pub use minimum::{find_minimum, Minimum, NEWTON_GRAD_TOL};

use thiserror::Error;

use crate::autodiff::{lambda_min, norm, param_grad, relu, sum_sq, AdError, Dual, Jet, ParamGrad, Real};
use crate::casimir::{casimir_residual_generic, CasimirError, CasimirParameterization};
use crate::expr::Expr;
use crate::linalg::{LinalgError, Matrix};
use crate::neural::{Mlp, NeuralError, Segment};
use crate::phs::{ClosedLoopSystem, PhsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training problem: {0}")]
    InvalidProblem(String),
    #[error("bound undefined: margin {margin} does not exceed epsilon {epsilon}")]
    BoundUndefined { epsilon: f64, margin: f64 },
    #[error("non-finite loss at epoch {epoch}; parameters restored to the last finite snapshot")]
    NonFinite { epoch: usize, last_good: Vec<f64> },
    #[error("minimum search left the trust radius {radius} (distance {distance})")]
    MinimumEscaped { radius: f64, distance: f64 },
    #[error("minimum search failed: {0}")]
    NoMinimum(String),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Casimir(#[from] CasimirError),
    #[error(transparent)]
    Phs(#[from] PhsError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The Casimir term of a shaped Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub enum CasimirModel {
    Zero,
    /// Kernel-basis parameterization, a Casimir for every parameter value.
    Kernel(CasimirParameterization),
    /// Unconstrained `n -> 1` network; only the grid cost makes it a
    /// Casimir.
    Free(Mlp),
    /// Closed form in the closed-loop state.
    Expr(Expr),
}

impl CasimirModel {
    pub fn eval<S: Real>(&self, params: &[S::Base], z: &[S]) -> Result<S, TrainError> {
        match self {
            CasimirModel::Zero => Ok(z[0].constant(0.0)),
            CasimirModel::Kernel(c) => Ok(c.eval(params, z)?),
            CasimirModel::Free(net) => Ok(net.forward(params, z)?),
            CasimirModel::Expr(e) => Ok(e.eval(z)?),
        }
    }
}

/// How `H + H_c` and `C` are combined.
#[derive(Debug, Clone, PartialEq)]
pub enum Composition {
    /// `V = H + H_c + C`
    FixedSum,
    /// `V = Φ(H + H_c, C)` with a `2 -> 1` network `Φ`.
    NeuralPhi(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovComposition {
    pub closed_loop: ClosedLoopSystem,
    pub casimir: CasimirModel,
    pub mode: Composition,
}

impl LyapunovComposition {
    pub fn fixed_sum(closed_loop: ClosedLoopSystem, casimir: CasimirModel) -> Self {
        Self { closed_loop, casimir, mode: Composition::FixedSum }
    }

    pub fn dim(&self) -> usize {
        self.closed_loop.dim()
    }

    pub fn eval<S: Real>(&self, params: &[S::Base], z: &[S]) -> Result<S, TrainError> {
        if z.len() != self.dim() {
            return Err(PhsError::Dimension(format!("state has length {}, expected {}", z.len(), self.dim())).into());
        }
        let h = self.closed_loop.hamiltonian(params, z)?;
        let c = self.casimir.eval(params, z)?;
        match &self.mode {
            Composition::FixedSum => Ok(h.add(&c)),
            Composition::NeuralPhi(phi) => Ok(phi.forward(params, &[h, c])?),
        }
    }

    pub fn value(&self, params: &[f64], z: &[f64]) -> Result<f64, TrainError> {
        self.eval(params, z)
    }

    pub fn grad(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>, TrainError> {
        let out = self.eval(params, &Dual::variables(z))?;
        check_finite(&out.g, "lyapunov gradient")?;
        Ok(out.g)
    }

    pub fn hessian(&self, params: &[f64], z: &[f64]) -> Result<Matrix, TrainError> {
        let out = self.eval(params, &Jet::variables(z))?;
        check_finite(&out.h, "lyapunov hessian")?;
        Ok(Matrix::new(z.len(), z.len(), out.h)?)
    }

    /// Value, gradient and Hessian in one pass.
    pub fn jet(&self, params: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>, Matrix), TrainError> {
        let out = self.eval(params, &Jet::variables(z))?;
        check_finite(&out.g, "lyapunov gradient")?;
        check_finite(&out.h, "lyapunov hessian")?;
        Ok((out.v, out.g, Matrix::new(z.len(), z.len(), out.h)?))
    }

    pub fn casimir_grad(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>, TrainError> {
        Ok(self.casimir.eval(params, &Dual::variables(z))?.g)
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<(), TrainError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(AdError::domain(what).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// `‖∂V/∂z(z*)‖ + ReLU(−λ_min(∂²V/∂z²(z*) − aI))` with the problem
    /// margin.
    Parameterized,
    /// `Σ_i ‖(∂C/∂z(z_i))^T (J_cl − R_cl)(z_i)‖` plus the two terms above
    /// with their own margin (0 by default).
    Grid { points: Vec<Vec<f64>>, margin: f64, reduction: Reduction },
}

/// Region-of-attraction regularizer `ReLU(mean(‖z_i‖² − γ V(z_i)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoaSettings {
    pub gamma: f64,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainProblem {
    pub lyapunov: LyapunovComposition,
    pub x_star: Vec<f64>,
    /// Segment of the parameter vector holding the trainable `ξ*`.
    pub xi_segment: Segment,
    pub margin: f64,
    pub loss: LossKind,
    pub roa: Option<RoaSettings>,
    pub optimizer: AdamSettings,
}

impl TrainProblem {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidProblem(m));
        let cl = &self.lyapunov.closed_loop;
        if self.x_star.len() != cl.plant_dim() {
            return bad(format!("x* has length {}, plant has dimension {}", self.x_star.len(), cl.plant_dim()));
        }
        if self.xi_segment.len != cl.controller_dim() {
            return bad(format!("ξ* segment has length {}, controller has dimension {}", self.xi_segment.len, cl.controller_dim()));
        }
        if !(self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if let LossKind::Grid { points, margin, .. } = &self.loss {
            if points.is_empty() {
                return bad("grid is empty".into());
            }
            if points.iter().any(|p| p.len() != cl.dim()) {
                return bad("grid point dimension does not match the closed loop".into());
            }
            if !(*margin >= 0.0) {
                return bad(format!("grid margin must be nonnegative, got {margin}"));
            }
        }
        if let Some(roa) = &self.roa {
            if !(roa.gamma > 0.0) {
                return bad(format!("ROA gamma must be positive, got {}", roa.gamma));
            }
            if roa.samples.is_empty() {
                return bad("ROA needs at least one sample".into());
            }
        }
        self.optimizer.validate()
    }

    /// Margin used in the Hessian term of the active loss.
    pub fn active_margin(&self) -> f64 {
        match &self.loss {
            LossKind::Parameterized => self.margin,
            LossKind::Grid { margin, .. } => *margin,
        }
    }

    pub fn z_star(&self, params: &[f64]) -> Vec<f64> {
        let mut z = self.x_star.clone();
        z.extend_from_slice(&params[self.xi_segment.range()]);
        z
    }

    fn z_star_generic<S: Real>(&self, params: &[S]) -> Vec<S> {
        let mut z: Vec<S> = self.x_star.iter().map(|&x| params[0].constant(x)).collect();
        z.extend_from_slice(&params[self.xi_segment.range()]);
        z
    }
}

/// Per-term values of a loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub grad_term: f64,
    pub hessian_term: f64,
    pub grid_term: f64,
    pub roa_term: f64,
    /// `λ_min` was (nearly) repeated, so its derivative is a subgradient.
    pub degenerate: bool,
}

/// The stationarity and convexity terms at `z*`.
fn minimum_terms<S: Real<Base = S>>(
    problem: &TrainProblem,
    params: &[S],
    margin: f64,
) -> Result<(S, S, bool), TrainError> {
    let zs = Jet::variables(&problem.z_star_generic(params));
    let v = problem.lyapunov.eval::<Jet<S>>(params, &zs)?;
    let n = zs.len();
    let grad_term = norm(&v.g);
    let mut shifted = v.h;
    for i in 0..n {
        shifted[i * n + i] = shifted[i * n + i].add_f(-margin);
    }
    let eig = lambda_min(&shifted, n)?;
    Ok((grad_term, relu(&eig.value.neg()), eig.degenerate))
}

fn grid_term<S: Real<Base = S>>(
    problem: &TrainProblem,
    params: &[S],
    points: &[Vec<f64>],
    reduction: Reduction,
) -> Result<S, TrainError> {
    let cl = &problem.lyapunov.closed_loop;
    let constant = cl.constant_structure().map(|(j, r)| j.sub(&r)).transpose()?;
    let mut acc = params[0].constant(0.0);
    for z in points {
        let zc: Vec<S> = z.iter().map(|&x| params[0].constant(x)).collect();
        let c = problem.lyapunov.casimir.eval::<Dual<S>>(params, &Dual::variables(&zc))?;
        let jr = match &constant {
            Some(m) => m.clone(),
            None => {
                let (j, r) = cl.structure_at(z)?;
                j.sub(&r)?
            }
        };
        acc = acc.add(&casimir_residual_generic(&c.g, &jr));
    }
    Ok(match reduction {
        Reduction::Sum => acc,
        Reduction::Mean => acc.mul_f(1.0 / points.len() as f64),
    })
}

/// `ReLU((1/N) Σ (‖z_i‖² − γ V(z_i)))`
pub fn roa_regularizer<S: Real<Base = S>>(
    lyapunov: &LyapunovComposition,
    params: &[S],
    samples: &[Vec<f64>],
    gamma: f64,
) -> Result<S, TrainError> {
    let mut acc = params[0].constant(0.0);
    for z in samples {
        let zc: Vec<S> = z.iter().map(|&x| params[0].constant(x)).collect();
        let v = lyapunov.eval::<S>(params, &zc)?;
        acc = acc.add(&sum_sq(&zc).sub(&v.mul_f(gamma)));
    }
    Ok(relu(&acc.mul_f(1.0 / samples.len() as f64)))
}

/// Loss of the problem's configured kind, generic over plain values and
/// tape variables.
pub fn loss_terms<S: Real<Base = S>>(problem: &TrainProblem, params: &[S]) -> Result<(S, LossBreakdown), TrainError> {
    let (g, h, degenerate) = minimum_terms(problem, params, problem.active_margin())?;
    let mut total = g.add(&h);
    let mut out = LossBreakdown { grad_term: g.value(), hessian_term: h.value(), degenerate, ..Default::default() };
    if let LossKind::Grid { points, reduction, .. } = &problem.loss {
        let gt = grid_term(problem, params, points, *reduction)?;
        out.grid_term = gt.value();
        total = total.add(&gt);
    }
    if let Some(roa) = &problem.roa {
        let r = roa_regularizer(&problem.lyapunov, params, &roa.samples, roa.gamma)?;
        out.roa_term = r.value();
        total = total.add(&r);
    }
    if !total.is_finite() {
        return Err(AdError::domain("loss").into());
    }
    out.total = total.value();
    Ok((total, out))
}

/// `‖∂V/∂z(z*)‖ + ReLU(−λ_min(∂²V/∂z²(z*) − aI))`
pub fn loss_parameterized(problem: &TrainProblem, params: &[f64]) -> Result<LossBreakdown, TrainError> {
    if problem.loss != LossKind::Parameterized {
        return Err(TrainError::InvalidProblem("problem is not in parameterized mode".into()));
    }
    Ok(loss_terms(problem, params)?.1)
}

/// Grid cost plus the stationarity and convexity terms at `z*`.
pub fn loss_grid(problem: &TrainProblem, params: &[f64]) -> Result<LossBreakdown, TrainError> {
    if !matches!(problem.loss, LossKind::Grid { .. }) {
        return Err(TrainError::InvalidProblem("problem is not in grid mode".into()));
    }
    Ok(loss_terms(problem, params)?.1)
}

/// Loss and its gradient w.r.t. every parameter.
pub fn loss_and_grad(problem: &TrainProblem, params: &[f64]) -> Result<ParamGrad<LossBreakdown>, TrainError> {
    let mut err = None;
    let res = param_grad(params, |vars| match loss_terms(problem, vars) {
        Ok(v) => Ok(v),
        Err(TrainError::Ad(a)) => Err(a),
        Err(e) => {
            let msg = e.to_string();
            err = Some(e);
            Err(AdError::Structural(msg))
        }
    });
    match (res, err) {
        (Ok(g), _) => Ok(g),
        (Err(_), Some(e)) => Err(e),
        (Err(a), None) => Err(a.into()),
    }
}

/// `ε / (a − ε)`
pub fn error_bound(epsilon: f64, margin: f64) -> Result<f64, TrainError> {
    if !(epsilon >= 0.0) || margin <= epsilon {
        return Err(TrainError::BoundUndefined { epsilon, margin });
    }
    Ok(epsilon / (margin - epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::systems::{integrator_controller_with, pendulum_system};
    use crate::neural::ParamVector;
    use crate::phs::{interconnect, Hamiltonian};

    fn pendulum_loop() -> ClosedLoopSystem {
        interconnect(pendulum_system(), integrator_controller_with(Hamiltonian::Expr(Expr::Const(0.0)))).unwrap()
    }

    fn zero_loop() -> ClosedLoopSystem {
        let mut p = pendulum_system();
        p.hamiltonian = Hamiltonian::Expr(Expr::Const(0.0));
        interconnect(p, integrator_controller_with(Hamiltonian::Expr(Expr::Const(0.0)))).unwrap()
    }

    fn quadratic_problem(center: [f64; 3], margin: f64, loss: LossKind) -> (TrainProblem, ParamVector) {
        let mut pv = ParamVector::new();
        let seg = pv.register("xi_star", 1).unwrap();
        pv.values_mut()[0] = center[2];
        let src = format!("0.5*((q - {})^2 + (p - {})^2 + (xi - {})^2)", center[0], center[1], center[2]);
        let v = Expr::parse(&src, &["q", "p", "xi"]).unwrap();
        let problem = TrainProblem {
            lyapunov: LyapunovComposition::fixed_sum(zero_loop(), CasimirModel::Expr(v)),
            x_star: vec![center[0], center[1]],
            xi_segment: seg,
            margin,
            loss,
            roa: None,
            optimizer: AdamSettings::default(),
        };
        (problem, pv)
    }

    #[test]
    fn plain_pendulum_energy_has_zero_gradient_at_origin() {
        let l = LyapunovComposition::fixed_sum(pendulum_loop(), CasimirModel::Zero);
        assert_eq!(l.grad(&[], &[0.0, 0.0, 1.7]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hessian_is_additive_for_quadratics() {
        let mut p = pendulum_system();
        p.hamiltonian = Hamiltonian::Expr(Expr::parse("q^2 + 3*q*p", &["q", "p"]).unwrap());
        let cl = interconnect(p, integrator_controller_with(Hamiltonian::Expr(Expr::parse("2*x^2", &["x"]).unwrap()))).unwrap();
        let c = Expr::parse("(q - xi)^2", &["q", "p", "xi"]).unwrap();
        let l = LyapunovComposition::fixed_sum(cl, CasimirModel::Expr(c));
        let h = l.hessian(&[], &[0.3, -0.2, 0.9]).unwrap();
        let expected = Matrix::from_rows(&[&[4.0, 3.0, -2.0], &[3.0, 0.0, 0.0], &[-2.0, 0.0, 6.0]]);
        assert_eq!(h, expected);
    }

    #[test]
    fn quadratic_losses() {
        let (p, pv) = quadratic_problem([0.3, 0.0, -0.5], 0.5, LossKind::Parameterized);
        assert_eq!(loss_parameterized(&p, pv.values()).unwrap().total, 0.0);
        let (p, pv) = quadratic_problem([0.3, 0.0, -0.5], 2.0, LossKind::Parameterized);
        let l = loss_parameterized(&p, pv.values()).unwrap();
        assert!((l.total - 1.0).abs() < 1e-14);
        assert!(l.degenerate);
    }

    #[test]
    fn grid_loss_with_single_point_casimir() {
        let grid = LossKind::Grid { points: vec![vec![0.1, 0.2, 0.3]], margin: 0.0, reduction: Reduction::Sum };
        let (mut p, pv) = quadratic_problem([0.0; 3], 0.5, grid);
        // C(z) = z_2 on the pendulum loop
        p.lyapunov.casimir = CasimirModel::Expr(Expr::Var(1));
        let l = loss_grid(&p, pv.values()).unwrap();
        assert!((l.grid_term - 2f64.sqrt()).abs() < 1e-15);
        assert!(loss_parameterized(&p, pv.values()).is_err());
    }

    #[test]
    fn grid_loss_zero_for_quadratic_without_casimir() {
        let points = crate::phs::BoxRegion::cube(3, -2.0, 2.0).grid(3);
        let grid = LossKind::Grid { points, margin: 0.0, reduction: Reduction::Sum };
        let (mut p, pv) = quadratic_problem([0.0; 3], 0.5, grid);
        let mut plant = pendulum_system();
        plant.hamiltonian = Hamiltonian::Expr(Expr::parse("0.5*q^2 + 0.5*p^2", &["q", "p"]).unwrap());
        let cl = interconnect(plant, integrator_controller_with(Hamiltonian::Expr(Expr::parse("0.5*x^2", &["x"]).unwrap()))).unwrap();
        p.lyapunov = LyapunovComposition::fixed_sum(cl, CasimirModel::Zero);
        assert_eq!(loss_grid(&p, pv.values()).unwrap().total, 0.0);
    }

    #[test]
    fn kernel_casimir_has_vanishing_grid_term() {
        let mut pv = ParamVector::new();
        let cl = pendulum_loop();
        let c = crate::casimir::build_parameterization(&cl, &mut pv, &[1, 8, 1], None, Default::default(), 5).unwrap();
        let seg = pv.register("xi_star", 1).unwrap();
        let points = crate::phs::BoxRegion::cube(3, -2.0, 2.0).grid(5);
        let n = points.len() as f64;
        let problem = TrainProblem {
            lyapunov: LyapunovComposition::fixed_sum(cl, CasimirModel::Kernel(c)),
            x_star: vec![0.5, 0.0],
            xi_segment: seg,
            margin: 0.5,
            loss: LossKind::Grid { points, margin: 0.0, reduction: Reduction::Sum },
            roa: None,
            optimizer: AdamSettings::default(),
        };
        assert!(loss_grid(&problem, pv.values()).unwrap().grid_term <= 1e-9 * n);
    }

    #[test]
    fn roa_examples() {
        let cl = zero_loop();
        let sq = LyapunovComposition::fixed_sum(cl.clone(), CasimirModel::Expr(Expr::parse("q^2 + p^2 + x^2", &["q", "p", "x"]).unwrap()));
        let samples = vec![vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 0.0]];
        assert_eq!(roa_regularizer::<f64>(&sq, &[0.0], &samples, 1.0).unwrap(), 0.0);
        let zero = LyapunovComposition::fixed_sum(cl, CasimirModel::Zero);
        let two = vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]];
        assert_eq!(roa_regularizer::<f64>(&zero, &[0.0], &two, 1.0).unwrap(), 2.0);
        let three = vec![vec![1.0, 1.0, 1.0]];
        assert_eq!(roa_regularizer::<f64>(&sq, &[0.0], &three, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn bound_arithmetic() {
        assert!((error_bound(0.005, 0.5).unwrap() - 0.0101).abs() < 5e-5);
        assert_eq!(error_bound(0.0, 0.3).unwrap(), 0.0);
        assert!((error_bound(0.1, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(error_bound(0.5, 0.5), Err(TrainError::BoundUndefined { .. })));
        assert!(matches!(error_bound(0.7, 0.5), Err(TrainError::BoundUndefined { .. })));
    }

    #[test]
    fn invalid_problems_rejected() {
        let (mut p, _) = quadratic_problem([0.0; 3], 0.5, LossKind::Parameterized);
        assert!(p.validate().is_ok());
        p.margin = 0.0;
        assert!(p.validate().is_err());
        p.margin = 0.5;
        p.loss = LossKind::Grid { points: vec![], margin: 0.0, reduction: Reduction::Sum };
        assert!(p.validate().is_err());
        p.loss = LossKind::Parameterized;
        p.roa = Some(RoaSettings { gamma: 0.0, samples: vec![vec![0.0; 3]] });
        assert!(p.validate().is_err());
    }
}
