//! Casimir functions of a closed loop: the defining residual
//! `‖(∂C/∂z)^T (J_cl − R_cl)‖`, the kernel-basis parameterization
//! `C(z) = K(Σ_i β_i(z^T v_i))` (a Casimir for any `K`, `β_i` when the
//! structure is constant), and the separable construction
//! `C(z) = K(Σ_i ∫_0^{z_i} F_i)` for coordinate-wise profiles.

use thiserror::Error;

use crate::autodiff::{dot_f, norm, AdError, Dual, Real, VectorProgram};
use crate::expr::Expr;
use crate::linalg::{intersect_kernels, LinalgError};
use crate::neural::{Activation, Mlp, NeuralError, ParamVector};
use crate::phs::{ClosedLoopSystem, PhsError};

/// Absolute quadrature tolerance per coordinate for [`SeparableCasimir`].
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Pass threshold of [`check_integrability`].
pub const INTEGRABILITY_TOL: f64 = 1e-6;

const SIMPSON_MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CasimirError {
    #[error("ker J_cl ∩ ker R_cl is trivial: no Casimir can be parameterized; train with the grid cost instead")]
    NoCasimir,
    #[error("closed-loop structure depends on the state: use a separable Casimir or the grid cost")]
    StateDependent,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadrature did not converge for coordinate {coordinate} on [{lo}, {hi}]")]
    Quadrature { coordinate: usize, lo: f64, hi: f64 },
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Phs(#[from] PhsError),
}

/// A scalar-to-scalar map: identity, closed form in one variable, or a
/// `1 -> 1` network.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarMap {
    Identity,
    Expr(Expr),
    Net(Mlp),
}

impl ScalarMap {
    pub fn eval<S: Real>(&self, params: &[S::Base], x: &S) -> Result<S, CasimirError> {
        match self {
            ScalarMap::Identity => Ok(x.clone()),
            ScalarMap::Expr(e) => Ok(e.eval(std::slice::from_ref(x))?),
            ScalarMap::Net(net) => Ok(net.forward(params, std::slice::from_ref(x))?),
        }
    }

    pub fn value(&self, params: &[f64], x: f64) -> Result<f64, CasimirError> {
        self.eval(params, &x)
    }

    /// Value and first derivative.
    pub fn value_deriv(&self, params: &[f64], x: f64) -> Result<(f64, f64), CasimirError> {
        let d = self.eval(params, &Dual { v: x, g: vec![1.0] })?;
        Ok((d.v, d.g[0]))
    }

    pub fn as_net(&self) -> Option<&Mlp> {
        match self {
            ScalarMap::Net(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CasimirParameterization {
    basis: Vec<Vec<f64>>,
    inner: Vec<ScalarMap>,
    outer: ScalarMap,
}

/// Builds `C(z) = K(Σ β_i(z^T v_i))` for the closed loop.
///
/// `K` gets segment `"k"` and seed `seed`; when `widths_beta` is given each
/// `β_i` is a network in segment `"beta_{i}"` seeded `seed + 1 + i`,
/// otherwise the `β_i` are identities.
pub fn build_parameterization(
    cl: &ClosedLoopSystem,
    params: &mut ParamVector,
    widths_k: &[usize],
    widths_beta: Option<&[usize]>,
    activation: Activation,
    seed: u64,
) -> Result<CasimirParameterization, CasimirError> {
    let (j, r) = cl.constant_structure().ok_or(CasimirError::StateDependent)?;
    let basis = intersect_kernels(&j, &r)?;
    if basis.is_empty() {
        return Err(CasimirError::NoCasimir);
    }
    let outer = ScalarMap::Net(Mlp::new(widths_k, activation, seed, params, "k")?);
    let inner = (0..basis.len())
        .map(|i| match widths_beta {
            Some(w) => Ok(ScalarMap::Net(Mlp::new(w, activation, seed + 1 + i as u64, params, &format!("beta_{i}"))?)),
            None => Ok(ScalarMap::Identity),
        })
        .collect::<Result<Vec<_>, CasimirError>>()?;
    Ok(CasimirParameterization { basis, inner, outer })
}

impl CasimirParameterization {
    pub fn from_parts(basis: Vec<Vec<f64>>, inner: Vec<ScalarMap>, outer: ScalarMap) -> Result<Self, CasimirError> {
        if basis.is_empty() {
            return Err(CasimirError::NoCasimir);
        }
        if inner.len() != basis.len() {
            return Err(CasimirError::Dimension(format!("{} inner maps for {} basis vectors", inner.len(), basis.len())));
        }
        Ok(Self { basis, inner, outer })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn inner(&self) -> &[ScalarMap] {
        &self.inner
    }

    pub fn outer(&self) -> &ScalarMap {
        &self.outer
    }

    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    /// The argument of `K`: `Σ_i β_i(z^T v_i)`.
    pub fn inner_sum<S: Real>(&self, params: &[S::Base], z: &[S]) -> Result<S, CasimirError> {
        if z.len() != self.dim() {
            return Err(CasimirError::Dimension(format!("state has length {}, expected {}", z.len(), self.dim())));
        }
        let mut acc: Option<S> = None;
        for (v, beta) in self.basis.iter().zip(&self.inner) {
            let t = beta.eval(params, &dot_f(z, v))?;
            acc = Some(match acc {
                None => t,
                Some(a) => a.add(&t),
            });
        }
        Ok(acc.unwrap())
    }

    pub fn eval<S: Real>(&self, params: &[S::Base], z: &[S]) -> Result<S, CasimirError> {
        let s = self.inner_sum(params, z)?;
        self.outer.eval(params, &s)
    }

    pub fn value(&self, params: &[f64], z: &[f64]) -> Result<f64, CasimirError> {
        self.eval(params, z)
    }

    pub fn grad(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>, CasimirError> {
        Ok(self.eval(params, &Dual::variables(z))?.g)
    }
}

/// `‖(∂C/∂z)^T (J_cl(z) − R_cl(z))‖`
pub fn casimir_residual(cgrad: &[f64], cl: &ClosedLoopSystem, z: &[f64]) -> Result<f64, CasimirError> {
    if cgrad.len() != cl.dim() {
        return Err(CasimirError::Dimension(format!("gradient has length {}, expected {}", cgrad.len(), cl.dim())));
    }
    let (j, r) = cl.structure_at(z)?;
    let row = j.sub(&r)?.vecmat(cgrad)?;
    Ok(norm(&row))
}

/// Residual row in any [`Real`], for use inside training losses.
pub fn casimir_residual_generic<S: Real>(cgrad: &[S], jr: &crate::linalg::Matrix) -> S {
    let n = jr.cols();
    let row: Vec<S> = (0..n).map(|j| dot_f(cgrad, &jr.col(j))).collect();
    norm(&row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrabilityReport {
    /// max over samples and index pairs of `|∂F_i/∂z_j − ∂F_j/∂z_i|`
    pub max_violation: f64,
    pub worst_sample: Option<usize>,
    pub pass: bool,
}

/// Checks the symmetry of the Jacobian of `field` at every sample.
pub fn check_integrability<F: VectorProgram>(field: &F, samples: &[Vec<f64>]) -> Result<IntegrabilityReport, CasimirError> {
    let mut worst = 0.0;
    let mut worst_sample = None;
    for (k, z) in samples.iter().enumerate() {
        let jac = crate::autodiff::jacobian(field, z)?;
        if !jac.is_square() {
            return Err(CasimirError::Dimension("field must map R^n to R^n".into()));
        }
        for i in 0..jac.rows() {
            for j in i + 1..jac.cols() {
                let d = (jac[(i, j)] - jac[(j, i)]).abs();
                if d > worst {
                    worst = d;
                    worst_sample = Some(k);
                }
            }
        }
    }
    Ok(IntegrabilityReport { max_violation: worst, worst_sample, pass: worst <= INTEGRABILITY_TOL })
}

/// `C(z) = K(Σ_i ∫_0^{z_i} F_i(s) ds)` for profiles `F_i` that depend only
/// on their own coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableCasimir {
    profiles: Vec<ScalarMap>,
    outer: ScalarMap,
    tol: f64,
}

impl SeparableCasimir {
    pub fn new(profiles: Vec<ScalarMap>, outer: ScalarMap) -> Self {
        Self { profiles, outer, tol: QUADRATURE_TOL }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.profiles.len()
    }

    fn check(&self, z: &[f64]) -> Result<(), CasimirError> {
        if z.len() != self.dim() {
            return Err(CasimirError::Dimension(format!("state has length {}, expected {}", z.len(), self.dim())));
        }
        Ok(())
    }

    /// `Σ_i ∫_0^{z_i} F_i`
    pub fn inner_sum(&self, params: &[f64], z: &[f64]) -> Result<f64, CasimirError> {
        self.check(z)?;
        let mut acc = 0.0;
        for (i, (f, &zi)) in self.profiles.iter().zip(z).enumerate() {
            acc += adaptive_simpson(|s| f.value(params, s), 0.0, zi, self.tol)
                .map_err(|e| e.unwrap_or(CasimirError::Quadrature { coordinate: i, lo: 0.0, hi: zi }))?;
        }
        Ok(acc)
    }

    pub fn eval(&self, params: &[f64], z: &[f64]) -> Result<f64, CasimirError> {
        let s = self.inner_sum(params, z)?;
        self.outer.value(params, s)
    }

    /// `K'(s) · (F_1(z_1), …, F_n(z_n))`
    pub fn grad(&self, params: &[f64], z: &[f64]) -> Result<Vec<f64>, CasimirError> {
        let s = self.inner_sum(params, z)?;
        let (_, dk) = self.outer.value_deriv(params, s)?;
        self.profiles.iter().zip(z).map(|(f, &zi)| Ok(dk * f.value(params, zi)?)).collect()
    }
}

/// Adaptive Simpson quadrature with Richardson correction. `Err(None)`
/// signals non-convergence; function errors propagate as `Err(Some(_))`.
fn adaptive_simpson(
    f: impl Fn(f64) -> Result<f64, CasimirError>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, Option<CasimirError>> {
    if a == b {
        return Ok(0.0);
    }
    let eval = |x: f64| -> Result<f64, Option<CasimirError>> {
        let v = f(x).map_err(Some)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(None)
        }
    };
    struct Panel {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    }
    let simpson = |a: f64, b: f64, fa: f64, fm: f64, fb: f64| (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let fa = eval(a)?;
    let fb = eval(b)?;
    let fm = eval(0.5 * (a + b))?;
    let mut stack = vec![Panel { a, b, fa, fm, fb, whole: simpson(a, b, fa, fm, fb), tol, depth: 0 }];
    let mut total = 0.0;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = eval(lm)?;
        let frm = eval(rm)?;
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        if delta.abs() <= 15.0 * p.tol {
            total += left + right + delta / 15.0;
        } else if p.depth >= SIMPSON_MAX_DEPTH {
            return Err(None);
        } else {
            stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol: 0.5 * p.tol, depth: p.depth + 1 });
            stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol: 0.5 * p.tol, depth: p.depth + 1 });
        }
    }
    Ok(total)
}
