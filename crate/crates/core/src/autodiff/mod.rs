//! Nested automatic differentiation.
//!
//! Derivatives in the state `z` (dimension ≤ ~10) are forward mode:
//! [`Dual`] carries gradients and [`Jet`] carries gradients plus Hessians.
//! Both nest over any [`Real`], so running them over the reverse-mode
//! [`Var`] yields the gradient w.r.t. network parameters of quantities that
//! already contain `∂V/∂z` and `∂²V/∂z²`, in a single backward sweep.

mod dual;
mod real;
mod tape;

pub use dual::{Dual, Jet};
pub use real::{dot_f, norm, relu, sum, sum_sq, Real};
pub use tape::{Tape, Var};

use thiserror::Error;

use crate::linalg::{symmetric_eig, LinalgError, Matrix};

/// Eigenvalue gap below which the minimal eigenvalue is reported as repeated.
pub const DEGENERACY_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("non-finite value produced by `{primitive}`")]
    NumericDomain { primitive: String },
    #[error("structural error: {0}")]
    Structural(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl AdError {
    pub fn domain(primitive: impl Into<String>) -> Self {
        AdError::NumericDomain { primitive: primitive.into() }
    }
}

/// A scalar function of a real vector, written once against [`Real`].
pub trait ScalarProgram {
    fn eval<S: Real>(&self, z: &[S]) -> Result<S, AdError>;
}

/// A vector field `R^n -> R^m` written against [`Real`].
pub trait VectorProgram {
    fn eval<S: Real>(&self, z: &[S]) -> Result<Vec<S>, AdError>;
}

fn check_all<'a>(vals: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<(), AdError> {
    if vals.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AdError::domain(what))
    }
}

pub fn value<F: ScalarProgram>(f: &F, at: &[f64]) -> Result<f64, AdError> {
    let v = f.eval(at)?;
    check_all([&v], "output")?;
    Ok(v)
}

/// `∇f(at)`
pub fn grad<F: ScalarProgram>(f: &F, at: &[f64]) -> Result<Vec<f64>, AdError> {
    let out = f.eval(&Dual::variables(at))?;
    check_all(std::iter::once(&out.v).chain(&out.g), "output")?;
    Ok(out.g)
}

/// `∇²f(at)`, symmetric by construction.
pub fn hessian<F: ScalarProgram>(f: &F, at: &[f64]) -> Result<Matrix, AdError> {
    let out = f.eval(&Jet::variables(at))?;
    check_all(std::iter::once(&out.v).chain(&out.g).chain(&out.h), "output")?;
    Ok(Matrix::new(at.len(), at.len(), out.h)?)
}

/// Jacobian `∂F_i/∂z_j` of a vector field.
pub fn jacobian<F: VectorProgram>(f: &F, at: &[f64]) -> Result<Matrix, AdError> {
    let out = f.eval(&Dual::variables(at))?;
    let n = at.len();
    let m = out.len();
    let mut data = Vec::with_capacity(m * n);
    for d in &out {
        check_all(std::iter::once(&d.v).chain(&d.g), "output")?;
        data.extend_from_slice(&d.g);
    }
    Ok(Matrix::new(m, n, data)?)
}

/// Smallest eigenvalue of a symmetric matrix held in any [`Real`].
#[derive(Debug, Clone)]
pub struct MinEig<S> {
    pub value: S,
    /// Unit eigenvector used for the derivative `dλ = v^T dS v`.
    pub vector: Vec<f64>,
    /// Set when the two smallest eigenvalues are within [`DEGENERACY_GAP`];
    /// the derivative is then only a subgradient.
    pub degenerate: bool,
}

/// `λ_min` of the row-major symmetric `n x n` matrix `entries`.
///
/// The eigenvector is computed on plain values; the returned eigenvalue is
/// re-expressed as `v^T S v` in `S`, which carries exactly the first-order
/// eigenvalue perturbation `v^T dS v` for a simple eigenvalue.
pub fn lambda_min<S: Real>(entries: &[S], n: usize) -> Result<MinEig<S>, AdError> {
    if entries.len() != n * n {
        return Err(AdError::Structural(format!("expected {} entries, got {}", n * n, entries.len())));
    }
    let vals: Vec<f64> = entries.iter().map(Real::value).collect();
    check_all(&vals, "lambda_min")?;
    let spec = symmetric_eig(&Matrix::new(n, n, vals)?)?;
    let v = spec.vector(0);
    let mut acc: Option<S> = None;
    for i in 0..n {
        for j in 0..n {
            let c = v[i] * v[j];
            if c == 0.0 {
                continue;
            }
            let term = entries[i * n + j].mul_f(c);
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term),
            });
        }
    }
    let value = acc.unwrap_or_else(|| entries[0].constant(0.0));
    Ok(MinEig { value, vector: v, degenerate: spec.lower_gap() < DEGENERACY_GAP })
}

/// Result of [`param_grad`].
#[derive(Debug, Clone)]
pub struct ParamGrad<R> {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub extra: R,
}

/// Gradient of a scalar loss w.r.t. a flat parameter vector.
///
/// `loss` receives the parameters as tape variables and may internally take
/// forward derivatives in other inputs (nesting [`Dual`]/[`Jet`] over
/// [`Var`]), call [`lambda_min`], [`norm`], [`relu`] and so on. It returns
/// the loss together with any side data `R` (term breakdowns, flags).
pub fn param_grad<R, F>(params: &[f64], loss: F) -> Result<ParamGrad<R>, AdError>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Result<(Var<'t>, R), AdError>,
{
    let tape = Tape::with_capacity(1 << 14);
    let vars: Vec<Var<'_>> = params.iter().map(|&p| tape.var(p)).collect();
    let (out, extra) = loss(&vars)?;
    if !out.value().is_finite() {
        return Err(AdError::domain("loss"));
    }
    let adj = tape.gradient(&out);
    let gradient = adj[..params.len()].to_vec();
    check_all(&gradient, "loss gradient")?;
    Ok(ParamGrad { value: out.value(), gradient, extra })
}
