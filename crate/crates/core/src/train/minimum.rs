use super::{LyapunovComposition, TrainError};
use crate::linalg::{self, solve_spd, symmetric_eig};

/// Gradient norm at which [`find_minimum`] stops.
pub const NEWTON_GRAD_TOL: f64 = 1e-10;

const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub z: Vec<f64>,
    pub grad_norm: f64,
    pub min_hessian_eigenvalue: f64,
    pub iterations: usize,
    pub value: f64,
}

/// Local minimizer of `V` near `start`.
///
/// Newton steps with backtracking on `‖∂V/∂z‖²` while the Hessian is
/// positive definite, Armijo gradient steps on `V` otherwise.
pub fn find_minimum(
    lyapunov: &LyapunovComposition,
    params: &[f64],
    start: &[f64],
    radius: f64,
) -> Result<Minimum, TrainError> {
    let mut z = start.to_vec();
    let (mut v, mut g, mut h) = lyapunov.jet(params, &z)?;
    for it in 0..MAX_ITERATIONS {
        let gn = linalg::norm(&g);
        if gn <= NEWTON_GRAD_TOL {
            let lam = symmetric_eig(&h)?.min();
            if lam <= 0.0 {
                return Err(TrainError::NoMinimum(format!("stationary point with λ_min = {lam:e} is not a minimum")));
            }
            return Ok(Minimum { z, grad_norm: gn, min_hessian_eigenvalue: lam, iterations: it, value: v });
        }
        let newton = solve_spd(&h, &g)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = match &newton {
                Some(d) => z.iter().zip(d).map(|(zi, di)| zi - t * di).collect(),
                None => z.iter().zip(&g).map(|(zi, gi)| zi - t * gi).collect(),
            };
            let (tv, tg, th) = lyapunov.jet(params, &trial)?;
            let better = match newton {
                Some(_) => linalg::norm(&tg) < (1.0 - 1e-4 * t) * gn,
                None => tv <= v - 1e-4 * t * gn * gn,
            };
            if better {
                accepted = Some((trial, tv, tg, th));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, tv, tg, th)) = accepted else {
            // no progress possible in floating point
            let lam = symmetric_eig(&h)?.min();
            if gn <= 1e3 * NEWTON_GRAD_TOL && lam > 0.0 {
                return Ok(Minimum { z, grad_norm: gn, min_hessian_eigenvalue: lam, iterations: it, value: v });
            }
            return Err(TrainError::NoMinimum(format!("line search stalled at ‖∂V/∂z‖ = {gn:e}")));
        };
        let distance = linalg::norm(&linalg::sub(&trial, start));
        if distance > radius {
            return Err(TrainError::MinimumEscaped { radius, distance });
        }
        (z, v, g, h) = (trial, tv, tg, th);
    }
    Err(TrainError::NoMinimum(format!("no convergence in {MAX_ITERATIONS} iterations")))
}
