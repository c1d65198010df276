#![allow(dead_code)]

use neural_casimir::bench::config::ExperimentConfig;
use neural_casimir::expr::{Expr, Func};
use neural_casimir::linalg::Matrix;
use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub struct Rand(Xoshiro256PlusPlus);

impl Rand {
    pub fn new(seed: u64) -> Self {
        Rand(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.unit() * n as f64) as usize % n
    }

    pub fn vector(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn symmetric(&mut self, n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.uniform(-1.0, 1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

pub fn central_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn central_hessian(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    let at = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut y = x.to_vec();
        y[di] += si * h;
        y[dj] += sj * h;
        f(&y)
    };
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0))
                / (4.0 * h * h);
        }
    }
    out
}

/// `‖a − b‖ / max(1, ‖b‖)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(1.0)
}

/// Random well-posed composition of the primitive set in `dim` variables.
/// Arguments of `ln`, `sqrt` and denominators are kept away from their
/// singularities.
pub fn random_expr(rng: &mut Rand, dim: usize, depth: usize) -> Expr {
    let b = Box::new;
    if depth == 0 || rng.unit() < 0.15 {
        return if rng.unit() < 0.8 { Expr::Var(rng.below(dim)) } else { Expr::Const(rng.uniform(-2.0, 2.0)) };
    }
    let d = depth - 1;
    match rng.below(11) {
        0 => Expr::Add(b(random_expr(rng, dim, d)), b(random_expr(rng, dim, d))),
        1 => Expr::Sub(b(random_expr(rng, dim, d)), b(random_expr(rng, dim, d))),
        2 => Expr::Mul(b(random_expr(rng, dim, d)), b(random_expr(rng, dim, d))),
        3 => {
            let den = Expr::Add(b(Expr::Const(1.5)), b(Expr::Call(Func::Tanh, b(random_expr(rng, dim, d)))));
            Expr::Div(b(random_expr(rng, dim, d)), b(den))
        }
        4 => Expr::Call(Func::Tanh, b(random_expr(rng, dim, d))),
        5 => Expr::Call(Func::Sin, b(random_expr(rng, dim, d))),
        6 => Expr::Call(Func::Cos, b(random_expr(rng, dim, d))),
        7 => Expr::Call(Func::Exp, b(Expr::Call(Func::Tanh, b(random_expr(rng, dim, d))))),
        8 => {
            let arg = Expr::Add(b(Expr::Const(0.5)), b(Expr::Pow(b(random_expr(rng, dim, d)), 2)));
            Expr::Call(if rng.unit() < 0.5 { Func::Ln } else { Func::Sqrt }, b(arg))
        }
        9 => Expr::Pow(b(random_expr(rng, dim, d)), 2 + rng.below(2) as i32),
        _ => Expr::Neg(b(random_expr(rng, dim, d))),
    }
}

/// The pendulum configuration with cheaper networks and training.
pub fn small_pendulum_config(epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::pendulum_default();
    cfg.networks.hc_widths = vec![1, 8, 1];
    cfg.networks.k_widths = vec![1, 8, 1];
    cfg.optimizer.epochs = epochs;
    cfg
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SuiteStats {
    pub passed: usize,
    /// Misses at points whose conditioning estimate exceeds `1e8`; these do
    /// not count as trials.
    pub excluded: usize,
    /// Misses at well-conditioned points, typically difference-oracle
    /// truncation on high-curvature compositions.
    pub failed: usize,
    pub worst_grad: f64,
    pub worst_hessian: f64,
    pub worst_nested: f64,
}

impl SuiteStats {
    pub fn trials(&self) -> usize {
        self.passed + self.excluded + self.failed
    }

    /// At least 99% of the counted trials pass.
    pub fn ok(&self) -> bool {
        let counted = self.passed + self.failed;
        counted > 0 && self.passed * 100 >= 99 * counted
    }
}

/// Randomized chain-rule check: `grad` (step 1e-4, rel 1e-5) and `hessian`
/// (step 1e-3, rel 1e-4) against central differences, plus the nested
/// levels: reverse over forward reproduces a Hessian row and reverse over
/// the second-order payload matches differences of Hessian entries.
pub fn composition_suite(trials: usize, seed: u64) -> SuiteStats {
    use neural_casimir::autodiff::{grad, hessian, param_grad, Dual, Jet};
    let mut rng = Rand::new(seed);
    let mut stats = SuiteStats::default();
    for _ in 0..trials {
        let dim = 1 + rng.below(6);
        let depth = 1 + rng.below(4);
        let e = random_expr(&mut rng, dim, depth);
        let x = rng.vector(dim, -1.0, 1.0);
        let f = |z: &[f64]| e.eval_f64(z).unwrap();
        let g = grad(&e, &x).unwrap();
        let h = hessian(&e, &x).unwrap();
        let g_err = rel_err(&g, &central_grad(f, &x, 1e-4));
        let h_err = rel_err(h.data(), &central_hessian(f, &x, 1e-3));

        let k = rng.below(dim);
        let row = param_grad(&x, |v| Ok((e.eval(&Dual::variables(v))?.g[k], ()))).unwrap().gradient;
        let third = param_grad(&x, |v| Ok((*e.eval(&Jet::variables(v))?.hess(k, k), ()))).unwrap().gradient;
        let hkk = |z: &[f64]| hessian(&e, z).unwrap()[(k, k)];
        let nested = rel_err(&row, h.row(k)).max(rel_err(&third, &central_grad(hkk, &x, 1e-4)));

        stats.worst_grad = stats.worst_grad.max(g_err);
        stats.worst_hessian = stats.worst_hessian.max(h_err);
        stats.worst_nested = stats.worst_nested.max(nested);
        if g_err <= 1e-5 && h_err <= 1e-4 && nested <= 1e-5 {
            stats.passed += 1;
        } else {
            let scale = g.iter().chain(h.data()).fold(f(&x).abs(), |m, v| m.max(v.abs()));
            if scale > 1e8 {
                stats.excluded += 1;
            } else {
                stats.failed += 1;
                eprintln!("composition miss: {e} at {x:?}: grad {g_err:e} hessian {h_err:e} nested {nested:e}");
            }
        }
    }
    stats
}

/// Largest relative error of `loss_and_grad` against central differences
/// over `coords` random parameter coordinates; `None` for an
/// eigen-degenerate draw.
pub fn loss_gradient_error(
    problem: &neural_casimir::train::TrainProblem,
    params: &[f64],
    coords: usize,
    rng: &mut Rand,
) -> Option<f64> {
    use neural_casimir::train::{loss_and_grad, loss_terms};
    let g = loss_and_grad(problem, params).unwrap();
    if g.extra.degenerate {
        return None;
    }
    let idx: Vec<usize> = (0..coords).map(|_| rng.below(params.len())).collect();
    let f = |p: &[f64]| loss_terms::<f64>(problem, p).unwrap().0;
    let h = 1e-6;
    let fd: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let mut a = params.to_vec();
            let mut b = params.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect();
    let ad: Vec<f64> = idx.iter().map(|&i| g.gradient[i]).collect();
    Some(rel_err(&ad, &fd))
}
