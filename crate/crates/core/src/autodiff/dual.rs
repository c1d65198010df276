use super::Real;

/// First-order forward payload: value and gradient over `n` seeded
/// directions, with components in any [`Real`].
#[derive(Clone, Debug)]
pub struct Dual<T> {
    pub v: T,
    pub g: Vec<T>,
}

/// Second-order forward payload: value, gradient and full (symmetric)
/// Hessian over `n` seeded directions. The Hessian is stored row-major.
#[derive(Clone, Debug)]
pub struct Jet<T> {
    pub v: T,
    pub g: Vec<T>,
    pub h: Vec<T>,
}

impl<T: Real> Dual<T> {
    /// One independent direction per entry of `at`.
    pub fn variables(at: &[T]) -> Vec<Self> {
        let n = at.len();
        at.iter()
            .enumerate()
            .map(|(i, x)| Dual { v: x.clone(), g: (0..n).map(|k| x.constant(if k == i { 1.0 } else { 0.0 })).collect() })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn chain(&self, f0: T, f1: T) -> Self {
        Dual { v: f0, g: self.g.iter().map(|gi| gi.mul(&f1)).collect() }
    }
}

impl<T: Real> Real for Dual<T> {
    type Base = T;

    fn value(&self) -> f64 {
        self.v.value()
    }
    fn constant(&self, c: f64) -> Self {
        let z = self.v.constant(0.0);
        Dual { v: self.v.constant(c), g: vec![z; self.g.len()] }
    }
    fn base_constant(&self, c: f64) -> T {
        self.v.constant(c)
    }
    fn from_base(&self, b: &T) -> Self {
        let z = self.v.constant(0.0);
        Dual { v: b.clone(), g: vec![z; self.g.len()] }
    }
    fn add(&self, o: &Self) -> Self {
        Dual { v: self.v.add(&o.v), g: self.g.iter().zip(&o.g).map(|(a, b)| a.add(b)).collect() }
    }
    fn sub(&self, o: &Self) -> Self {
        Dual { v: self.v.sub(&o.v), g: self.g.iter().zip(&o.g).map(|(a, b)| a.sub(b)).collect() }
    }
    fn mul(&self, o: &Self) -> Self {
        Dual {
            v: self.v.mul(&o.v),
            g: self.g.iter().zip(&o.g).map(|(a, b)| a.mul(&o.v).add(&self.v.mul(b))).collect(),
        }
    }
    fn div(&self, o: &Self) -> Self {
        let q = self.v.div(&o.v);
        Dual { g: self.g.iter().zip(&o.g).map(|(a, b)| a.sub(&q.mul(b)).div(&o.v)).collect(), v: q }
    }
    fn neg(&self) -> Self {
        Dual { v: self.v.neg(), g: self.g.iter().map(Real::neg).collect() }
    }
    fn add_f(&self, c: f64) -> Self {
        Dual { v: self.v.add_f(c), g: self.g.clone() }
    }
    fn mul_f(&self, c: f64) -> Self {
        Dual { v: self.v.mul_f(c), g: self.g.iter().map(|a| a.mul_f(c)).collect() }
    }
    fn add_base(&self, b: &T) -> Self {
        Dual { v: self.v.add(b), g: self.g.clone() }
    }
    fn mul_base(&self, b: &T) -> Self {
        Dual { v: self.v.mul(b), g: self.g.iter().map(|a| a.mul(b)).collect() }
    }
    fn tanh(&self) -> Self {
        let t = self.v.tanh();
        let d = t.square().neg().add_f(1.0);
        self.chain(t, d)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e.clone(), e)
    }
    fn ln(&self) -> Self {
        let d = self.v.constant(1.0).div(&self.v);
        self.chain(self.v.ln(), d)
    }
    fn sin(&self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(&self) -> Self {
        self.chain(self.v.cos(), self.v.sin().neg())
    }
    fn sqrt(&self) -> Self {
        let r = self.v.sqrt();
        let d = r.constant(0.5).div(&r);
        self.chain(r, d)
    }
    fn powi(&self, k: i32) -> Self {
        let d = if k == 0 { self.v.constant(0.0) } else { self.v.powi(k - 1).mul_f(k as f64) };
        self.chain(self.v.powi(k), d)
    }
}

impl<T: Real> Jet<T> {
    /// One independent direction per entry of `at`.
    pub fn variables(at: &[T]) -> Vec<Self> {
        let n = at.len();
        at.iter()
            .enumerate()
            .map(|(i, x)| {
                let z = x.constant(0.0);
                Jet {
                    v: x.clone(),
                    g: (0..n).map(|k| x.constant(if k == i { 1.0 } else { 0.0 })).collect(),
                    h: vec![z; n * n],
                }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// Hessian entry `(i, j)`.
    pub fn hess(&self, i: usize, j: usize) -> &T {
        &self.h[i * self.dim() + j]
    }

    fn sym(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Vec<T> {
        let mut h: Vec<Option<T>> = vec![None; n * n];
        for i in 0..n {
            for j in i..n {
                let x = f(i, j);
                if i != j {
                    h[j * n + i] = Some(x.clone());
                }
                h[i * n + j] = Some(x);
            }
        }
        h.into_iter().map(Option::unwrap).collect()
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.v`.
    fn chain(&self, f0: T, f1: T, f2: T) -> Self {
        let n = self.dim();
        let g = self.g.clone();
        let h = Self::sym(n, |i, j| self.h[i * n + j].mul(&f1).add(&g[i].mul(&g[j]).mul(&f2)));
        Jet { v: f0, g: self.g.iter().map(|gi| gi.mul(&f1)).collect(), h }
    }

    fn recip(&self) -> Self {
        let r = self.v.constant(1.0).div(&self.v);
        let r2 = r.square();
        let d2 = r2.mul(&r).mul_f(2.0);
        self.chain(r, r2.neg(), d2)
    }
}

impl<T: Real> Real for Jet<T> {
    type Base = T;

    fn value(&self) -> f64 {
        self.v.value()
    }
    fn constant(&self, c: f64) -> Self {
        let z = self.v.constant(0.0);
        let n = self.dim();
        Jet { v: self.v.constant(c), g: vec![z.clone(); n], h: vec![z; n * n] }
    }
    fn base_constant(&self, c: f64) -> T {
        self.v.constant(c)
    }
    fn from_base(&self, b: &T) -> Self {
        let z = self.v.constant(0.0);
        let n = self.dim();
        Jet { v: b.clone(), g: vec![z.clone(); n], h: vec![z; n * n] }
    }
    fn add(&self, o: &Self) -> Self {
        Jet {
            v: self.v.add(&o.v),
            g: self.g.iter().zip(&o.g).map(|(a, b)| a.add(b)).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a.add(b)).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        Jet {
            v: self.v.sub(&o.v),
            g: self.g.iter().zip(&o.g).map(|(a, b)| a.sub(b)).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a.sub(b)).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        let n = self.dim();
        let h = Self::sym(n, |i, j| {
            let k = i * n + j;
            self.h[k]
                .mul(&o.v)
                .add(&self.v.mul(&o.h[k]))
                .add(&self.g[i].mul(&o.g[j]))
                .add(&o.g[i].mul(&self.g[j]))
        });
        Jet {
            v: self.v.mul(&o.v),
            g: self.g.iter().zip(&o.g).map(|(a, b)| a.mul(&o.v).add(&self.v.mul(b))).collect(),
            h,
        }
    }
    fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }
    fn neg(&self) -> Self {
        Jet { v: self.v.neg(), g: self.g.iter().map(Real::neg).collect(), h: self.h.iter().map(Real::neg).collect() }
    }
    fn add_f(&self, c: f64) -> Self {
        Jet { v: self.v.add_f(c), g: self.g.clone(), h: self.h.clone() }
    }
    fn mul_f(&self, c: f64) -> Self {
        Jet {
            v: self.v.mul_f(c),
            g: self.g.iter().map(|a| a.mul_f(c)).collect(),
            h: self.h.iter().map(|a| a.mul_f(c)).collect(),
        }
    }
    fn add_base(&self, b: &T) -> Self {
        Jet { v: self.v.add(b), g: self.g.clone(), h: self.h.clone() }
    }
    fn mul_base(&self, b: &T) -> Self {
        Jet {
            v: self.v.mul(b),
            g: self.g.iter().map(|a| a.mul(b)).collect(),
            h: self.h.iter().map(|a| a.mul(b)).collect(),
        }
    }
    fn tanh(&self) -> Self {
        let t = self.v.tanh();
        let d1 = t.square().neg().add_f(1.0);
        let d2 = t.mul(&d1).mul_f(-2.0);
        self.chain(t, d1, d2)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e.clone(), e.clone(), e)
    }
    fn ln(&self) -> Self {
        let r = self.v.constant(1.0).div(&self.v);
        let d2 = r.square().neg();
        self.chain(self.v.ln(), r, d2)
    }
    fn sin(&self) -> Self {
        let s = self.v.sin();
        self.chain(s.clone(), self.v.cos(), s.neg())
    }
    fn cos(&self) -> Self {
        let c = self.v.cos();
        self.chain(c.clone(), self.v.sin().neg(), c.neg())
    }
    fn sqrt(&self) -> Self {
        let r = self.v.sqrt();
        let d1 = r.constant(0.5).div(&r);
        let d2 = d1.div(&self.v).mul_f(-0.5);
        self.chain(r, d1, d2)
    }
    fn powi(&self, k: i32) -> Self {
        let kf = k as f64;
        let zero = self.v.constant(0.0);
        let d1 = if k == 0 { zero.clone() } else { self.v.powi(k - 1).mul_f(kf) };
        let d2 = if k == 0 || k == 1 { zero } else { self.v.powi(k - 2).mul_f(kf * (kf - 1.0)) };
        self.chain(self.v.powi(k), d1, d2)
    }
}
