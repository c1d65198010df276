use std::fmt::Debug;

/// Scalar carrier for differentiable programs.
///
/// Implemented by `f64`, by reverse-mode [`Var`](super::Var) and by the
/// forward-mode [`Dual`](super::Dual) / [`Jet`](super::Jet) payloads, which
/// nest over any other `Real`. Programs written once against this trait can
/// be evaluated plainly, differentiated in the input, and differentiated in
/// their parameters through the derivative.
///
/// `Base` is the scalar that parameters live in: for a forward payload over
/// `T` it is `T`, for the leaf types it is the type itself.
pub trait Real: Clone + Debug {
    type Base: Real;

    fn value(&self) -> f64;
    /// A constant in the same evaluation context as `self`.
    fn constant(&self, c: f64) -> Self;
    /// A constant of the base type in the same context.
    fn base_constant(&self, c: f64) -> Self::Base;
    /// Embeds a base scalar (e.g. a network weight) as a constant w.r.t.
    /// the forward directions of `self`.
    #[allow(clippy::wrong_self_convention)]
    fn from_base(&self, b: &Self::Base) -> Self;

    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;

    fn add_f(&self, c: f64) -> Self;
    fn mul_f(&self, c: f64) -> Self;
    fn add_base(&self, b: &Self::Base) -> Self;
    fn mul_base(&self, b: &Self::Base) -> Self;

    fn tanh(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, k: i32) -> Self;

    fn square(&self) -> Self {
        self.mul(self)
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

impl Real for f64 {
    type Base = f64;

    fn value(&self) -> f64 {
        *self
    }
    fn constant(&self, c: f64) -> Self {
        c
    }
    fn base_constant(&self, c: f64) -> f64 {
        c
    }
    fn from_base(&self, b: &f64) -> Self {
        *b
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn add_f(&self, c: f64) -> Self {
        self + c
    }
    fn mul_f(&self, c: f64) -> Self {
        self * c
    }
    fn add_base(&self, b: &f64) -> Self {
        self + b
    }
    fn mul_base(&self, b: &f64) -> Self {
        self * b
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
}

/// `max(0, x)`; the derivative at exactly 0 is taken as 0.
pub fn relu<S: Real>(x: &S) -> S {
    if x.value() > 0.0 {
        x.clone()
    } else {
        x.constant(0.0)
    }
}

/// Euclidean norm. At the origin the value is 0 with zero derivative.
pub fn norm<S: Real>(xs: &[S]) -> S {
    let sq = sum_sq(xs);
    if sq.value() == 0.0 {
        sq.constant(0.0)
    } else {
        sq.sqrt()
    }
}

pub fn sum_sq<S: Real>(xs: &[S]) -> S {
    let mut it = xs.iter();
    let first = it.next().expect("sum_sq of empty slice");
    it.fold(first.square(), |acc, x| acc.add(&x.square()))
}

/// `Σ coeffs_i · xs_i`
pub fn dot_f<S: Real>(xs: &[S], coeffs: &[f64]) -> S {
    debug_assert_eq!(xs.len(), coeffs.len());
    let mut acc = xs[0].mul_f(coeffs[0]);
    for (x, &c) in xs.iter().zip(coeffs).skip(1) {
        if c != 0.0 {
            acc = acc.add(&x.mul_f(c));
        }
    }
    acc
}

pub fn sum<S: Real>(xs: &[S]) -> S {
    let mut it = xs.iter();
    let first = it.next().expect("sum of empty slice").clone();
    it.fold(first, |acc, x| acc.add(x))
}
