//! Scalar-output multilayer perceptrons whose parameters live in a shared
//! flat [`ParamVector`].

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, AdError, Dual, Jet, Real, ScalarProgram};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("network output width must be 1, got {0}")]
    NonScalarOutput(usize),
    #[error("network needs at least an input and an output layer, all widths >= 1")]
    BadWidths,
    #[error("input has length {got}, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("model file lists {got} parameters, widths require {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("invalid parameter literal '{0}'")]
    BadParam(String),
    #[error("unknown parameter segment '{0}'")]
    UnknownSegment(String),
    #[error("duplicate parameter segment '{0}'")]
    DuplicateSegment(String),
    #[error(transparent)]
    Ad(#[from] AdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// Identity; only useful for tests and linear baselines.
    Linear,
}

impl Activation {
    fn apply<S: Real>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }
}

/// Named contiguous range of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Every trainable value of a controller, in one flat vector with a
/// layout that stays fixed for the lifetime of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-initialized segment.
    pub fn register(&mut self, name: &str, len: usize) -> Result<Segment, NeuralError> {
        if self.segments.iter().any(|s| s.name == name) {
            return Err(NeuralError::DuplicateSegment(name.to_string()));
        }
        let seg = Segment { name: name.to_string(), offset: self.values.len(), len };
        self.values.resize(self.values.len() + len, 0.0);
        self.segments.push(seg.clone());
        Ok(seg)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn slice(&self, seg: &Segment) -> &[f64] {
        &self.values[seg.range()]
    }

    pub fn slice_mut(&mut self, seg: &Segment) -> &mut [f64] {
        &mut self.values[seg.range()]
    }

    pub fn set_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.values.len(), "parameter layout mismatch");
        self.values.copy_from_slice(values);
    }
}

/// Scalar-output perceptron: affine + activation on every hidden layer,
/// affine output layer. Layer `k` stores its `w_out x w_in` weights
/// row-major followed by its `w_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    seed: u64,
    segment: Segment,
}

/// On-disk network format. Parameters are shortest round-trip decimal
/// strings, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetFile {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub params: Vec<String>,
}

impl Mlp {
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn check_widths(widths: &[usize]) -> Result<(), NeuralError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NeuralError::BadWidths);
        }
        match widths.last() {
            Some(1) => Ok(()),
            Some(&w) => Err(NeuralError::NonScalarOutput(w)),
            None => Err(NeuralError::BadWidths),
        }
    }

    /// Allocates a segment named `name` and fills it with Glorot-uniform
    /// weights `U(±sqrt(6 / (fan_in + fan_out)))` and zero biases, drawn
    /// from xoshiro256++ seeded by `seed`. Uniforms are `(next_u64 >> 11)
    /// * 2^-53`, so the draw is identical on every platform.
    pub fn new(
        widths: &[usize],
        activation: Activation,
        seed: u64,
        params: &mut ParamVector,
        name: &str,
    ) -> Result<Self, NeuralError> {
        Self::check_widths(widths)?;
        let segment = params.register(name, Self::param_count(widths))?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let out = params.slice_mut(&segment);
        let mut k = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                out[k] = (2.0 * u - 1.0) * limit;
                k += 1;
            }
            k += fan_out;
        }
        Ok(Self { widths: widths.to_vec(), activation, seed, segment })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn segment(&self) -> &Segment {
        &self.segment
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Evaluates the network on inputs of any [`Real`] with weights taken
    /// from the full parameter vector `params` (in the base scalar).
    pub fn forward<S: Real>(&self, params: &[S::Base], input: &[S]) -> Result<S, NeuralError> {
        if input.len() != self.widths[0] {
            return Err(NeuralError::InputDim { expected: self.widths[0], got: input.len() });
        }
        let p = &params[self.segment.range()];
        let mut x: Vec<S> = input.to_vec();
        let mut k = 0;
        let layers = self.widths.len() - 1;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (weights, biases) = p[k..k + n_in * n_out + n_out].split_at(n_in * n_out);
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut acc = x[0].mul_base(&row[0]);
                for (xi, wi) in x.iter().zip(row).skip(1) {
                    acc = acc.add(&xi.mul_base(wi));
                }
                acc = acc.add_base(&biases[o]);
                next.push(if l + 1 < layers { self.activation.apply(acc) } else { acc });
            }
            x = next;
            k += n_in * n_out + n_out;
        }
        let out = x.pop().unwrap();
        if !out.is_finite() {
            return Err(AdError::domain("mlp").into());
        }
        Ok(out)
    }

    pub fn value(&self, params: &[f64], input: &[f64]) -> Result<f64, NeuralError> {
        self.forward(params, input)
    }

    pub fn input_grad(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward(params, &Dual::variables(input))?.g)
    }

    pub fn input_hessian(&self, params: &[f64], input: &[f64]) -> Result<Matrix, NeuralError> {
        let out = self.forward(params, &Jet::variables(input))?;
        let n = input.len();
        Ok(Matrix::new(n, n, out.h).map_err(AdError::from)?)
    }

    pub fn to_file(&self, params: &[f64]) -> NetFile {
        NetFile {
            widths: self.widths.clone(),
            activation: self.activation,
            seed: self.seed,
            params: params[self.segment.range()].iter().map(|v| format!("{v:?}")).collect(),
        }
    }

    /// Registers a segment named `name` holding the file's parameters.
    pub fn from_file(file: &NetFile, params: &mut ParamVector, name: &str) -> Result<Self, NeuralError> {
        Self::check_widths(&file.widths)?;
        let values = parse_params(file)?;
        let segment = params.register(name, values.len())?;
        params.slice_mut(&segment).copy_from_slice(&values);
        Ok(Self { widths: file.widths.clone(), activation: file.activation, seed: file.seed, segment })
    }

    /// Overwrites this network's segment with the file's parameters.
    pub fn load_into(&self, file: &NetFile, params: &mut ParamVector) -> Result<(), NeuralError> {
        if file.widths != self.widths {
            return Err(NeuralError::ParamCount { expected: self.segment.len, got: Self::param_count(&file.widths) });
        }
        let values = parse_params(file)?;
        params.slice_mut(&self.segment).copy_from_slice(&values);
        Ok(())
    }

    /// View with frozen `f64` parameters, usable as a [`ScalarProgram`].
    pub fn program<'a>(&'a self, params: &'a [f64]) -> NetProgram<'a> {
        NetProgram { net: self, params }
    }
}

fn parse_params(file: &NetFile) -> Result<Vec<f64>, NeuralError> {
    let expected = Mlp::param_count(&file.widths);
    if file.params.len() != expected {
        return Err(NeuralError::ParamCount { expected, got: file.params.len() });
    }
    file.params
        .iter()
        .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| NeuralError::BadParam(s.clone())))
        .collect()
}

pub struct NetProgram<'a> {
    net: &'a Mlp,
    params: &'a [f64],
}

impl ScalarProgram for NetProgram<'_> {
    fn eval<S: Real>(&self, z: &[S]) -> Result<S, AdError> {
        let lifted: Vec<S::Base> = self.params.iter().map(|&p| z[0].base_constant(p)).collect();
        self.net.forward(&lifted, z).map_err(|e| match e {
            NeuralError::Ad(a) => a,
            other => AdError::Structural(other.to_string()),
        })
    }
}

/// `∇_input` of the network through the generic autodiff entry point.
pub fn input_grad_via_program(net: &Mlp, params: &[f64], input: &[f64]) -> Result<Vec<f64>, AdError> {
    autodiff::grad(&net.program(params), input)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let mut pv = ParamVector::new();
        let k = Mlp::new(&[1, 64, 1], Activation::Tanh, 0, &mut pv, "k").unwrap();
        assert_eq!(k.segment().len, 193);
        let h = Mlp::new(&[1, 32, 1], Activation::Tanh, 0, &mut pv, "hc").unwrap();
        assert_eq!(h.segment().len, 97);
        assert_eq!(pv.len(), 290);
    }

    #[test]
    fn rejects_vector_output() {
        let mut pv = ParamVector::new();
        assert_eq!(Mlp::new(&[1, 4, 2], Activation::Tanh, 0, &mut pv, "x"), Err(NeuralError::NonScalarOutput(2)));
        assert_eq!(Mlp::new(&[1, 0, 1], Activation::Tanh, 0, &mut pv, "x"), Err(NeuralError::BadWidths));
    }

    #[test]
    fn zero_parameters_give_zero() {
        let mut pv = ParamVector::new();
        let net = Mlp::new(&[2, 5, 1], Activation::Tanh, 3, &mut pv, "n").unwrap();
        pv.values_mut().iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(net.value(pv.values(), &[0.3, -7.0]).unwrap(), 0.0);
    }

    #[test]
    fn identity_like_net_is_tanh() {
        let mut pv = ParamVector::new();
        let net = Mlp::new(&[1, 1, 1], Activation::Tanh, 0, &mut pv, "n").unwrap();
        pv.set_values(&[1.0, 0.0, 1.0, 0.0]);
        for x in [-2.0, 0.1, 0.9] {
            assert_eq!(net.value(pv.values(), &[x]).unwrap(), f64::tanh(x));
        }
        assert_eq!(net.input_grad(pv.values(), &[0.0]).unwrap(), vec![1.0]);
        assert_eq!(net.input_hessian(pv.values(), &[0.0]).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn linear_activation_has_zero_hessian() {
        let mut pv = ParamVector::new();
        let net = Mlp::new(&[3, 8, 8, 1], Activation::Linear, 11, &mut pv, "n").unwrap();
        let h = net.input_hessian(pv.values(), &[0.2, 0.1, -0.4]).unwrap();
        assert_eq!(h, Matrix::zeros(3, 3));
    }

    #[test]
    fn input_dimension_is_checked() {
        let mut pv = ParamVector::new();
        let net = Mlp::new(&[2, 3, 1], Activation::Tanh, 0, &mut pv, "n").unwrap();
        assert_eq!(net.value(pv.values(), &[1.0]), Err(NeuralError::InputDim { expected: 2, got: 1 }));
    }

    #[test]
    fn seeded_init_is_deterministic_and_bounded() {
        let mut a = ParamVector::new();
        let mut b = ParamVector::new();
        Mlp::new(&[1, 64, 1], Activation::Tanh, 42, &mut a, "k").unwrap();
        Mlp::new(&[1, 64, 1], Activation::Tanh, 42, &mut b, "k").unwrap();
        assert_eq!(a, b);
        let limit = (6.0 / 65.0_f64).sqrt();
        assert!(a.values()[..64].iter().all(|w| w.abs() <= limit && *w != 0.0));
        assert!(a.values()[64..128].iter().all(|b| *b == 0.0));
    }

    #[test]
    fn duplicate_segment_rejected() {
        let mut pv = ParamVector::new();
        pv.register("a", 2).unwrap();
        assert!(pv.register("a", 1).is_err());
    }

    #[test]
    fn model_file_rejects_bad_literals() {
        let mut pv = ParamVector::new();
        let file = NetFile { widths: vec![1, 1, 1], activation: Activation::Tanh, seed: 0, params: vec!["1".into(), "x".into(), "0".into(), "0".into()] };
        assert_eq!(Mlp::from_file(&file, &mut pv, "n"), Err(NeuralError::BadParam("x".into())));
        let short = NetFile { params: vec!["1".into()], ..file };
        assert!(matches!(Mlp::from_file(&short, &mut pv, "m"), Err(NeuralError::ParamCount { .. })));
    }
}
