use std::cell::RefCell;
use std::fmt;

use super::Real;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Reverse-mode tape. Nodes are appended by [`Var`] arithmetic and swept
/// backwards once by [`Tape::gradient`].
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { nodes: RefCell::new(Vec::with_capacity(n)) }
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node { parents: [NONE; 2], partials: [0.0; 2] });
        Var { tape: self, idx, val: value }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        Var { tape: self, idx: NONE, val: value }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        (nodes.len() - 1) as u32
    }

    /// Adjoints of every node w.r.t. `output`; the first entries belong to
    /// the variables in creation order.
    pub fn gradient(&self, output: &Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.idx == NONE {
            return adj;
        }
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NONE {
                    adj[p as usize] += a * node.partials[k];
                }
            }
        }
        adj
    }
}

/// Scalar recorded on a [`Tape`]. Constants are not recorded.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == NONE {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} {})", self.idx, self.val)
        }
    }
}

impl<'t> Var<'t> {
    pub fn is_constant(&self) -> bool {
        self.idx == NONE
    }

    pub fn index(&self) -> Option<usize> {
        (self.idx != NONE).then_some(self.idx as usize)
    }

    fn unary(&self, val: f64, d: f64) -> Self {
        if self.idx == NONE {
            return Var { tape: self.tape, idx: NONE, val };
        }
        let idx = self.tape.push(Node { parents: [self.idx, NONE], partials: [d, 0.0] });
        Var { tape: self.tape, idx, val }
    }

    fn binary(&self, o: &Self, val: f64, da: f64, db: f64) -> Self {
        match (self.idx == NONE, o.idx == NONE) {
            (true, true) => Var { tape: self.tape, idx: NONE, val },
            (false, true) => self.unary(val, da),
            (true, false) => o.unary(val, db),
            (false, false) => {
                let idx = self.tape.push(Node { parents: [self.idx, o.idx], partials: [da, db] });
                Var { tape: self.tape, idx, val }
            }
        }
    }
}

impl<'t> Real for Var<'t> {
    type Base = Var<'t>;

    fn value(&self) -> f64 {
        self.val
    }
    fn constant(&self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn base_constant(&self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn from_base(&self, b: &Self) -> Self {
        *b
    }
    fn add(&self, o: &Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
    fn sub(&self, o: &Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
    fn mul(&self, o: &Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
    fn div(&self, o: &Self) -> Self {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
    fn neg(&self) -> Self {
        self.unary(-self.val, -1.0)
    }
    fn add_f(&self, c: f64) -> Self {
        self.unary(self.val + c, 1.0)
    }
    fn mul_f(&self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
    fn add_base(&self, b: &Self) -> Self {
        self.add(b)
    }
    fn mul_base(&self, b: &Self) -> Self {
        self.mul(b)
    }
    fn tanh(&self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn exp(&self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(&self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sin(&self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(&self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn sqrt(&self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }
    fn powi(&self, k: i32) -> Self {
        let d = if k == 0 { 0.0 } else { k as f64 * self.val.powi(k - 1) };
        self.unary(self.val.powi(k), d)
    }
}
