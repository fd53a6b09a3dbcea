//! Minimal reverse-accumulation tape.
//!
//! Values are recorded into a flat arena as they are computed. Every node
//! stores at most two parents together with the local partial derivatives,
//! evaluated during the forward pass, so the backward sweep is a single
//! reverse pass over the arena.
//!
//! Constants never touch the arena: a [`Var`] created with [`Real::cst`]
//! carries no tape reference, and arithmetic between constants stays
//! constant. [`Real::detach`] re-enters a value as a fresh leaf with no
//! parents, which blocks gradient flow exactly.
//!
//! ```
//! use hssd::autodiff::Tape;
//! use hssd::real::Real;
//!
//! let tape = Tape::new();
//! let w = tape.var(0.0);
//! let y = (w * Real::cst(1.0)).tanh();
//! let grads = tape.gradient(y).unwrap();
//! assert_eq!(grads.wrt(w), 1.0);
//! ```

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::real::{sigmoid_f64, softplus_f64, Real};

const NO_NODE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    Tanh,
    Sqrt,
    Abs,
    Softplus,
    Sigmoid,
    Relu,
    /// A primitive recorded without a derivative rule.
    Opaque(&'static str),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    parents: [usize; 2],
    partials: [f64; 2],
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A trainable leaf.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Op::Leaf, [NO_NODE; 2], [0.0; 2]);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Record a primitive whose derivative is unknown to the engine.
    /// [`Tape::gradient`] fails if any gradient reaches it.
    pub fn opaque<'t>(&'t self, name: &'static str, inputs: &[Var<'t>], value: f64) -> Var<'t> {
        let mut parents = [NO_NODE; 2];
        for (slot, v) in parents.iter_mut().zip(inputs.iter().filter(|v| v.idx != NO_NODE)) {
            *slot = v.idx;
        }
        let idx = self.push(Op::Opaque(name), parents, [0.0; 2]);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    fn push(&self, op: Op, parents: [usize; 2], partials: [f64; 2]) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            parents,
            partials,
        });
        nodes.len() - 1
    }

    /// Reverse sweep from a scalar output.
    pub fn gradient(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.idx == NO_NODE {
            return Ok(Gradients { adj });
        }
        adj[output.idx] = 1.0;
        for i in (0..=output.idx).rev() {
            let a = adj[i];
            // zero adjoints are skipped so that inf partials (sqrt at 0 under
            // an inactive hinge) cannot poison the sweep
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            if let Op::Opaque(name) = node.op {
                return Err(Error::UnsupportedPrimitive(name.to_string()));
            }
            for k in 0..2 {
                let p = node.parents[k];
                if p != NO_NODE {
                    adj[p] += a * node.partials[k];
                }
            }
        }
        Ok(Gradients { adj })
    }
}

/// Adjoints of every node recorded before the output.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        if v.idx == NO_NODE {
            0.0
        } else {
            self.adj.get(v.idx).copied().unwrap_or(0.0)
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: usize,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.idx == NO_NODE {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} {})", self.idx, self.val)
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var {
            tape: None,
            idx: NO_NODE,
            val,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.idx == NO_NODE
    }

    fn unary(self, op: Op, val: f64, d: f64) -> Self {
        match self.tape {
            Some(t) if self.idx != NO_NODE => Var {
                tape: Some(t),
                idx: t.push(op, [self.idx, NO_NODE], [d, 0.0]),
                val,
            },
            _ => Var::constant(val),
        }
    }

    fn binary(self, rhs: Self, op: Op, val: f64, da: f64, db: f64) -> Self {
        let tape = self.tape.or(rhs.tape);
        match tape {
            Some(t) if self.idx != NO_NODE || rhs.idx != NO_NODE => Var {
                tape: Some(t),
                idx: t.push(op, [self.idx, rhs.idx], [da, db]),
                val,
            },
            _ => Var::constant(val),
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Add, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Sub, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        self.binary(rhs, Op::Mul, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.val / rhs.val;
        self.binary(rhs, Op::Div, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.val, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn value(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(Op::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(Op::Ln, self.val.ln(), 1.0 / self.val)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(Op::Tanh, t, 1.0 - t * t)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(Op::Sqrt, s, 0.5 / s)
    }

    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(Op::Abs, self.val.abs(), d)
    }

    fn softplus(self) -> Self {
        self.unary(Op::Softplus, softplus_f64(self.val), sigmoid_f64(self.val))
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(Op::Sigmoid, s, s * (1.0 - s))
    }

    fn relu(self) -> Self {
        if self.val > 0.0 {
            self.unary(Op::Relu, self.val, 1.0)
        } else {
            self.unary(Op::Relu, 0.0, 0.0)
        }
    }

    fn detach(self) -> Self {
        match self.tape {
            Some(t) if self.idx != NO_NODE => Var {
                tape: Some(t),
                idx: t.push(Op::Leaf, [NO_NODE; 2], [0.0; 2]),
                val: self.val,
            },
            _ => self,
        }
    }
}
