//! Reverse-mode tape over an arbitrary [`Scalar`] element type.
//!
//! Each recorded node stores its parents together with the local partial
//! derivatives, evaluated in `T`. A single backward sweep accumulates
//! adjoints in `T` as well, so running the tape with `T = Dual` gives the
//! gradient in the real parts and a Hessian-vector product in the tangents.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
struct Node {
    start: u32,
    len: u32,
}

/// Append-only record of a computation. Single-owner; not `Sync`.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node>>,
    edges: RefCell<Vec<(u32, T)>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(1 << 14)),
            edges: RefCell::new(Vec::with_capacity(1 << 15)),
        }
    }

    /// Register an independent variable.
    pub fn var(&self, value: T) -> Var<'_, T> {
        let idx = self.push(std::iter::empty());
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn vars(&self, values: &[T]) -> Vec<Var<'_, T>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: impl Iterator<Item = (u32, T)>) -> u32 {
        let mut edges = self.edges.borrow_mut();
        let start = edges.len() as u32;
        edges.extend(parents);
        let len = edges.len() as u32 - start;
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { start, len });
        (nodes.len() - 1) as u32
    }

    /// Adjoints of `output` with respect to every node, by one reverse sweep.
    pub fn adjoints(&self, output: Var<'_, T>) -> Vec<T> {
        let nodes = self.nodes.borrow();
        let edges = self.edges.borrow();
        let mut adj = vec![T::zero(); nodes.len()];
        let Some(tape) = output.tape else {
            return adj;
        };
        debug_assert!(std::ptr::eq(tape, self));
        adj[output.idx as usize] = T::cst(1.0);
        for i in (0..=output.idx as usize).rev() {
            let node = nodes[i];
            if node.len == 0 {
                continue;
            }
            let a = adj[i];
            for &(p, partial) in &edges[node.start as usize..(node.start + node.len) as usize] {
                adj[p as usize] = adj[p as usize] + a * partial;
            }
        }
        adj
    }

    /// Gradient of `output` with respect to the given leaves.
    pub fn gradient(&self, output: Var<'_, T>, wrt: &[Var<'_, T>]) -> Vec<T> {
        let adj = self.adjoints(output);
        wrt.iter()
            .map(|v| v.tape_index().map_or(T::zero(), |i| adj[i]))
            .collect()
    }
}

/// A value that may be recorded on a tape. Constants carry no tape.
#[derive(Debug, Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: Option<&'t Tape<T>>,
    idx: u32,
    val: T,
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn constant(val: T) -> Self {
        Var {
            tape: None,
            idx: u32::MAX,
            val,
        }
    }

    pub fn value(&self) -> T {
        self.val
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    /// Position on the tape, `None` for constants.
    pub fn tape_index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    fn unary(self, val: T, partial: T) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(std::iter::once((self.idx, partial))),
                val,
            },
        }
    }

    fn binary(a: Self, b: Self, val: T, da: T, db: T) -> Self {
        match (a.tape, b.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => Var {
                tape: Some(t),
                idx: t.push(std::iter::once((a.idx, da))),
                val,
            },
            (None, Some(t)) => Var {
                tape: Some(t),
                idx: t.push(std::iter::once((b.idx, db))),
                val,
            },
            (Some(t), Some(t2)) => {
                debug_assert!(std::ptr::eq(t, t2), "mixing tapes");
                Var {
                    tape: Some(t),
                    idx: t.push([(a.idx, da), (b.idx, db)].into_iter()),
                    val,
                }
            }
        }
    }

    fn find_tape(xs: &[Self]) -> Option<&'t Tape<T>> {
        xs.iter().find_map(|x| x.tape)
    }
}

impl<'t, T: Scalar> Add for Var<'t, T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Var::binary(self, o, self.val + o.val, T::cst(1.0), T::cst(1.0))
    }
}

impl<'t, T: Scalar> Sub for Var<'t, T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Var::binary(self, o, self.val - o.val, T::cst(1.0), T::cst(-1.0))
    }
}

impl<'t, T: Scalar> Mul for Var<'t, T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Var::binary(self, o, self.val * o.val, o.val, self.val)
    }
}

impl<'t, T: Scalar> Div for Var<'t, T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::cst(1.0) / o.val;
        let q = self.val / o.val;
        Var::binary(self, o, q, inv, -(q * inv))
    }
}

impl<'t, T: Scalar> Neg for Var<'t, T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, T::cst(-1.0))
    }
}

impl<'t, T: Scalar> Add<f64> for Var<'t, T> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.unary(self.val + c, T::cst(1.0))
    }
}

impl<'t, T: Scalar> Sub<f64> for Var<'t, T> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.unary(self.val - c, T::cst(1.0))
    }
}

impl<'t, T: Scalar> Mul<f64> for Var<'t, T> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.unary(self.val * c, T::cst(c))
    }
}

impl<'t, T: Scalar> Div<f64> for Var<'t, T> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.unary(self.val / c, T::cst(1.0 / c))
    }
}

impl<'t, T: Scalar> Scalar for Var<'t, T> {
    fn cst(v: f64) -> Self {
        Var::constant(T::cst(v))
    }

    fn primal(self) -> f64 {
        self.val.primal()
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), T::cst(1.0) / self.val)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, T::cst(1.0) - t * t)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, T::cst(0.5) / s)
    }

    fn ln_gamma(self) -> Self {
        self.unary(self.val.ln_gamma(), self.val.polygamma(0))
    }

    fn polygamma(self, n: u32) -> Self {
        self.unary(self.val.polygamma(n), self.val.polygamma(n + 1))
    }

    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().fold(T::zero(), |acc, x| acc + x.val);
        match Var::find_tape(xs) {
            None => Var::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(
                    xs.iter()
                        .filter(|x| x.tape.is_some())
                        .map(|x| (x.idx, T::cst(1.0))),
                ),
                val,
            },
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a
            .iter()
            .zip(b)
            .fold(T::zero(), |acc, (x, y)| acc + x.val * y.val);
        let tape = Var::find_tape(a).or_else(|| Var::find_tape(b));
        match tape {
            None => Var::constant(val),
            Some(t) => {
                let left = a
                    .iter()
                    .zip(b)
                    .filter(|(x, _)| x.tape.is_some())
                    .map(|(x, y)| (x.idx, y.val));
                let right = b
                    .iter()
                    .zip(a)
                    .filter(|(y, _)| y.tape.is_some())
                    .map(|(y, x)| (y.idx, x.val));
                Var {
                    tape: Some(t),
                    idx: t.push(left.chain(right)),
                    val,
                }
            }
        }
    }

    fn dot_f64(a: &[Self], b: &[f64]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a
            .iter()
            .zip(b)
            .fold(T::zero(), |acc, (x, &y)| acc + x.val * y);
        match Var::find_tape(a) {
            None => Var::constant(val),
            Some(t) => Var {
                tape: Some(t),
                idx: t.push(
                    a.iter()
                        .zip(b)
                        .filter(|(x, _)| x.tape.is_some())
                        .map(|(x, &y)| (x.idx, T::cst(y))),
                ),
                val,
            },
        }
    }
}
