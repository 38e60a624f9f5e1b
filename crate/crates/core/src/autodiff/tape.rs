use super::jet::{Jet2, Unary};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("gradient component {index} is not finite")]
    NonFiniteGradient { index: usize },
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Jet component selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comp {
    V,
    Gx,
    Gy,
    Hxx,
    Hxy,
    Hyy,
}

impl Comp {
    fn slot(self) -> usize {
        self as usize
    }
}

/// A vectorised operation with many jet outputs and its own parameter block,
/// e.g. one network applied to a batch of inputs.
pub trait BatchOp {
    fn outputs(&self) -> &[Jet2];
    /// Accumulate parameter gradients given the output adjoints.
    fn backward(&self, out_adj: &[Jet2], grad: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    Component(Var, Comp),
    Batch { op: usize, slot: usize },
}

/// Reverse-mode tape over jet-valued nodes.
///
/// Every node carries a full [`Jet2`]; adjoints are jet-shaped as well, so
/// scalar losses built from spatial derivatives differentiate correctly with
/// respect to parameters.
pub struct Tape<'a> {
    params: &'a [f64],
    nodes: Vec<Node>,
    values: Vec<Jet2>,
    active: Vec<bool>,
    batches: Vec<Box<dyn BatchOp + 'a>>,
}

/// Adjoint of `a` for `w = a * b`.
pub fn mul_vjp(wbar: Jet2, b: Jet2) -> Jet2 {
    Jet2 {
        v: wbar.v * b.v
            + wbar.gx * b.gx
            + wbar.gy * b.gy
            + wbar.hxx * b.hxx
            + wbar.hxy * b.hxy
            + wbar.hyy * b.hyy,
        gx: wbar.gx * b.v + 2.0 * wbar.hxx * b.gx + wbar.hxy * b.gy,
        gy: wbar.gy * b.v + wbar.hxy * b.gx + 2.0 * wbar.hyy * b.gy,
        hxx: wbar.hxx * b.v,
        hxy: wbar.hxy * b.v,
        hyy: wbar.hyy * b.v,
    }
}

/// Adjoint of `a` for `w = f(a)` given `d = [f, f', f'', f''']` at `a.v`.
pub fn unary_vjp(wbar: Jet2, a: Jet2, d: [f64; 4]) -> Jet2 {
    let [_, f1, f2, f3] = d;
    Jet2 {
        v: wbar.v * f1
            + wbar.gx * f2 * a.gx
            + wbar.gy * f2 * a.gy
            + wbar.hxx * (f3 * a.gx * a.gx + f2 * a.hxx)
            + wbar.hxy * (f3 * a.gx * a.gy + f2 * a.hxy)
            + wbar.hyy * (f3 * a.gy * a.gy + f2 * a.hyy),
        gx: wbar.gx * f1 + 2.0 * wbar.hxx * f2 * a.gx + wbar.hxy * f2 * a.gy,
        gy: wbar.gy * f1 + wbar.hxy * f2 * a.gx + 2.0 * wbar.hyy * f2 * a.gy,
        hxx: wbar.hxx * f1,
        hxy: wbar.hxy * f1,
        hyy: wbar.hyy * f1,
    }
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a [f64]) -> Self {
        Tape { params, nodes: Vec::new(), values: Vec::new(), active: Vec::new(), batches: Vec::new() }
    }

    pub fn params(&self) -> &'a [f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node, value: Jet2, active: bool) -> Var {
        let id = Var(self.nodes.len() as u32);
        self.nodes.push(node);
        self.values.push(value);
        self.active.push(active);
        id
    }

    pub fn value(&self, v: Var) -> Jet2 {
        self.values[v.index()]
    }

    pub fn constant(&mut self, j: Jet2) -> Var {
        self.push(Node::Leaf, j, false)
    }

    pub fn scalar(&mut self, c: f64) -> Var {
        self.constant(Jet2::cst(c))
    }

    pub fn param(&mut self, k: usize) -> Var {
        self.push(Node::Param(k), Jet2::cst(self.params[k]), true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let act = self.active[a.index()] || self.active[b.index()];
        self.push(Node::Add(a, b), v, act)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let act = self.active[a.index()] || self.active[b.index()];
        self.push(Node::Sub(a, b), v, act)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let act = self.active[a.index()] || self.active[b.index()];
        self.push(Node::Mul(a, b), v, act)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        let act = self.active[a.index()];
        self.push(Node::Neg(a), v, act)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let j = self.value(a).to_array().map(|x| x * c);
        let act = self.active[a.index()];
        self.push(Node::Scale(a, c), Jet2::from_array(j), act)
    }

    pub fn unary(&mut self, a: Var, op: Unary) -> Var {
        let v = self.value(a).apply(op);
        let act = self.active[a.index()];
        self.push(Node::Unary(a, op), v, act)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Powi(2))
    }

    /// Lift one jet component of `a` into the value slot of a new node.
    pub fn component(&mut self, a: Var, c: Comp) -> Var {
        let x = self.value(a).to_array()[c.slot()];
        let act = self.active[a.index()];
        self.push(Node::Component(a, c), Jet2::cst(x), act)
    }

    pub fn laplacian(&mut self, a: Var) -> Var {
        let xx = self.component(a, Comp::Hxx);
        let yy = self.component(a, Comp::Hyy);
        self.add(xx, yy)
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        match xs.split_first() {
            None => self.scalar(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.add(acc, x)),
        }
    }

    /// Record a batched operation; returns one node per output, consecutive on the tape.
    pub fn batch(&mut self, op: Box<dyn BatchOp + 'a>) -> Vec<Var> {
        let k = self.batches.len();
        let outs: Vec<Jet2> = op.outputs().to_vec();
        self.batches.push(op);
        outs.into_iter()
            .enumerate()
            .map(|(slot, j)| self.push(Node::Batch { op: k, slot }, j, true))
            .collect()
    }

    /// Gradient of `out.v` with respect to the parameter slice.
    pub fn gradient(&self, out: Var) -> Vec<f64> {
        let n = out.index() + 1;
        let mut adj = vec![Jet2::ZERO; n];
        adj[out.index()].v = 1.0;
        let mut grad = vec![0.0; self.params.len()];
        for i in (0..n).rev() {
            if !self.active[i] {
                continue;
            }
            let w = adj[i];
            match self.nodes[i] {
                Node::Leaf => {}
                Node::Param(k) => grad[k] += w.v,
                Node::Add(a, b) => {
                    adj[a.index()] = adj[a.index()] + w;
                    adj[b.index()] = adj[b.index()] + w;
                }
                Node::Sub(a, b) => {
                    adj[a.index()] = adj[a.index()] + w;
                    adj[b.index()] = adj[b.index()] - w;
                }
                Node::Mul(a, b) => {
                    let (va, vb) = (self.values[a.index()], self.values[b.index()]);
                    if self.active[a.index()] {
                        adj[a.index()] = adj[a.index()] + mul_vjp(w, vb);
                    }
                    if self.active[b.index()] {
                        adj[b.index()] = adj[b.index()] + mul_vjp(w, va);
                    }
                }
                Node::Neg(a) => adj[a.index()] = adj[a.index()] - w,
                Node::Scale(a, c) => {
                    let s = Jet2::from_array(w.to_array().map(|x| x * c));
                    adj[a.index()] = adj[a.index()] + s;
                }
                Node::Unary(a, op) => {
                    let va = self.values[a.index()];
                    adj[a.index()] = adj[a.index()] + unary_vjp(w, va, op.derivs(va.v));
                }
                Node::Component(a, c) => {
                    let mut arr = adj[a.index()].to_array();
                    arr[c.slot()] += w.v;
                    adj[a.index()] = Jet2::from_array(arr);
                }
                Node::Batch { op, slot } => {
                    if slot == 0 {
                        let m = self.batches[op].outputs().len();
                        self.batches[op].backward(&adj[i..i + m], &mut grad);
                    }
                }
            }
        }
        grad
    }
}

/// Value and gradient of a scalar loss recorded on a fresh tape.
pub fn value_and_grad<'a>(
    theta: &'a [f64],
    f: impl FnOnce(&mut Tape<'a>) -> Var,
) -> Result<(f64, Vec<f64>), AdError> {
    let mut tape = Tape::new(theta);
    let out = f(&mut tape);
    let loss = tape.value(out).v;
    if !loss.is_finite() {
        return Err(AdError::NonFiniteLoss(loss));
    }
    let grad = tape.gradient(out);
    check_finite(&grad)?;
    Ok((loss, grad))
}

pub fn check_finite(grad: &[f64]) -> Result<(), AdError> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(index) => Err(AdError::NonFiniteGradient { index }),
        None => Ok(()),
    }
}
