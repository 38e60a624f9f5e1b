//! Scalar expressions for boundary data and sources, evaluated over any
//! [`Scalar`] algebra so jets give derivatives for free.

mod parser;

use crate::autodiff::Scalar;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use parser::{parse, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarName {
    X,
    Y,
    T,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(VarName),
    Const(Constant),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("variable '{0}' is not bound")]
    UnboundVariable(VarName),
    #[error("non-finite result in '{0}'")]
    NonFiniteResult(String),
}

/// Values for the four variables; unset ones are unbound.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<S> {
    pub x: Option<S>,
    pub y: Option<S>,
    pub t: Option<S>,
    pub p: Option<S>,
}

impl<S> Default for Bindings<S> {
    fn default() -> Self {
        Bindings { x: None, y: None, t: None, p: None }
    }
}

impl<S: Scalar> Bindings<S> {
    pub fn xy(x: S, y: S) -> Self {
        Bindings { x: Some(x), y: Some(y), ..Default::default() }
    }

    pub fn with_t(mut self, t: S) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_p(mut self, p: S) -> Self {
        self.p = Some(p);
        self
    }

    fn get(&self, v: VarName) -> Option<S> {
        match v {
            VarName::X => self.x,
            VarName::Y => self.y,
            VarName::T => self.t,
            VarName::P => self.p,
        }
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarName::X => "x",
            VarName::Y => "y",
            VarName::T => "t",
            VarName::P => "p",
        })
    }
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    /// Every variable referenced, without duplicates, in first-use order.
    pub fn vars(&self) -> Vec<VarName> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
        });
        out
    }

    fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Neg(a) | Expr::Call(_, a) => a.walk(f),
            Expr::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    pub fn eval<S: Scalar>(&self, b: &Bindings<S>) -> Result<S, EvalError> {
        let r = match self {
            Expr::Num(v) => return Ok(S::constant(*v)),
            Expr::Const(Constant::Pi) => return Ok(S::constant(std::f64::consts::PI)),
            Expr::Const(Constant::E) => return Ok(S::constant(std::f64::consts::E)),
            Expr::Var(v) => return b.get(*v).ok_or(EvalError::UnboundVariable(*v)),
            Expr::Neg(a) => -a.eval(b)?,
            Expr::Call(func, a) => {
                let a = a.eval(b)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                }
            }
            Expr::Binary(op, l, r) => {
                let lv = l.eval(b)?;
                match (op, r.as_ref()) {
                    (BinOp::Pow, Expr::Num(n)) if n.fract() == 0.0 && n.abs() < 2f64.powi(31) => lv.powi(*n as i32),
                    _ => {
                        let rv = r.eval(b)?;
                        match op {
                            BinOp::Add => lv + rv,
                            BinOp::Sub => lv - rv,
                            BinOp::Mul => lv * rv,
                            BinOp::Div => lv / rv,
                            BinOp::Pow => lv.pow(rv),
                        }
                    }
                }
            }
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(EvalError::NonFiniteResult(self.to_string()))
        }
    }

    /// Plain evaluation at `(x, y)`.
    pub fn eval_xy(&self, x: f64, y: f64) -> Result<f64, EvalError> {
        self.eval(&Bindings::xy(x, y))
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Num(v) if *v < 0.0 || v.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "-{}", -v),
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, a.prec() < 3)
            }
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, l, r) => {
                let p = self.prec();
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    wrap(f, l, l.prec() <= p)?;
                    f.write_str(sym)?;
                    wrap(f, r, r.prec() < p)
                } else {
                    wrap(f, l, l.prec() < p)?;
                    f.write_str(sym)?;
                    wrap(f, r, r.prec() <= p)
                }
            }
        }
    }
}

impl FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}
