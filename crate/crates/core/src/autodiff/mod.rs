//! Forward second-order jets for spatial derivatives and a reverse-mode tape
//! over jet-valued nodes for parameter gradients.

mod jet;
mod tape;

pub use jet::{Jet2, Scalar, Unary};
pub use tape::{check_finite, mul_vjp, unary_vjp, value_and_grad, AdError, BatchOp, Comp, Tape, Var};
