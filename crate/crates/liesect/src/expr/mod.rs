//! Scalar expression DSL for user-defined group products and fibrations.
//!
//! Expressions are infix arithmetic over a fixed variable vocabulary:
//! `g1..gn` and `h1..hn` for the two arguments of a product rule, and
//! `x1..xn` for single-argument rules such as projections. Evaluation is
//! plain IEEE double precision; [`evaluate_dual`] additionally propagates a
//! directional derivative through every operation, which is how all first
//! differentials of custom rules are obtained without symbolic algebra.

mod ast;
mod dual;
mod eval;
mod parse;

pub use ast::{BinaryOp, ExprAst, ExprKind, Func, Span, UnaryOp, Var, VarKind};
pub use dual::DualScalar;
pub use eval::{evaluate, evaluate_dual, Bindings, EvalError};
pub use parse::{parse, ParseError};
