use thiserror::Error;

use super::ast::{BinaryOp, ExprAst, ExprKind, Func, Span, UnaryOp, Var, VarKind};
use super::dual::DualScalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{name}` at bytes {span}")]
    UnboundVariable { name: String, span: Span },
    #[error("domain error at bytes {span}: {message}")]
    Domain { message: String, span: Span },
}

/// Values for the three variable families. A variable `g3` reads `g[2]`;
/// an index past the end of its slice is an unbound-variable error.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub g: &'a [f64],
    pub h: &'a [f64],
    pub x: &'a [f64],
}

impl<'a> Bindings<'a> {
    pub fn for_product(g: &'a [f64], h: &'a [f64]) -> Self {
        Bindings { g, h, x: &[] }
    }

    pub fn for_point(x: &'a [f64]) -> Self {
        Bindings { g: &[], h: &[], x }
    }

    fn lookup(&self, var: Var) -> Option<f64> {
        let slice = match var.kind {
            VarKind::G => self.g,
            VarKind::H => self.h,
            VarKind::X => self.x,
        };
        slice.get(var.index).copied()
    }
}

fn unbound(var: Var, span: Span) -> EvalError {
    EvalError::UnboundVariable {
        name: var.to_string(),
        span,
    }
}

fn domain(message: &str, span: Span) -> EvalError {
    EvalError::Domain {
        message: message.into(),
        span,
    }
}

fn check_binary(op: BinaryOp, lhs: f64, rhs: f64, span: Span) -> Result<(), EvalError> {
    match op {
        BinaryOp::Div if rhs == 0.0 => Err(domain("division by zero", span)),
        BinaryOp::Pow if lhs < 0.0 && rhs.fract() != 0.0 => Err(domain(
            "negative base raised to a non-integer power",
            span,
        )),
        BinaryOp::Pow if lhs == 0.0 && rhs < 0.0 => {
            Err(domain("zero raised to a negative power", span))
        }
        _ => Ok(()),
    }
}

fn check_call(func: Func, arg: f64, span: Span) -> Result<(), EvalError> {
    match func {
        Func::Log if arg <= 0.0 => Err(domain("log of a non-positive value", span)),
        Func::Sqrt if arg < 0.0 => Err(domain("square root of a negative value", span)),
        _ => Ok(()),
    }
}

/// Evaluate an expression in IEEE double precision.
pub fn evaluate(ast: &ExprAst, bindings: &Bindings) -> Result<f64, EvalError> {
    match &ast.kind {
        ExprKind::Constant(c) => Ok(*c),
        ExprKind::Var(v) => bindings.lookup(*v).ok_or_else(|| unbound(*v, ast.span)),
        ExprKind::Unary {
            op: UnaryOp::Neg,
            operand,
        } => Ok(-evaluate(operand, bindings)?),
        ExprKind::Binary { op, lhs, rhs } => {
            let a = evaluate(lhs, bindings)?;
            let b = evaluate(rhs, bindings)?;
            check_binary(*op, a, b, ast.span)?;
            Ok(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
                BinaryOp::Pow => a.powf(b),
            })
        }
        ExprKind::Call { func, arg } => {
            let a = evaluate(arg, bindings)?;
            check_call(*func, a, ast.span)?;
            Ok(match func {
                Func::Exp => a.exp(),
                Func::Log => a.ln(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Sqrt => a.sqrt(),
            })
        }
    }
}

/// Evaluate with a directional derivative along `seed`. A variable missing
/// from the seed has derivative zero. The returned value is identical to
/// [`evaluate`] bit for bit.
pub fn evaluate_dual(
    ast: &ExprAst,
    bindings: &Bindings,
    seed: &Bindings,
) -> Result<DualScalar, EvalError> {
    match &ast.kind {
        ExprKind::Constant(c) => Ok(DualScalar::constant(*c)),
        ExprKind::Var(v) => {
            let value = bindings.lookup(*v).ok_or_else(|| unbound(*v, ast.span))?;
            let deriv = seed.lookup(*v).unwrap_or(0.0);
            Ok(DualScalar::new(value, deriv))
        }
        ExprKind::Unary {
            op: UnaryOp::Neg,
            operand,
        } => Ok(-evaluate_dual(operand, bindings, seed)?),
        ExprKind::Binary { op, lhs, rhs } => {
            let a = evaluate_dual(lhs, bindings, seed)?;
            let b = evaluate_dual(rhs, bindings, seed)?;
            check_binary(*op, a.value, b.value, ast.span)?;
            if *op == BinaryOp::Pow && b.deriv != 0.0 && a.value <= 0.0 {
                return Err(domain(
                    "derivative of a power with non-positive base and varying exponent",
                    ast.span,
                ));
            }
            Ok(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => a / b,
                BinaryOp::Pow => a.powf(b),
            })
        }
        ExprKind::Call { func, arg } => {
            let a = evaluate_dual(arg, bindings, seed)?;
            check_call(*func, a.value, ast.span)?;
            if *func == Func::Sqrt && a.value == 0.0 && a.deriv != 0.0 {
                return Err(domain("derivative of sqrt at zero", ast.span));
            }
            Ok(match func {
                Func::Exp => a.exp(),
                Func::Log => a.ln(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Sqrt => a.sqrt(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn eval_str(text: &str, b: &Bindings) -> Result<f64, EvalError> {
        evaluate(&parse(text).unwrap(), b)
    }

    #[test]
    fn direct_arithmetic() {
        let b = Bindings::for_product(&[2.0], &[3.0]);
        assert_eq!(eval_str("g1*h1", &b).unwrap(), 6.0);
    }

    #[test]
    fn exp_of_one() {
        let b = Bindings::for_product(&[1.0], &[]);
        assert_eq!(eval_str("exp(g1)", &b).unwrap(), std::f64::consts::E);
    }

    #[test]
    fn exp_of_zero_is_one() {
        assert_eq!(eval_str("exp(0)", &Bindings::default()).unwrap(), 1.0);
    }

    #[test]
    fn log_singularity_reports_span() {
        let b = Bindings::for_product(&[], &[0.0]);
        match eval_str("log(h1)", &b).unwrap_err() {
            EvalError::Domain { span, .. } => {
                assert_eq!(span, Span::new(0, 7));
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn unbound_variable_named() {
        let b = Bindings::for_product(&[1.0], &[]);
        match eval_str("g2 + 1", &b).unwrap_err() {
            EvalError::UnboundVariable { name, .. } => assert_eq!(name, "g2"),
            other => panic!("expected unbound error, got {other:?}"),
        }
    }

    #[test]
    fn division_by_zero() {
        let b = Bindings::for_point(&[0.0]);
        assert!(matches!(
            eval_str("1/x1", &b).unwrap_err(),
            EvalError::Domain { .. }
        ));
    }

    #[test]
    fn dual_product_rule() {
        let ast = parse("g1*h1").unwrap();
        let b = Bindings::for_product(&[2.0], &[3.0]);
        let seed = Bindings::for_product(&[0.0], &[1.0]);
        let d = evaluate_dual(&ast, &b, &seed).unwrap();
        assert_eq!(d.value, 6.0);
        assert_eq!(d.deriv, 2.0);
    }

    #[test]
    fn dual_of_constant() {
        let ast = parse("5").unwrap();
        let seed = Bindings::for_product(&[1.0], &[1.0]);
        let d = evaluate_dual(&ast, &Bindings::default(), &seed).unwrap();
        assert_eq!(d.value, 5.0);
        assert_eq!(d.deriv, 0.0);
    }

    #[test]
    fn dual_exp_at_zero() {
        let ast = parse("exp(g1)").unwrap();
        let b = Bindings::for_product(&[0.0], &[]);
        let seed = Bindings::for_product(&[1.0], &[]);
        let d = evaluate_dual(&ast, &b, &seed).unwrap();
        assert_eq!(d.value, 1.0);
        assert_eq!(d.deriv, 1.0);
    }

    #[test]
    fn dual_value_matches_evaluate_bitwise() {
        let ast = parse("exp(sin(x1) * cos(x2)) / (x1^2 + 0.5)").unwrap();
        let point = [0.7, -0.3];
        let b = Bindings::for_point(&point);
        let seed_vals = [1.0, 0.5];
        let seed = Bindings::for_point(&seed_vals);
        let plain = evaluate(&ast, &b).unwrap();
        let dual = evaluate_dual(&ast, &b, &seed).unwrap();
        assert_eq!(plain.to_bits(), dual.value.to_bits());
    }
}
