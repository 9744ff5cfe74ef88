use std::collections::{BTreeMap, HashMap};

use super::ast::{BinaryOp, ExprNode, Function};
use super::ExprError;

/// Symbol lookup for evaluation. Unbound symbols are an error, never a default.
pub trait Bindings {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Bindings for BTreeMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Bindings for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<B: Bindings + ?Sized> Bindings for &B {
    fn lookup(&self, name: &str) -> Option<f64> {
        (**self).lookup(name)
    }
}

fn domain(msg: impl Into<String>) -> ExprError {
    ExprError::MathDomain(msg.into())
}

fn finite(value: f64, what: &str) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(domain(format!("{what} produced a non-finite result")))
    }
}

/// Evaluates a numeric expression in IEEE-754 double precision.
pub fn evaluate(node: &ExprNode, env: &impl Bindings) -> Result<f64, ExprError> {
    match node {
        ExprNode::Number(v) => Ok(*v),
        ExprNode::Constant(c) => Ok(c.value()),
        ExprNode::Symbol(name) => env
            .lookup(name)
            .ok_or_else(|| ExprError::UnboundSymbol(name.clone())),
        ExprNode::Neg(child) => Ok(-evaluate(child, env)?),
        ExprNode::Binary { op, lhs, rhs } => {
            let a = evaluate(lhs, env)?;
            let b = evaluate(rhs, env)?;
            match op {
                BinaryOp::Add => finite(a + b, "addition"),
                BinaryOp::Sub => finite(a - b, "subtraction"),
                BinaryOp::Mul => finite(a * b, "multiplication"),
                BinaryOp::Div => {
                    if b == 0.0 {
                        Err(domain("division by zero"))
                    } else {
                        finite(a / b, "division")
                    }
                }
                BinaryOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(domain("zero raised to a negative power"));
                    }
                    if a < 0.0 && b.fract() != 0.0 {
                        return Err(domain("negative base with fractional exponent"));
                    }
                    finite(a.powf(b), "power")
                }
            }
        }
        ExprNode::Call { function, args } => call(*function, args, env),
        ExprNode::Piecewise(branches) => {
            for (value, cond) in branches {
                if evaluate_condition(cond, env)? {
                    return evaluate(value, env);
                }
            }
            Err(ExprError::NoBranchTaken)
        }
        ExprNode::Comparison { .. } | ExprNode::True => Err(ExprError::DisallowedSyntax(
            "boolean expression evaluated as a number".into(),
        )),
    }
}

/// Evaluates a condition (a comparison or `True`).
pub fn evaluate_condition(node: &ExprNode, env: &impl Bindings) -> Result<bool, ExprError> {
    match node {
        ExprNode::True => Ok(true),
        ExprNode::Comparison { op, lhs, rhs } => {
            Ok(op.apply(evaluate(lhs, env)?, evaluate(rhs, env)?))
        }
        _ => Err(ExprError::DisallowedSyntax(
            "numeric expression used as a condition".into(),
        )),
    }
}

fn call(function: Function, args: &[ExprNode], env: &impl Bindings) -> Result<f64, ExprError> {
    let values = args
        .iter()
        .map(|a| evaluate(a, env))
        .collect::<Result<Vec<_>, _>>()?;
    let x = values[0];
    let result = match function {
        Function::Sin => x.sin(),
        Function::Cos => x.cos(),
        Function::Tan => {
            if x.cos() == 0.0 {
                return Err(domain("tan is undefined at odd multiples of pi/2"));
            }
            x.tan()
        }
        Function::Cot => {
            let s = x.sin();
            if s == 0.0 {
                return Err(domain(format!("cot is undefined at {x}")));
            }
            x.cos() / s
        }
        Function::Asin => {
            if !(-1.0..=1.0).contains(&x) {
                return Err(domain(format!("asin argument {x} outside [-1, 1]")));
            }
            x.asin()
        }
        Function::Acos => {
            if !(-1.0..=1.0).contains(&x) {
                return Err(domain(format!("acos argument {x} outside [-1, 1]")));
            }
            x.acos()
        }
        Function::Atan => x.atan(),
        Function::Atan2 => x.atan2(values[1]),
        Function::Exp => x.exp(),
        Function::Log => {
            if x <= 0.0 {
                return Err(domain(format!("log of non-positive value {x}")));
            }
            x.ln()
        }
        Function::Sqrt => {
            if x < 0.0 {
                return Err(domain(format!("sqrt of negative value {x}")));
            }
            x.sqrt()
        }
        Function::Abs => x.abs(),
        Function::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        Function::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    finite(result, function.name())
}
