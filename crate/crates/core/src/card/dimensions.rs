//! Static dimensional audit of card equations.
//!
//! Numeric literals and `pi`/`E` are dimensionless. The angle pseudo-dimension
//! is dropped when two sides are compared, since `pi/4 + phi_prime/2` must pass
//! while radians stay distinct from plain numbers at the input boundary.

use serde::Serialize;

use super::MethodCard;
use crate::expression::{self, BinaryOp, ExprNode, Function};
use crate::units::{Dimension, Exponent};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionFinding {
    pub variant: String,
    pub target: String,
    /// Printed form of the offending subexpression.
    pub location: String,
    pub message: String,
}

struct Audit<'a> {
    card: &'a MethodCard,
    variant: &'a str,
    target: &'a str,
    findings: Vec<DimensionFinding>,
}

fn compatible(a: Dimension, b: Dimension) -> bool {
    a.without_angle() == b.without_angle()
}

fn plain(d: Dimension) -> bool {
    d.without_angle().is_dimensionless()
}

/// Nearest rational with a small denominator, if `x` is one.
fn small_rational(x: f64) -> Option<Exponent> {
    (1..=12).find_map(|den| {
        let num = (x * den as f64).round();
        ((x * den as f64 - num).abs() < 1e-9 && num.abs() < 1e6)
            .then(|| Exponent::new(num as i32, den))
    })
}

impl Audit<'_> {
    fn flag(&mut self, node: &ExprNode, message: String) {
        self.findings.push(DimensionFinding {
            variant: self.variant.to_owned(),
            target: self.target.to_owned(),
            location: node.to_string(),
            message,
        });
    }

    /// `None` once a subtree has been flagged, so one fault reports once.
    fn dim(&mut self, node: &ExprNode) -> Option<Dimension> {
        match node {
            ExprNode::Number(_) | ExprNode::Constant(_) => Some(Dimension::DIMENSIONLESS),
            ExprNode::True => Some(Dimension::DIMENSIONLESS),
            ExprNode::Symbol(name) => self.card.unit_of(name).map(|u| u.dimension()),
            ExprNode::Neg(child) => self.dim(child),
            ExprNode::Binary { op, lhs, rhs } => {
                let l = self.dim(lhs);
                let r = self.dim(rhs);
                match op {
                    BinaryOp::Add | BinaryOp::Sub => {
                        let (l, r) = (l?, r?);
                        if !compatible(l, r) {
                            self.flag(node, format!("cannot combine {l} with {r}"));
                            return None;
                        }
                        // keep the angle-bearing side so trig arguments read as angles
                        Some(if l.angle != Exponent::from_integer(0) { l } else { r })
                    }
                    BinaryOp::Mul => Some(l? * r?),
                    BinaryOp::Div => Some(l? / r?),
                    BinaryOp::Pow => {
                        let (base, exponent) = (l?, r?);
                        if !plain(exponent) {
                            self.flag(node, format!("exponent has dimension {exponent}"));
                            return None;
                        }
                        if base.is_dimensionless() {
                            return Some(base);
                        }
                        if !rhs.free_symbols().is_empty() {
                            self.flag(node, format!("{base} raised to a symbolic power"));
                            return None;
                        }
                        let value = expression::evaluate(rhs, &expression::Environment::new()).ok();
                        match value.and_then(small_rational) {
                            Some(e) => Some(base.pow(e)),
                            None => {
                                self.flag(node, format!("{base} raised to an irrational power"));
                                None
                            }
                        }
                    }
                }
            }
            ExprNode::Call { function, args } => {
                let dims: Vec<Option<Dimension>> = args.iter().map(|a| self.dim(a)).collect();
                let dims: Vec<Dimension> = dims.into_iter().collect::<Option<_>>()?;
                match function {
                    Function::Sin
                    | Function::Cos
                    | Function::Tan
                    | Function::Cot
                    | Function::Exp
                    | Function::Log => {
                        if !plain(dims[0]) {
                            self.flag(
                                node,
                                format!(
                                    "{} needs an angle or dimensionless argument, got {}",
                                    function.name(),
                                    dims[0]
                                ),
                            );
                            return None;
                        }
                        Some(Dimension::DIMENSIONLESS)
                    }
                    Function::Asin | Function::Acos | Function::Atan => {
                        if !plain(dims[0]) {
                            self.flag(
                                node,
                                format!("{} needs a dimensionless argument", function.name()),
                            );
                            return None;
                        }
                        Some(Dimension::angle())
                    }
                    Function::Atan2 => {
                        if !compatible(dims[0], dims[1]) {
                            self.flag(node, format!("atan2 of {} and {}", dims[0], dims[1]));
                            return None;
                        }
                        Some(Dimension::angle())
                    }
                    Function::Sqrt => Some(dims[0].pow(Exponent::new(1, 2))),
                    Function::Abs => Some(dims[0]),
                    Function::Min | Function::Max => {
                        if let Some(bad) = dims.iter().find(|d| !compatible(**d, dims[0])) {
                            self.flag(
                                node,
                                format!("{} mixes {} and {}", function.name(), dims[0], bad),
                            );
                            return None;
                        }
                        Some(dims[0])
                    }
                }
            }
            ExprNode::Piecewise(branches) => {
                let mut result: Option<Dimension> = None;
                let mut ok = true;
                for (value, cond) in branches {
                    self.condition(cond);
                    match (self.dim(value), result) {
                        (Some(d), None) => result = Some(d),
                        (Some(d), Some(first)) if !compatible(d, first) => {
                            self.flag(node, format!("Piecewise branches mix {first} and {d}"));
                            ok = false;
                        }
                        (Some(_), Some(_)) => {}
                        (None, _) => ok = false,
                    }
                }
                if ok {
                    result
                } else {
                    None
                }
            }
            ExprNode::Comparison { .. } => {
                self.condition(node);
                Some(Dimension::DIMENSIONLESS)
            }
        }
    }

    /// A comparison against a constant-only side compares magnitudes in card
    /// units, so only symbol-vs-symbol comparisons need matching dimensions.
    fn condition(&mut self, node: &ExprNode) {
        if let ExprNode::Comparison { lhs, rhs, .. } = node {
            let l = self.dim(lhs);
            let r = self.dim(rhs);
            if let (Some(l), Some(r)) = (l, r) {
                let constant_side = lhs.free_symbols().is_empty() || rhs.free_symbols().is_empty();
                if !constant_side && !compatible(l, r) {
                    self.flag(node, format!("comparison of {l} with {r}"));
                }
            }
        }
    }
}

/// Propagates unit dimensions through every equation of every variant.
/// An empty result means the card is dimensionally consistent.
pub fn validate_dimensions(card: &MethodCard) -> Vec<DimensionFinding> {
    let mut findings = Vec::new();
    for (vi, variant) in card.variants.iter().enumerate() {
        for (spec, eq) in variant.equations.iter().zip(card.compiled(vi)) {
            let mut audit = Audit {
                card,
                variant: &variant.id,
                target: &spec.target,
                findings: Vec::new(),
            };
            if let Some(cond) = &eq.condition {
                audit.condition(cond);
            }
            let result = audit.dim(&eq.expr);
            if let (Some(d), Some(unit)) = (result, card.unit_of(&spec.target)) {
                if !compatible(d, unit.dimension()) {
                    audit.flag(
                        &eq.expr,
                        format!(
                            "expression has dimension {d} but `{}` is declared in {} ({})",
                            spec.target,
                            unit.name(),
                            unit.dimension()
                        ),
                    );
                }
            }
            findings.extend(audit.findings);
        }
    }
    findings
}
