//! The card equation language: a small allowlisted subset of symbolic math
//! notation, parsed into an [`ExprNode`] tree and evaluated directly. There is
//! no path from an expression to host-language execution.

mod ast;
mod eval;
mod parser;

pub use ast::{BinaryOp, CompareOp, Constant, ExprNode, Function};
pub use eval::{evaluate, evaluate_condition, Bindings};
pub use parser::parse;

use std::collections::BTreeSet;

/// Symbol-name → magnitude map in card units.
pub type Environment = std::collections::BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("function `{0}` is not in the allowlist")]
    DisallowedFunction(String),
    #[error("disallowed syntax: {0}")]
    DisallowedSyntax(String),
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("math domain error: {0}")]
    MathDomain(String),
    #[error("no Piecewise branch condition holds")]
    NoBranchTaken,
}

pub fn free_symbols(node: &ExprNode) -> BTreeSet<String> {
    node.free_symbols()
}

/// Names an expression can never use as a symbol.
pub fn is_reserved_name(name: &str) -> bool {
    matches!(name, "pi" | "E" | "e" | "True" | "Piecewise") || Function::lookup(name).is_some()
}

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
