use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constant::Pi => "pi",
            Constant::E => "E",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "**",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => PREC_ADD,
            BinaryOp::Mul | BinaryOp::Div => PREC_MUL,
            BinaryOp::Pow => PREC_POW,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Eq => "==",
        }
    }

    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Eq => lhs == rhs,
        }
    }
}

/// The allowlisted functions. Nothing else is callable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Function {
    Sin,
    Cos,
    Tan,
    Cot,
    Asin,
    Acos,
    Atan,
    Atan2,
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Function {
    pub const ALL: [Function; 14] = [
        Function::Sin,
        Function::Cos,
        Function::Tan,
        Function::Cot,
        Function::Asin,
        Function::Acos,
        Function::Atan,
        Function::Atan2,
        Function::Exp,
        Function::Log,
        Function::Sqrt,
        Function::Abs,
        Function::Min,
        Function::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Tan => "tan",
            Function::Cot => "cot",
            Function::Asin => "asin",
            Function::Acos => "acos",
            Function::Atan => "atan",
            Function::Atan2 => "atan2",
            Function::Exp => "exp",
            Function::Log => "log",
            Function::Sqrt => "sqrt",
            Function::Abs => "Abs",
            Function::Min => "Min",
            Function::Max => "Max",
        }
    }

    pub fn lookup(name: &str) -> Option<Function> {
        Function::ALL.into_iter().find(|f| f.name() == name)
    }

    /// `None` means variadic with at least one argument.
    pub fn arity(self) -> Option<usize> {
        match self {
            Function::Atan2 => Some(2),
            Function::Min | Function::Max => None,
            _ => Some(1),
        }
    }
}

/// Abstract syntax tree of one card expression.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprNode {
    Number(f64),
    Constant(Constant),
    Symbol(String),
    Neg(Box<ExprNode>),
    Binary {
        op: BinaryOp,
        lhs: Box<ExprNode>,
        rhs: Box<ExprNode>,
    },
    Call {
        function: Function,
        args: Vec<ExprNode>,
    },
    /// Ordered `(value, condition)` branches; the first true condition wins.
    Piecewise(Vec<(ExprNode, ExprNode)>),
    Comparison {
        op: CompareOp,
        lhs: Box<ExprNode>,
        rhs: Box<ExprNode>,
    },
    True,
}

impl ExprNode {
    pub fn is_boolean(&self) -> bool {
        matches!(self, ExprNode::Comparison { .. } | ExprNode::True)
    }

    pub fn binary(op: BinaryOp, lhs: ExprNode, rhs: ExprNode) -> ExprNode {
        ExprNode::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    /// Every symbol name in the tree, Piecewise conditions included.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            ExprNode::Number(_) | ExprNode::Constant(_) | ExprNode::True => {}
            ExprNode::Symbol(s) => {
                out.insert(s.clone());
            }
            ExprNode::Neg(child) => child.collect_symbols(out),
            ExprNode::Binary { lhs, rhs, .. } | ExprNode::Comparison { lhs, rhs, .. } => {
                lhs.collect_symbols(out);
                rhs.collect_symbols(out);
            }
            ExprNode::Call { args, .. } => args.iter().for_each(|a| a.collect_symbols(out)),
            ExprNode::Piecewise(branches) => {
                for (value, cond) in branches {
                    value.collect_symbols(out);
                    cond.collect_symbols(out);
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprNode::Comparison { .. } => PREC_CMP,
            ExprNode::Binary { op, .. } => op.precedence(),
            ExprNode::Neg(_) => PREC_UNARY,
            ExprNode::Number(_)
            | ExprNode::Constant(_)
            | ExprNode::Symbol(_)
            | ExprNode::Call { .. }
            | ExprNode::Piecewise(_)
            | ExprNode::True => PREC_ATOM,
        }
    }
}

// Binding strength, loosest first. Unary minus sits between `*` and `**`.
const PREC_CMP: u8 = 1;
const PREC_ADD: u8 = 2;
const PREC_MUL: u8 = 3;
const PREC_UNARY: u8 = 4;
const PREC_POW: u8 = 5;
const PREC_ATOM: u8 = 6;

struct Wrapped<'a>(&'a ExprNode, bool);

impl fmt::Display for Wrapped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprNode::Number(v) => write!(f, "{v}"),
            ExprNode::Constant(c) => f.write_str(c.name()),
            ExprNode::Symbol(s) => f.write_str(s),
            ExprNode::True => f.write_str("True"),
            ExprNode::Neg(child) => {
                write!(f, "-{}", Wrapped(child, child.precedence() < PREC_UNARY))
            }
            ExprNode::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                if *op == BinaryOp::Pow {
                    // right-associative; the exponent may be a bare unary
                    let lwrap = lhs.precedence() <= PREC_POW;
                    let rwrap = rhs.precedence() < PREC_UNARY;
                    write!(f, "{}**{}", Wrapped(lhs, lwrap), Wrapped(rhs, rwrap))
                } else {
                    let lwrap = lhs.precedence() < prec;
                    let rwrap = rhs.precedence() <= prec;
                    let sep = if prec == PREC_ADD {
                        format!(" {} ", op.symbol())
                    } else {
                        op.symbol().to_owned()
                    };
                    write!(f, "{}{}{}", Wrapped(lhs, lwrap), sep, Wrapped(rhs, rwrap))
                }
            }
            ExprNode::Comparison { op, lhs, rhs } => write!(
                f,
                "{} {} {}",
                Wrapped(lhs, lhs.precedence() <= PREC_CMP),
                op.symbol(),
                Wrapped(rhs, rhs.precedence() <= PREC_CMP)
            ),
            ExprNode::Call { function, args } => {
                write!(f, "{}(", function.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            ExprNode::Piecewise(branches) => {
                f.write_str("Piecewise(")?;
                for (i, (value, cond)) in branches.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "({value}, {cond})")?;
                }
                f.write_str(")")
            }
        }
    }
}
