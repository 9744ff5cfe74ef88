//! Tokenizer and recursive-descent parser for the card expression language.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr     := additive (cmp-op additive)?
//! additive := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := ('-' | '+') unary | power
//! power    := primary ('**' unary)?
//! primary  := NUMBER | NAME | NAME '(' args ')' | '(' expr ')' | 'True'
//! ```
//!
//! Only names in the function allowlist may be called. There are no strings,
//! attribute access, indexing, lambdas or statements.

use super::ast::{BinaryOp, CompareOp, Constant, ExprNode, Function};
use super::ExprError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Pow,
    LParen,
    RParen,
    Comma,
    Cmp(CompareOp),
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: usize,
}

const RESERVED_WORDS: &[&str] = &[
    "import", "lambda", "exec", "eval", "compile", "open", "globals", "locals", "getattr",
    "setattr", "delattr", "def", "class", "for", "while", "if", "else", "return", "yield",
    "with", "from", "del", "global", "nonlocal", "assert", "async", "await", "raise", "try",
    "except", "finally", "and", "or", "not", "is", "in", "None", "False",
];

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'/' => Some(Tok::Slash),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, pos: start });
            i += 1;
            continue;
        }
        match c {
            b'*' => {
                if bytes.get(i + 1) == Some(&b'*') {
                    out.push(Token { tok: Tok::Pow, pos: start });
                    i += 2;
                } else {
                    out.push(Token { tok: Tok::Star, pos: start });
                    i += 1;
                }
            }
            b'>' | b'<' | b'=' | b'!' => {
                let next_eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, next_eq) {
                    (b'>', false) => CompareOp::Gt,
                    (b'>', true) => CompareOp::Ge,
                    (b'<', false) => CompareOp::Lt,
                    (b'<', true) => CompareOp::Le,
                    (b'=', true) => CompareOp::Eq,
                    (b'=', false) => {
                        return Err(ExprError::DisallowedSyntax(format!(
                            "assignment `=` at position {start}"
                        )))
                    }
                    _ => {
                        return Err(ExprError::DisallowedSyntax(format!(
                            "operator `!` at position {start}"
                        )))
                    }
                };
                out.push(Token {
                    tok: Tok::Cmp(op),
                    pos: start,
                });
                i += if next_eq { 2 } else { 1 };
            }
            b'0'..=b'9' | b'.' => {
                let (value, len) = lex_number(&text[i..]).ok_or_else(|| {
                    if c == b'.' {
                        ExprError::DisallowedSyntax(format!("attribute access at position {start}"))
                    } else {
                        ExprError::Parse {
                            position: start,
                            message: "malformed number".into(),
                        }
                    }
                })?;
                i += len;
                // `1.real`, `2x`: a number glued to a name or dot is not a number
                if let Some(&n) = bytes.get(i) {
                    if n == b'.' {
                        return Err(ExprError::DisallowedSyntax(format!(
                            "attribute access at position {i}"
                        )));
                    }
                    if n.is_ascii_alphabetic() || n == b'_' {
                        return Err(ExprError::Parse {
                            position: i,
                            message: "implicit multiplication is not supported".into(),
                        });
                    }
                }
                out.push(Token {
                    tok: Tok::Num(value),
                    pos: start,
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let name = &text[start..i];
                if name.starts_with("__") || name.ends_with("__") {
                    return Err(ExprError::DisallowedSyntax(format!(
                        "dunder name `{name}`"
                    )));
                }
                if RESERVED_WORDS.contains(&name) {
                    return Err(ExprError::DisallowedSyntax(format!("keyword `{name}`")));
                }
                if bytes.get(i) == Some(&b'.') {
                    return Err(ExprError::DisallowedSyntax(format!(
                        "attribute access on `{name}`"
                    )));
                }
                out.push(Token {
                    tok: Tok::Name(name.to_owned()),
                    pos: start,
                });
            }
            b'\'' | b'"' => {
                return Err(ExprError::DisallowedSyntax(format!(
                    "string literal at position {start}"
                )))
            }
            b'[' | b']' | b'{' | b'}' => {
                return Err(ExprError::DisallowedSyntax(format!(
                    "indexing or collection literal at position {start}"
                )))
            }
            b';' => {
                return Err(ExprError::DisallowedSyntax(format!(
                    "statement separator at position {start}"
                )))
            }
            b'^' => {
                return Err(ExprError::DisallowedSyntax(
                    "`^` is not exponentiation; use `**`".into(),
                ))
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ExprError::DisallowedSyntax(format!(
                    "character `{ch}` at position {start}"
                )));
            }
        }
    }
    out.push(Token {
        tok: Tok::End,
        pos: text.len(),
    });
    Ok(out)
}

fn lex_number(s: &str) -> Option<(f64, usize)> {
    let b = s.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i;
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let f = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        digits += i - f;
    }
    if digits == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let d = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j == d {
            return None;
        }
        i = j;
    }
    let value: f64 = s[..i].parse().ok()?;
    value.is_finite().then_some((value, i))
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> usize {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.at].tok.clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn numeric(&self, node: ExprNode, context: &str) -> Result<ExprNode, ExprError> {
        if node.is_boolean() {
            Err(ExprError::DisallowedSyntax(format!(
                "boolean expression used as {context}"
            )))
        } else {
            Ok(node)
        }
    }

    fn expr(&mut self) -> Result<ExprNode, ExprError> {
        let lhs = self.additive()?;
        if let Tok::Cmp(op) = *self.peek() {
            self.bump();
            let rhs = self.additive()?;
            let lhs = self.numeric(lhs, "comparison operand")?;
            let rhs = self.numeric(rhs, "comparison operand")?;
            if let Tok::Cmp(_) = self.peek() {
                return Err(ExprError::DisallowedSyntax("chained comparison".into()));
            }
            return Ok(ExprNode::Comparison {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<ExprNode, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = ExprNode::binary(
                op,
                self.numeric(lhs, "arithmetic operand")?,
                self.numeric(rhs, "arithmetic operand")?,
            );
        }
    }

    fn term(&mut self) -> Result<ExprNode, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = ExprNode::binary(
                op,
                self.numeric(lhs, "arithmetic operand")?,
                self.numeric(rhs, "arithmetic operand")?,
            );
        }
    }

    fn unary(&mut self) -> Result<ExprNode, ExprError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let child = self.unary()?;
                Ok(ExprNode::Neg(Box::new(self.numeric(child, "negation operand")?)))
            }
            Tok::Plus => {
                self.bump();
                let child = self.unary()?;
                self.numeric(child, "arithmetic operand")
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<ExprNode, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Pow {
            self.bump();
            let exponent = self.unary()?;
            return Ok(ExprNode::binary(
                BinaryOp::Pow,
                self.numeric(base, "power base")?,
                self.numeric(exponent, "exponent")?,
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<ExprNode, ExprError> {
        match self.bump() {
            Tok::Num(v) => Ok(ExprNode::Number(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                if *self.peek() == Tok::Comma {
                    return Err(ExprError::DisallowedSyntax(
                        "tuple outside Piecewise".into(),
                    ));
                }
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Name(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    return self.call(name);
                }
                Ok(match name.as_str() {
                    "pi" => ExprNode::Constant(Constant::Pi),
                    "E" | "e" => ExprNode::Constant(Constant::E),
                    "True" => ExprNode::True,
                    "Piecewise" => {
                        return Err(ExprError::DisallowedSyntax(
                            "`Piecewise` must be called".into(),
                        ))
                    }
                    _ if Function::lookup(&name).is_some() => {
                        return Err(ExprError::DisallowedSyntax(format!(
                            "function `{name}` used as a value"
                        )))
                    }
                    _ => ExprNode::Symbol(name),
                })
            }
            Tok::End => {
                self.at = self.tokens.len() - 1;
                self.error("unexpected end of expression")
            }
            other => {
                self.at = self.at.saturating_sub(1);
                self.error(format!("unexpected token {other:?}"))
            }
        }
    }

    fn call(&mut self, name: String) -> Result<ExprNode, ExprError> {
        if name == "Piecewise" {
            return self.piecewise();
        }
        let function = Function::lookup(&name).ok_or(ExprError::DisallowedFunction(name.clone()))?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let arg = self.expr()?;
                args.push(self.numeric(arg, "function argument")?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)` closing the argument list")?;
        let arity_ok = match function.arity() {
            Some(n) => args.len() == n,
            None => !args.is_empty(),
        };
        if !arity_ok {
            return self.error(format!(
                "`{name}` called with {} argument(s)",
                args.len()
            ));
        }
        Ok(ExprNode::Call { function, args })
    }

    fn piecewise(&mut self) -> Result<ExprNode, ExprError> {
        let mut branches = Vec::new();
        loop {
            self.expect(Tok::LParen, "`(` opening a Piecewise branch")?;
            let value = self.expr()?;
            let value = self.numeric(value, "Piecewise value")?;
            self.expect(Tok::Comma, "`,` between Piecewise value and condition")?;
            let cond = self.expr()?;
            if !cond.is_boolean() {
                return Err(ExprError::DisallowedSyntax(
                    "Piecewise condition must be a comparison or True".into(),
                ));
            }
            self.expect(Tok::RParen, "`)` closing a Piecewise branch")?;
            branches.push((value, cond));
            if *self.peek() == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen, "`)` closing Piecewise")?;
        Ok(ExprNode::Piecewise(branches))
    }
}

/// Parses one expression. Comparisons are accepted at the top level so the
/// same entry point serves equation conditions.
pub fn parse(text: &str) -> Result<ExprNode, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Parse {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, at: 0 };
    let node = parser.expr()?;
    if *parser.peek() != Tok::End {
        return parser.error("unexpected trailing input");
    }
    Ok(node)
}
