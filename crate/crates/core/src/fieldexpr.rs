//! A small expression language for scalar fields `f(x | theta)`.
//!
//! Surface syntax: decimal literals, coordinates `x1..xn`, controls
//! `t1..tm`, the constant `pi`, binary `+ - * / ^` with `^` right
//! associative and binding tighter than unary minus, and the function set
//! `exp log sqrt sin cos tan erf erfc abs` (unary) plus `min max` (binary).
//!
//! Parsing reports line/column positions. Printing is canonical: parsing
//! the printed form reproduces the same syntax tree, so expressions can be
//! stored in configs and rehashed without drift.
//!
//! Evaluation follows IEEE double semantics except that `log` and `sqrt`
//! of a negative argument, and a non-real power such as `(-2)^0.5`, raise a
//! domain error naming the offending subexpression instead of returning NaN.

use crate::error::{Error, Result};
use crate::special;
use std::fmt;

/// Variable reference: 0-based index into the coordinate or control vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(usize),
    T(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fun1 {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Erf,
    Erfc,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fun2 {
    Min,
    Max,
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpression {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<FieldExpression>),
    Bin(BinOp, Box<FieldExpression>, Box<FieldExpression>),
    Call1(Fun1, Box<FieldExpression>),
    Call2(Fun2, Box<FieldExpression>, Box<FieldExpression>),
}

/// Values bound to `x*` and `t*` during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub x: &'a [f64],
    pub theta: &'a [f64],
}

impl Fun1 {
    fn name(self) -> &'static str {
        match self {
            Fun1::Exp => "exp",
            Fun1::Log => "log",
            Fun1::Sqrt => "sqrt",
            Fun1::Sin => "sin",
            Fun1::Cos => "cos",
            Fun1::Tan => "tan",
            Fun1::Erf => "erf",
            Fun1::Erfc => "erfc",
            Fun1::Abs => "abs",
        }
    }
}

impl Fun2 {
    fn name(self) -> &'static str {
        match self {
            Fun2::Min => "min",
            Fun2::Max => "max",
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let bytes: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok| out.push(Spanned { tok, line: tl, col: tc });
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
                continue;
            }
            '+' => push(Tok::Plus),
            '-' => push(Tok::Minus),
            '*' => push(Tok::Star),
            '/' => push(Tok::Slash),
            '^' => push(Tok::Caret),
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            ',' => push(Tok::Comma),
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == '.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = bytes[start..i].iter().collect();
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    line: tl,
                    col: tc,
                    msg: format!("invalid number literal `{text}`"),
                })?;
                out.push(Spanned { tok: Tok::Num(v), line: tl, col: tc });
                col += i - start;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                let text: String = bytes[start..i].iter().collect();
                out.push(Spanned { tok: Tok::Ident(text), line: tl, col: tc });
                col += i - start;
                continue;
            }
            other => {
                return Err(Error::Parse {
                    line: tl,
                    col: tc,
                    msg: format!("unexpected character `{other}`"),
                });
            }
        }
        i += 1;
        col += 1;
    }
    out.push(Spanned { tok: Tok::End, line, col });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser (recursive descent; precedence `^` > unary `-` > `* /` > `+ -`)
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let s = self.peek();
        Error::Parse { line: s.line, col: s.col, msg: msg.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn add(&mut self) -> Result<FieldExpression> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul()?;
            lhs = FieldExpression::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul(&mut self) -> Result<FieldExpression> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = FieldExpression::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<FieldExpression> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(FieldExpression::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<FieldExpression> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            // Right associative; the exponent admits a leading unary minus.
            let exp = self.unary()?;
            return Ok(FieldExpression::Bin(
                BinOp::Pow,
                Box::new(base),
                Box::new(exp),
            ));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<FieldExpression> {
        match self.peek().tok.clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(FieldExpression::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.add()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                // Remember where the identifier itself began: errors about
                // the name must point at it, not at whatever follows.
                let (line, col) = {
                    let s = self.peek();
                    (s.line, s.col)
                };
                self.bump();
                self.ident(&name, line, col)
            }
            _ => Err(self.err("expected a number, variable, function, or `(`")),
        }
    }

    fn ident(&mut self, name: &str, line: usize, col: usize) -> Result<FieldExpression> {
        if name == "pi" {
            return Ok(FieldExpression::Pi);
        }
        if let Some(var) = parse_var(name) {
            return Ok(FieldExpression::Var(var));
        }
        let fun1 = match name {
            "exp" => Some(Fun1::Exp),
            "log" => Some(Fun1::Log),
            "sqrt" => Some(Fun1::Sqrt),
            "sin" => Some(Fun1::Sin),
            "cos" => Some(Fun1::Cos),
            "tan" => Some(Fun1::Tan),
            "erf" => Some(Fun1::Erf),
            "erfc" => Some(Fun1::Erfc),
            "abs" => Some(Fun1::Abs),
            _ => None,
        };
        if let Some(f) = fun1 {
            self.expect(Tok::LParen, "`(` after function name")?;
            let a = self.add()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(FieldExpression::Call1(f, Box::new(a)));
        }
        let fun2 = match name {
            "min" => Some(Fun2::Min),
            "max" => Some(Fun2::Max),
            _ => None,
        };
        if let Some(f) = fun2 {
            self.expect(Tok::LParen, "`(` after function name")?;
            let a = self.add()?;
            self.expect(Tok::Comma, "`,` between arguments")?;
            let b = self.add()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(FieldExpression::Call2(f, Box::new(a), Box::new(b)));
        }
        Err(Error::Parse { line, col, msg: format!("unknown identifier `{name}`") })
    }
}

fn parse_var(name: &str) -> Option<Var> {
    let mut chars = name.chars();
    let head = chars.next()?;
    let rest: String = chars.collect();
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let idx: usize = rest.parse().ok()?;
    if idx == 0 {
        return None;
    }
    match head {
        'x' => Some(Var::X(idx - 1)),
        't' => Some(Var::T(idx - 1)),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn prec(e: &FieldExpression) -> u8 {
    match e {
        FieldExpression::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        FieldExpression::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        FieldExpression::Neg(..) => 3,
        FieldExpression::Bin(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

fn write_prec(e: &FieldExpression, min: u8, out: &mut String) {
    let needs = prec(e) < min;
    if needs {
        out.push('(');
    }
    match e {
        FieldExpression::Num(v) => out.push_str(&format!("{v}")),
        FieldExpression::Pi => out.push_str("pi"),
        FieldExpression::Var(Var::X(i)) => out.push_str(&format!("x{}", i + 1)),
        FieldExpression::Var(Var::T(i)) => out.push_str(&format!("t{}", i + 1)),
        FieldExpression::Neg(a) => {
            out.push('-');
            write_prec(a, 3, out);
        }
        FieldExpression::Bin(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => ("+", 1, 2),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                // `^` groups rightward; its base must be an atom.
                BinOp::Pow => ("^", 5, 3),
            };
            write_prec(a, lp, out);
            out.push_str(sym);
            write_prec(b, rp, out);
        }
        FieldExpression::Call1(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_prec(a, 1, out);
            out.push(')');
        }
        FieldExpression::Call2(f, a, b) => {
            out.push_str(f.name());
            out.push('(');
            write_prec(a, 1, out);
            out.push(',');
            write_prec(b, 1, out);
            out.push(')');
        }
    }
    if needs {
        out.push(')');
    }
}

impl fmt::Display for FieldExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_prec(self, 0, &mut s);
        f.write_str(&s)
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

impl FieldExpression {
    /// Parses the surface syntax.
    pub fn parse(src: &str) -> Result<Self> {
        let toks = lex(src)?;
        let mut p = Parser { toks, pos: 0 };
        let e = p.add()?;
        if p.peek().tok != Tok::End {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Largest coordinate index referenced, as a count (`x3` yields 3).
    pub fn coord_arity(&self) -> usize {
        self.fold_arity().0
    }

    /// Largest control index referenced, as a count.
    pub fn control_arity(&self) -> usize {
        self.fold_arity().1
    }

    fn fold_arity(&self) -> (usize, usize) {
        match self {
            FieldExpression::Num(_) | FieldExpression::Pi => (0, 0),
            FieldExpression::Var(Var::X(i)) => (i + 1, 0),
            FieldExpression::Var(Var::T(i)) => (0, i + 1),
            FieldExpression::Neg(a) | FieldExpression::Call1(_, a) => a.fold_arity(),
            FieldExpression::Bin(_, a, b) | FieldExpression::Call2(_, a, b) => {
                let (ax, at) = a.fold_arity();
                let (bx, bt) = b.fold_arity();
                (ax.max(bx), at.max(bt))
            }
        }
    }

    fn domain_error(&self, msg: &str) -> Error {
        Error::EvalDomain { expr: self.to_string(), msg: msg.into() }
    }

    /// Evaluates under IEEE double semantics; see the module docs for the
    /// domain-error contract.
    pub fn eval(&self, ctx: &EvalContext<'_>) -> Result<f64> {
        match self {
            FieldExpression::Num(v) => Ok(*v),
            FieldExpression::Pi => Ok(std::f64::consts::PI),
            FieldExpression::Var(Var::X(i)) => ctx
                .x
                .get(*i)
                .copied()
                .ok_or_else(|| Error::UnknownVariable(format!("x{}", i + 1))),
            FieldExpression::Var(Var::T(i)) => ctx
                .theta
                .get(*i)
                .copied()
                .ok_or_else(|| Error::UnknownVariable(format!("t{}", i + 1))),
            FieldExpression::Neg(a) => Ok(-a.eval(ctx)?),
            FieldExpression::Bin(op, a, b) => {
                let x = a.eval(ctx)?;
                let y = b.eval(ctx)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => Ok(x / y),
                    BinOp::Pow => {
                        let v = x.powf(y);
                        if v.is_nan() && !x.is_nan() && !y.is_nan() {
                            Err(self.domain_error("non-real power"))
                        } else {
                            Ok(v)
                        }
                    }
                }
            }
            FieldExpression::Call1(f, a) => {
                let v = a.eval(ctx)?;
                match f {
                    Fun1::Exp => Ok(v.exp()),
                    Fun1::Log => {
                        if v < 0.0 {
                            Err(self.domain_error("log of a negative argument"))
                        } else {
                            Ok(v.ln())
                        }
                    }
                    Fun1::Sqrt => {
                        if v < 0.0 {
                            Err(self.domain_error("sqrt of a negative argument"))
                        } else {
                            Ok(v.sqrt())
                        }
                    }
                    Fun1::Sin => Ok(v.sin()),
                    Fun1::Cos => Ok(v.cos()),
                    Fun1::Tan => Ok(v.tan()),
                    Fun1::Erf => Ok(special::erf(v)),
                    Fun1::Erfc => Ok(special::erfc(v)),
                    Fun1::Abs => Ok(v.abs()),
                }
            }
            FieldExpression::Call2(f, a, b) => {
                let x = a.eval(ctx)?;
                let y = b.eval(ctx)?;
                Ok(match f {
                    Fun2::Min => x.min(y),
                    Fun2::Max => x.max(y),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(src: &str, x: &[f64], theta: &[f64]) -> f64 {
        FieldExpression::parse(src)
            .unwrap()
            .eval(&EvalContext { x, theta })
            .unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval_str("2+3*4^2", &[], &[]), 50.0);
        assert_eq!(eval_str("-2^2", &[], &[]), -4.0);
        assert_eq!(eval_str("2^-2", &[], &[]), 0.25);
        assert_eq!(eval_str("2^3^2", &[], &[]), 512.0);
        assert_eq!(eval_str("(2+3)*4", &[], &[]), 20.0);
        assert_eq!(eval_str("6-3-2", &[], &[]), 1.0);
        assert_eq!(eval_str("6/3/2", &[], &[]), 1.0);
        assert_eq!(eval_str("2*3^2", &[], &[]), 18.0);
    }

    #[test]
    fn variables_and_controls() {
        assert_eq!(eval_str("x1+2*x2", &[1.0, 3.0], &[]), 7.0);
        assert_eq!(eval_str("t1*x1", &[4.0], &[0.5]), 2.0);
        assert_eq!(eval_str("max(x1,t1)-min(x1,t1)", &[2.0], &[5.0]), 3.0);
    }

    #[test]
    fn functions_evaluate() {
        let v = eval_str("exp(log(2.5))", &[], &[]);
        assert!((v - 2.5).abs() < 1e-14);
        assert!((eval_str("sin(pi/6)", &[], &[]) - 0.5).abs() < 1e-14);
        assert!((eval_str("sqrt(pi)", &[], &[]) - std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((eval_str("erf(1)+erfc(1)", &[], &[]) - 1.0).abs() < 1e-15);
        assert_eq!(eval_str("abs(0-3)", &[], &[]), 3.0);
        assert!((eval_str("tan(pi/4)", &[], &[]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_pi_matches_improper_integral() {
        // Independent cross-check of the evaluator against quadrature.
        let q = crate::quad::integrate_real_line(|x| (-x * x).exp(), 1e-12).unwrap();
        let v = eval_str("sqrt(pi)", &[], &[]);
        assert!((q.value - v).abs() <= 1e-11);
        let w = eval_str("exp(0.5*log(pi))", &[], &[]);
        assert!((q.value - w).abs() <= 1e-11);
    }

    #[test]
    fn unknown_variable_is_reported() {
        let e = FieldExpression::parse("x3+1").unwrap();
        let err = e.eval(&EvalContext { x: &[1.0, 2.0], theta: &[] }).unwrap_err();
        assert!(matches!(err, Error::UnknownVariable(ref v) if v == "x3"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = FieldExpression::parse("1 +\n* 2").unwrap_err();
        match err {
            Error::Parse { line, col, .. } => {
                assert_eq!(line, 2);
                assert_eq!(col, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = FieldExpression::parse("2 + foo(1)").unwrap_err();
        match err {
            Error::Parse { line, col, msg } => {
                assert_eq!(line, 1);
                assert_eq!(col, 5);
                assert!(msg.contains("foo"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = FieldExpression::parse("1+log(0-x1)").unwrap();
        let err = e.eval(&EvalContext { x: &[2.0], theta: &[] }).unwrap_err();
        match err {
            Error::EvalDomain { expr, .. } => assert_eq!(expr, "log(0-x1)"),
            other => panic!("unexpected error {other:?}"),
        }
        let e = FieldExpression::parse("sqrt(0-1)").unwrap();
        assert!(e.eval(&EvalContext { x: &[], theta: &[] }).is_err());
        // log(0) follows IEEE to -inf rather than erroring.
        let e = FieldExpression::parse("log(0)").unwrap();
        assert_eq!(
            e.eval(&EvalContext { x: &[], theta: &[] }).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn print_then_parse_is_identity_on_samples() {
        for src in [
            "1+2*3",
            "-x1^2",
            "x1^-t1",
            "(x1+x2)^2",
            "2^3^2",
            "min(x1,max(t1,2))",
            "exp(-(x1-t1)^2/2)",
            "1/(x1*x2)",
            "x1-(x2-x3)",
            "-(x1+1)",
            "sqrt(pi)*erfc(t1/sqrt(2))",
        ] {
            let e = FieldExpression::parse(src).unwrap();
            let printed = e.to_string();
            let e2 = FieldExpression::parse(&printed).unwrap();
            assert_eq!(e, e2, "fixpoint failed: `{src}` printed as `{printed}`");
            assert_eq!(printed, e2.to_string());
        }
    }

    #[test]
    fn arity_queries() {
        let e = FieldExpression::parse("x1*x3+t2").unwrap();
        assert_eq!(e.coord_arity(), 3);
        assert_eq!(e.control_arity(), 2);
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        fn arb_expr() -> impl Strategy<Value = FieldExpression> {
            let leaf = prop_oneof![
                // Finite positive literals; the lexer never emits negatives.
                (0u32..1_000_000u32, 1u32..1000u32)
                    .prop_map(|(a, b)| FieldExpression::Num(a as f64 / b as f64)),
                Just(FieldExpression::Pi),
                (0usize..3).prop_map(|i| FieldExpression::Var(Var::X(i))),
                (0usize..2).prop_map(|i| FieldExpression::Var(Var::T(i))),
            ];
            leaf.prop_recursive(6, 64, 3, |inner| {
                prop_oneof![
                    inner.clone().prop_map(|a| FieldExpression::Neg(Box::new(a))),
                    (
                        prop_oneof![
                            Just(BinOp::Add),
                            Just(BinOp::Sub),
                            Just(BinOp::Mul),
                            Just(BinOp::Div),
                            Just(BinOp::Pow)
                        ],
                        inner.clone(),
                        inner.clone()
                    )
                        .prop_map(|(op, a, b)| FieldExpression::Bin(
                            op,
                            Box::new(a),
                            Box::new(b)
                        )),
                    (
                        prop_oneof![
                            Just(Fun1::Exp),
                            Just(Fun1::Log),
                            Just(Fun1::Sqrt),
                            Just(Fun1::Sin),
                            Just(Fun1::Cos),
                            Just(Fun1::Tan),
                            Just(Fun1::Erf),
                            Just(Fun1::Erfc),
                            Just(Fun1::Abs)
                        ],
                        inner.clone()
                    )
                        .prop_map(|(f, a)| FieldExpression::Call1(f, Box::new(a))),
                    (
                        prop_oneof![Just(Fun2::Min), Just(Fun2::Max)],
                        inner.clone(),
                        inner
                    )
                        .prop_map(|(f, a, b)| FieldExpression::Call2(
                            f,
                            Box::new(a),
                            Box::new(b)
                        )),
                ]
            })
        }

        proptest! {
            #[test]
            fn parse_print_parse_fixpoint(e in arb_expr()) {
                let printed = e.to_string();
                let reparsed = FieldExpression::parse(&printed).unwrap();
                prop_assert_eq!(&e, &reparsed, "printed: {}", printed);
                prop_assert_eq!(printed, reparsed.to_string());
            }
        }
    }
}
