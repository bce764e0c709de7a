//! The `y = f(x)` transform language.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-"? atom
//! atom   := number | variable | "pi" | name "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! An optional `y =` prefix is accepted. Variables are `x` (alias of `x0`)
//! through `x9`, one per bound source signal.

use std::fmt;

use thiserror::Error;

pub const MAX_VARIABLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown function `{name}` at position {position}")]
    UnknownFunction { position: usize, name: String },
    #[error("`{name}` at position {position} takes {expected} argument(s), got {found}")]
    Arity {
        position: usize,
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("variable x{index} at position {position} is unbound ({bound} source(s))")]
    UnboundVariable {
        position: usize,
        index: usize,
        bound: usize,
    },
}

impl ExprError {
    pub fn position(&self) -> usize {
        match self {
            ExprError::Syntax { position, .. }
            | ExprError::UnknownFunction { position, .. }
            | ExprError::Arity { position, .. }
            | ExprError::UnboundVariable { position, .. } => *position,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Abs,
    Min,
    Max,
    Clamp,
    Pow,
    Exp,
    Log,
    Sqrt,
    Floor,
}

impl Func {
    pub const ALL: [Func; 11] = [
        Func::Sin,
        Func::Cos,
        Func::Abs,
        Func::Min,
        Func::Max,
        Func::Clamp,
        Func::Pow,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Floor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clamp => "clamp",
            Func::Pow => "pow",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Floor => "floor",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Clamp => 3,
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, args: &[f64]) -> f64 {
        match self {
            Func::Sin => args[0].sin(),
            Func::Cos => args[0].cos(),
            Func::Abs => args[0].abs(),
            Func::Min => args[0].min(args[1]),
            Func::Max => args[0].max(args[1]),
            // Not f64::clamp: that panics when lo > hi.
            Func::Clamp => args[0].max(args[1]).min(args[2]),
            Func::Pow => args[0].powf(args[1]),
            Func::Exp => args[0].exp(),
            Func::Log => args[0].ln(),
            Func::Sqrt => args[0].sqrt(),
            Func::Floor => args[0].floor(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Non-negative literal; negation is always an explicit `Neg`.
    Const(f64),
    Pi,
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Pure evaluation. Domain errors (x/0, log of non-positive, sqrt of
    /// negative) come back as non-finite values for the caller to mask.
    pub fn eval(&self, inputs: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(i) => inputs.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(inputs),
            Expr::Binary(op, l, r) => {
                let (a, b) = (l.eval(inputs), r.eval(inputs));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, args) => {
                let mut values = [0.0; 3];
                for (slot, arg) in values.iter_mut().zip(args) {
                    *slot = arg.eval(inputs);
                }
                f.apply(&values[..args.len()])
            }
        }
    }

    /// Highest variable index referenced, if any.
    pub fn max_variable(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Pi => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) => e.max_variable(),
            Expr::Binary(_, l, r) => l.max_variable().max(r.max_variable()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_variable).max(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            _ => 3,
        }
    }

    fn is_atom(&self) -> bool {
        matches!(self, Expr::Const(_) | Expr::Pi | Expr::Var(_) | Expr::Call(..))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Pi => f.write_str("pi"),
            Expr::Var(0) => f.write_str("x"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(e) if e.is_atom() => write!(f, "-{e}"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.symbol())?;
                // Left associative: an equal-precedence right operand needs parens.
                if r.precedence() <= p {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    Equals,
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Number(v) => format!("number {v}"),
            Token::Ident(s) => format!("`{s}`"),
            Token::Op(c) => format!("`{c}`"),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Equals => "`=`".into(),
            Token::End => "end of input".into(),
        }
    }
}

fn syntax(position: usize, message: impl Into<String>) -> ExprError {
    ExprError::Syntax {
        position,
        message: message.into(),
    }
}

/// Positions are character offsets into the source text.
fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '+' | '-' | '*' | '/' => {
                tokens.push((Token::Op(c), start));
                i += 1;
            }
            '(' => {
                tokens.push((Token::LParen, start));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, start));
                i += 1;
            }
            ',' => {
                tokens.push((Token::Comma, start));
                i += 1;
            }
            '=' => {
                tokens.push((Token::Equals, start));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let mantissa: String = chars[start..i].iter().collect();
                if mantissa == "." {
                    return Err(syntax(start, "expected digits around `.`"));
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    let digits_start = j;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j == digits_start {
                        return Err(syntax(j, "expected exponent digits"));
                    }
                    i = j;
                }
                let literal: String = chars[start..i].iter().collect();
                let value: f64 = literal
                    .parse()
                    .map_err(|_| syntax(start, format!("invalid number `{literal}`")))?;
                if !value.is_finite() {
                    return Err(syntax(start, format!("number `{literal}` is out of range")));
                }
                tokens.push((Token::Number(value), start));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                tokens.push((Token::Ident(chars[start..i].iter().collect()), start));
            }
            other => return Err(syntax(start, format!("unexpected character `{other}`"))),
        }
    }
    tokens.push((Token::End, chars.len()));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    n_sources: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn position(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> (Token, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.advance();
            Ok(())
        } else {
            Err(syntax(
                self.position(),
                format!("expected {what}, found {}", self.peek().describe()),
            ))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Op('+') => BinOp::Add,
                Token::Op('-') => BinOp::Sub,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.term()?;
            left = Expr::Binary(op, Box::new(left), Box::new(right));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek() {
                Token::Op('*') => BinOp::Mul,
                Token::Op('/') => BinOp::Div,
                _ => return Ok(left),
            };
            self.advance();
            let right = self.factor()?;
            left = Expr::Binary(op, Box::new(left), Box::new(right));
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if *self.peek() == Token::Op('-') {
            self.advance();
            Ok(Expr::Neg(Box::new(self.atom()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let (token, position) = self.advance();
        match token {
            Token::Number(v) => Ok(Expr::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) if *self.peek() == Token::LParen => self.call(name, position),
            Token::Ident(name) => self.name(&name, position),
            // Error points at the offending token, not past it.
            other => Err(syntax(
                position,
                format!("expected a number, variable or `(`, found {}", other.describe()),
            )),
        }
    }

    fn name(&self, name: &str, position: usize) -> Result<Expr, ExprError> {
        if name == "pi" {
            return Ok(Expr::Pi);
        }
        let index = match name {
            "x" => Some(0),
            _ => name
                .strip_prefix('x')
                .filter(|d| d.len() == 1)
                .and_then(|d| d.parse::<usize>().ok()),
        };
        match index {
            Some(index) if index < self.n_sources => Ok(Expr::Var(index)),
            Some(index) => Err(ExprError::UnboundVariable {
                position,
                index,
                bound: self.n_sources,
            }),
            None => Err(syntax(position, format!("unknown name `{name}`"))),
        }
    }

    fn call(&mut self, name: String, position: usize) -> Result<Expr, ExprError> {
        let func = Func::lookup(&name).ok_or(ExprError::UnknownFunction {
            position,
            name: name.clone(),
        })?;
        self.expect(Token::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Token::Comma {
            self.advance();
            args.push(self.expr()?);
        }
        self.expect(Token::RParen, "`,` or `)`")?;
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                position,
                name: func.name(),
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parses `text` for a mapping with `n_sources` bound inputs.
pub fn parse_expression(text: &str, n_sources: usize) -> Result<Expr, ExprError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        n_sources: n_sources.min(MAX_VARIABLES),
    };
    if *parser.peek() == Token::End {
        return Err(syntax(0, "empty expression"));
    }
    if parser.tokens.len() > 2
        && parser.tokens[0].0 == Token::Ident("y".into())
        && parser.tokens[1].0 == Token::Equals
    {
        parser.pos = 2;
    }
    let expr = parser.expr()?;
    match parser.peek() {
        Token::End => Ok(expr),
        other => Err(syntax(
            parser.position(),
            format!("unexpected {}", other.describe()),
        )),
    }
}

/// A parsed expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    text: String,
    ast: Expr,
    n_sources: usize,
}

impl Expression {
    pub fn parse(text: &str, n_sources: usize) -> Result<Self, ExprError> {
        Ok(Expression {
            text: text.to_string(),
            ast: parse_expression(text, n_sources)?,
            n_sources,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn eval(&self, inputs: &[f64]) -> f64 {
        self.ast.eval(inputs)
    }

    /// Canonical `y = …` rendering.
    pub fn canonical(&self) -> String {
        format!("y = {}", self.ast)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval(text: &str, inputs: &[f64]) -> f64 {
        parse_expression(text, inputs.len()).unwrap().eval(inputs)
    }

    #[test]
    fn quoted_linear_transforms() {
        assert!((eval("y = 0.5*x", &[7.1]) - 3.55).abs() < 1e-12);
        assert!((eval("y=0.01*x", &[250.0]) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn builtins() {
        assert_eq!(eval("y=clamp(x,0,1)", &[1.5]), 1.0);
        assert_eq!(eval("y=x", &[0.42]), 0.42);
        assert!((eval("y=x0*x1", &[0.5, 0.8]) - 0.4).abs() < 1e-15);
        assert_eq!(eval("min(x, 2) + max(x, 2)", &[5.0]), 7.0);
        assert_eq!(eval("pow(2, 10)", &[0.0]), 1024.0);
        assert_eq!(eval("floor(-1.5)", &[0.0]), -2.0);
        assert!((eval("sin(pi/2) + cos(0) + exp(0) + log(1) + sqrt(16) + abs(-3)", &[0.0]) - 10.0).abs() < 1e-12);
        assert_eq!(eval("1 - 2 - 3", &[0.0]), -4.0);
        assert_eq!(eval("8 / 4 / 2", &[0.0]), 1.0);
        assert_eq!(eval("2 + 3 * 4", &[0.0]), 14.0);
        assert_eq!(eval("-x * 2", &[3.0]), -6.0);
        assert_eq!(eval("1.5e2 + .5 + 2E-1", &[0.0]), 150.7);
        // clamp with crossed bounds does not panic
        assert_eq!(eval("clamp(x, 1, 0)", &[0.5]), 0.0);
    }

    #[test]
    fn domain_errors_are_non_finite() {
        assert!(!eval("1/x", &[0.0]).is_finite());
        assert!(!eval("log(x)", &[-1.0]).is_finite());
        assert!(!eval("sqrt(x)", &[-1.0]).is_finite());
    }

    #[test]
    fn incomplete_factor_position() {
        let err = parse_expression("y=0.5*", 1).unwrap_err();
        assert!(matches!(err, ExprError::Syntax { position: 6, .. }), "{err}");
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(
            parse_expression("y=x0*x1", 1),
            Err(ExprError::UnboundVariable { index: 1, position: 5, .. })
        ));
        assert!(matches!(
            parse_expression("tanh(x)", 1),
            Err(ExprError::UnknownFunction { position: 0, .. })
        ));
        assert!(matches!(
            parse_expression("y = clamp(x, 1)", 1),
            Err(ExprError::Arity { position: 4, expected: 3, found: 2, .. })
        ));
        assert!(matches!(parse_expression("", 1), Err(ExprError::Syntax { position: 0, .. })));
        assert!(matches!(parse_expression("   ", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expression("x +* 2", 1), Err(ExprError::Syntax { position: 3, .. })));
        assert!(matches!(parse_expression("(x", 1), Err(ExprError::Syntax { position: 2, .. })));
        assert!(matches!(parse_expression("x)", 1), Err(ExprError::Syntax { position: 1, .. })));
        assert!(matches!(parse_expression("--x", 1), Err(ExprError::Syntax { position: 1, .. })));
        assert!(matches!(parse_expression("z", 1), Err(ExprError::Syntax { position: 0, .. })));
        assert!(matches!(parse_expression("1e", 1), Err(ExprError::Syntax { position: 2, .. })));
        assert!(matches!(parse_expression("x # 2", 1), Err(ExprError::Syntax { position: 2, .. })));
        assert!(matches!(parse_expression("y = ", 1), Err(ExprError::Syntax { position: 4, .. })));
    }

    #[test]
    fn formatting() {
        let ast = parse_expression("y = (x+1) * -(2 - x) / 3", 1).unwrap();
        assert_eq!(ast.to_string(), "(x + 1.0) * -(2.0 - x) / 3.0");
        let ast = parse_expression("1 - (2 - 3)", 1).unwrap();
        assert_eq!(ast.to_string(), "1.0 - (2.0 - 3.0)");
    }

    pub(crate) fn arb_expr(n_vars: usize) -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..1e6).prop_map(Expr::Const),
            Just(Expr::Pi),
            (0..n_vars).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div)],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| Expr::Binary(op, Box::new(l), Box::new(r))),
                (proptest::sample::select(Func::ALL.to_vec()), proptest::collection::vec(inner, 3))
                    .prop_map(|(f, mut args)| {
                        args.truncate(f.arity());
                        Expr::Call(f, args)
                    }),
            ]
        })
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(ast in arb_expr(3)) {
            let text = format!("y = {ast}");
            let reparsed = parse_expression(&text, 3).unwrap();
            prop_assert_eq!(reparsed, ast);
        }

        #[test]
        fn evaluation_is_pure(ast in arb_expr(2), a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let first = ast.eval(&[a, b]);
            let second = ast.eval(&[a, b]);
            prop_assert_eq!(first.to_bits(), second.to_bits());
        }
    }
}
