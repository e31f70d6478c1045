//! A tiny integer expression language with a deterministic, total evaluator.
//!
//! Programs are `;`-separated statements: zero or more assignments followed by
//! exactly one bare expression whose value is the program's result.
//!
//! ```text
//! program    = statement { ";" statement } ;
//! statement  = assignment | expr ;          (only the last may be an expr)
//! assignment = ident "=" expr ;
//! expr       = term { ( "+" | "-" ) term } ;
//! term       = unary { ( "*" | "/" | "%" ) unary } ;
//! unary      = "-" unary | atom ;
//! atom       = integer | ident | "(" expr ")" ;
//! ident      = "a" | "b" | ... | "z" ;      (one lowercase letter)
//! integer    = digit { digit } ;
//! ```
//!
//! Whitespace (space, tab, newline, carriage return) may appear between tokens.
//! Division truncates toward zero and `%` takes the sign of the dividend.
//! Every fault is reported through [`Observation::Failure`]; nothing panics.

use std::fmt;

use crate::trajectory::{ErrorKind, Observation};

pub const MAX_STATEMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub max_steps: u64,
    pub max_abs_value: i64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            max_steps: 10_000,
            max_abs_value: 1 << 62,
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> crate::Result<()> {
        if self.max_steps == 0 || self.max_abs_value <= 0 {
            return Err(crate::Error::Config(format!(
                "exec limits must be strictly positive (max_steps={}, max_abs_value={})",
                self.max_steps, self.max_abs_value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Rem => '%',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Var(char),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Assign(char, Expr),
    Final(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub statements: Vec<Statement>,
    pub source: String,
}

impl Program {
    /// The assignments, in order, and the final expression.
    pub fn parts(&self) -> (Vec<(char, &Expr)>, &Expr) {
        let mut assigns = Vec::new();
        let mut last = None;
        for stmt in &self.statements {
            match stmt {
                Statement::Assign(name, e) => assigns.push((*name, e)),
                Statement::Final(e) => last = Some(e),
            }
        }
        (assigns, last.expect("parser guarantees a final expression"))
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized binary nodes; parsing the output yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(c) => write!(f, "{c}"),
            Expr::Neg(e) => write!(f, "-{e}"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, stmt) in self.statements.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            match stmt {
                Statement::Assign(name, e) => write!(f, "{name} = {e}")?,
                Statement::Final(e) => write!(f, "{e}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {position}: expected {expected}, found {found}")]
pub struct ParseError {
    /// Character offset into the source.
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(i64),
    Ident(char),
    Op(char),
    LParen,
    RParen,
    Assign,
    Semi,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(v) => write!(f, "integer {v}"),
            Tok::Ident(c) => write!(f, "identifier '{c}'"),
            Tok::Op(c) => write!(f, "'{c}'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Assign => f.write_str("'='"),
            Tok::Semi => f.write_str("';'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn tokenize(source: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '0'..='9' => {
                let start = i;
                let mut value: i64 = 0;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    let digit = chars[i] as i64 - '0' as i64;
                    value = value
                        .checked_mul(10)
                        .and_then(|v| v.checked_add(digit))
                        .ok_or_else(|| ParseError {
                            position: start,
                            expected: "integer literal within 64-bit range".into(),
                            found: "oversized literal".into(),
                        })?;
                    i += 1;
                }
                out.push((start, Tok::Int(value)));
            }
            'a'..='z' => {
                if i + 1 < chars.len() && chars[i + 1].is_alphanumeric() {
                    return Err(ParseError {
                        position: i,
                        expected: "single-letter variable name".into(),
                        found: "multi-character identifier".into(),
                    });
                }
                out.push((i, Tok::Ident(c)));
                i += 1;
            }
            '+' | '-' | '*' | '/' | '%' => {
                out.push((i, Tok::Op(c)));
                i += 1;
            }
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            '=' => {
                out.push((i, Tok::Assign));
                i += 1;
            }
            ';' => {
                out.push((i, Tok::Semi));
                i += 1;
            }
            other => {
                return Err(ParseError {
                    position: i,
                    expected: "token".into(),
                    found: format!("character {other:?}"),
                })
            }
        }
    }
    out.push((chars.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
}

// Bounds recursion on adversarial inputs like "((((((...".
const MAX_DEPTH: usize = 256;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let idx = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[idx].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.toks[self.pos].0,
            expected: expected.into(),
            found: self.peek().to_string(),
        })
    }

    fn program(&mut self, source: &str) -> Result<Program, ParseError> {
        let mut statements = Vec::new();
        loop {
            if statements.len() == MAX_STATEMENTS {
                return self.fail("end of input (statement limit reached)");
            }
            if let (Tok::Ident(name), Tok::Assign) = (self.peek().clone(), self.peek_at(1)) {
                self.bump();
                self.bump();
                let e = self.expr()?;
                statements.push(Statement::Assign(name, e));
                match self.peek() {
                    Tok::Semi => {
                        self.bump();
                    }
                    _ => return self.fail("';' followed by a final expression"),
                }
            } else {
                let e = self.expr()?;
                statements.push(Statement::Final(e));
                return match self.peek() {
                    Tok::Eof => Ok(Program {
                        statements,
                        source: source.to_string(),
                    }),
                    _ => self.fail("end of input after final expression"),
                };
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/' | '%')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            let op = match c {
                '*' => BinOp::Mul,
                '/' => BinOp::Div,
                _ => BinOp::Rem,
            };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Tok::Op('-') = self.peek() {
            self.enter()?;
            self.bump();
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Ident(c) => {
                self.bump();
                Ok(Expr::Var(c))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                match self.peek() {
                    Tok::RParen => {
                        self.bump();
                        Ok(e)
                    }
                    _ => self.fail("')'"),
                }
            }
            _ => self.fail("expression"),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.fail("shallower nesting");
        }
        Ok(())
    }
}

pub fn parse(source: &str) -> Result<Program, ParseError> {
    let toks = tokenize(source)?;
    Parser {
        toks,
        pos: 0,
        depth: 0,
    }
    .program(source)
}

struct Fault {
    kind: ErrorKind,
    message: String,
}

struct Machine {
    vars: [Option<i64>; 26],
    steps: u64,
    limits: ExecLimits,
}

impl Machine {
    fn tick(&mut self) -> Result<(), Fault> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(Fault {
                kind: ErrorKind::StepLimit,
                message: format!("step limit of {} exceeded", self.limits.max_steps),
            });
        }
        Ok(())
    }

    fn bound(&self, v: i64, what: impl FnOnce() -> String) -> Result<i64, Fault> {
        if v.unsigned_abs() > self.limits.max_abs_value as u64 {
            return Err(Fault {
                kind: ErrorKind::Overflow,
                message: format!(
                    "overflow in {}: magnitude exceeds {}",
                    what(),
                    self.limits.max_abs_value
                ),
            });
        }
        Ok(v)
    }

    fn eval(&mut self, e: &Expr) -> Result<i64, Fault> {
        self.tick()?;
        match e {
            Expr::Int(v) => self.bound(*v, || format!("literal {v}")),
            Expr::Var(c) => self.vars[(*c as u8 - b'a') as usize].ok_or_else(|| Fault {
                kind: ErrorKind::UndefinedVariable,
                message: format!("undefined variable '{c}'"),
            }),
            Expr::Neg(inner) => {
                let v = self.eval(inner)?;
                // |v| <= max_abs_value < 2^63, so negation cannot wrap.
                self.bound(-v, || format!("-({v})"))
            }
            Expr::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                let describe = || format!("{a} {} {b}", op.symbol());
                let raw = match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    BinOp::Div | BinOp::Rem if b == 0 => {
                        return Err(Fault {
                            kind: ErrorKind::DivisionByZero,
                            message: format!("division by zero in {}", describe()),
                        })
                    }
                    BinOp::Div => a.checked_div(b),
                    BinOp::Rem => a.checked_rem(b),
                };
                match raw {
                    Some(v) => self.bound(v, describe),
                    None => Err(Fault {
                        kind: ErrorKind::Overflow,
                        message: format!(
                            "overflow in {}: magnitude exceeds {}",
                            describe(),
                            self.limits.max_abs_value
                        ),
                    }),
                }
            }
        }
    }
}

pub fn execute(program: &Program, limits: ExecLimits) -> Observation {
    let mut m = Machine {
        vars: [None; 26],
        steps: 0,
        limits,
    };
    let mut result = None;
    for stmt in &program.statements {
        let outcome = match stmt {
            Statement::Assign(name, e) => m.eval(e).map(|v| {
                m.vars[(*name as u8 - b'a') as usize] = Some(v);
            }),
            Statement::Final(e) => m.eval(e).map(|v| result = Some(v)),
        };
        if let Err(f) = outcome {
            return Observation::failure(f.kind, f.message);
        }
    }
    match result {
        Some(v) => Observation::success(v),
        None => Observation::failure(ErrorKind::Parse, "program has no final expression"),
    }
}

/// Parse then execute; parse failures come back as `Failure(Parse)`.
pub fn run(source: &str, limits: ExecLimits) -> Observation {
    match parse(source) {
        Ok(p) => execute(&p, limits),
        Err(e) => Observation::failure(ErrorKind::Parse, e.to_string()),
    }
}
