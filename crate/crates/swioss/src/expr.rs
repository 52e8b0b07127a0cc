//! Arithmetic expression DSL used to define subsystem dynamics, output maps,
//! Lyapunov functions and comparison (class-K) gains in config files.
//!
//! Supported: decimal constants, variables `x1..xd` (state), `v1..vm`
//! (input), `r` (scalar argument of gain functions), `t` (time, for input
//! expressions), binary `+ - * /`, unary `-`, and the functions
//! `sin cos abs sat min max exp sqrt` where `sat(u) = min(1, max(-1, u))`.

use std::fmt;
use thiserror::Error;

/// Parse failure, with a byte offset into the source where it occurred.
#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("empty expression")]
    Empty,
    #[error("expression contains non-ASCII characters")]
    NonAscii,
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("`{func}` expects {expected} argument(s), got {got} (at byte {pos})")]
    ArityMismatch {
        func: &'static str,
        expected: usize,
        got: usize,
        pos: usize,
    },
    #[error("variable `{name}` is not allowed here ({reason})")]
    VariableNotAllowed { name: String, reason: String },
}

/// A variable reference. State and input indices are 1-based, as written
/// (`x1` is the first state coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    State(usize),
    Input(usize),
    R,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Abs,
    Sat,
    Min,
    Max,
    Exp,
    Sqrt,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Sat => "sat",
            Func::Min => "min",
            Func::Max => "max",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "abs" => Some(Func::Abs),
            "sat" => Some(Func::Sat),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

/// Parsed expression tree. Evaluation is a plain tree walk; the trees in this
/// crate are small (a handful of nodes per vector-field component).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Values bound to variables during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalCtx<'a> {
    pub x: &'a [f64],
    pub v: &'a [f64],
    pub r: f64,
    pub t: f64,
}

impl<'a> EvalCtx<'a> {
    pub fn states_inputs(x: &'a [f64], v: &'a [f64]) -> Self {
        EvalCtx { x, v, r: 0.0, t: 0.0 }
    }

    pub fn scalar_r(r: f64) -> Self {
        EvalCtx { x: &[], v: &[], r, t: 0.0 }
    }

    pub fn time(t: f64) -> Self {
        EvalCtx { x: &[], v: &[], r: 0.0, t }
    }
}

impl Expr {
    /// Parses `src`. Variable names are resolved structurally (`x<k>`,
    /// `v<k>`, `r`, `t`); dimension bounds are checked later by
    /// [`Expr::check_vars`] once the owning context knows them.
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        if src.trim().is_empty() {
            return Err(ExprError::Empty);
        }
        if !src.is_ascii() {
            return Err(ExprError::NonAscii);
        }
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.parse_expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ExprError::Syntax {
                pos: p.pos,
                msg: format!("unexpected `{}`", p.src[p.pos] as char),
            });
        }
        Ok(e)
    }

    /// Evaluates the tree. Out-of-range state/input indices yield NaN; call
    /// [`Expr::check_vars`] at load time to rule them out.
    pub fn eval(&self, ctx: &EvalCtx) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::State(i)) => ctx.x.get(i - 1).copied().unwrap_or(f64::NAN),
            Expr::Var(Var::Input(i)) => ctx.v.get(i - 1).copied().unwrap_or(f64::NAN),
            Expr::Var(Var::R) => ctx.r,
            Expr::Var(Var::T) => ctx.t,
            Expr::Neg(e) => -e.eval(ctx),
            Expr::Add(a, b) => a.eval(ctx) + b.eval(ctx),
            Expr::Sub(a, b) => a.eval(ctx) - b.eval(ctx),
            Expr::Mul(a, b) => a.eval(ctx) * b.eval(ctx),
            Expr::Div(a, b) => a.eval(ctx) / b.eval(ctx),
            Expr::Call(f, args) => {
                let a = args[0].eval(ctx);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                    Func::Sat => a.max(-1.0).min(1.0),
                    Func::Exp => a.exp(),
                    Func::Sqrt => a.sqrt(),
                    Func::Min => a.min(args[1].eval(ctx)),
                    Func::Max => a.max(args[1].eval(ctx)),
                }
            }
        }
    }

    /// Checks every variable reference against the allowed alphabet:
    /// states up to `d`, inputs up to `m`, and optionally `r` / `t`.
    pub fn check_vars(&self, d: usize, m: usize, allow_r: bool, allow_t: bool) -> Result<(), ExprError> {
        let reject = |name: String, reason: String| Err(ExprError::VariableNotAllowed { name, reason });
        match self {
            Expr::Const(_) => Ok(()),
            Expr::Var(Var::State(i)) => {
                if *i >= 1 && *i <= d {
                    Ok(())
                } else {
                    reject(format!("x{i}"), format!("state dimension is {d}"))
                }
            }
            Expr::Var(Var::Input(i)) => {
                if *i >= 1 && *i <= m {
                    Ok(())
                } else {
                    reject(format!("v{i}"), format!("input dimension is {m}"))
                }
            }
            Expr::Var(Var::R) => {
                if allow_r {
                    Ok(())
                } else {
                    reject("r".into(), "only gain functions take `r`".into())
                }
            }
            Expr::Var(Var::T) => {
                if allow_t {
                    Ok(())
                } else {
                    reject("t".into(), "only input expressions take `t`".into())
                }
            }
            Expr::Neg(e) => e.check_vars(d, m, allow_r, allow_t),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.check_vars(d, m, allow_r, allow_t)?;
                b.check_vars(d, m, allow_r, allow_t)
            }
            Expr::Call(_, args) => {
                for a in args {
                    a.check_vars(d, m, allow_r, allow_t)?;
                }
                Ok(())
            }
        }
    }

    /// Largest state index referenced, or 0.
    pub fn max_state_index(&self) -> usize {
        self.fold_indices(&|v| match v {
            Var::State(i) => *i,
            _ => 0,
        })
    }

    /// Largest input index referenced, or 0.
    pub fn max_input_index(&self) -> usize {
        self.fold_indices(&|v| match v {
            Var::Input(i) => *i,
            _ => 0,
        })
    }

    fn fold_indices(&self, pick: &dyn Fn(&Var) -> usize) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(v) => pick(v),
            Expr::Neg(e) => e.fold_indices(pick),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.fold_indices(pick).max(b.fold_indices(pick))
            }
            Expr::Call(_, args) => args.iter().map(|a| a.fold_indices(pick)).max().unwrap_or(0),
        }
    }
}

// Printing is fully parenthesized so that re-parsing reproduces the same
// tree shape (and therefore identical evaluations).
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => {
                if c.is_sign_negative() || !c.is_finite() {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(Var::State(i)) => write!(f, "x{i}"),
            Expr::Var(Var::Input(i)) => write!(f, "v{i}"),
            Expr::Var(Var::R) => write!(f, "r"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn parse_expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.parse_term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.parse_unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.parse_atom()
    }

    fn parse_atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(ExprError::Syntax {
                pos: self.pos,
                msg: "unexpected end of input".into(),
            }),
            Some(b'(') => {
                self.pos += 1;
                let e = self.parse_expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Syntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    });
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.parse_ident(),
            Some(c) => Err(ExprError::Syntax {
                pos: self.pos,
                msg: format!("unexpected `{}`", c as char),
            }),
        }
    }

    fn parse_number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).map_or(false, |c| c.is_ascii_digit()) {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `e` belonged to something else (there are no such tokens,
                // so this is a syntax error downstream); back off.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("bad number literal `{text}`"),
            })
    }

    fn parse_ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && ((self.src[self.pos] as char).is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();

        if self.peek() == Some(b'(') {
            let func = Func::from_name(&name).ok_or_else(|| ExprError::UnknownIdentifier {
                name: name.clone(),
                pos: start,
            })?;
            self.pos += 1; // consume `(`
            let mut args = Vec::new();
            if self.peek() != Some(b')') {
                loop {
                    args.push(self.parse_expr()?);
                    match self.peek() {
                        Some(b',') => {
                            self.pos += 1;
                        }
                        Some(b')') => break,
                        _ => {
                            return Err(ExprError::Syntax {
                                pos: self.pos,
                                msg: "expected `,` or `)`".into(),
                            })
                        }
                    }
                }
            }
            self.pos += 1; // consume `)`
            if args.len() != func.arity() {
                return Err(ExprError::ArityMismatch {
                    func: func.name(),
                    expected: func.arity(),
                    got: args.len(),
                    pos: start,
                });
            }
            return Ok(Expr::Call(func, args));
        }

        // Variable.
        match name.as_str() {
            "r" => return Ok(Expr::Var(Var::R)),
            "t" => return Ok(Expr::Var(Var::T)),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if i >= 1 {
                    return Ok(Expr::Var(Var::State(i)));
                }
            }
        }
        if let Some(rest) = name.strip_prefix('v') {
            if let Ok(i) = rest.parse::<usize>() {
                if i >= 1 {
                    return Ok(Expr::Var(Var::Input(i)));
                }
            }
        }
        Err(ExprError::UnknownIdentifier { name, pos: start })
    }
}

/// Convenience wrapper matching the operation name used elsewhere.
pub fn parse_expression(src: &str) -> Result<Expr, ExprError> {
    Expr::parse(src)
}
