//! Expression language for dynamics, region predicates and noise densities.
//!
//! The grammar is documented in `docs/expression-grammar.md`. Variables are
//! positional: `x1..xn` (state), `u1..um` (input), `w1..wp` (disturbance) and,
//! in density expressions only, `y1..yn` (integration point) and `m1..mn`
//! (noise mean). The constant `pi` is predefined.

mod interval;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use interval::Interval;
pub use parser::{parse_density, parse_expression, parse_predicate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {found} (offset {offset})")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expected {expected} expressions, got {found}")]
    Count { expected: usize, found: usize },
}

/// Declared variable counts an expression is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dims {
    pub state: usize,
    pub input: usize,
    pub disturb: usize,
    /// Whether `y` and `m` (density variables, one per state dimension) are allowed.
    pub density: bool,
}

impl Dims {
    pub fn new(state: usize, input: usize, disturb: usize) -> Self {
        Self {
            state,
            input,
            disturb,
            density: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    State(usize),
    Input(usize),
    Disturb(usize),
    Point(usize),
    Mean(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (prefix, i) = match *self {
            Var::State(i) => ('x', i),
            Var::Input(i) => ('u', i),
            Var::Disturb(i) => ('w', i),
            Var::Point(i) => ('y', i),
            Var::Mean(i) => ('m', i),
        };
        write!(f, "{prefix}{}", i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Asin,
    Acos,
    Sqrt,
    Exp,
    Log,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "asin" => Func::Asin,
            "acos" => Func::Acos,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Asin => "asin",
            Func::Acos => "acos",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Variable bindings for evaluation. Unused slices may be empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub w: &'a [f64],
    pub y: &'a [f64],
    pub m: &'a [f64],
}

impl<'a> Env<'a> {
    pub fn new(x: &'a [f64], u: &'a [f64], w: &'a [f64]) -> Self {
        Self {
            x,
            u,
            w,
            y: &[],
            m: &[],
        }
    }

    fn get(&self, v: Var) -> f64 {
        match v {
            Var::State(i) => self.x[i],
            Var::Input(i) => self.u[i],
            Var::Disturb(i) => self.w[i],
            Var::Point(i) => self.y[i],
            Var::Mean(i) => self.m[i],
        }
    }
}

fn domain(msg: impl Into<String>) -> ExprError {
    ExprError::Domain(msg.into())
}

impl Expr {
    pub fn eval(&self, env: &Env<'_>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(v) => env.get(*v),
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(domain(format!("division of {a} by zero")));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let r = a.powf(b);
                        if r.is_nan() {
                            return Err(domain(format!("{a} ^ {b} is undefined")));
                        }
                        r
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Atan => a.atan(),
                    Func::Asin | Func::Acos => {
                        if !(-1.0..=1.0).contains(&a) {
                            return Err(domain(format!("{}({a}) outside [-1, 1]", f.name())));
                        }
                        if *f == Func::Asin {
                            a.asin()
                        } else {
                            a.acos()
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(domain(format!("sqrt of negative value {a}")));
                        }
                        a.sqrt()
                    }
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if !(a > 0.0) {
                            return Err(domain(format!("log of non-positive value {a}")));
                        }
                        a.ln()
                    }
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                }
            }
        };
        Ok(v)
    }

    /// Collects every variable referenced by the expression.
    pub fn variables(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(e) => e.variables(out),
            Expr::Bin(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.variables(out)),
        }
    }

    /// State-variable indices referenced by the expression.
    pub fn state_variables(&self) -> BTreeSet<usize> {
        let mut vars = BTreeSet::new();
        self.variables(&mut vars);
        vars.into_iter()
            .filter_map(|v| match v {
                Var::State(i) => Some(i),
                _ => None,
            })
            .collect()
    }
}

/// Fully parenthesized rendering; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Ge,
    Lt,
    Gt,
    Eq,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Eq => a == b,
        }
    }
}

/// Boolean region predicate over state coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Cmp(Expr, CmpOp, Expr),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn eval(&self, env: &Env<'_>) -> Result<bool, ExprError> {
        Ok(match self {
            Predicate::Cmp(a, op, b) => op.apply(a.eval(env)?, b.eval(env)?),
            Predicate::And(a, b) => a.eval(env)? && b.eval(env)?,
            Predicate::Or(a, b) => a.eval(env)? || b.eval(env)?,
            Predicate::Not(a) => !a.eval(env)?,
        })
    }

    pub fn eval_state(&self, x: &[f64]) -> Result<bool, ExprError> {
        self.eval(&Env::new(x, &[], &[]))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cmp(a, op, b) => write!(f, "{a} {} {b}", op.symbol()),
            Predicate::And(a, b) => write!(f, "({a} & {b})"),
            Predicate::Or(a, b) => write!(f, "({a} | {b})"),
            Predicate::Not(a) => write!(f, "!({a})"),
        }
    }
}

/// Next-state map `f(x, u, w)`, one expression per state coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSpec {
    exprs: Vec<Expr>,
    dims: Dims,
}

impl DynamicsSpec {
    pub fn new(exprs: Vec<Expr>, dims: Dims) -> Result<Self, ExprError> {
        if exprs.len() != dims.state {
            return Err(ExprError::Count {
                expected: dims.state,
                found: exprs.len(),
            });
        }
        Ok(Self { exprs, dims })
    }

    /// Parses one expression per state coordinate.
    pub fn parse<S: AsRef<str>>(texts: &[S], dims: Dims) -> Result<Self, ExprError> {
        let exprs = texts
            .iter()
            .map(|t| parse_expression(t.as_ref(), dims))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(exprs, dims)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn eval(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut out = vec![0.0; self.exprs.len()];
        self.eval_into(x, u, w, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        out: &mut [f64],
    ) -> Result<(), ExprError> {
        let env = Env::new(x, u, w);
        for (slot, e) in out.iter_mut().zip(&self.exprs) {
            *slot = e.eval(&env)?;
        }
        Ok(())
    }

    /// Encloses the image of the box `x` (for fixed `u`, `w`) coordinate-wise.
    pub fn eval_interval(&self, x: &[Interval], u: &[f64], w: &[f64]) -> Vec<Interval> {
        let u: Vec<Interval> = u.iter().map(|&v| Interval::point(v)).collect();
        let w: Vec<Interval> = w.iter().map(|&v| Interval::point(v)).collect();
        self.exprs
            .iter()
            .map(|e| e.eval_interval(x, &u, &w))
            .collect()
    }

    /// If every output coordinate depends on at most one state variable and no
    /// state variable feeds two outputs, returns the source variable of each
    /// output (`None` for outputs constant in the state).
    pub fn separable_sources(&self) -> Option<Vec<Option<usize>>> {
        let mut used = BTreeSet::new();
        let mut out = Vec::with_capacity(self.exprs.len());
        for e in &self.exprs {
            let vars = e.state_variables();
            match vars.len() {
                0 => out.push(None),
                1 => {
                    let v = *vars.iter().next().unwrap();
                    if !used.insert(v) {
                        return None;
                    }
                    out.push(Some(v));
                }
                _ => return None,
            }
        }
        Some(out)
    }
}
