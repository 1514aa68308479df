use std::fmt;

use super::DslError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func1 {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func2 {
    Min,
    Max,
}

/// Expression tree. Immutable once built; evaluation is pure.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Pi,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call1(Func1, Box<Expr>),
    Call2(Func2, Box<Expr>, Box<Expr>),
}

impl Func1 {
    pub fn name(self) -> &'static str {
        match self {
            Func1::Sin => "sin",
            Func1::Cos => "cos",
            Func1::Exp => "exp",
            Func1::Abs => "abs",
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func1::Sin => v.sin(),
            Func1::Cos => v.cos(),
            Func1::Exp => v.exp(),
            Func1::Abs => v.abs(),
        }
    }
}

impl Func2 {
    pub fn name(self) -> &'static str {
        match self {
            Func2::Min => "min",
            Func2::Max => "max",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Func2::Min => a.min(b),
            Func2::Max => a.max(b),
        }
    }
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

    fn apply(self, a: f64, b: f64) -> Result<f64, DslError> {
        Ok(match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(DslError::DivisionByZero);
                }
                a / b
            }
        })
    }
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn x() -> Self {
        Expr::Var(Var::X)
    }

    pub fn t() -> Self {
        Expr::Var(Var::T)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn evaluate(&self, t: f64, x: f64) -> Result<f64, DslError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X) => x,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(e) => -e.evaluate(t, x)?,
            Expr::Bin(op, a, b) => op.apply(a.evaluate(t, x)?, b.evaluate(t, x)?)?,
            Expr::Call1(f, a) => f.apply(a.evaluate(t, x)?),
            Expr::Call2(f, a, b) => f.apply(a.evaluate(t, x)?, b.evaluate(t, x)?),
        })
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call1(_, e) => e.depends_on(var),
            Expr::Bin(_, a, b) | Expr::Call2(_, a, b) => a.depends_on(var) || b.depends_on(var),
        }
    }

    /// Replaces every `t` by `-t`.
    pub fn reflect_time(&self) -> Expr {
        match self {
            Expr::Var(Var::T) => Expr::Neg(Box::new(Expr::t())),
            Expr::Num(_) | Expr::Pi | Expr::Var(Var::X) => self.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.reflect_time())),
            Expr::Call1(f, e) => Expr::Call1(*f, Box::new(e.reflect_time())),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.reflect_time(), b.reflect_time()),
            Expr::Call2(f, a, b) => {
                Expr::Call2(*f, Box::new(a.reflect_time()), Box::new(b.reflect_time()))
            }
        }
    }

    /// Constant folding plus the neutral-element rules for `0` and `1`.
    pub fn fold_constants(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | Pi | Var(_) => self.clone(),
            Neg(e) => match e.fold_constants() {
                Num(v) => Num(-v),
                Neg(inner) => *inner,
                other => Neg(Box::new(other)),
            },
            Call1(f, e) => match e.fold_constants() {
                Num(v) => Num(f.apply(v)),
                other => Call1(*f, Box::new(other)),
            },
            Call2(f, a, b) => match (a.fold_constants(), b.fold_constants()) {
                (Num(u), Num(v)) => Num(f.apply(u, v)),
                (a, b) => Call2(*f, Box::new(a), Box::new(b)),
            },
            Bin(op, a, b) => {
                let (a, b) = (a.fold_constants(), b.fold_constants());
                if let (Num(u), Num(v)) = (&a, &b) {
                    if let Ok(r) = op.apply(*u, *v) {
                        return Num(r);
                    }
                }
                let is = |e: &Expr, c: f64| matches!(e, Num(v) if *v == c);
                match op {
                    BinOp::Add if is(&a, 0.0) => b,
                    BinOp::Add | BinOp::Sub if is(&b, 0.0) => a,
                    BinOp::Sub if is(&a, 0.0) => Neg(Box::new(b)),
                    BinOp::Mul if is(&a, 0.0) || is(&b, 0.0) => Num(0.0),
                    BinOp::Mul if is(&a, 1.0) => b,
                    BinOp::Mul | BinOp::Div if is(&b, 1.0) => a,
                    BinOp::Div if is(&a, 0.0) => Num(0.0),
                    _ => Expr::bin(*op, a, b),
                }
            }
        }
    }
}

/// Canonical printed form with explicit parentheses around every compound
/// subexpression; reparsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(Var::T) => f.write_str("t"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call1(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Call2(func, a, b) => write!(f, "{}({a}, {b})", func.name()),
        }
    }
}
