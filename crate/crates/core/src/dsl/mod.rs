//! A tiny expression language for the coefficient fields `a(t, x)` and
//! `b(t, x)`: literals, the variables `t` and `x`, the constant `pi`, the four
//! arithmetic operators, unary minus and `sin`, `cos`, `exp`, `abs`, `min`,
//! `max`. The grammar is closed under `∂/∂x` except for the non-smooth
//! functions.

mod diff;
mod expr;
mod field;
mod parser;

pub use expr::{BinOp, Expr, Func1, Func2, Var};
pub use field::{validate_field, CoefficientField, FieldBounds, DEFAULT_GRID};
pub use parser::parse_expression;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier '{name}' at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func}() of an x-dependent argument is not differentiable")]
    NotDifferentiable { func: &'static str },
    #[error("{which} is not 1-periodic in x: f(t={t}, x={x}+1) - f(t, x) = {diff}")]
    NotPeriodic {
        which: &'static str,
        t: f64,
        x: f64,
        diff: f64,
    },
    #[error("diffusivity a(t={t}, x={x}) = {value} is not positive")]
    NonPositiveDiffusivity { t: f64, x: f64, value: f64 },
    #[error("{which}(t={t}, x={x}) is not finite")]
    NotFinite { which: &'static str, t: f64, x: f64 },
    #[error("validation grid must have at least 16 points, got {0}")]
    GridTooSmall(usize),
}
