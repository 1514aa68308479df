use super::expr::{BinOp, Expr, Func1, Var as V};
use super::DslError;

impl Expr {
    /// Symbolic `∂/∂x`, constant-folded. `abs`, `min` and `max` are only
    /// accepted when their arguments do not depend on `x`.
    pub fn differentiate_x(&self) -> Result<Expr, DslError> {
        Ok(self.d_dx()?.fold_constants())
    }

    fn d_dx(&self) -> Result<Expr, DslError> {
        use Expr::*;
        if !self.depends_on(V::X) {
            return Ok(Num(0.0));
        }
        Ok(match self {
            Num(_) | Pi | Var(_) => Num(1.0),
            Neg(e) => Neg(Box::new(e.d_dx()?)),
            Bin(op, u, v) => {
                let (du, dv) = (u.d_dx()?, v.d_dx()?);
                let (u, v) = ((**u).clone(), (**v).clone());
                match op {
                    BinOp::Add | BinOp::Sub => Expr::bin(*op, du, dv),
                    BinOp::Mul => Expr::bin(
                        BinOp::Add,
                        Expr::bin(BinOp::Mul, du, v),
                        Expr::bin(BinOp::Mul, u, dv),
                    ),
                    BinOp::Div => Expr::bin(
                        BinOp::Div,
                        Expr::bin(
                            BinOp::Sub,
                            Expr::bin(BinOp::Mul, du, v.clone()),
                            Expr::bin(BinOp::Mul, u, dv),
                        ),
                        Expr::bin(BinOp::Mul, v.clone(), v),
                    ),
                }
            }
            Call1(f, u) => {
                let du = u.d_dx()?;
                let outer = match f {
                    Func1::Sin => Call1(Func1::Cos, u.clone()),
                    Func1::Cos => Neg(Box::new(Call1(Func1::Sin, u.clone()))),
                    Func1::Exp => Call1(Func1::Exp, u.clone()),
                    Func1::Abs => return Err(DslError::NotDifferentiable { func: f.name() }),
                };
                Expr::bin(BinOp::Mul, outer, du)
            }
            Call2(f, _, _) => return Err(DslError::NotDifferentiable { func: f.name() }),
        })
    }
}
