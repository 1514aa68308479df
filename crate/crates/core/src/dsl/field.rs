use super::expr::Expr;
use super::parser::parse_expression;
use super::DslError;

pub const DEFAULT_GRID: usize = 64;

const PERIOD_TOL: f64 = 1e-9;

/// Grid extrema `a_* ≤ a ≤ a^*` and `|b| ≤ b^*`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldBounds {
    pub a_star: f64,
    pub a_upper: f64,
    pub b_upper: f64,
}

/// Drift `b(t, x)`, diffusivity `a(t, x)` and the symbolic `a′ = ∂a/∂x`,
/// validated on a grid over a time window.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    pub a: Expr,
    pub b: Expr,
    pub a_prime: Expr,
    pub lipschitz_estimate: f64,
    pub bounds: FieldBounds,
    pub window: (f64, f64),
}

impl CoefficientField {
    /// Parses and validates on `window` with the default grid.
    pub fn parse(a: &str, b: &str, window: (f64, f64)) -> Result<Self, DslError> {
        validate_field(
            parse_expression(a)?,
            parse_expression(b)?,
            window,
            DEFAULT_GRID,
        )
    }

    // Off-grid evaluation can still divide by zero; that surfaces as NaN.

    pub fn a(&self, t: f64, x: f64) -> f64 {
        self.a.evaluate(t, x).unwrap_or(f64::NAN)
    }

    pub fn b(&self, t: f64, x: f64) -> f64 {
        self.b.evaluate(t, x).unwrap_or(f64::NAN)
    }

    pub fn a_prime(&self, t: f64, x: f64) -> f64 {
        self.a_prime.evaluate(t, x).unwrap_or(f64::NAN)
    }

    /// Coefficients of the time-reversed flow: `a^ν(t, x) = a(−t, x)` and
    /// `b^ν(t, x) = −b(−t, x) + a′(−t, x)/2`, on the reflected window.
    pub fn reversed(&self) -> Result<CoefficientField, DslError> {
        use super::expr::BinOp;
        let a = self.a.reflect_time();
        let b = Expr::bin(
            BinOp::Add,
            Expr::Neg(Box::new(self.b.reflect_time())),
            Expr::bin(BinOp::Div, self.a_prime.reflect_time(), Expr::num(2.0)),
        )
        .fold_constants();
        validate_field(a, b, (-self.window.1, -self.window.0), DEFAULT_GRID)
    }

    /// The same diffusivity with drift replaced by `a′`.
    pub fn with_drift_a_prime(&self) -> Result<CoefficientField, DslError> {
        validate_field(
            self.a.clone(),
            self.a_prime.clone(),
            self.window,
            DEFAULT_GRID,
        )
    }
}

fn check(which: &'static str, e: &Expr, t: f64, x: f64) -> Result<f64, DslError> {
    let v = e.evaluate(t, x)?;
    if !v.is_finite() {
        return Err(DslError::NotFinite { which, t, x });
    }
    Ok(v)
}

/// Checks periodicity in `x`, positivity of `a` and finiteness on a
/// `grid_n × grid_n` grid over `window × [0, 1)`, and records the grid
/// extrema and the largest difference quotient in `x`.
pub fn validate_field(
    a: Expr,
    b: Expr,
    window: (f64, f64),
    grid_n: usize,
) -> Result<CoefficientField, DslError> {
    if grid_n < 16 {
        return Err(DslError::GridTooSmall(grid_n));
    }
    let a_prime = a.differentiate_x()?;
    let (t0, t1) = window;
    let ts: Vec<f64> = if t1 > t0 {
        (0..grid_n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (grid_n - 1) as f64)
            .collect()
    } else {
        vec![t0]
    };
    let dx = 1.0 / grid_n as f64;

    let mut bounds = FieldBounds {
        a_star: f64::INFINITY,
        a_upper: f64::NEG_INFINITY,
        b_upper: 0.0,
    };
    let mut lipschitz: f64 = 0.0;
    for &t in &ts {
        let mut first = [0.0; 3];
        let mut prev = [0.0; 3];
        for i in 0..grid_n {
            let x = i as f64 * dx;
            let mut vals = [0.0; 3];
            for (k, (which, e)) in [("a", &a), ("b", &b), ("a'", &a_prime)]
                .into_iter()
                .enumerate()
            {
                let v = check(which, e, t, x)?;
                let shifted = check(which, e, t, x + 1.0)?;
                let diff = shifted - v;
                if diff.abs() > PERIOD_TOL {
                    return Err(DslError::NotPeriodic { which, t, x, diff });
                }
                vals[k] = v;
            }
            if vals[0] <= 0.0 {
                return Err(DslError::NonPositiveDiffusivity {
                    t,
                    x,
                    value: vals[0],
                });
            }
            bounds.a_star = bounds.a_star.min(vals[0]);
            bounds.a_upper = bounds.a_upper.max(vals[0]);
            bounds.b_upper = bounds.b_upper.max(vals[1].abs());
            if i == 0 {
                first = vals;
            } else {
                for k in 0..3 {
                    lipschitz = lipschitz.max((vals[k] - prev[k]).abs() / dx);
                }
            }
            prev = vals;
        }
        for k in 0..3 {
            lipschitz = lipschitz.max((first[k] - prev[k]).abs() / dx);
        }
    }
    Ok(CoefficientField {
        a,
        b,
        a_prime,
        lipschitz_estimate: lipschitz,
        bounds,
        window,
    })
}
