//! Poisson disturbance flows built from an explicit family of piecewise
//! linear disturbances, and the moment and localization statistics of that
//! family.
//!
//! For a disturbance at time `t` with centre `θ`, put `w = (3a(t,θ)h/2)^{1/3}`,
//! `H = h^{1/3}` and `r = (h^{2/3}/2)(b − a′)` evaluated at `(t, θ − 1/2)`.
//! With `u = x − θ`, the map collapses `u ∈ (−w, w)` onto `θ`, shifts the band
//! `u ∈ (1/2 − H, 1/2 + H)` by `r`, joins the band back to the identity with
//! a flat of width `|r|` on one side and a jump on the other, and is the
//! identity elsewhere.

use std::io::{self, Write};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle_map::{Breakpoint, CircleMap, Side};
use crate::dsl::{CoefficientField, Var};
use crate::flow::{DiscreteFlow, FlowError};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisturbanceError {
    #[error("parameters out of regime at t={t}, theta={theta}: w={w}, r={r} for h={h}")]
    OutOfRegime {
        t: f64,
        theta: f64,
        w: f64,
        r: f64,
        h: f64,
    },
    #[error("h must be positive and finite, got {0}")]
    InvalidH(f64),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Which drift the band shift carries. `CollapseOnly` sets `r ≡ 0`, which is
/// the full family for a field with `b = a′`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Full,
    CollapseOnly,
}

impl Family {
    /// The drift the family's one-point motions approximate.
    pub fn effective_b(self, field: &CoefficientField, t: f64, x: f64) -> f64 {
        match self {
            Family::Full => field.b(t, x),
            Family::CollapseOnly => field.a_prime(t, x),
        }
    }

    /// Drift of the reversed family at reversed time `t`: `−b(−t) + a′(−t)/2`.
    pub fn reversed_b(self, field: &CoefficientField, t: f64, x: f64) -> f64 {
        -self.effective_b(field, -t, x) + field.a_prime(-t, x) / 2.0
    }
}

/// One member of the explicit family, with its parameters resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplicitDisturbance {
    pub theta: f64,
    pub w: f64,
    pub band: f64,
    pub r: f64,
}

fn raw_params(field: &CoefficientField, family: Family, h: f64, t: f64, theta: f64) -> (f64, f64) {
    let w = (1.5 * field.a(t, theta) * h).cbrt();
    let r = match family {
        Family::Full => {
            let c = (theta - 0.5).rem_euclid(1.0);
            0.5 * h.powf(2.0 / 3.0) * (field.b(t, c) - field.a_prime(t, c))
        }
        Family::CollapseOnly => 0.0,
    };
    (w, r)
}

impl ExplicitDisturbance {
    pub fn new(
        field: &CoefficientField,
        family: Family,
        h: f64,
        t: f64,
        theta: f64,
    ) -> Result<Self, DisturbanceError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(DisturbanceError::InvalidH(h));
        }
        let (w, r) = raw_params(field, family, h, t, theta);
        let d = ExplicitDisturbance {
            theta,
            w,
            band: h.cbrt(),
            r,
        };
        if !d.in_regime() {
            return Err(DisturbanceError::OutOfRegime { t, theta, w, r, h });
        }
        Ok(d)
    }

    /// The collapse window, the band and its reconnector are disjoint and
    /// `|r| < H`.
    pub fn in_regime(&self) -> bool {
        self.w > 0.0
            && self.w.is_finite()
            && self.r.is_finite()
            && self.r.abs() < self.band
            && self.w + self.band + self.r.abs() < 0.5
    }

    fn offsets(&self) -> (f64, f64) {
        (0.5 - self.band, 0.5 + self.band)
    }

    /// `F⁺(x) − x`.
    pub fn displacement(&self, x: f64) -> f64 {
        let u = (x - self.theta).rem_euclid(1.0);
        let (lo, hi) = self.offsets();
        let r = self.r;
        if u < self.w {
            -u
        } else if u >= 1.0 - self.w {
            1.0 - u
        } else if r >= 0.0 {
            if (lo..hi).contains(&u) {
                r
            } else if (hi..hi + r).contains(&u) {
                hi + r - u
            } else {
                0.0
            }
        } else if (lo + r..lo).contains(&u) {
            lo + r - u
        } else if (lo..hi).contains(&u) {
            r
        } else {
            0.0
        }
    }

    /// `(F⁻¹)⁺(x) − x`.
    pub fn inverse_displacement(&self, x: f64) -> f64 {
        let u = (x - self.theta).rem_euclid(1.0);
        let (lo, hi) = self.offsets();
        let r = self.r;
        if u < self.w {
            self.w - u
        } else if u >= 1.0 - self.w {
            (1.0 - self.w) - u
        } else if (lo + r..hi + r).contains(&u) {
            -r
        } else if r > 0.0 && (lo..lo + r).contains(&u) {
            lo - u
        } else if r < 0.0 && (hi + r..hi).contains(&u) {
            hi - u
        } else {
            0.0
        }
    }

    /// The disturbance as an exact circle map.
    pub fn to_circle_map(&self) -> CircleMap {
        let (th, w, r) = (self.theta, self.w, self.r);
        let (lo, hi) = (th + self.offsets().0, th + self.offsets().1);
        let mut bp = vec![
            Breakpoint::new(th - w, th - w, th),
            Breakpoint::new(th + w, th, th + w),
        ];
        if r > 0.0 {
            bp.extend([
                Breakpoint::new(lo, lo, lo + r),
                Breakpoint::continuous(hi, hi + r),
                Breakpoint::continuous(hi + r, hi + r),
            ]);
        } else if r < 0.0 {
            bp.extend([
                Breakpoint::continuous(lo + r, lo + r),
                Breakpoint::continuous(lo, lo + r),
                Breakpoint::new(hi, hi + r, hi),
            ]);
        }
        CircleMap::from_breakpoints(bp).expect("in-regime disturbance is a valid map")
    }

    /// `F⁻¹` built directly: the collapse becomes a jump at `θ` from `θ − w`
    /// to `θ + w` with flats on either side, and the band is shifted back by
    /// `r` with the flat and the jump trading places.
    pub fn inverse_map(&self) -> CircleMap {
        let (th, w, r) = (self.theta, self.w, self.r);
        let (lo, hi) = (th + self.offsets().0, th + self.offsets().1);
        let mut bp = vec![
            Breakpoint::continuous(th - w, th - w),
            Breakpoint::new(th, th - w, th + w),
            Breakpoint::continuous(th + w, th + w),
        ];
        if r > 0.0 {
            bp.extend([
                Breakpoint::continuous(lo, lo),
                Breakpoint::continuous(lo + r, lo),
                Breakpoint::new(hi + r, hi, hi + r),
            ]);
        } else if r < 0.0 {
            bp.extend([
                Breakpoint::new(lo + r, lo + r, lo),
                Breakpoint::continuous(hi + r, hi),
                Breakpoint::continuous(hi, hi),
            ]);
        }
        CircleMap::from_breakpoints(bp).expect("in-regime disturbance is a valid map")
    }
}

pub fn sample_explicit_map(
    field: &CoefficientField,
    family: Family,
    h: f64,
    t: f64,
    theta: f64,
) -> Result<CircleMap, DisturbanceError> {
    Ok(ExplicitDisturbance::new(field, family, h, t, theta)?.to_circle_map())
}

const REGIME_T: usize = 8;
const REGIME_THETA: usize = 128;

fn time_grid(window: (f64, f64), n: usize) -> Vec<f64> {
    if window.1 > window.0 && n > 1 {
        (0..n)
            .map(|i| window.0 + (window.1 - window.0) * i as f64 / (n - 1) as f64)
            .collect()
    } else {
        vec![window.0]
    }
}

fn depends_on_time(field: &CoefficientField) -> bool {
    field.a.depends_on(Var::T) || field.b.depends_on(Var::T)
}

/// Checks the regime on a grid of `(t, θ)` over `window`.
pub fn check_regime(
    field: &CoefficientField,
    family: Family,
    h: f64,
    window: (f64, f64),
) -> Result<(), DisturbanceError> {
    let n_t = if depends_on_time(field) { REGIME_T } else { 1 };
    for t in time_grid(window, n_t) {
        for i in 0..REGIME_THETA {
            ExplicitDisturbance::new(field, family, h, t, i as f64 / REGIME_THETA as f64)?;
        }
    }
    Ok(())
}

/// Event times of a Poisson process of intensity `1/h` on `(t0, t1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonClock {
    pub h: f64,
    pub window: (f64, f64),
    pub times: Vec<f64>,
}

pub fn build_clock(
    h: f64,
    window: (f64, f64),
    seed: u64,
) -> Result<PoissonClock, DisturbanceError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DisturbanceError::InvalidH(h));
    }
    let gap = Exp::new(1.0 / h).expect("positive rate");
    let mut rng = rng::stream(seed, rng::CLOCK, 0);
    let mut times = Vec::with_capacity(((window.1 - window.0) / h * 1.2) as usize + 8);
    let mut t = window.0;
    loop {
        t += gap.sample(&mut rng);
        if t > window.1 {
            break;
        }
        times.push(t);
    }
    Ok(PoissonClock { h, window, times })
}

/// Disturbance centres, one per clock event, i.i.d. uniform on `[0, 1)`.
pub fn draw_thetas(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::THETA, 0);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// One explicit disturbance at each event of the clock.
pub fn build_disturbance_flow(
    field: &CoefficientField,
    family: Family,
    h: f64,
    window: (f64, f64),
    seed: u64,
) -> Result<DiscreteFlow, DisturbanceError> {
    check_regime(field, family, h, window)?;
    let clock = build_clock(h, window, seed)?;
    let thetas = draw_thetas(seed, clock.times.len());
    let events = clock
        .times
        .iter()
        .zip(&thetas)
        .map(|(&t, &theta)| Ok((t, sample_explicit_map(field, family, h, t, theta)?)))
        .collect::<Result<Vec<_>, DisturbanceError>>()?;
    Ok(DiscreteFlow::new(window, events)?)
}

/// The disturbance flow of `G_{h,s} = F⁻¹_{h,−s}` on `(−t1, −t0]`, driven by
/// the reflected clock and the same centres as
/// [`build_disturbance_flow`] with the same seed.
pub fn build_reversed_disturbance_flow(
    field: &CoefficientField,
    family: Family,
    h: f64,
    window: (f64, f64),
    seed: u64,
) -> Result<DiscreteFlow, DisturbanceError> {
    check_regime(field, family, h, window)?;
    let clock = build_clock(h, window, seed)?;
    let thetas = draw_thetas(seed, clock.times.len());
    let mut events = Vec::with_capacity(clock.times.len());
    for (k, &t) in clock.times.iter().enumerate().rev() {
        let s = -t;
        let g = ExplicitDisturbance::new(field, family, h, -s, thetas[k])?.inverse_map();
        events.push((s, g));
    }
    Ok(DiscreteFlow::new((-window.1, -window.0), events)?)
}

/// Positions at the end of the window of the right-continuous paths started
/// at `(t0, x)` for each `x` in `starts`, using the same random streams as
/// [`build_disturbance_flow`] but without building maps.
pub fn simulate_disturbance_paths(
    field: &CoefficientField,
    family: Family,
    h: f64,
    window: (f64, f64),
    seed: u64,
    starts: &[f64],
) -> Result<Vec<f64>, DisturbanceError> {
    let clock = build_clock(h, window, seed)?;
    let mut rng = rng::stream(seed, rng::THETA, 0);
    let mut pos = starts.to_vec();
    for &t in &clock.times {
        let d = ExplicitDisturbance::new(field, family, h, t, rng.random::<f64>())?;
        for x in &mut pos {
            *x += d.displacement(*x);
        }
    }
    Ok(pos)
}

/// Quadrature values of `b_h`, `a_h` and of the same statistics for `F⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMoments {
    pub b_h: f64,
    pub a_h: f64,
    pub b_hat: f64,
    pub a_hat: f64,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (flo, fhi) = (f(lo), f(hi));
    if flo >= 0.0 {
        return lo;
    }
    if fhi <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const GL_DEGREE: usize = 24;
const GL_PANELS: usize = 4;

/// `b_h(t,x) = E F̃(x)/h` and `a_h(t,x) = E F̃(x)²/h` for `F̃ = F − id`, and
/// the hatted versions for `F⁻¹`, by Gauss–Legendre quadrature over `θ`
/// split at every point where the integrands are not smooth.
pub fn quadrature_moments(
    field: &CoefficientField,
    family: Family,
    h: f64,
    t: f64,
    x: f64,
) -> Result<PointMoments, DisturbanceError> {
    // integrate over u = x − θ ∈ [0, 1)
    let params =
        |u: f64| -> (f64, f64) { raw_params(field, family, h, t, (x - u).rem_euclid(1.0)) };
    let band = h.cbrt();
    let (lo, hi) = (0.5 - band, 0.5 + band);
    let mut cuts = vec![
        0.0,
        1.0,
        bisect(0.0, 0.5, |u| u - params(u).0),
        bisect(0.5, 1.0, |u| u - (1.0 - params(u).0)),
        lo,
        hi,
    ];
    if family == Family::Full {
        cuts.push(bisect(lo - band, lo + band, |u| u - lo - params(u).1));
        cuts.push(bisect(hi - band, hi + band, |u| u - hi - params(u).1));
    }
    cuts.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let gl = GaussLegendre::new(NonZeroUsize::new(GL_DEGREE).unwrap());
    let mut sums = [0.0; 4];
    let mut err = None;
    for piece in cuts.windows(2) {
        let step = (piece[1] - piece[0]) / GL_PANELS as f64;
        for p in 0..GL_PANELS {
            let (a, b) = (piece[0] + p as f64 * step, piece[0] + (p + 1) as f64 * step);
            for (k, sum) in sums.iter_mut().enumerate() {
                *sum += gl.integrate(a, b, |u| {
                    let theta = (x - u).rem_euclid(1.0);
                    match ExplicitDisturbance::new(field, family, h, t, theta) {
                        Ok(d) => {
                            let v = if k < 2 {
                                d.displacement(x)
                            } else {
                                d.inverse_displacement(x)
                            };
                            if k % 2 == 0 {
                                v
                            } else {
                                v * v
                            }
                        }
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    }
                });
            }
        }
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(PointMoments {
        b_h: sums[0] / h,
        a_h: sums[1] / h,
        b_hat: sums[2] / h,
        a_hat: sums[3] / h,
    })
}

/// Resolution of the deterministic grids behind `B_h`, `A_h`, `M_h`, `λ_h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsGrid {
    /// time points, used only when the field depends on `t`
    pub n_t: usize,
    /// `x` points for the suprema of `|b_h − b|` and `|a_h − a|`
    pub n_x: usize,
    /// `θ` points for `M_h` and the localization table
    pub n_theta: usize,
    /// `x` points of the localization table; also the `λ` resolution
    pub n_lambda: usize,
}

impl Default for BoundsGrid {
    fn default() -> Self {
        BoundsGrid {
            n_t: 4,
            n_x: 32,
            n_theta: 1 << 15,
            n_lambda: 128,
        }
    }
}

/// Uniform-in-`(t, x)` statistics of one family at one `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FamilyBounds {
    /// `B_h = sup |b_h − b|`
    pub b_sup: f64,
    /// `A_h = sup |a_h − a|`
    pub a_sup: f64,
    /// `M_h = sup |F̃|`
    pub m_h: f64,
    pub lambda_h: f64,
}

/// `B_h`, `A_h`, `M_h` and `λ_h` for the family (or, with `reversed`, for
/// `G_{h,t} = F⁻¹_{h,−t}` against the reversed coefficients) over the
/// field's window.
pub fn family_bounds(
    field: &CoefficientField,
    family: Family,
    h: f64,
    grid: &BoundsGrid,
    reversed: bool,
) -> Result<FamilyBounds, DisturbanceError> {
    let n_t = if depends_on_time(field) { grid.n_t } else { 1 };
    let window = if reversed {
        (-field.window.1, -field.window.0)
    } else {
        field.window
    };
    let times = time_grid(window, n_t);

    let mut out = FamilyBounds {
        b_sup: 0.0,
        a_sup: 0.0,
        m_h: 0.0,
        lambda_h: 0.0,
    };
    for &t in &times {
        let t_f = if reversed { -t } else { t };
        let per_x: Vec<Result<(f64, f64), DisturbanceError>> = (0..grid.n_x)
            .into_par_iter()
            .map(|i| {
                let x = i as f64 / grid.n_x as f64;
                let m = quadrature_moments(field, family, h, t_f, x)?;
                Ok(if reversed {
                    (
                        (m.b_hat - family.reversed_b(field, t, x)).abs(),
                        (m.a_hat - field.a(t_f, x)).abs(),
                    )
                } else {
                    (
                        (m.b_h - family.effective_b(field, t, x)).abs(),
                        (m.a_h - field.a(t, x)).abs(),
                    )
                })
            })
            .collect();
        for r in per_x {
            let (db, da) = r?;
            out.b_sup = out.b_sup.max(db);
            out.a_sup = out.a_sup.max(da);
        }
        let (m_h, lambda_h) = localization(field, family, h, t_f, grid, reversed)?;
        out.m_h = out.m_h.max(m_h);
        out.lambda_h = out.lambda_h.max(lambda_h);
    }
    Ok(out)
}

/// `M_h` at one time and the smallest grid `λ` such that points at circular
/// distance at least `λ` have `E|F̃(x)F̃(y)|/h < λ`, capped at `1/2`.
fn localization(
    field: &CoefficientField,
    family: Family,
    h: f64,
    t: f64,
    grid: &BoundsGrid,
    reversed: bool,
) -> Result<(f64, f64), DisturbanceError> {
    let n = grid.n_lambda;
    let chunks = 64.min(grid.n_theta);
    let per_chunk = grid.n_theta.div_ceil(chunks);
    let partial: Vec<Result<(f64, Vec<f64>), DisturbanceError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut table = vec![0.0; n * n];
            let mut m: f64 = 0.0;
            let mut active: Vec<(usize, f64)> = Vec::with_capacity(n);
            for j in c * per_chunk..((c + 1) * per_chunk).min(grid.n_theta) {
                let theta = (j as f64 + 0.5) / grid.n_theta as f64;
                let d = ExplicitDisturbance::new(field, family, h, t, theta)?;
                m = m.max(d.w).max(d.r.abs());
                active.clear();
                for i in 0..n {
                    let x = i as f64 / n as f64;
                    let v = if reversed {
                        d.inverse_displacement(x)
                    } else {
                        d.displacement(x)
                    };
                    if v != 0.0 {
                        active.push((i, v.abs()));
                    }
                }
                for &(i, vi) in &active {
                    let row = &mut table[i * n..(i + 1) * n];
                    for &(k, vk) in &active {
                        row[k] += vi * vk;
                    }
                }
            }
            Ok((m, table))
        })
        .collect();
    let mut m_h: f64 = 0.0;
    let mut table = vec![0.0; n * n];
    for p in partial {
        let (m, part) = p?;
        m_h = m_h.max(m);
        table.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    let scale = 1.0 / (grid.n_theta as f64 * h);
    // worst product moment at each circular grid distance k
    let mut by_distance = vec![0.0f64; n / 2 + 1];
    for i in 0..n {
        for k in 0..n {
            let d = (i as isize - k as isize).unsigned_abs();
            let d = d.min(n - d);
            by_distance[d] = by_distance[d].max(table[i * n + k] * scale);
        }
    }
    for k in (0..n / 2).rev() {
        by_distance[k] = by_distance[k].max(by_distance[k + 1]);
    }
    let lambda = (0..=n / 2)
        .find(|&k| by_distance[k] < k as f64 / n as f64)
        .map_or(0.5, |k| k as f64 / n as f64);
    Ok((m_h, lambda))
}

/// Monte-Carlo `b_h`, `a_h` at one point with the family statistics from
/// [`family_bounds`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub h: f64,
    pub t: f64,
    pub x: f64,
    pub b_h: f64,
    pub a_h: f64,
    #[serde(rename = "M_h")]
    pub m_h: f64,
    pub lambda_h: f64,
    #[serde(rename = "B_h")]
    pub b_sup: f64,
    #[serde(rename = "A_h")]
    pub a_sup: f64,
    /// the larger of the 99% radii of `b_h` and `a_h`
    pub ci_radius: f64,
    pub samples: usize,
}

impl MomentReport {
    pub const CSV_HEADER: &'static str = "h,t,x,b_h,a_h,M_h,lambda_h,B_h,A_h,ci_radius,samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.h,
            self.t,
            self.x,
            self.b_h,
            self.a_h,
            self.m_h,
            self.lambda_h,
            self.b_sup,
            self.a_sup,
            self.ci_radius,
            self.samples
        )
    }

    pub fn write_csv<W: Write>(reports: &[MomentReport], mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in reports {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

pub const MIN_MOMENT_SAMPLES: usize = 10_000;
pub const Z99: f64 = 2.5758293035489004;
const BLOCK: usize = 4096;

fn monte_carlo(
    n_samples: usize,
    seed: u64,
    sample: impl Fn(f64) -> Result<f64, DisturbanceError> + Sync,
) -> Result<[f64; 4], DisturbanceError> {
    if n_samples < MIN_MOMENT_SAMPLES {
        return Err(DisturbanceError::InsufficientSamples {
            needed: MIN_MOMENT_SAMPLES,
            got: n_samples,
        });
    }
    let blocks: Vec<Result<[f64; 4], DisturbanceError>> = (0..n_samples.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, rng::MOMENTS, b as u64);
            let mut s = [0.0; 4];
            for _ in b * BLOCK..((b + 1) * BLOCK).min(n_samples) {
                let v = sample(rng.random::<f64>())?;
                let v2 = v * v;
                s[0] += v;
                s[1] += v * v;
                s[2] += v2;
                s[3] += v2 * v2;
            }
            Ok(s)
        })
        .collect();
    let mut total = [0.0; 4];
    for b in blocks {
        let s = b?;
        (0..4).for_each(|k| total[k] += s[k]);
    }
    Ok(total)
}

fn report_from_sums(
    sums: [f64; 4],
    n: usize,
    h: f64,
    t: f64,
    x: f64,
    bounds: FamilyBounds,
) -> MomentReport {
    let nf = n as f64;
    let (mean1, mean2) = (sums[0] / nf, sums[2] / nf);
    let var1 = (sums[1] / nf - mean1 * mean1).max(0.0) * nf / (nf - 1.0);
    let var2 = (sums[3] / nf - mean2 * mean2).max(0.0) * nf / (nf - 1.0);
    let ci = Z99 * var1.max(var2).sqrt() / (nf.sqrt() * h);
    MomentReport {
        h,
        t,
        x,
        b_h: mean1 / h,
        a_h: mean2 / h,
        m_h: bounds.m_h,
        lambda_h: bounds.lambda_h,
        b_sup: bounds.b_sup,
        a_sup: bounds.a_sup,
        ci_radius: ci.max(f64::MIN_POSITIVE),
        samples: n,
    }
}

/// Monte-Carlo estimate of `b_h(t,x)` and `a_h(t,x)` over `n_samples`
/// uniform centres, evaluated through the exact circle maps.
#[allow(clippy::too_many_arguments)]
pub fn estimate_moments(
    field: &CoefficientField,
    family: Family,
    h: f64,
    t: f64,
    x: f64,
    n_samples: usize,
    seed: u64,
    grid: &BoundsGrid,
) -> Result<MomentReport, DisturbanceError> {
    let sums = monte_carlo(n_samples, seed, |theta| {
        Ok(sample_explicit_map(field, family, h, t, theta)?.evaluate(x, Side::Right) - x)
    })?;
    let bounds = family_bounds(field, family, h, grid, false)?;
    Ok(report_from_sums(sums, n_samples, h, t, x, bounds))
}

/// As [`estimate_moments`] for `G_{h,t} = F⁻¹_{h,−t}`, inverting each sampled
/// map with the circle-map algebra.
#[allow(clippy::too_many_arguments)]
pub fn estimate_reversed_moments(
    field: &CoefficientField,
    family: Family,
    h: f64,
    t: f64,
    x: f64,
    n_samples: usize,
    seed: u64,
    grid: &BoundsGrid,
) -> Result<MomentReport, DisturbanceError> {
    let sums = monte_carlo(n_samples, seed, |theta| {
        let f = sample_explicit_map(field, family, h, -t, theta)?;
        Ok(f.inverse().evaluate(x, Side::Right) - x)
    })?;
    let bounds = family_bounds(field, family, h, grid, true)?;
    Ok(report_from_sums(sums, n_samples, h, t, x, bounds))
}
