//! Monotone degree-1 circle maps stored as exact piecewise-linear data.
//!
//! A [`CircleMap`] is the pair `{f⁻, f⁺}` of left- and right-continuous
//! modifications of one non-decreasing graph with `f(x + 1) = f(x) + 1`.
//! The fundamental domain `[0, 1)` carries a sorted list of breakpoints
//! `(x, y⁻, y⁺)`; between consecutive breakpoints the map is affine from
//! `(xᵢ, y⁺ᵢ)` to `(xᵢ₊₁, y⁻ᵢ₊₁)` and the last segment wraps to the first
//! breakpoint shifted by one period. Jumps (`y⁻ < y⁺`) and flats (zero-slope
//! segments) are both representable, which makes the family closed under
//! inversion and (almost always) under composition.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Positions and values closer than this are merged during canonicalization.
pub const CANON_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("ambiguous composition: a flat of the inner map at value {value} lands on a jump of the outer map")]
    AmbiguousComposition { value: f64 },
    #[error("invalid circle map: {0}")]
    Invalid(String),
}

/// Which one-sided modification to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint {
    pub x: f64,
    pub y_minus: f64,
    pub y_plus: f64,
}

impl Breakpoint {
    pub fn new(x: f64, y_minus: f64, y_plus: f64) -> Self {
        Self { x, y_minus, y_plus }
    }

    pub fn continuous(x: f64, y: f64) -> Self {
        Self::new(x, y, y)
    }

    fn value(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.y_minus,
            Side::Right => self.y_plus,
        }
    }

    fn has_jump(&self) -> bool {
        self.y_plus > self.y_minus
    }
}

/// An element of the space of monotone degree-1 map pairs, restricted to
/// piecewise-linear data. Always canonical: positions in `[0, 1)` strictly
/// increasing, no removable breakpoints, so `==` is structural equality.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleMap {
    breakpoints: Vec<Breakpoint>,
}

impl Default for CircleMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl CircleMap {
    pub fn identity() -> Self {
        Self::translation(0.0)
    }

    /// `x ↦ x + c`.
    pub fn translation(c: f64) -> Self {
        Self {
            breakpoints: vec![Breakpoint::continuous(0.0, c)],
        }
    }

    /// Builds a map from arbitrary breakpoint data. Positions may be any real
    /// numbers; they are reduced modulo one (shifting the values by the same
    /// integer), merged and canonicalized. Fails if the data does not describe
    /// a non-decreasing degree-1 graph.
    pub fn from_breakpoints(raw: Vec<Breakpoint>) -> Result<Self, MapError> {
        let breakpoints = canonicalize(raw)?;
        Ok(Self { breakpoints })
    }

    pub fn from_triples(raw: &[[f64; 3]]) -> Result<Self, MapError> {
        Self::from_breakpoints(
            raw.iter()
                .map(|&[x, ym, yp]| Breakpoint::new(x, ym, yp))
                .collect(),
        )
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn to_triples(&self) -> Vec<[f64; 3]> {
        self.breakpoints
            .iter()
            .map(|b| [b.x, b.y_minus, b.y_plus])
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn has_jumps(&self) -> bool {
        self.breakpoints.iter().any(Breakpoint::has_jump)
    }

    pub fn has_flats(&self) -> bool {
        self.segments().any(|(_, y0, _, y1)| y0 == y1)
    }

    /// Segments of one period as `(x0, y0, x1, y1)`; the last one ends at the
    /// first breakpoint lifted by one.
    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let n = self.breakpoints.len();
        (0..n).map(move |i| {
            let a = self.breakpoints[i];
            let (x1, y1) = if i + 1 < n {
                let b = self.breakpoints[i + 1];
                (b.x, b.y_minus)
            } else {
                let b = self.breakpoints[0];
                (b.x + 1.0, b.y_minus + 1.0)
            };
            (a.x, a.y_plus, x1, y1)
        })
    }

    /// `f⁻(x)` or `f⁺(x)` for any real `x`.
    pub fn evaluate(&self, x: f64, side: Side) -> f64 {
        let mut k = x.floor();
        let mut u = x - k;
        if u >= 1.0 {
            u -= 1.0;
            k += 1.0;
        }
        self.evaluate_unit(u, side) + k
    }

    fn evaluate_unit(&self, u: f64, side: Side) -> f64 {
        let bps = &self.breakpoints;
        let n = bps.len();
        let i = bps.partition_point(|b| b.x <= u);
        if i > 0 && bps[i - 1].x == u {
            return bps[i - 1].value(side);
        }
        let (x0, y0) = if i == 0 {
            (bps[n - 1].x - 1.0, bps[n - 1].y_plus - 1.0)
        } else {
            (bps[i - 1].x, bps[i - 1].y_plus)
        };
        let (x1, y1) = if i == n {
            (bps[0].x + 1.0, bps[0].y_minus + 1.0)
        } else {
            (bps[i].x, bps[i].y_minus)
        };
        if y1 == y0 {
            y0
        } else {
            y0 + (u - x0) * (y1 - y0) / (x1 - x0)
        }
    }

    /// The pair `{(f⁺)⁻¹, (f⁻)⁻¹}` with `(f⁺)⁻¹(y) = sup{x : f⁺(x) < y}` and
    /// `(f⁻)⁻¹(y) = inf{x : f⁻(x) > y}`. Obtained by reflecting the complete
    /// graph in the diagonal: jumps become flats and flats become jumps.
    pub fn inverse(&self) -> CircleMap {
        let mut raw = Vec::with_capacity(2 * self.breakpoints.len());
        for b in &self.breakpoints {
            raw.push(Breakpoint::continuous(b.y_minus, b.x));
            if b.has_jump() {
                raw.push(Breakpoint::continuous(b.y_plus, b.x));
            }
        }
        // reflection of a valid map is valid
        Self::from_breakpoints(raw).expect("inverse of a valid circle map")
    }

    /// `self ∘ inner`, side by side: `{self⁻ ∘ inner⁻, self⁺ ∘ inner⁺}`.
    ///
    /// Fails when a flat of `inner` takes a value at which `self` jumps, since
    /// the two one-sided compositions would then differ on a whole interval.
    pub fn compose(&self, inner: &CircleMap) -> Result<CircleMap, MapError> {
        let outer = self;
        let mut raw = Vec::with_capacity(inner.breakpoints.len() + 2 * outer.breakpoints.len());
        for (b, (x0, y0, x1, y1)) in inner.breakpoints.iter().zip(inner.segments()) {
            raw.push(Breakpoint::new(
                b.x,
                outer.evaluate(b.y_minus, Side::Left),
                outer.evaluate(b.y_plus, Side::Right),
            ));
            if y1 == y0 {
                if let Some(j) = outer.jump_near(y0) {
                    return Err(MapError::AmbiguousComposition {
                        value: outer.breakpoints[j].x + y0.floor(),
                    });
                }
                continue;
            }
            let scale = (x1 - x0) / (y1 - y0);
            for ob in &outer.breakpoints {
                let mut k = (y0 - ob.x).floor() + 1.0;
                while ob.x + k < y1 {
                    let p = ob.x + k;
                    if p > y0 {
                        raw.push(Breakpoint::new(
                            x0 + (p - y0) * scale,
                            ob.y_minus + k,
                            ob.y_plus + k,
                        ));
                    }
                    k += 1.0;
                }
            }
        }
        Self::from_breakpoints(raw)
    }

    /// Index of a jump of `self` located (mod 1) within [`CANON_TOL`] of `v`.
    fn jump_near(&self, v: f64) -> Option<usize> {
        let u = v - v.floor();
        self.breakpoints.iter().position(|b| {
            let d = (b.x - u).abs();
            b.has_jump() && d.min(1.0 - d) <= CANON_TOL
        })
    }

    /// The 45°-rotated graph coordinate: `f×(t) = t − x` where
    /// `(x + f⁻(x))/2 ≤ t ≤ (x + f⁺(x))/2`.
    pub fn chi_transform(&self) -> ChiFunction {
        let mut pts = Vec::with_capacity(2 * self.breakpoints.len());
        for b in &self.breakpoints {
            pts.push(((b.x + b.y_minus) / 2.0, (b.y_minus - b.x) / 2.0));
            if b.has_jump() {
                pts.push(((b.x + b.y_plus) / 2.0, (b.y_plus - b.x) / 2.0));
            }
        }
        ChiFunction::from_points(pts)
    }

    /// Breakpoint-wise comparison with a tolerance on every coordinate.
    pub fn approx_eq(&self, other: &CircleMap, tol: f64) -> bool {
        self.breakpoints.len() == other.breakpoints.len()
            && self
                .breakpoints
                .iter()
                .zip(&other.breakpoints)
                .all(|(a, b)| {
                    (a.x - b.x).abs() <= tol
                        && (a.y_minus - b.y_minus).abs() <= tol
                        && (a.y_plus - b.y_plus).abs() <= tol
                })
    }
}

/// `d(f, g) = sup_t |f×(t) − g×(t)|`, exact on piecewise-linear data.
pub fn d_map(f: &CircleMap, g: &CircleMap) -> f64 {
    f.chi_transform().sup_distance(&g.chi_transform())
}

fn canonicalize(raw: Vec<Breakpoint>) -> Result<Vec<Breakpoint>, MapError> {
    if raw.is_empty() {
        return Ok(vec![Breakpoint::continuous(0.0, 0.0)]);
    }
    let mut pts: Vec<Breakpoint> = Vec::with_capacity(raw.len());
    for b in raw {
        if !(b.x.is_finite() && b.y_minus.is_finite() && b.y_plus.is_finite()) {
            return Err(MapError::Invalid(format!("non-finite breakpoint {b:?}")));
        }
        if b.y_plus < b.y_minus - CANON_TOL {
            return Err(MapError::Invalid(format!("downward jump at x = {}", b.x)));
        }
        let mut k = b.x.floor();
        let mut x = b.x - k;
        if x >= 1.0 - CANON_TOL {
            x = 0.0;
            k += 1.0;
        }
        pts.push(Breakpoint::new(x, b.y_minus - k, b.y_plus - k));
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));

    let mut merged: Vec<Breakpoint> = Vec::with_capacity(pts.len());
    for b in pts {
        match merged.last_mut() {
            Some(last) if b.x - last.x <= CANON_TOL => {
                last.y_minus = last.y_minus.min(b.y_minus);
                last.y_plus = last.y_plus.max(b.y_plus);
            }
            _ => merged.push(b),
        }
    }

    let n = merged.len();
    // snapping one breakpoint can expose a tiny jump or rise at its
    // neighbour, so repeat until nothing moves
    for _ in 0..8 {
        let mut changed = false;
        for b in merged.iter_mut() {
            let jump = b.y_plus - b.y_minus;
            if jump != 0.0 && jump <= CANON_TOL {
                b.y_plus = b.y_minus;
                changed = true;
            }
        }
        for i in 0..n {
            let cur_plus = merged[i].y_plus;
            // compare across the seam in the unlifted frame, where evaluation
            // on [0, 1) sees it
            let rise = if i + 1 < n {
                merged[i + 1].y_minus - cur_plus
            } else {
                merged[0].y_minus - (cur_plus - 1.0)
            };
            if rise < -CANON_TOL {
                return Err(MapError::Invalid(format!(
                    "decreasing segment after x = {}",
                    merged[i].x
                )));
            }
            if rise.abs() <= CANON_TOL && rise != 0.0 {
                let next = if i + 1 < n {
                    &mut merged[i + 1]
                } else {
                    &mut merged[0]
                };
                let target = if i + 1 < n { cur_plus } else { cur_plus - 1.0 };
                if next.y_minus != target {
                    next.y_minus = target;
                    next.y_plus = next.y_plus.max(target);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    remove_collinear(&mut merged);

    if merged.len() == 1 && !merged[0].has_jump() {
        let b = merged[0];
        let c = b.y_minus - b.x;
        merged[0] = Breakpoint::continuous(0.0, c);
    }
    Ok(merged)
}

fn remove_collinear(bps: &mut Vec<Breakpoint>) {
    loop {
        let n = bps.len();
        if n < 2 {
            return;
        }
        let mut removed = false;
        let mut i = 0;
        while i < bps.len() && bps.len() >= 2 {
            let n = bps.len();
            let b = bps[i];
            if b.has_jump() {
                i += 1;
                continue;
            }
            let (xp, yp) = if i == 0 {
                (bps[n - 1].x - 1.0, bps[n - 1].y_plus - 1.0)
            } else {
                (bps[i - 1].x, bps[i - 1].y_plus)
            };
            let (xn, yn) = if i + 1 == n {
                (bps[0].x + 1.0, bps[0].y_minus + 1.0)
            } else {
                (bps[i + 1].x, bps[i + 1].y_minus)
            };
            let cross = (b.y_minus - yp) * (xn - xp) - (yn - yp) * (b.x - xp);
            if cross.abs() <= CANON_TOL * (xn - xp) {
                bps.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            return;
        }
    }
}

/// A continuous, 1-periodic, piecewise-affine function with slopes in
/// `[-1, 1]`, stored as sorted vertices `(t, value)` with `t ∈ [0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiFunction {
    points: Vec<(f64, f64)>,
}

impl ChiFunction {
    fn from_points(raw: Vec<(f64, f64)>) -> Self {
        let mut pts: Vec<(f64, f64)> = raw
            .into_iter()
            .map(|(t, v)| {
                let mut u = t - t.floor();
                if u >= 1.0 - CANON_TOL {
                    u = 0.0;
                }
                (u, v)
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|b, a| b.0 - a.0 <= CANON_TOL);
        Self { points: pts }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let mut u = t - t.floor();
        if u >= 1.0 {
            u -= 1.0;
        }
        let pts = &self.points;
        let n = pts.len();
        let i = pts.partition_point(|p| p.0 <= u);
        if i > 0 && pts[i - 1].0 == u {
            return pts[i - 1].1;
        }
        let (t0, v0) = if i == 0 {
            (pts[n - 1].0 - 1.0, pts[n - 1].1)
        } else {
            pts[i - 1]
        };
        let (t1, v1) = if i == n {
            (pts[0].0 + 1.0, pts[0].1)
        } else {
            pts[i]
        };
        v0 + (u - t0) * (v1 - v0) / (t1 - t0)
    }

    /// Slopes of every segment over one period.
    pub fn slopes(&self) -> Vec<f64> {
        let pts = &self.points;
        let n = pts.len();
        (0..n)
            .map(|i| {
                let (t0, v0) = pts[i];
                let (t1, v1) = if i + 1 < n {
                    pts[i + 1]
                } else {
                    (pts[0].0 + 1.0, pts[0].1)
                };
                (v1 - v0) / (t1 - t0)
            })
            .collect()
    }

    pub fn negate(&self) -> ChiFunction {
        Self {
            points: self.points.iter().map(|&(t, v)| (t, -v)).collect(),
        }
    }

    /// The supremum of `|self − other|`, attained at a vertex of one of them.
    pub fn sup_distance(&self, other: &ChiFunction) -> f64 {
        let a = self
            .points
            .iter()
            .map(|&(t, v)| (v - other.evaluate(t)).abs());
        let b = other
            .points
            .iter()
            .map(|&(t, v)| (self.evaluate(t) - v).abs());
        a.chain(b).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct CircleMapRepr {
    breakpoints: Vec<[f64; 3]>,
}

impl Serialize for CircleMap {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CircleMapRepr {
            breakpoints: self.to_triples(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CircleMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = CircleMapRepr::deserialize(d)?;
        CircleMap::from_triples(&repr.breakpoints).map_err(serde::de::Error::custom)
    }
}

/// A random piecewise-linear map with `n` breakpoints. Each breakpoint jumps
/// with probability `p_jump`, each segment is flat with probability `p_flat`.
pub fn random_circle_map<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p_jump: f64,
    p_flat: f64,
) -> CircleMap {
    let n = n.max(1);
    let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let n = xs.len();
    let mut jumps: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(p_jump) {
                rng.random::<f64>()
            } else {
                0.0
            }
        })
        .collect();
    let mut rises: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(p_flat) {
                0.0
            } else {
                rng.random::<f64>() + 0.05
            }
        })
        .collect();
    let total: f64 = jumps.iter().chain(&rises).sum();
    if total <= 0.0 {
        rises[0] = 1.0;
    } else {
        jumps.iter_mut().for_each(|j| *j /= total);
        rises.iter_mut().for_each(|r| *r /= total);
    }
    let mut y = rng.random::<f64>() * 2.0 - 1.0;
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let ym = y;
        let yp = ym + jumps[i];
        raw.push(Breakpoint::new(xs[i], ym, yp));
        y = yp + rises[i];
    }
    CircleMap::from_breakpoints(raw).expect("random map is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn jump_map() -> CircleMap {
        // identity except for a jump at 0.5 from 0.5 to 0.7, recovered by a flat up to 0.7
        CircleMap::from_triples(&[[0.5, 0.5, 0.7], [0.7, 0.7, 0.7]]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(CircleMap::identity().evaluate(0.3, Side::Right), 0.3);
        assert!((CircleMap::translation(0.25).evaluate(0.9, Side::Right) - 1.15).abs() < 1e-15);
        let m = jump_map();
        assert_eq!(m.evaluate(0.5, Side::Left), 0.5);
        assert_eq!(m.evaluate(0.5, Side::Right), 0.7);
        // grid-limit oracle: approach 0.5 from both sides
        for k in 1..=6 {
            let eps = 10f64.powi(-k);
            assert!((m.evaluate(0.5 - eps, Side::Right) - 0.5).abs() <= eps + 1e-15);
            assert!((m.evaluate(0.5 + eps, Side::Left) - 0.7).abs() <= 1e-15);
        }
    }

    #[test]
    fn invert_examples() {
        assert_eq!(CircleMap::identity().inverse(), CircleMap::identity());
        assert!(CircleMap::translation(0.25)
            .inverse()
            .approx_eq(&CircleMap::translation(-0.25), 1e-15));

        // flat on (0.2, 0.4) at value 0.3
        let flat = CircleMap::from_triples(&[[0.2, 0.3, 0.3], [0.4, 0.3, 0.3]]).unwrap();
        let inv = flat.inverse();
        let b = inv
            .breakpoints()
            .iter()
            .find(|b| (b.x - 0.3).abs() < 1e-12)
            .expect("jump at 0.3");
        assert!((b.y_minus - 0.2).abs() < 1e-12);
        assert!((b.y_plus - 0.4).abs() < 1e-12);

        // sup/inf oracle on a grid
        let xs: Vec<f64> = (0..10_000)
            .map(|i| -1.0 + 3.0 * i as f64 / 10_000.0)
            .collect();
        for &y in &[0.3, 0.25, 0.9, 1.5, -0.75] {
            let left = xs
                .iter()
                .copied()
                .filter(|&x| flat.evaluate(x, Side::Right) < y)
                .fold(f64::NEG_INFINITY, f64::max);
            let right = xs
                .iter()
                .copied()
                .filter(|&x| flat.evaluate(x, Side::Left) > y)
                .fold(f64::INFINITY, f64::min);
            assert!(
                (inv.evaluate(y, Side::Left) - left).abs() < 1e-3,
                "y={y} {} {left}",
                inv.evaluate(y, Side::Left)
            );
            assert!(
                (inv.evaluate(y, Side::Right) - right).abs() < 1e-3,
                "y={y} {} {right}",
                inv.evaluate(y, Side::Right)
            );
        }
    }

    #[test]
    fn compose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_circle_map(&mut rng, 6, 0.4, 0.3);
        let id = CircleMap::identity();
        assert!(id.compose(&m).unwrap().approx_eq(&m, 1e-12));
        assert!(m.compose(&id).unwrap().approx_eq(&m, 1e-12));
        let s = CircleMap::translation(0.2)
            .compose(&CircleMap::translation(0.3))
            .unwrap();
        assert!(s.approx_eq(&CircleMap::translation(0.5), 1e-15));
    }

    #[test]
    fn flat_on_jump_is_ambiguous() {
        let inner = CircleMap::from_triples(&[[0.2, 0.5, 0.5], [0.4, 0.5, 0.5]]).unwrap();
        let outer = jump_map();
        assert!(matches!(
            outer.compose(&inner),
            Err(MapError::AmbiguousComposition { .. })
        ));
        // moving the flat off the jump resolves it
        let inner = CircleMap::from_triples(&[[0.2, 0.45, 0.45], [0.4, 0.45, 0.45]]).unwrap();
        assert!(outer.compose(&inner).is_ok());
    }

    #[test]
    fn compose_with_jumps_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f = random_circle_map(&mut rng, 5, 0.5, 0.3);
            let g = random_circle_map(&mut rng, 5, 0.5, 0.0);
            let h = g.compose(&f).unwrap();
            for _ in 0..50 {
                let x: f64 = rng.random::<f64>() * 4.0 - 2.0;
                for side in [Side::Left, Side::Right] {
                    let direct = g.evaluate(f.evaluate(x, side), side);
                    assert!((h.evaluate(x, side) - direct).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn chi_examples() {
        let chi = CircleMap::identity().chi_transform();
        assert!(chi.points().iter().all(|p| p.1 == 0.0));
        let c = 0.37;
        let chi = CircleMap::translation(c).chi_transform();
        // grid oracle: solve (x + x + c)/2 = t
        for i in 0..100 {
            let t = i as f64 / 100.0;
            let x = t - c / 2.0;
            assert!((chi.evaluate(t) - (t - x)).abs() < 1e-14);
        }
        assert!((d_map(&CircleMap::identity(), &CircleMap::translation(0.5)) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chi_brackets_the_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_circle_map(&mut rng, 7, 0.5, 0.3);
        let chi = m.chi_transform();
        for i in 0..500 {
            let t = i as f64 / 500.0;
            let x = t - chi.evaluate(t);
            let lo = (x + m.evaluate(x, Side::Left)) / 2.0;
            let hi = (x + m.evaluate(x, Side::Right)) / 2.0;
            assert!(lo - 1e-9 <= t && t <= hi + 1e-9, "t={t} lo={lo} hi={hi}");
        }
    }

    #[test]
    fn rejects_decreasing_data() {
        assert!(CircleMap::from_triples(&[[0.2, 0.5, 0.5], [0.4, 0.3, 0.3]]).is_err());
        assert!(CircleMap::from_triples(&[[0.2, 0.5, 0.4]]).is_err());
        assert!(CircleMap::from_triples(&[[0.0, f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn json_shape() {
        let m = jump_map();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.starts_with("{\"breakpoints\":[["));
        let back: CircleMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<CircleMap>(r#"{"breakpoints":[[0.1,0.5,0.2]]}"#).is_err());
    }
}
