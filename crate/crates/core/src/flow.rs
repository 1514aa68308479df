//! Discrete flows: finitely many `(time, map)` events on a window, with
//! interval composition, time reversal, path extraction and flow metrics.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle_map::{d_map, CircleMap, MapError, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("invalid flow: {0}")]
    Invalid(String),
    #[error("interval {interval} is not inside the window [{t0}, {t1}]")]
    OutsideWindow {
        interval: Interval,
        t0: f64,
        t1: f64,
    },
}

/// A bounded interval of times with either endpoint open or closed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    /// `(lo, hi]`
    pub fn left_open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, true)
    }

    /// `[lo, hi]`
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, true, true)
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn contains(&self, t: f64) -> bool {
        let above = if self.lo_closed {
            t >= self.lo
        } else {
            t > self.lo
        };
        let below = if self.hi_closed {
            t <= self.hi
        } else {
            t < self.hi
        };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    /// `−I = {−t : t ∈ I}`, so `−(s, t] = [−t, −s)`.
    pub fn negate(&self) -> Self {
        Self::new(-self.hi, -self.lo, self.hi_closed, self.lo_closed)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Anything that assigns a map to every bounded interval of times.
pub trait WeakFlow {
    fn interval_map(&self, interval: &Interval) -> Result<CircleMap, FlowError>;
}

/// Events `(t_k, F_k)` with strictly increasing times inside a closed
/// window. The map of an interval is the composition, latest event
/// outermost, of the events it contains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowRepr", into = "FlowRepr")]
pub struct DiscreteFlow {
    window: (f64, f64),
    events: Vec<(f64, CircleMap)>,
}

#[derive(Serialize, Deserialize)]
struct FlowRepr {
    window: [f64; 2],
    events: Vec<(f64, CircleMap)>,
}

impl TryFrom<FlowRepr> for DiscreteFlow {
    type Error = FlowError;

    fn try_from(r: FlowRepr) -> Result<Self, FlowError> {
        DiscreteFlow::new((r.window[0], r.window[1]), r.events)
    }
}

impl From<DiscreteFlow> for FlowRepr {
    fn from(f: DiscreteFlow) -> Self {
        FlowRepr {
            window: [f.window.0, f.window.1],
            events: f.events,
        }
    }
}

impl DiscreteFlow {
    pub fn new(window: (f64, f64), events: Vec<(f64, CircleMap)>) -> Result<Self, FlowError> {
        let (t0, t1) = window;
        if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
            return Err(FlowError::Invalid(format!("bad window [{t0}, {t1}]")));
        }
        for (k, (t, _)) in events.iter().enumerate() {
            if !(t0..=t1).contains(t) {
                return Err(FlowError::Invalid(format!(
                    "event {k} at {t} is outside the window"
                )));
            }
            if k > 0 && events[k - 1].0 >= *t {
                return Err(FlowError::Invalid(format!(
                    "event times not increasing at index {k}"
                )));
            }
        }
        Ok(DiscreteFlow { window, events })
    }

    pub fn empty(window: (f64, f64)) -> Result<Self, FlowError> {
        Self::new(window, Vec::new())
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn events(&self) -> &[(f64, CircleMap)] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Index range of the events whose times lie in `interval`.
    pub fn event_range(&self, interval: &Interval) -> std::ops::Range<usize> {
        if interval.is_empty() {
            return 0..0;
        }
        let start = self.events.partition_point(|(t, _)| {
            if interval.lo_closed {
                *t < interval.lo
            } else {
                *t <= interval.lo
            }
        });
        let end = self.events.partition_point(|(t, _)| {
            if interval.hi_closed {
                *t <= interval.hi
            } else {
                *t < interval.hi
            }
        });
        start..end.max(start)
    }

    fn covers(&self, interval: &Interval) -> bool {
        interval.is_empty() || (interval.lo >= self.window.0 && interval.hi <= self.window.1)
    }

    /// `Φ_I`: the composition of the events in `interval`; the identity when
    /// there are none.
    pub fn flow_map(&self, interval: &Interval) -> Result<CircleMap, FlowError> {
        if !self.covers(interval) {
            return Err(FlowError::OutsideWindow {
                interval: *interval,
                t0: self.window.0,
                t1: self.window.1,
            });
        }
        let mut acc = CircleMap::identity();
        for (_, f) in &self.events[self.event_range(interval)] {
            acc = f.compose(&acc)?;
        }
        Ok(acc)
    }

    /// `φ̂_I = φ⁻¹_{−I}`: events `(t, F)` become `(−t, F⁻¹)` on the negated
    /// window, in reversed order.
    pub fn time_reverse(&self) -> DiscreteFlow {
        DiscreteFlow {
            window: (-self.window.1, -self.window.0),
            events: self
                .events
                .iter()
                .rev()
                .map(|(t, f)| (-t, f.inverse()))
                .collect(),
        }
    }

    /// `t ↦ φ^±_{(s,t]}(x)` for `t ∈ [s, t_end]`.
    pub fn extract_path(&self, s: f64, x: f64, side: Side) -> Result<FlowPath, FlowError> {
        self.check_start(s)?;
        let mut samples = vec![(s, x)];
        let mut pos = x;
        for (t, f) in &self.events[self.event_range(&Interval::left_open(s, self.window.1))] {
            pos = f.evaluate(pos, side);
            samples.push((*t, pos));
        }
        if samples.last().map(|p| p.0) != Some(self.window.1) {
            samples.push((self.window.1, pos));
        }
        Ok(FlowPath {
            start: (s, x),
            samples,
        })
    }

    /// Like [`extract_path`](Self::extract_path) on `[s, t_end]`, extended to
    /// `t < s` by `(φ⁻¹)^±_{(t,s]}(x)`: inverses of the events in `(t, s]`,
    /// latest first. Samples are right-continuous step data over the whole
    /// window.
    pub fn extract_bidirectional_path(
        &self,
        s: f64,
        x: f64,
        side: Side,
    ) -> Result<FlowPath, FlowError> {
        let forward = self.extract_path(s, x, side)?;
        let before = &self.events[self.event_range(&Interval::closed(self.window.0, s))];
        // the value recorded at event e_k holds on [e_k, e_{k+1})
        let mut back = Vec::with_capacity(before.len());
        let mut pos = x;
        for (t, f) in before.iter().rev() {
            back.push((*t, pos));
            pos = f.inverse().evaluate(pos, side);
        }
        let mut samples = Vec::with_capacity(back.len() + forward.samples.len() + 1);
        if before.first().is_none_or(|e| e.0 > self.window.0) {
            samples.push((self.window.0, pos));
        }
        for &(t, v) in back.iter().rev() {
            samples.push((t, v));
        }
        if samples.last().map(|p| p.0) == Some(s) {
            samples.pop();
        }
        samples.extend_from_slice(&forward.samples);
        Ok(FlowPath {
            start: (s, x),
            samples,
        })
    }

    fn check_start(&self, s: f64) -> Result<(), FlowError> {
        if s < self.window.0 || s > self.window.1 {
            return Err(FlowError::Invalid(format!(
                "start time {s} outside window [{}, {}]",
                self.window.0, self.window.1
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("flow serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl WeakFlow for DiscreteFlow {
    fn interval_map(&self, interval: &Interval) -> Result<CircleMap, FlowError> {
        self.flow_map(interval)
    }
}

/// Right-continuous step path: the value at `t` is that of the last sample
/// at or before `t`. Positions are unwrapped lifts.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPath {
    pub start: (f64, f64),
    pub samples: Vec<(f64, f64)>,
}

impl FlowPath {
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let k = self.samples.partition_point(|p| p.0 <= t);
        (k > 0).then(|| self.samples[k - 1].1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,position")?;
        for (t, x) in &self.samples {
            writeln!(out, "{t},{x}")?;
        }
        Ok(())
    }
}

/// `I = I₁ ⊔ I₂` with `I₁` before `I₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub whole: Interval,
    pub first: Interval,
    pub second: Interval,
}

impl Split {
    /// Splits `(lo, hi]` at `mid` into `(lo, mid]` and `(mid, hi]`.
    pub fn at(lo: f64, mid: f64, hi: f64) -> Self {
        Split {
            whole: Interval::left_open(lo, hi),
            first: Interval::left_open(lo, mid),
            second: Interval::left_open(mid, hi),
        }
    }

    fn partition_error(&self) -> Option<String> {
        let (a, b, w) = (&self.first, &self.second, &self.whole);
        if a.is_empty() || b.is_empty() {
            let other = if a.is_empty() { b } else { a };
            return (other != w).then(|| format!("{a} ∪ {b} is not {w}"));
        }
        if a.hi != b.lo || a.hi_closed == b.lo_closed {
            return Some(format!("{a} and {b} overlap or leave a gap"));
        }
        if a.lo != w.lo || a.lo_closed != w.lo_closed || b.hi != w.hi || b.hi_closed != w.hi_closed
        {
            return Some(format!("{a} ∪ {b} is not {w}"));
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Precondition {
        split: usize,
        reason: String,
    },
    Inequality {
        split: usize,
        x: f64,
        lower: f64,
        upper: f64,
        which: &'static str,
    },
    Map {
        split: usize,
        error: FlowError,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeakFlowReport {
    pub splits_checked: usize,
    pub points_checked: usize,
    pub violations: Vec<Violation>,
}

impl WeakFlowReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const WEAK_FLOW_GRID: usize = 256;
const WEAK_FLOW_TOL: f64 = 1e-12;

/// Checks `φ⁻_{I₂}∘φ⁻_{I₁} ≤ φ⁻_I ≤ φ⁺_I ≤ φ⁺_{I₂}∘φ⁺_{I₁}` at 256 points
/// of `[0, 1)` for each split.
pub fn check_weak_flow<F: WeakFlow + ?Sized>(flow: &F, splits: &[Split]) -> WeakFlowReport {
    let mut report = WeakFlowReport::default();
    for (k, split) in splits.iter().enumerate() {
        if let Some(reason) = split.partition_error() {
            report
                .violations
                .push(Violation::Precondition { split: k, reason });
            continue;
        }
        let maps = [&split.whole, &split.first, &split.second].map(|i| flow.interval_map(i));
        let [whole, first, second] = match maps {
            [Ok(a), Ok(b), Ok(c)] => [a, b, c],
            [a, b, c] => {
                let error = [a, b, c].into_iter().find_map(Result::err).unwrap();
                report.violations.push(Violation::Map { split: k, error });
                continue;
            }
        };
        report.splits_checked += 1;
        for i in 0..WEAK_FLOW_GRID {
            let x = i as f64 / WEAK_FLOW_GRID as f64;
            let glued_minus = second.evaluate(first.evaluate(x, Side::Left), Side::Left);
            let glued_plus = second.evaluate(first.evaluate(x, Side::Right), Side::Right);
            let minus = whole.evaluate(x, Side::Left);
            let plus = whole.evaluate(x, Side::Right);
            let chain = [
                (glued_minus, minus, "glued⁻ ≤ φ⁻"),
                (minus, plus, "φ⁻ ≤ φ⁺"),
                (plus, glued_plus, "φ⁺ ≤ glued⁺"),
            ];
            for (lower, upper, which) in chain {
                if lower > upper + WEAK_FLOW_TOL {
                    report.violations.push(Violation::Inequality {
                        split: k,
                        x,
                        lower,
                        upper,
                        which,
                    });
                }
            }
            report.points_checked += 1;
        }
    }
    report
}

/// Sampled `d_C^{(n)}`: the largest `d_𝒟(A_{(s,t]}, B_{(s,t]})` over grid
/// points `s < t` in `[−n, n)`.
pub fn flow_distance_c(
    a: &DiscreteFlow,
    b: &DiscreteFlow,
    n: u32,
    grid: usize,
) -> Result<f64, FlowError> {
    let n = n as f64;
    let span = Interval::open(-n, n);
    for f in [a, b] {
        if !f.covers(&span) {
            let (t0, t1) = f.window;
            return Err(FlowError::OutsideWindow {
                interval: span,
                t0,
                t1,
            });
        }
    }
    let points: Vec<f64> = (0..grid)
        .map(|i| -n + 2.0 * n * i as f64 / grid as f64)
        .collect();
    let mut best: f64 = 0.0;
    for (i, &s) in points.iter().enumerate() {
        let (mut ma, mut mb) = (CircleMap::identity(), CircleMap::identity());
        let mut prev = s;
        for &t in &points[i + 1..] {
            let step = Interval::left_open(prev, t);
            for (_, f) in &a.events[a.event_range(&step)] {
                ma = f.compose(&ma)?;
            }
            for (_, f) in &b.events[b.event_range(&step)] {
                mb = f.compose(&mb)?;
            }
            best = best.max(d_map(&ma, &mb));
            prev = t;
        }
    }
    Ok(best)
}

/// `χ_n(I) = 0 ∨ (n + 1 − R) ∧ 1` with `R = sup I ∨ (−inf I)`.
pub fn chi_cutoff(n: f64, interval: &Interval) -> f64 {
    let r = interval.hi.max(-interval.lo);
    (n + 1.0 - r).clamp(0.0, 1.0)
}

/// The inner supremum of `d_D^{(n)}` with the time change fixed to the
/// identity: `sup_I χ_n(I) d_𝒟(A_I, B_I)`, an upper bound of `d_D^{(n)}`.
/// Interval maps only change when an event enters, and `χ_n` is largest on
/// the tightest interval holding a given run of events, so closed intervals
/// between merged event times realize the supremum.
pub fn flow_distance_d_upper(a: &DiscreteFlow, b: &DiscreteFlow, n: u32) -> Result<f64, FlowError> {
    let n = n as f64;
    let span = Interval::open(-n - 1.0, n + 1.0);
    for f in [a, b] {
        if !f.covers(&span) {
            let (t0, t1) = f.window;
            return Err(FlowError::OutsideWindow {
                interval: span,
                t0,
                t1,
            });
        }
    }
    let mut times: Vec<f64> = a
        .events
        .iter()
        .chain(&b.events)
        .map(|e| e.0)
        .filter(|t| span.contains(*t))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut best: f64 = 0.0;
    for (i, &lo) in times.iter().enumerate() {
        let (mut ma, mut mb) = (CircleMap::identity(), CircleMap::identity());
        let mut prev = Interval::new(lo, lo, true, true);
        for &hi in &times[i..] {
            let step = if hi == lo {
                prev
            } else {
                Interval::left_open(prev.hi, hi)
            };
            for (_, f) in &a.events[a.event_range(&step)] {
                ma = f.compose(&ma)?;
            }
            for (_, f) in &b.events[b.event_range(&step)] {
                mb = f.compose(&mb)?;
            }
            let whole = Interval::closed(lo, hi);
            best = best.max(chi_cutoff(n, &whole) * d_map(&ma, &mb));
            prev = whole;
        }
    }
    Ok(best)
}
