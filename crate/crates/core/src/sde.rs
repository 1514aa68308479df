//! Euler–Maruyama simulation of finitely many coalescing diffusions on the
//! circle, `dX = b(t,X) dt + √a(t,X) dW`, and the closed-form transition law
//! of the locally quadratic model.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::dsl::CoefficientField;
use crate::rng;
use crate::stats::{self, KsResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("step {dt} exceeds the largest admissible step {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("start time {s} is after the end time {t_end}")]
    StartAfterEnd { s: f64, t_end: f64 },
    #[error("no starting points")]
    NoStarts,
    #[error("log argument {value} is not positive")]
    DomainError { value: f64 },
    #[error("the log transform needs a' != 0")]
    FlatDiffusivity,
}

/// Paths closer than this modulo 1 are merged.
pub const COALESCENCE_EPS: f64 = 1e-9;

/// `min(1e−3, a_*/(10 b*² + 1))`
pub fn max_step(field: &CoefficientField) -> f64 {
    let b = field.bounds;
    (1e-3f64).min(b.a_star / (10.0 * b.b_upper * b.b_upper + 1.0))
}

/// One Euler–Maruyama step.
#[inline]
pub fn euler_step(field: &CoefficientField, t: f64, x: f64, dt: f64, z: f64) -> f64 {
    x + field.b(t, x) * dt + (field.a(t, x) * dt).sqrt() * z
}

/// A single path from `(s, x)` to `t_end`, returning only the endpoint.
pub fn euler_endpoint<R: Rng + ?Sized>(
    field: &CoefficientField,
    s: f64,
    x: f64,
    t_end: f64,
    dt: f64,
    rng: &mut R,
) -> f64 {
    let n = ((t_end - s) / dt).ceil().max(0.0) as usize;
    let step = if n > 0 { (t_end - s) / n as f64 } else { 0.0 };
    let mut pos = x;
    for i in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        pos = euler_step(field, s + i as f64 * step, pos, step, z);
    }
    pos
}

/// A sampled path on the ensemble's time grid, from its birth index on.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePath {
    pub start: (f64, f64),
    pub birth: usize,
    /// position per grid time; once merged, bit-equal to the survivor's
    pub positions: Vec<f64>,
    /// the same path kept continuous across merges (survivor plus an integer)
    pub lift: Vec<f64>,
    /// survivor and grid index of the merge
    pub merged_into: Option<(usize, usize)>,
    /// grid index and the lift reached by the path's own step there, for
    /// every step that ended in a merge moving it onto another path
    pub snaps: Vec<(usize, f64)>,
}

impl EnsemblePath {
    pub fn position_at(&self, grid_index: usize) -> Option<f64> {
        grid_index
            .checked_sub(self.birth)
            .and_then(|i| self.positions.get(i).copied())
    }

    pub fn lift_at(&self, grid_index: usize) -> Option<f64> {
        grid_index
            .checked_sub(self.birth)
            .and_then(|i| self.lift.get(i).copied())
    }

    /// The lift reached by the path's own noise at `grid_index`, before any
    /// merge at that index moved it.
    pub fn own_lift_at(&self, grid_index: usize) -> Option<f64> {
        match self.snaps.iter().find(|s| s.0 == grid_index) {
            Some(&(_, v)) => Some(v),
            None => self.lift_at(grid_index),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoalescingEnsemble {
    pub times: Vec<f64>,
    pub dt: f64,
    pub paths: Vec<EnsemblePath>,
    /// `T^{jk}` for `j < k`, indexed `[j][k]`
    collisions: Vec<Vec<Option<f64>>>,
}

impl CoalescingEnsemble {
    pub fn collision_time(&self, j: usize, k: usize) -> Option<f64> {
        let (j, k) = (j.min(k), j.max(k));
        if j == k {
            return Some(self.paths[j].start.0);
        }
        self.collisions[j][k]
    }

    pub fn write_csv<W: Write>(&self, seed: u64, header: bool, mut out: W) -> io::Result<()> {
        if header {
            writeln!(out, "seed,path_index,time,position,merged_into")?;
        }
        for (k, p) in self.paths.iter().enumerate() {
            for (i, x) in p.positions.iter().enumerate() {
                let g = p.birth + i;
                let merged = match p.merged_into {
                    Some((m, at)) if g >= at => m.to_string(),
                    _ => String::new(),
                };
                writeln!(out, "{seed},{k},{},{x},{merged}", self.times[g])?;
            }
        }
        Ok(())
    }
}

fn find(parent: &mut [usize], mut k: usize) -> usize {
    while parent[k] != k {
        parent[k] = parent[parent[k]];
        k = parent[k];
    }
    k
}

fn near_integer(d: f64) -> bool {
    (d - d.round()).abs() < COALESCENCE_EPS
}

/// Simulates coalescing paths from `starts = [(s_k, x_k)]` to `t_end`.
/// Each live path uses its own noise stream until it meets another path
/// modulo 1 (an integer crossing of the difference between steps, or a gap
/// below [`COALESCENCE_EPS`]); the lower index survives and the other copies
/// it from then on.
pub fn simulate_ensemble(
    field: &CoefficientField,
    starts: &[(f64, f64)],
    dt: f64,
    t_end: f64,
    seed: u64,
) -> Result<CoalescingEnsemble, SdeError> {
    let max = max_step(field);
    if !(dt > 0.0 && dt <= max) {
        return Err(SdeError::StepTooLarge { dt, max });
    }
    if starts.is_empty() {
        return Err(SdeError::NoStarts);
    }
    if let Some(&(s, _)) = starts.iter().find(|(s, _)| *s > t_end) {
        return Err(SdeError::StartAfterEnd { s, t_end });
    }
    let t0 = starts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let n_steps = ((t_end - t0) / dt).ceil() as usize;
    let mut times: Vec<f64> = (0..=n_steps)
        .map(|i| (t0 + i as f64 * dt).min(t_end))
        .collect();
    times.extend(starts.iter().map(|p| p.0));
    times.sort_by(f64::total_cmp);
    times.dedup();

    let m = starts.len();
    let mut paths: Vec<EnsemblePath> = starts
        .iter()
        .map(|&(s, x)| EnsemblePath {
            start: (s, x),
            birth: times.partition_point(|&t| t < s),
            positions: Vec::new(),
            lift: Vec::new(),
            merged_into: None,
            snaps: Vec::new(),
        })
        .collect();
    let mut rngs: Vec<_> = (0..m)
        .map(|k| rng::stream(seed, rng::SDE, k as u64))
        .collect();
    let mut collisions = vec![vec![None; m]; m];
    let mut parent: Vec<usize> = (0..m).collect();
    let mut offset = vec![0.0f64; m];
    let mut alive = vec![false; m];
    let mut pos = vec![0.0f64; m];
    let mut prev = vec![0.0f64; m];

    for g in 0..times.len() {
        let t = times[g];
        if g > 0 {
            let h = t - times[g - 1];
            for k in 0..m {
                if alive[k] && parent[k] == k {
                    let z: f64 = rngs[k].sample(StandardNormal);
                    pos[k] = euler_step(field, times[g - 1], prev[k], h, z);
                }
            }
        }
        for k in 0..m {
            if !alive[k] && paths[k].birth == g {
                alive[k] = true;
                pos[k] = paths[k].start.1;
                prev[k] = pos[k];
            }
        }
        let own: Vec<f64> = (0..m)
            .map(|k| {
                if alive[k] {
                    pos[find(&mut parent, k)] + offset[k]
                } else {
                    0.0
                }
            })
            .collect();
        // merge roots that met during the step
        let roots: Vec<usize> = (0..m).filter(|&k| alive[k] && parent[k] == k).collect();
        for (ai, &j) in roots.iter().enumerate() {
            for &k in &roots[ai + 1..] {
                let (rj, rk) = (find(&mut parent, j), find(&mut parent, k));
                if rj == rk {
                    continue;
                }
                let before = prev[j] - prev[k];
                let after = pos[j] - pos[k];
                let born_now = paths[j].birth == g || paths[k].birth == g;
                let crossed = !born_now && before.floor() != after.floor();
                if crossed || near_integer(after) {
                    let (keep, drop) = (rj.min(rk), rj.max(rk));
                    let shift = (pos[drop] - pos[keep]).round();
                    let class: Vec<usize> = (0..m)
                        .map(|a| {
                            if alive[a] {
                                find(&mut parent, a)
                            } else {
                                usize::MAX
                            }
                        })
                        .collect();
                    for a in 0..m {
                        for b in a + 1..m {
                            let pair = (class[a], class[b]);
                            if (pair == (keep, drop) || pair == (drop, keep))
                                && collisions[a][b].is_none()
                            {
                                collisions[a][b] = Some(t);
                            }
                        }
                    }
                    for a in (0..m).filter(|&a| class[a] == drop) {
                        offset[a] += shift;
                    }
                    paths[drop].merged_into = Some((keep, g));
                    parent[drop] = keep;
                }
            }
        }
        for k in 0..m {
            if alive[k] {
                let r = find(&mut parent, k);
                if r != k {
                    pos[k] = pos[r];
                }
                prev[k] = pos[k];
                let lift = pos[k] + offset[k];
                if lift != own[k] && paths[k].birth < g {
                    paths[k].snaps.push((g, own[k]));
                }
                paths[k].positions.push(pos[k]);
                paths[k].lift.push(lift);
            }
        }
    }
    Ok(CoalescingEnsemble {
        times,
        dt,
        paths,
        collisions,
    })
}

/// The locally quadratic model around a base point `y`: diffusivity
/// `ã(x) = (a′²/4a)(x − y + 2a/a′)²` and drift `b̃(x) = (ba′/2a)(x − y + 2a/a′)`,
/// with the constant-coefficient model when `a′ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadraticModel {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub h: f64,
}

impl QuadraticModel {
    pub fn diffusivity(&self, y: f64, x: f64) -> f64 {
        if self.a_prime == 0.0 {
            return self.a;
        }
        let s = x - y + 2.0 * self.a / self.a_prime;
        self.a_prime * self.a_prime / (4.0 * self.a) * s * s
    }

    pub fn drift(&self, y: f64, x: f64) -> f64 {
        if self.a_prime == 0.0 {
            return self.b;
        }
        self.b * self.a_prime / (2.0 * self.a) * (x - y + 2.0 * self.a / self.a_prime)
    }

    /// `f(x) = (2√a/a′) log(x − y + 2a/a′)`
    pub fn log_transform(&self, y: f64, x: f64) -> Result<f64, SdeError> {
        if self.a_prime == 0.0 {
            return Err(SdeError::FlatDiffusivity);
        }
        let arg = x - y + 2.0 * self.a / self.a_prime;
        let scaled = arg * self.a_prime / (2.0 * self.a);
        if scaled <= 0.0 {
            return Err(SdeError::DomainError { value: scaled });
        }
        Ok(2.0 * self.a.sqrt() / self.a_prime * arg.abs().ln())
    }

    /// Drift of `f(X)`: `(b − a′/4)/√a`.
    pub fn transformed_drift(&self) -> f64 {
        (self.b - self.a_prime / 4.0) / self.a.sqrt()
    }

    /// Euler path of the model from `x` over `[0, h]` in `steps` steps.
    pub fn euler<R: Rng + ?Sized>(&self, y: f64, x: f64, steps: usize, rng: &mut R) -> f64 {
        let dt = self.h / steps as f64;
        let mut pos = x;
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            pos += self.drift(y, pos) * dt + (self.diffusivity(y, pos) * dt).sqrt() * z;
        }
        pos
    }
}

/// `F_y(x) = P(X_h(x) > y) = Φ((2√a/(a′√h)) log(1 + a′(x−y)/(2a)) + √(h/a)(b − a′/4))`,
/// and `Φ((x − y + bh)/√(ah))` when `a′ = 0`.
pub fn analytic_transition_cdf(p: &QuadraticModel, x: f64, y: f64) -> Result<f64, SdeError> {
    if p.a_prime == 0.0 {
        return Ok(stats::normal_cdf((x - y + p.b * p.h) / (p.a * p.h).sqrt()));
    }
    let arg = 1.0 + p.a_prime * (x - y) / (2.0 * p.a);
    if arg <= 0.0 {
        return Err(SdeError::DomainError { value: arg });
    }
    let z = 2.0 * p.a.sqrt() / (p.a_prime * p.h.sqrt()) * arg.ln()
        + (p.h / p.a).sqrt() * (p.b - p.a_prime / 4.0);
    Ok(stats::normal_cdf(z))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogTransformReport {
    pub samples: usize,
    pub mean_increment: f64,
    pub expected_mean: f64,
    pub mean_ci99: f64,
    pub variance: f64,
    pub expected_variance: f64,
    pub variance_rel_err: f64,
    pub ks: KsResult,
    pub mean_ok: bool,
    pub variance_ok: bool,
    pub ks_ok: bool,
}

impl LogTransformReport {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.variance_ok && self.ks_ok
    }
}

pub const QUADRATIC_STEPS: usize = 200;
pub const LOG_VARIANCE_TOL: f64 = 0.05;
pub const LOG_KS_TOL: f64 = 0.01;

/// Simulates the quadratic model from its base point over `[0, h]` and tests
/// that `f(X_h) − f(y)` is `N((h/√a)(b − a′/4), h)`: the mean against its 99%
/// interval, the variance within 5% and the KS distance below 0.01.
pub fn log_transform_check(
    p: &QuadraticModel,
    n_samples: usize,
    seed: u64,
) -> Result<LogTransformReport, SdeError> {
    use rayon::prelude::*;
    if p.a_prime == 0.0 {
        return Err(SdeError::FlatDiffusivity);
    }
    let y = 0.0;
    let f0 = p.log_transform(y, y)?;
    const BLOCK: usize = 1024;
    let blocks: Vec<Result<Vec<f64>, SdeError>> = (0..n_samples.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, rng::QUADRATIC, b as u64);
            (b * BLOCK..((b + 1) * BLOCK).min(n_samples))
                .map(|_| Ok(p.log_transform(y, p.euler(y, y, QUADRATIC_STEPS, &mut rng))? - f0))
                .collect()
        })
        .collect();
    let mut incr = Vec::with_capacity(n_samples);
    for b in blocks {
        incr.extend(b?);
    }
    let m = stats::mean_ci(&incr);
    let expected_mean = p.h * p.transformed_drift();
    let variance = m.sd * m.sd;
    let sd = p.h.sqrt();
    let ks = stats::ks_one_sample(&incr, |v| stats::normal_cdf((v - expected_mean) / sd))
        .map_err(|_| SdeError::NoStarts)?;
    let variance_rel_err = (variance / p.h - 1.0).abs();
    Ok(LogTransformReport {
        samples: n_samples,
        mean_increment: m.mean,
        expected_mean,
        mean_ci99: m.ci99,
        variance,
        expected_variance: p.h,
        variance_rel_err,
        ks,
        mean_ok: m.contains(expected_mean),
        variance_ok: variance_rel_err <= LOG_VARIANCE_TOL,
        ks_ok: ks.statistic < LOG_KS_TOL,
    })
}

/// Samples of the point `ξ` carried onto `y` at time `h` by the model's
/// Euler flow; `P(ξ < x) = P(X_h(x) > y) = F_y(x)`. Each sample drives all
/// starting points with one noise path and locates `ξ` by bisection.
pub fn sample_preimages(p: &QuadraticModel, n_samples: usize, steps: usize, seed: u64) -> Vec<f64> {
    use rayon::prelude::*;
    let y = 0.0;
    let dt = p.h / steps as f64;
    let spread = 12.0 * (p.a * p.h).sqrt();
    let lower = if p.a_prime > 0.0 {
        (-2.0 * p.a / p.a_prime).max(-spread)
    } else {
        -spread
    };
    let upper = if p.a_prime < 0.0 {
        (-2.0 * p.a / p.a_prime).min(spread)
    } else {
        spread
    };
    const BLOCK: usize = 1024;
    let blocks: Vec<Vec<f64>> = (0..n_samples.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, rng::QUADRATIC, (1 << 32) + b as u64);
            let mut noise = vec![0.0; steps];
            (b * BLOCK..((b + 1) * BLOCK).min(n_samples))
                .map(|_| {
                    noise
                        .iter_mut()
                        .for_each(|z| *z = rng.sample(StandardNormal));
                    let endpoint = |x0: f64| {
                        noise.iter().fold(x0, |x, z| {
                            x + p.drift(y, x) * dt + (p.diffusivity(y, x) * dt).sqrt() * z
                        })
                    };
                    let (mut lo, mut hi) = (lower, upper);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if endpoint(mid) > y {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    0.5 * (lo + hi)
                })
                .collect()
        })
        .collect();
    blocks.concat()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        let p = QuadraticModel {
            a: 1.0,
            a_prime: 0.5,
            b: 0.125,
            h: 0.01,
        };
        assert!((analytic_transition_cdf(&p, 0.3, 0.3).unwrap() - 0.5).abs() < 1e-15);
        let p = QuadraticModel {
            a: 1.0,
            a_prime: 0.5,
            b: 0.0,
            h: 0.01,
        };
        let mut last = 0.0;
        for i in 0..100 {
            let x = -0.5 + i as f64 / 99.0;
            let v = analytic_transition_cdf(&p, x, 0.0).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(matches!(
            analytic_transition_cdf(&p, -4.5, 0.0),
            Err(SdeError::DomainError { .. })
        ));
        let flat = QuadraticModel {
            a: 2.0,
            a_prime: 0.0,
            b: 1.0,
            h: 0.5,
        };
        // Φ((x − y + bh)/√(ah)) at x − y = −bh
        assert_eq!(analytic_transition_cdf(&flat, -0.5, 0.0).unwrap(), 0.5);
        // negative slope of a uses the same formula
        let neg = QuadraticModel {
            a: 1.0,
            a_prime: -0.5,
            b: -0.125,
            h: 0.01,
        };
        assert!((analytic_transition_cdf(&neg, 0.1, 0.1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_model_matches_log_formula() {
        let p = QuadraticModel {
            a: 1.3,
            a_prime: -0.7,
            b: 0.2,
            h: 0.01,
        };
        let f = |x: f64| p.log_transform(0.0, x).unwrap();
        // d/dx f = 1/√ã on the admissible side
        for x in [-0.2, 0.0, 0.3] {
            let d = (f(x + 1e-6) - f(x - 1e-6)) / 2e-6;
            assert!((d - 1.0 / p.diffusivity(0.0, x).sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn ensemble_basics() {
        let field = CoefficientField::parse("1", "0", (0.0, 1.0)).unwrap();
        assert!(matches!(
            simulate_ensemble(&field, &[(0.0, 0.0)], 0.01, 1.0, 1),
            Err(SdeError::StepTooLarge { .. })
        ));
        let e =
            simulate_ensemble(&field, &[(0.0, 0.2), (0.0, 0.2), (0.5, 0.7)], 1e-3, 1.0, 1).unwrap();
        assert_eq!(e.collision_time(0, 1), Some(0.0));
        assert_eq!(e.paths[1].positions, e.paths[0].positions);
        assert_eq!(e.paths[2].birth, 500);
        assert_eq!(e.paths[2].positions[0], 0.7);
        assert_eq!(e.times.len(), 1001);
    }

    #[test]
    fn merged_paths_stay_identical_and_ordered() {
        let field =
            CoefficientField::parse("1 + 0.3*sin(2*pi*x)", "0.5*cos(2*pi*x)", (0.0, 1.0)).unwrap();
        let starts: Vec<(f64, f64)> = (0..8).map(|k| (0.0, k as f64 / 8.0)).collect();
        for seed in 0..20 {
            let e = simulate_ensemble(&field, &starts, 1e-3, 1.0, seed).unwrap();
            for j in 0..8 {
                for k in j + 1..8 {
                    let (pj, pk) = (&e.paths[j], &e.paths[k]);
                    let mut merged = false;
                    for g in 0..e.times.len() {
                        let d = pk.positions[g] - pj.positions[g];
                        if let Some(t) = e.collision_time(j, k) {
                            if e.times[g] >= t {
                                assert_eq!(d, 0.0);
                                merged = true;
                                continue;
                            }
                        }
                        // lifted order is preserved before merging
                        let gap = pk.lift[g] - pj.lift[g];
                        assert!(gap > 0.0 && gap < 1.0, "seed {seed}: {gap}");
                    }
                    if merged {
                        let lift_gap = pk.lift.last().unwrap() - pj.lift.last().unwrap();
                        assert!((lift_gap - lift_gap.round()).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
