//! Statistical checks: martingale residuals, cross products of coalescing
//! pairs, path marginals of disturbance flows against the Euler reference,
//! and the binned drift of time-reversed disturbance flows.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::circle_map::Side;
use crate::disturbance::{
    build_disturbance_flow, simulate_disturbance_paths, DisturbanceError, Family,
};
use crate::dsl::CoefficientField;
use crate::rng;
use crate::sde::{euler_endpoint, CoalescingEnsemble, EnsemblePath};
use crate::stats::{mean_ci, MeanCi, StatsError};

pub use crate::stats::{ks_two_sample, KsResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("inconsistent input: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Disturbance(#[from] DisturbanceError),
}

impl From<StatsError> for VerifyError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::InsufficientSamples { needed, got } => {
                VerifyError::InsufficientSamples { needed, got }
            }
        }
    }
}

pub const MIN_PATHS: usize = 1000;
pub const Z_THRESHOLD: f64 = 4.0;
/// Relative tolerance for post-collision quadratic covariation.
pub const POST_RATIO_TOL: f64 = 0.05;

/// Per-window z-scores and the largest in absolute value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZReport {
    pub windows: Vec<(f64, f64)>,
    pub z: Vec<f64>,
    pub max_abs_z: f64,
    pub threshold: f64,
    pub samples: usize,
}

impl ZReport {
    pub fn passed(&self) -> bool {
        self.max_abs_z < self.threshold
    }
}

fn window_bounds(first: usize, last: usize, count: usize) -> Vec<(usize, usize)> {
    let span = (last - first) as f64;
    (0..count)
        .map(|w| {
            let a = first + (span * w as f64 / count as f64).round() as usize;
            let b = first + (span * (w + 1) as f64 / count as f64).round() as usize;
            (a, b)
        })
        .filter(|(a, b)| b > a)
        .collect()
}

fn trapezoid(times: &[f64], lo: usize, hi: usize, f: impl Fn(usize) -> f64) -> f64 {
    (lo..hi)
        .map(|i| 0.5 * (f(i) + f(i + 1)) * (times[i + 1] - times[i]))
        .sum()
}

fn z_of(ci: &MeanCi) -> f64 {
    ci.z(0.0)
}

/// Splits the grid into `window_count` windows and, for each, tests that
/// `ΔZ − ∫ b(r, Z_r) dr` has mean zero across paths. Paths are lifts sampled
/// on `times`.
pub fn martingale_residual_test(
    times: &[f64],
    paths: &[Vec<f64>],
    field: &CoefficientField,
    window_count: usize,
) -> Result<ZReport, VerifyError> {
    if paths.len() < MIN_PATHS {
        return Err(VerifyError::InsufficientSamples {
            needed: MIN_PATHS,
            got: paths.len(),
        });
    }
    if times.len() < 2 || window_count == 0 {
        return Err(VerifyError::Mismatch(
            "need at least one step and one window".into(),
        ));
    }
    if let Some(p) = paths.iter().find(|p| p.len() != times.len()) {
        return Err(VerifyError::Mismatch(format!(
            "path of length {} on a grid of {}",
            p.len(),
            times.len()
        )));
    }
    let bounds = window_bounds(0, times.len() - 1, window_count);
    let mut z = Vec::with_capacity(bounds.len());
    for &(lo, hi) in &bounds {
        let residuals: Vec<f64> = paths
            .iter()
            .map(|p| p[hi] - p[lo] - trapezoid(times, lo, hi, |i| field.b(times[i], p[i])))
            .collect();
        z.push(z_of(&mean_ci(&residuals)));
    }
    let max_abs_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ZReport {
        windows: bounds.iter().map(|&(a, b)| (times[a], times[b])).collect(),
        z,
        max_abs_z,
        threshold: Z_THRESHOLD,
        samples: paths.len(),
    })
}

/// Lifted paths of one start across ensembles, on the grid from its birth.
pub fn ensemble_lifts(ensembles: &[CoalescingEnsemble], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let Some(first) = ensembles.first() else {
        return (Vec::new(), Vec::new());
    };
    let birth = first.paths[k].birth;
    let times = first.times[birth..].to_vec();
    (
        times,
        ensembles.iter().map(|e| e.paths[k].lift.clone()).collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossWindow {
    pub t0: f64,
    pub t1: f64,
    pub z: f64,
    pub z_uncompensated: f64,
    /// ensembles whose pair had already met when the window opened
    pub merged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub pair: (usize, usize),
    pub windows: Vec<CrossWindow>,
    pub max_abs_z: f64,
    pub max_abs_z_uncompensated: f64,
    /// mean and 99% radius of `Σ ΔZ^j ΔZ^k / window` over steps up to `T^{jk}`,
    /// using each path's own increment on the step that ends in the merge
    pub pre_covariance: Option<(f64, f64)>,
    /// pooled `Σ ΔZ^j ΔZ^k / ∫ a` over windows opening after `T^{jk}`
    pub post_ratio: Option<f64>,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.max_abs_z < Z_THRESHOLD
            && self.pre_covariance.is_none_or(|(m, r)| m.abs() <= r)
            && self
                .post_ratio
                .is_none_or(|q| (q - 1.0).abs() <= POST_RATIO_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossProductReport {
    pub pairs: Vec<PairReport>,
    pub threshold: f64,
    pub samples: usize,
}

impl CrossProductReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(PairReport::passed)
    }
}

struct PairWindowStats {
    dm: f64,
    a_comp: f64,
    pre_cov: Option<f64>,
    post: Option<(f64, f64)>,
    merged: bool,
}

fn pair_windows(
    e: &CoalescingEnsemble,
    field: &CoefficientField,
    j: usize,
    k: usize,
    bounds: &[(usize, usize)],
) -> Vec<PairWindowStats> {
    let (pj, pk) = (&e.paths[j], &e.paths[k]);
    let times = &e.times;
    let zj = |g: usize| pj.lift_at(g).expect("path alive");
    let zk = |g: usize| pk.lift_at(g).expect("path alive");
    // first grid index at or after the collision
    let met = e
        .collision_time(j, k)
        .map_or(usize::MAX, |t| times.partition_point(|&s| s < t));
    bounds
        .iter()
        .map(|&(lo, hi)| {
            let mut drift = 0.0;
            let mut a_comp = 0.0;
            let mut cov = 0.0;
            let mut post_cov = 0.0;
            let mut post_a = 0.0;
            for i in lo..hi {
                let dt = times[i + 1] - times[i];
                let f = |g: usize| {
                    let (x, y) = (zj(g), zk(g));
                    x * field.b(times[g], y) + y * field.b(times[g], x)
                };
                drift += 0.5 * (f(i) + f(i + 1)) * dt;
                // increments of each path's own noise, before a merge snaps it
                let own = |p: &EnsemblePath| {
                    p.own_lift_at(i + 1).expect("path alive") - p.lift_at(i).expect("path alive")
                };
                let prod = own(pj) * own(pk);
                if i >= met {
                    let a =
                        0.5 * (field.a(times[i], zj(i)) + field.a(times[i + 1], zj(i + 1))) * dt;
                    a_comp += a;
                    post_cov += prod;
                    post_a += a;
                } else {
                    cov += prod;
                }
            }
            let dm = zj(hi) * zk(hi) - zj(lo) * zk(lo) - drift - a_comp;
            let len = times[hi] - times[lo];
            PairWindowStats {
                dm,
                a_comp,
                pre_cov: (lo < met).then_some(cov / len),
                post: (lo >= met).then_some((post_cov, post_a)),
                merged: lo >= met,
            }
        })
        .collect()
}

/// For every pair of starts, tests that `Z^j Z^k` minus its drift
/// compensator and, from `T^{jk}` on, minus `∫ a(r, Z^j_r) dr` has mean zero
/// on each window; that increments have no covariation before `T^{jk}`; and
/// that after `T^{jk}` their covariation matches `∫ a`. All ensembles must
/// share starts and grid.
pub fn cross_product_test(
    ensembles: &[CoalescingEnsemble],
    field: &CoefficientField,
    window_count: usize,
) -> Result<CrossProductReport, VerifyError> {
    if ensembles.len() < MIN_PATHS {
        return Err(VerifyError::InsufficientSamples {
            needed: MIN_PATHS,
            got: ensembles.len(),
        });
    }
    let first = &ensembles[0];
    let m = first.paths.len();
    if m < 2 {
        return Err(VerifyError::Mismatch("need at least two starts".into()));
    }
    if ensembles
        .iter()
        .any(|e| e.times != first.times || e.paths.len() != m)
    {
        return Err(VerifyError::Mismatch(
            "ensembles differ in grid or starts".into(),
        ));
    }
    if window_count == 0 {
        return Err(VerifyError::Mismatch("need at least one window".into()));
    }
    let last = first.times.len() - 1;
    let mut pairs = Vec::new();
    for j in 0..m {
        for k in j + 1..m {
            let g0 = first.paths[j].birth.max(first.paths[k].birth);
            if g0 >= last {
                continue;
            }
            let bounds = window_bounds(g0, last, window_count);
            let per: Vec<Vec<PairWindowStats>> = ensembles
                .par_iter()
                .map(|e| pair_windows(e, field, j, k, &bounds))
                .collect();
            let mut windows = Vec::with_capacity(bounds.len());
            let mut pre = Vec::new();
            let (mut post_cov, mut post_a) = (0.0, 0.0);
            for (w, &(lo, hi)) in bounds.iter().enumerate() {
                let dm: Vec<f64> = per.iter().map(|s| s[w].dm).collect();
                let raw: Vec<f64> = per.iter().map(|s| s[w].dm + s[w].a_comp).collect();
                for s in &per {
                    pre.extend(s[w].pre_cov);
                    if let Some((c, a)) = s[w].post {
                        post_cov += c;
                        post_a += a;
                    }
                }
                windows.push(CrossWindow {
                    t0: first.times[lo],
                    t1: first.times[hi],
                    z: z_of(&mean_ci(&dm)),
                    z_uncompensated: z_of(&mean_ci(&raw)),
                    merged: per.iter().filter(|s| s[w].merged).count(),
                });
            }
            let max = |f: fn(&CrossWindow) -> f64| {
                windows.iter().fold(0.0f64, |acc, w| acc.max(f(w).abs()))
            };
            let pre_covariance = (pre.len() > 1).then(|| {
                let ci = mean_ci(&pre);
                (ci.mean, ci.ci99)
            });
            pairs.push(PairReport {
                pair: (j, k),
                max_abs_z: max(|w| w.z),
                max_abs_z_uncompensated: max(|w| w.z_uncompensated),
                windows,
                pre_covariance,
                post_ratio: (post_a > 0.0).then_some(post_cov / post_a),
            });
        }
    }
    Ok(CrossProductReport {
        pairs,
        threshold: Z_THRESHOLD,
        samples: ensembles.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRung {
    pub h: f64,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub start: (f64, f64),
    pub t: f64,
    pub dt: f64,
    pub n_seeds: usize,
    pub rungs: Vec<ConvergenceRung>,
    /// KS distances strictly decrease as `h` decreases
    pub monotone: bool,
}

/// KS distance between the lifted value at `t` of the disturbance-flow path
/// from `e = (s, x)` and the Euler reference, over seeds `0..n_seeds`, for
/// each `h` of the ladder.
pub fn single_path_convergence_test(
    field: &CoefficientField,
    family: Family,
    h_ladder: &[f64],
    e: (f64, f64),
    t: f64,
    n_seeds: usize,
    dt: f64,
) -> Result<ConvergenceReport, VerifyError> {
    if !(t > e.0) {
        return Err(VerifyError::Mismatch(format!(
            "end time {t} is not after the start {}",
            e.0
        )));
    }
    let reference: Vec<f64> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|seed| euler_endpoint(field, e.0, e.1, t, dt, &mut rng::stream(seed, rng::SDE, 0)))
        .collect();
    let mut ladder: Vec<f64> = h_ladder.to_vec();
    ladder.sort_by(|a, b| b.total_cmp(a));
    let mut rungs = Vec::with_capacity(ladder.len());
    for &h in &ladder {
        let sample = (0..n_seeds as u64)
            .into_par_iter()
            .map(|seed| {
                simulate_disturbance_paths(field, family, h, (e.0, t), seed, &[e.1]).map(|v| v[0])
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rungs.push(ConvergenceRung {
            h,
            ks: ks_two_sample(&sample, &reference)?,
        });
    }
    let monotone = rungs
        .windows(2)
        .all(|w| w[1].ks.statistic < w[0].ks.statistic);
    Ok(ConvergenceReport {
        start: e,
        t,
        dt,
        n_seeds,
        rungs,
        monotone,
    })
}

/// Settings of the time-reversal experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversalSetup {
    pub family: Family,
    pub h: f64,
    /// forward window; the reversed flow lives on its negation
    pub window: (f64, f64),
    pub n_seeds: usize,
    pub base_seed: u64,
    /// `(n_t, n_x)`
    pub bins: (usize, usize),
    /// starting points per increment time, evenly spaced on the circle
    pub points: usize,
    /// `δ / h`
    pub horizon_factor: f64,
}

impl ReversalSetup {
    pub fn new(h: f64, n_seeds: usize) -> Self {
        ReversalSetup {
            family: Family::Full,
            h,
            window: (0.0, 0.5),
            n_seeds,
            base_seed: 0,
            bins: (2, 4),
            points: 64,
            horizon_factor: 10.0,
        }
    }

    pub fn delta(&self) -> f64 {
        self.horizon_factor * self.h
    }
}

pub const MIN_BIN_SAMPLES: usize = 30;
pub const TOLERANCE_FLOOR: f64 = 0.05;
pub const CI_MULTIPLIER: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftBin {
    pub t_center: f64,
    pub x_center: f64,
    pub n: usize,
    pub drift_rate: f64,
    pub drift_target: f64,
    pub var_rate: f64,
    pub var_target: f64,
    /// standard error of `drift_rate − drift_target`, clustered by seed
    pub ci_radius: f64,
    /// standard error of `var_rate − var_target`, clustered by seed
    pub var_ci_radius: f64,
    pub pass: bool,
}

impl DriftBin {
    pub fn drift_tolerance(&self) -> f64 {
        TOLERANCE_FLOOR.max(CI_MULTIPLIER * self.ci_radius)
    }

    pub fn var_tolerance(&self) -> f64 {
        TOLERANCE_FLOOR.max(CI_MULTIPLIER * self.var_ci_radius)
    }

    /// Whether `±3σ` around the drift rate covers `value`.
    pub fn drift_ci_contains(&self, value: f64) -> bool {
        (self.drift_rate - value).abs() <= CI_MULTIPLIER * self.ci_radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftTable {
    pub setup: ReversalSetup,
    pub delta: f64,
    pub tolerance_floor: f64,
    pub ci_multiplier: f64,
    pub bins: Vec<DriftBin>,
}

impl DriftTable {
    pub const CSV_HEADER: &'static str =
        "t_center,x_center,n,drift_rate,drift_target,var_rate,var_target,ci_radius,pass";

    pub fn passed(&self) -> bool {
        !self.bins.is_empty() && self.bins.iter().all(|b| b.pass)
    }

    pub fn failing(&self) -> impl Iterator<Item = &DriftBin> {
        self.bins.iter().filter(|b| !b.pass)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for b in &self.bins {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                b.t_center,
                b.x_center,
                b.n,
                b.drift_rate,
                b.drift_target,
                b.var_rate,
                b.var_target,
                b.ci_radius,
                b.pass
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Default)]
struct BinSums {
    n: usize,
    drift: f64,
    drift_target: f64,
    sq: f64,
    var_target: f64,
}

fn seed_bin_sums(
    field: &CoefficientField,
    setup: &ReversalSetup,
    seed: u64,
) -> Result<Vec<BinSums>, VerifyError> {
    let reversed =
        build_disturbance_flow(field, setup.family, setup.h, setup.window, seed)?.time_reverse();
    let (r0, r1) = reversed.window();
    let events = reversed.events();
    let delta = setup.delta();
    let (n_t, n_x) = setup.bins;
    let steps = ((r1 - r0) / delta + 1e-9).floor() as usize;
    let mut sums = vec![BinSums::default(); n_t * n_x];
    let xs: Vec<f64> = (0..setup.points)
        .map(|i| i as f64 / setup.points as f64)
        .collect();
    let mut pos = vec![0.0; xs.len()];
    let mut lo = 0;
    for m in 0..steps {
        let tau = r0 + m as f64 * delta;
        let end = tau + delta;
        while lo < events.len() && events[lo].0 <= tau {
            lo += 1;
        }
        let mut hi = lo;
        while hi < events.len() && events[hi].0 <= end {
            hi += 1;
        }
        pos.copy_from_slice(&xs);
        for (_, map) in &events[lo..hi] {
            for y in pos.iter_mut() {
                *y = map.evaluate(*y, Side::Right);
            }
        }
        let tb = (((tau - r0) / (r1 - r0)) * n_t as f64)
            .floor()
            .min(n_t as f64 - 1.0) as usize;
        for (&x, &y) in xs.iter().zip(&pos) {
            let xb = ((x * n_x as f64).round() as usize) % n_x;
            let s = &mut sums[tb * n_x + xb];
            let inc = y - x;
            s.n += 1;
            s.drift += inc / delta;
            s.sq += inc * inc / delta;
            s.drift_target += setup.family.reversed_b(field, tau, x);
            s.var_target += field.a(-tau, x);
        }
    }
    Ok(sums)
}

/// Ratio estimate `Σ num / Σ n` over seeds with its cluster-robust
/// standard error.
fn clustered(num: &[f64], n: &[f64]) -> (f64, f64) {
    let total: f64 = n.iter().sum();
    let est = num.iter().sum::<f64>() / total;
    let k = num.len() as f64;
    let ss: f64 = num.iter().zip(n).map(|(y, m)| (y - est * m).powi(2)).sum();
    (est, (k / (k - 1.0) * ss).sqrt() / total)
}

/// Builds forward disturbance flows for `n_seeds` seeds, reverses them, and
/// follows a grid of starting points for `δ = horizon_factor · h` from every
/// multiple of `δ` in the reversed window. Increment rates are binned by the
/// start `(t, x)` and compared with the reversed drift `−b(−t,x) + a′(−t,x)/2`
/// and diffusivity `a(−t,x)`, both averaged over the bin's starts.
pub fn reversal_drift_experiment(
    field: &CoefficientField,
    setup: &ReversalSetup,
) -> Result<DriftTable, VerifyError> {
    if setup.n_seeds < 2 {
        return Err(VerifyError::InsufficientSamples {
            needed: 2,
            got: setup.n_seeds,
        });
    }
    let (n_t, n_x) = setup.bins;
    if n_t == 0 || n_x == 0 || setup.points == 0 || !(setup.horizon_factor > 0.0) {
        return Err(VerifyError::Mismatch(
            "bins, points and horizon must be positive".into(),
        ));
    }
    let per_seed = (0..setup.n_seeds as u64)
        .into_par_iter()
        .map(|i| seed_bin_sums(field, setup, setup.base_seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let (r0, r1) = (-setup.window.1, -setup.window.0);
    let mut bins = Vec::new();
    for tb in 0..n_t {
        for xb in 0..n_x {
            let idx = tb * n_x + xb;
            let col =
                |f: fn(&BinSums) -> f64| per_seed.iter().map(|s| f(&s[idx])).collect::<Vec<f64>>();
            let n = col(|s| s.n as f64);
            let total = n.iter().sum::<f64>() as usize;
            if total < MIN_BIN_SAMPLES {
                continue;
            }
            let (drift_diff, ci) = clustered(&col(|s| s.drift - s.drift_target), &n);
            let (var_diff, var_ci) = clustered(&col(|s| s.sq - s.var_target), &n);
            let (drift_target, _) = clustered(&col(|s| s.drift_target), &n);
            let (var_target, _) = clustered(&col(|s| s.var_target), &n);
            let mut bin = DriftBin {
                t_center: r0 + (tb as f64 + 0.5) * (r1 - r0) / n_t as f64,
                x_center: xb as f64 / n_x as f64,
                n: total,
                drift_rate: drift_target + drift_diff,
                drift_target,
                var_rate: var_target + var_diff,
                var_target,
                ci_radius: ci,
                var_ci_radius: var_ci,
                pass: false,
            };
            bin.pass =
                drift_diff.abs() <= bin.drift_tolerance() && var_diff.abs() <= bin.var_tolerance();
            bins.push(bin);
        }
    }
    Ok(DriftTable {
        setup: setup.clone(),
        delta: setup.delta(),
        tolerance_floor: TOLERANCE_FLOOR,
        ci_multiplier: CI_MULTIPLIER,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::simulate_ensemble;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn brownian_paths(
        seed: u64,
        n: usize,
        steps: usize,
        dt: f64,
        drift: f64,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let times = (0..=steps).map(|i| i as f64 * dt).collect();
        let paths = (0..n)
            .map(|_| {
                let mut x = 0.0;
                let mut p = vec![x];
                for _ in 0..steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x += drift * dt + dt.sqrt() * z;
                    p.push(x);
                }
                p
            })
            .collect();
        (times, paths)
    }

    fn field(a: &str, b: &str) -> CoefficientField {
        CoefficientField::parse(a, b, (0.0, 1.0)).unwrap()
    }

    #[test]
    fn martingale_residuals() {
        let bm = field("1", "0");
        let (times, paths) = brownian_paths(1, 2000, 100, 0.01, 0.0);
        let r = martingale_residual_test(&times, &paths, &bm, 10).unwrap();
        assert_eq!(r.z.len(), 10);
        assert!(r.passed(), "{r:?}");
        // a unit drift tested against b = 0: mean shift 0.1 per window, z ≈ √(0.1 n)
        let (times, paths) = brownian_paths(2, 2000, 100, 0.01, 1.0);
        let r = martingale_residual_test(&times, &paths, &bm, 10).unwrap();
        assert!(r.max_abs_z > 10.0, "{r:?}");
        assert!(
            martingale_residual_test(&times, &paths, &field("1", "1"), 10)
                .unwrap()
                .passed()
        );
        assert!(matches!(
            martingale_residual_test(&times, &[], &bm, 10),
            Err(VerifyError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn martingale_false_positive_rate() {
        let bm = field("1", "0");
        let rejections = (0..100)
            .filter(|&rep| {
                let (times, paths) = brownian_paths(100 + rep, 1000, 20, 0.05, 0.0);
                !martingale_residual_test(&times, &paths, &bm, 10)
                    .unwrap()
                    .passed()
            })
            .count();
        assert!(rejections <= 5, "{rejections}");
    }

    #[test]
    fn cross_products() {
        let bm = field("1", "0");
        let far: Vec<_> = (0..1000u64)
            .map(|s| simulate_ensemble(&bm, &[(0.0, 0.0), (0.0, 0.5)], 1e-3, 0.05, s).unwrap())
            .collect();
        let r = cross_product_test(&far, &bm, 5).unwrap();
        let p = &r.pairs[0];
        assert_eq!(p.windows[0].merged, 0);
        let (m, rad) = p.pre_covariance.unwrap();
        assert!(m.abs() <= rad, "{p:?}");
        assert!(r.passed(), "{r:?}");

        let same: Vec<_> = (0..1000u64)
            .map(|s| simulate_ensemble(&bm, &[(0.0, 0.3), (0.0, 0.3)], 1e-3, 0.5, s).unwrap())
            .collect();
        let r = cross_product_test(&same, &bm, 5).unwrap();
        let p = &r.pairs[0];
        assert!(p.windows.iter().all(|w| w.merged == 1000));
        assert!(p.pre_covariance.is_none());
        assert!(
            (p.post_ratio.unwrap() - 1.0).abs() < POST_RATIO_TOL,
            "{p:?}"
        );
        assert!(p.max_abs_z < Z_THRESHOLD, "{p:?}");
        assert!(p.max_abs_z_uncompensated > Z_THRESHOLD, "{p:?}");
        assert!(cross_product_test(&same[..10], &bm, 5).is_err());
    }

    #[test]
    fn convergence_is_deterministic() {
        let bm = field("1", "0");
        let run = || {
            single_path_convergence_test(&bm, Family::Full, &[1e-2], (0.0, 0.0), 0.2, 1000, 1e-3)
                .unwrap()
        };
        let r = run();
        assert_eq!(r, run());
        assert!(r.rungs[0].ks.statistic < 0.1, "{r:?}");
    }

    #[test]
    fn reversed_drift_sign_follows_a_prime() {
        let f = field("1 + 0.3*sin(2*pi*x)", "0");
        let mut setup = ReversalSetup::new(1e-3, 200);
        setup.bins = (1, 4);
        let table = reversal_drift_experiment(&f, &setup).unwrap();
        assert_eq!(table.bins.len(), 4);
        for b in &table.bins {
            let a_prime =
                0.6 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * b.x_center).cos();
            if a_prime.abs() > 2.0 * b.ci_radius {
                assert_eq!(b.drift_rate.signum(), a_prime.signum(), "{b:?}");
            }
        }
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with(DriftTable::CSV_HEADER));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn reversed_paths_stay_merged() {
        let f = field("1 + 0.3*sin(2*pi*x)", "0.5");
        let flow = build_disturbance_flow(&f, Family::Full, 1e-3, (0.0, 0.5), 3)
            .unwrap()
            .time_reverse();
        let starts: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
        let paths: Vec<_> = starts
            .iter()
            .map(|&x| flow.extract_path(-0.5, x, Side::Right).unwrap())
            .collect();
        let mut merges = 0;
        for a in 0..paths.len() {
            for b in a + 1..paths.len() {
                let (pa, pb) = (&paths[a].samples, &paths[b].samples);
                if let Some(i) = pa.iter().zip(pb).position(|(u, v)| u.1 == v.1) {
                    merges += 1;
                    assert!(pa[i..].iter().zip(&pb[i..]).all(|(u, v)| u.1 == v.1));
                }
            }
        }
        assert!(merges > 0);
    }
}
