//! `coalflow`: batch experiments on coalescing flows and their disturbance
//! approximations.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use coalflow::circle_map::Side;
use coalflow::disturbance::{
    build_disturbance_flow, draw_thetas, estimate_moments, estimate_reversed_moments, BoundsGrid, ExplicitDisturbance,
    MomentReport, MIN_MOMENT_SAMPLES,
};
use coalflow::flow::{flow_distance_c, flow_distance_d_upper, DiscreteFlow, Interval};
use coalflow::sde::{max_step, simulate_ensemble};
use coalflow::verify::{reversal_drift_experiment, single_path_convergence_test, ReversalSetup};
use coalflow::d_map;

use config::{ExperimentConfig, HSpec};

#[derive(Parser, Debug)]
#[command(name = "coalflow", version, about = "Coalescing flows on the circle: simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// experiment configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// overrides h with a single value
    #[arg(long, global = true)]
    h: Option<f64>,
    /// worker threads
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Parse and validate the coefficient field
    ValidateCoeffs,
    /// One explicit disturbance as JSON plus plot data of its graph
    SampleMap,
    /// Monte-Carlo moments over the h ladder
    Moments,
    /// Coalescing Euler–Maruyama ensembles
    SimulateSde,
    /// A disturbance flow and the paths from the configured starts
    SimulateDisturbance,
    /// KS distance of disturbance-flow marginals to the Euler reference
    PathConvergence,
    /// Binned drift and diffusivity of reversed disturbance flows
    ReverseCheck,
    /// Distances between two stored flows
    Metric,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ValidateCoeffs => "validate-coeffs",
            Command::SampleMap => "sample-map",
            Command::Moments => "moments",
            Command::SimulateSde => "simulate-sde",
            Command::SimulateDisturbance => "simulate-disturbance",
            Command::PathConvergence => "path-convergence",
            Command::ReverseCheck => "reverse-check",
            Command::Metric => "metric",
        }
    }
}

enum Status {
    Pass,
    StatisticalFailure(String),
}

struct Run<'a> {
    cfg: ExperimentConfig,
    config_dir: PathBuf,
    out: &'a Path,
    outputs: Vec<(String, String)>,
}

impl Run<'_> {
    /// Writes one output file and records its hash for the manifest.
    fn emit(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        let path = self.out.join(name);
        std::fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push((name.to_string(), hex::encode(Sha256::digest(&buf))));
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.emit(name, |b| writeln!(b, "{text}"))
    }
}

fn validate_coeffs(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let summary = json!({
        "a": field.a.to_string(),
        "b": field.b.to_string(),
        "a_prime": field.a_prime.to_string(),
        "window": field.window,
        "a_star": field.bounds.a_star,
        "a_upper": field.bounds.a_upper,
        "b_upper": field.bounds.b_upper,
        "lipschitz_estimate": field.lipschitz_estimate,
    });
    run.emit_json("field.json", &summary)?;
    Ok(Status::Pass)
}

fn sample_map(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let h = run.cfg.scalar_h()?;
    let t = run.cfg.t.unwrap_or(field.window.0);
    let theta = run.cfg.theta.unwrap_or_else(|| draw_thetas(run.cfg.seed, 1)[0]);
    let d = ExplicitDisturbance::new(&field, run.cfg.family, h, t, theta)?;
    let map = d.to_circle_map();
    run.emit_json(
        "map.json",
        &json!({ "h": h, "t": t, "theta": theta, "family": run.cfg.family, "w": d.w, "r": d.r, "map": map }),
    )?;
    let bps = map.breakpoints().to_vec();
    run.emit("map.dat", |out| {
        writeln!(out, "# x y")?;
        let last = bps[bps.len() - 1];
        writeln!(out, "{} {}", last.x - 1.0, last.y_plus - 1.0)?;
        for b in &bps {
            writeln!(out, "{} {}", b.x, b.y_minus)?;
            if b.y_plus != b.y_minus {
                writeln!(out, "{} {}", b.x, b.y_plus)?;
            }
        }
        writeln!(out, "{} {}", bps[0].x + 1.0, bps[0].y_minus + 1.0)
    })?;
    Ok(Status::Pass)
}

fn moments(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let t = run.cfg.t.unwrap_or(if run.cfg.reversed { -field.window.1 } else { field.window.0 });
    let x = run.cfg.x.unwrap_or(0.0);
    let n = run.cfg.samples.unwrap_or(MIN_MOMENT_SAMPLES);
    let grid = BoundsGrid::default();
    let mut reports = Vec::new();
    for h in run.cfg.ladder()? {
        let estimate = if run.cfg.reversed { estimate_reversed_moments } else { estimate_moments };
        reports.push(estimate(&field, run.cfg.family, h, t, x, n, run.cfg.seed, &grid)?);
    }
    run.emit("moments.csv", |out| MomentReport::write_csv(&reports, out))?;
    Ok(Status::Pass)
}

fn simulate_sde(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let starts = run.cfg.starts_or_default();
    let dt = run.cfg.dt.unwrap_or_else(|| max_step(&field));
    let t_end = field.window.1;
    let base = run.cfg.seed;
    let seeds = run.cfg.seeds.unwrap_or(1) as u64;
    let ensembles = (0..seeds)
        .into_par_iter()
        .map(|i| simulate_ensemble(&field, &starts, dt, t_end, base + i))
        .collect::<Result<Vec<_>, _>>()?;
    run.emit("ensemble.csv", |out| {
        for (i, e) in ensembles.iter().enumerate() {
            e.write_csv(base + i as u64, i == 0, &mut *out)?;
        }
        Ok(())
    })?;
    Ok(Status::Pass)
}

fn simulate_disturbance(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let h = run.cfg.scalar_h()?;
    let flow = build_disturbance_flow(&field, run.cfg.family, h, field.window, run.cfg.seed)?;
    let flow = if run.cfg.reversed { flow.time_reverse() } else { flow };
    let text = flow.to_json();
    run.emit("flow.json", |out| writeln!(out, "{text}"))?;
    let starts = if run.cfg.starts.is_empty() { vec![(flow.window().0, 0.0)] } else { run.cfg.starts.clone() };
    for (k, &(s, x)) in starts.iter().enumerate() {
        let path = flow.extract_path(s, x, Side::Right)?;
        run.emit(&format!("path_{k}.csv"), |out| path.write_csv(out))?;
    }
    Ok(Status::Pass)
}

fn path_convergence(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let ladder = run.cfg.ladder()?;
    let start = run.cfg.starts.first().copied().unwrap_or((field.window.0, 0.0));
    let dt = run.cfg.dt.unwrap_or_else(|| max_step(&field));
    let n = run.cfg.seeds.unwrap_or(10_000);
    let report = single_path_convergence_test(&field, run.cfg.family, &ladder, start, field.window.1, n, dt)?;
    run.emit("convergence.csv", |out| {
        writeln!(out, "h,ks_statistic,p_value,n_seeds")?;
        for r in &report.rungs {
            writeln!(out, "{},{},{},{}", r.h, r.ks.statistic, r.ks.p_value, n)?;
        }
        Ok(())
    })?;
    run.emit_json("convergence.json", &json!({ "report": report, "ks_threshold": run.cfg.ks_threshold }))?;
    let mut problems = Vec::new();
    if !report.monotone {
        let ds: Vec<String> = report.rungs.iter().map(|r| format!("h={}: {:.4}", r.h, r.ks.statistic)).collect();
        problems.push(format!("KS distances are not decreasing in h ({})", ds.join(", ")));
    }
    if let (Some(limit), Some(last)) = (run.cfg.ks_threshold, report.rungs.last()) {
        if last.ks.statistic >= limit {
            problems.push(format!("KS distance {:.4} at h={} is not below {limit}", last.ks.statistic, last.h));
        }
    }
    Ok(if problems.is_empty() { Status::Pass } else { Status::StatisticalFailure(problems.join("; ")) })
}

fn reverse_check(run: &mut Run) -> Result<Status> {
    let field = run.cfg.field()?;
    let mut setup = ReversalSetup::new(run.cfg.scalar_h()?, run.cfg.seeds.unwrap_or(2000));
    setup.family = run.cfg.family;
    setup.window = field.window;
    setup.base_seed = run.cfg.seed;
    if let Some(bins) = run.cfg.bins {
        setup.bins = bins;
    }
    if let Some(p) = run.cfg.points {
        setup.points = p;
    }
    if let Some(f) = run.cfg.horizon_factor {
        setup.horizon_factor = f;
    }
    let table = reversal_drift_experiment(&field, &setup)?;
    run.emit("drift_table.csv", |out| table.write_csv(out))?;
    run.emit_json("drift_table.json", &table)?;
    if table.passed() {
        return Ok(Status::Pass);
    }
    if table.bins.is_empty() {
        return Ok(Status::StatisticalFailure("no bin reached the minimum sample count".into()));
    }
    let failing: Vec<String> = table
        .failing()
        .map(|b| {
            format!(
                "bin (t={:.4}, x={:.4}): drift {:.4} vs {:.4} (tol {:.4}), variance {:.4} vs {:.4} (tol {:.4})",
                b.t_center,
                b.x_center,
                b.drift_rate,
                b.drift_target,
                b.drift_tolerance(),
                b.var_rate,
                b.var_target,
                b.var_tolerance()
            )
        })
        .collect();
    Ok(Status::StatisticalFailure(failing.join("; ")))
}

fn metric(run: &mut Run) -> Result<Status> {
    let Some((pa, pb)) = run.cfg.flows.clone() else {
        bail!("flows: metric needs two stored flow files");
    };
    let load = |p: &Path| -> Result<DiscreteFlow> {
        let path = run.config_dir.join(p);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading flow {}", path.display()))?;
        DiscreteFlow::from_json(&text).with_context(|| format!("parsing flow {}", path.display()))
    };
    let (a, b) = (load(&pa)?, load(&pb)?);
    let n = run.cfg.n.unwrap_or(1);
    let grid = run.cfg.grid.unwrap_or(64);
    let lo = a.window().0.max(b.window().0);
    let hi = a.window().1.min(b.window().1);
    let mut rows: Vec<(&str, String)> = Vec::new();
    if lo < hi {
        let whole = Interval::left_open(lo, hi);
        rows.push(("d_map_common_window", d_map(&a.flow_map(&whole)?, &b.flow_map(&whole)?).to_string()));
    }
    rows.push(("d_C", flow_distance_c(&a, &b, n, grid).map_or_else(|e| format!("unavailable: {e}"), |v| v.to_string())));
    rows.push((
        "d_D_upper",
        flow_distance_d_upper(&a, &b, n).map_or_else(|e| format!("unavailable: {e}"), |v| v.to_string()),
    ));
    run.emit("metric.csv", |out| {
        writeln!(out, "quantity,value")?;
        for (k, v) in &rows {
            writeln!(out, "{k},\"{v}\"")?;
        }
        Ok(())
    })?;
    Ok(Status::Pass)
}

fn execute(cli: &Cli) -> Result<Status> {
    let Some(config_path) = &cli.config else {
        bail!("--config is required");
    };
    let (mut cfg, bytes) = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(h) = cli.h {
        cfg.h = Some(HSpec::Scalar(h));
        cfg.check()?;
    }
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let mut run = Run {
        config_dir: config_path.parent().map(Path::to_path_buf).unwrap_or_default(),
        cfg,
        out: &cli.out,
        outputs: Vec::new(),
    };
    let status = match cli.command {
        Command::ValidateCoeffs => validate_coeffs(&mut run),
        Command::SampleMap => sample_map(&mut run),
        Command::Moments => moments(&mut run),
        Command::SimulateSde => simulate_sde(&mut run),
        Command::SimulateDisturbance => simulate_disturbance(&mut run),
        Command::PathConvergence => path_convergence(&mut run),
        Command::ReverseCheck => reverse_check(&mut run),
        Command::Metric => metric(&mut run),
    }?;
    let manifest = json!({
        "command": cli.command.name(),
        "config": config_path.display().to_string(),
        "config_sha256": hex::encode(Sha256::digest(&bytes)),
        "seed": run.cfg.seed,
        "h": run.cfg.h.as_ref().map(HSpec::values),
        "versions": { "coalflow": coalflow::VERSION, "coalflow-cli": env!("CARGO_PKG_VERSION") },
        "status": match &status { Status::Pass => "pass", Status::StatisticalFailure(_) => "statistical-failure" },
        "outputs": run.outputs.iter().map(|(f, h)| json!({ "file": f, "sha256": h })).collect::<Vec<_>>(),
    });
    let file = File::create(cli.out.join("manifest.json")).context("writing manifest.json")?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::StatisticalFailure(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
