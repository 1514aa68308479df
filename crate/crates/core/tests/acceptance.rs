//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coalflow::disturbance::{
    build_disturbance_flow, build_reversed_disturbance_flow, family_bounds, quadrature_moments,
    BoundsGrid, Family,
};
use coalflow::dsl::{parse_expression, CoefficientField, DslError};
use coalflow::sde::{
    analytic_transition_cdf, log_transform_check, sample_preimages, simulate_ensemble,
    QuadraticModel, QUADRATIC_STEPS,
};
use coalflow::stats::ks_one_sample;
use coalflow::verify::{
    cross_product_test, reversal_drift_experiment, single_path_convergence_test, DriftTable,
    ReversalSetup,
};
use coalflow::{d_map, random_circle_map, CircleMap, Side};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn field(a: &str, b: &str) -> CoefficientField {
    CoefficientField::parse(a, b, (0.0, 1.0)).expect("valid field")
}

fn sin_field() -> CoefficientField {
    field("1 + 0.3*sin(2*pi*x)", "0")
}

fn map_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let maps: Vec<CircleMap> = (0..1000)
        .map(|i| random_circle_map(&mut rng, 1 + i % 12, 0.3, 0.3))
        .collect();
    let mut failures = Vec::new();
    let mut worst_iso = 0.0f64;
    for (i, m) in maps.iter().enumerate() {
        if !m.inverse().inverse().approx_eq(m, 1e-12) {
            failures.push(format!("double inverse of map {i}"));
        }
        let g = &maps[(i * 7 + 3) % maps.len()];
        let gap = (d_map(m, g) - d_map(&m.inverse(), &g.inverse())).abs();
        worst_iso = worst_iso.max(gap);
        if gap > 1e-12 {
            failures.push(format!("isometry gap {gap:e} for maps {i}"));
        }
        let chi = m.chi_transform();
        let pts = chi.points();
        let lipschitz = (0..pts.len()).all(|j| {
            let (t0, v0) = pts[j];
            let (t1, v1) = pts
                .get(j + 1)
                .copied()
                .unwrap_or((pts[0].0 + 1.0, pts[0].1));
            (v1 - v0).abs() <= (t1 - t0) + 1e-12
        });
        if !lipschitz {
            failures.push(format!("chi slope outside [-1, 1] for map {i}"));
        }
        // dyadic points, so that x + n is exact
        for k in 0..64 {
            let x = k as f64 / 64.0 + 1.0 / 1024.0;
            for side in [Side::Left, Side::Right] {
                for n in [-3.0, -1.0, 1.0, 2.0] {
                    if m.evaluate(x + n, side) != m.evaluate(x, side) + n {
                        failures.push(format!("degree-1 failure for map {i} at {x} + {n}"));
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "1000 maps, worst isometry gap {worst_iso:.1e}, {} failures{}",
            failures.len(),
            failures.first().map_or(String::new(), |f| format!(" (first: {f})"))
        ),
    )
}

fn moment_limits() -> Outcome {
    let bm = field("1", "0");
    let sin = sin_field();
    let h = 1e-4;
    let m0 = quadrature_moments(&bm, Family::Full, h, 0.5, 0.0).unwrap();
    let m1 = quadrature_moments(&sin, Family::CollapseOnly, h, 0.5, 0.0).unwrap();
    let mut ok = (m0.a_h - 1.0).abs() <= 0.02 && m0.b_h.abs() <= 1e-3;
    ok &= (m1.b_h / (0.6 * PI) - 1.0).abs() <= 0.05;
    ok &= (m1.b_hat / (-0.3 * PI) - 1.0).abs() <= 0.05;
    let mut detail = format!(
        "a_h={:.5} b_h={:.1e} (a=1); b_h(0)={:.4} vs {:.4}, b^_h(0)={:.4} vs {:.4}",
        m0.a_h,
        m0.b_h,
        m1.b_h,
        0.6 * PI,
        m1.b_hat,
        -0.3 * PI
    );
    let grid = BoundsGrid::default();
    let constant = field("1", "0.5");
    for (name, f, family) in [
        ("sin collapse-only", &sin, Family::CollapseOnly),
        ("a=1 b=0.5", &constant, Family::Full),
    ] {
        let ladder: Vec<_> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&h| family_bounds(f, family, h, &grid, false).unwrap())
            .collect();
        let decreasing = |g: fn(&coalflow::disturbance::FamilyBounds) -> f64| {
            ladder.windows(2).all(|w| g(&w[1]) < g(&w[0]))
        };
        let all = decreasing(|b| b.b_sup)
            && decreasing(|b| b.a_sup)
            && decreasing(|b| b.m_h)
            && decreasing(|b| b.lambda_h);
        ok &= all;
        detail += &format!(
            "; {name}: B {:.2e}/{:.2e}/{:.2e} A {:.2e}/{:.2e}/{:.2e} M {:.3}/{:.3}/{:.3} λ {:.3}/{:.3}/{:.3}",
            ladder[0].b_sup,
            ladder[1].b_sup,
            ladder[2].b_sup,
            ladder[0].a_sup,
            ladder[1].a_sup,
            ladder[2].a_sup,
            ladder[0].m_h,
            ladder[1].m_h,
            ladder[2].m_h,
            ladder[0].lambda_h,
            ladder[1].lambda_h,
            ladder[2].lambda_h
        );
    }
    outcome(ok, detail)
}

fn single_path_convergence() -> Outcome {
    let bm = field("1", "0");
    let r = single_path_convergence_test(
        &bm,
        Family::Full,
        &[1e-2, 1e-3, 1e-4],
        (0.0, 0.0),
        1.0,
        10_000,
        1e-3,
    )
    .unwrap();
    let last = r.rungs.last().unwrap().ks.statistic;
    let ladder: Vec<String> = r
        .rungs
        .iter()
        .map(|g| format!("h={:.0e}: D={:.4}", g.h, g.ks.statistic))
        .collect();
    outcome(
        last < 0.03 && r.monotone,
        format!("{} (monotone: {})", ladder.join(", "), r.monotone),
    )
}

fn coalescence() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, f, starts) in [
        ("brownian", field("1", "0"), [(0.0, 0.0), (0.0, 0.3)]),
        (
            "sin/cos",
            field("1 + 0.3*sin(2*pi*x)", "0.5*cos(2*pi*x)"),
            [(0.0, 0.1), (0.2, 0.6)],
        ),
    ] {
        let ensembles: Vec<_> = (0..1000u64)
            .map(|s| simulate_ensemble(&f, &starts, 1e-3, 1.0, s).unwrap())
            .collect();
        let mut exact = true;
        let mut met = 0;
        for e in &ensembles {
            if let Some(t) = e.collision_time(0, 1) {
                met += 1;
                let g = e.times.partition_point(|&s| s < t);
                exact &= (g..e.times.len())
                    .all(|i| e.paths[0].position_at(i) == e.paths[1].position_at(i));
            }
        }
        let r = cross_product_test(&ensembles, &f, 10).unwrap();
        let p = &r.pairs[0];
        ok &= exact && r.passed();
        detail.push(format!(
            "{name}: {met} merged, identical after merge {exact}, max|z| {:.2}, pre-collision covariance {}, post ratio {}",
            p.max_abs_z,
            p.pre_covariance
                .map_or("n/a".into(), |(m, ci)| format!("{m:.4} ± {ci:.4}")),
            p.post_ratio.map_or("n/a".into(), |v| format!("{v:.4}"))
        ));
    }
    outcome(ok, detail.join("; "))
}

fn analytic_oracle() -> Outcome {
    let p = QuadraticModel {
        a: 1.0,
        a_prime: 0.5,
        b: 0.0,
        h: 0.01,
    };
    let sample = sample_preimages(&p, 100_000, QUADRATIC_STEPS, 5);
    let ks = ks_one_sample(&sample, |x| {
        analytic_transition_cdf(&p, x, 0.0).unwrap_or(if x > 0.0 { 1.0 } else { 0.0 })
    })
    .unwrap();
    let report = log_transform_check(&p, 100_000, 6).unwrap();
    outcome(
        ks.statistic < 0.01 && report.passed(),
        format!(
            "KS vs F_y {:.4}; log transform: mean {:.2e} vs {:.2e} ±{:.1e}, variance rel err {:.4}, KS {:.4}",
            ks.statistic,
            report.mean_increment,
            report.expected_mean,
            report.mean_ci99,
            report.variance_rel_err,
            report.ks.statistic
        ),
    )
}

fn describe(table: &DriftTable) -> String {
    table
        .bins
        .iter()
        .map(|b| {
            format!(
                "({:.2},{:.2}) drift {:.3}/{:.3}±{:.3} var {:.3}/{:.3}{}",
                b.t_center,
                b.x_center,
                b.drift_rate,
                b.drift_target,
                b.ci_radius,
                b.var_rate,
                b.var_target,
                if b.pass { "" } else { " FAIL" }
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn reversal() -> Outcome {
    let setup = ReversalSetup::new(1e-4, 2000);
    let bm = reversal_drift_experiment(&field("1", "0"), &setup).unwrap();
    let ok_i = bm.passed()
        && bm
            .bins
            .iter()
            .all(|b| b.drift_ci_contains(0.0) && (b.var_rate - 1.0).abs() <= 0.05);
    let sin = reversal_drift_experiment(&sin_field(), &setup).unwrap();
    let ok_ii = sin.passed();
    let shifted = reversal_drift_experiment(&field("1", "0.5"), &setup).unwrap();
    let ok_iii = shifted.passed()
        && shifted
            .bins
            .iter()
            .all(|b| (b.drift_target + 0.5).abs() < 1e-12);
    outcome(
        ok_i && ok_ii && ok_iii,
        format!(
            "(i) {ok_i}: {}\n    (ii) {ok_ii}: {}\n    (iii) {ok_iii}: {}",
            describe(&bm),
            describe(&sin),
            describe(&shifted)
        ),
    )
}

fn structural_reversal() -> Outcome {
    let fields = [
        (field("1", "0"), Family::Full),
        (sin_field(), Family::CollapseOnly),
        (
            field("1 + 0.3*sin(2*pi*x)", "0.5*cos(2*pi*x)"),
            Family::Full,
        ),
        (
            field("1 + 0.2*cos(2*pi*(x - t))", "0.3*sin(2*pi*x)*t"),
            Family::Full,
        ),
    ];
    let mut events = 0;
    let mut failures = Vec::new();
    for k in 0..100u64 {
        let (f, family) = &fields[k as usize % fields.len()];
        let h = [3e-3, 1e-3, 3e-4][k as usize % 3];
        let window = (0.1 * (k % 5) as f64, 0.1 * (k % 5) as f64 + 0.3);
        let forward = build_disturbance_flow(f, *family, h, window, 1000 + k).unwrap();
        let reversed = forward.time_reverse();
        let direct = build_reversed_disturbance_flow(f, *family, h, window, 1000 + k).unwrap();
        events += direct.len();
        let same = reversed.window() == direct.window()
            && reversed.len() == direct.len()
            && reversed
                .events()
                .iter()
                .zip(direct.events())
                .all(|((s, m), (t, g))| s == t && m.approx_eq(g, 1e-12));
        if !same {
            failures.push(k);
        }
    }
    outcome(
        failures.is_empty(),
        format!("100 flows, {events} events, failing flows {failures:?}"),
    )
}

const CORPUS: &[&str] = &[
    "1 + 0.3*sin(2*pi*x)",
    "0.5*cos(2*pi*x)",
    "exp(sin(2*pi*x))",
    "2 + cos(2*pi*x)*cos(2*pi*x)",
    "1/(2 + sin(2*pi*x))",
    "exp(0.5*cos(4*pi*x)) - 1",
    "sin(2*pi*x)*cos(2*pi*x) + t",
    "1.5 + 0.2*sin(2*pi*(x - t))",
    "(1 + 0.1*sin(6*pi*x))*(1 + 0.1*sin(6*pi*x))*(1 + 0.1*sin(6*pi*x))",
    "sin(sin(2*pi*x))",
    "-x*0 + 0.25*sin(2*pi*x)/(1.5 + cos(2*pi*x))",
    "exp(-sin(2*pi*x)*sin(2*pi*x)) * (1 + t*t)",
    "cos(2*pi*x + 0.3)*cos(2*pi*x + 0.3) - 0.1*sin(8*pi*x)",
    "abs(t - 0.5) + max(t, 1)*cos(2*pi*x)",
];

fn dsl_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for src in CORPUS {
        let e = parse_expression(src).unwrap();
        let again = parse_expression(&e.to_string()).unwrap();
        if again != e {
            failures.push(format!("round trip of {src}"));
        }
        let d = e.differentiate_x().unwrap();
        for i in 0..50 {
            let (t, x) = (0.37, i as f64 / 50.0 + 0.003);
            let step = 1e-5;
            let fd = (e.evaluate(t, x + step).unwrap() - e.evaluate(t, x - step).unwrap())
                / (2.0 * step);
            let sym = d.evaluate(t, x).unwrap();
            let rel = (sym - fd).abs() / sym.abs().max(1.0);
            worst = worst.max(rel);
            if rel > 1e-6 {
                failures.push(format!("derivative of {src} at {x}: {sym} vs {fd}"));
            }
        }
    }
    for (a, b) in [
        ("x", "0"),
        ("1", "x"),
        ("1 + 0.3*sin(3*x)", "0"),
        ("1", "cos(pi*x)"),
    ] {
        if !matches!(
            CoefficientField::parse(a, b, (0.0, 1.0)),
            Err(DslError::NotPeriodic { .. })
        ) {
            failures.push(format!("accepted non-periodic ({a}, {b})"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} expressions, worst derivative error {worst:.1e}, failures {failures:?}",
            CORPUS.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("1 map algebra", Duration::from_secs(10), map_algebra),
        ("2 moment limits", Duration::from_secs(120), moment_limits),
        (
            "3 single-path convergence",
            Duration::from_secs(300),
            single_path_convergence,
        ),
        ("4 coalescence", Duration::from_secs(120), coalescence),
        (
            "5 analytic oracle",
            Duration::from_secs(60),
            analytic_oracle,
        ),
        ("6 reversal experiment", Duration::from_secs(600), reversal),
        (
            "7 structural reversal",
            Duration::from_secs(10),
            structural_reversal,
        ),
        ("8 dsl", Duration::from_secs(5), dsl_suite),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {name}: {} [{:.1}s of {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
