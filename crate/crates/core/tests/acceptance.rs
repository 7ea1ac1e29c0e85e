//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::process::Command;

use ndarray::{array, Array1, Array2, Axis};

use irpushpull::digraph::{
    build_column_stochastic, build_laplacian_column, build_laplacian_mixing, build_row_stochastic, make_topology,
    perron_pair, validate_assumptions, MixingPair, TopologyKind,
};
use irpushpull::engine::{EngineError, Observer, PushPull, Schedule, Snapshot};
use irpushpull::harness::{preset, Experiment, ProblemSpec, RunOutput, Variant, PRESET_NAMES};
use irpushpull::metrics::{rate_slope, MetricRow};
use irpushpull::oracle::centralized_ir_descent;
use irpushpull::problems::{blur_operator, gaussian_kernel, make_least_norm_ls};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

struct PresetRuns {
    name: &'static str,
    exp: Experiment,
    ir: RunOutput,
    fixed: Option<RunOutput>,
    repeat_identical: bool,
}

fn run_preset(name: &'static str) -> PresetRuns {
    let exp = preset(name).unwrap().build().unwrap();
    let ir = exp.run(Variant::Regularized, false).unwrap();
    let fixed = exp.config.baseline.is_some().then(|| exp.run(Variant::Fixed, false).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let again = pool.install(|| exp.run(Variant::Regularized, true)).unwrap();
    let repeat_identical = ir.to_csv().unwrap() == again.to_csv().unwrap();
    PresetRuns {
        name,
        exp,
        ir,
        fixed,
        repeat_identical,
    }
}

fn find<'a>(runs: &'a [PresetRuns], name: &str) -> &'a PresetRuns {
    runs.iter().find(|r| r.name == name).unwrap()
}

fn series(rows: &[MetricRow], pick: impl Fn(&MetricRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|r| pick(r).map(|v| (r.k as f64, v))).collect()
}

fn tracking_identity(runs: &[PresetRuns]) -> Outcome {
    let worst = runs
        .iter()
        .flat_map(|r| std::iter::once(&r.ir).chain(r.fixed.iter()))
        .map(|o| o.max_tracking_ratio)
        .fold(0.0f64, f64::max);
    let observed: usize = runs.iter().map(|r| r.ir.rows.len()).sum();
    outcome(
        worst <= 1e-10,
        format!("max tracking_residual/(1+|Y|_2) = {worst:.3e} over {observed} observations"),
    )
}

/// Roots by brute-force reachability on the support of `b` (edge `j → i`
/// when `b_ij > 0`).
fn brute_force_roots(b: &Array2<f64>) -> BTreeSet<usize> {
    let m = b.nrows();
    let mut reach = Array2::from_shape_fn((m, m), |(i, j)| i == j || b[[j, i]] > 0.0);
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                if reach[[i, k]] && reach[[k, j]] {
                    reach[[i, j]] = true;
                }
            }
        }
    }
    (0..m).filter(|&i| (0..m).all(|j| reach[[i, j]])).collect()
}

fn support(x: &Array1<f64>) -> BTreeSet<usize> {
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (0..x.len()).filter(|&i| x[i] > 1e-12 * scale).collect()
}

fn mixing_contracts() -> Outcome {
    let mut cases = 0;
    let mut failures = Vec::new();
    for kind in [TopologyKind::Ring, TopologyKind::Line, TopologyKind::Star] {
        for m in 1..=10 {
            let g = make_topology(kind, m, 0, None).unwrap();
            let push = if kind == TopologyKind::Ring { g.clone() } else { g.reversed() };
            let weights: Vec<f64> = (0..m).map(|i| 0.5 + 0.1 * i as f64).collect();
            let mut pairs = vec![(
                "rule",
                build_row_stochastic(&g, &weights).unwrap(),
                build_column_stochastic(&push, &weights).unwrap(),
            )];
            if m > 1 {
                pairs.push((
                    "laplacian",
                    build_laplacian_mixing(&g).unwrap(),
                    build_laplacian_column(&push).unwrap(),
                ));
            }
            for (rule, r, c) in pairs {
                cases += 1;
                let tag = format!("{kind} m={m} {rule}");
                let row_err = r.sum_axis(Axis(1)).iter().fold(0.0f64, |a, s| a.max((s - 1.0).abs()));
                let col_err = c.sum_axis(Axis(0)).iter().fold(0.0f64, |a, s| a.max((s - 1.0).abs()));
                if row_err > 1e-12 || col_err > 1e-12 {
                    failures.push(format!("{tag}: stochasticity {row_err:.1e}/{col_err:.1e}"));
                }
                if !validate_assumptions(&r, &c).all_passed() {
                    failures.push(format!("{tag}: assumption checks"));
                    continue;
                }
                let MixingPair { u, v, .. } = perron_pair(&r, &c).unwrap();
                let left = (&u.dot(&r) - &u).iter().fold(0.0f64, |a, e| a.max(e.abs()));
                let right = (&c.dot(&v) - &v).iter().fold(0.0f64, |a, e| a.max(e.abs()));
                if left > 1e-10 || right > 1e-10 {
                    failures.push(format!("{tag}: eigen residuals {left:.1e}/{right:.1e}"));
                }
                if support(&u) != brute_force_roots(&r) {
                    failures.push(format!("{tag}: supp(u) != roots(G_R)"));
                }
                if support(&v) != brute_force_roots(&c.t().to_owned()) {
                    failures.push(format!("{tag}: supp(v) != roots(G_C^T)"));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{cases} ring/line/star matrix pairs, m = 1..10")
        } else {
            failures.join("; ")
        },
    )
}

fn schedule_properties() -> Outcome {
    let mut failures = Vec::new();
    for (a, b) in [(0.4, 0.35), (0.2, 0.18)] {
        let s = Schedule::diminishing(1.0, 1.0, a, b).unwrap();
        let mut prev = (s.gamma_hat(0), s.lambda(0), s.lambda_drift(0));
        for k in 1..=1_000_000usize {
            let (g, l, d) = (s.gamma_hat(k), s.lambda(k), s.lambda_drift(k));
            let drift_prev = prev.2;
            let ok = g < prev.0
                && l < prev.1
                && d <= drift_prev
                && drift_prev <= 1.0 / (k + 1) as f64
                && g > 0.0
                && l > 0.0;
            if !ok {
                failures.push(format!("(a,b)=({a},{b}) fails at k={k}"));
                break;
            }
            prev = (g, l, d);
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "monotone gamma_hat, lambda, Lambda and Lambda_{k-1} <= 1/(k+1) for k <= 1e6, (a,b) in {(0.4,0.35),(0.2,0.18)}"
                .to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn step_bracketing(runs: &[PresetRuns]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in runs {
        let b = r.ir.summary.bracket;
        let good = b.min_lower_slack >= 0.0 && b.min_upper_slack >= 0.0 && b.rounds == r.exp.config.iterations;
        ok &= good;
        parts.push(format!(
            "{}: alpha/gamma_hat in [{:.4}, {:.4}] within [{:.4}, {:.4}]",
            r.name, b.min_ratio, b.max_ratio, b.theta, b.upper
        ));
    }
    outcome(ok, parts.join("; "))
}

struct Trajectory(Vec<Array1<f64>>);

impl Observer for Trajectory {
    fn observe(&mut self, snap: &Snapshot<'_>) -> Result<(), EngineError> {
        self.0.push(snap.state.x.row(0).to_owned());
        Ok(())
    }
}

fn single_agent_equivalence() -> Outcome {
    let p = make_least_norm_ls(vec![(array![[2.0]], array![3.0])]).unwrap();
    let mix = MixingPair::single_agent();
    let sched = Schedule::diminishing(0.2, 0.5, 0.4, 0.35).unwrap();
    let k = 1000;
    let engine = PushPull::new(&p, &mix, sched.clone()).unwrap();
    let mut traj = Trajectory(Vec::new());
    engine.run(Array2::zeros((1, 1)), k, 1, &mut [&mut traj]).unwrap();
    let reference = centralized_ir_descent(&p, &sched, Array1::zeros(1), k).unwrap();
    let worst = traj
        .0
        .iter()
        .zip(&reference)
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0f64, f64::max);
    let ok = traj.0.len() == k + 1 && reference.len() == k + 1 && worst <= 1e-12;
    outcome(ok, format!("max |engine - centralized| = {worst:.3e} over {k} steps"))
}

fn least_norm_convergence(runs: &[PresetRuns]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["sensor", "sensor-laplacian"] {
        let r = find(runs, name);
        let last = r.ir.final_row();
        let dist = last.dist_xstar.unwrap_or(f64::INFINITY);
        let slope = rate_slope(&series(&r.ir.rows, |row| row.subopt_g), (1e3, 1e5)).unwrap_or(f64::NAN);
        let good = last.k == 100_000 && dist <= 1e-2 && last.consensus_x <= 1e-3 && slope <= -0.25;
        ok &= good;
        parts.push(format!(
            "{name}: K={} dist_xstar={dist:.3e} consensus_x={:.3e} subopt_g slope={slope:.3}",
            last.k, last.consensus_x
        ));
    }
    outcome(ok, parts.join("; "))
}

fn constrained_model(runs: &[PresetRuns]) -> Outcome {
    let r = find(runs, "constrained-qp");
    let infeas = series(&r.ir.rows, |row| row.infeas);
    let slope = rate_slope(&infeas, (1e4, 1e5)).unwrap_or(f64::NAN);
    let samples: Vec<f64> = (0..=8)
        .map(|i| {
            let k = 10f64.powf(4.0 + i as f64 / 8.0);
            let k = (k / r.exp.config.stride as f64).round() as usize * r.exp.config.stride;
            r.ir.rows.iter().find(|row| row.k == k).and_then(|row| row.infeas).unwrap()
        })
        .collect();
    let monotone = samples.windows(2).all(|w| w[1] <= w[0]);
    let subopt = |k: usize| r.ir.rows.iter().find(|row| row.k == k).and_then(|row| row.subopt_f).unwrap().abs();
    let last = r.ir.final_row();
    let final_subopt = last.subopt_f.unwrap().abs();
    let ok = (-0.45..=-0.10).contains(&slope) && monotone && final_subopt <= 1e-2 && final_subopt < subopt(1000);
    outcome(
        ok,
        format!(
            "infeas slope over [1e4,1e5] = {slope:.3}, monotone on log-spaced samples = {monotone}, |subopt_f| {:.3e} at k=1e3 -> {final_subopt:.3e} at K={}",
            subopt(1000),
            last.k
        ),
    )
}

fn baseline_comparison(runs: &[PresetRuns]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["sensor", "sensor-laplacian"] {
        let r = find(runs, name);
        let fixed = r.fixed.as_ref().unwrap();
        let p = &r.exp.problem;
        let (g_ir, g_fx) = (p.g(r.ir.xbar.view()), p.g(fixed.xbar.view()));
        let (f_ir, f_fx) = (p.f(r.ir.xbar.view()), p.f(fixed.xbar.view()));
        let d_ir = r.ir.final_row().dist_xstar.unwrap();
        let d_fx = fixed.final_row().dist_xstar.unwrap();
        let good = g_ir < g_fx && d_fx >= 2.0 * d_ir;
        ok &= good;
        parts.push(format!(
            "{name}: objective sum|z_i - H_i x|^2/2 IR {g_ir:.3e} vs fixed {g_fx:.3e}, dist_xstar IR {d_ir:.3e} vs fixed {d_fx:.3e} (ratio {:.1}); least-norm term |x|^2 IR {f_ir:.4} vs fixed {f_fx:.4}",
            d_fx / d_ir
        ));
    }
    outcome(ok, parts.join("; "))
}

fn deblur(runs: &[PresetRuns]) -> Outcome {
    let r = find(runs, "deblur");
    let ProblemSpec::Deblur {
        width,
        sigma,
        radius,
        mode,
        ..
    } = r.exp.config.problem
    else {
        unreachable!()
    };
    let image = r.exp.truth.as_ref().unwrap();
    let blur = blur_operator(width, &gaussian_kernel(sigma, radius), mode).unwrap();
    let blurred = blur.dot(image);
    let norm = |v: &Array1<f64>| v.dot(v).sqrt();
    let blurred_err = norm(&(&blurred - image)) / norm(image);
    let err = norm(&(&r.ir.xbar - image)) / norm(image);
    let k = r.ir.final_row().k;
    outcome(
        k == 10_000 && err < blurred_err,
        format!("relative error at K={k}: recovered {err:.4} vs blurred {blurred_err:.4}"),
    )
}

fn determinism(runs: &[PresetRuns]) -> Outcome {
    let mut ok = runs.iter().all(|r| r.repeat_identical);
    let bin = env!("CARGO_BIN_EXE_irpp");
    let invoke = |threads: &str| {
        Command::new(bin)
            .args(["run", "--preset", "least-norm", "--threads", threads])
            .output()
            .unwrap()
    };
    let (a, b) = (invoke("1"), invoke("2"));
    let cli_same = a.status.success() && b.status.success() && a.stdout == b.stdout && !a.stdout.is_empty();
    ok &= cli_same;
    let differing: Vec<&str> = runs.iter().filter(|r| !r.repeat_identical).map(|r| r.name).collect();
    outcome(
        ok,
        format!(
            "{} presets rerun on 3 threads byte-identical (differing: {differing:?}); two irpp invocations identical = {cli_same}",
            runs.len()
        ),
    )
}

fn main() {
    let runs: Vec<PresetRuns> = std::thread::scope(|s| {
        let handles: Vec<_> = PRESET_NAMES.iter().map(|&n| s.spawn(move || run_preset(n))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let criteria: Vec<(&str, Outcome)> = vec![
        ("gradient-tracking identity", tracking_identity(&runs)),
        ("mixing and eigenvector contracts", mixing_contracts()),
        ("schedule properties", schedule_properties()),
        ("step-size bracketing", step_bracketing(&runs)),
        ("single-agent oracle equivalence", single_agent_equivalence()),
        ("least-norm convergence", least_norm_convergence(&runs)),
        ("constrained model", constrained_model(&runs)),
        ("regularized vs fixed-regularization baseline", baseline_comparison(&runs)),
        ("deblur preset", deblur(&runs)),
        ("determinism", determinism(&runs)),
    ];
    let mut failed = 0;
    for (i, (title, o)) in criteria.iter().enumerate() {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {} [{title}]: {status} ({})", i + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
