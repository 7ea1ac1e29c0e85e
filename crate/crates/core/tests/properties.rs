use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

use irpushpull::digraph::{
    build_column_stochastic, build_laplacian_column, build_laplacian_mixing, build_row_stochastic, make_topology,
    perron_pair, roots, validate_assumptions, TopologyKind,
};
use irpushpull::engine::{EngineOptions, PushPull, Schedule};
use irpushpull::metrics::{consensus_violation, rate_slope, read_csv, write_csv, MetricRow};
use irpushpull::oracle::{bilevel_solution, tikhonov_point};
use irpushpull::problems::{data, make_least_norm_ls};

fn max_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_digraph_mixing_contracts(m in 2usize..9, seed in 0u64..1000, p in 0.1f64..0.9, laplacian: bool) {
        let g = make_topology(TopologyKind::Random, m, seed, Some(p)).unwrap();
        prop_assert!(g.is_strongly_connected());
        prop_assert_eq!(roots(&g).len(), m);
        let (r, c) = if laplacian {
            (build_laplacian_mixing(&g).unwrap(), build_laplacian_column(&g).unwrap())
        } else {
            let w = vec![1.0; m];
            (build_row_stochastic(&g, &w).unwrap(), build_column_stochastic(&g, &w).unwrap())
        };
        prop_assert!(max_abs(r.sum_axis(Axis(1)).iter().map(|s| s - 1.0)) <= 1e-12);
        prop_assert!(max_abs(c.sum_axis(Axis(0)).iter().map(|s| s - 1.0)) <= 1e-12);
        prop_assert!(validate_assumptions(&r, &c).all_passed());
        let pair = perron_pair(&r, &c).unwrap();
        prop_assert!(max_abs((pair.u.dot(&r) - &pair.u).into_iter()) <= 1e-10);
        prop_assert!(max_abs((c.dot(&pair.v) - &pair.v).into_iter()) <= 1e-10);
        prop_assert!((pair.u.sum() - m as f64).abs() <= 1e-9);
        prop_assert!((pair.v.sum() - m as f64).abs() <= 1e-9);
        prop_assert!(pair.u.iter().chain(pair.v.iter()).all(|&x| x > 0.0));
    }

    #[test]
    fn tracking_and_weighted_average_identities(m in 2usize..6, n in 1usize..5, seed in 0u64..500) {
        let (blocks, _) = data::sensor_blocks(m, n, 2, Some(0.1), seed);
        let p = make_least_norm_ls(blocks).unwrap();
        let g = make_topology(TopologyKind::Random, m, seed, Some(0.5)).unwrap();
        let w = vec![1.0; m];
        let mix = perron_pair(&build_row_stochastic(&g, &w).unwrap(), &build_column_stochastic(&g, &w).unwrap()).unwrap();
        let sched = Schedule::diminishing(0.02, 0.1, 0.4, 0.35).unwrap();
        let engine = PushPull::new(&p, &mix, sched.clone()).unwrap().with_options(EngineOptions {
            parallel: false,
            check_invariants: true,
        });
        let x0 = Array2::from_shape_fn((m, n), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let mut state = engine.init_state(x0).unwrap();
        for _ in 0..60 {
            let next = engine.step(&state).unwrap();
            let params = sched.at(state.k, &mix).unwrap();
            let ybar = next.y.mean_axis(Axis(0)).unwrap();
            let gbar = p
                .eval_regularized_gradient(next.x.view(), sched.lambda(next.k))
                .unwrap()
                .mean_axis(Axis(0))
                .unwrap();
            let ynorm = next.y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(max_abs((&ybar - &gbar).into_iter()) <= 1e-10 * (1.0 + ynorm));
            let mut predicted = state.weighted_average(&mix.u);
            for i in 0..m {
                predicted.scaled_add(-mix.u[i] * params.gammas[i] / m as f64, &state.y.row(i));
            }
            prop_assert!(max_abs((next.weighted_average(&mix.u) - predicted).into_iter()) <= 1e-10);
            state = next;
        }
    }

    #[test]
    fn tikhonov_trajectory(seed in 0u64..200, n in 3usize..7) {
        // Underdetermined so that argmin g is an affine set.
        let (blocks, _) = data::sensor_blocks(2, n, 1, None, seed);
        let p = make_least_norm_ls(blocks).unwrap();
        let xstar = bilevel_solution(&p, 1e-12).unwrap().point();
        let sched = Schedule::diminishing(1.0, 1.0, 0.4, 0.35).unwrap();
        let mu_f = p.constants().mu_f;
        let mut prev = tikhonov_point(&p, sched.lambda(0), 1e-12).unwrap().point();
        let mut prev_dist = (&prev - &xstar).mapv(|v| v * v).sum().sqrt();
        for k in 1..40 {
            let lam = sched.lambda(k);
            let x = tikhonov_point(&p, lam, 1e-12).unwrap().point();
            prop_assert!(p.f(x.view()) <= p.f(xstar.view()) + 1e-9);
            prop_assert!(p.g(x.view()) + 1e-12 >= p.g(xstar.view()));
            let dist = (&x - &xstar).mapv(|v| v * v).sum().sqrt();
            prop_assert!(dist <= prev_dist + 1e-9);
            let drift = sched.lambda_drift(k - 1);
            let step = (&x - &prev).mapv(|v| v * v).sum().sqrt();
            let grad = p.grad_f(prev.view()).mapv(|v| v * v).sum().sqrt();
            prop_assert!(step <= drift / (1.0 - drift) * grad / mu_f + 1e-9);
            prev = x;
            prev_dist = dist;
        }
    }

    #[test]
    fn rate_slope_recovers_power_laws(c in 0.1f64..10.0, e in 0.05f64..2.0) {
        let series: Vec<(f64, f64)> = (1..=200).map(|i| {
            let k = 10.0 * i as f64;
            (k, c * k.powf(-e))
        }).collect();
        let s = rate_slope(&series, (100.0, 2000.0)).unwrap();
        prop_assert!((s + e).abs() < 1e-9);
    }

    #[test]
    fn consensus_violation_vanishes_on_consensus(row in proptest::collection::vec(-10.0f64..10.0, 1..6), m in 1usize..6) {
        let x = Array2::from_shape_fn((m, row.len()), |(_, j)| row[j]);
        prop_assert!(consensus_violation(x.view()) <= 1e-12);
    }

    #[test]
    fn csv_round_trip(vals in proptest::collection::vec((-1e6f64..1e6, proptest::option::of(1e-300f64..1e300)), 1..20)) {
        let rows: Vec<MetricRow> = vals.iter().enumerate().map(|(k, &(a, b))| MetricRow {
            k,
            gamma_hat: a.abs() + 1e-3,
            lambda: a.abs() * 0.5,
            consensus_x: a,
            consensus_y: a * 3.0,
            subopt_f: b,
            subopt_g: b.map(|v| -v),
            infeas: None,
            tracking_residual: 1e-17,
            dist_tikhonov: b,
            dist_xstar: Some(a),
        }).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &["line one".to_string(), "line two".to_string()], &rows).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}

#[test]
fn tikhonov_points_converge_to_bilevel_solution() {
    let (blocks, _) = data::sensor_blocks(3, 8, 1, None, 11);
    let p = make_least_norm_ls(blocks).unwrap();
    let xstar = bilevel_solution(&p, 1e-12).unwrap().point();
    let dist = |lam: f64| {
        let x: Array1<f64> = tikhonov_point(&p, lam, 1e-12).unwrap().point();
        (&x - &xstar).mapv(|v| v * v).sum().sqrt()
    };
    let d: Vec<f64> = [1e-1, 1e-3, 1e-5, 1e-7].into_iter().map(dist).collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]));
    assert!(d[3] < 1e-5);
}
