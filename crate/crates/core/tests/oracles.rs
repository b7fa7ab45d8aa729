mod common;

use common::*;
use consensus_lab::analysis::{diameter_pairs, max_norm, maximizer_gap, support, window_contraction, PAIR_TOL};
use consensus_lab::dynamics::{integrate_with_stops, kernel_bounds};
use consensus_lab::graphs::{degrees, fiedler_pair, BALANCE_TOL};
use consensus_lab::signals::{certify_on, gen_random, windowed_metric, PersistenceKind, RandomSignalSpec};
use consensus_lab::*;
use proptest::prelude::*;
use rand::Rng;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn random_adjacency(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = if i == j {
                1.0
            } else if r.gen_bool(0.3) {
                0.0
            } else {
                r.gen_range(0.0..1.0)
            };
        }
    }
    a
}

#[allow(clippy::needless_range_loop)]
fn random_balanced(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let style = r.gen_range(1..=2);
    let mut a = random_grid_matrix(r, n, style);
    if style == 1 {
        for i in 0..n {
            for j in i + 1..n {
                let w = a[i][j] * r.gen_range(0.0..1.0);
                a[i][j] = w;
                a[j][i] = w;
            }
        }
    }
    a
}

fn config_of(points: &[Vec<f64>]) -> Configuration {
    Configuration::from_rows(points).unwrap()
}

proptest! {
    #![proptest_config(cfg(256))]

    #[test]
    fn scrambling_in_unit_range_and_monotone(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let a = random_adjacency(&mut r, n);
        let mut b = a.clone();
        for row in b.iter_mut() {
            for x in row.iter_mut() {
                *x = (*x + r.gen_range(0.0..0.5)).min(1.0);
            }
        }
        let (ea, eb) = (scrambling(&to_matrix(&a)), scrambling(&to_matrix(&b)));
        prop_assert!((0.0..=1.0).contains(&ea));
        prop_assert!(ea <= eb);
        prop_assert_eq!(ea, scrambling_direct(&a));
    }

    #[test]
    fn scrambling_is_concave(seed in any::<u64>(), n in 1usize..7, theta in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let a = random_adjacency(&mut r, n);
        let b = random_adjacency(&mut r, n);
        let mix: Vec<Vec<f64>> = a.iter().zip(&b)
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| theta * x + (1.0 - theta) * y).collect())
            .collect();
        let lhs = scrambling(&to_matrix(&mix));
        let rhs = theta * scrambling(&to_matrix(&a)) + (1.0 - theta) * scrambling(&to_matrix(&b));
        prop_assert!(lhs >= rhs - 1e-12, "{} < {}", lhs, rhs);
    }

    #[test]
    fn lambda2_is_concave(seed in any::<u64>(), n in 2usize..7, theta in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let a = random_balanced(&mut r, n);
        let b = random_balanced(&mut r, n);
        let mix: Vec<Vec<f64>> = a.iter().zip(&b)
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| theta * x + (1.0 - theta) * y).collect())
            .collect();
        let l = |m: &[Vec<f64>]| algebraic_connectivity(&to_matrix(m), BALANCE_TOL).unwrap();
        prop_assert!(l(&mix) >= theta * l(&a) + (1.0 - theta) * l(&b) - 1e-10);
    }

    #[test]
    fn dirichlet_bound_and_equality(seed in any::<u64>(), n in 2usize..7, d in 1usize..4) {
        let mut r = rng(seed);
        let a = random_balanced(&mut r, n);
        let am = to_matrix(&a);
        let pair = fiedler_pair(&am, BALANCE_TOL).unwrap();
        let x = random_points(&mut r, n, d, 2.0);
        let e = dirichlet_energy(&am, &config_of(&x)).unwrap();
        prop_assert!((e - dirichlet_direct(&a, &x)).abs() <= 1e-12);
        prop_assert!(e >= pair.value * variance_direct(&x) - 1e-9);
        // the minimising direction attains equality
        let v: Vec<Vec<f64>> = pair.vector.iter().map(|&c| vec![c]).collect();
        let (ev, vv) = (dirichlet_direct(&a, &v), variance_direct(&v));
        prop_assert!((ev - pair.value * vv).abs() <= 1e-6 * ev + 1e-15, "{} vs {}", ev, pair.value * vv);
    }

    #[test]
    fn grid_matrices_match_oracles_n5(seed in any::<u64>(), style in 0u32..3) {
        let mut r = rng(seed);
        let a = random_grid_matrix(&mut r, 5, style);
        let am = to_matrix(&a);
        prop_assert_eq!(scrambling(&am), scrambling_direct(&a));
        if is_balanced_direct(&a) {
            let l = algebraic_connectivity(&am, BALANCE_TOL).unwrap();
            prop_assert!((l - lambda2_grid(&a)).abs() <= 1e-6);
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero(seed in any::<u64>(), n in 1usize..9) {
        let mut r = rng(seed);
        let a = random_adjacency(&mut r, n);
        let l = laplacian(&to_matrix(&a));
        let (_, out) = degrees(&to_matrix(&a));
        for i in 0..n {
            let s: f64 = (0..n).map(|j| l.get(i, j)).sum();
            prop_assert!(s.abs() <= 1e-12);
            prop_assert!((out[i] - a[i].iter().sum::<f64>()).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn window_average_matches_aligned_riemann_sum(seed in any::<u64>(), periodic in any::<bool>()) {
        let mut r = rng(seed);
        let (sig, tau, span) = aligned_signal(&mut r, periodic);
        let grid = span / 100.0;
        let t = r.gen_range(0..=100) as f64 * grid;
        let units = (tau / grid).round() as usize;
        // cells of width grid / c, so no breakpoint falls inside a cell
        let c = 10_000usize.div_ceil(units);
        let reference = window_average_riemann(&sig, t, tau, units * c);
        let avg = sig.window_average(t, tau).unwrap();
        for (i, row) in reference.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                prop_assert!((avg.get(i, j) - x).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn window_average_within_riemann_error_bound(seed in any::<u64>(), stream in 0u64..1000) {
        let spec = RandomSignalSpec {
            n: 3, pieces: 5, mode: SignalMode::Periodic, density: 0.6,
            symmetric: false, grid: None, mean_dwell: 0.4,
        };
        let sig = gen_random(&spec, seed, stream).unwrap();
        let mut r = rng(seed ^ stream);
        let t = r.gen_range(0.0..3.0);
        let tau = r.gen_range(0.05..2.5);
        let steps = 10_000;
        let reference = window_average_riemann(&sig, t, tau, steps);
        let avg = sig.window_average(t, tau).unwrap();
        // each switch inside the window perturbs one cell by at most h / tau
        let switches = sig.switch_times(t, t + tau).len() as f64;
        let bound = (switches + 1.0) / steps as f64 + 1e-12;
        for (i, row) in reference.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                prop_assert!((avg.get(i, j) - x).abs() <= bound);
            }
        }
    }

    #[test]
    fn certified_infimum_lower_bounds_any_scan(seed in any::<u64>(), stream in 0u64..1000) {
        let spec = RandomSignalSpec {
            n: 4, pieces: 4, mode: SignalMode::Periodic, density: 0.5,
            symmetric: true, grid: None, mean_dwell: 0.5,
        };
        let sig = gen_random(&spec, seed, stream).unwrap();
        let tau = 0.7;
        let window = Window::new(tau, 0.01).unwrap();
        for kind in [PersistenceKind::Scrambling, PersistenceKind::Connectivity] {
            let rep = certify_on(&sig, kind, window, 0.0, sig.end()).unwrap();
            let at_worst = windowed_metric(&sig, kind, rep.worst_start, tau).unwrap();
            prop_assert!((at_worst - rep.infimum_value).abs() <= 1e-12);
            for k in 0..=500 {
                let t = sig.end() * k as f64 / 500.0;
                prop_assert!(rep.infimum_value <= windowed_metric(&sig, kind, t, tau).unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn periodic_certification_is_shift_invariant(seed in any::<u64>(), shift in 0.0f64..10.0) {
        let mut r = rng(seed);
        let (sig, tau, span) = aligned_signal(&mut r, true);
        let window = Window::new(tau, 0.01).unwrap();
        for kind in [PersistenceKind::Scrambling, PersistenceKind::Connectivity] {
            let base = certify_on(&sig, kind, window, 0.0, span).unwrap();
            let moved = certify_on(&sig, kind, window, shift, shift + span).unwrap();
            prop_assert!((base.infimum_value - moved.infimum_value).abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda2_of_average_dominates_average_of_lambda2(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (sig, tau, span) = aligned_signal(&mut r, true);
        let grid = span / 100.0;
        let piece_l2: Vec<f64> = sig.pieces().iter()
            .map(|p| algebraic_connectivity(p, BALANCE_TOL).unwrap())
            .collect();
        for k in 0..100 {
            let t = k as f64 * grid;
            let l_avg = windowed_metric(&sig, PersistenceKind::Connectivity, t, tau).unwrap();
            let units = (tau / grid).round() as usize;
            let cells = units * 10;
            let h = tau / cells as f64;
            let avg_l: f64 = (0..cells)
                .map(|c| piece_l2[sig.piece_index(t + (c as f64 + 0.5) * h)])
                .sum::<f64>() / cells as f64;
            prop_assert!(l_avg >= avg_l - 1e-9, "{} < {}", l_avg, avg_l);
        }
    }
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn trajectories_respect_hull_and_diameter_bounds(seed in any::<u64>(), cucker in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.gen_range(2..=6);
        let d = r.gen_range(1..=3);
        let spec = RandomSignalSpec {
            n, pieces: 4, mode: SignalMode::Periodic, density: 0.5,
            symmetric: false, grid: None, mean_dwell: 0.3,
        };
        let sig = gen_random(&spec, seed, 1).unwrap();
        let k = if cucker { Kernel::CuckerSmale { k: 1.0, beta: 0.8 } } else { Kernel::Constant { c: 1.5 } };
        let x0 = config_of(&random_points(&mut r, n, d, 1.0));
        let tr = integrate_with_stops(&x0, &sig, &k, 2.0, 0.01, 1, &[0.5, 1.0, 1.5]).unwrap();
        let dirs = directions(d, seed);
        let d0 = diameter(&x0);
        let (_, c_phi) = kernel_bounds(&k, d0).unwrap();
        for w in tr.states.windows(2) {
            prop_assert!(max_norm(&w[1]) <= max_norm(&w[0]) + 1e-9);
            for u in &dirs {
                prop_assert!(support(&w[1], u) <= support(&w[0], u) + 1e-9);
            }
        }
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let dd = diameter(s);
            prop_assert!(dd >= d0 * (-2.0 * c_phi * t).exp() - 1e-8);
            prop_assert!(dd <= 2.0 * max_norm(s) + 1e-12);
            prop_assert!(variance(s) <= dd * dd + 1e-12);
        }
        let rep = window_contraction(&tr, 0.5, Observable::Diameter).unwrap();
        prop_assert!(rep.factors.iter().all(|&f| f <= 1.0 + 1e-9));
    }

    #[test]
    fn maximizer_gaps_nonnegative_against_later_states(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(3..=5);
        let spec = RandomSignalSpec {
            n, pieces: 3, mode: SignalMode::Periodic, density: 0.7,
            symmetric: false, grid: None, mean_dwell: 0.4,
        };
        let sig = gen_random(&spec, seed, 2).unwrap();
        let x0 = config_of(&random_points(&mut r, n, 2, 1.0));
        let tr = integrate(&x0, &sig, &Kernel::CuckerSmale { k: 1.0, beta: 1.0 }, 1.0, 0.02, 5).unwrap();
        for (k, x) in tr.states.iter().enumerate() {
            for &pair in &diameter_pairs(x, PAIR_TOL).pairs {
                for later in &tr.states[k..] {
                    for y in later.points() {
                        let sep: f64 = x.point(pair.0).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        if sep == 0.0 {
                            continue;
                        }
                        let gap = maximizer_gap(x, pair, y).unwrap();
                        prop_assert!(gap >= -1e-9);
                        if sep >= 1e-6 {
                            prop_assert!(gap > 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn integration_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = RandomSignalSpec {
            n: 4, pieces: 3, mode: SignalMode::Clamped, density: 0.5,
            symmetric: false, grid: None, mean_dwell: 0.5,
        };
        let sig = gen_random(&spec, seed, 3).unwrap();
        let x0 = config_of(&random_points(&mut r, 4, 2, 1.0));
        let k = Kernel::CuckerSmale { k: 2.0, beta: 0.5 };
        let a = integrate_with_stops(&x0, &sig, &k, 1.5, 0.01, 3, &[0.25, 1.0]).unwrap();
        let b = integrate_with_stops(&x0, &sig, &k, 1.5, 0.01, 3, &[0.25, 1.0]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn exact_log_linear_fit(alpha in 0.1f64..10.0, gamma in -2.0f64..5.0, len in 3usize..60) {
        let times: Vec<f64> = (0..len).map(|k| 0.1 * k as f64).collect();
        let values: Vec<f64> = times.iter().map(|t| alpha * (-gamma * t).exp()).collect();
        let fit = fit_exponential(&times, &values).unwrap();
        // alpha is relative to values[0] = alpha
        prop_assert!((fit.alpha - 1.0).abs() <= 1e-12);
        prop_assert!((fit.gamma - gamma).abs() <= 1e-12 * gamma.abs().max(1.0));
    }

    #[test]
    fn reports_round_trip(seed in any::<u64>()) {
        let mut r = rng(seed);
        let periodic = r.gen_bool(0.5);
        let (sig, tau, span) = aligned_signal(&mut r, periodic);
        let text = serde_json::to_string(&sig).unwrap();
        prop_assert_eq!(&serde_json::from_str::<PiecewiseConstantSignal>(&text).unwrap(), &sig);
        let rep = certify_eta(&sig, Window::new(tau, 0.1).unwrap(), span).unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        prop_assert_eq!(serde_json::from_str::<PersistenceReport>(&text).unwrap(), rep);
    }
}

#[test]
fn grid_oracle_reproduces_known_values() {
    let cycle = vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0]];
    assert!((lambda2_grid(&cycle) - 0.5).abs() <= 1e-9);
    let ones = vec![vec![1.0; 4]; 4];
    assert!((lambda2_grid(&ones) - 1.0).abs() <= 1e-9);
    assert_eq!(scrambling_direct(&ones), 1.0);
}
