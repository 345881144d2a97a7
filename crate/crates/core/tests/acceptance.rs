//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 1-9 live here; criterion 10 (byte-identical CLI runs) lives in the
//! CLI crate's acceptance suite next to the binary it exercises.

mod support;

use std::panic::AssertUnwindSafe;
use std::time::{Duration, Instant};

use riskgame::equilibrium::{reinsurance_fixed_point, SolveOptions};
use riskgame::{
    best_response_scan, build_coefficients, cir_mean, convergence_experiment, existence_check,
    mean_field_solve, simulate, solve_game, solve_riccati, GameConfig, InsurerType, Measure,
    SimulationConfig, TypeDistribution,
};

use support::{
    fixed_point_by_bisection, game_baseline, insurer_one, insurer_two, integrate_cash_karp,
    market_baseline, ScalarPair,
};

fn opts(steps: usize) -> SolveOptions {
    SolveOptions {
        steps,
        ..SolveOptions::default()
    }
}

fn assert_runtime(elapsed: Duration, budget: Duration, what: &str) {
    assert!(
        elapsed <= budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

// 1. Riccati envelope and terminal exactness on the calibrated market.
//
// At T = 5 the comparison envelope has blown up (t_max is about half a
// year), so `U(T)` is `+inf` and the bound holds in the extended reals; the
// terminal condition is checked exactly. The envelope is additionally
// verified pointwise (finitely) on a horizon inside the certified range.
fn criterion_1_envelope_and_terminal() {
    let start = Instant::now();
    let mk = market_baseline();
    for u in [insurer_one(), insurer_two()] {
        let coeffs = build_coefficients(&u, &mk);
        let report = existence_check(&coeffs, &u, &mk, 5.0);
        let sol = solve_riccati(&coeffs, &mk, &report, 5.0, 10_000).unwrap();
        assert_eq!(sol.v3[10_000], 0.0, "terminal v3 must be exactly zero");
        assert_eq!(sol.ups3[10_000], 0.0, "terminal ups3 must be exactly zero");
        let sup = sol
            .v3
            .iter()
            .zip(&sol.ups3)
            .map(|(&v, &u)| v.abs().max(u.abs()))
            .fold(0.0_f64, f64::max);
        assert!(sup <= report.u_at_horizon + 1e-8);

        // Non-vacuous envelope verification inside the certified horizon.
        let horizon = 0.40;
        let report_short = existence_check(&coeffs, &u, &mk, horizon);
        assert!(
            report_short.passed,
            "certificate at T = {horizon} must pass"
        );
        let sol_short = solve_riccati(&coeffs, &mk, &report_short, horizon, 2_000).unwrap();
        for (g, &t) in sol_short.t_grid.iter().enumerate() {
            let bound = report_short.envelope.eval_extended(horizon - t) + 1e-8;
            let mag = sol_short.v3[g].abs().max(sol_short.ups3[g].abs());
            assert!(
                mag <= bound,
                "envelope violated at t = {t}: {mag} > {bound}"
            );
        }
    }
    assert_runtime(start.elapsed(), Duration::from_secs(1), "criterion 1");
}

// 2. Fourth-order convergence of the integrator: three step halvings each
// shrink the error at t = 0 by a factor of at least 12 against an 80,000-step
// reference. Measured on a short horizon where the slopes have not yet
// saturated to their stationary point (past saturation the error at t = 0
// sits below roundoff and no order is observable). Cross-checked against an
// independent adaptive embedded-pair integration of the same system.
fn criterion_2_integrator_order() {
    let start = Instant::now();
    let mk = market_baseline();
    let u = insurer_one();
    let coeffs = build_coefficients(&u, &mk);
    let horizon = 0.5;
    let report = existence_check(&coeffs, &u, &mk, horizon);
    let reference = solve_riccati(&coeffs, &mk, &report, horizon, 80_000).unwrap();
    let ref_v3 = reference.v3[0];

    // Independent route: adaptive Cash-Karp on the scalar pair rebuilt from
    // its displayed coefficients.
    let pair = ScalarPair::new(&mk, u.delta, u.psi);
    let oracle = integrate_cash_karp(|v, w| pair.rhs_tau(v, w), (0.0, 0.0), horizon, 1e-12, 1e-14);
    assert!(
        (oracle.0 - ref_v3).abs() < 1e-9,
        "adaptive oracle disagrees: {} vs {ref_v3}",
        oracle.0
    );
    assert!((oracle.1 - reference.ups3[0]).abs() < 1e-9);

    let mut errors = Vec::new();
    for steps in [100usize, 200, 400, 800] {
        let v0 = solve_riccati(&coeffs, &mk, &report, horizon, steps)
            .unwrap()
            .v3[0];
        errors.push((v0 - ref_v3).abs());
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            ratio >= 12.0,
            "halving ratio {ratio} < 12 (errors {errors:?})"
        );
    }
    assert_runtime(start.elapsed(), Duration::from_secs(5), "criterion 2");
}

// 3. Reinsurance fixed point on the calibrated two-insurer game over the
// 10,001-point grid: pointwise nonincreasing iterates, residual below 1e-12,
// proportions in [0, 1], and agreement with the scalar-aggregate bisection
// oracle to 1e-10.
fn criterion_3_fixed_point_contract() {
    let start = Instant::now();
    let game = game_baseline();
    let mk = market_baseline();
    let sol = solve_game(&game, &mk, &opts(10_000)).unwrap();
    assert_eq!(sol.t_grid.len(), 10_001);
    assert!(
        sol.max_fixed_point_residual < 1e-12,
        "residual {}",
        sol.max_fixed_point_residual
    );
    for row in &sol.a_star {
        assert!(row.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    let mu1: Vec<f64> = sol.types.types.iter().map(|u| u.mu1).collect();
    let counts = sol.types.counts.clone();
    let n = sol.types.n_insurers();

    // The solver enforces the monotone-iterate invariant internally (it
    // errors on any increase); verify it explicitly on a subsample by
    // re-running the iteration and watching the sweeps.
    for g in (0..sol.t_grid.len()).step_by(997) {
        let row: Vec<_> = sol.srqp.iter().map(|r| r[g]).collect();
        let out = reinsurance_fixed_point(&row, &mu1, &counts, n, sol.t_grid[g], 1e-12, 10_000)
            .expect("fixed point must converge");
        for (a, b) in out.a_star.iter().zip(sol.a_star.iter().map(|r| r[g])) {
            assert_eq!(*a, b);
        }
    }

    // Bisection oracle across the full grid.
    let mut worst = 0.0_f64;
    for g in 0..sol.t_grid.len() {
        let srqp: Vec<(f64, f64, f64)> =
            sol.srqp.iter().map(|r| (r[g].q, r[g].r, r[g].p)).collect();
        let oracle = fixed_point_by_bisection(&srqp, &mu1, &counts, n);
        for (j, &a) in oracle.iter().enumerate() {
            worst = worst.max((a - sol.a_star[j][g]).abs());
        }
    }
    assert!(worst < 1e-10, "bisection oracle gap {worst}");
    assert_runtime(start.elapsed(), Duration::from_secs(5), "criterion 3");
}

// 4. First-order stationarity of the computed equilibrium at every unclamped
// grid point: both residuals below 1e-9.
fn criterion_4_stationarity() {
    let start = Instant::now();
    let game = game_baseline();
    let mk = market_baseline();
    let sol = solve_game(&game, &mk, &opts(10_000)).unwrap();
    let mut worst_ell = 0.0_f64;
    let mut worst_a = 0.0_f64;
    for g in 0..sol.t_grid.len() {
        for res in sol.stationarity_residuals_at(g) {
            if !res.clamped {
                worst_ell = worst_ell.max(res.ell_residual);
                worst_a = worst_a.max(res.a_residual);
            }
        }
    }
    assert!(worst_ell < 1e-9, "ell residual {worst_ell}");
    assert!(worst_a < 1e-9, "a residual {worst_a}");
    assert_runtime(start.elapsed(), Duration::from_secs(2), "criterion 4");
}

// 5. Comparative statics: 14 one-sided finite-difference signs at
// t in {0, T/2, T-} on the calibrated defaults.
fn criterion_5_comparative_statics() {
    let start = Instant::now();
    let mk = market_baseline();
    let game = game_baseline();
    let steps = 2_000;
    let base = solve_game(&game, &mk, &opts(steps)).unwrap();
    let times = [0usize, steps / 2, steps - 1];

    // (setter, bump, expect_a1_increasing, expect_ell1_sign: Option<bool>)
    type Setter = Box<dyn Fn(&mut GameConfig)>;
    let cases: Vec<(&str, Setter, bool, Option<bool>)> = vec![
        (
            "lambda_hat",
            Box::new(|g: &mut GameConfig| g.lambda_hat += 0.06),
            true,
            None,
        ),
        (
            "eta_hat",
            Box::new(|g: &mut GameConfig| g.eta_hat += 0.025),
            true,
            None,
        ),
        (
            "theta_1",
            Box::new(|g: &mut GameConfig| g.insurers[0].theta += 0.05),
            true,
            Some(true),
        ),
        (
            "theta_2",
            Box::new(|g: &mut GameConfig| g.insurers[1].theta += 0.05),
            true,
            Some(true),
        ),
        (
            "delta_1",
            Box::new(|g: &mut GameConfig| g.insurers[0].delta += 0.2),
            false,
            Some(false),
        ),
        (
            "delta_2",
            Box::new(|g: &mut GameConfig| g.insurers[1].delta += 0.3),
            false,
            Some(false),
        ),
        (
            "psi_1",
            Box::new(|g: &mut GameConfig| g.insurers[0].psi += 0.5),
            false,
            Some(false),
        ),
        (
            "psi_2",
            Box::new(|g: &mut GameConfig| g.insurers[1].psi += 0.7),
            false,
            Some(false),
        ),
    ];

    let mut signs_checked = 0;
    for (name, bump, a1_up, ell1_up) in cases {
        let mut game2 = game.clone();
        bump(&mut game2);
        let sol2 = solve_game(&game2, &mk, &opts(steps)).unwrap();
        for &g in &times {
            let da = sol2.a_star[0][g] - base.a_star[0][g];
            assert!(
                if a1_up { da > 0.0 } else { da < 0.0 },
                "d a1*/d {name} at grid {g}: got {da}, expected {}",
                if a1_up { "> 0" } else { "< 0" }
            );
        }
        signs_checked += 1;
        if let Some(up) = ell1_up {
            for &g in &times {
                let dl = sol2.ell[0][g] - base.ell[0][g];
                assert!(
                    if up { dl > 0.0 } else { dl < 0.0 },
                    "d ell1/d {name} at grid {g}: got {dl}, expected {}",
                    if up { "> 0" } else { "< 0" }
                );
            }
            signs_checked += 1;
        }
    }
    assert_eq!(signs_checked, 14);
    assert_runtime(start.elapsed(), Duration::from_secs(30), "criterion 5");
}

// 6. Mean-field consistency: a single-atom distribution with theta = 0
// reproduces the n = 1 solve to 1e-12, and the homogeneous n = 10,000 game
// matches the single-atom mean-field solve to 1e-3 in sup norm over t.
fn criterion_6_mean_field_consistency() {
    let start = Instant::now();
    let mk = market_baseline();
    let steps = 10_000;

    let solo = InsurerType {
        theta: 0.0,
        ..insurer_one()
    };
    let dist = TypeDistribution::new(vec![(solo, 1.0)]).unwrap();
    let mf = mean_field_solve(&dist, &mk, 0.6, 0.25, 5.0, steps, 1e-12, 10_000).unwrap();
    let game1 = GameConfig {
        horizon_t: 5.0,
        lambda_hat: 0.6,
        eta_hat: 0.25,
        insurers: vec![solo],
    };
    let sol1 = solve_game(&game1, &mk, &opts(steps)).unwrap();
    for g in 0..=steps {
        assert!((mf.ell[0][g] - sol1.ell[0][g]).abs() < 1e-12);
        assert!((mf.a_star[0][g] - sol1.a_star[0][g]).abs() < 1e-12);
    }

    // Homogeneous crowd against the competitive single atom.
    let crowd_type = insurer_one();
    let dist = TypeDistribution::new(vec![(crowd_type, 1.0)]).unwrap();
    let mf = mean_field_solve(&dist, &mk, 0.6, 0.25, 5.0, steps, 1e-12, 10_000).unwrap();
    let game_big = GameConfig {
        horizon_t: 5.0,
        lambda_hat: 0.6,
        eta_hat: 0.25,
        insurers: vec![crowd_type; 10_000],
    };
    let sol_big = solve_game(&game_big, &mk, &opts(steps)).unwrap();
    let mut worst = 0.0_f64;
    for g in 0..=steps {
        worst = worst.max((mf.ell[0][g] - sol_big.ell[0][g]).abs());
        worst = worst.max((mf.a_star[0][g] - sol_big.a_star[0][g]).abs());
    }
    assert!(worst < 1e-3, "n = 10^4 vs mean-field sup gap {worst}");
    assert_runtime(start.elapsed(), Duration::from_secs(30), "criterion 6");
}

// 7. Finite-n convergence: two-point type distribution, n in {4, 16, 64, 256},
// 8 seeds; the seed-averaged sup-norm strategy errors strictly decrease in n.
fn criterion_7_convergence_to_mean_field() {
    let start = Instant::now();
    let mk = market_baseline();
    let dist = TypeDistribution::uniform(vec![insurer_one(), insurer_two()]).unwrap();
    let n_list = [4usize, 16, 64, 256];
    let seeds: Vec<u64> = (0..8).collect();
    let cells =
        convergence_experiment(&dist, &n_list, &seeds, &mk, 0.6, 0.25, 5.0, 2_000, 1e-12).unwrap();

    let mean_errs: Vec<(f64, f64)> = n_list
        .iter()
        .map(|&n| {
            let rows: Vec<_> = cells.iter().filter(|c| c.n == n).collect();
            assert_eq!(rows.len(), seeds.len());
            let e_ell = rows.iter().map(|c| c.err_ell).sum::<f64>() / rows.len() as f64;
            let e_a = rows.iter().map(|c| c.err_a).sum::<f64>() / rows.len() as f64;
            (e_ell, e_a)
        })
        .collect();
    for w in mean_errs.windows(2) {
        assert!(
            w[1].0 < w[0].0,
            "mean ell error not strictly decreasing: {mean_errs:?}"
        );
        assert!(
            w[1].1 < w[0].1,
            "mean a error not strictly decreasing: {mean_errs:?}"
        );
    }
    assert_runtime(start.elapsed(), Duration::from_secs(180), "criterion 7");
}

// 8. Simulation moments: the sample mean of the factor level matches the
// closed-form CIR mean within 3 standard errors at t in {1, 3, 5}, with
// 100,000 paths at dt = 5e-3.
fn criterion_8_simulation_moments() {
    let start = Instant::now();
    let mk = market_baseline();
    let game = game_baseline();
    let sol = solve_game(&game, &mk, &opts(1_000)).unwrap();
    let mut cfg = SimulationConfig::new(100_000, 5e-3, 2024, Measure::Reference);
    cfg.obs_times = vec![1.0, 3.0, 5.0];
    let bundle = simulate(&game, &mk, &sol, &cfg).unwrap();
    for (slot, &t) in bundle.obs_times.iter().enumerate() {
        let zs = &bundle.z_obs[slot];
        let nf = zs.len() as f64;
        let mean = zs.iter().sum::<f64>() / nf;
        let var = zs.iter().map(|&z| (z - mean) * (z - mean)).sum::<f64>() / (nf - 1.0);
        let se = (var / nf).sqrt();
        let expect = cir_mean(&mk, t);
        assert!(
            (mean - expect).abs() <= 3.0 * se,
            "E[Z({t})] = {mean} vs closed form {expect}, 3 SE = {}",
            3.0 * se
        );
    }
    assert_runtime(start.elapsed(), Duration::from_secs(120), "criterion 8");
}

// 9. Best-response scan: on a 5x5 grid of constant offsets (+-0.1) with
// common random numbers and 100,000 paths, the unperturbed cell's objective
// is within one combined standard error of the grid maximum.
fn criterion_9_best_response_scan() {
    let start = Instant::now();
    let mk = market_baseline();
    let game = game_baseline();
    let sol = solve_game(&game, &mk, &opts(1_000)).unwrap();
    let cfg = SimulationConfig::new(100_000, 5e-3, 77, Measure::WorstCase(0));
    let offsets = [-0.1, -0.05, 0.0, 0.05, 0.1];
    let cells = best_response_scan(&game, &mk, &sol, 0, &offsets, &offsets, &cfg).unwrap();
    assert_eq!(cells.len(), 25);
    let zero = cells
        .iter()
        .find(|c| c.d_ell == 0.0 && c.d_a == 0.0)
        .unwrap();
    let best = cells
        .iter()
        .max_by(|a, b| a.estimate.j_value.total_cmp(&b.estimate.j_value))
        .unwrap();
    let combined_se =
        (zero.estimate.se_j * zero.estimate.se_j + best.estimate.se_j * best.estimate.se_j).sqrt();
    assert!(
        zero.estimate.j_value >= best.estimate.j_value - combined_se,
        "equilibrium cell J = {} (se {}), grid max J = {} at ({}, {}) (se {}), combined se {}",
        zero.estimate.j_value,
        zero.estimate.se_j,
        best.estimate.j_value,
        best.d_ell,
        best.d_a,
        best.estimate.se_j,
        combined_se
    );
    assert_runtime(start.elapsed(), Duration::from_secs(300), "criterion 9");
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<(&str, fn())> = vec![
        (
            "1 riccati envelope & terminal",
            criterion_1_envelope_and_terminal,
        ),
        ("2 integrator order", criterion_2_integrator_order),
        ("3 fixed-point contract", criterion_3_fixed_point_contract),
        ("4 stationarity", criterion_4_stationarity),
        ("5 comparative statics", criterion_5_comparative_statics),
        (
            "6 mean-field consistency",
            criterion_6_mean_field_consistency,
        ),
        (
            "7 convergence to mean field",
            criterion_7_convergence_to_mean_field,
        ),
        ("8 simulation moments", criterion_8_simulation_moments),
        ("9 best-response scan", criterion_9_best_response_scan),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        match outcome {
            Ok(()) => println!("criterion {name}: PASS ({elapsed:.2?})"),
            Err(err) => {
                let msg = err
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| err.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".to_string());
                println!("criterion {name}: FAIL ({elapsed:.2?}) - {msg}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
